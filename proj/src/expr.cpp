#include "edgeray/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <stdexcept>

#include "edgeray/error.hpp"

namespace edgeray {

std::string VarLayout::name(int index) const {
    if (index == 0) return "x";
    if (index <= b) return "y" + std::to_string(index);
    return "z" + std::to_string(index - b);
}

const char* func_name(Func func) {
    switch (func) {
        case Func::Sin: return "sin";
        case Func::Cos: return "cos";
        case Func::Exp: return "exp";
        case Func::Sqrt: return "sqrt";
        case Func::Log: return "log";
    }
    return "?";
}

struct CoeffExpr::Node {
    Kind kind = Kind::Number;
    double value = 0.0;
    int index = 0;  // variable index or integer exponent
    Func func = Func::Sin;
    CoeffExpr a{std::shared_ptr<const Node>()};  // null for leaves
    CoeffExpr b{std::shared_ptr<const Node>()};
};

CoeffExpr::CoeffExpr() {
    static const auto zero = std::make_shared<const Node>();
    node_ = zero;
}

CoeffExpr::CoeffExpr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

CoeffExpr CoeffExpr::number(double value) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Number;
    n->value = value;
    return CoeffExpr(std::move(n));
}

CoeffExpr CoeffExpr::variable(int index) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Variable;
    n->index = index;
    return CoeffExpr(std::move(n));
}

CoeffExpr CoeffExpr::binary(Kind kind, CoeffExpr lhs, CoeffExpr rhs) {
    if (kind != Kind::Add && kind != Kind::Sub && kind != Kind::Mul && kind != Kind::Div)
        throw std::invalid_argument("CoeffExpr::binary: not a binary operator");
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->a = std::move(lhs);
    n->b = std::move(rhs);
    return CoeffExpr(std::move(n));
}

CoeffExpr CoeffExpr::power(CoeffExpr base, int exponent) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Pow;
    n->index = exponent;
    n->a = std::move(base);
    return CoeffExpr(std::move(n));
}

CoeffExpr CoeffExpr::negate(CoeffExpr operand) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Neg;
    n->a = std::move(operand);
    return CoeffExpr(std::move(n));
}

CoeffExpr CoeffExpr::call(Func func, CoeffExpr arg) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Call;
    n->func = func;
    n->a = std::move(arg);
    return CoeffExpr(std::move(n));
}

CoeffExpr::Kind CoeffExpr::kind() const { return node_->kind; }
double CoeffExpr::value() const { return node_->value; }
int CoeffExpr::var_index() const { return node_->index; }
int CoeffExpr::exponent() const { return node_->index; }
Func CoeffExpr::func() const { return node_->func; }
const CoeffExpr& CoeffExpr::lhs() const { return node_->a; }
const CoeffExpr& CoeffExpr::rhs() const { return node_->b; }

double CoeffExpr::eval(std::span<const double> vars) const {
    const Node& n = *node_;
    switch (n.kind) {
        case Kind::Number: return n.value;
        case Kind::Variable: return vars[static_cast<std::size_t>(n.index)];
        case Kind::Add: return n.a.eval(vars) + n.b.eval(vars);
        case Kind::Sub: return n.a.eval(vars) - n.b.eval(vars);
        case Kind::Mul: return n.a.eval(vars) * n.b.eval(vars);
        case Kind::Div: return n.a.eval(vars) / n.b.eval(vars);
        case Kind::Neg: return -n.a.eval(vars);
        case Kind::Pow: {
            const double base = n.a.eval(vars);
            switch (n.index) {
                case 0: return 1.0;
                case 1: return base;
                case 2: return base * base;
                case 3: return base * base * base;
                default: return std::pow(base, n.index);
            }
        }
        case Kind::Call: {
            const double u = n.a.eval(vars);
            switch (n.func) {
                case Func::Sin: return std::sin(u);
                case Func::Cos: return std::cos(u);
                case Func::Exp: return std::exp(u);
                case Func::Sqrt: return std::sqrt(u);
                case Func::Log: return std::log(u);
            }
        }
    }
    return 0.0;
}

bool CoeffExpr::is_constant() const {
    const Node& n = *node_;
    switch (n.kind) {
        case Kind::Number: return true;
        case Kind::Variable: return false;
        case Kind::Add:
        case Kind::Sub:
        case Kind::Mul:
        case Kind::Div: return n.a.is_constant() && n.b.is_constant();
        default: return n.a.is_constant();
    }
}

bool CoeffExpr::is_zero() const { return kind() == Kind::Number && value() == 0.0; }

bool CoeffExpr::depends_on(int var) const {
    const Node& n = *node_;
    switch (n.kind) {
        case Kind::Number: return false;
        case Kind::Variable: return n.index == var;
        case Kind::Add:
        case Kind::Sub:
        case Kind::Mul:
        case Kind::Div: return n.a.depends_on(var) || n.b.depends_on(var);
        default: return n.a.depends_on(var);
    }
}

bool CoeffExpr::structurally_equal(const CoeffExpr& other) const {
    const Node& p = *node_;
    const Node& q = *other.node_;
    if (p.kind != q.kind) return false;
    switch (p.kind) {
        case Kind::Number: return p.value == q.value;
        case Kind::Variable: return p.index == q.index;
        case Kind::Add:
        case Kind::Sub:
        case Kind::Mul:
        case Kind::Div: return p.a.structurally_equal(q.a) && p.b.structurally_equal(q.b);
        case Kind::Pow: return p.index == q.index && p.a.structurally_equal(q.a);
        case Kind::Neg: return p.a.structurally_equal(q.a);
        case Kind::Call: return p.func == q.func && p.a.structurally_equal(q.a);
    }
    return false;
}

// Simplifying arithmetic, used when building derivatives.

CoeffExpr operator+(const CoeffExpr& a, const CoeffExpr& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (a.kind() == CoeffExpr::Kind::Number && b.kind() == CoeffExpr::Kind::Number)
        return CoeffExpr::number(a.value() + b.value());
    return CoeffExpr::binary(CoeffExpr::Kind::Add, a, b);
}

CoeffExpr operator-(const CoeffExpr& a, const CoeffExpr& b) {
    if (b.is_zero()) return a;
    if (a.is_zero()) return -b;
    if (a.kind() == CoeffExpr::Kind::Number && b.kind() == CoeffExpr::Kind::Number)
        return CoeffExpr::number(a.value() - b.value());
    return CoeffExpr::binary(CoeffExpr::Kind::Sub, a, b);
}

CoeffExpr operator*(const CoeffExpr& a, const CoeffExpr& b) {
    using K = CoeffExpr::Kind;
    if (a.is_zero() || b.is_zero()) return CoeffExpr();
    if (a.kind() == K::Number && a.value() == 1.0) return b;
    if (b.kind() == K::Number && b.value() == 1.0) return a;
    if (a.kind() == K::Number && b.kind() == K::Number)
        return CoeffExpr::number(a.value() * b.value());
    return CoeffExpr::binary(K::Mul, a, b);
}

CoeffExpr operator/(const CoeffExpr& a, const CoeffExpr& b) {
    using K = CoeffExpr::Kind;
    if (a.is_zero()) return CoeffExpr();
    if (b.kind() == K::Number && b.value() == 1.0) return a;
    if (a.kind() == K::Number && b.kind() == K::Number && b.value() != 0.0)
        return CoeffExpr::number(a.value() / b.value());
    return CoeffExpr::binary(K::Div, a, b);
}

CoeffExpr operator-(const CoeffExpr& a) {
    if (a.kind() == CoeffExpr::Kind::Number) return CoeffExpr::number(-a.value());
    if (a.kind() == CoeffExpr::Kind::Neg) return a.lhs();
    return CoeffExpr::negate(a);
}

namespace {

CoeffExpr simplified_power(const CoeffExpr& base, int exponent) {
    if (exponent == 0) return CoeffExpr::number(1.0);
    if (exponent == 1) return base;
    if (base.kind() == CoeffExpr::Kind::Number)
        return CoeffExpr::number(std::pow(base.value(), exponent));
    return CoeffExpr::power(base, exponent);
}

CoeffExpr simplified_call(Func func, const CoeffExpr& arg) {
    if (arg.kind() == CoeffExpr::Kind::Number) {
        const double v = arg.value();
        switch (func) {
            case Func::Sin: return CoeffExpr::number(std::sin(v));
            case Func::Cos: return CoeffExpr::number(std::cos(v));
            case Func::Exp: return CoeffExpr::number(std::exp(v));
            case Func::Sqrt: return CoeffExpr::number(std::sqrt(v));
            case Func::Log: return CoeffExpr::number(std::log(v));
        }
    }
    return CoeffExpr::call(func, arg);
}

}  // namespace

CoeffExpr CoeffExpr::derivative(int var) const {
    const Node& n = *node_;
    switch (n.kind) {
        case Kind::Number: return CoeffExpr();
        case Kind::Variable: return n.index == var ? number(1.0) : CoeffExpr();
        case Kind::Add: return n.a.derivative(var) + n.b.derivative(var);
        case Kind::Sub: return n.a.derivative(var) - n.b.derivative(var);
        case Kind::Mul: return n.a.derivative(var) * n.b + n.a * n.b.derivative(var);
        case Kind::Div: {
            const CoeffExpr da = n.a.derivative(var);
            const CoeffExpr db = n.b.derivative(var);
            if (db.is_zero()) return da / n.b;
            return (da * n.b - n.a * db) / simplified_power(n.b, 2);
        }
        case Kind::Neg: return -n.a.derivative(var);
        case Kind::Pow: {
            const CoeffExpr da = n.a.derivative(var);
            if (da.is_zero() || n.index == 0) return CoeffExpr();
            return number(static_cast<double>(n.index)) * simplified_power(n.a, n.index - 1) * da;
        }
        case Kind::Call: {
            const CoeffExpr du = n.a.derivative(var);
            if (du.is_zero()) return CoeffExpr();
            switch (n.func) {
                case Func::Sin: return simplified_call(Func::Cos, n.a) * du;
                case Func::Cos: return -(simplified_call(Func::Sin, n.a) * du);
                case Func::Exp: return *this * du;
                case Func::Sqrt: return du / (number(2.0) * *this);
                case Func::Log: return du / n.a;
            }
        }
    }
    return CoeffExpr();
}

namespace {

// Binding strength used by the printer: 1 sums, 2 products, 3 unary minus,
// 4 powers, 5 atoms.
int precedence(const CoeffExpr& e) {
    using K = CoeffExpr::Kind;
    switch (e.kind()) {
        case K::Add:
        case K::Sub: return 1;
        case K::Mul:
        case K::Div: return 2;
        case K::Neg: return 3;
        case K::Pow: return 4;
        case K::Number: return e.value() < 0.0 || std::signbit(e.value()) ? 3 : 5;
        default: return 5;
    }
}

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void print(const CoeffExpr& e, const VarLayout& layout, int min_prec, std::string& out) {
    using K = CoeffExpr::Kind;
    const bool wrap = precedence(e) < min_prec;
    if (wrap) out += '(';
    switch (e.kind()) {
        case K::Number: out += format_number(e.value()); break;
        case K::Variable: out += layout.name(e.var_index()); break;
        case K::Add:
        case K::Sub:
            print(e.lhs(), layout, 1, out);
            out += e.kind() == K::Add ? " + " : " - ";
            print(e.rhs(), layout, 2, out);
            break;
        case K::Mul:
        case K::Div:
            print(e.lhs(), layout, 2, out);
            out += e.kind() == K::Mul ? "*" : "/";
            print(e.rhs(), layout, 3, out);
            break;
        case K::Neg:
            out += '-';
            // -(2) stays a negation; a bare -2 would re-parse as a literal.
            print(e.lhs(), layout, e.lhs().kind() == K::Number ? 6 : 3, out);
            break;
        case K::Pow:
            print(e.lhs(), layout, 5, out);
            out += '^';
            out += std::to_string(e.exponent());
            break;
        case K::Call:
            out += func_name(e.func());
            out += '(';
            print(e.lhs(), layout, 0, out);
            out += ')';
            break;
    }
    if (wrap) out += ')';
}

class Parser {
public:
    Parser(std::string_view text, const VarLayout& layout, VarScope scope, int line, int column)
        : text_(text), layout_(layout), scope_(scope), line0_(line), col0_(column) {}

    CoeffExpr parse() {
        skip_ws();
        if (pos_ >= text_.size()) fail("empty expression");
        CoeffExpr e = parse_sum();
        skip_ws();
        if (pos_ < text_.size()) fail(std::string("unexpected '") + text_[pos_] + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { fail_at(msg, pos_); }

    [[noreturn]] void fail_at(const std::string& msg, std::size_t at) const {
        int line = line0_;
        int col = col0_;
        for (std::size_t i = 0; i < at && i < text_.size(); ++i) {
            if (text_[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ParseError("syntax error: " + msg, line, col);
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    CoeffExpr parse_sum() {
        CoeffExpr lhs = parse_product();
        for (;;) {
            if (accept('+')) {
                lhs = CoeffExpr::binary(CoeffExpr::Kind::Add, lhs, parse_product());
            } else if (accept('-')) {
                lhs = CoeffExpr::binary(CoeffExpr::Kind::Sub, lhs, parse_product());
            } else {
                return lhs;
            }
        }
    }

    CoeffExpr parse_product() {
        CoeffExpr lhs = parse_factor();
        for (;;) {
            if (accept('*')) {
                lhs = CoeffExpr::binary(CoeffExpr::Kind::Mul, lhs, parse_factor());
            } else if (accept('/')) {
                lhs = CoeffExpr::binary(CoeffExpr::Kind::Div, lhs, parse_factor());
            } else {
                return lhs;
            }
        }
    }

    // Unary signs are accepted in front of a factor; a sign written directly
    // against a literal folds into the literal.
    CoeffExpr parse_factor() {
        if (accept('-')) {
            skip_ws();
            const bool literal = pos_ < text_.size() &&
                                 (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.');
            CoeffExpr operand = parse_factor();
            if (literal && operand.kind() == CoeffExpr::Kind::Number) return CoeffExpr::number(-operand.value());
            return CoeffExpr::negate(operand);
        }
        if (accept('+')) return parse_factor();
        CoeffExpr base = parse_base();
        if (accept('^')) {
            skip_ws();
            const std::size_t start = pos_;
            bool negative = false;
            if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+')) {
                negative = text_[pos_] == '-';
                ++pos_;
            }
            const std::size_t digits = pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            if (pos_ == digits) fail_at("exponent must be an integer", start);
            const long value = std::strtol(std::string(text_.substr(digits, pos_ - digits)).c_str(), nullptr, 10);
            if (value > 64) fail_at("exponent too large", start);
            return CoeffExpr::power(base, static_cast<int>(negative ? -value : value));
        }
        return base;
    }

    CoeffExpr parse_base() {
        skip_ws();
        if (pos_ >= text_.size()) fail("expected operand");
        const char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            CoeffExpr inner = parse_sum();
            if (!accept(')')) fail("expected ')'");
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
        fail(std::string("unexpected '") + c + "', expected operand");
    }

    CoeffExpr parse_number() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) ++pos_;
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            std::size_t p = pos_ + 1;
            if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
            if (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
                pos_ = p;
                while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            }
        }
        const std::string token(text_.substr(start, pos_ - start));
        char* end = nullptr;
        const double v = std::strtod(token.c_str(), &end);
        if (end != token.c_str() + token.size()) fail_at("malformed number '" + token + "'", start);
        return CoeffExpr::number(v);
    }

    CoeffExpr parse_ident() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) ++pos_;
        const std::string name(text_.substr(start, pos_ - start));
        static constexpr struct { const char* name; Func func; } funcs[] = {
            {"sin", Func::Sin}, {"cos", Func::Cos}, {"exp", Func::Exp}, {"sqrt", Func::Sqrt}, {"log", Func::Log}};
        for (const auto& entry : funcs) {
            if (name == entry.name) {
                if (!accept('(')) fail("expected '(' after " + name);
                CoeffExpr arg = parse_sum();
                if (!accept(')')) fail("expected ')'");
                return CoeffExpr::call(entry.func, arg);
            }
        }
        if (name == "pi") return CoeffExpr::number(std::numbers::pi);
        if (name == "x") return CoeffExpr::variable(0);
        if (name.size() >= 2 && (name[0] == 'y' || name[0] == 'z')) {
            bool digits = true;
            for (std::size_t i = 1; i < name.size(); ++i) digits = digits && std::isdigit(static_cast<unsigned char>(name[i]));
            if (digits && name[1] != '0') {
                const int k = std::atoi(name.c_str() + 1);
                if (name[0] == 'y' && k <= layout_.b) return CoeffExpr::variable(layout_.y_index(k - 1));
                if (name[0] == 'z' && k <= layout_.f && scope_ == VarScope::XYZ)
                    return CoeffExpr::variable(layout_.z_index(k - 1));
            }
        }
        throw ParseError("unknown identifier '" + name + "'", line0_, col0_ + static_cast<int>(start));
    }

    std::string_view text_;
    const VarLayout& layout_;
    VarScope scope_;
    int line0_;
    int col0_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string CoeffExpr::to_string(const VarLayout& layout) const {
    std::string out;
    print(*this, layout, 0, out);
    return out;
}

CoeffExpr parse_expr(std::string_view text, const VarLayout& layout, VarScope scope, int line, int column) {
    return Parser(text, layout, scope, line, column).parse();
}

}  // namespace edgeray
