#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace edgeray {

// Variable slots of a coefficient expression: index 0 is x, 1..b are y1..yb,
// b+1..b+f are z1..zf.
struct VarLayout {
    int b = 0;
    int f = 1;

    int size() const { return 1 + b + f; }
    int x_index() const { return 0; }
    int y_index(int i) const { return 1 + i; }
    int z_index(int j) const { return 1 + b + j; }
    std::string name(int index) const;
};

// Which variables an expression may reference; h may not depend on z.
enum class VarScope { XY, XYZ };

enum class Func { Sin, Cos, Exp, Sqrt, Log };

// Immutable expression tree over the metric coordinates.
class CoeffExpr {
public:
    enum class Kind { Number, Variable, Add, Sub, Mul, Div, Pow, Neg, Call };

    CoeffExpr();  // the constant 0

    // Raw constructors build exactly the requested node (the parser uses
    // these so that printing and re-parsing reproduces the same tree).
    static CoeffExpr number(double value);
    static CoeffExpr variable(int index);
    static CoeffExpr binary(Kind kind, CoeffExpr lhs, CoeffExpr rhs);
    static CoeffExpr power(CoeffExpr base, int exponent);
    static CoeffExpr negate(CoeffExpr operand);
    static CoeffExpr call(Func func, CoeffExpr arg);

    Kind kind() const;
    double value() const;  // Number only
    int var_index() const;  // Variable only
    int exponent() const;  // Pow only
    Func func() const;  // Call only
    const CoeffExpr& lhs() const;  // binary lhs, Pow base, Neg/Call operand
    const CoeffExpr& rhs() const;

    double eval(std::span<const double> vars) const;

    // Exact derivative; the result is constant-folded.
    CoeffExpr derivative(int var) const;

    bool is_constant() const;
    bool is_zero() const;
    bool depends_on(int var) const;
    bool structurally_equal(const CoeffExpr& other) const;

    std::string to_string(const VarLayout& layout) const;

    friend CoeffExpr operator+(const CoeffExpr& a, const CoeffExpr& b);
    friend CoeffExpr operator-(const CoeffExpr& a, const CoeffExpr& b);
    friend CoeffExpr operator*(const CoeffExpr& a, const CoeffExpr& b);
    friend CoeffExpr operator/(const CoeffExpr& a, const CoeffExpr& b);
    friend CoeffExpr operator-(const CoeffExpr& a);

private:
    struct Node;
    explicit CoeffExpr(std::shared_ptr<const Node> node);
    std::shared_ptr<const Node> node_;
};

// Parses `text` per the coefficient grammar. `line`/`column` locate the
// first character of `text` in its enclosing file for error reports.
CoeffExpr parse_expr(std::string_view text, const VarLayout& layout,
                     VarScope scope = VarScope::XYZ, int line = 1,
                     int column = 1);

const char* func_name(Func func);

}  // namespace edgeray
