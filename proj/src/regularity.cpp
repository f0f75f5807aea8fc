#include "edgeray/regularity.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <limits>

#include "edgeray/config_text.hpp"
#include "edgeray/error.hpp"
#include "edgeray/gbb.hpp"

namespace edgeray {

namespace {

long long parse_ll(std::string_view s, std::string_view whole) {
    if (s.empty()) throw ConfigError("malformed number '" + std::string(whole) + "'");
    long long v = 0;
    for (char c : s) {
        if (!std::isdigit(static_cast<unsigned char>(c))) throw ConfigError("malformed number '" + std::string(whole) + "'");
        if (v > (std::numeric_limits<long long>::max() - (c - '0')) / 10)
            throw ConfigError("number '" + std::string(whole) + "' is too large for exact arithmetic");
        v = v * 10 + (c - '0');
    }
    return v;
}

}  // namespace

Rational parse_rational(std::string_view text) {
    const std::string t = trim(text);
    std::string_view s = t;
    bool neg = false;
    if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
        neg = s[0] == '-';
        s.remove_prefix(1);
    }
    Rational r;
    if (const auto slash = s.find('/'); slash != std::string_view::npos) {
        const long long den = parse_ll(s.substr(slash + 1), t);
        if (den == 0) throw ConfigError("zero denominator in '" + t + "'");
        r = Rational(parse_ll(s.substr(0, slash), t), den);
    } else if (const auto dot = s.find('.'); dot != std::string_view::npos) {
        const std::string_view ip = s.substr(0, dot);
        const std::string_view fp = s.substr(dot + 1);
        if (ip.empty() && fp.empty()) throw ConfigError("malformed number '" + t + "'");
        if (fp.size() > 17) throw ConfigError("too many decimals for exact arithmetic in '" + t + "'");
        long long den = 1;
        for (std::size_t i = 0; i < fp.size(); ++i) den *= 10;
        r = Rational(ip.empty() ? 0 : parse_ll(ip, t)) + (fp.empty() ? Rational(0) : Rational(parse_ll(fp, t), den));
    } else {
        r = Rational(parse_ll(s, t));
    }
    return neg ? -r : r;
}

std::string rational_text(const Rational& r) {
    if (r.denominator() == 1) return std::to_string(r.numerator());
    return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

double to_double(const Rational& r) { return boost::rational_cast<double>(r); }

// ---------------------------------------------------------------- Order

std::string Order::to_string() const {
    if (kind_ == Kind::PlusInfinity) return "inf";
    if (kind_ == Kind::MinusInfinity) return "-inf";
    // Terminating decimals print exactly; anything else as a fraction.
    long long den = value_.denominator();
    int twos = 0, fives = 0;
    while (den % 2 == 0) den /= 2, ++twos;
    while (den % 5 == 0) den /= 5, ++fives;
    std::string body;
    if (den != 1) {
        body = rational_text(value_);
    } else {
        const int digits = std::max(twos, fives);
        long long scale = 1;
        for (int i = 0; i < digits; ++i) scale *= 10;
        const Rational scaled = value_ * Rational(scale);
        long long n = scaled.numerator();  // exact integer now
        const bool neg = n < 0;
        const unsigned long long a = neg ? 0ULL - static_cast<unsigned long long>(n) : static_cast<unsigned long long>(n);
        std::string ds = std::to_string(a);
        if (digits > 0) {
            if (static_cast<int>(ds.size()) <= digits) ds.insert(0, static_cast<std::size_t>(digits + 1) - ds.size(), '0');
            ds.insert(ds.size() - static_cast<std::size_t>(digits), ".");
        }
        body = (neg ? "-" : "") + ds;
    }
    return open_ ? "<" + body : body;
}

Order Order::parse(std::string_view text) {
    std::string t = trim(text);
    bool open = false;
    if (!t.empty() && t[0] == '<') {
        open = true;
        t = trim(std::string_view(t).substr(1));
    }
    if (t == "inf" || t == "+inf") return infinity();
    if (t == "-inf") return minus_infinity();
    const Rational v = parse_rational(t);
    return open ? below(v) : attained(v);
}

Order Order::shifted(const Rational& d) const {
    Order o = *this;
    if (o.is_finite()) o.value_ += d;
    return o;
}

bool operator<(const Order& a, const Order& b) {
    auto rank = [](const Order& o) {
        return o.kind() == Order::Kind::MinusInfinity ? 0 : (o.kind() == Order::Kind::Finite ? 1 : 2);
    };
    if (rank(a) != rank(b)) return rank(a) < rank(b);
    if (!a.is_finite()) return false;
    if (a.value() != b.value()) return a.value() < b.value();
    return a.is_open() && !b.is_open();
}

// ---------------------------------------------------------------- rules

Order apply_diffractive(const Order& s_in) { return s_in; }

std::vector<Order> apply_geometric(const Order& s_nf, const Order& s_diffractive, const std::vector<bool>& geo_clean) {
    std::vector<Order> out;
    out.reserve(geo_clean.size());
    const Order improved = s_nf.opened();
    for (bool clean : geo_clean) out.push_back(clean ? std::max(improved, s_diffractive) : s_diffractive);
    return out;
}

FundamentalOrders fundamental_solution_orders(int n, int f) {
    if (n < 2) throw InvalidInput("fundamental_solution_orders needs n >= 2");
    if (f < 1 || f > n - 1) throw InvalidInput("fundamental_solution_orders needs 1 <= f <= n - 1");
    const Rational inc = Rational(-n, 2) + 1;
    return {Order::below(inc), Order::below(inc + Rational(f, 2))};
}

bool edge_threshold_check(const Rational& m, const Rational& l, int f, Io io) {
    const Rational threshold = l + Rational(f, 2);
    return io == Io::Incoming ? m > threshold : m < threshold;
}

std::string RequiredOrder::to_string() const { return (strict ? ">" : "") + Order::attained(value).to_string(); }

RequiredOrder coisotropic_eps_loss(const Rational& k, const Rational& eps) {
    // Mixed rational/int comparisons recurse under C++20 with older Boost.
    const Rational zero(0);
    if (!(eps > zero)) throw InvalidInput("coisotropic_eps_loss needs eps > 0");
    if (k < zero) throw InvalidInput("coisotropic_eps_loss needs k >= 0");
    if (eps > Rational(1, 2) || k == zero) return {k, false};
    return {k / (Rational(2) * eps), true};
}

NonfocusingDegree lagrangian_nonfocusing_degree(const Rational& s, int n, int f) {
    const Rational a = -s - Rational(n, 4);
    return {Order::attained(a), Order::below(a + Rational(f, 2))};
}

RegularityRecord assign_orders(const GbbPath& path, const Order& s_incident, const std::optional<Nonfocusing>& nf,
                               bool incident_clean) {
    RegularityRecord rec;
    rec.s_incident = s_incident;
    rec.nonfocusing = nf;
    // Parents always precede children in the branch list.
    for (const GbbBranch& br : path.branches) {
        BranchOrder bo;
        if (br.parent < 0) {
            bo.sup_order = s_incident;
            bo.rule = "incident";
        } else {
            const Order parent = rec.branches.at(br.parent).sup_order;
            if (br.kind == BranchKind::GlancingContinuation) {
                bo.sup_order = parent;
                bo.rule = "glancing";
            } else {
                const Order diff = apply_diffractive(parent);
                bo.sup_order = diff;
                bo.rule = "diffractive";
                if (nf) {
                    const bool clean = br.kind != BranchKind::GeometricContinuation || incident_clean;
                    const Order g = apply_geometric(Order::attained(nf->space_order), diff, {clean}).front();
                    if (diff < g) {
                        bo.sup_order = g;
                        bo.rule = "nonfocusing";
                    }
                }
            }
        }
        bo.eps_loss = bo.sup_order.is_open();
        rec.branches[br.id] = bo;
    }
    return rec;
}

}  // namespace edgeray
