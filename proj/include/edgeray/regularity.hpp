#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/rational.hpp>

#include "edgeray/flow.hpp"

namespace edgeray {

using Rational = boost::rational<long long>;

// Accepts integers, decimals ("-1.25", "2e-1" is not accepted) and fractions ("3/2").
Rational parse_rational(std::string_view text);  // throws ConfigError
std::string rational_text(const Rational& r);    // "3", "-1/2"
double to_double(const Rational& r);

// Supremum Sobolev order: a finite rational (attained or an open bound
// "for all r < s"), or +-infinity.
class Order {
public:
    enum class Kind { Finite, PlusInfinity, MinusInfinity };

    Order() = default;
    static Order attained(Rational v) { return Order(Kind::Finite, v, false); }
    static Order below(Rational v) { return Order(Kind::Finite, v, true); }
    static Order infinity() { return Order(Kind::PlusInfinity, 0, false); }
    static Order minus_infinity() { return Order(Kind::MinusInfinity, 0, false); }
    // "<s" for open bounds, "s" otherwise; decimal rendering of the rational.
    std::string to_string() const;
    static Order parse(std::string_view text);  // accepts to_string output, "inf", "-inf"

    Kind kind() const { return kind_; }
    bool is_finite() const { return kind_ == Kind::Finite; }
    bool is_open() const { return open_; }
    const Rational& value() const { return value_; }

    // Same order with the bound made open (no-op on infinities).
    Order opened() const { return is_finite() ? below(value_) : *this; }
    Order shifted(const Rational& d) const;

    // Total order by value; an open bound sits just below the attained value.
    friend bool operator<(const Order& a, const Order& b);
    friend bool operator==(const Order& a, const Order& b) = default;

private:
    Order(Kind k, Rational v, bool open) : kind_(k), value_(v), open_(open) {}
    Kind kind_ = Kind::Finite;
    Rational value_{0};
    bool open_ = false;
};

inline bool operator>(const Order& a, const Order& b) { return b < a; }
inline bool operator<=(const Order& a, const Order& b) { return !(b < a); }
inline bool operator>=(const Order& a, const Order& b) { return !(a < b); }

// Outgoing order on every branch of a hyperbolic event (fiber-global).
Order apply_diffractive(const Order& s_in);

// Per-branch bound under the nonfocusing hypothesis of order s_nf: "<s_nf" on
// branches whose geometric partners are all clean, the diffractive value
// otherwise, and never below the diffractive value.
std::vector<Order> apply_geometric(const Order& s_nf, const Order& s_diffractive, const std::vector<bool>& geo_clean);

struct FundamentalOrders {
    Order incident;    // < -n/2 + 1
    Order diffracted;  // < -n/2 + 1 + f/2
};
FundamentalOrders fundamental_solution_orders(int n, int f);  // InvalidInput unless n >= 2, 1 <= f <= n-1

bool edge_threshold_check(const Rational& m, const Rational& l, int f, Io io);

// Input coisotropic order needed for target order k with eps-regularity of
// the symbol: exactly k if eps > 1/2, otherwise any value above k/(2 eps).
struct RequiredOrder {
    Rational value{0};
    bool strict = false;  // true: any k' > value
    std::string to_string() const;
};
RequiredOrder coisotropic_eps_loss(const Rational& k, const Rational& eps);

struct NonfocusingDegree {
    Order a_priori;  // -s - n/4
    Order degree;    // < -s - n/4 + f/2
};
NonfocusingDegree lagrangian_nonfocusing_degree(const Rational& s, int n, int f);

struct Nonfocusing {
    Rational space_order{0};
    Rational degree{0};
};

struct BranchOrder {
    Order sup_order;
    std::string rule;
    bool eps_loss = false;  // the bound is open ("for all r < s")
};

struct RegularityRecord {
    Order s_incident;
    std::optional<Nonfocusing> nonfocusing;
    std::map<int, BranchOrder> branches;
};

// Orders for every branch of a traced path. Incident branches keep s_incident,
// outgoing branches get the diffractive order or, with nonfocusing data, the
// improved bound on non-geometric continuations.
struct GbbPath;
RegularityRecord assign_orders(const GbbPath& path, const Order& s_incident, const std::optional<Nonfocusing>& nf,
                               bool incident_clean);

}  // namespace edgeray
