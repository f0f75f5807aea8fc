#pragma once

// Shared helpers for the unit, property and acceptance tests: small metric
// factories and seeded generators.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "edgeray/flow.hpp"
#include "edgeray/metric.hpp"
#include "edgeray/phase_space.hpp"

namespace testsupport {

inline constexpr double kPi = std::numbers::pi;

inline edgeray::EdgeMetricSpec metric(const std::string& text) { return edgeray::parse_metric_spec(text); }

// dx^2 + dy^2 + x^2 dz^2 with b = 1, f = 1 on the unit circle.
inline edgeray::EdgeMetricSpec flat_product() { return metric("b = 1; f = 1; h = [[\"1\"]]; k = [[\"1\"]]"); }

// Product edge with a round-sphere fiber.
inline edgeray::EdgeMetricSpec sphere_product() {
    return metric("b = 1; f = 2; fiber = sphere; h = [[\"1\"]]; k = [[\"1\", \"0\"], [\"0\", \"sin(z1)^2\"]]");
}

// Perturbed circle fiber k = (1 + a sin z)^2.
inline edgeray::EdgeMetricSpec perturbed_circle(double a = 0.1, int b = 1) {
    const std::string amp = std::to_string(a);
    if (b == 0) return metric("b = 0; f = 1; k = [[\"(1 + " + amp + "*sin(z1))^2\"]]");
    return metric("b = 1; f = 1; h = [[\"1\"]]; k = [[\"(1 + " + amp + "*sin(z1))^2\"]]");
}

// Deterministic generator; every property test seeds its own instance.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    bool coin() { return integer(0, 1) == 1; }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }

    std::vector<double> vec(int n, double lo, double hi) {
        std::vector<double> v(static_cast<std::size_t>(n));
        for (double& c : v) c = uniform(lo, hi);
        return v;
    }

    // Unit vector of length n (n >= 1).
    std::vector<double> unit(int n) {
        std::vector<double> v(static_cast<std::size_t>(n));
        double norm = 0.0;
        do {
            norm = 0.0;
            for (double& c : v) {
                c = normal();
                norm += c * c;
            }
        } while (norm < 1e-12);
        for (double& c : v) c /= std::sqrt(norm);
        return v;
    }

    // Arbitrary phase point with x in (0.05, x_hi) and a nonzero covector.
    edgeray::EdgePhasePoint phase_point(int b, int f, double x_hi = 0.9) {
        edgeray::EdgePhasePoint q;
        q.t = uniform(-1.0, 1.0);
        q.x = uniform(0.05, x_hi);
        q.y = vec(b, -0.5, 0.5);
        q.z = vec(f, 0.5, 2.5);
        q.tau = uniform(0.5, 2.0) * (coin() ? 1.0 : -1.0);
        q.xi = uniform(-1.0, 1.0);
        q.eta = vec(b, -1.0, 1.0);
        q.zeta = vec(f, -1.0, 1.0);
        return q;
    }

private:
    std::mt19937_64 rng_;
};

// Rescales xi so that q lies on the characteristic set; keeps the sign of xi.
inline void make_null(const edgeray::EdgeMetricSpec& spec, edgeray::EdgePhasePoint& q) {
    const double sign = q.xi < 0 ? -1.0 : 1.0;
    q.xi = 0.0;
    const double p0 = edgeray::wave_symbol(spec, q);  // tau^2 - |(0, eta, zeta)|^2
    if (p0 <= 0.0) {
        // Too much tangential momentum: shrink it first.
        const double s = 0.5 * std::abs(q.tau) / std::sqrt(std::abs(q.tau) * std::abs(q.tau) - p0);
        for (double& e : q.eta) e *= s;
        for (double& e : q.zeta) e *= s;
    }
    // In the frame the (xi, xi) entry of the inverse is 1 only for product
    // metrics; solve the quadratic in xi in general.
    auto p_of = [&](double xi) {
        edgeray::EdgePhasePoint r = q;
        r.xi = xi;
        return edgeray::wave_symbol(spec, r);
    };
    const double c = p_of(0.0);
    const double a_plus = p_of(1.0), a_minus = p_of(-1.0);
    const double a = -(a_plus + a_minus - 2.0 * c) / 2.0;  // coefficient of xi^2 (sign flipped)
    const double bb = -(a_plus - a_minus) / 2.0;
    // a xi^2 + bb xi - c = 0
    const double disc = std::sqrt(bb * bb + 4.0 * a * c);
    const double r1 = (-bb + disc) / (2.0 * a), r2 = (-bb - disc) / (2.0 * a);
    q.xi = sign > 0 ? std::max(r1, r2) : std::min(r1, r2);
}

inline double max_abs_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace testsupport
