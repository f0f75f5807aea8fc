#include "edgeray/phase_space.hpp"

#include <cmath>

#include "edgeray/error.hpp"

namespace edgeray {

Eigen::VectorXd EdgePhasePoint::to_state() const {
    const StateLayout L{b(), f()};
    Eigen::VectorXd s(L.size());
    s[L.t()] = t;
    s[L.x()] = x;
    for (int i = 0; i < b(); ++i) s[L.y(i)] = y[static_cast<std::size_t>(i)];
    for (int j = 0; j < f(); ++j) s[L.z(j)] = z[static_cast<std::size_t>(j)];
    s[L.tau()] = tau;
    s[L.xi()] = xi;
    for (int i = 0; i < b(); ++i) s[L.eta(i)] = eta[static_cast<std::size_t>(i)];
    for (int j = 0; j < f(); ++j) s[L.zeta(j)] = zeta[static_cast<std::size_t>(j)];
    return s;
}

EdgePhasePoint EdgePhasePoint::from_state(const Eigen::VectorXd& s, int b, int f) {
    const StateLayout L{b, f};
    EdgePhasePoint q;
    q.t = s[L.t()];
    q.x = s[L.x()];
    q.y.resize(static_cast<std::size_t>(b));
    q.eta.resize(static_cast<std::size_t>(b));
    q.z.resize(static_cast<std::size_t>(f));
    q.zeta.resize(static_cast<std::size_t>(f));
    for (int i = 0; i < b; ++i) {
        q.y[static_cast<std::size_t>(i)] = s[L.y(i)];
        q.eta[static_cast<std::size_t>(i)] = s[L.eta(i)];
    }
    for (int j = 0; j < f; ++j) {
        q.z[static_cast<std::size_t>(j)] = s[L.z(j)];
        q.zeta[static_cast<std::size_t>(j)] = s[L.zeta(j)];
    }
    q.tau = s[L.tau()];
    q.xi = s[L.xi()];
    return q;
}

Eigen::VectorXd EdgePhasePoint::frame_covector() const {
    Eigen::VectorXd e(1 + b() + f());
    e[0] = xi;
    for (int i = 0; i < b(); ++i) e[1 + i] = eta[static_cast<std::size_t>(i)];
    for (int j = 0; j < f(); ++j) e[1 + b() + j] = zeta[static_cast<std::size_t>(j)];
    return e;
}

Eigen::VectorXd to_cosphere_vector(const CospherePoint& c) {
    const CosphereLayout L{c.b(), c.f()};
    Eigen::VectorXd v(L.size());
    v[L.x()] = c.x;
    v[L.sigma()] = c.sigma;
    v[L.t()] = c.t;
    for (int i = 0; i < c.b(); ++i) {
        v[L.y(i)] = c.y[static_cast<std::size_t>(i)];
        v[L.eta(i)] = c.eta_hat[static_cast<std::size_t>(i)];
    }
    for (int j = 0; j < c.f(); ++j) {
        v[L.z(j)] = c.z[static_cast<std::size_t>(j)];
        v[L.zeta(j)] = c.zeta_hat[static_cast<std::size_t>(j)];
    }
    v[L.xi()] = c.xi_hat;
    return v;
}

CospherePoint from_cosphere_vector(const Eigen::VectorXd& v, int b, int f, int sgn_tau) {
    const CosphereLayout L{b, f};
    CospherePoint c;
    c.x = v[L.x()];
    c.sigma = v[L.sigma()];
    c.t = v[L.t()];
    c.sgn_tau = sgn_tau;
    c.xi_hat = v[L.xi()];
    for (int i = 0; i < b; ++i) {
        c.y.push_back(v[L.y(i)]);
        c.eta_hat.push_back(v[L.eta(i)]);
    }
    for (int j = 0; j < f; ++j) {
        c.z.push_back(v[L.z(j)]);
        c.zeta_hat.push_back(v[L.zeta(j)]);
    }
    return c;
}

const char* to_string(BoundaryClass::Kind kind) {
    switch (kind) {
        case BoundaryClass::Kind::Elliptic: return "Elliptic";
        case BoundaryClass::Kind::Glancing: return "Glancing";
        case BoundaryClass::Kind::Hyperbolic: return "Hyperbolic";
    }
    return "?";
}

namespace {

double quadratic_dual(const EdgeMetricSpec& spec, double x, std::span<const double> y, std::span<const double> z,
                      const Eigen::VectorXd& eps) {
    const DualMetricFrame d = eval_dual_metric(spec, x, y, z);
    return eps.dot(d.g_inv * eps);
}

}  // namespace

double wave_symbol(const EdgeMetricSpec& spec, const EdgePhasePoint& q) {
    return q.tau * q.tau - quadratic_dual(spec, q.x, q.y, q.z, q.frame_covector());
}

double cosphere_symbol(const EdgeMetricSpec& spec, const CospherePoint& c) {
    Eigen::VectorXd e(1 + c.b() + c.f());
    e[0] = c.xi_hat;
    for (int i = 0; i < c.b(); ++i) e[1 + i] = c.eta_hat[static_cast<std::size_t>(i)];
    for (int j = 0; j < c.f(); ++j) e[1 + c.b() + j] = c.zeta_hat[static_cast<std::size_t>(j)];
    return 1.0 - quadratic_dual(spec, c.x, c.y, c.z, e);
}

CompressedPoint compress(const EdgePhasePoint& q) {
    CompressedPoint c;
    c.x = q.x;
    c.t = q.t;
    c.y = q.y;
    c.tau = q.tau;
    c.eta = q.eta;
    if (q.x == 0.0) {
        c.fiber_quotient = true;
        c.xi_b = 0.0;
        c.zeta_b.assign(q.zeta.size(), 0.0);
        return c;
    }
    c.z = q.z;
    c.xi_b = q.x * q.xi;
    c.zeta_b.resize(q.zeta.size());
    for (std::size_t j = 0; j < q.zeta.size(); ++j) c.zeta_b[j] = q.x * q.zeta[j];
    return c;
}

CospherePoint normalize_cosphere(const EdgePhasePoint& q) {
    if (q.tau == 0.0 || !std::isfinite(q.tau))
        throw InvalidInput("point is not normalizable: tau = 0 is outside the |tau| gauge");
    CospherePoint c;
    c.t = q.t;
    c.x = q.x;
    c.y = q.y;
    c.z = q.z;
    c.sgn_tau = q.tau > 0 ? 1 : -1;
    c.sigma = 1.0 / std::abs(q.tau);
    c.xi_hat = q.xi * c.sigma;
    for (double e : q.eta) c.eta_hat.push_back(e * c.sigma);
    for (double e : q.zeta) c.zeta_hat.push_back(e * c.sigma);
    return c;
}

EdgePhasePoint denormalize(const CospherePoint& c) {
    if (!(c.sigma > 0.0)) throw InvalidInput("cannot denormalize a point at sigma = 0");
    const double r = 1.0 / c.sigma;
    EdgePhasePoint q;
    q.t = c.t;
    q.x = c.x;
    q.y = c.y;
    q.z = c.z;
    q.tau = c.sgn_tau * r;
    q.xi = c.xi_hat * r;
    for (double e : c.eta_hat) q.eta.push_back(e * r);
    for (double e : c.zeta_hat) q.zeta.push_back(e * r);
    return q;
}

double eta_norm2_h(const EdgeMetricSpec& spec, std::span<const double> y, std::span<const double> eta) {
    if (spec.b() == 0) return 0.0;
    const std::vector<double> zero_z(static_cast<std::size_t>(spec.f()), 0.0);
    const std::vector<double> vars = pack_vars(0.0, y, zero_z);
    const Eigen::MatrixXd h = spec.h_at(vars);
    const Eigen::Map<const Eigen::VectorXd> e(eta.data(), static_cast<Eigen::Index>(eta.size()));
    return e.dot(h.llt().solve(e));
}

double zeta_norm2_k(const EdgeMetricSpec& spec, double x, std::span<const double> y, std::span<const double> z,
                    std::span<const double> zeta) {
    const std::vector<double> vars = pack_vars(x, y, z);
    const Eigen::MatrixXd k = spec.k_at(vars);
    const Eigen::Map<const Eigen::VectorXd> e(zeta.data(), static_cast<Eigen::Index>(zeta.size()));
    return e.dot(k.llt().solve(e));
}

BoundaryClass classify_margin(double margin, double tol_g) {
    BoundaryClass c;
    c.margin = margin;
    if (margin > tol_g)
        c.kind = BoundaryClass::Kind::Hyperbolic;
    else if (margin < -tol_g)
        c.kind = BoundaryClass::Kind::Elliptic;
    else
        c.kind = BoundaryClass::Kind::Glancing;
    return c;
}

BoundaryClass classify_boundary(const EdgeMetricSpec& spec, const CospherePoint& q, double tol_g) {
    // Only (y, eta_hat) enter: xi_b and zeta_b vanish over the boundary and z
    // is quotiented out.
    if (q.x != 0.0) throw InvalidInput("classify_boundary needs a point over the boundary (x = 0)");
    if (q.b() != spec.b()) throw InvalidInput("base dimension does not match the metric");
    if (!(tol_g >= 0.0)) throw InvalidInput("tol_g must be non-negative");
    return classify_margin(1.0 - eta_norm2_h(spec, q.y, q.eta_hat), tol_g);
}

bool radial_point_test(const EdgeMetricSpec& spec, const CospherePoint& q, double tol) {
    if (!(q.x < tol)) return false;
    double z2 = 0.0;
    for (double v : q.zeta_hat) z2 += v * v;
    if (!(std::sqrt(z2) < tol)) return false;
    return std::abs(cosphere_symbol(spec, q)) < std::max(tol, 1e-8);
}

}  // namespace edgeray
