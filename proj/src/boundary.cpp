#include "edgeray/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

#include "edgeray/error.hpp"
#include "edgeray/ode.hpp"

namespace edgeray {

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::MatrixXd fiber_k(const EdgeMetricSpec& spec, std::span<const double> y, std::span<const double> z) {
    return spec.k_at(pack_vars(0.0, y, z));
}

double k_norm(const Eigen::MatrixXd& k, std::span<const double> v) {
    const Eigen::Map<const Eigen::VectorXd> w(v.data(), static_cast<Eigen::Index>(v.size()));
    return std::sqrt(w.dot(k * w));
}

// k^{-1/2}: maps Euclidean unit vectors to k-unit vectors.
Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& k) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
    if (!(es.eigenvalues().minCoeff() > 0.0)) throw DegenerateMetric("fiber metric is not positive definite");
    return es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

double radical_inverse(unsigned long i, unsigned base) {
    double r = 0.0;
    double f = 1.0 / base;
    while (i > 0) {
        r += f * static_cast<double>(i % base);
        i /= base;
        f /= base;
    }
    return r;
}

constexpr unsigned kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

// j-th Halton point pushed to the unit sphere through the normal quantile.
Eigen::VectorXd halton_sphere(int j, int f) {
    Eigen::VectorXd u(f);
    for (int c = 0; c < f; ++c) {
        const double h = radical_inverse(static_cast<unsigned long>(j + 1), kPrimes[c % 16]);
        u[c] = std::sqrt(2.0) * boost::math::erf_inv(2.0 * h - 1.0);
    }
    return u.normalized();
}

}  // namespace

// ---------------------------------------------------------------- boundary flow

BoundaryFlowState boundary_flow_constants(const EdgeMetricSpec& spec, const EdgePhasePoint& q0) {
    if (q0.x != 0.0) throw InvalidInput("boundary flow needs a point with x = 0");
    if (q0.b() != spec.b() || q0.f() != spec.f()) throw InvalidInput("phase point dimensions do not match the metric");
    const Eigen::MatrixXd k = fiber_k(spec, q0.y, q0.z);
    const Eigen::Map<const Eigen::VectorXd> zeta(q0.zeta.data(), spec.f());
    const Eigen::VectorXd Kz = k.llt().solve(zeta);
    const double zn = std::sqrt(zeta.dot(Kz));
    if (!(zn > 0.0)) throw InvalidInput("boundary flow needs zeta != 0");
    BoundaryFlowState st;
    st.zeta_norm = zn;
    st.C = std::atan(q0.xi / zn);
    st.A = q0.tau * std::cos(st.C);
    for (double e : q0.eta) st.B.push_back(e * std::cos(st.C));
    st.fiber.y = q0.y;
    st.fiber.z = q0.z;
    st.fiber.v.assign(Kz.data(), Kz.data() + Kz.size());
    for (double& c : st.fiber.v) c /= zn;
    st.fiber.speed = zn;
    return st;
}

std::pair<double, double> boundary_flow_interval(const BoundaryFlowState& st) {
    return {(-kPi / 2 - st.C) / st.zeta_norm, (kPi / 2 - st.C) / st.zeta_norm};
}

EdgePhasePoint boundary_flow(const EdgeMetricSpec& spec, const EdgePhasePoint& q0, double s) {
    const BoundaryFlowState st = boundary_flow_constants(spec, q0);
    const double theta = st.zeta_norm * s + st.C;
    if (!(theta > -kPi / 2 && theta < kPi / 2))
        throw FlowEscaped("boundary flow parameter outside the maximal interval (covector blows up)");
    const double sec = 1.0 / std::cos(theta);
    EdgePhasePoint q = q0;
    q.xi = st.zeta_norm * std::tan(theta);
    q.tau = st.A * sec;
    for (std::size_t i = 0; i < q.eta.size(); ++i) q.eta[i] = st.B[i] * sec;
    const FiberState fs = fiber_geodesic(spec, q0.y, q0.z, st.fiber.v, st.zeta_norm * s);
    q.z = fs.z;
    const Eigen::MatrixXd k = fiber_k(spec, q.y, fs.z);
    const Eigen::Map<const Eigen::VectorXd> v(fs.v.data(), spec.f());
    const Eigen::VectorXd zeta = st.zeta_norm * (k * v);
    q.zeta.assign(zeta.data(), zeta.data() + zeta.size());
    return q;
}

// ---------------------------------------------------------------- geodesics

FiberState fiber_geodesic(const EdgeMetricSpec& spec, std::span<const double> y, std::span<const double> z0,
                          std::span<const double> v0, double length) {
    const int b = spec.b();
    const int f = spec.f();
    if (static_cast<int>(y.size()) != b || static_cast<int>(z0.size()) != f || static_cast<int>(v0.size()) != f)
        throw InvalidInput("fiber geodesic dimensions do not match the metric");
    const double n0 = k_norm(fiber_k(spec, y, z0), v0);
    if (std::abs(n0 - 1.0) > 1e-8) throw InvalidInput("fiber geodesic needs a unit initial direction");
    const FiberTopology& fiber = spec.fiber();

    auto rhs = [&](const OdeState& s, OdeState& ds, double) {
        std::vector<double> vars(static_cast<std::size_t>(1 + b + f));
        vars[0] = 0.0;
        for (int i = 0; i < b; ++i) vars[static_cast<std::size_t>(1 + i)] = y[static_cast<std::size_t>(i)];
        for (int j = 0; j < f; ++j) vars[static_cast<std::size_t>(1 + b + j)] = s[static_cast<std::size_t>(j)];
        if (!fiber.in_chart(std::span<const double>(s.data(), static_cast<std::size_t>(f))))
            throw ChartExit("fiber geodesic left the coordinate chart");
        const Eigen::MatrixXd k = spec.k_at(vars);
        const auto dk = spec.k_derivatives(vars);
        const Eigen::Map<const Eigen::VectorXd> v(s.data() + f, f);
        Eigen::VectorXd Q(f);
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(f);
        for (int c = 0; c < f; ++c) acc += v[c] * (dk[static_cast<std::size_t>(1 + b + c)] * v);
        for (int d = 0; d < f; ++d) Q[d] = 2.0 * acc[d] - v.dot(dk[static_cast<std::size_t>(1 + b + d)] * v);
        const Eigen::VectorXd a = -0.5 * k.llt().solve(Q);
        for (int j = 0; j < f; ++j) {
            ds[static_cast<std::size_t>(j)] = v[j];
            ds[static_cast<std::size_t>(f + j)] = a[j];
        }
    };
    OdeState s0(static_cast<std::size_t>(2 * f));
    for (int j = 0; j < f; ++j) {
        s0[static_cast<std::size_t>(j)] = z0[static_cast<std::size_t>(j)];
        s0[static_cast<std::size_t>(f + j)] = v0[static_cast<std::size_t>(j)];
    }
    const IntegrateResult r = integrate_smooth(rhs, s0, 0.0, length, 1e-12, 1e-14, 0.05);
    FiberState out;
    out.y.assign(y.begin(), y.end());
    out.z.assign(r.y.begin(), r.y.begin() + f);
    out.v.assign(r.y.begin() + f, r.y.end());
    const double n1 = k_norm(fiber_k(spec, y, out.z), out.v);
    if (std::abs(n1 - 1.0) > 1e-10)
        for (double& c : out.v) c /= n1;
    if (fiber.kind() == FiberTopology::Kind::Circle || fiber.kind() == FiberTopology::Kind::Torus)
        out.z = fiber.wrap(out.z);
    out.speed = 1.0;
    return out;
}

std::vector<double> fiber_limit_point(const EdgeMetricSpec& spec, const EdgePhasePoint& q) {
    if (q.x != 0.0) throw InvalidInput("fiber_limit_point needs a point with x = 0");
    double z2 = 0.0;
    for (double c : q.zeta) z2 += c * c;
    if (z2 == 0.0) {
        if (q.xi == 0.0) throw InvalidInput("fiber limit undefined for xi = 0 and zeta = 0");
        return q.z;
    }
    const BoundaryFlowState st = boundary_flow_constants(spec, q);
    const double arc = q.xi == 0.0 ? kPi / 2 : std::atan(st.zeta_norm / q.xi);
    return fiber_geodesic(spec, q.y, q.z, st.fiber.v, arc).z;
}

// ---------------------------------------------------------------- partners

int default_partner_directions(int f) { return f == 1 ? 2 : 64; }

std::vector<std::vector<double>> fiber_directions(const EdgeMetricSpec& spec, std::span<const double> y,
                                                  std::span<const double> z, int n_directions) {
    const int f = spec.f();
    if (n_directions < 1) throw InvalidInput("n_directions must be >= 1");
    const Eigen::MatrixXd E = inverse_sqrt(fiber_k(spec, y, z));
    std::vector<std::vector<double>> dirs;
    auto push = [&](const Eigen::VectorXd& u) {
        const Eigen::VectorXd v = E * u;
        dirs.emplace_back(v.data(), v.data() + v.size());
    };
    if (f == 1) {
        push(Eigen::VectorXd::Constant(1, 1.0));
        if (n_directions >= 2) push(Eigen::VectorXd::Constant(1, -1.0));
        return dirs;
    }
    if (f == 2) {
        for (int j = 0; j < n_directions; ++j) {
            const double a = 2.0 * kPi * (j + 0.5) / n_directions;
            Eigen::VectorXd u(2);
            u << std::cos(a), std::sin(a);
            push(u);
        }
        return dirs;
    }
    for (int j = 0; j < n_directions; ++j) push(halton_sphere(j, f));
    return dirs;
}

std::vector<Partner> geometric_partners(const EdgeMetricSpec& spec, std::span<const double> y,
                                        std::span<const double> z, int n_directions, double dedup_tol) {
    std::vector<Partner> out;
    for (const auto& v : fiber_directions(spec, y, z, n_directions)) {
        const FiberState fs = fiber_geodesic(spec, y, z, v, kPi);
        const std::vector<double> end = spec.fiber().wrap(fs.z);
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const Partner& p) { return spec.fiber().distance(p.z, end) < dedup_tol; });
        if (it != out.end())
            ++it->multiplicity;
        else
            out.push_back(Partner{end, 1});
    }
    return out;
}

double geometric_miss_distance(const EdgeMetricSpec& spec, std::span<const double> y, std::span<const double> z,
                               std::span<const double> z_other) {
    const int f = spec.f();
    const FiberTopology& fiber = spec.fiber();
    auto miss = [&](const std::vector<double>& v) {
        return fiber.distance(fiber_geodesic(spec, y, z, v, kPi).z, z_other);
    };
    if (f == 1) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& v : fiber_directions(spec, y, z, 2)) best = std::min(best, miss(v));
        return best;
    }
    const Eigen::MatrixXd E = inverse_sqrt(fiber_k(spec, y, z));
    if (f == 2) {
        auto end_at = [&](double a) {
            Eigen::VectorXd u(2);
            u << std::cos(a), std::sin(a);
            const Eigen::VectorXd v = E * u;
            return fiber_geodesic(spec, y, z, std::vector<double>(v.data(), v.data() + 2), kPi).z;
        };
        auto at_angle = [&](double a) { return fiber.distance(end_at(a), z_other); };
        const int n = 64;
        const double da = 2.0 * kPi / n;
        std::vector<std::vector<double>> ends;
        std::vector<std::pair<double, double>> coarse;
        for (int j = 0; j < n; ++j) {
            const double a = da * (j + 0.5);
            ends.push_back(end_at(a));
            coarse.emplace_back(fiber.distance(ends.back(), z_other), a);
        }
        // Endpoint speed in the direction angle, from neighbouring samples.
        double speed = 0.0;
        for (int j = 0; j < n; ++j)
            speed = std::max(speed, fiber.distance(ends[static_cast<std::size_t>(j)],
                                                   ends[static_cast<std::size_t>((j + 1) % n)]) / da);
        std::sort(coarse.begin(), coarse.end());
        double best = coarse.front().first;
        // Golden-section refinement around the best coarse directions that
        // can still come close to z_other.
        const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
        for (int c = 0; c < 3; ++c) {
            const auto [d0, a0] = coarse[static_cast<std::size_t>(c)];
            if (d0 - 2.0 * speed * da > 1e-2 || d0 < 1e-14) continue;
            double lo = a0 - da;
            double hi = a0 + da;
            double a1 = hi - gr * (hi - lo);
            double a2 = lo + gr * (hi - lo);
            double f1 = at_angle(a1);
            double f2 = at_angle(a2);
            for (int it = 0; it < 60 && hi - lo > 1e-12; ++it) {
                if (f1 < f2) {
                    hi = a2;
                    a2 = a1;
                    f2 = f1;
                    a1 = hi - gr * (hi - lo);
                    f1 = at_angle(a1);
                } else {
                    lo = a1;
                    a1 = a2;
                    f1 = f2;
                    a2 = lo + gr * (hi - lo);
                    f2 = at_angle(a2);
                }
            }
            best = std::min({best, f1, f2});
        }
        return best;
    }
    // f > 2: coarse low-discrepancy sampling, then a shrinking pattern search.
    auto at_unit = [&](const Eigen::VectorXd& u) {
        const Eigen::VectorXd v = E * u.normalized();
        return miss(std::vector<double>(v.data(), v.data() + f));
    };
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_u;
    for (int j = 0; j < 256; ++j) {
        const Eigen::VectorXd u = halton_sphere(j, f);
        const double d = at_unit(u);
        if (d < best) {
            best = d;
            best_u = u;
        }
    }
    for (double step = 0.2; step > 1e-9; step *= 0.5) {
        bool improved = true;
        while (improved) {
            improved = false;
            for (int c = 0; c < f; ++c)
                for (double sgn : {1.0, -1.0}) {
                    Eigen::VectorXd u = best_u;
                    u[c] += sgn * step;
                    const double d = at_unit(u);
                    if (d < best) {
                        best = d;
                        best_u = u.normalized();
                        improved = true;
                    }
                }
        }
    }
    return best;
}

bool is_geometrically_related(const EdgeMetricSpec& spec, std::span<const double> y, std::span<const double> z,
                              std::span<const double> z_other, double tol) {
    return geometric_miss_distance(spec, y, z, z_other) < tol;
}

}  // namespace edgeray
