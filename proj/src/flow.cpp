#include "edgeray/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "edgeray/error.hpp"
#include "edgeray/ode.hpp"

namespace edgeray {

void FlowSettings::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(rtol, "rtol");
    positive(atol, "atol");
    positive(x_stop, "x_stop");
    positive(h_init, "h_init");
    positive(h_max, "h_max");
    positive(p_drift_max, "p_drift_max");
    positive(eps_launch, "eps_launch");
    if (max_steps <= 0) throw ConfigError("max_steps must be positive");
}

const char* to_string(Termination t) {
    switch (t) {
        case Termination::BoundaryApproach: return "BoundaryApproach";
        case Termination::TimeLimit: return "TimeLimit";
        case Termination::ChartExit: return "ChartExit";
        case Termination::StepLimit: return "StepLimit";
    }
    return "?";
}

const char* to_string(Io io) { return io == Io::Incoming ? "Incoming" : "Outgoing"; }

// ---------------------------------------------------------------- fields

void hamilton_field(const EdgeMetricSpec& spec, const double* state, double* out) {
    const int b = spec.b();
    const int f = spec.f();
    const int n = 1 + b + f;
    const StateLayout S{b, f};
    const double x = state[S.x()];
    std::vector<double> vars(static_cast<std::size_t>(n));
    vars[0] = x;
    for (int i = 0; i < b; ++i) vars[static_cast<std::size_t>(1 + i)] = state[S.y(i)];
    for (int j = 0; j < f; ++j) vars[static_cast<std::size_t>(1 + b + j)] = state[S.z(j)];
    Eigen::VectorXd eps(n);
    eps[0] = state[S.xi()];
    for (int i = 0; i < b; ++i) eps[1 + i] = state[S.eta(i)];
    for (int j = 0; j < f; ++j) eps[1 + b + j] = state[S.zeta(j)];

    const Eigen::VectorXd w = frame_inverse(spec, vars) * eps;
    const std::vector<Eigen::MatrixXd> dM = spec.frame_matrix_derivatives(vars);
    Eigen::VectorXd pv(n);
    for (int v = 0; v < n; ++v) pv[v] = w.dot(dM[static_cast<std::size_t>(v)] * w);

    const double tau = state[S.tau()];
    const double xi = eps[0];
    out[S.t()] = -x * tau;
    out[S.x()] = x * w[0];
    for (int i = 0; i < b; ++i) out[S.y(i)] = x * w[1 + i];
    double zeta_w = 0.0;
    for (int j = 0; j < f; ++j) {
        out[S.z(j)] = w[1 + b + j];
        zeta_w += eps[1 + b + j] * w[1 + b + j];
    }
    out[S.tau()] = w[0] * tau;
    out[S.xi()] = xi * w[0] + zeta_w + 0.5 * x * pv[0];
    for (int i = 0; i < b; ++i) out[S.eta(i)] = w[0] * eps[1 + i] + 0.5 * x * pv[1 + i];
    for (int j = 0; j < f; ++j) out[S.zeta(j)] = 0.5 * pv[1 + b + j];
}

Eigen::VectorXd hamilton_field(const EdgeMetricSpec& spec, const EdgePhasePoint& q) {
    if (q.b() != spec.b() || q.f() != spec.f()) throw InvalidInput("phase point dimensions do not match the metric");
    const Eigen::VectorXd s = q.to_state();
    Eigen::VectorXd out(s.size());
    hamilton_field(spec, s.data(), out.data());
    return out;
}

Eigen::VectorXd product_form_field(const EdgeMetricSpec& spec, const EdgePhasePoint& q) {
    if (!spec.is_product_form()) throw InvalidInput("product_form_field needs a metric dx^2 + h(y) + x^2 k(z)");
    const int b = spec.b();
    const int f = spec.f();
    const StateLayout S{b, f};
    const std::vector<double> vars = pack_vars(q.x, q.y, q.z);
    const Eigen::Map<const Eigen::VectorXd> eta(q.eta.data(), b);
    const Eigen::Map<const Eigen::VectorXd> zeta(q.zeta.data(), f);
    const Eigen::MatrixXd Kbar = spec.k_at(vars).inverse();
    const auto dk = spec.k_derivatives(vars);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(S.size());
    out[S.t()] = -q.tau * q.x;
    out[S.x()] = q.xi * q.x;
    out[S.tau()] = q.tau * q.xi;
    out[S.xi()] = q.xi * q.xi + zeta.dot(Kbar * zeta);
    const Eigen::VectorXd zdot = Kbar * zeta;
    for (int j = 0; j < f; ++j) {
        out[S.z(j)] = zdot[j];
        const Eigen::MatrixXd dKbar = -Kbar * dk[static_cast<std::size_t>(1 + b + j)] * Kbar;
        out[S.zeta(j)] = -0.5 * zeta.dot(dKbar * zeta);
    }
    if (b > 0) {
        const Eigen::MatrixXd H = spec.h_at(vars).inverse();
        const auto dh = spec.h_derivatives(vars);
        const Eigen::VectorXd ydot = q.x * (H * eta);
        for (int i = 0; i < b; ++i) {
            out[S.y(i)] = ydot[i];
            const Eigen::MatrixXd dH = -H * dh[static_cast<std::size_t>(1 + i)] * H;
            out[S.eta(i)] = q.xi * eta[i] - 0.5 * q.x * eta.dot(dH * eta);
        }
    }
    return out;
}

Eigen::VectorXd rescaled_field(const EdgeMetricSpec& spec, const Eigen::VectorXd& v, int sgn_tau) {
    const int b = spec.b();
    const int f = spec.f();
    const CosphereLayout C{b, f};
    const StateLayout S{b, f};
    Eigen::VectorXd q(S.size());
    q[S.t()] = v[C.t()];
    q[S.x()] = v[C.x()];
    for (int i = 0; i < b; ++i) {
        q[S.y(i)] = v[C.y(i)];
        q[S.eta(i)] = v[C.eta(i)];
    }
    for (int j = 0; j < f; ++j) {
        q[S.z(j)] = v[C.z(j)];
        q[S.zeta(j)] = v[C.zeta(j)];
    }
    q[S.tau()] = sgn_tau;
    q[S.xi()] = v[C.xi()];
    Eigen::VectorXd hn(S.size());
    hamilton_field(spec, q.data(), hn.data());
    const double g = sgn_tau * hn[S.tau()];
    Eigen::VectorXd out(C.size());
    out[C.x()] = hn[S.x()];
    out[C.sigma()] = -v[C.sigma()] * g;
    out[C.t()] = hn[S.t()];
    for (int i = 0; i < b; ++i) {
        out[C.y(i)] = hn[S.y(i)];
        out[C.eta(i)] = hn[S.eta(i)] - v[C.eta(i)] * g;
    }
    for (int j = 0; j < f; ++j) {
        out[C.z(j)] = hn[S.z(j)];
        out[C.zeta(j)] = hn[S.zeta(j)] - v[C.zeta(j)] * g;
    }
    out[C.xi()] = hn[S.xi()] - v[C.xi()] * g;
    return out;
}

Eigen::VectorXd rescaled_field(const EdgeMetricSpec& spec, const CospherePoint& c) {
    if (c.b() != spec.b() || c.f() != spec.f()) throw InvalidInput("cosphere point dimensions do not match the metric");
    return rescaled_field(spec, to_cosphere_vector(c), c.sgn_tau);
}

// ---------------------------------------------------------------- integration

namespace {

enum class Mode { Normal, LogX };

double p_relative(const EdgeMetricSpec& spec, const Eigen::VectorXd& state, int b, int f) {
    const EdgePhasePoint q = EdgePhasePoint::from_state(state, b, f);
    return wave_symbol(spec, q) / (q.tau * q.tau);
}

struct EventHit {
    Termination kind;
    double theta;
};

}  // namespace

RaySegment integrate_interior(const EdgeMetricSpec& spec, const EdgePhasePoint& q0, int direction,
                              const FlowSettings& settings, const IntegrationLimits& limits) {
    settings.validate();
    if (direction != 1 && direction != -1) throw InvalidInput("direction must be +1 or -1");
    const int b = spec.b();
    const int f = spec.f();
    if (q0.b() != b || q0.f() != f) throw InvalidInput("phase point dimensions do not match the metric");
    const StateLayout S{b, f};
    const int N = S.size();
    if (q0.tau == 0.0) throw InvalidInput("integrate_interior needs tau != 0");
    if (limits.boundary_event && !(q0.x > settings.x_stop))
        throw InvalidInput("integrate_interior needs x > x_stop at the start");
    const double p0 = wave_symbol(spec, q0) / (q0.tau * q0.tau);
    if (!(std::abs(p0) < settings.p_drift_max))
        throw InvalidInput("initial point is not on the characteristic set (|p|/tau^2 = " + std::to_string(p0) + ")");

    RaySegment seg;
    seg.b = b;
    seg.f = f;
    seg.direction = direction;
    const FiberTopology& fiber = spec.fiber();

    // Augmented state (Y, s).
    OdeState Z(static_cast<std::size_t>(N + 1));
    {
        const Eigen::VectorXd y0 = q0.to_state();
        for (int i = 0; i < N; ++i) Z[static_cast<std::size_t>(i)] = y0[i];
        Z[static_cast<std::size_t>(N)] = 0.0;
    }
    auto record = [&](const OdeState& z) {
        Eigen::VectorXd y(N);
        for (int i = 0; i < N; ++i) y[i] = z[static_cast<std::size_t>(i)];
        const double tau = y[S.tau()];
        ConservedEntry c;
        c.p_rel = p_relative(spec, y, b, f);
        c.tau_over_x = tau / y[S.x()];
        c.abs_tau = std::abs(tau);
        seg.s.push_back(z[static_cast<std::size_t>(N)]);
        seg.states.push_back(std::move(y));
        seg.conserved_log.push_back(c);
    };
    record(Z);

    Mode mode = Mode::Normal;
    const OdeRhs rhs_normal = [&](const OdeState& z, OdeState& dz, double) {
        hamilton_field(spec, z.data(), dz.data());
        for (int i = 0; i < N; ++i) dz[static_cast<std::size_t>(i)] *= direction;
        dz[static_cast<std::size_t>(N)] = direction;
    };
    // Parameter u = -log x; dY/du = -H / (x'/x), exact for the x component.
    const OdeRhs rhs_log = [&](const OdeState& z, OdeState& dz, double) {
        hamilton_field(spec, z.data(), dz.data());
        const double r = dz[static_cast<std::size_t>(S.x())] / z[static_cast<std::size_t>(S.x())];
        for (int i = 0; i < N; ++i) dz[static_cast<std::size_t>(i)] /= -r;
        dz[static_cast<std::size_t>(N)] = -1.0 / r;
    };
    auto radial_rate = [&](const OdeState& z) {
        OdeState dz(static_cast<std::size_t>(N + 1));
        hamilton_field(spec, z.data(), dz.data());
        const double x = z[static_cast<std::size_t>(S.x())];
        const double tau = z[static_cast<std::size_t>(S.tau())];
        return -direction * (dz[static_cast<std::size_t>(S.x())] / x) / std::abs(tau);
    };

    const Dopri5 dp(settings.rtol, settings.atol);
    double h_normal = settings.h_init;
    double h_log = 0.05;
    double nu = 0.0;  // integration variable of the current mode
    OdeState dZ(Z.size());
    rhs_normal(Z, dZ, nu);
    long accepted = 0;
    long attempts = 0;

    auto event_values = [&](const OdeState& z, std::vector<double>& g) {
        g.clear();
        const double x = z[static_cast<std::size_t>(S.x())];
        const double t = z[static_cast<std::size_t>(S.t())];
        g.push_back(limits.boundary_event && mode == Mode::Normal ? x - settings.x_stop : 1.0);
        g.push_back(limits.t_window ? t - limits.t_window->first : 1.0);
        g.push_back(limits.t_window ? limits.t_window->second - t : 1.0);
        g.push_back(spec.x_max() - x);
    };
    const Termination event_kind[4] = {Termination::BoundaryApproach, Termination::TimeLimit, Termination::TimeLimit,
                                       Termination::ChartExit};

    for (;;) {
        if (accepted >= settings.max_steps) {
            seg.termination = Termination::StepLimit;
            return seg;
        }
        if (++attempts > 20 * settings.max_steps) throw IntegrationDiverged("too many rejected steps");

        const double x = Z[static_cast<std::size_t>(S.x())];
        const Mode want = (limits.boundary_event && x < 10.0 * settings.x_stop && radial_rate(Z) > 0.05)
                              ? Mode::LogX
                              : Mode::Normal;
        if (want != mode) {
            mode = want;
            nu = 0.0;
            (mode == Mode::Normal ? rhs_normal : rhs_log)(Z, dZ, nu);
        }
        const OdeRhs& rhs = mode == Mode::Normal ? rhs_normal : rhs_log;
        // log steps are capped so the last samples stay dense enough to extrapolate
        double h = mode == Mode::Normal ? std::min(h_normal, settings.h_max) : std::min(h_log, 0.5);
        bool landing = false;
        if (mode == Mode::LogX) {
            const double u_rem = std::log(x / settings.x_stop);
            if (h >= u_rem) {
                h = u_rem;
                landing = true;
            }
        }

        Dopri5::Step st = dp.step(rhs, Z, dZ, nu, h);
        bool finite = std::isfinite(st.err);
        for (double v : st.y) finite = finite && std::isfinite(v);
        if (!finite || st.err > 1.0) {
            const double hn = Dopri5::next_h(h, finite ? st.err : std::numeric_limits<double>::infinity());
            (mode == Mode::Normal ? h_normal : h_log) = hn;
            if (hn < 1e-14) throw IntegrationDiverged("step size underflow");
            continue;
        }

        // Event localization by bisection on the step fraction.
        std::vector<double> g_end;
        event_values(st.y, g_end);
        std::optional<EventHit> hit;
        for (std::size_t k = 0; k < g_end.size(); ++k) {
            if (g_end[k] > 0.0) continue;
            double lo = 0.0;
            double hi = 1.0;
            const double ds_full = std::abs(st.y[static_cast<std::size_t>(N)] - Z[static_cast<std::size_t>(N)]);
            std::vector<double> g;
            for (int it = 0; it < 200 && (hi - lo) * ds_full > 1e-12; ++it) {
                const double mid = 0.5 * (lo + hi);
                const Dopri5::Step m = dp.step(rhs, Z, dZ, nu, mid * h);
                event_values(m.y, g);
                (g[k] > 0.0 ? lo : hi) = mid;
            }
            if (!hit || hi < hit->theta) hit = EventHit{event_kind[k], hi};
        }
        if (hit && hit->theta < 1.0) st = dp.step(rhs, Z, dZ, nu, hit->theta * h);

        Z = std::move(st.y);
        dZ = std::move(st.dydt);
        nu += hit ? hit->theta * h : h;
        ++accepted;
        record(Z);
        const double pr = seg.conserved_log.back().p_rel;
        if (!std::isfinite(pr) || std::abs(pr) > settings.p_drift_max)
            throw IntegrationDiverged("symbol drift |p|/tau^2 = " + std::to_string(pr) + " exceeds p_drift_max");

        if (hit) {
            seg.termination = hit->kind;
            return seg;
        }
        if (landing) {
            seg.termination = Termination::BoundaryApproach;
            return seg;
        }
        std::vector<double> zf(static_cast<std::size_t>(f));
        for (int j = 0; j < f; ++j) zf[static_cast<std::size_t>(j)] = Z[static_cast<std::size_t>(S.z(j))];
        if (!fiber.in_chart(zf)) {
            seg.termination = Termination::ChartExit;
            return seg;
        }
        (mode == Mode::Normal ? h_normal : h_log) = Dopri5::next_h(h, st.err);
    }
}

// ---------------------------------------------------------------- radial points

namespace {

Eigen::MatrixXd fd_jacobian(const EdgeMetricSpec& spec, const Eigen::VectorXd& v, int sgn_tau, double step) {
    const int n = static_cast<int>(v.size());
    Eigen::MatrixXd J(n, n);
    for (int j = 0; j < n; ++j) {
        Eigen::VectorXd a = v;
        Eigen::VectorXd c = v;
        a[j] += step;
        c[j] -= step;
        J.col(j) = (rescaled_field(spec, a, sgn_tau) - rescaled_field(spec, c, sgn_tau)) / (2.0 * step);
    }
    return J;
}

}  // namespace

RadialLinearization linearization_at_radial(const EdgeMetricSpec& spec, const CospherePoint& q, double fd_step) {
    if (q.b() != spec.b() || q.f() != spec.f()) throw InvalidInput("cosphere point dimensions do not match the metric");
    if (!radial_point_test(spec, q, 1e-9)) throw InvalidInput("point is not a radial point (x = 0, zeta = 0 on the characteristic set)");
    if (std::abs(q.xi_hat) < 1e-8) throw GlancingPoint("radial point with xi^ = 0 is glancing; the linearization does not split");
    CospherePoint r = q;
    r.sigma = 0.0;
    RadialLinearization out;
    out.xi_hat = q.xi_hat;
    out.L = fd_jacobian(spec, to_cosphere_vector(r), q.sgn_tau, fd_step);
    Eigen::EigenSolver<Eigen::MatrixXd> es(out.L, false);
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        out.eigenvalues.push_back(es.eigenvalues()[i].real());
        out.max_imag = std::max(out.max_imag, std::abs(es.eigenvalues()[i].imag()));
    }
    std::sort(out.eigenvalues.begin(), out.eigenvalues.end());
    return out;
}

EdgePhasePoint stable_manifold_launch(const EdgeMetricSpec& spec, const BoundaryData& data, Io io, double eps_launch,
                                      const FlowSettings& settings) {
    const int b = spec.b();
    const int f = spec.f();
    if (static_cast<int>(data.y.size()) != b || static_cast<int>(data.eta_hat.size()) != b ||
        static_cast<int>(data.z.size()) != f)
        throw InvalidInput("boundary data dimensions do not match the metric");
    if (data.sgn_tau != 1 && data.sgn_tau != -1) throw InvalidInput("sgn_tau must be +1 or -1");
    if (!(eps_launch > 0.0)) throw InvalidInput("eps_launch must be positive");
    if (data.xi_hat == 0.0 || std::abs(data.xi_hat) < 1e-12)
        throw GlancingPoint("xi^ = 0: boundary point is glancing, no stable/unstable manifold");
    const int expected = io == Io::Incoming ? data.sgn_tau : -data.sgn_tau;
    if ((data.xi_hat > 0 ? 1 : -1) != expected)
        throw InvalidInput(std::string("sign of xi^ does not match the ") + to_string(io) + " convention");
    const double norm = data.xi_hat * data.xi_hat + eta_norm2_h(spec, data.y, data.eta_hat);
    if (std::abs(norm - 1.0) > 1e-6) throw InvalidInput("boundary data must satisfy xi^2 + |eta|_h^2 = 1");

    const CosphereLayout C{b, f};
    CospherePoint rp;
    rp.t = data.t;
    rp.x = 0.0;
    rp.y = data.y;
    rp.z = data.z;
    rp.sgn_tau = data.sgn_tau;
    rp.xi_hat = data.xi_hat;
    rp.eta_hat = data.eta_hat;
    rp.zeta_hat.assign(static_cast<std::size_t>(f), 0.0);
    rp.sigma = 0.0;
    const Eigen::VectorXd R = to_cosphere_vector(rp);

    // Eigenvector of eigenvalue xi^ normalized by v_x = 1.
    const Eigen::MatrixXd J = fd_jacobian(spec, R, data.sgn_tau, 1e-6);
    const int n = C.size();
    const Eigen::MatrixXd A = J.bottomRightCorner(n - 1, n - 1) - data.xi_hat * Eigen::MatrixXd::Identity(n - 1, n - 1);
    const Eigen::VectorXd rhs = -J.col(0).tail(n - 1);
    Eigen::VectorXd v(n);
    v[0] = 1.0;
    v.tail(n - 1) = A.fullPivLu().solve(rhs);
    if (!v.allFinite()) throw LaunchFailed("unstable direction at the radial point is not resolvable");

    const double x_in = eps_launch * 1e-3;
    Eigen::VectorXd V = R + x_in * v;
    V[C.sigma()] = 0.0;

    auto correct_xi = [&](Eigen::VectorXd& w) {
        for (int it = 0; it < 30; ++it) {
            CospherePoint c = from_cosphere_vector(w, b, f, data.sgn_tau);
            const double ph = cosphere_symbol(spec, c);
            if (std::abs(ph) < 1e-15) return;
            const std::vector<double> vars = pack_vars(c.x, c.y, c.z);
            Eigen::VectorXd e(1 + b + f);
            e[0] = c.xi_hat;
            for (int i = 0; i < b; ++i) e[1 + i] = c.eta_hat[static_cast<std::size_t>(i)];
            for (int j = 0; j < f; ++j) e[1 + b + j] = c.zeta_hat[static_cast<std::size_t>(j)];
            const double dp = -2.0 * (frame_inverse(spec, vars) * e)[0];
            if (dp == 0.0) break;
            w[C.xi()] -= ph / dp;
        }
        const double ph = cosphere_symbol(spec, from_cosphere_vector(w, b, f, data.sgn_tau));
        if (!(std::abs(ph) < 1e-12)) throw LaunchFailed("Newton correction onto the characteristic set failed");
    };
    correct_xi(V);

    // Integrate along the manifold in lambda = log x; dx/dlambda = x exactly.
    const OdeRhs rhs_log = [&](const OdeState& y, OdeState& dy, double) {
        const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
        const Eigen::VectorXd F = rescaled_field(spec, Eigen::VectorXd(yv), data.sgn_tau);
        const double r = F[C.x()] / y[static_cast<std::size_t>(C.x())];
        if (!(std::abs(r) > 1e-12)) throw LaunchFailed("radial rate vanished along the launch manifold");
        for (int i = 0; i < n; ++i) dy[static_cast<std::size_t>(i)] = F[i] / r;
    };
    OdeState y0(V.data(), V.data() + n);
    const IntegrateResult res =
        integrate_to(rhs_log, y0, std::log(x_in), std::log(eps_launch), settings.rtol, settings.atol, 0.05);
    Eigen::VectorXd W = Eigen::Map<const Eigen::VectorXd>(res.y.data(), n);
    W[C.x()] = eps_launch;
    correct_xi(W);
    CospherePoint c = from_cosphere_vector(W, b, f, data.sgn_tau);
    if ((c.xi_hat > 0 ? 1 : -1) != expected)
        throw LaunchFailed("launch seed left the hyperbolic branch (xi^ changed sign)");
    c.sigma = 1.0 / eps_launch;
    return denormalize(c);
}

}  // namespace edgeray
