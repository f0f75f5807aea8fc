#include "edgeray/gbb.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>

#include "edgeray/config_text.hpp"
#include "edgeray/error.hpp"
#include "edgeray/ode.hpp"

namespace edgeray {

namespace {

constexpr double kPi = std::numbers::pi;

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double frac(double v) { return v - std::floor(v); }

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

// Quantities extrapolated in x: t, y, xi^, eta^, z, zeta^.
Eigen::VectorXd slow_fast_vector(const RaySegment& seg, std::size_t i) {
    const StateLayout S{seg.b, seg.f};
    const Eigen::VectorXd& s = seg.states[i];
    const double at = std::abs(s[S.tau()]);
    Eigen::VectorXd v(2 + 2 * seg.b + 2 * seg.f);
    int k = 0;
    v[k++] = s[S.t()];
    for (int j = 0; j < seg.b; ++j) v[k++] = s[S.y(j)];
    v[k++] = s[S.xi()] / at;
    for (int j = 0; j < seg.b; ++j) v[k++] = s[S.eta(j)] / at;
    for (int j = 0; j < seg.f; ++j) v[k++] = s[S.z(j)];
    for (int j = 0; j < seg.f; ++j) v[k++] = s[S.zeta(j)] / at;
    return v;
}

}  // namespace

// ---------------------------------------------------------------- small types

BoundaryData BoundaryEvent::boundary_data() const {
    BoundaryData d;
    d.t = t;
    d.y = y;
    d.z = z;
    d.sgn_tau = sgn_tau;
    d.xi_hat = xi_hat;
    d.eta_hat = eta_hat;
    return d;
}

std::string BranchPolicy::to_text() const {
    switch (kind) {
        case Kind::SameFiberPoint: return "same_fiber_point";
        case Kind::GeometricOnly: return "geometric_only";
        case Kind::DiffractiveFan: return "diffractive_fan(" + std::to_string(fan) + ")";
    }
    return "?";
}

BranchPolicy BranchPolicy::parse(const std::string& text) {
    const std::string t = trim(text);
    BranchPolicy p;
    if (t == "same_fiber_point") {
        p.kind = Kind::SameFiberPoint;
        return p;
    }
    if (t == "geometric_only") {
        p.kind = Kind::GeometricOnly;
        return p;
    }
    if (t == "diffractive_fan") return p;
    const std::string head = "diffractive_fan(";
    if (t.size() > head.size() && t.compare(0, head.size(), head) == 0 && t.back() == ')') {
        const std::string arg = t.substr(head.size(), t.size() - head.size() - 1);
        std::size_t used = 0;
        try {
            p.fan = std::stoi(arg, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != arg.size()) throw ConfigError("policy fan count must be an integer, got '" + arg + "'");
        if (p.fan < 1) throw ConfigError("policy fan count must be >= 1");
        return p;
    }
    throw ConfigError("unknown branch policy '" + t + "'");
}

const char* to_string(BranchKind k) {
    switch (k) {
        case BranchKind::Incident: return "incident";
        case BranchKind::GeometricContinuation: return "geometric";
        case BranchKind::DiffractedContinuation: return "diffracted";
        case BranchKind::GlancingContinuation: return "glancing";
    }
    return "?";
}

// ---------------------------------------------------------------- fan and branching

std::vector<std::vector<double>> fiber_fan(const FiberTopology& fiber, std::span<const double> z0, int n) {
    if (n < 1) throw InvalidInput("fan size must be >= 1");
    const int f = static_cast<int>(z0.size());
    std::vector<std::vector<double>> out;
    out.reserve(static_cast<std::size_t>(n));
    switch (fiber.kind()) {
        case FiberTopology::Kind::Circle:
        case FiberTopology::Kind::Torus:
            // Korobov-style lattice: first coordinate j/n, the others irrational rotations.
            for (int j = 0; j < n; ++j) {
                std::vector<double> z(z0.begin(), z0.end());
                for (int c = 0; c < f; ++c) {
                    const double per = fiber.periods()[static_cast<std::size_t>(c)];
                    const double u = c == 0 ? static_cast<double>(j) / n
                                            : frac(j * std::sqrt(static_cast<double>(kPrimes[c % 16])));
                    z[static_cast<std::size_t>(c)] += per * u;
                }
                out.push_back(fiber.wrap(z));
            }
            break;
        case FiberTopology::Kind::Sphere: {
            const double golden = kPi * (3.0 - std::sqrt(5.0));
            for (int j = 0; j < n; ++j) {
                const double c = 1.0 - (2.0 * j + 1.0) / n;
                out.push_back({std::acos(c), std::remainder(j * golden, 2.0 * kPi)});
            }
            break;
        }
        case FiberTopology::Kind::Chart:
            out.emplace_back(z0.begin(), z0.end());
            for (int j = 1; j < n; ++j) {
                std::vector<double> z(static_cast<std::size_t>(f));
                for (int c = 0; c < f; ++c) {
                    const auto [lo, hi] = fiber.box()[static_cast<std::size_t>(c)];
                    z[static_cast<std::size_t>(c)] =
                        lo + (hi - lo) * radical_inverse(static_cast<unsigned long>(j), kPrimes[c % 16]);
                }
                out.push_back(std::move(z));
            }
            break;
    }
    return out;
}

std::vector<OutgoingLaunch> branch_hyperbolic(const EdgeMetricSpec& spec, const BoundaryEvent& ev,
                                              const BranchPolicy& policy, int n_partner_directions) {
    if (ev.cls.kind != BoundaryClass::Kind::Hyperbolic) throw InvalidInput("branch_hyperbolic needs a hyperbolic event");
    BoundaryData base = ev.boundary_data();
    base.xi_hat = -ev.xi_hat;
    std::vector<OutgoingLaunch> out;
    auto add = [&](std::vector<double> z, BranchKind kind, int mult) {
        OutgoingLaunch l;
        l.data = base;
        l.data.z = std::move(z);
        l.kind = kind;
        l.multiplicity = mult;
        out.push_back(std::move(l));
    };
    auto tag = [&](std::span<const double> z) {
        return is_geometrically_related(spec, ev.y, ev.z, z) ? BranchKind::GeometricContinuation
                                                             : BranchKind::DiffractedContinuation;
    };
    switch (policy.kind) {
        case BranchPolicy::Kind::SameFiberPoint: add(ev.z, tag(ev.z), 1); break;
        case BranchPolicy::Kind::GeometricOnly: {
            const int n = n_partner_directions > 0 ? n_partner_directions : default_partner_directions(spec.f());
            for (Partner& p : geometric_partners(spec, ev.y, ev.z, n))
                add(std::move(p.z), BranchKind::GeometricContinuation, p.multiplicity);
            break;
        }
        case BranchPolicy::Kind::DiffractiveFan:
            for (std::vector<double>& z : fiber_fan(spec.fiber(), ev.z, policy.fan)) {
                const BranchKind k = tag(z);
                add(std::move(z), k, 1);
            }
            break;
    }
    return out;
}

// ---------------------------------------------------------------- events

BoundaryLimit extrapolate_to_boundary(const RaySegment& seg, bool from_end) {
    const std::size_t n = seg.size();
    if (n < 3) throw IllConditionedEvent("need at least three samples to extrapolate to x = 0");
    const StateLayout S{seg.b, seg.f};
    auto x_at = [&](std::size_t i) { return seg.states[i][S.x()]; };

    // Pick three samples nearest the boundary with well separated x.
    std::vector<std::size_t> pick;
    const std::size_t start = from_end ? n - 1 : 0;
    pick.push_back(start);
    for (std::size_t k = 1; k < n && pick.size() < 3; ++k) {
        const std::size_t i = from_end ? n - 1 - k : k;
        if (x_at(i) > 1.2 * x_at(pick.back())) pick.push_back(i);
    }
    if (pick.size() < 3) throw IllConditionedEvent("samples do not separate in x near the boundary");

    double xs[3];
    Eigen::VectorXd qs[3];
    for (int i = 0; i < 3; ++i) {
        xs[i] = x_at(pick[static_cast<std::size_t>(i)]);
        qs[i] = slow_fast_vector(seg, pick[static_cast<std::size_t>(i)]);
    }
    if (!(xs[0] > 0.0)) throw IllConditionedEvent("sample with x <= 0");

    // Lagrange weights at x = 0.
    Eigen::VectorXd quad = Eigen::VectorXd::Zero(qs[0].size());
    for (int i = 0; i < 3; ++i) {
        double w = 1.0;
        for (int j = 0; j < 3; ++j)
            if (j != i) w *= xs[j] / (xs[j] - xs[i]);
        quad += w * qs[i];
    }
    const Eigen::VectorXd lin = (xs[1] * qs[0] - xs[0] * qs[1]) / (xs[1] - xs[0]);
    double res = 0.0;
    for (Eigen::Index i = 0; i < quad.size(); ++i)
        res = std::max(res, std::abs(quad[i] - lin[i]) / (1.0 + std::abs(quad[i])));

    BoundaryLimit L;
    L.residual = res;
    L.sgn_tau = seg.states[start][S.tau()] > 0 ? 1 : -1;
    int k = 0;
    L.t = quad[k++];
    for (int j = 0; j < seg.b; ++j) L.y.push_back(quad[k++]);
    L.xi_hat = quad[k++];
    for (int j = 0; j < seg.b; ++j) L.eta_hat.push_back(quad[k++]);
    for (int j = 0; j < seg.f; ++j) L.z.push_back(quad[k++]);
    for (int j = 0; j < seg.f; ++j) L.zeta_hat.push_back(quad[k++]);
    return L;
}

BoundaryEvent detect_boundary_event(const EdgeMetricSpec& spec, const RaySegment& seg, double tol_g,
                                    double residual_tol) {
    if (seg.termination != Termination::BoundaryApproach)
        throw InvalidInput(std::string("segment ended with ") + to_string(seg.termination) + ", not at the boundary");
    const BoundaryLimit L = extrapolate_to_boundary(seg, true);
    if (!(L.residual <= residual_tol))
        throw IllConditionedEvent("boundary extrapolation residual " + std::to_string(L.residual) +
                                  " exceeds tolerance");

    BoundaryEvent ev;
    ev.t = L.t;
    ev.y = L.y;
    ev.sgn_tau = L.sgn_tau;
    ev.eta_hat = L.eta_hat;
    ev.zeta_hat = L.zeta_hat;
    ev.extrapolation_residual = L.residual;
    const double margin = 1.0 - eta_norm2_h(spec, ev.y, ev.eta_hat);
    ev.cls = classify_margin(margin, tol_g);
    if (ev.cls.kind == BoundaryClass::Kind::Hyperbolic) {
        // Incoming side: sgn xi^ = sgn tau.
        const double s = sgn(L.xi_hat) != 0.0 ? sgn(L.xi_hat) : static_cast<double>(ev.sgn_tau);
        ev.xi_hat = s * std::sqrt(margin);
    } else {
        ev.xi_hat = 0.0;
    }

    double zn2 = 0.0;
    for (double c : ev.zeta_hat) zn2 += c * c;
    if (ev.xi_hat != 0.0 && zn2 > 1e-20) {
        EdgePhasePoint qb;
        qb.t = ev.t;
        qb.x = 0.0;
        qb.y = ev.y;
        qb.z = L.z;
        qb.tau = ev.sgn_tau;
        qb.xi = ev.xi_hat;
        qb.eta = ev.eta_hat;
        qb.zeta = ev.zeta_hat;
        ev.z = spec.fiber().wrap(fiber_limit_point(spec, qb));
    } else {
        ev.z = spec.fiber().wrap(L.z);
    }
    return ev;
}

// ---------------------------------------------------------------- glancing

GlancingContinuation continue_glancing(const EdgeMetricSpec& spec, const BoundaryEvent& ev, double delta,
                                       const FlowSettings& settings) {
    if (!(delta > 0.0)) throw InvalidInput("glancing duration must be positive");
    const int b = spec.b();
    if (b == 0) throw InvalidInput("glancing continuation needs a base dimension b >= 1");
    const double st = ev.sgn_tau;

    // State (y, eta^), parameter t.
    const OdeRhs rhs = [&](const OdeState& u, OdeState& du, double) {
        const std::span<const double> y(u.data(), static_cast<std::size_t>(b));
        const Eigen::Map<const Eigen::VectorXd> e(u.data() + b, b);
        const std::vector<double> vars = pack_vars(0.0, y, ev.z);
        const Eigen::MatrixXd Hinv = checked_inverse(spec.h_at(vars));
        const std::vector<Eigen::MatrixXd> dh = spec.h_derivatives(vars);
        const Eigen::VectorXd w = Hinv * e;
        for (int i = 0; i < b; ++i) {
            du[static_cast<std::size_t>(i)] = -st * w[i];
            du[static_cast<std::size_t>(b + i)] = -0.5 * st * w.dot(dh[static_cast<std::size_t>(1 + i)] * w);
        }
    };

    GlancingContinuation out;
    OdeState u(ev.y);
    u.insert(u.end(), ev.eta_hat.begin(), ev.eta_hat.end());
    auto record = [&](double t) {
        TangentialSample s;
        s.t = t;
        s.y.assign(u.begin(), u.begin() + b);
        s.eta_hat.assign(u.begin() + b, u.end());
        out.trajectory.push_back(std::move(s));
    };
    constexpr int kSamples = 32;
    record(ev.t);
    for (int k = 0; k < kSamples; ++k) {
        const double t0 = ev.t + delta * k / kSamples;
        const double t1 = ev.t + delta * (k + 1) / kSamples;
        u = integrate_to(rhs, u, t0, t1, settings.rtol, settings.atol, delta / kSamples).y;
        record(t1);
    }

    // Re-entry just inside on the outgoing side.
    const double eps = settings.eps_launch;
    const TangentialSample& end = out.trajectory.back();
    const double xi_hat = -st * kGlancingReentryXi;
    const Eigen::MatrixXd W = frame_inverse(spec, pack_vars(eps, end.y, ev.z));
    Eigen::VectorXd ehat = Eigen::VectorXd::Zero(1 + b + spec.f());
    for (int i = 0; i < b; ++i) ehat[1 + i] = end.eta_hat[static_cast<std::size_t>(i)];
    // 1 = xi^2 W00 + 2 lambda xi W0e e + lambda^2 e W e
    const double qa = ehat.dot(W * ehat);
    const double qb = 2.0 * xi_hat * W.row(0).dot(ehat);
    const double qc = xi_hat * xi_hat * W(0, 0) - 1.0;
    const double disc = qb * qb - 4.0 * qa * qc;
    if (!(qa > 0.0) || !(disc >= 0.0)) throw LaunchFailed("glancing re-entry has no characteristic covector");
    const double lambda = (-qb + std::sqrt(disc)) / (2.0 * qa);

    EdgePhasePoint& q = out.relaunch;
    q.t = end.t;
    q.x = eps;
    q.y = end.y;
    q.z = ev.z;
    q.tau = st * eps;
    q.xi = xi_hat * eps;
    for (double e : end.eta_hat) q.eta.push_back(lambda * e * eps);
    q.zeta.assign(static_cast<std::size_t>(spec.f()), 0.0);
    return out;
}

// ---------------------------------------------------------------- tracing

GbbPath trace_gbb(const EdgeMetricSpec& spec, const EdgePhasePoint& q0, std::pair<double, double> t_span,
                  const BranchPolicy& policy, const FlowSettings& settings, const GbbOptions& options) {
    settings.validate();
    if (options.branch_budget < 1) throw ConfigError("branch_budget must be >= 1");
    if (!(t_span.first < t_span.second)) throw ConfigError("t_span must be increasing");
    if (q0.tau == 0.0) throw InvalidInput("incident covector needs tau != 0");

    struct Pending {
        EdgePhasePoint start;
        int parent = -1;
        int event = -1;
        BranchKind kind = BranchKind::Incident;
        std::optional<std::vector<double>> partner;
        std::vector<TangentialSample> tangential;
    };

    GbbPath path;
    std::deque<Pending> queue;
    queue.push_back({q0, -1, -1, BranchKind::Incident, std::nullopt, {}});
    IntegrationLimits limits;
    limits.t_window = t_span;

    while (!queue.empty()) {
        if (static_cast<int>(path.branches.size()) >= options.branch_budget) {
            path.partial = true;
            path.notes.push_back("branch budget of " + std::to_string(options.branch_budget) + " exhausted; " +
                                 std::to_string(queue.size()) + " branches dropped");
            break;
        }
        Pending p = std::move(queue.front());
        queue.pop_front();

        GbbBranch br;
        br.id = static_cast<int>(path.branches.size());
        br.parent = p.parent;
        br.event_in = p.event;
        br.kind = p.kind;
        br.partner = std::move(p.partner);
        br.tangential = std::move(p.tangential);
        if (p.kind == BranchKind::Incident) {
            br.segment = integrate_interior(spec, p.start, forward_direction(p.start), settings, limits);
        } else {
            try {
                br.segment = integrate_interior(spec, p.start, forward_direction(p.start), settings, limits);
            } catch (const NumericalError& e) {
                path.notes.push_back("branch from event " + std::to_string(p.event) + " failed: " + e.what());
                continue;
            }
        }
        path.branches.push_back(std::move(br));
        GbbBranch& cur = path.branches.back();
        if (cur.segment.termination != Termination::BoundaryApproach) continue;

        BoundaryEvent ev;
        try {
            ev = detect_boundary_event(spec, cur.segment, options.tol_g);
        } catch (const IllConditionedEvent& e) {
            path.notes.push_back("branch " + std::to_string(cur.id) + ": " + e.what());
            continue;
        }
        ev.incoming_branch = cur.id;
        const int ev_id = static_cast<int>(path.events.size());
        cur.event_out = ev_id;
        path.events.push_back(ev);

        if (ev.t > t_span.second) {
            path.notes.push_back("event " + std::to_string(ev_id) + " lies past the time window");
            continue;
        }
        switch (ev.cls.kind) {
            case BoundaryClass::Kind::Elliptic:
                path.notes.push_back("event " + std::to_string(ev_id) + " is elliptic; no continuation");
                break;
            case BoundaryClass::Kind::Glancing: {
                try {
                    GlancingContinuation gc = continue_glancing(spec, ev, options.glancing_delta, settings);
                    Pending np;
                    np.start = std::move(gc.relaunch);
                    np.parent = cur.id;
                    np.event = ev_id;
                    np.kind = BranchKind::GlancingContinuation;
                    np.tangential = std::move(gc.trajectory);
                    queue.push_back(std::move(np));
                } catch (const NumericalError& e) {
                    path.notes.push_back("glancing continuation at event " + std::to_string(ev_id) +
                                         " failed: " + e.what());
                }
                break;
            }
            case BoundaryClass::Kind::Hyperbolic:
                for (OutgoingLaunch& l : branch_hyperbolic(spec, ev, policy, options.partner_directions)) {
                    try {
                        Pending np;
                        np.start = stable_manifold_launch(spec, l.data, Io::Outgoing, settings.eps_launch, settings);
                        np.parent = cur.id;
                        np.event = ev_id;
                        np.kind = l.kind;
                        np.partner = l.data.z;
                        queue.push_back(std::move(np));
                    } catch (const NumericalError& e) {
                        path.notes.push_back("launch at event " + std::to_string(ev_id) + " failed: " + e.what());
                    }
                }
                break;
        }
    }
    return path;
}

// ---------------------------------------------------------------- regularity of the path

LipschitzReport lipschitz_check(const EdgeMetricSpec& spec, const GbbPath& path, double jump_tol) {
    LipschitzReport rep;
    auto bump = [&](double v) {
        if (!std::isfinite(v)) rep.finite = false;
        else rep.max_constant = std::max(rep.max_constant, v);
    };

    for (const GbbBranch& br : path.branches) {
        const RaySegment& seg = br.segment;
        const StateLayout S{seg.b, seg.f};
        for (std::size_t i = 1; i < seg.size(); ++i) {
            const Eigen::VectorXd& a = seg.states[i - 1];
            const Eigen::VectorXd& c = seg.states[i];
            const double dt = std::abs(c[S.t()] - a[S.t()]);
            if (!(dt > 1e-12)) continue;
            bump(std::abs(c[S.x()] - a[S.x()]) / dt);
            for (int j = 0; j < seg.b; ++j) {
                bump(std::abs(c[S.y(j)] - a[S.y(j)]) / dt);
                const double ea = a[S.eta(j)] / std::abs(a[S.tau()]);
                const double ec = c[S.eta(j)] / std::abs(c[S.tau()]);
                bump(std::abs(ec - ea) / dt);
            }
        }
        for (std::size_t i = 1; i < br.tangential.size(); ++i) {
            const TangentialSample& a = br.tangential[i - 1];
            const TangentialSample& c = br.tangential[i];
            const double dt = std::abs(c.t - a.t);
            if (!(dt > 1e-12)) continue;
            for (std::size_t j = 0; j < a.y.size(); ++j) {
                bump(std::abs(c.y[j] - a.y[j]) / dt);
                bump(std::abs(c.eta_hat[j] - a.eta_hat[j]) / dt);
            }
        }

        if (br.event_in < 0 || br.kind == BranchKind::GlancingContinuation) continue;
        const BoundaryEvent& ev = path.events[static_cast<std::size_t>(br.event_in)];
        BoundaryLimit L;
        try {
            L = extrapolate_to_boundary(seg, false);
        } catch (const IllConditionedEvent&) {
            rep.finite = false;
            continue;
        }
        EventJump j;
        j.event = br.event_in;
        j.branch = br.id;
        j.slow_jump = std::abs(L.t - ev.t);
        if (L.sgn_tau != ev.sgn_tau) j.slow_jump = std::max(j.slow_jump, 2.0);
        for (std::size_t i = 0; i < ev.y.size(); ++i) {
            j.slow_jump = std::max(j.slow_jump, std::abs(L.y[i] - ev.y[i]));
            j.slow_jump = std::max(j.slow_jump, std::abs(L.eta_hat[i] - ev.eta_hat[i]));
        }
        j.xi_abs_jump = std::abs(std::abs(L.xi_hat) - std::abs(ev.xi_hat));
        j.xi_sign_flipped = sgn(L.xi_hat) == -sgn(ev.xi_hat);
        j.fiber_jump = spec.fiber().distance(spec.fiber().wrap(L.z), ev.z);
        for (std::size_t i = 0; i < ev.zeta_hat.size(); ++i)
            j.zeta_jump = std::max(j.zeta_jump, std::abs(L.zeta_hat[i] - ev.zeta_hat[i]));
        rep.max_slow_jump = std::max(rep.max_slow_jump, j.slow_jump);
        rep.max_xi_jump = std::max(rep.max_xi_jump, j.xi_abs_jump);
        if (!(j.slow_jump < jump_tol) || !(j.xi_abs_jump < jump_tol) || !j.xi_sign_flipped) rep.continuous = false;
        rep.jumps.push_back(j);
    }
    return rep;
}

}  // namespace edgeray
