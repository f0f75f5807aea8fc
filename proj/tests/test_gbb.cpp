#include <cmath>

#include <doctest.h>

#include "edgeray/error.hpp"
#include "edgeray/gbb.hpp"
#include "support.hpp"

using namespace edgeray;
using testsupport::Gen;
using testsupport::kPi;

namespace {

// Unit-speed incident ray with tau / x = 1 and direction (xi^, eta^).
EdgePhasePoint incoming(double x0, double y0, double z0, double xi_hat, double eta_hat) {
    EdgePhasePoint q;
    q.x = x0;
    q.y = {y0};
    q.z = {z0};
    q.tau = x0;
    q.xi = xi_hat * x0;
    q.eta = {eta_hat * x0};
    q.zeta = {0.0};
    return q;
}

RaySegment run_to_boundary(const EdgeMetricSpec& s, const EdgePhasePoint& q, const FlowSettings& fs = {}) {
    return integrate_interior(s, q, forward_direction(q), fs);
}

BoundaryEvent glancing_event(std::vector<double> y, std::vector<double> eta_hat, int f = 1) {
    BoundaryEvent ev;
    ev.cls = classify_margin(0.0);
    ev.t = 0.0;
    ev.y = std::move(y);
    ev.eta_hat = std::move(eta_hat);
    ev.z.assign(static_cast<std::size_t>(f), 0.3);
    ev.zeta_hat.assign(static_cast<std::size_t>(f), 0.0);
    return ev;
}

}  // namespace

TEST_SUITE("gbb") {

TEST_CASE("branch policy text") {
    CHECK(BranchPolicy::parse("geometric_only").kind == BranchPolicy::Kind::GeometricOnly);
    CHECK(BranchPolicy::parse(" same_fiber_point ").kind == BranchPolicy::Kind::SameFiberPoint);
    const BranchPolicy d = BranchPolicy::parse("diffractive_fan(12)");
    CHECK(d.kind == BranchPolicy::Kind::DiffractiveFan);
    CHECK(d.fan == 12);
    CHECK(BranchPolicy::parse("diffractive_fan").fan == 8);
    CHECK(BranchPolicy::parse(d.to_text()) == d);
    CHECK_THROWS_AS(BranchPolicy::parse("diffractive_fan(0)"), ConfigError);
    CHECK_THROWS_AS(BranchPolicy::parse("diffractive_fan(3x)"), ConfigError);
    CHECK_THROWS_AS(BranchPolicy::parse("diffractive_fan()"), ConfigError);
    CHECK_THROWS_AS(BranchPolicy::parse("fan"), ConfigError);
}

TEST_CASE("hyperbolic event on the flat product") {
    const EdgeMetricSpec s = testsupport::flat_product();
    const RaySegment seg = run_to_boundary(s, incoming(1.0, 0.2, 0.7, 0.6, 0.8));
    REQUIRE(seg.termination == Termination::BoundaryApproach);
    const BoundaryEvent ev = detect_boundary_event(s, seg);
    CHECK(ev.cls.kind == BoundaryClass::Kind::Hyperbolic);
    CHECK(ev.t == doctest::Approx(1.0 / 0.6).epsilon(1e-6));
    CHECK(ev.y[0] == doctest::Approx(0.2 - 0.8 / 0.6).epsilon(1e-6));
    CHECK(ev.xi_hat == doctest::Approx(0.6).epsilon(1e-8));
    CHECK(ev.eta_hat[0] == doctest::Approx(0.8).epsilon(1e-8));
    CHECK(ev.z[0] == doctest::Approx(0.7).epsilon(1e-8));
    CHECK(ev.sgn_tau == 1);
    CHECK(ev.extrapolation_residual < 1e-6);
}

TEST_CASE("normal incidence lands on the launch fiber point") {
    const EdgeMetricSpec s = testsupport::flat_product();
    const BoundaryEvent ev = detect_boundary_event(s, run_to_boundary(s, incoming(0.5, 0.0, 2.0, 1.0, 0.0)));
    CHECK(ev.xi_hat == doctest::Approx(1.0));
    CHECK(ev.z[0] == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(ev.t == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("property: flat events match the straight-line hit") {
    const EdgeMetricSpec s = testsupport::flat_product();
    Gen g(41);
    for (int i = 0; i < 25; ++i) {
        const double x0 = g.uniform(0.2, 1.0);
        const double y0 = g.uniform(-0.5, 0.5);
        const double a = g.uniform(0.15, 0.5 * kPi);
        const double sign = g.coin() ? 1.0 : -1.0;
        EdgePhasePoint q = incoming(x0, y0, g.uniform(0.0, 6.0), std::sin(a), sign * std::cos(a));
        if (g.coin()) {
            // reversed orientation: tau < 0 with xi^ < 0 still approaches the boundary
            q.tau = -q.tau;
            q.xi = -q.xi;
            q.eta[0] = -q.eta[0];
        }
        const BoundaryEvent ev = detect_boundary_event(s, run_to_boundary(s, q));
        const double speed = std::sin(a);
        CHECK(ev.t == doctest::Approx(x0 / speed).epsilon(1e-6));
        CHECK(ev.y[0] == doctest::Approx(y0 - sign * std::cos(a) * x0 / speed).epsilon(1e-6));
        CHECK(std::abs(ev.xi_hat) == doctest::Approx(speed).epsilon(1e-6));
        CHECK(ev.xi_hat * ev.sgn_tau > 0.0);
        CHECK(ev.z[0] == doctest::Approx(q.z[0]).epsilon(1e-8));
    }
}

TEST_CASE("shallow arrival is glancing within the tolerance") {
    const EdgeMetricSpec s = testsupport::flat_product();
    const double eta = 0.99;
    const RaySegment seg = run_to_boundary(s, incoming(0.2, 0.0, 0.0, std::sqrt(1.0 - eta * eta), eta));
    const BoundaryEvent hyp = detect_boundary_event(s, seg);
    CHECK(hyp.cls.kind == BoundaryClass::Kind::Hyperbolic);
    CHECK(hyp.cls.margin == doctest::Approx(1.0 - eta * eta).epsilon(1e-6));
    const BoundaryEvent gl = detect_boundary_event(s, seg, 0.05);
    CHECK(gl.cls.kind == BoundaryClass::Kind::Glancing);
    CHECK(gl.xi_hat == 0.0);
}

TEST_CASE("event detection preconditions") {
    const EdgeMetricSpec s = testsupport::flat_product();
    IntegrationLimits lim;
    lim.t_window = std::make_pair(0.0, 0.1);
    const EdgePhasePoint q = incoming(1.0, 0.0, 0.0, 0.6, 0.8);
    const RaySegment seg = integrate_interior(s, q, forward_direction(q), {}, lim);
    CHECK(seg.termination == Termination::TimeLimit);
    CHECK_THROWS_AS(detect_boundary_event(s, seg), InvalidInput);

    RaySegment tiny = run_to_boundary(s, q);
    tiny.s.resize(2);
    tiny.states.resize(2);
    CHECK_THROWS_AS(extrapolate_to_boundary(tiny, true), IllConditionedEvent);
}

TEST_CASE("hyperbolic branching policies on the unit circle") {
    const EdgeMetricSpec s = testsupport::flat_product();
    const BoundaryEvent ev = detect_boundary_event(s, run_to_boundary(s, incoming(1.0, 0.0, 0.4, 0.6, 0.8)));

    const auto geo = branch_hyperbolic(s, ev, BranchPolicy::parse("geometric_only"));
    REQUIRE(geo.size() == 1);
    CHECK(geo[0].multiplicity == 2);
    CHECK(geo[0].kind == BranchKind::GeometricContinuation);
    CHECK(s.fiber().distance(geo[0].data.z, std::vector<double>{0.4 + kPi}) < 1e-9);

    const auto fan = branch_hyperbolic(s, ev, BranchPolicy::parse("diffractive_fan(8)"));
    REQUIRE(fan.size() == 8);
    int geometric = 0;
    for (const OutgoingLaunch& l : fan) {
        CHECK(l.data.t == ev.t);
        CHECK(l.data.y == ev.y);
        CHECK(l.data.eta_hat == ev.eta_hat);
        CHECK(l.data.sgn_tau == ev.sgn_tau);
        CHECK(l.data.xi_hat == -ev.xi_hat);
        geometric += l.kind == BranchKind::GeometricContinuation;
    }
    CHECK(geometric == 1);  // j = 4 of 8 sits at z + pi
    CHECK(fan[0].data.z[0] == doctest::Approx(0.4));

    const auto same = branch_hyperbolic(s, ev, BranchPolicy::parse("same_fiber_point"));
    REQUIRE(same.size() == 1);
    CHECK(same[0].data.z == ev.z);
    CHECK(same[0].kind == BranchKind::DiffractedContinuation);

    BoundaryEvent g = ev;
    g.cls = classify_margin(0.0);
    CHECK_THROWS_AS(branch_hyperbolic(s, g, BranchPolicy{}), InvalidInput);
}

TEST_CASE("fiber fans") {
    const std::vector<double> z0{1.0};
    const FiberTopology circle = FiberTopology::circle(2.0 * kPi);
    const auto c = fiber_fan(circle, z0, 4);
    REQUIRE(c.size() == 4);
    for (int j = 0; j < 4; ++j)
        CHECK(circle.distance(c[static_cast<std::size_t>(j)], std::vector<double>{1.0 + j * kPi / 2}) < 1e-12);
    CHECK_THROWS_AS(fiber_fan(circle, z0, 0), InvalidInput);

    const EdgeMetricSpec sp = testsupport::sphere_product();
    const auto pts = fiber_fan(sp.fiber(), std::vector<double>{0.5, 0.5}, 100);
    REQUIRE(pts.size() == 100);
    double cz = 0.0;
    for (const auto& p : pts) {
        CHECK(p[0] >= 0.0);
        CHECK(p[0] <= kPi);
        cz += std::cos(p[0]);
    }
    CHECK(std::abs(cz) < 1e-9);  // Fibonacci points balance about the equator
}

TEST_CASE("glancing continuation on a flat base is a straight line") {
    const EdgeMetricSpec s = testsupport::flat_product();
    const GlancingContinuation gc = continue_glancing(s, glancing_event({0.1}, {1.0}), 0.5);
    REQUIRE(gc.trajectory.size() == 33);
    for (const TangentialSample& p : gc.trajectory) {
        CHECK(p.y[0] == doctest::Approx(0.1 - p.t).epsilon(1e-9));
        CHECK(p.eta_hat[0] == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(gc.trajectory.back().t == doctest::Approx(0.5));
    const EdgePhasePoint& q = gc.relaunch;
    CHECK(q.x == FlowSettings{}.eps_launch);
    CHECK(q.tau == doctest::Approx(q.x));
    CHECK(q.xi < 0.0);  // outgoing for tau > 0
    CHECK(std::abs(wave_symbol(s, q)) < 1e-12 * q.tau * q.tau);
}

TEST_CASE("glancing continuation keeps unit speed on a curved base") {
    const EdgeMetricSpec s = testsupport::metric("b = 1; f = 1; h = [[1 + 0.3*y1^2]]; k = [[1]]");
    const double y0 = 0.4;
    const GlancingContinuation gc =
        continue_glancing(s, glancing_event({y0}, {std::sqrt(1.0 + 0.3 * y0 * y0)}), 1.0);
    for (const TangentialSample& p : gc.trajectory) CHECK(eta_norm2_h(s, p.y, p.eta_hat) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("glancing continuation follows great circles on a round base") {
    const EdgeMetricSpec s = testsupport::metric("b = 2; f = 1; h = [[1, 0], [0, sin(y1)^2]]; k = [[1]]");
    const GlancingContinuation gc = continue_glancing(s, glancing_event({kPi / 2, 0.0}, {0.0, 1.0}), 1.0);
    for (const TangentialSample& p : gc.trajectory) {
        CHECK(p.y[0] == doctest::Approx(kPi / 2).epsilon(1e-9));
        CHECK(p.y[1] == doctest::Approx(-p.t).epsilon(1e-9));
    }
    // A tilted start stays on the plane through the origin it spans.
    const double a = 0.5;
    const GlancingContinuation tilt =
        continue_glancing(s, glancing_event({kPi / 2, 0.0}, {std::sin(a), std::cos(a)}), 2.0);
    const Eigen::Vector3d p0(1, 0, 0);
    const Eigen::Vector3d v0(0, -std::cos(a), std::sin(a));
    const Eigen::Vector3d n = p0.cross(v0);
    for (const TangentialSample& p : tilt.trajectory) {
        const Eigen::Vector3d e(std::sin(p.y[0]) * std::cos(p.y[1]), std::sin(p.y[0]) * std::sin(p.y[1]),
                                std::cos(p.y[0]));
        CHECK(std::abs(e.dot(n)) < 1e-8);
    }
}

TEST_CASE("glancing continuation preconditions") {
    const EdgeMetricSpec s = testsupport::flat_product();
    CHECK_THROWS_AS(continue_glancing(s, glancing_event({0.0}, {1.0}), 0.0), InvalidInput);
    const EdgeMetricSpec b0 = testsupport::perturbed_circle(0.1, 0);
    CHECK_THROWS_AS(continue_glancing(b0, glancing_event({}, {}), 0.1), InvalidInput);
}

TEST_CASE("trace on the flat product produces the cone fan") {
    const EdgeMetricSpec s = testsupport::flat_product();
    const GbbPath path = trace_gbb(s, incoming(1.0, 0.0, 0.0, 0.6, 0.8), {0.0, 3.0},
                                   BranchPolicy::parse("diffractive_fan(8)"), FlowSettings{});
    CHECK_FALSE(path.partial);
    REQUIRE(path.events.size() == 1);
    REQUIRE(path.branches.size() == 9);
    const BoundaryEvent& ev = path.events[0];
    CHECK(path.branches[0].kind == BranchKind::Incident);
    CHECK(path.branches[0].event_out == 0);
    const StateLayout L{1, 1};
    for (std::size_t b = 1; b < path.branches.size(); ++b) {
        const GbbBranch& br = path.branches[b];
        CHECK(br.parent == 0);
        CHECK(br.event_in == 0);
        REQUIRE(br.partner.has_value());
        CHECK(br.segment.termination == Termination::TimeLimit);
        for (const Eigen::VectorXd& st : br.segment.states) {
            CHECK(st[L.x()] == doctest::Approx((st[L.t()] - ev.t) * 0.6).epsilon(1e-6));
            CHECK(st[L.z(0)] == doctest::Approx((*br.partner)[0]).epsilon(1e-9));
        }
    }
}

TEST_CASE("a ray that leaves the boundary has no events") {
    const EdgeMetricSpec s = testsupport::flat_product();
    const GbbPath path = trace_gbb(s, incoming(0.5, 0.0, 0.0, -0.6, 0.8), {0.0, 0.5},
                                   BranchPolicy{}, FlowSettings{});
    CHECK(path.events.empty());
    REQUIRE(path.branches.size() == 1);
    CHECK(path.branches[0].segment.termination == Termination::TimeLimit);
}

TEST_CASE("branch budget truncates the path") {
    const EdgeMetricSpec s = testsupport::flat_product();
    GbbOptions opt;
    opt.branch_budget = 3;
    const GbbPath path = trace_gbb(s, incoming(1.0, 0.0, 0.0, 0.6, 0.8), {0.0, 3.0},
                                   BranchPolicy::parse("diffractive_fan(8)"), FlowSettings{}, opt);
    CHECK(path.partial);
    CHECK(path.branches.size() == 3);
    CHECK_FALSE(path.notes.empty());

    opt.branch_budget = 0;
    CHECK_THROWS_AS(trace_gbb(s, incoming(1.0, 0.0, 0.0, 0.6, 0.8), {0.0, 3.0}, BranchPolicy{}, {}, opt),
                    ConfigError);
    CHECK_THROWS_AS(trace_gbb(s, incoming(1.0, 0.0, 0.0, 0.6, 0.8), {1.0, 0.0}, BranchPolicy{}, {}), ConfigError);
}

TEST_CASE("glancing trace continues along the boundary") {
    const EdgeMetricSpec s = testsupport::flat_product();
    const GlancingContinuation gc = continue_glancing(s, glancing_event({0.0}, {1.0}), 0.1);
    // The relaunch point moves back out through x > 0.
    const GbbPath path = trace_gbb(s, gc.relaunch, {0.0, 0.5}, BranchPolicy{}, FlowSettings{});
    REQUIRE_FALSE(path.branches.empty());
    const StateLayout L{1, 1};
    const RaySegment& seg = path.branches[0].segment;
    CHECK(seg.states.back()[L.x()] >= seg.states.front()[L.x()]);
}

TEST_CASE("lipschitz check on a flat fan") {
    const EdgeMetricSpec s = testsupport::flat_product();
    const GbbPath path = trace_gbb(s, incoming(1.0, 0.0, 0.0, 0.6, 0.8), {0.0, 3.0},
                                   BranchPolicy::parse("diffractive_fan(4)"), FlowSettings{});
    const LipschitzReport rep = lipschitz_check(s, path);
    CHECK(rep.finite);
    CHECK(rep.continuous);
    REQUIRE(rep.jumps.size() == 4);
    for (const EventJump& j : rep.jumps) {
        CHECK(j.xi_sign_flipped);
        CHECK(j.slow_jump < 1e-6);
        CHECK(j.xi_abs_jump < 1e-6);
    }
    CHECK(rep.max_constant < 2.0);  // unit speed rays
    CHECK(rep.max_constant > 0.5);

    // Corrupt an event to break continuity.
    GbbPath bad = path;
    bad.events[0].t += 1e-3;
    CHECK_FALSE(lipschitz_check(s, bad).continuous);
}

TEST_CASE("outgoing branches start at their assigned fiber point") {
    const EdgeMetricSpec s = testsupport::perturbed_circle(0.2);
    EdgePhasePoint q0 = incoming(0.5, 0.0, 0.5, 0.9, 0.3);
    testsupport::make_null(s, q0);
    const GbbPath path =
        trace_gbb(s, q0, {0.0, 3.0}, BranchPolicy::parse("diffractive_fan(6)"), FlowSettings{});
    REQUIRE(path.events.size() >= 1);
    int checked = 0;
    for (const GbbBranch& br : path.branches) {
        if (br.event_in != 0) continue;
        const BoundaryLimit L = extrapolate_to_boundary(br.segment, false);
        CHECK(s.fiber().distance(s.fiber().wrap(L.z), *br.partner) < 1e-4);
        CHECK(L.xi_hat == doctest::Approx(-path.events[0].xi_hat).epsilon(1e-5));
        ++checked;
    }
    CHECK(checked == 6);
}

TEST_CASE("branch kind names") {
    CHECK(std::string(to_string(BranchKind::Incident)) == "incident");
    CHECK(std::string(to_string(BranchKind::GlancingContinuation)) == "glancing");
    CHECK(std::string(to_string(BranchKind::GeometricContinuation)) == "geometric");
}

}  // TEST_SUITE
