#include <cmath>

#include <doctest.h>

#include "edgeray/boundary.hpp"
#include "edgeray/error.hpp"
#include "edgeray/ode.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace edgeray;
using testsupport::Gen;
using testsupport::kPi;

namespace {

EdgePhasePoint boundary_point(const EdgeMetricSpec& s, std::vector<double> z, std::vector<double> zeta, double xi,
                              double tau = 2.0) {
    EdgePhasePoint q;
    q.x = 0.0;
    q.y.assign(static_cast<std::size_t>(s.b()), 0.1);
    q.z = std::move(z);
    q.tau = tau;
    q.xi = xi;
    q.eta.assign(static_cast<std::size_t>(s.b()), 0.3);
    q.zeta = std::move(zeta);
    return q;
}

using oracles::wrap_2pi;

}  // namespace

TEST_SUITE("boundary") {

TEST_CASE("closed-form boundary flow") {
    const EdgeMetricSpec s = testsupport::flat_product();
    const EdgePhasePoint q0 = boundary_point(s, {0.0}, {1.0}, 0.0);
    const BoundaryFlowState st = boundary_flow_constants(s, q0);
    CHECK(st.C == 0.0);
    CHECK(st.zeta_norm == 1.0);
    CHECK(st.A == 2.0);
    const EdgePhasePoint q = boundary_flow(s, q0, kPi / 4);
    CHECK(q.xi == doctest::Approx(1.0));
    CHECK(q.tau == doctest::Approx(2.0 * std::sqrt(2.0)));
    CHECK(q.eta[0] / q.tau == doctest::Approx(q0.eta[0] / q0.tau));
    CHECK(q.z[0] == doctest::Approx(kPi / 4));
    CHECK(q.x == 0.0);

    const auto [lo, hi] = boundary_flow_interval(st);
    CHECK(lo == doctest::Approx(-kPi / 2));
    CHECK(hi == doctest::Approx(kPi / 2));
    CHECK_THROWS_AS(boundary_flow(s, q0, 2.0), FlowEscaped);
    CHECK_THROWS_AS(boundary_flow(s, boundary_point(s, {0.0}, {0.0}, 1.0), 0.1), InvalidInput);
}

TEST_CASE("boundary flow initial constants reproduce the start") {
    const EdgeMetricSpec s = testsupport::perturbed_circle();
    Gen g(41);
    for (int i = 0; i < 30; ++i) {
        const EdgePhasePoint q0 = boundary_point(s, g.vec(1, 0, 6), {g.uniform(0.2, 2) * (g.coin() ? 1 : -1)},
                                                 g.uniform(-2, 2), g.uniform(-2, 2));
        const EdgePhasePoint q = boundary_flow(s, q0, 0.0);
        CHECK(testsupport::max_abs_diff(q.to_state(), q0.to_state()) < 1e-12);
    }
}

TEST_CASE("limit points of the unit-circle flow are pi apart") {
    const EdgeMetricSpec s = testsupport::flat_product();
    EdgePhasePoint q = boundary_point(s, {0.0}, {1.0}, 1e-300);
    const double plus = fiber_limit_point(s, q)[0];
    q.xi = -1e-300;
    const double minus = fiber_limit_point(s, q)[0];
    CHECK(s.fiber().distance(std::vector<double>{plus}, std::vector<double>{minus}) == doctest::Approx(kPi));
}

TEST_CASE("property: boundary flow matches the re-integrated Hamilton field") {
    const EdgeMetricSpec specs[] = {testsupport::perturbed_circle(), testsupport::sphere_product()};
    Gen g(42);
    for (const EdgeMetricSpec& s : specs) {
        const int n = StateLayout{s.b(), s.f()}.size();
        for (int i = 0; i < 5; ++i) {
            std::vector<double> z = g.vec(s.f(), 0.8, 2.2);
            EdgePhasePoint q0 = boundary_point(s, z, g.vec(s.f(), -1, 1), g.uniform(-0.5, 0.5));
            const BoundaryFlowState st = boundary_flow_constants(s, q0);
            const auto [lo, hi] = boundary_flow_interval(st);
            const double s1 = 0.6 * hi, s0 = 0.6 * lo;
            const OdeRhs rhs = [&](const OdeState& y, OdeState& dy, double) {
                hamilton_field(s, y.data(), dy.data());
            };
            for (double send : {s0, s1}) {
                const Eigen::VectorXd y0 = q0.to_state();
                const IntegrateResult r = integrate_smooth(rhs, OdeState(y0.data(), y0.data() + n), 0.0, send,
                                                           1e-12, 1e-14, 1e-3);
                EdgePhasePoint num = EdgePhasePoint::from_state(Eigen::Map<const Eigen::VectorXd>(r.y.data(), n),
                                                                s.b(), s.f());
                const EdgePhasePoint cf = boundary_flow(s, q0, send);
                num.z = s.fiber().wrap(num.z);
                CHECK(num.x == 0.0);
                CHECK(num.xi == doctest::Approx(cf.xi).epsilon(1e-8));
                CHECK(num.tau == doctest::Approx(cf.tau).epsilon(1e-8));
                CHECK(num.eta[0] == doctest::Approx(cf.eta[0]).epsilon(1e-8));
                CHECK(s.fiber().distance(num.z, cf.z) < 1e-8);
                const double zn = std::sqrt(zeta_norm2_k(s, 0.0, num.y, num.z, num.zeta));
                CHECK(zn == doctest::Approx(st.zeta_norm).epsilon(1e-8));
            }
        }
    }
}

TEST_CASE("property: xi increases along the boundary flow") {
    const EdgeMetricSpec s = testsupport::perturbed_circle();
    Gen g(43);
    for (int i = 0; i < 30; ++i) {
        const EdgePhasePoint q0 = boundary_point(s, g.vec(1, 0, 6), {g.uniform(0.2, 2)}, g.uniform(-2, 2));
        const auto [lo, hi] = boundary_flow_interval(boundary_flow_constants(s, q0));
        double prev = -1e300;
        for (int k = 1; k < 20; ++k) {
            const double par = lo + (hi - lo) * k / 20.0;
            const EdgePhasePoint q = boundary_flow(s, q0, par);
            CHECK(q.xi > prev);
            prev = q.xi;
        }
    }
}

TEST_CASE("fiber geodesics on circles") {
    const EdgeMetricSpec unit = testsupport::flat_product();
    const std::vector<double> y{0.0}, z0{0.0}, v1{1.0};
    CHECK(fiber_geodesic(unit, y, z0, v1, kPi).z[0] == doctest::Approx(kPi).epsilon(1e-12));

    for (double rho : {0.5, 2.0, 3.0}) {
        const EdgeMetricSpec s =
            testsupport::metric("b = 1; f = 1; h = [[1]]; k = [[" + std::to_string(rho * rho) + "]]");
        const std::vector<double> v{1.0 / rho};
        const FiberState fs = fiber_geodesic(s, y, z0, v, kPi);
        CHECK(fs.z[0] == doctest::Approx(wrap_2pi(kPi / rho)).epsilon(1e-10));
    }
    const std::vector<double> bad{2.0};
    CHECK_THROWS_AS(fiber_geodesic(unit, y, z0, bad, 1.0), InvalidInput);
}

TEST_CASE("property: geodesics keep unit speed") {
    const EdgeMetricSpec s = testsupport::sphere_product();
    Gen g(44);
    const std::vector<double> y{0.0};
    for (int i = 0; i < 20; ++i) {
        const std::vector<double> z{g.uniform(0.5, 2.6), g.uniform(0, 6)};
        const std::vector<std::vector<double>> dirs = fiber_directions(s, y, z, 8);
        const std::vector<double>& v = dirs[static_cast<std::size_t>(g.integer(0, 7))];
        const FiberState fs = fiber_geodesic(s, y, z, v, 10.0);
        const Eigen::MatrixXd k = s.k_at(pack_vars(0.0, y, fs.z));
        const Eigen::Map<const Eigen::VectorXd> w(fs.v.data(), 2);
        CHECK(std::sqrt(w.dot(k * w)) == doctest::Approx(1.0).epsilon(1e-10));
    }
    // A great circle through the equator returns after 2 pi.
    const std::vector<double> eq{kPi / 2, 0.0}, east{0.0, 1.0};
    const FiberState loop = fiber_geodesic(s, y, eq, east, 2 * kPi);
    CHECK(s.fiber().distance(loop.z, eq) < 1e-9);
}

TEST_CASE("fiber limit points") {
    const EdgeMetricSpec s = testsupport::flat_product();
    CHECK(fiber_limit_point(s, boundary_point(s, {0.4}, {0.0}, 1.0))[0] == 0.4);
    CHECK_THROWS_AS(fiber_limit_point(s, boundary_point(s, {0.4}, {0.0}, 0.0)), InvalidInput);
    // xi = 1, |zeta| = 1: arc length pi/4.
    CHECK(fiber_limit_point(s, boundary_point(s, {0.0}, {1.0}, 1.0))[0] == doctest::Approx(kPi / 4));
    CHECK(fiber_limit_point(s, boundary_point(s, {0.0}, {1.0}, -1.0))[0] == doctest::Approx(wrap_2pi(-kPi / 4)));
    EdgePhasePoint inner = boundary_point(s, {0.0}, {1.0}, 1.0);
    inner.x = 0.1;
    CHECK_THROWS_AS(fiber_limit_point(s, inner), InvalidInput);
}

// The limit is taken toward the end where xi -> sgn(xi) inf, so it is
// invariant on each half of an orbit where xi keeps its sign.
TEST_CASE("property: the fiber limit is invariant along the flow") {
    const EdgeMetricSpec specs[] = {testsupport::perturbed_circle(), testsupport::sphere_product()};
    Gen g(45);
    for (const EdgeMetricSpec& s : specs) {
        for (int i = 0; i < 10; ++i) {
            const EdgePhasePoint q0 =
                boundary_point(s, g.vec(s.f(), 1.0, 2.0), g.vec(s.f(), -1, 1), g.uniform(0.1, 1.5));
            const std::vector<double> z_inf = fiber_limit_point(s, q0);
            const auto [lo, hi] = boundary_flow_interval(boundary_flow_constants(s, q0));
            for (double frac : {0.05, 0.2, 0.5, 0.8, 0.95}) {
                const EdgePhasePoint q = boundary_flow(s, q0, lo + frac * (hi - lo));
                if (!(q.xi * q0.xi > 0.0)) continue;
                CHECK(s.fiber().distance(fiber_limit_point(s, q), z_inf) < 1e-8);
            }
        }
    }
}

TEST_CASE("geometric partners") {
    const std::vector<double> y{0.0}, z0{0.0};
    {
        const auto p = geometric_partners(testsupport::flat_product(), y, z0, 2);
        REQUIRE(p.size() == 1);
        CHECK(p[0].z[0] == doctest::Approx(kPi).epsilon(1e-12));
        CHECK(p[0].multiplicity == 2);
    }
    {
        const EdgeMetricSpec s = testsupport::metric("b = 1; f = 1; fiber = circle(5); h = [[1]]; k = [[1]]");
        auto p = geometric_partners(s, y, z0, 2);
        REQUIRE(p.size() == 2);
        std::vector<double> zs{p[0].z[0], p[1].z[0]};
        std::sort(zs.begin(), zs.end());
        CHECK(zs[0] == doctest::Approx(5.0 - kPi).epsilon(1e-10));
        CHECK(zs[1] == doctest::Approx(kPi).epsilon(1e-10));
    }
    {
        const EdgeMetricSpec s = testsupport::sphere_product();
        const std::vector<double> z{1.1, 0.4};
        const auto p = geometric_partners(s, y, z, 64);
        REQUIRE(p.size() == 1);
        CHECK(p[0].multiplicity == 64);
        const std::vector<double> antipode{kPi - 1.1, 0.4 + kPi};
        CHECK(s.fiber().distance(p[0].z, antipode) < 1e-8);
    }
    CHECK_THROWS_AS(geometric_partners(testsupport::flat_product(), y, z0, 0), InvalidInput);
}

TEST_CASE("property: the geometric relation is symmetric") {
    const EdgeMetricSpec s = testsupport::perturbed_circle();
    Gen g(46);
    const std::vector<double> y{0.0};
    for (int i = 0; i < 20; ++i) {
        const std::vector<double> z{g.uniform(0, 2 * kPi)};
        for (const Partner& p : geometric_partners(s, y, z, 2)) {
            CHECK(is_geometrically_related(s, y, p.z, z, 1e-6));
            bool back = false;
            for (const Partner& r : geometric_partners(s, y, p.z, 2)) back = back || s.fiber().distance(r.z, z) < 1e-6;
            CHECK(back);
        }
    }
}

TEST_CASE("geometric relation on the unit circle") {
    const EdgeMetricSpec s = testsupport::flat_product();
    const std::vector<double> y{0.0}, z{0.0}, a{kPi}, b{kPi / 2};
    CHECK(is_geometrically_related(s, y, z, a));
    CHECK_FALSE(is_geometrically_related(s, y, z, b));
    CHECK(geometric_miss_distance(s, y, z, a) < 1e-12);
}

TEST_CASE("property: geometric relation agrees with arc-length quadrature") {
    const EdgeMetricSpec s = testsupport::perturbed_circle();
    auto partner = [](double z) { return oracles::perturbed_circle_partner(0.1, z); };
    Gen g(47);
    const std::vector<double> y{0.0};
    int disagreements = 0;
    for (int i = 0; i < 60; ++i) {
        const double z = g.uniform(0, 2 * kPi);
        double zp = 0;
        const int kind = i % 3;
        if (kind == 0) zp = partner(z);
        if (kind == 1) zp = wrap_2pi(partner(z) + (g.coin() ? 1 : -1) * g.uniform(1e-4, 1e-2));
        if (kind == 2) zp = g.uniform(0, 2 * kPi);
        const double d = s.fiber().distance(std::vector<double>{zp}, std::vector<double>{partner(z)});
        const bool oracle = d <= 1e-6;
        const bool got = is_geometrically_related(s, y, std::vector<double>{z}, std::vector<double>{zp}, 1e-6);
        disagreements += oracle != got;
    }
    CHECK(disagreements == 0);
}

TEST_CASE("fiber directions are unit for k") {
    const EdgeMetricSpec s = testsupport::sphere_product();
    const std::vector<double> y{0.0}, z{0.7, 1.0};
    const auto dirs = fiber_directions(s, y, z, 16);
    CHECK(dirs.size() == 16);
    const Eigen::MatrixXd k = s.k_at(pack_vars(0.0, y, z));
    for (const auto& d : dirs) {
        const Eigen::Map<const Eigen::VectorXd> w(d.data(), 2);
        CHECK(w.dot(k * w) == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(default_partner_directions(1) == 2);
    CHECK(default_partner_directions(2) == 64);
}

}  // TEST_SUITE
