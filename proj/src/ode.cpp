#include "edgeray/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/numeric/odeint/integrate/integrate_adaptive.hpp>
#include <boost/numeric/odeint/stepper/bulirsch_stoer.hpp>
#include <boost/numeric/odeint/stepper/runge_kutta_dopri5.hpp>

#include "edgeray/error.hpp"

namespace edgeray {

Dopri5::Step Dopri5::step(const OdeRhs& rhs, const OdeState& y, const OdeState& dydt, double s, double h) const {
    boost::numeric::odeint::runge_kutta_dopri5<OdeState> stepper;
    Step out;
    out.y.resize(y.size());
    out.dydt.resize(y.size());
    OdeState xerr(y.size());
    auto sys = [&rhs](const OdeState& a, OdeState& da, double t) { rhs(a, da, t); };
    stepper.do_step(sys, y, dydt, s, out.y, out.dydt, h, xerr);
    double e = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double sc = atol_ + rtol_ * std::max(std::abs(y[i]), std::abs(out.y[i]));
        e = std::max(e, std::abs(xerr[i]) / sc);
    }
    out.err = std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
    return out;
}

double Dopri5::next_h(double h, double err) {
    if (!std::isfinite(err)) return h * 0.2;
    if (err == 0.0) return h * 5.0;
    const double fac = 0.9 * std::pow(err, -0.2);
    return h * std::clamp(fac, 0.2, 5.0);
}

IntegrateResult integrate_to(const OdeRhs& rhs, OdeState y, double s0, double s1, double rtol, double atol,
                             double h_init, int max_steps) {
    IntegrateResult res;
    if (s1 == s0) {
        res.y = std::move(y);
        return res;
    }
    const Dopri5 dp(rtol, atol);
    const double sign = s1 > s0 ? 1.0 : -1.0;
    double s = s0;
    double h = sign * std::min(std::abs(h_init), std::abs(s1 - s0));
    OdeState dydt(y.size());
    rhs(y, dydt, s);
    int attempts = 0;
    while (sign * (s1 - s) > 0) {
        if (++attempts > max_steps) throw IntegrationDiverged("step limit reached in fixed-interval integration");
        bool last = false;
        if (sign * (s + h - s1) >= 0) {
            h = s1 - s;
            last = true;
        }
        Dopri5::Step st = dp.step(rhs, y, dydt, s, h);
        if (st.err <= 1.0) {
            s = last ? s1 : s + h;
            y = std::move(st.y);
            dydt = std::move(st.dydt);
            ++res.steps;
            if (last) break;
        }
        h = Dopri5::next_h(h, st.err);
        if (std::abs(h) < 1e-15 * std::max(1.0, std::abs(s)))
            throw IntegrationDiverged("step size underflow in fixed-interval integration");
    }
    res.y = std::move(y);
    return res;
}

IntegrateResult integrate_smooth(const OdeRhs& rhs, OdeState y, double s0, double s1, double rtol, double atol,
                                 double h_init, int max_steps) {
    IntegrateResult res;
    if (s1 != s0) {
        namespace odeint = boost::numeric::odeint;
        odeint::bulirsch_stoer<OdeState> stepper(atol, rtol);
        auto sys = [&rhs](const OdeState& a, OdeState& da, double t) { rhs(a, da, t); };
        const double h = (s1 > s0 ? 1.0 : -1.0) * std::min(std::abs(h_init), std::abs(s1 - s0));
        int calls = 0;
        auto obs = [&](const OdeState&, double) {
            if (++calls > max_steps) throw IntegrationDiverged("step limit reached in smooth integration");
        };
        res.steps = static_cast<int>(odeint::integrate_adaptive(stepper, sys, y, s0, s1, h, obs));
    }
    res.y = std::move(y);
    return res;
}

}  // namespace edgeray
