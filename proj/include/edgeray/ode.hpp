#pragma once

#include <functional>
#include <vector>

namespace edgeray {

using OdeState = std::vector<double>;
using OdeRhs = std::function<void(const OdeState& y, OdeState& dydt, double s)>;

// Dormand-Prince 5(4) single steps with a Hairer-style error norm, on top of
// the odeint tableau. Callers own the step loop so that they can localize
// events by re-stepping from a step start.
class Dopri5 {
public:
    Dopri5(double rtol, double atol) : rtol_(rtol), atol_(atol) {}

    struct Step {
        OdeState y;
        OdeState dydt;
        double err = 0.0;  // scaled max-norm, accept when <= 1
    };

    Step step(const OdeRhs& rhs, const OdeState& y, const OdeState& dydt, double s, double h) const;
    // Step size proposal after a step with scaled error `err`.
    static double next_h(double h, double err);

    double rtol() const { return rtol_; }
    double atol() const { return atol_; }

private:
    double rtol_;
    double atol_;
};

struct IntegrateResult {
    OdeState y;
    int steps = 0;
};

// Adaptive integration from s0 to s1 (either direction) landing exactly on s1.
IntegrateResult integrate_to(const OdeRhs& rhs, OdeState y, double s0, double s1, double rtol, double atol,
                             double h_init, int max_steps = 200000);

// Same contract with an extrapolation (Bulirsch-Stoer) stepper; much cheaper
// at tight tolerances on smooth right-hand sides.
IntegrateResult integrate_smooth(const OdeRhs& rhs, OdeState y, double s0, double s1, double rtol, double atol,
                                 double h_init, int max_steps = 200000);

}  // namespace edgeray
