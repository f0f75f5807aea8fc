#pragma once

#include <complex>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "edgeray/metric.hpp"
#include "edgeray/phase_space.hpp"

namespace edgeray {

struct FlowSettings {
    double rtol = 1e-10;
    double atol = 1e-12;
    double x_stop = 1e-4;
    double h_init = 1e-3;
    double h_max = 1e3;
    long max_steps = 100000;
    double p_drift_max = 1e-6;
    double eps_launch = 1e-3;

    void validate() const;  // throws ConfigError
    bool operator==(const FlowSettings&) const = default;
};

enum class Termination { BoundaryApproach, TimeLimit, ChartExit, StepLimit };
const char* to_string(Termination t);

struct ConservedEntry {
    double p_rel = 0.0;       // p / |tau|^2
    double tau_over_x = 0.0;  // the conserved edge symbol of D_t
    double abs_tau = 0.0;
};

struct RaySegment {
    int b = 0;
    int f = 1;
    int direction = 1;  // sign of the H-flow parameter increment; time runs forward for -sgn(tau)
    std::vector<double> s;
    std::vector<Eigen::VectorXd> states;  // StateLayout order
    std::vector<ConservedEntry> conserved_log;
    Termination termination = Termination::StepLimit;

    std::size_t size() const { return s.size(); }
    EdgePhasePoint point(std::size_t i) const { return EdgePhasePoint::from_state(states[i], b, f); }
    const Eigen::VectorXd& back() const { return states.back(); }
};

// H = -(x^2/2) times the canonical Hamilton field of the wave symbol, written
// in edge coordinates; smooth up to x = 0. Components follow StateLayout.
Eigen::VectorXd hamilton_field(const EdgeMetricSpec& spec, const EdgePhasePoint& q);
void hamilton_field(const EdgeMetricSpec& spec, const double* state, double* out);

// Closed-form field for product metrics dx^2 + h(y) + x^2 k(z); throws
// InvalidInput for metrics that are not of that form.
Eigen::VectorXd product_form_field(const EdgeMetricSpec& spec, const EdgePhasePoint& q);

// sigma H in CosphereLayout coordinates (x, sigma, t, y, z, xi^, eta^, zeta^).
Eigen::VectorXd rescaled_field(const EdgeMetricSpec& spec, const CospherePoint& c);
Eigen::VectorXd rescaled_field(const EdgeMetricSpec& spec, const Eigen::VectorXd& v, int sgn_tau);

struct IntegrationLimits {
    // Stop (TimeLimit) when t leaves [first, second].
    std::optional<std::pair<double, double>> t_window;
    bool boundary_event = true;
};

RaySegment integrate_interior(const EdgeMetricSpec& spec, const EdgePhasePoint& q0, int direction,
                              const FlowSettings& settings, const IntegrationLimits& limits = {});

// Integration parameter direction that moves t forward for this covector.
inline int forward_direction(const EdgePhasePoint& q) { return q.tau > 0 ? -1 : 1; }

struct RadialLinearization {
    Eigen::MatrixXd L;               // Jacobian of sigma H, CosphereLayout
    std::vector<double> eigenvalues;  // real parts, ascending
    double max_imag = 0.0;
    double xi_hat = 0.0;
};

RadialLinearization linearization_at_radial(const EdgeMetricSpec& spec, const CospherePoint& q,
                                            double fd_step = 1e-6);

// Hyperbolic boundary point data (t, y, z, sgn tau, xi^, eta^).
struct BoundaryData {
    double t = 0.0;
    std::vector<double> y;
    std::vector<double> z;
    int sgn_tau = 1;
    double xi_hat = 1.0;
    std::vector<double> eta_hat;
};

enum class Io { Incoming, Outgoing };
const char* to_string(Io io);

// Seed at x = eps_launch on the incoming/outgoing bicharacteristic through a
// hyperbolic boundary point; |tau| = x at the seed (tau/x = sgn tau).
EdgePhasePoint stable_manifold_launch(const EdgeMetricSpec& spec, const BoundaryData& data, Io io,
                                      double eps_launch, const FlowSettings& settings = {});

}  // namespace edgeray
