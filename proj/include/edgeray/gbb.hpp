#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edgeray/boundary.hpp"
#include "edgeray/flow.hpp"

namespace edgeray {

struct BoundaryEvent {
    BoundaryClass cls;
    double t = 0.0;
    std::vector<double> y;
    int sgn_tau = 1;
    double xi_hat = 0.0;
    std::vector<double> eta_hat;
    std::vector<double> z;         // incoming limit fiber point
    std::vector<double> zeta_hat;  // extrapolated; O(x_stop)
    double extrapolation_residual = 0.0;
    int incoming_branch = -1;

    BoundaryData boundary_data() const;
};

struct BranchPolicy {
    enum class Kind { SameFiberPoint, GeometricOnly, DiffractiveFan };
    Kind kind = Kind::DiffractiveFan;
    int fan = 8;

    std::string to_text() const;
    static BranchPolicy parse(const std::string& text);  // throws ConfigError
    bool operator==(const BranchPolicy&) const = default;
};

enum class BranchKind { Incident, GeometricContinuation, DiffractedContinuation, GlancingContinuation };
const char* to_string(BranchKind k);

struct OutgoingLaunch {
    BoundaryData data;
    BranchKind kind = BranchKind::DiffractedContinuation;
    int multiplicity = 1;
};

// Outgoing boundary data of a hyperbolic event: slow data kept, xi^ flipped.
std::vector<OutgoingLaunch> branch_hyperbolic(const EdgeMetricSpec& spec, const BoundaryEvent& ev,
                                              const BranchPolicy& policy,
                                              int n_partner_directions = 0);

// n fiber points: uniform on circles/tori starting at z0, a Fibonacci set on
// the sphere, a grid on chart fibers.
std::vector<std::vector<double>> fiber_fan(const FiberTopology& fiber, std::span<const double> z0, int n);

// Extrapolation to x = 0 of the last (or first) three samples of a segment.
struct BoundaryLimit {
    double t = 0.0;
    std::vector<double> y;
    double xi_hat = 0.0;
    std::vector<double> eta_hat;
    std::vector<double> z;
    std::vector<double> zeta_hat;
    int sgn_tau = 1;
    double residual = 0.0;
};

BoundaryLimit extrapolate_to_boundary(const RaySegment& seg, bool from_end);

inline constexpr double kExtrapolationTol = 1e-6;

BoundaryEvent detect_boundary_event(const EdgeMetricSpec& spec, const RaySegment& seg, double tol_g = kDefaultTolG,
                                    double residual_tol = kExtrapolationTol);

struct TangentialSample {
    double t = 0.0;
    std::vector<double> y;
    std::vector<double> eta_hat;
};

struct GlancingContinuation {
    std::vector<TangentialSample> trajectory;
    EdgePhasePoint relaunch;
};

inline constexpr double kGlancingReentryXi = 1e-6;

// Geodesic flow of h(0, .) at unit cosphere speed for a time interval delta,
// then an interior relaunch at x = eps_launch on the outgoing side.
GlancingContinuation continue_glancing(const EdgeMetricSpec& spec, const BoundaryEvent& ev, double delta,
                                       const FlowSettings& settings = {});

struct GbbBranch {
    int id = 0;
    int parent = -1;
    int event_in = -1;   // event that spawned this branch
    int event_out = -1;  // event at which this branch ends
    BranchKind kind = BranchKind::Incident;
    std::optional<std::vector<double>> partner;  // assigned outgoing fiber point
    RaySegment segment;
    std::vector<TangentialSample> tangential;  // glancing travel preceding the segment
};

struct GbbPath {
    std::vector<GbbBranch> branches;
    std::vector<BoundaryEvent> events;
    bool partial = false;
    std::vector<std::string> notes;
};

struct GbbOptions {
    int branch_budget = 64;
    double glancing_delta = 0.1;
    double tol_g = kDefaultTolG;
    int partner_directions = 0;  // 0: default for the fiber dimension
};

GbbPath trace_gbb(const EdgeMetricSpec& spec, const EdgePhasePoint& q0, std::pair<double, double> t_span,
                  const BranchPolicy& policy, const FlowSettings& settings, const GbbOptions& options = {});

struct EventJump {
    int event = -1;
    int branch = -1;
    double slow_jump = 0.0;     // max over t, y, tau^, eta^
    double xi_abs_jump = 0.0;   // | |xi_out| - |xi_in| |
    bool xi_sign_flipped = true;
    double fiber_jump = 0.0;    // fast variables: permitted
    double zeta_jump = 0.0;
};

struct LipschitzReport {
    double max_constant = 0.0;  // over x, y, eta^ as functions of t
    double max_slow_jump = 0.0;
    double max_xi_jump = 0.0;
    std::vector<EventJump> jumps;
    bool finite = true;
    bool continuous = true;  // slow jumps below tolerance
};

LipschitzReport lipschitz_check(const EdgeMetricSpec& spec, const GbbPath& path, double jump_tol = 1e-6);

}  // namespace edgeray
