#pragma once

#include <vector>

#include "edgeray/metric.hpp"
#include "edgeray/phase_space.hpp"

namespace edgeray {

struct FiberState {
    std::vector<double> y;
    std::vector<double> z;
    std::vector<double> v;  // unit for k(0,y,z)
    double speed = 1.0;
};

// Constants of the closed-form flow inside x = 0:
//   xi = |zeta| tan(|zeta| s + C), tau = A sec(|zeta| s + C), eta = B sec(|zeta| s + C).
struct BoundaryFlowState {
    double s = 0.0;
    double A = 0.0;
    std::vector<double> B;
    double C = 0.0;
    double zeta_norm = 0.0;  // |zeta| measured with K = k^-1
    FiberState fiber;
};

BoundaryFlowState boundary_flow_constants(const EdgeMetricSpec& spec, const EdgePhasePoint& q0);
// Open s-interval on which the covector stays finite.
std::pair<double, double> boundary_flow_interval(const BoundaryFlowState& st);

EdgePhasePoint boundary_flow(const EdgeMetricSpec& spec, const EdgePhasePoint& q0, double s);

// Geodesic of k(0, y, .) of signed arc length L.
FiberState fiber_geodesic(const EdgeMetricSpec& spec, std::span<const double> y, std::span<const double> z0,
                          std::span<const double> v0, double length);

// Limit of z along the boundary flow toward the end where xi -> sgn(xi) inf.
std::vector<double> fiber_limit_point(const EdgeMetricSpec& spec, const EdgePhasePoint& q);

struct Partner {
    std::vector<double> z;
    int multiplicity = 1;
};

inline constexpr double kPartnerDedupTol = 1e-6;

// Default direction count: 2 for f = 1, 64 otherwise.
int default_partner_directions(int f);

// Unit initial directions (w.r.t. k(0,y,z)) used by geometric_partners.
std::vector<std::vector<double>> fiber_directions(const EdgeMetricSpec& spec, std::span<const double> y,
                                                  std::span<const double> z, int n_directions);

std::vector<Partner> geometric_partners(const EdgeMetricSpec& spec, std::span<const double> y,
                                        std::span<const double> z, int n_directions,
                                        double dedup_tol = kPartnerDedupTol);

// Smallest fiber distance from z' to an endpoint of a length-pi geodesic from z.
// Resolved to the integrator tolerance below about 1e-2; larger values are
// coarse upper estimates.
double geometric_miss_distance(const EdgeMetricSpec& spec, std::span<const double> y, std::span<const double> z,
                               std::span<const double> z_other);

bool is_geometrically_related(const EdgeMetricSpec& spec, std::span<const double> y, std::span<const double> z,
                              std::span<const double> z_other, double tol = 1e-6);

}  // namespace edgeray
