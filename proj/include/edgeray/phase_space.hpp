#pragma once

#include <vector>

#include <Eigen/Dense>

#include "edgeray/metric.hpp"

namespace edgeray {

// Covector tau dt/x + xi dx/x + eta.dy/x + zeta.dz at (t, x, y, z).
struct EdgePhasePoint {
    double t = 0.0;
    double x = 0.0;
    std::vector<double> y;
    std::vector<double> z;
    double tau = 0.0;
    double xi = 0.0;
    std::vector<double> eta;
    std::vector<double> zeta;

    int b() const { return static_cast<int>(y.size()); }
    int f() const { return static_cast<int>(z.size()); }

    // Flat state (t, x, y.., z.., tau, xi, eta.., zeta..) of length 2(2+b+f).
    Eigen::VectorXd to_state() const;
    static EdgePhasePoint from_state(const Eigen::VectorXd& s, int b, int f);
    // Frame covector (xi, eta.., zeta..).
    Eigen::VectorXd frame_covector() const;
};

// Index helpers for the flat state.
struct StateLayout {
    int b = 0;
    int f = 1;
    int size() const { return 2 * (2 + b + f); }
    int t() const { return 0; }
    int x() const { return 1; }
    int y(int i) const { return 2 + i; }
    int z(int j) const { return 2 + b + j; }
    int tau() const { return 2 + b + f; }
    int xi() const { return 3 + b + f; }
    int eta(int i) const { return 4 + b + f + i; }
    int zeta(int j) const { return 4 + 2 * b + f + j; }
};

struct CospherePoint {
    double t = 0.0;
    double x = 0.0;
    std::vector<double> y;
    std::vector<double> z;
    int sgn_tau = 1;
    double xi_hat = 0.0;
    std::vector<double> eta_hat;
    std::vector<double> zeta_hat;
    double sigma = 0.0;  // 1/|tau|

    int b() const { return static_cast<int>(y.size()); }
    int f() const { return static_cast<int>(z.size()); }
};

// Coordinates (x, sigma, t, y.., z.., xi_hat, eta_hat.., zeta_hat..) of
// length 4 + 2b + 2f, the order used by the rescaled field.
struct CosphereLayout {
    int b = 0;
    int f = 1;
    int size() const { return 4 + 2 * b + 2 * f; }
    int x() const { return 0; }
    int sigma() const { return 1; }
    int t() const { return 2; }
    int y(int i) const { return 3 + i; }
    int z(int j) const { return 3 + b + j; }
    int xi() const { return 3 + b + f; }
    int eta(int i) const { return 4 + b + f + i; }
    int zeta(int j) const { return 4 + 2 * b + f + j; }
};

Eigen::VectorXd to_cosphere_vector(const CospherePoint& c);
CospherePoint from_cosphere_vector(const Eigen::VectorXd& v, int b, int f, int sgn_tau);

struct CompressedPoint {
    double x = 0.0;
    double t = 0.0;
    std::vector<double> y;
    std::vector<double> z;  // empty when fiber_quotient
    double xi_b = 0.0;
    double tau = 0.0;
    std::vector<double> eta;
    std::vector<double> zeta_b;
    bool fiber_quotient = false;
};

struct BoundaryClass {
    enum class Kind { Elliptic, Glancing, Hyperbolic };
    Kind kind = Kind::Hyperbolic;
    double margin = 0.0;
};

const char* to_string(BoundaryClass::Kind kind);

inline constexpr double kDefaultTolG = 1e-9;

// p = tau^2 - eps^T G_inv eps with eps = (xi, eta, zeta).
double wave_symbol(const EdgeMetricSpec& spec, const EdgePhasePoint& q);
// Same symbol on the cosphere: 1 - eps_hat^T G_inv eps_hat = sigma^2 p.
double cosphere_symbol(const EdgeMetricSpec& spec, const CospherePoint& c);

CompressedPoint compress(const EdgePhasePoint& q);

CospherePoint normalize_cosphere(const EdgePhasePoint& q);
EdgePhasePoint denormalize(const CospherePoint& c);

// |eta|^2 measured with the dual base metric h(0,y)^-1.
double eta_norm2_h(const EdgeMetricSpec& spec, std::span<const double> y, std::span<const double> eta);
// |zeta|^2 measured with k(x,y,z)^-1.
double zeta_norm2_k(const EdgeMetricSpec& spec, double x, std::span<const double> y, std::span<const double> z,
                    std::span<const double> zeta);

BoundaryClass classify_boundary(const EdgeMetricSpec& spec, const CospherePoint& q, double tol_g = kDefaultTolG);
BoundaryClass classify_margin(double margin, double tol_g = kDefaultTolG);

bool radial_point_test(const EdgeMetricSpec& spec, const CospherePoint& q, double tol);

}  // namespace edgeray
