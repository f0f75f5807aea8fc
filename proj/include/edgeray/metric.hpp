#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "edgeray/config_text.hpp"
#include "edgeray/expr.hpp"

namespace edgeray {

// Identification of the fiber coordinates z.
//   Circle: f = 1, z periodic with period `periods[0]`.
//   Torus:  every z_j periodic with period `periods[j]`.
//   Sphere: f = 2, z1 colatitude in (0, pi), z2 longitude with period 2*pi.
//   Chart:  no identification; z must stay inside `box`.
class FiberTopology {
public:
    enum class Kind { Circle, Torus, Sphere, Chart };

    FiberTopology() = default;
    static FiberTopology circle(double circumference);
    static FiberTopology torus(std::vector<double> periods);
    static FiberTopology sphere();
    static FiberTopology chart(std::vector<std::pair<double, double>> box);
    static FiberTopology default_for(int f);

    Kind kind() const { return kind_; }
    const std::vector<double>& periods() const { return periods_; }
    const std::vector<std::pair<double, double>>& box() const { return box_; }

    int dimension_hint() const;
    // Distance between two fiber points modulo the identification.
    double distance(std::span<const double> a, std::span<const double> b) const;
    // Canonical representative of a fiber point.
    std::vector<double> wrap(std::span<const double> z) const;
    bool in_chart(std::span<const double> z) const;
    // Sampling range per coordinate (one period, the colatitude range, or the chart box).
    std::pair<double, double> sample_range(int j) const;

    std::string to_text() const;
    static FiberTopology from_entry(const ConfigEntry& entry);

    bool operator==(const FiberTopology& other) const = default;

private:
    Kind kind_ = Kind::Circle;
    std::vector<double> periods_{6.283185307179586};
    std::vector<std::pair<double, double>> box_;
};

// Symmetric matrix of coefficient expressions, row-major.
class ExprMatrix {
public:
    ExprMatrix() = default;
    ExprMatrix(int rows, int cols) : rows_(rows), cols_(cols), cells_(static_cast<std::size_t>(rows * cols)) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    CoeffExpr& operator()(int i, int j) { return cells_[static_cast<std::size_t>(i * cols_ + j)]; }
    const CoeffExpr& operator()(int i, int j) const { return cells_[static_cast<std::size_t>(i * cols_ + j)]; }
    bool all_zero() const;
    bool depends_on(int var) const;
    Eigen::MatrixXd eval(std::span<const double> vars) const;
    ExprMatrix derivative(int var) const;
    bool structurally_equal(const ExprMatrix& other) const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<CoeffExpr> cells_;
};

// Edge metric in normal form
//   g = dx^2 + h(x,y,dy) + x hprime(x,y,z,dy) + x^2 (k(x,y,z,dz) + 2 kyz(dy,dz) + kyy(dy,dy)).
// Every coefficient is differentiated symbolically once per variable on
// construction.
class EdgeMetricSpec {
public:
    struct Blocks {
        ExprMatrix h;       // b x b, depends on (x, y)
        ExprMatrix hprime;  // b x b
        ExprMatrix k;       // f x f
        ExprMatrix kyz;     // b x f
        ExprMatrix kyy;     // b x b
    };

    EdgeMetricSpec(int b, int f, FiberTopology fiber, Blocks blocks);

    int b() const { return layout_.b; }
    int f() const { return layout_.f; }
    int frame_dim() const { return 1 + layout_.b + layout_.f; }
    const VarLayout& layout() const { return layout_; }
    const FiberTopology& fiber() const { return fiber_; }
    const Blocks& blocks() const { return blocks_; }

    double x_max() const { return x_max_; }
    void set_x_max(double x_max) { x_max_ = x_max; }
    std::pair<double, double> y_range() const { return y_range_; }
    void set_y_range(std::pair<double, double> r) { y_range_ = r; }

    // True for dx^2 + h(y,dy) + x^2 k(z,dz): no x dependence, no hprime, no
    // kyz/kyy, h independent of z and k independent of y.
    bool is_product_form() const;

    // Metric matrix M in the frame (x d_x, x d_y, d_z) with the x^2 factored
    // out, i.e. g(e_i, e_j) = x^2 M_ij. Packs the variable vector (x, y, z).
    Eigen::MatrixXd frame_matrix(std::span<const double> vars) const;
    // d M / d var for every variable slot.
    std::vector<Eigen::MatrixXd> frame_matrix_derivatives(std::span<const double> vars) const;

    Eigen::MatrixXd h_at(std::span<const double> vars) const;
    Eigen::MatrixXd k_at(std::span<const double> vars) const;
    std::vector<Eigen::MatrixXd> k_derivatives(std::span<const double> vars) const;
    std::vector<Eigen::MatrixXd> h_derivatives(std::span<const double> vars) const;

    std::string to_text() const;
    bool structurally_equal(const EdgeMetricSpec& other) const;

private:
    VarLayout layout_;
    FiberTopology fiber_;
    Blocks blocks_;
    std::vector<Blocks> derivs_;  // derivs_[v] = d blocks / d var v
    double x_max_ = 1.0;
    std::pair<double, double> y_range_{-1.0, 1.0};
};

// Metric keys recognised by parse_metric_spec / metric_from_entries.
bool is_metric_key(std::string_view key);

EdgeMetricSpec parse_metric_spec(std::string_view config_text);
EdgeMetricSpec metric_from_entries(const std::vector<ConfigEntry>& entries);

// Inverse of the frame matrix at a point; stored entries are O(1) (the x^-2
// factor of the true inverse metric is implicit).
struct DualMetricFrame {
    int b = 0;
    int f = 1;
    Eigen::MatrixXd g_inv;
};

inline constexpr double kDegenerateCondition = 1e12;

DualMetricFrame eval_dual_metric(const EdgeMetricSpec& spec, double x, std::span<const double> y,
                                 std::span<const double> z);

// Inverse of `m` with the degenerate-metric check applied.
Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& m);

// Inverse frame matrix at a packed variable vector; no sign check on x.
Eigen::MatrixXd frame_inverse(const EdgeMetricSpec& spec, std::span<const double> vars);

struct ValidationReport {
    bool pass = true;
    bool dx_row_exact = true;  // structural: the dx row of g is (1, 0, ..., 0)
    double min_eig_h = 0.0;
    double min_eig_k = 0.0;
    std::vector<double> worst_h_point;
    std::vector<double> worst_k_point;
    std::vector<std::string> messages;
};

ValidationReport validate_normal_form(const EdgeMetricSpec& spec, int samples, double tolerance = 1e-12);

// Packs (x, y, z) into the variable vector used by coefficient expressions.
std::vector<double> pack_vars(double x, std::span<const double> y, std::span<const double> z);

}  // namespace edgeray
