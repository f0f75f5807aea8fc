#include "edgeray/metric.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "edgeray/error.hpp"

namespace edgeray {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double wrap_period(double v, double period) {
    double r = std::fmod(v, period);
    if (r < 0) r += period;
    if (r >= period) r = 0.0;
    return r;
}

double wrapped_diff(double a, double b, double period) {
    double d = wrap_period(a - b, period);
    return std::min(d, period - d);
}

Eigen::Vector3d sphere_embed(std::span<const double> z) {
    return {std::sin(z[0]) * std::cos(z[1]), std::sin(z[0]) * std::sin(z[1]), std::cos(z[0])};
}

}  // namespace

// ---------------------------------------------------------------- topology

FiberTopology FiberTopology::circle(double circumference) {
    if (!(circumference > 0)) throw ConfigError("circle circumference must be positive");
    FiberTopology t;
    t.kind_ = Kind::Circle;
    t.periods_ = {circumference};
    return t;
}

FiberTopology FiberTopology::torus(std::vector<double> periods) {
    if (periods.empty()) throw ConfigError("torus needs at least one period");
    for (double p : periods)
        if (!(p > 0)) throw ConfigError("torus periods must be positive");
    FiberTopology t;
    t.kind_ = Kind::Torus;
    t.periods_ = std::move(periods);
    return t;
}

FiberTopology FiberTopology::sphere() {
    FiberTopology t;
    t.kind_ = Kind::Sphere;
    t.periods_ = {};
    return t;
}

FiberTopology FiberTopology::chart(std::vector<std::pair<double, double>> box) {
    if (box.empty()) throw ConfigError("chart needs one interval per fiber coordinate");
    for (auto [lo, hi] : box)
        if (!(lo < hi)) throw ConfigError("chart intervals must satisfy lo < hi");
    FiberTopology t;
    t.kind_ = Kind::Chart;
    t.periods_ = {};
    t.box_ = std::move(box);
    return t;
}

FiberTopology FiberTopology::default_for(int f) {
    if (f == 1) return circle(kTwoPi);
    return torus(std::vector<double>(static_cast<std::size_t>(f), kTwoPi));
}

int FiberTopology::dimension_hint() const {
    switch (kind_) {
        case Kind::Circle: return 1;
        case Kind::Torus: return static_cast<int>(periods_.size());
        case Kind::Sphere: return 2;
        case Kind::Chart: return static_cast<int>(box_.size());
    }
    return 0;
}

double FiberTopology::distance(std::span<const double> a, std::span<const double> b) const {
    switch (kind_) {
        case Kind::Circle:
        case Kind::Torus: {
            double s = 0;
            for (std::size_t j = 0; j < a.size(); ++j) {
                const double d = wrapped_diff(a[j], b[j], periods_[j]);
                s += d * d;
            }
            return std::sqrt(s);
        }
        case Kind::Sphere: {
            const Eigen::Vector3d pa = sphere_embed(a);
            const Eigen::Vector3d pb = sphere_embed(b);
            return std::atan2(pa.cross(pb).norm(), pa.dot(pb));
        }
        case Kind::Chart: {
            double s = 0;
            for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
            return std::sqrt(s);
        }
    }
    return 0;
}

std::vector<double> FiberTopology::wrap(std::span<const double> z) const {
    std::vector<double> out(z.begin(), z.end());
    switch (kind_) {
        case Kind::Circle:
        case Kind::Torus:
            for (std::size_t j = 0; j < out.size(); ++j) out[j] = wrap_period(out[j], periods_[j]);
            break;
        case Kind::Sphere: {
            double theta = wrap_period(out[0], kTwoPi);
            double phi = out[1];
            if (theta > std::numbers::pi) {
                theta = kTwoPi - theta;
                phi += std::numbers::pi;
            }
            out[0] = theta;
            out[1] = wrap_period(phi, kTwoPi);
            break;
        }
        case Kind::Chart: break;
    }
    return out;
}

bool FiberTopology::in_chart(std::span<const double> z) const {
    switch (kind_) {
        case Kind::Sphere: return std::abs(std::sin(z[0])) >= 1e-3;
        case Kind::Chart:
            for (std::size_t j = 0; j < z.size(); ++j)
                if (z[j] < box_[j].first || z[j] > box_[j].second) return false;
            return true;
        default: return true;
    }
}

std::pair<double, double> FiberTopology::sample_range(int j) const {
    switch (kind_) {
        case Kind::Circle:
        case Kind::Torus: return {0.0, periods_[static_cast<std::size_t>(j)]};
        case Kind::Sphere: return j == 0 ? std::pair{0.0, std::numbers::pi} : std::pair{0.0, kTwoPi};
        case Kind::Chart: return box_[static_cast<std::size_t>(j)];
    }
    return {0.0, 1.0};
}

std::string FiberTopology::to_text() const {
    switch (kind_) {
        case Kind::Circle: return "circle(" + fmt(periods_[0]) + ")";
        case Kind::Torus: {
            std::string s = "torus(";
            for (std::size_t j = 0; j < periods_.size(); ++j) s += (j ? ", " : "") + fmt(periods_[j]);
            return s + ")";
        }
        case Kind::Sphere: return "sphere";
        case Kind::Chart: {
            std::string s = "chart(";
            for (std::size_t j = 0; j < box_.size(); ++j)
                s += (j ? ", [" : "[") + fmt(box_[j].first) + ", " + fmt(box_[j].second) + "]";
            return s + ")";
        }
    }
    return {};
}

FiberTopology FiberTopology::from_entry(const ConfigEntry& entry) {
    const CallValue call = split_call(entry);
    auto numbers = [&] {
        std::vector<double> v;
        for (const ListCell& c : call.args) v.push_back(parse_double(c));
        return v;
    };
    if (call.name == "circle") {
        if (call.args.size() != 1)
            throw ParseError("circle expects one argument (circumference)", entry.value_line, entry.value_column);
        return circle(numbers()[0]);
    }
    if (call.name == "torus") {
        if (call.args.empty())
            throw ParseError("torus expects one period per fiber coordinate", entry.value_line, entry.value_column);
        return torus(numbers());
    }
    if (call.name == "sphere") {
        if (!call.args.empty()) throw ParseError("sphere takes no arguments", entry.value_line, entry.value_column);
        return sphere();
    }
    if (call.name == "chart") {
        std::vector<std::pair<double, double>> box;
        for (const ListCell& c : call.args) {
            const auto cells = split_list(c.text, c.line, c.column);
            if (cells.size() != 2) throw ParseError("chart intervals are [lo, hi]", c.line, c.column);
            box.emplace_back(parse_double(cells[0]), parse_double(cells[1]));
        }
        return chart(std::move(box));
    }
    throw ParseError("unknown identifier '" + call.name + "'", entry.value_line, entry.value_column);
}

// ---------------------------------------------------------------- ExprMatrix

bool ExprMatrix::all_zero() const {
    return std::all_of(cells_.begin(), cells_.end(), [](const CoeffExpr& e) { return e.is_zero(); });
}

bool ExprMatrix::depends_on(int var) const {
    return std::any_of(cells_.begin(), cells_.end(), [var](const CoeffExpr& e) { return e.depends_on(var); });
}

Eigen::MatrixXd ExprMatrix::eval(std::span<const double> vars) const {
    Eigen::MatrixXd m(rows_, cols_);
    for (int i = 0; i < rows_; ++i)
        for (int j = 0; j < cols_; ++j) m(i, j) = (*this)(i, j).eval(vars);
    return m;
}

ExprMatrix ExprMatrix::derivative(int var) const {
    ExprMatrix d(rows_, cols_);
    for (std::size_t i = 0; i < cells_.size(); ++i) d.cells_[i] = cells_[i].derivative(var);
    return d;
}

bool ExprMatrix::structurally_equal(const ExprMatrix& other) const {
    if (rows_ != other.rows_ || cols_ != other.cols_) return false;
    for (std::size_t i = 0; i < cells_.size(); ++i)
        if (!cells_[i].structurally_equal(other.cells_[i])) return false;
    return true;
}

// ---------------------------------------------------------------- spec

namespace {

void require_shape(const ExprMatrix& m, int rows, int cols, const char* name) {
    if (m.rows() != rows || m.cols() != cols)
        throw ConfigError(std::string("dimension mismatch: ") + name + " must be " + std::to_string(rows) + "x" +
                          std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()));
}

ExprMatrix zeros_if_empty(ExprMatrix m, int rows, int cols) {
    if (m.rows() == 0 && m.cols() == 0) return ExprMatrix(rows, cols);
    return m;
}

}  // namespace

EdgeMetricSpec::EdgeMetricSpec(int b, int f, FiberTopology fiber, Blocks blocks)
    : layout_{b, f}, fiber_(std::move(fiber)), blocks_(std::move(blocks)) {
    if (b < 0) throw ConfigError("b must be >= 0");
    if (f < 1) throw ConfigError("f must be >= 1");
    if (fiber_.dimension_hint() != f)
        throw ConfigError("dimension mismatch: fiber topology " + fiber_.to_text() + " does not have dimension " +
                          std::to_string(f));
    blocks_.h = zeros_if_empty(std::move(blocks_.h), b, b);
    blocks_.hprime = zeros_if_empty(std::move(blocks_.hprime), b, b);
    blocks_.kyz = zeros_if_empty(std::move(blocks_.kyz), b, f);
    blocks_.kyy = zeros_if_empty(std::move(blocks_.kyy), b, b);
    require_shape(blocks_.h, b, b, "h");
    require_shape(blocks_.hprime, b, b, "hprime");
    require_shape(blocks_.k, f, f, "k");
    require_shape(blocks_.kyz, b, f, "kyz");
    require_shape(blocks_.kyy, b, b, "kyy");
    for (int j = 0; j < f; ++j)
        if (blocks_.h.depends_on(layout_.z_index(j))) throw ConfigError("h may not depend on the fiber variables");
    const int nv = layout_.size();
    derivs_.reserve(static_cast<std::size_t>(nv));
    for (int v = 0; v < nv; ++v) {
        derivs_.push_back(Blocks{blocks_.h.derivative(v), blocks_.hprime.derivative(v), blocks_.k.derivative(v),
                                 blocks_.kyz.derivative(v), blocks_.kyy.derivative(v)});
    }
}

bool EdgeMetricSpec::is_product_form() const {
    if (!blocks_.hprime.all_zero() || !blocks_.kyz.all_zero() || !blocks_.kyy.all_zero()) return false;
    if (blocks_.h.depends_on(0) || blocks_.k.depends_on(0)) return false;
    for (int i = 0; i < b(); ++i)
        if (blocks_.k.depends_on(layout_.y_index(i))) return false;
    return true;
}

Eigen::MatrixXd EdgeMetricSpec::frame_matrix(std::span<const double> vars) const {
    const int nb = b();
    const int nf = f();
    const double x = vars[0];
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(frame_dim(), frame_dim());
    m(0, 0) = 1.0;
    if (nb > 0) {
        Eigen::MatrixXd base = blocks_.h.eval(vars);
        if (x != 0.0) {
            base += x * blocks_.hprime.eval(vars) + x * x * blocks_.kyy.eval(vars);
            const Eigen::MatrixXd cross = x * blocks_.kyz.eval(vars);
            m.block(1, 1 + nb, nb, nf) = cross;
            m.block(1 + nb, 1, nf, nb) = cross.transpose();
        }
        m.block(1, 1, nb, nb) = base;
    }
    m.block(1 + nb, 1 + nb, nf, nf) = blocks_.k.eval(vars);
    return m;
}

std::vector<Eigen::MatrixXd> EdgeMetricSpec::frame_matrix_derivatives(std::span<const double> vars) const {
    const int nb = b();
    const int nf = f();
    const double x = vars[0];
    std::vector<Eigen::MatrixXd> out;
    out.reserve(derivs_.size());
    for (std::size_t v = 0; v < derivs_.size(); ++v) {
        const Blocks& d = derivs_[v];
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(frame_dim(), frame_dim());
        if (nb > 0) {
            Eigen::MatrixXd base = d.h.eval(vars) + x * d.hprime.eval(vars) + x * x * d.kyy.eval(vars);
            Eigen::MatrixXd cross = x * d.kyz.eval(vars);
            if (v == 0) {
                base += blocks_.hprime.eval(vars) + 2.0 * x * blocks_.kyy.eval(vars);
                cross += blocks_.kyz.eval(vars);
            }
            m.block(1, 1, nb, nb) = base;
            m.block(1, 1 + nb, nb, nf) = cross;
            m.block(1 + nb, 1, nf, nb) = cross.transpose();
        }
        m.block(1 + nb, 1 + nb, nf, nf) = d.k.eval(vars);
        out.push_back(std::move(m));
    }
    return out;
}

Eigen::MatrixXd EdgeMetricSpec::h_at(std::span<const double> vars) const { return blocks_.h.eval(vars); }
Eigen::MatrixXd EdgeMetricSpec::k_at(std::span<const double> vars) const { return blocks_.k.eval(vars); }

std::vector<Eigen::MatrixXd> EdgeMetricSpec::k_derivatives(std::span<const double> vars) const {
    std::vector<Eigen::MatrixXd> out;
    for (const Blocks& d : derivs_) out.push_back(d.k.eval(vars));
    return out;
}

std::vector<Eigen::MatrixXd> EdgeMetricSpec::h_derivatives(std::span<const double> vars) const {
    std::vector<Eigen::MatrixXd> out;
    for (const Blocks& d : derivs_) out.push_back(d.h.eval(vars));
    return out;
}

namespace {

std::string matrix_text(const ExprMatrix& m, const VarLayout& layout) {
    std::string s = "[";
    for (int i = 0; i < m.rows(); ++i) {
        s += i ? ", [" : "[";
        for (int j = 0; j < m.cols(); ++j) s += (j ? ", \"" : "\"") + m(i, j).to_string(layout) + "\"";
        s += "]";
    }
    return s + "]";
}

}  // namespace

std::string EdgeMetricSpec::to_text() const {
    std::string s;
    s += "b = " + std::to_string(b()) + "\n";
    s += "f = " + std::to_string(f()) + "\n";
    s += "fiber = " + fiber_.to_text() + "\n";
    s += "x_max = " + fmt(x_max_) + "\n";
    s += "y_range = [" + fmt(y_range_.first) + ", " + fmt(y_range_.second) + "]\n";
    if (b() > 0) s += "h = " + matrix_text(blocks_.h, layout_) + "\n";
    if (b() > 0 && !blocks_.hprime.all_zero()) s += "hprime = " + matrix_text(blocks_.hprime, layout_) + "\n";
    s += "k = " + matrix_text(blocks_.k, layout_) + "\n";
    if (b() > 0 && !blocks_.kyz.all_zero()) s += "kyz = " + matrix_text(blocks_.kyz, layout_) + "\n";
    if (b() > 0 && !blocks_.kyy.all_zero()) s += "kyy = " + matrix_text(blocks_.kyy, layout_) + "\n";
    return s;
}

bool EdgeMetricSpec::structurally_equal(const EdgeMetricSpec& other) const {
    return b() == other.b() && f() == other.f() && fiber_ == other.fiber_ && x_max_ == other.x_max_ &&
           y_range_ == other.y_range_ && blocks_.h.structurally_equal(other.blocks_.h) &&
           blocks_.hprime.structurally_equal(other.blocks_.hprime) &&
           blocks_.k.structurally_equal(other.blocks_.k) && blocks_.kyz.structurally_equal(other.blocks_.kyz) &&
           blocks_.kyy.structurally_equal(other.blocks_.kyy);
}

// ---------------------------------------------------------------- parsing

bool is_metric_key(std::string_view key) {
    static const std::set<std::string_view> keys{"b", "f", "fiber", "h", "hprime", "k", "kyz", "kyy", "x_max", "y_range"};
    return keys.count(key) != 0;
}

namespace {

ExprMatrix parse_matrix(const ConfigEntry& entry, int rows, int cols, const VarLayout& layout, VarScope scope) {
    const auto cells = split_matrix(entry);
    if (static_cast<int>(cells.size()) != rows)
        throw ConfigError("dimension mismatch: " + entry.key + " must have " + std::to_string(rows) + " rows, got " +
                          std::to_string(cells.size()) + " (line " + std::to_string(entry.line) + ")");
    ExprMatrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        const auto& row = cells[static_cast<std::size_t>(i)];
        if (static_cast<int>(row.size()) != cols)
            throw ConfigError("dimension mismatch: row " + std::to_string(i + 1) + " of " + entry.key + " must have " +
                              std::to_string(cols) + " entries, got " + std::to_string(row.size()) + " (line " +
                              std::to_string(entry.line) + ")");
        for (int j = 0; j < cols; ++j) {
            const ListCell& c = row[static_cast<std::size_t>(j)];
            m(i, j) = parse_expr(c.text, layout, scope, c.line, c.column);
        }
    }
    return m;
}

void check_symmetric(const ExprMatrix& m, const std::string& name, const EdgeMetricSpec& spec) {
    if (m.rows() != m.cols()) return;
    const VarLayout& layout = spec.layout();
    std::mt19937_64 rng(0x5eed);
    for (int s = 0; s < 8; ++s) {
        std::vector<double> vars(static_cast<std::size_t>(layout.size()));
        vars[0] = spec.x_max() * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        for (int i = 0; i < spec.b(); ++i)
            vars[static_cast<std::size_t>(layout.y_index(i))] =
                std::uniform_real_distribution<double>(spec.y_range().first, spec.y_range().second)(rng);
        for (int j = 0; j < spec.f(); ++j) {
            auto [lo, hi] = spec.fiber().sample_range(j);
            vars[static_cast<std::size_t>(layout.z_index(j))] = std::uniform_real_distribution<double>(lo, hi)(rng);
        }
        for (int i = 0; i < m.rows(); ++i)
            for (int j = i + 1; j < m.cols(); ++j) {
                const double a = m(i, j).eval(vars);
                const double c = m(j, i).eval(vars);
                if (std::isfinite(a) && std::isfinite(c) && std::abs(a - c) > 1e-12 * (1.0 + std::abs(a)))
                    throw ConfigError(name + " must be symmetric (entries (" + std::to_string(i + 1) + "," +
                                      std::to_string(j + 1) + ") and (" + std::to_string(j + 1) + "," +
                                      std::to_string(i + 1) + ") differ)");
            }
    }
}

}  // namespace

EdgeMetricSpec metric_from_entries(const std::vector<ConfigEntry>& entries) {
    std::map<std::string, const ConfigEntry*> by_key;
    for (const ConfigEntry& e : entries) {
        if (!is_metric_key(e.key)) continue;
        if (!by_key.emplace(e.key, &e).second)
            throw ParseError("duplicate key '" + e.key + "'", e.line, e.column);
    }
    auto find = [&](const char* key) -> const ConfigEntry* {
        auto it = by_key.find(key);
        return it == by_key.end() ? nullptr : it->second;
    };
    const ConfigEntry* eb = find("b");
    const ConfigEntry* ef = find("f");
    if (!ef) throw ConfigError("missing key 'f'");
    const long b = eb ? parse_int(*eb) : 0;
    const long f = parse_int(*ef);
    if (b < 0 || b > 16) throw ParseError("b must be in [0, 16]", eb->value_line, eb->value_column);
    if (f < 1 || f > 16) throw ParseError("f must be in [1, 16]", ef->value_line, ef->value_column);
    const VarLayout layout{static_cast<int>(b), static_cast<int>(f)};

    FiberTopology fiber = FiberTopology::default_for(layout.f);
    if (const ConfigEntry* e = find("fiber")) fiber = FiberTopology::from_entry(*e);

    EdgeMetricSpec::Blocks blocks;
    const ConfigEntry* ek = find("k");
    if (!ek) throw ConfigError("missing key 'k'");
    blocks.k = parse_matrix(*ek, layout.f, layout.f, layout, VarScope::XYZ);
    if (const ConfigEntry* e = find("h")) {
        blocks.h = parse_matrix(*e, layout.b, layout.b, layout, VarScope::XY);
    } else if (layout.b > 0) {
        throw ConfigError("missing key 'h'");
    }
    if (const ConfigEntry* e = find("hprime")) blocks.hprime = parse_matrix(*e, layout.b, layout.b, layout, VarScope::XYZ);
    if (const ConfigEntry* e = find("kyz")) blocks.kyz = parse_matrix(*e, layout.b, layout.f, layout, VarScope::XYZ);
    if (const ConfigEntry* e = find("kyy")) blocks.kyy = parse_matrix(*e, layout.b, layout.b, layout, VarScope::XYZ);

    EdgeMetricSpec spec(layout.b, layout.f, std::move(fiber), std::move(blocks));
    if (const ConfigEntry* e = find("x_max")) {
        const double v = parse_double(*e);
        if (!(v > 0)) throw ParseError("x_max must be positive", e->value_line, e->value_column);
        spec.set_x_max(v);
    }
    if (const ConfigEntry* e = find("y_range")) {
        const auto cells = split_list(*e);
        if (cells.size() != 2) throw ParseError("y_range is [lo, hi]", e->value_line, e->value_column);
        const double lo = parse_double(cells[0]);
        const double hi = parse_double(cells[1]);
        if (!(lo < hi)) throw ParseError("y_range needs lo < hi", e->value_line, e->value_column);
        spec.set_y_range({lo, hi});
    }
    check_symmetric(spec.blocks().h, "h", spec);
    check_symmetric(spec.blocks().hprime, "hprime", spec);
    check_symmetric(spec.blocks().k, "k", spec);
    check_symmetric(spec.blocks().kyy, "kyy", spec);
    return spec;
}

EdgeMetricSpec parse_metric_spec(std::string_view config_text) {
    const auto entries = parse_entries(config_text);
    for (const ConfigEntry& e : entries)
        if (!is_metric_key(e.key)) throw ParseError("unknown key '" + e.key + "'", e.line, e.column);
    return metric_from_entries(entries);
}

// ---------------------------------------------------------------- evaluation

std::vector<double> pack_vars(double x, std::span<const double> y, std::span<const double> z) {
    std::vector<double> v;
    v.reserve(1 + y.size() + z.size());
    v.push_back(x);
    v.insert(v.end(), y.begin(), y.end());
    v.insert(v.end(), z.begin(), z.end());
    return v;
}

namespace {

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m) {
    if (m.rows() == 0) return m;
    if (!m.allFinite()) throw DegenerateMetric("metric coefficients are not finite at the evaluation point");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0)) throw DegenerateMetric("metric is not positive definite (min eigenvalue " + fmt(lo) + ")");
    if (hi / lo > kDegenerateCondition)
        throw DegenerateMetric("metric condition number " + fmt(hi / lo) + " exceeds threshold");
    if (m.rows() == 1) return Eigen::MatrixXd::Constant(1, 1, 1.0 / m(0, 0));
    Eigen::MatrixXd inv = m.llt().solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
    return 0.5 * (inv + inv.transpose());
}

}  // namespace

Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& m) {
    // The dx row is (1, 0, ..., 0) by construction.
    const int n = static_cast<int>(m.rows());
    Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(n, n);
    inv(0, 0) = 1.0 / m(0, 0);
    const Eigen::MatrixXd rest = m.block(1, 1, n - 1, n - 1);
    inv.block(1, 1, n - 1, n - 1) = spd_inverse(rest);
    return inv;
}

namespace {

// Inverts base and fiber blocks separately when the cross block is exactly
// zero, so that the inverse keeps exact zeros there (always the case at x=0).
Eigen::MatrixXd block_inverse(const Eigen::MatrixXd& m, int b, int f) {
    const int n = 1 + b + f;
    const bool cross_zero = b == 0 || m.block(1, 1 + b, b, f).isZero(0.0);
    if (!cross_zero) return checked_inverse(m);
    Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(n, n);
    inv(0, 0) = 1.0 / m(0, 0);
    if (b > 0) inv.block(1, 1, b, b) = spd_inverse(m.block(1, 1, b, b));
    inv.block(1 + b, 1 + b, f, f) = spd_inverse(m.block(1 + b, 1 + b, f, f));
    // Combined conditioning of the two blocks.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.block(1, 1, n - 1, n - 1), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff() > kDegenerateCondition)
        throw DegenerateMetric("metric condition number exceeds threshold");
    return inv;
}

}  // namespace

Eigen::MatrixXd frame_inverse(const EdgeMetricSpec& spec, std::span<const double> vars) {
    return block_inverse(spec.frame_matrix(vars), spec.b(), spec.f());
}

DualMetricFrame eval_dual_metric(const EdgeMetricSpec& spec, double x, std::span<const double> y,
                                 std::span<const double> z) {
    if (x < 0) throw InvalidInput("eval_dual_metric requires x >= 0");
    if (static_cast<int>(y.size()) != spec.b() || static_cast<int>(z.size()) != spec.f())
        throw InvalidInput("coordinate dimensions do not match the metric");
    const std::vector<double> vars = pack_vars(x, y, z);
    DualMetricFrame out;
    out.b = spec.b();
    out.f = spec.f();
    out.g_inv = frame_inverse(spec, vars);
    return out;
}

// ---------------------------------------------------------------- validation

ValidationReport validate_normal_form(const EdgeMetricSpec& spec, int samples, double tolerance) {
    ValidationReport rep;
    rep.min_eig_h = spec.b() > 0 ? std::numeric_limits<double>::infinity() : 0.0;
    rep.min_eig_k = std::numeric_limits<double>::infinity();
    const VarLayout& layout = spec.layout();
    std::mt19937_64 rng(20060830);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int n = std::max(samples, 1);
    bool nonfinite = false;
    for (int s = 0; s < n; ++s) {
        std::vector<double> vars(static_cast<std::size_t>(layout.size()));
        // Stratified in x over [0, x_max) with x = 0 always included.
        vars[0] = spec.x_max() * (s + (s == 0 ? 0.0 : unit(rng))) / n;
        for (int i = 0; i < spec.b(); ++i)
            vars[static_cast<std::size_t>(layout.y_index(i))] =
                spec.y_range().first + (spec.y_range().second - spec.y_range().first) * unit(rng);
        for (int j = 0; j < spec.f(); ++j) {
            auto [lo, hi] = spec.fiber().sample_range(j);
            if (spec.fiber().kind() == FiberTopology::Kind::Sphere && j == 0) {
                lo = 0.05;
                hi = std::numbers::pi - 0.05;
            }
            vars[static_cast<std::size_t>(layout.z_index(j))] = lo + (hi - lo) * unit(rng);
        }
        if (spec.b() > 0) {
            const Eigen::MatrixXd h = spec.h_at(vars);
            if (!h.allFinite()) {
                nonfinite = true;
            } else {
                const double e = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h, Eigen::EigenvaluesOnly)
                                     .eigenvalues()
                                     .minCoeff();
                if (e < rep.min_eig_h) {
                    rep.min_eig_h = e;
                    rep.worst_h_point = vars;
                }
            }
        }
        const Eigen::MatrixXd k = spec.k_at(vars);
        if (!k.allFinite()) {
            nonfinite = true;
        } else {
            const double e =
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
            if (e < rep.min_eig_k) {
                rep.min_eig_k = e;
                rep.worst_k_point = vars;
            }
        }
    }
    rep.messages.push_back("dx row of g is (1, 0, ..., 0) by construction");
    if (nonfinite) {
        rep.pass = false;
        rep.messages.push_back("coefficients are not finite at some sample points");
    }
    auto point_text = [&](const std::vector<double>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i)
            s += (i ? ", " : "") + layout.name(static_cast<int>(i)) + "=" + fmt(v[i]);
        return s;
    };
    if (spec.b() > 0 && !(rep.min_eig_h > tolerance)) {
        rep.pass = false;
        rep.messages.push_back("base block h is not positive definite (min eigenvalue " + fmt(rep.min_eig_h) +
                               " at " + point_text(rep.worst_h_point) + ")");
    }
    if (!(rep.min_eig_k > tolerance)) {
        rep.pass = false;
        rep.messages.push_back("fiber block k is not positive definite (min eigenvalue " + fmt(rep.min_eig_k) +
                               " at " + point_text(rep.worst_k_point) + ")");
    }
    return rep;
}

}  // namespace edgeray
