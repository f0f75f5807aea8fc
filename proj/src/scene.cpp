#include "edgeray/scene.hpp"

#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <boost/math/special_functions/erf.hpp>
#include <json.hpp>

#include "edgeray/config_text.hpp"
#include "edgeray/error.hpp"

namespace edgeray {

namespace {

using ojson = nlohmann::ordered_json;

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string list_text(const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
    return s + "]";
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
}

std::vector<double> parse_vector(const ConfigEntry& e) {
    std::vector<double> out;
    for (const ListCell& c : split_list(e)) out.push_back(parse_double(c));
    return out;
}

ConfigError at(const ConfigEntry& e, const std::string& msg) {
    return ConfigError(msg + " (line " + std::to_string(e.line) + ")");
}

bool parse_bool(const ConfigEntry& e) {
    const std::string v = unquote(e.value);
    if (v == "true") return true;
    if (v == "false") return false;
    throw at(e, "expected true or false for '" + e.key + "'");
}

// Point on S^{d-1} from the j-th Halton point, shifted by `shift` mod 1.
Eigen::VectorXd sphere_point(int j, int d, const std::vector<double>& shift) {
    static constexpr unsigned primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61};
    Eigen::VectorXd u(d);
    for (int c = 0; c < d; ++c) {
        double r = 0.0, f = 1.0 / primes[c % 18];
        for (unsigned long i = static_cast<unsigned long>(j + 1); i > 0; i /= primes[c % 18], f /= primes[c % 18])
            r += f * static_cast<double>(i % primes[c % 18]);
        double h = r + shift[static_cast<std::size_t>(c)];
        h -= std::floor(h);
        h = std::clamp(h, 1e-12, 1.0 - 1e-12);
        u[c] = std::sqrt(2.0) * boost::math::erf_inv(2.0 * h - 1.0);
    }
    return u.normalized();
}

// Null covector tau = 1 with xi = xi_hat on the (xi, eta) line through eta_dir.
double eta_scale(const Eigen::MatrixXd& W, double xi, const Eigen::VectorXd& eta_dir) {
    const int b = static_cast<int>(eta_dir.size());
    const Eigen::MatrixXd Wb = W.block(1, 1, b, b);
    const double qa = eta_dir.dot(Wb * eta_dir);
    const double qb = 2.0 * xi * W.block(0, 1, 1, b).row(0).transpose().dot(eta_dir);
    const double qc = xi * xi * W(0, 0) - 1.0;
    return (-qb + std::sqrt(qb * qb - 4.0 * qa * qc)) / (2.0 * qa);
}

struct BuiltinCall {
    std::string name;
    std::vector<double> args;
};

BuiltinCall parse_builtin_call(std::string_view text) {
    ConfigEntry e;
    e.key = "builtin";
    e.value = trim(text);
    const CallValue call = split_call(e);
    BuiltinCall out{call.name, {}};
    for (const ListCell& c : call.args) out.args.push_back(parse_double(c));
    return out;
}

int as_int(double v, const char* what) {
    if (v != std::floor(v)) throw ConfigError(std::string(what) + " must be an integer");
    return static_cast<int>(v);
}

std::string canonical_call(const BuiltinCall& c) {
    if (c.name == "blowup_curve_r3") return c.name;
    std::string s = c.name + "(";
    for (std::size_t i = 0; i < c.args.size(); ++i) s += (i ? ", " : "") + num(c.args[i]);
    return s + ")";
}

Order default_s_incident(const SceneConfig& cfg) {
    if (cfg.s_incident) return *cfg.s_incident;
    if (cfg.source == SourceKind::Point)
        return fundamental_solution_orders(1 + cfg.metric.b() + cfg.metric.f(), cfg.metric.f()).incident;
    return Order::attained(0);
}

std::optional<Nonfocusing> default_nonfocusing(const SceneConfig& cfg) {
    if (cfg.nonfocusing || cfg.source != SourceKind::Point) return cfg.nonfocusing;
    const FundamentalOrders fo = fundamental_solution_orders(1 + cfg.metric.b() + cfg.metric.f(), cfg.metric.f());
    return Nonfocusing{fo.diffracted.value(), 0};
}

}  // namespace

const EdgeMetricSpec& placeholder_metric() {
    static const EdgeMetricSpec m = parse_metric_spec("b = 0; f = 1; k = [[\"1\"]]");
    return m;
}

// ---------------------------------------------------------------- formats

DumpFormat parse_format(std::string_view text) {
    const std::string t = unquote(trim(text));
    if (t == "csv") return DumpFormat::Csv;
    if (t == "jsonl") return DumpFormat::Jsonl;
    throw ConfigError("unknown output format '" + t + "' (csv or jsonl)");
}

const char* to_string(DumpFormat f) { return f == DumpFormat::Csv ? "csv" : "jsonl"; }

Projection parse_projection(std::string_view text) {
    const std::string t = trim(text);
    if (t == "tx" || t == "t,x" || t == "(t,x)") return Projection::TX;
    if (t == "yx" || t == "y,x" || t == "(y,x)") return Projection::YX;
    if (t == "fiber" || t == "fiber-angle" || t == "fiber_angle") return Projection::FiberAngle;
    throw ConfigError("unknown projection '" + t + "' (tx, yx or fiber-angle)");
}

// ---------------------------------------------------------------- builtins

std::vector<std::string> builtin_names() {
    return {"product_cone(1)", "product_edge(1, 1)", "product_edge(1, 2)", "perturbed_edge(0.1)", "blowup_curve_r3"};
}

EdgeMetricSpec builtin_metric(std::string_view call_text) {
    const BuiltinCall c = parse_builtin_call(call_text);
    const auto nargs = [&](std::size_t n) {
        if (c.args.size() != n)
            throw ConfigError("builtin " + c.name + " takes " + std::to_string(n) + " argument(s)");
    };
    if (c.name == "product_cone") {
        nargs(1);
        const double rho = c.args[0];
        if (!(rho > 0.0)) throw ConfigError("product_cone needs rho > 0");
        return parse_metric_spec("b = 0; f = 1; fiber = circle(" + num(kTwoPi) + "); k = [[\"" + num(rho * rho) +
                                 "\"]]");
    }
    if (c.name == "product_edge") {
        nargs(2);
        const int b = as_int(c.args[0], "product_edge b");
        const int f = as_int(c.args[1], "product_edge f");
        if (b < 0 || b > 8 || f < 1 || f > 8) throw ConfigError("product_edge needs 0 <= b <= 8 and 1 <= f <= 8");
        auto identity = [](int n, const char* diag_last = nullptr) {
            std::string s = "[";
            for (int i = 0; i < n; ++i) {
                s += i ? ", [" : "[";
                for (int j = 0; j < n; ++j) {
                    const char* v = i == j ? (diag_last && i == n - 1 ? diag_last : "1") : "0";
                    s += std::string(j ? ", " : "") + "\"" + v + "\"";
                }
                s += "]";
            }
            return s + "]";
        };
        std::string t = "b = " + std::to_string(b) + "; f = " + std::to_string(f) + "\n";
        if (f == 2) t += "fiber = sphere\nk = " + identity(2, "sin(z1)^2") + "\n";
        else t += "k = " + identity(f) + "\n";
        if (b > 0) t += "h = " + identity(b) + "\n";
        return parse_metric_spec(t);
    }
    if (c.name == "perturbed_edge") {
        nargs(1);
        const double a = c.args[0];
        if (!(std::abs(a) <= 0.25)) throw ConfigError("perturbed_edge needs |amplitude| <= 0.25");
        const std::string A = "(" + num(a) + ")";
        return parse_metric_spec("b = 1; f = 1\nh = [[\"1 + " + A + "*y1^2\"]]\nhprime = [[\"" + A +
                                 "*cos(z1)\"]]\nk = [[\"(1 + " + A + "*sin(z1))^2\"]]\nkyz = [[\"" + A + "\"]]");
    }
    if (c.name == "blowup_curve_r3") {
        if (!c.args.empty()) throw ConfigError("blowup_curve_r3 takes no arguments");
        // Tubular coordinates around the circle of radius 2 in the plane z = 0.
        const std::string R = num(kBlowupRadius);
        EdgeMetricSpec m = parse_metric_spec("b = 1; f = 1\nh = [[\"" + num(kBlowupRadius * kBlowupRadius) +
                                             "\"]]\nhprime = [[\"" + num(2 * kBlowupRadius) +
                                             "*cos(z1)\"]]\nkyy = [[\"cos(z1)^2\"]]\nk = [[\"1\"]]");
        m.set_x_max(1.5);
        m.set_y_range({-kPi, kPi});
        return m;
    }
    throw ConfigError("unknown builtin scene '" + c.name + "'");
}

EdgePhasePoint blowup_line_ray(double radius, double y_hit, const std::vector<double>& direction, double back,
                               double t_hit) {
    if (direction.size() != 3) throw InvalidInput("blowup_line_ray needs a 3-vector direction");
    Eigen::Vector3d d(direction[0], direction[1], direction[2]);
    if (!(d.norm() > 0.0)) throw InvalidInput("direction must be nonzero");
    d.normalize();
    const Eigen::Vector3d P(radius * std::cos(y_hit), radius * std::sin(y_hit), 0.0);
    const Eigen::Vector3d S = P - back * d;
    const double rho = std::hypot(S[0], S[1]);
    const double phi = std::atan2(S[1], S[0]);
    const double r = std::hypot(rho - radius, S[2]);
    const double theta = std::atan2(S[2], rho - radius);
    const double rho_dot = (S[0] * d[0] + S[1] * d[1]) / rho;
    const double phi_dot = (S[0] * d[1] - S[1] * d[0]) / (rho * rho);
    const double r_dot = ((rho - radius) * rho_dot + S[2] * d[2]) / r;
    const double theta_dot = ((rho - radius) * d[2] - S[2] * rho_dot) / (r * r);

    // tau = 1, time forward: frame velocity w = -(x', y', x z') in t.
    const EdgeMetricSpec spec = builtin_metric("blowup_curve_r3");
    const std::vector<double> yv{phi}, zv{theta};
    const Eigen::MatrixXd M = spec.frame_matrix(pack_vars(r, yv, zv));
    const Eigen::Vector3d w(-r_dot, -phi_dot, -r * theta_dot);
    const Eigen::Vector3d eps = M * w;
    EdgePhasePoint q;
    q.t = t_hit - back;
    q.x = r;
    q.y = {phi};
    q.z = {theta};
    q.tau = 1.0;
    q.xi = eps[0];
    q.eta = {eps[1]};
    q.zeta = {eps[2]};
    return q;
}

SceneConfig builtin_scene(std::string_view call_text) {
    SceneConfig cfg;
    const BuiltinCall call = parse_builtin_call(call_text);
    cfg.metric = builtin_metric(call_text);
    cfg.builtin = canonical_call(call);
    const int b = cfg.metric.b();
    const int f = cfg.metric.f();
    cfg.policy = BranchPolicy::parse("diffractive_fan(8)");
    EdgePhasePoint& q = cfg.ray;
    q.t = 0.0;
    q.x = 0.8;
    q.y.assign(static_cast<std::size_t>(b), 0.0);
    q.z.assign(static_cast<std::size_t>(f), 0.5);
    if (cfg.metric.fiber().kind() == FiberTopology::Kind::Sphere) q.z = {1.0, 0.5};
    q.tau = 1.0;
    q.zeta.assign(static_cast<std::size_t>(f), 0.0);
    q.eta.assign(static_cast<std::size_t>(b), 0.0);

    if (call.name == "product_cone") {
        q.xi = 1.0;
        cfg.t_span = {0.0, 2.0};
    } else if (call.name == "blowup_curve_r3") {
        cfg.ray = blowup_line_ray(kBlowupRadius, 0.0, {-0.6, 0.48, 0.64}, 0.8, 0.8);
        cfg.policy.kind = BranchPolicy::Kind::GeometricOnly;
        cfg.t_span = {0.0, 2.5};
    } else if (call.name == "perturbed_edge") {
        // Trace back from a hyperbolic point so that the ray really meets the edge.
        BoundaryData hit;
        hit.t = 1.5;
        hit.y = {0.0};
        hit.z = {0.5};
        hit.xi_hat = 0.6;
        hit.eta_hat = {0.8 / std::sqrt(eta_norm2_h(cfg.metric, hit.y, std::vector<double>{1.0}))};
        const EdgePhasePoint seed = stable_manifold_launch(cfg.metric, hit, Io::Incoming, cfg.settings.eps_launch);
        IntegrationLimits lim;
        lim.boundary_event = false;
        const RaySegment back = integrate_interior(cfg.metric, seed, -forward_direction(seed), cfg.settings, lim);
        std::size_t i = 0;
        while (i + 1 < back.size() && back.point(i).x < 0.8) ++i;
        cfg.ray = back.point(i);
        cfg.t_span = {0.0, 3.0};
    } else {
        q.xi = b > 0 ? 0.6 : 1.0;
        if (b > 0) {
            Eigen::VectorXd dir = Eigen::VectorXd::Zero(b);
            dir[0] = 1.0;
            const Eigen::MatrixXd W = frame_inverse(cfg.metric, pack_vars(q.x, q.y, q.z));
            q.eta[0] = eta_scale(W, q.xi, dir);
        }
        cfg.t_span = {0.0, 3.0};
    }
    return cfg;
}

// ---------------------------------------------------------------- scene text

namespace {

const std::set<std::string_view>& scene_keys() {
    static const std::set<std::string_view> keys{
        "builtin",   "source",        "ray",        "origin",         "fan_count",      "edge_rays",  "t_span",
        "policy",    "rtol",          "atol",       "x_stop",         "h_init",         "h_max",      "max_steps",
        "p_drift_max", "eps_launch",  "branch_budget", "glancing_delta", "tol_g",       "partner_directions",
        "s_incident", "nonfocusing",  "incident_clean", "horizon",    "front_time",     "output",     "format",
        "seed"};
    return keys;
}

void check_ray(const SceneConfig& cfg) {
    const EdgePhasePoint& q = cfg.ray;
    if (q.b() != cfg.metric.b() || q.f() != cfg.metric.f()) throw ConfigError("ray has the wrong dimension for the metric");
    if (!(q.x > 0.0)) throw ConfigError("ray must start at x > 0");
    if (q.tau == 0.0) throw ConfigError("ray needs tau != 0");
}

}  // namespace

SceneConfig parse_scene(std::string_view text) {
    const std::vector<ConfigEntry> entries = parse_entries(text);
    std::map<std::string, const ConfigEntry*> by_key;
    std::vector<ConfigEntry> metric_entries;
    for (const ConfigEntry& e : entries) {
        if (!is_metric_key(e.key) && !scene_keys().count(e.key))
            throw ParseError("unknown key '" + e.key + "'", e.line, e.column);
        if (by_key.count(e.key)) throw ParseError("duplicate key '" + e.key + "'", e.line, e.column);
        by_key[e.key] = &e;
        if (is_metric_key(e.key)) metric_entries.push_back(e);
    }
    auto get = [&](const char* k) -> const ConfigEntry* {
        const auto it = by_key.find(k);
        return it == by_key.end() ? nullptr : it->second;
    };

    SceneConfig cfg;
    if (const ConfigEntry* e = get("builtin")) {
        if (!metric_entries.empty()) throw at(metric_entries.front(), "metric keys cannot be combined with builtin");
        cfg = builtin_scene(unquote(e->value));
    } else {
        if (metric_entries.empty()) throw ConfigError("scene needs a builtin or an inline metric");
        cfg.metric = metric_from_entries(metric_entries);
        cfg.ray = EdgePhasePoint{};
    }

    bool ray_given = false;
    if (const ConfigEntry* e = get("source")) {
        const std::string v = unquote(e->value);
        if (v == "ray") cfg.source = SourceKind::Ray;
        else if (v == "point") cfg.source = SourceKind::Point;
        else throw at(*e, "source must be ray or point");
    }
    const int b = cfg.metric.b();
    const int f = cfg.metric.f();
    if (const ConfigEntry* e = get("ray")) {
        const std::vector<double> v = parse_vector(*e);
        if (static_cast<int>(v.size()) != 2 * (2 + b + f))
            throw at(*e, "ray needs " + std::to_string(2 * (2 + b + f)) + " entries (t, x, y, z, tau, xi, eta, zeta)");
        cfg.ray = EdgePhasePoint::from_state(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())), b, f);
        ray_given = true;
    }
    if (const ConfigEntry* e = get("origin")) {
        cfg.origin = parse_vector(*e);
        if (static_cast<int>(cfg.origin.size()) != 1 + b + f)
            throw at(*e, "origin needs " + std::to_string(1 + b + f) + " entries (x, y, z)");
        if (!(cfg.origin[0] > 0.0)) throw at(*e, "origin must have x > 0");
    }
    if (const ConfigEntry* e = get("fan_count")) cfg.fan_count = static_cast<int>(parse_int(*e));
    if (const ConfigEntry* e = get("edge_rays")) cfg.edge_rays = static_cast<int>(parse_int(*e));
    if (const ConfigEntry* e = get("t_span")) {
        const std::vector<double> v = parse_vector(*e);
        if (v.size() != 2) throw at(*e, "t_span needs two entries");
        cfg.t_span = {v[0], v[1]};
    }
    if (const ConfigEntry* e = get("policy")) cfg.policy = BranchPolicy::parse(unquote(e->value));

    FlowSettings& st = cfg.settings;
    const std::pair<const char*, double*> dkeys[] = {{"rtol", &st.rtol},         {"atol", &st.atol},
                                                     {"x_stop", &st.x_stop},     {"h_init", &st.h_init},
                                                     {"h_max", &st.h_max},       {"p_drift_max", &st.p_drift_max},
                                                     {"eps_launch", &st.eps_launch}, {"glancing_delta", &cfg.gbb.glancing_delta},
                                                     {"tol_g", &cfg.gbb.tol_g}};
    for (const auto& [k, dst] : dkeys)
        if (const ConfigEntry* e = get(k)) *dst = parse_double(*e);
    if (const ConfigEntry* e = get("max_steps")) st.max_steps = parse_int(*e);
    if (const ConfigEntry* e = get("branch_budget")) cfg.gbb.branch_budget = static_cast<int>(parse_int(*e));
    if (const ConfigEntry* e = get("partner_directions"))
        cfg.gbb.partner_directions = static_cast<int>(parse_int(*e));
    if (const ConfigEntry* e = get("s_incident")) cfg.s_incident = Order::parse(unquote(e->value));
    if (const ConfigEntry* e = get("nonfocusing")) {
        const std::vector<ListCell> cells = split_list(*e);
        if (cells.size() != 2) throw at(*e, "nonfocusing needs [space_order, degree]");
        cfg.nonfocusing = Nonfocusing{parse_rational(cells[0].text), parse_rational(cells[1].text)};
    }
    if (const ConfigEntry* e = get("incident_clean")) cfg.incident_clean = parse_bool(*e);
    if (const ConfigEntry* e = get("horizon")) cfg.horizon = parse_double(*e);
    if (const ConfigEntry* e = get("front_time")) cfg.front_time = parse_double(*e);
    if (const ConfigEntry* e = get("output")) cfg.output = unquote(e->value);
    if (const ConfigEntry* e = get("format")) cfg.format = parse_format(e->value);
    if (const ConfigEntry* e = get("seed")) {
        try {
            const std::string v = trim(e->value);
            std::size_t used = 0;
            // stoull would wrap a leading minus sign
            if (v.empty() || !std::isdigit(static_cast<unsigned char>(v[0]))) throw std::invalid_argument("seed");
            cfg.seed = std::stoull(v, &used);
            if (used != v.size()) throw std::invalid_argument("seed");
        } catch (const std::exception&) {
            throw at(*e, "seed must be a non-negative integer");
        }
    }

    st.validate();
    if (cfg.gbb.branch_budget < 1) throw ConfigError("branch_budget must be >= 1");
    if (!(cfg.gbb.glancing_delta > 0.0)) throw ConfigError("glancing_delta must be positive");
    if (!(cfg.gbb.tol_g >= 0.0)) throw ConfigError("tol_g must be non-negative");
    if (!(cfg.t_span.first < cfg.t_span.second)) throw ConfigError("t_span must be nondegenerate");
    if (cfg.source == SourceKind::Ray) {
        if (cfg.builtin.empty() && !ray_given) throw ConfigError("source = ray needs a ray entry");
        check_ray(cfg);
    } else {
        if (cfg.origin.empty()) throw ConfigError("source = point needs an origin entry");
        if (cfg.fan_count < 1) throw ConfigError("fan_count must be >= 1");
        if (cfg.edge_rays < 0) throw ConfigError("edge_rays must be >= 0");
    }
    return cfg;
}

std::string SceneConfig::to_text() const {
    std::string s;
    if (!builtin.empty()) s += "builtin = " + builtin + "\n";
    else s += metric.to_text();
    if (source == SourceKind::Ray) {
        s += "source = ray\n";
        const Eigen::VectorXd v = ray.to_state();
        s += "ray = " + list_text(std::vector<double>(v.data(), v.data() + v.size())) + "\n";
    } else {
        s += "source = point\norigin = " + list_text(origin) + "\n";
        s += "fan_count = " + std::to_string(fan_count) + "\nedge_rays = " + std::to_string(edge_rays) + "\n";
    }
    s += "t_span = [" + num(t_span.first) + ", " + num(t_span.second) + "]\n";
    s += "policy = " + policy.to_text() + "\n";
    s += "rtol = " + num(settings.rtol) + "\natol = " + num(settings.atol) + "\nx_stop = " + num(settings.x_stop) +
         "\nh_init = " + num(settings.h_init) + "\nh_max = " + num(settings.h_max) +
         "\nmax_steps = " + std::to_string(settings.max_steps) + "\np_drift_max = " + num(settings.p_drift_max) +
         "\neps_launch = " + num(settings.eps_launch) + "\n";
    s += "branch_budget = " + std::to_string(gbb.branch_budget) + "\nglancing_delta = " + num(gbb.glancing_delta) +
         "\ntol_g = " + num(gbb.tol_g) + "\npartner_directions = " + std::to_string(gbb.partner_directions) + "\n";
    if (s_incident) s += "s_incident = \"" + s_incident->to_string() + "\"\n";
    if (nonfocusing)
        s += "nonfocusing = [\"" + rational_text(nonfocusing->space_order) + "\", \"" +
             rational_text(nonfocusing->degree) + "\"]\n";
    s += std::string("incident_clean = ") + (incident_clean ? "true" : "false") + "\n";
    if (horizon) s += "horizon = " + num(*horizon) + "\n";
    if (front_time) s += "front_time = " + num(*front_time) + "\n";
    if (!output.empty()) s += "output = \"" + output + "\"\n";
    s += std::string("format = ") + edgeray::to_string(format) + "\nseed = " + std::to_string(seed) + "\n";
    return s;
}

bool SceneConfig::operator==(const SceneConfig& o) const {
    auto nf_eq = [](const std::optional<Nonfocusing>& a, const std::optional<Nonfocusing>& b) {
        if (a.has_value() != b.has_value()) return false;
        return !a || (a->space_order == b->space_order && a->degree == b->degree);
    };
    const bool ray_eq = source != SourceKind::Ray || (ray.b() == o.ray.b() && ray.f() == o.ray.f() &&
                                                      ray.to_state() == o.ray.to_state());
    return builtin == o.builtin && metric.structurally_equal(o.metric) && source == o.source && ray_eq &&
           origin == o.origin && fan_count == o.fan_count && edge_rays == o.edge_rays && t_span == o.t_span &&
           policy == o.policy && settings == o.settings && gbb.branch_budget == o.gbb.branch_budget &&
           gbb.glancing_delta == o.gbb.glancing_delta && gbb.tol_g == o.gbb.tol_g &&
           gbb.partner_directions == o.gbb.partner_directions && s_incident == o.s_incident &&
           nf_eq(nonfocusing, o.nonfocusing) && incident_clean == o.incident_clean && horizon == o.horizon &&
           front_time == o.front_time && output == o.output && format == o.format && seed == o.seed;
}

SceneConfig load_scene(const std::string& path_or_builtin) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (fs::is_regular_file(path_or_builtin, ec)) {
        std::ifstream in(path_or_builtin);
        if (!in) throw ConfigError("cannot read scene file '" + path_or_builtin + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_scene(ss.str());
    }
    const std::string name = trim(path_or_builtin.substr(0, path_or_builtin.find('(')));
    for (const std::string& b : builtin_names())
        if (b.substr(0, b.find('(')) == name) return builtin_scene(path_or_builtin);
    throw ConfigError("no scene file or builtin named '" + path_or_builtin + "'");
}

// ---------------------------------------------------------------- launching

std::vector<EdgePhasePoint> launch_points(const SceneConfig& cfg) {
    if (cfg.source == SourceKind::Ray) {
        EdgePhasePoint q = cfg.ray;
        return {q};
    }
    const int b = cfg.metric.b();
    const int f = cfg.metric.f();
    const int d = 1 + b + f;
    const double x0 = cfg.origin[0];
    const std::vector<double> y0(cfg.origin.begin() + 1, cfg.origin.begin() + 1 + b);
    const std::vector<double> z0(cfg.origin.begin() + 1 + b, cfg.origin.end());
    const Eigen::MatrixXd M = cfg.metric.frame_matrix(pack_vars(x0, y0, z0));
    const Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) throw DegenerateMetric("metric is not positive definite at the source");
    const Eigen::MatrixXd L = llt.matrixL();

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> shift(static_cast<std::size_t>(d));
    for (double& s : shift) s = unif(rng);

    auto make = [&](const Eigen::VectorXd& eps) {
        EdgePhasePoint q;
        q.t = cfg.t_span.first;
        q.x = x0;
        q.y = y0;
        q.z = z0;
        q.tau = 1.0;
        q.xi = eps[0];
        for (int i = 0; i < b; ++i) q.eta.push_back(eps[1 + i]);
        for (int j = 0; j < f; ++j) q.zeta.push_back(eps[1 + b + j]);
        return q;
    };

    std::vector<EdgePhasePoint> out;
    // eps = L u has eps^T M^-1 eps = |u|^2 = tau^2.
    for (int j = 0; j < cfg.fan_count; ++j) out.push_back(make(L * sphere_point(j, d, shift)));

    // Aimed rays: zeta = 0 and xi > 0, spread over the incoming half of the (xi, eta) unit sphere.
    const Eigen::MatrixXd W = checked_inverse(M);
    const Eigen::MatrixXd Wb = W.topLeftCorner(1 + b, 1 + b);
    const Eigen::MatrixXd Lb = Eigen::LLT<Eigen::MatrixXd>(checked_inverse(Wb)).matrixL();
    std::vector<double> bshift(shift.begin(), shift.begin() + 1 + b);
    for (int j = 0; j < cfg.edge_rays; ++j) {
        Eigen::VectorXd u(1 + b);
        if (b == 0) {
            u[0] = 1.0;
        } else if (b == 1) {
            const double a = -kPi / 2 + kPi * (j + 0.5) / cfg.edge_rays;
            u << std::cos(a), std::sin(a);
        } else {
            u = sphere_point(j, 1 + b, bshift);
            u[0] = std::abs(u[0]);
        }
        Eigen::VectorXd eps = Eigen::VectorXd::Zero(d);
        eps.head(1 + b) = Lb * u;
        out.push_back(make(eps));
    }
    return out;
}

// ---------------------------------------------------------------- running

int SceneResult::exit_code() const {
    int code = 0;
    for (const RayResult& r : rays) code = std::max(code, r.error_exit);
    return code;
}

int worker_count(int requested) {
    int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("EDGERAY_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1) n = std::min(n, cap);
    }
    return n;
}

SceneResult run_scene(const SceneConfig& cfg, int threads) {
    const std::vector<EdgePhasePoint> starts = launch_points(cfg);
    const Order s_inc = default_s_incident(cfg);
    const std::optional<Nonfocusing> nf = default_nonfocusing(cfg);
    SceneResult res;
    res.rays.resize(starts.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < starts.size(); i = next++) {
            RayResult& r = res.rays[i];
            r.ray_id = static_cast<int>(i);
            r.start = starts[i];
            try {
                r.path = trace_gbb(cfg.metric, starts[i], cfg.t_span, cfg.policy, cfg.settings, cfg.gbb);
                r.orders = assign_orders(*r.path, s_inc, nf, cfg.incident_clean);
            } catch (const NumericalError& e) {
                r.error = e.what();
                r.error_exit = 3;
            } catch (const Error& e) {
                r.error = e.what();
                r.error_exit = 2;
            }
        }
    };
    const int n = std::min<int>(worker_count(threads), static_cast<int>(std::max<std::size_t>(starts.size(), 1)));
    std::vector<std::thread> pool;
    for (int k = 1; k < n; ++k) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();
    return res;
}

// ---------------------------------------------------------------- output

void write_dump(std::ostream& out, const SceneConfig& cfg, const SceneResult& res, DumpFormat format) {
    const int b = cfg.metric.b();
    const int f = cfg.metric.f();
    std::vector<std::string> cols{"ray_id", "branch_id", "branch_kind", "s", "t", "x"};
    for (int i = 0; i < b; ++i) cols.push_back("y" + std::to_string(i + 1));
    for (int j = 0; j < f; ++j) cols.push_back("z" + std::to_string(j + 1));
    cols.push_back("tau");
    cols.push_back("xi");
    for (int i = 0; i < b; ++i) cols.push_back("eta" + std::to_string(i + 1));
    for (int j = 0; j < f; ++j) cols.push_back("zeta" + std::to_string(j + 1));
    cols.push_back("p_residual");
    cols.push_back("sup_order");

    if (format == DumpFormat::Csv) {
        for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
        out << "\n";
    }
    const StateLayout S{b, f};
    for (const RayResult& r : res.rays) {
        if (!r.path) continue;
        for (const GbbBranch& br : r.path->branches) {
            const std::string order = r.orders->branches.at(br.id).sup_order.to_string();
            const RaySegment& seg = br.segment;
            for (std::size_t i = 0; i < seg.size(); ++i) {
                const Eigen::VectorXd& st = seg.states[i];
                std::vector<double> vals{seg.s[i], st[S.t()], st[S.x()]};
                for (int k = 0; k < b; ++k) vals.push_back(st[S.y(k)]);
                for (int k = 0; k < f; ++k) vals.push_back(st[S.z(k)]);
                vals.push_back(st[S.tau()]);
                vals.push_back(st[S.xi()]);
                for (int k = 0; k < b; ++k) vals.push_back(st[S.eta(k)]);
                for (int k = 0; k < f; ++k) vals.push_back(st[S.zeta(k)]);
                vals.push_back(seg.conserved_log[i].p_rel);
                if (format == DumpFormat::Csv) {
                    out << r.ray_id << "," << br.id << "," << to_string(br.kind);
                    for (double v : vals) out << "," << num(v);
                    out << "," << order << "\n";
                } else {
                    ojson row;
                    row[cols[0]] = r.ray_id;
                    row[cols[1]] = br.id;
                    row[cols[2]] = to_string(br.kind);
                    for (std::size_t k = 0; k < vals.size(); ++k) row[cols[3 + k]] = vals[k];
                    row[cols.back()] = order;
                    out << row.dump() << "\n";
                }
            }
        }
    }
}

namespace {

ojson vec_json(const std::vector<double>& v) {
    ojson a = ojson::array();
    for (double x : v) a.push_back(x);
    return a;
}

// Linear interpolation of a segment at time t; nullopt when t is outside.
std::optional<Eigen::VectorXd> sample_at(const RaySegment& seg, double t) {
    const StateLayout S{seg.b, seg.f};
    for (std::size_t i = 1; i < seg.size(); ++i) {
        const double t0 = seg.states[i - 1][S.t()];
        const double t1 = seg.states[i][S.t()];
        if ((t0 - t) * (t1 - t) <= 0.0 && t0 != t1) {
            const double w = (t - t0) / (t1 - t0);
            return Eigen::VectorXd((1 - w) * seg.states[i - 1] + w * seg.states[i]);
        }
    }
    return std::nullopt;
}

}  // namespace

std::string summary_json(const SceneConfig& cfg, const SceneResult& res) {
    const int b = cfg.metric.b();
    const int f = cfg.metric.f();
    const int n = 1 + b + f;
    ojson js;
    js["scene"] = cfg.builtin.empty() ? "inline" : cfg.builtin;
    js["dimension"] = n;
    js["b"] = b;
    js["f"] = f;
    js["seed"] = cfg.seed;
    js["t_span"] = {cfg.t_span.first, cfg.t_span.second};
    js["policy"] = cfg.policy.to_text();
    ojson orders;
    orders["s_incident"] = default_s_incident(cfg).to_string();
    if (const auto nf = default_nonfocusing(cfg))
        orders["nonfocusing"] = {{"space_order", rational_text(nf->space_order)}, {"degree", rational_text(nf->degree)}};
    if (cfg.source == SourceKind::Point) {
        const FundamentalOrders fo = fundamental_solution_orders(n, f);
        orders["fundamental"] = {{"incident", fo.incident.to_string()}, {"diffracted", fo.diffracted.to_string()}};
    }
    js["orders"] = orders;
    if (cfg.horizon) js["horizon"] = {{"value", *cfg.horizon}, {"note", "user supplied; not checked"}};

    const StateLayout S{b, f};
    ojson rays = ojson::array();
    ojson front = ojson::array();
    std::size_t n_events = 0, n_failed = 0;
    for (const RayResult& r : res.rays) {
        ojson jr;
        jr["ray_id"] = r.ray_id;
        if (!r.error.empty()) {
            jr["error"] = r.error;
            jr["exit"] = r.error_exit;
            rays.push_back(jr);
            ++n_failed;
            continue;
        }
        const GbbPath& path = *r.path;
        jr["partial"] = path.partial;
        jr["notes"] = path.notes;
        ojson branches = ojson::array();
        for (const GbbBranch& br : path.branches) {
            const BranchOrder& bo = r.orders->branches.at(br.id);
            ojson jb;
            jb["id"] = br.id;
            jb["parent"] = br.parent;
            jb["kind"] = to_string(br.kind);
            jb["event_in"] = br.event_in;
            jb["event_out"] = br.event_out;
            jb["termination"] = to_string(br.segment.termination);
            jb["samples"] = br.segment.size();
            if (br.partner) jb["partner"] = vec_json(*br.partner);
            if (!br.tangential.empty()) jb["tangential_samples"] = br.tangential.size();
            jb["sup_order"] = bo.sup_order.to_string();
            jb["rule"] = bo.rule;
            jb["eps_loss"] = bo.eps_loss;
            branches.push_back(jb);

            if (cfg.front_time) {
                if (const auto st = sample_at(br.segment, *cfg.front_time)) {
                    ojson p;
                    p["ray_id"] = r.ray_id;
                    p["branch_id"] = br.id;
                    p["kind"] = to_string(br.kind);
                    p["sup_order"] = bo.sup_order.to_string();
                    p["t"] = *cfg.front_time;
                    p["x"] = (*st)[S.x()];
                    std::vector<double> y, z;
                    for (int i = 0; i < b; ++i) y.push_back((*st)[S.y(i)]);
                    for (int j = 0; j < f; ++j) z.push_back((*st)[S.z(j)]);
                    p["y"] = vec_json(y);
                    p["z"] = vec_json(cfg.metric.fiber().wrap(z));
                    front.push_back(p);
                }
            }
        }
        jr["branches"] = branches;
        ojson events = ojson::array();
        for (std::size_t k = 0; k < path.events.size(); ++k) {
            const BoundaryEvent& ev = path.events[k];
            ojson je;
            je["id"] = k;
            je["incoming_branch"] = ev.incoming_branch;
            je["class"] = to_string(ev.cls.kind);
            je["margin"] = ev.cls.margin;
            je["t"] = ev.t;
            je["y"] = vec_json(ev.y);
            je["z"] = vec_json(ev.z);
            je["sgn_tau"] = ev.sgn_tau;
            je["xi_hat"] = ev.xi_hat;
            je["eta_hat"] = vec_json(ev.eta_hat);
            je["residual"] = ev.extrapolation_residual;
            if (ev.cls.kind == BoundaryClass::Kind::Hyperbolic) {
                ojson parts = ojson::array();
                try {
                    const int nd = cfg.gbb.partner_directions > 0 ? cfg.gbb.partner_directions
                                                                  : default_partner_directions(f);
                    for (const Partner& p : geometric_partners(cfg.metric, ev.y, ev.z, nd))
                        parts.push_back({{"z", vec_json(p.z)}, {"multiplicity", p.multiplicity}});
                    je["partners"] = parts;
                } catch (const NumericalError& e) {
                    je["partners_error"] = e.what();
                }
            }
            events.push_back(je);
        }
        n_events += path.events.size();
        jr["events"] = events;
        const LipschitzReport lip = lipschitz_check(cfg.metric, path);
        jr["lipschitz"] = {{"max_constant", lip.max_constant}, {"max_slow_jump", lip.max_slow_jump},
                           {"max_xi_jump", lip.max_xi_jump},   {"finite", lip.finite},
                           {"continuous", lip.continuous}};
        rays.push_back(jr);
    }
    js["ray_count"] = res.rays.size();
    js["failed_rays"] = n_failed;
    js["event_count"] = n_events;
    js["rays"] = rays;
    if (cfg.front_time) js["front"] = front;
    return js.dump(2) + "\n";
}

void emit_plot_data(std::ostream& out, const SceneResult& res, Projection projection,
                    const std::vector<std::string>& kinds) {
    if (kinds.empty()) throw ConfigError("empty branch filter");
    const bool all = std::find(kinds.begin(), kinds.end(), "all") != kinds.end();
    bool any = false;
    for (const RayResult& r : res.rays) any = any || (r.path && !r.path->branches.empty());
    if (!any) throw InvalidInput("nothing to plot: no traced branches");
    for (const RayResult& r : res.rays) {
        if (!r.path) continue;
        for (const GbbBranch& br : r.path->branches) {
            const std::string kind = to_string(br.kind);
            if (!all && std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) continue;
            const RaySegment& seg = br.segment;
            const StateLayout S{seg.b, seg.f};
            if (projection == Projection::YX && seg.b == 0) throw ConfigError("(y,x) projection needs b >= 1");
            out << "# ray " << r.ray_id << " branch " << br.id << " " << kind << "\n";
            for (std::size_t i = 0; i < seg.size(); ++i) {
                const Eigen::VectorXd& st = seg.states[i];
                double a = 0.0, c = 0.0;
                switch (projection) {
                    case Projection::TX: a = st[S.t()], c = st[S.x()]; break;
                    case Projection::YX: a = st[S.y(0)], c = st[S.x()]; break;
                    case Projection::FiberAngle: a = st[S.t()], c = st[S.z(0)]; break;
                }
                out << r.ray_id << " " << br.id << " " << kind << " " << num(a) << " " << num(c) << "\n";
            }
            out << "\n";
        }
    }
}

}  // namespace edgeray
