// edgeray command-line front end.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "edgeray/error.hpp"
#include "edgeray/scene.hpp"

using namespace edgeray;
using ojson = nlohmann::ordered_json;

namespace {

struct Globals {
    std::string out;
    std::string format;
    std::optional<std::uint64_t> seed;
    std::optional<double> rtol;
    std::optional<double> x_stop;
    int threads = 0;
};

std::vector<double> parse_csv_numbers(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        if (t.empty()) continue;
        char* end = nullptr;
        const double d = std::strtod(t.c_str(), &end);
        if (end != t.c_str() + t.size()) throw ConfigError("expected a number, got '" + t + "'");
        v.push_back(d);
    }
    return v;
}

SceneConfig load_with_overrides(const std::string& scene, const Globals& g) {
    SceneConfig cfg = load_scene(scene);
    if (g.seed) cfg.seed = *g.seed;
    if (g.rtol) cfg.settings.rtol = *g.rtol;
    if (g.x_stop) cfg.settings.x_stop = *g.x_stop;
    if (!g.format.empty()) cfg.format = parse_format(g.format);
    if (!g.out.empty()) cfg.output = g.out;
    cfg.settings.validate();
    return cfg;
}

void emit(const Globals& g, const std::string& text) {
    if (g.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(g.out);
    if (!f) throw ConfigError("cannot write '" + g.out + "'");
    f << text;
}

int cmd_validate(const std::string& scene, const Globals& g, int samples) {
    const SceneConfig cfg = load_with_overrides(scene, g);
    const ValidationReport rep = validate_normal_form(cfg.metric, samples);
    ojson js;
    js["pass"] = rep.pass;
    js["dx_row_exact"] = rep.dx_row_exact;
    js["min_eig_h"] = rep.min_eig_h;
    js["min_eig_k"] = rep.min_eig_k;
    js["messages"] = rep.messages;
    emit(g, js.dump(2) + "\n");
    return rep.pass ? 0 : 2;
}

int cmd_trace(const std::string& scene, const Globals& g, const std::string& plot, const std::string& plot_out,
              const std::vector<std::string>& kinds) {
    const SceneConfig cfg = load_with_overrides(scene, g);
    const SceneResult res = run_scene(cfg, g.threads);
    if (cfg.output.empty()) {
        write_dump(std::cout, cfg, res, cfg.format);
    } else {
        std::ofstream dump(cfg.output);
        if (!dump) throw ConfigError("cannot write '" + cfg.output + "'");
        write_dump(dump, cfg, res, cfg.format);
        std::ofstream summary(cfg.output + ".summary.json");
        summary << summary_json(cfg, res);
    }
    if (!plot.empty()) {
        const Projection p = parse_projection(plot);
        if (plot_out.empty()) {
            emit_plot_data(std::cerr, res, p, kinds);
        } else {
            std::ofstream f(plot_out);
            if (!f) throw ConfigError("cannot write '" + plot_out + "'");
            emit_plot_data(f, res, p, kinds);
        }
    }
    for (const RayResult& r : res.rays)
        if (!r.error.empty())
            std::cerr << ojson{{"ray_id", r.ray_id}, {"exit", r.error_exit}, {"error", r.error}}.dump() << "\n";
    return res.exit_code();
}

// Sorted expected radial spectrum: -xi^ (1 + f times), 0 (2b + f + 2), +xi^ once.
std::vector<double> expected_spectrum(double xi, int b, int f) {
    std::vector<double> e;
    for (int i = 0; i < 1 + f; ++i) e.push_back(-xi);
    for (int i = 0; i < 2 * b + f + 2; ++i) e.push_back(0.0);
    e.push_back(xi);
    std::sort(e.begin(), e.end());
    return e;
}

int cmd_eigencheck(const std::string& scene, const Globals& g, const std::string& point, int count, int sgn_tau) {
    const SceneConfig cfg = load_with_overrides(scene, g);
    const EdgeMetricSpec& spec = cfg.metric;
    const int b = spec.b();
    const int f = spec.f();
    std::vector<CospherePoint> pts;
    if (!point.empty()) {
        const std::vector<double> v = parse_csv_numbers(point);
        if (static_cast<int>(v.size()) != 2 + 2 * b + f)
            throw ConfigError("--point needs t, y.., z.., xi_hat, eta_hat.. (" + std::to_string(2 + 2 * b + f) +
                              " numbers)");
        CospherePoint c;
        c.t = v[0];
        c.y.assign(v.begin() + 1, v.begin() + 1 + b);
        c.z.assign(v.begin() + 1 + b, v.begin() + 1 + b + f);
        c.xi_hat = v[static_cast<std::size_t>(1 + b + f)];
        c.eta_hat.assign(v.begin() + 2 + b + f, v.end());
        c.zeta_hat.assign(static_cast<std::size_t>(f), 0.0);
        c.sgn_tau = sgn_tau;
        pts.push_back(c);
    } else {
        std::mt19937_64 rng(cfg.seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int k = 0; k < count; ++k) {
            CospherePoint c;
            c.t = u(rng);
            const auto [ylo, yhi] = spec.y_range();
            for (int i = 0; i < b; ++i) c.y.push_back(ylo + (yhi - ylo) * u(rng));
            for (int j = 0; j < f; ++j) {
                const auto [lo, hi] = spec.fiber().sample_range(j);
                c.z.push_back(lo + (hi - lo) * u(rng));
            }
            c.sgn_tau = u(rng) < 0.5 ? 1 : -1;
            std::vector<double> eta(static_cast<std::size_t>(b));
            for (double& e : eta) e = 2.0 * u(rng) - 1.0;
            const double n2 = b > 0 ? eta_norm2_h(spec, c.y, eta) : 0.0;
            const double target = 0.1 + 0.8 * u(rng);  // |eta^|_h^2
            for (double& e : eta) e *= n2 > 0.0 ? std::sqrt(target / n2) : 0.0;
            c.eta_hat = eta;
            c.xi_hat = (u(rng) < 0.5 ? 1.0 : -1.0) * std::sqrt(1.0 - (b > 0 ? target : 0.0));
            c.zeta_hat.assign(static_cast<std::size_t>(f), 0.0);
            pts.push_back(c);
        }
    }
    ojson arr = ojson::array();
    bool ok = true;
    for (const CospherePoint& c : pts) {
        const RadialLinearization L = linearization_at_radial(spec, c);
        const std::vector<double> exp = expected_spectrum(c.xi_hat, b, f);
        double err = 0.0;
        for (std::size_t i = 0; i < exp.size(); ++i) err = std::max(err, std::abs(exp[i] - L.eigenvalues[i]));
        err = std::max(err, L.max_imag);
        ok = ok && err < 1e-4;
        arr.push_back({{"xi_hat", c.xi_hat}, {"eigenvalues", L.eigenvalues}, {"expected", exp}, {"max_error", err}});
    }
    emit(g, ojson{{"pass", ok}, {"points", arr}}.dump(2) + "\n");
    return 0;
}

int cmd_partners(const std::string& scene, const Globals& g, const std::string& y, const std::string& z,
                 int directions) {
    const SceneConfig cfg = load_with_overrides(scene, g);
    const std::vector<double> yv = parse_csv_numbers(y);
    const std::vector<double> zv = parse_csv_numbers(z);
    if (static_cast<int>(yv.size()) != cfg.metric.b()) throw ConfigError("--y needs b numbers");
    if (static_cast<int>(zv.size()) != cfg.metric.f()) throw ConfigError("--z needs f numbers");
    const int n = directions > 0 ? directions : default_partner_directions(cfg.metric.f());
    ojson arr = ojson::array();
    for (const Partner& p : geometric_partners(cfg.metric, yv, zv, n))
        arr.push_back({{"z", p.z}, {"multiplicity", p.multiplicity}});
    emit(g, ojson{{"y", yv}, {"z", zv}, {"directions", n}, {"partners", arr}}.dump(2) + "\n");
    return 0;
}

int cmd_orders(const Globals& g, int n, int f, const std::string& s) {
    const FundamentalOrders fo = fundamental_solution_orders(n, f);
    ojson js;
    js["n"] = n;
    js["f"] = f;
    js["incident"] = fo.incident.to_string();
    js["diffracted"] = fo.diffracted.to_string();
    js["improvement"] = rational_text(fo.diffracted.value() - fo.incident.value());
    if (!s.empty()) {
        const NonfocusingDegree d = lagrangian_nonfocusing_degree(parse_rational(s), n, f);
        js["lagrangian"] = {{"s", rational_text(parse_rational(s))},
                            {"a_priori", d.a_priori.to_string()},
                            {"degree", d.degree.to_string()},
                            {"gain", rational_text(d.degree.value() - d.a_priori.value())}};
    }
    emit(g, js.dump(2) + "\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"edgeray: bicharacteristics and diffraction on edge manifolds"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    std::uint64_t seed = 0;
    double rtol = 0.0, x_stop = 0.0;
    app.add_option("--out", g.out, "output file");
    app.add_option("--format", g.format, "csv or jsonl");
    auto* seed_opt = app.add_option("--seed", seed, "seed for sampled sources");
    auto* rtol_opt = app.add_option("--rtol", rtol, "integrator relative tolerance");
    auto* xs_opt = app.add_option("--x-stop", x_stop, "boundary event threshold");
    app.add_option("--threads", g.threads, "worker threads (EDGERAY_THREADS caps this)");

    std::string scene;
    auto* validate = app.add_subcommand("validate", "check that a scene metric is in normal form");
    int samples = 256;
    validate->add_option("scene", scene, "scene file or builtin")->required();
    validate->add_option("--samples", samples, "sample points");

    auto* trace = app.add_subcommand("trace", "trace generalized broken bicharacteristics of a scene");
    std::string plot, plot_out;
    std::vector<std::string> kinds{"all"};
    trace->add_option("scene", scene, "scene file or builtin")->required();
    trace->add_option("--plot", plot, "plot projection: tx, yx or fiber-angle");
    trace->add_option("--plot-out", plot_out, "plot data file (stderr if omitted)");
    trace->add_option("--branches", kinds, "branch kinds to plot")->delimiter(',');

    auto* eigen = app.add_subcommand("eigencheck", "radial-point spectrum of the rescaled field");
    std::string point;
    int count = 20, sgn_tau = 1;
    eigen->add_option("scene", scene, "scene file or builtin")->required();
    eigen->add_option("--point", point, "t,y..,z..,xi_hat,eta_hat..");
    eigen->add_option("--count", count, "random points when --point is absent");
    eigen->add_option("--sgn-tau", sgn_tau, "sign of tau for --point")->check(CLI::IsMember({-1, 1}));

    auto* partners = app.add_subcommand("partners", "geometric partners of a fiber point");
    std::string py, pz;
    int directions = 0;
    partners->add_option("scene", scene, "scene file or builtin")->required();
    partners->add_option("--y", py, "base point")->required();
    partners->add_option("--z", pz, "fiber point")->required();
    partners->add_option("--directions", directions, "initial directions sampled");

    auto* orders = app.add_subcommand("orders", "Sobolev orders of the fundamental solution");
    int on = 0, of = 0;
    std::string os;
    orders->add_option("--n", on, "dimension of the space")->required();
    orders->add_option("--f", of, "fiber dimension")->required();
    orders->add_option("--s", os, "Lagrangian order of the initial data");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    if (*seed_opt) g.seed = seed;
    if (*rtol_opt) g.rtol = rtol;
    if (*xs_opt) g.x_stop = x_stop;

    try {
        if (*validate) return cmd_validate(scene, g, samples);
        if (*trace) return cmd_trace(scene, g, plot, plot_out, kinds);
        if (*eigen) return cmd_eigencheck(scene, g, point, count, sgn_tau);
        if (*partners) return cmd_partners(scene, g, py, pz, directions);
        if (*orders) return cmd_orders(g, on, of, os);
    } catch (const NumericalError& e) {
        std::cerr << ojson{{"error", e.what()}, {"kind", "numerical"}}.dump() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << ojson{{"error", e.what()}, {"kind", "config"}}.dump() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << ojson{{"error", e.what()}, {"kind", "internal"}}.dump() << "\n";
        return 3;
    }
    return 0;
}
