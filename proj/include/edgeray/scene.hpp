#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "edgeray/gbb.hpp"
#include "edgeray/regularity.hpp"

namespace edgeray {

enum class SourceKind { Ray, Point };
enum class DumpFormat { Csv, Jsonl };

DumpFormat parse_format(std::string_view text);  // throws ConfigError
const char* to_string(DumpFormat f);

// dx^2 + x^2 dz^2 on a circle; stands in until a scene sets its metric.
const EdgeMetricSpec& placeholder_metric();

struct SceneConfig {
    std::string builtin;  // canonical call text, empty for inline metrics
    EdgeMetricSpec metric = placeholder_metric();

    SourceKind source = SourceKind::Ray;
    EdgePhasePoint ray;
    // Point source: spatial point (x, y.., z..), a covector fan of fan_count
    // rays plus edge_rays rays aimed at the edge (zeta = 0, incoming xi).
    std::vector<double> origin;
    int fan_count = 16;
    int edge_rays = 0;

    std::pair<double, double> t_span{0.0, 2.0};
    BranchPolicy policy;
    FlowSettings settings;
    GbbOptions gbb;

    std::optional<Order> s_incident;  // default depends on the source
    std::optional<Nonfocusing> nonfocusing;
    bool incident_clean = false;
    std::optional<double> horizon;     // short-time horizon, reported only
    std::optional<double> front_time;  // time at which the front is sampled

    std::string output;
    DumpFormat format = DumpFormat::Csv;
    std::uint64_t seed = 0;

    std::string to_text() const;
    bool operator==(const SceneConfig& other) const;
};

SceneConfig parse_scene(std::string_view text);
// A file path, or a builtin call such as "product_edge(1, 1)".
SceneConfig load_scene(const std::string& path_or_builtin);

std::vector<std::string> builtin_names();
EdgeMetricSpec builtin_metric(std::string_view call_text);
SceneConfig builtin_scene(std::string_view call_text);  // throws ConfigError for unknown names

// Euclidean line through (R, 0, 0) hitting the circle of radius R at angle
// y_hit, written as an incoming edge-coordinate point of the blowup_curve_r3
// metric a distance `back` before the hit.
EdgePhasePoint blowup_line_ray(double radius, double y_hit, const std::vector<double>& direction, double back,
                               double t_hit);
inline constexpr double kBlowupRadius = 2.0;

std::vector<EdgePhasePoint> launch_points(const SceneConfig& cfg);

struct RayResult {
    int ray_id = 0;
    EdgePhasePoint start;
    std::optional<GbbPath> path;
    std::optional<RegularityRecord> orders;
    std::string error;       // empty on success
    int error_exit = 0;      // 2 or 3 when error is set
};

struct SceneResult {
    std::vector<RayResult> rays;
    int exit_code() const;
};

// Worker count: `requested` if positive, else hardware concurrency; the
// EDGERAY_THREADS environment variable caps it.
int worker_count(int requested);

SceneResult run_scene(const SceneConfig& cfg, int threads = 0);

void write_dump(std::ostream& out, const SceneConfig& cfg, const SceneResult& res, DumpFormat format);
std::string summary_json(const SceneConfig& cfg, const SceneResult& res);

enum class Projection { TX, YX, FiberAngle };
Projection parse_projection(std::string_view text);  // throws ConfigError

// Columns: ray_id branch_id kind followed by the projected coordinates. An
// empty kind filter is an error; "all" selects every kind.
void emit_plot_data(std::ostream& out, const SceneResult& res, Projection projection,
                    const std::vector<std::string>& kinds);

}  // namespace edgeray
