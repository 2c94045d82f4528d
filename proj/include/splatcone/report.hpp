#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "splatcone/simulator.hpp"

namespace splatcone {

// Insertion-ordered so that serialized reports are stable and readable.
using Json = nlohmann::ordered_json;

inline constexpr const char* kNjDefinition = "isj / path_length";

// Writes to a temporary file next to `path`, then renames it into place.
// Throws IoError on failure.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// Shortest decimal that round-trips; "inf", "-inf" and "nan" otherwise.
std::string format_double(double value);

Json to_json(const FilterConfig& cfg);
Json to_json(const SimConfig& cfg);
Json to_json(const BatchConfig& cfg);
Json to_json(const SmoothnessMetrics& metrics);
Json to_json(const Distribution& dist);
Json to_json(const CollisionAudit& audit);

/// One row per applied control:
///   t,px,py,pz,vx,vy,vz,ux,uy,uz,min_h,solve_time,build_time,qp_time
/// solve_time is build_time + qp_time. min_h is "inf" when no splat was
/// active.
std::string trajectory_csv(const TrajectoryRecord& record);

// Reproducible fields only (no wall-clock values).
Json trajectory_summary(const TrajectoryRecord& record,
                        const std::optional<SmoothnessMetrics>& metrics);
Json trajectory_timing(const TrajectoryRecord& record);

// One row per trajectory: index, outcome, metrics, audit clearance and
// first-intervention distance.
std::string batch_metrics_csv(const BatchReport& report);
Json batch_summary(const BatchReport& report);
Json batch_timing(const BatchReport& report);

struct PlotOptions {
  int axis_x = 0;  // scene axis drawn left to right
  int axis_y = 1;  // scene axis drawn bottom to top
  double width = 800.0;
  // Larger scenes are thinned with a fixed stride.
  std::size_t max_splats = 20000;
};

// Parses "xy", "xz" or "yz".
PlotOptions parse_projection(const std::string& axes);

/// Projection of the scene with 2-sigma ellipses of the splat covariances,
/// trajectory polylines and start/goal markers.
std::string trajectory_svg(const Scene& scene,
                           const std::vector<const TrajectoryRecord*>& records,
                           const PlotOptions& opts = {});

struct NamedReport {
  std::string name;
  const BatchReport* report = nullptr;
};

/// Box plots (p25-p75 box, median bar, min-max whiskers) of nJ, RMS-J,
/// ISJ and per-step planning time, one box per filter.
std::string batch_box_svg(const std::vector<NamedReport>& reports);

}  // namespace splatcone
