#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "splatcone/report.hpp"
#include "splatcone/simulator.hpp"
#include "splatcone/splat_scene.hpp"

namespace splatcone {

// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,           // ran to a defined outcome (including collided/infeasible)
  kExitConfig = 1,       // invalid configuration
  kExitIo = 2,           // unreadable input or unwritable output
  kExitSolver = 3,       // internal solver failure
};

/// Fully resolved options of one run or batch.
///
/// `scene` is a PLY or scene-dump path, or `synthetic:<pattern>[:<count>[:<seed>]]`
/// with pattern single, ring, clutter or wall (count 2000, seed 7 by default),
/// or `synthetic:empty`.
struct RunConfig {
  std::string scene = "synthetic:ring";
  PreprocessOptions preprocess;
  SimConfig sim;
  std::optional<Vec3> start;  // run: defaults to the first batch endpoint pair
  std::optional<Vec3> goal;
  std::uint64_t seed = 1;
  std::filesystem::path out = "out";
  std::string projection = "xy";
  // batch
  std::size_t n = 50;
  std::vector<FilterKind> filters{FilterKind::cone, FilterKind::distance_baseline};
  std::optional<double> start_radius;
  std::optional<double> height;
  double goal_jitter = 1e-3;
  unsigned threads = 0;

  BatchConfig batch_config() const;
  // Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Reads `key = value` sections:
///   [scene]  source, opacity_min, scale_min, scale_max, anisotropy_cap, confidence
///   [filter] kind, p_k, rho, inflation, slack, slack_weight, a_max, v_max, dt,
///            activation_radius, activation_horizon, rest_speed, approach_gating,
///            alpha1, alpha2
///   [sim]    kp, kd, timeout, goal_tolerance, goal_speed_tolerance
///   [run]    start, goal ("x y z"), seed, out, projection
///   [batch]  n, filters (comma separated), start_radius, height, goal_jitter, threads
/// Unknown sections or keys are errors. Throws ConfigError for a missing
/// file or bad values and ParseError for malformed INI syntax.
void apply_config_file(const std::filesystem::path& path, RunConfig& cfg);

// Sets one option by its "section.key" name, as in the config file.
void apply_option(RunConfig& cfg, const std::string& name, const std::string& value);

Json to_json(const RunConfig& cfg);

// Loads a file or generates a synthetic scene per RunConfig::scene.
Scene make_scene(const std::string& source, const PreprocessOptions& opts,
                 PreprocessReport* report = nullptr);

struct ConvertOptions {
  std::filesystem::path input;
  std::filesystem::path output;  // .ply writes PLY, anything else a scene dump
  PreprocessOptions preprocess;
};

// The cmd_* functions print a short summary to `log`, write their artifacts
// atomically and return an ExitCode. Errors propagate as exceptions; use
// run_command to map them to exit codes.
int cmd_convert(const ConvertOptions& opts, std::ostream& log);
int cmd_generate(const std::string& source, const std::filesystem::path& output,
                 std::ostream& log);
// Writes trajectory.csv, summary.json and trajectory.svg under cfg.out.
int cmd_run(const RunConfig& cfg, std::ostream& log);
// Writes <filter>_metrics.csv and <filter>_trajectories.svg per filter, then
// batch_report.json (reproducible), batch_timing.json (wall clock) and
// batch_boxes.svg under cfg.out.
int cmd_batch(const RunConfig& cfg, std::ostream& log);

// Runs `fn`, printing any error to `err` and mapping it to an ExitCode.
int run_command(const std::function<int()>& fn, std::ostream& err);

}  // namespace splatcone
