#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "splatcone/cbf_qp.hpp"
#include "splatcone/splat_scene.hpp"

namespace splatcone {

// Critically damped (kd = 2 sqrt(kp)). From rest at distance D the speed
// peaks at D sqrt(kp) / e, about 0.08 D, without saturating a_max.
struct PdGains {
  double kp = 0.05;
  double kd = 0.4472135954999579;
};

// u_ref = kp (goal - p) - kd v.
Vec3 pd_reference(const RobotState& state, const Vec3& goal, const PdGains& gains);

// Exact zero-order-hold step of the double integrator.
RobotState step(const RobotState& state, const Vec3& u, double dt);

enum class FilterKind { cone, distance_baseline, off };
std::string to_string(FilterKind kind);
FilterKind parse_filter_kind(const std::string& name);

/// Second-order distance barrier used as the comparison baseline:
/// h_d = (p - mu)^T A (p - mu) - c'^2 with c' = c + rho / s_min, enforced as
/// h_d'' + (a1 + a2) h_d' + a1 a2 h_d >= 0, which is affine in u. It reacts
/// to proximity alone, so it is active even for a stationary robot.
FilterStepResult baseline_distance_filter_step(const Scene& scene,
                                               const RobotState& state,
                                               const Vec3& u_ref,
                                               const FilterConfig& cfg);

struct SimConfig {
  FilterKind filter = FilterKind::cone;
  FilterConfig filter_cfg;
  PdGains gains;
  double timeout = 120.0;  // seconds of simulated time
  double goal_tolerance = 0.05;
  double goal_speed_tolerance = 0.1;
  double intervention_tol = 1e-6;  // |u - clip(u_ref)| counted as intervention
};

enum class Outcome { reached_goal, infeasible, collided, timeout };
std::string to_string(Outcome outcome);

struct TrajectorySample {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 u = Vec3::Zero();
  Vec3 u_ref = Vec3::Zero();
  double min_h = std::numeric_limits<double>::infinity();
  double build_time = 0.0;
  double qp_time = 0.0;
  bool intervened = false;

  // Planning time: constraint construction plus solve.
  double solve_time() const { return build_time + qp_time; }
};

/// Post-hoc collision audit over the recorded positions only.
struct CollisionAudit {
  // min over samples and splats of (p - mu)^T A (p - mu) - c_M^2, with the
  // conservative radius c_M = c + rho / s_min.
  double min_clearance = std::numeric_limits<double>::infinity();
  std::size_t worst_splat = 0;
  std::size_t worst_sample = 0;
  bool collided = false;
};

// Penetration deeper than this (in squared Mahalanobis units) is a
// collision; grazing contact within it is not.
inline constexpr double kContactTolerance = 1e-6;

CollisionAudit audit_positions(const Scene& scene, const std::vector<Vec3>& positions,
                               double confidence, double rho);

struct TrajectoryRecord {
  std::vector<TrajectorySample> samples;  // one per applied control
  RobotState final_state;
  Outcome outcome = Outcome::timeout;
  Vec3 start = Vec3::Zero();
  Vec3 goal = Vec3::Zero();
  CollisionAudit audit;
  std::optional<TrajectorySample> first_intervention;
  double first_intervention_distance = std::numeric_limits<double>::quiet_NaN();
  std::size_t interventions = 0;
  double dt = 0.02;

  std::vector<Vec3> positions() const;  // samples plus the final state
};

/// Closed loop: PD reference, safety filter, exact step, until the goal is
/// reached (|p - goal| < goal_tolerance and |v| < goal_speed_tolerance),
/// the filter is infeasible (hard mode), or the timeout. The collision audit
/// then overrides the outcome when the path penetrates any ellipsoid.
/// Throws ConfigError if the start is inside an ellipsoid.
TrajectoryRecord run_trajectory(const Scene& scene, const Vec3& start,
                                const Vec3& goal, const SimConfig& cfg);

struct SmoothnessMetrics {
  double nJ = 0.0;     // isj / path_length
  double rmsJ = 0.0;   // sqrt(isj / duration)
  double isj = 0.0;    // sum |du/dt|^2 dt
  double path_length = 0.0;
  double duration = 0.0;
};

// Jerk from first differences of the recorded controls. Needs >= 4 samples.
SmoothnessMetrics compute_metrics(const TrajectoryRecord& record);

struct BatchConfig {
  SimConfig sim;
  // Starts on a horizontal circle around the scene center at `height`;
  // unset values are derived from the scene bounds.
  std::optional<double> start_radius;
  std::optional<double> height;
  // Lateral goal jitter (scene units) breaking exact head-on symmetry.
  double goal_jitter = 1e-3;
  unsigned threads = 0;  // 0: hardware concurrency
};

struct TrajectoryResult {
  TrajectoryRecord record;
  std::optional<SmoothnessMetrics> metrics;
};

struct Distribution {
  double min = 0.0;
  double p25 = 0.0;
  double median = 0.0;
  double mean = 0.0;
  double p75 = 0.0;
  double p90 = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

// Quantiles interpolate linearly between order statistics.
Distribution summarize(std::vector<double> values);

struct BatchReport {
  std::vector<TrajectoryResult> trajectories;
  std::vector<std::string> warnings;
  double success_rate = 0.0;
  std::size_t outcome_counts[4] = {0, 0, 0, 0};  // indexed by Outcome
  Distribution nJ, rmsJ, isj, path_length;
  // Wall-clock; not reproducible between runs.
  Distribution step_build_time, step_qp_time, step_time;
};

// Start/goal pairs used by run_batch: starts evenly spaced on the circle
// with a seeded phase, goals opposite with a seeded lateral jitter. Points
// inside an ellipsoid are pushed outward in 0.25 steps, with a warning.
std::vector<std::pair<Vec3, Vec3>> batch_endpoints(const Scene& scene, std::size_t n,
                                                   const BatchConfig& cfg, std::uint64_t seed,
                                                   std::vector<std::string>* warnings = nullptr);

/// n trajectories with starts spread evenly on a circle and goals on the
/// opposite side. Deterministic for a fixed seed regardless of threading.
BatchReport run_batch(const Scene& scene, std::size_t n, const BatchConfig& cfg,
                      std::uint64_t seed);

}  // namespace splatcone
