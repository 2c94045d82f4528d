#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "splatcone/collision_cone.hpp"
#include "splatcone/splat_scene.hpp"
#include "splatcone/types.hpp"

namespace splatcone {

struct RobotState {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  double t = 0.0;
};

/// Half-space normal^T u >= offset in control space, one per active splat.
struct LinearControlConstraint {
  Vec3 normal = Vec3::Zero();
  double offset = 0.0;
  std::size_t splat_id = 0;
  double h_value = 0.0;

  double value(const Vec3& u) const { return normal.dot(u) - offset; }
};

/// Control-affine velocity dynamics v' = f_v + g_v u, evaluated at the
/// current state, together with the position drift p' = f_p.
struct VelocityDynamics {
  Vec3 f_p = Vec3::Zero();
  Vec3 f_v = Vec3::Zero();
  Mat3 g_v = Mat3::Identity();

  static VelocityDynamics double_integrator(const Vec3& v) {
    return {v, Vec3::Zero(), Mat3::Identity()};
  }
};

// w = gamma A v - delta A r. For the double integrator grad_v h = 2 w.
Vec3 lie_derivative_w(const RelativeGeometry& geom);

// (g_v^T w)^T u >= -(p_k / 2) h - w^T f_v.
LinearControlConstraint build_constraint(const RelativeGeometry& geom,
                                         const VelocityDynamics& dynamics,
                                         double p_k, std::size_t splat_id = 0);

// Double-integrator form: w^T u >= -(p_k / 2) h.
LinearControlConstraint build_constraint_double_integrator(
    const RelativeGeometry& geom, double p_k, std::size_t splat_id = 0);

/// Robot-inflated barrier h = beta (r^T A r - c_M^2) - delta^2 with the
/// c_M gradient terms of the exact Minkowski radius. `geom.c2` is the bare
/// c^2. Both sides carry the same factor 1/2 as build_constraint:
///   normal = g_v^T (eta A v - delta A r - beta c_M grad_v c_M)
///   offset = -(p_k/2) h - (eta A v - delta A r - beta c_M grad_v c_M)^T f_v
///            + beta c_M grad_p c_M^T f_p
/// Throws DegenerateDirectionError in exact mode when the direction is
/// degenerate and rho > 0.
LinearControlConstraint build_constraint_inflated(
    const RelativeGeometry& geom, const Vec3& scales, double rho,
    InflationMode mode, const VelocityDynamics& dynamics, double p_k,
    std::size_t splat_id = 0);

// Inflated barrier value, exposed for derivative audits.
double inflated_barrier_value(const RelativeGeometry& geom, const Vec3& scales,
                              double rho, InflationMode mode);

struct VelocityBound {
  Vec3 v = Vec3::Zero();
  double dt = 0.02;
  double v_max = std::numeric_limits<double>::infinity();
};

struct FilterProblem {
  Vec3 reference = Vec3::Zero();
  std::vector<LinearControlConstraint> constraints;
  double a_max = 1.0;
  std::optional<VelocityBound> velocity;
  std::optional<double> slack_weight;  // unset: hard constraints
};

enum class SolveStatus { optimal, infeasible, degraded };
std::string to_string(SolveStatus status);

struct FilterSolution {
  Vec3 u = Vec3::Zero();
  SolveStatus status = SolveStatus::optimal;
  std::vector<std::size_t> active_ids;
  double slack_used = 0.0;
  double solve_time = 0.0;  // seconds

  // Multipliers of the row-normalized half-spaces (same order as the
  // problem's constraints; zero for dropped rows) and of the acceleration
  // and velocity balls.
  std::vector<double> multipliers;
  double accel_multiplier = 0.0;
  double velocity_multiplier = 0.0;
  std::vector<double> slacks;  // normalized units, slack mode only
  double kkt_residual = 0.0;
  int iterations = 0;
};

/// min |u - u_ref|^2  s.t.  a_i^T u >= b_i,  |u| <= a_max,
///                          |v + dt u| <= v_max (when a velocity bound is set).
///
/// Rows are normalized by |a_i| before solving. A zero row with b_i <= 0 is
/// dropped; with b_i > 0 it makes the problem infeasible. With a slack
/// weight W the half-spaces become a_i^T u >= b_i - xi_i with W sum xi_i^2
/// added to the objective. If the current speed already exceeds v_max by more than
/// half a braking step, the velocity ball radius is widened to
/// |v| - a_max dt / 2 so that the bound stays satisfiable.
/// Throws SolverError on non-convergence.
FilterSolution solve_filter(const FilterProblem& problem);

enum class SlackPolicy { hard, slack };
std::string to_string(SlackPolicy policy);
SlackPolicy parse_slack_policy(const std::string& name);

/// Per-step options shared by the cone filter and the distance baseline.
struct FilterConfig {
  double p_k = 1.0;
  std::optional<double> confidence;  // overrides the scene's c^2
  // Splats whose bounding sphere (sqrt(c^2) * max scale + rho) comes within
  // activation_radius + activation_horizon * |v| of the robot.
  double activation_radius = 3.0;
  double activation_horizon = 5.0;
  double rho = 0.0;
  InflationMode inflation = InflationMode::conservative;
  SlackPolicy slack = SlackPolicy::hard;
  double slack_weight = 1e4;
  double a_max = 5.0;
  std::optional<double> v_max = 2.0;  // unset: no velocity bound
  double dt = 0.02;
  // At or below this speed the cone rows are replaced by supporting planes
  // that keep the next velocity v + dt u outside every cone. Must stay below
  // a_max * dt so that such a velocity is reachable in one step.
  double rest_speed = 0.01;
  // Only splats the robot approaches (r^T A v >= 0) get a constraint.
  bool approach_gating = true;
  // Distance baseline gains; unset means p_k.
  std::optional<double> alpha1;
  std::optional<double> alpha2;

  double activation_radius_at(const Vec3& v) const {
    return activation_radius + activation_horizon * v.norm();
  }
};

struct SplatDiagnostic {
  std::size_t splat_id = 0;
  double h = 0.0;
};

struct FilterStepResult {
  FilterSolution solution;
  std::vector<SplatDiagnostic> diagnostics;
  double min_h = std::numeric_limits<double>::infinity();
  std::size_t candidates = 0;  // splats within the activation radius
  std::vector<std::size_t> inside_ids;
  double build_time = 0.0;  // seconds, query + constraint construction
};

/// One cone-filter step: query nearby splats, build one constraint per
/// approached splat (skipping vacuous v = 0 rows), and solve. Near rest
/// (|v| <= rest_speed) every nearby splat instead gets the supporting plane
/// of its cone through the escape direction closest to u_ref; the step is
/// infeasible when no direction escapes all cones. A robot inside
/// an ellipsoid returns status infeasible in hard mode; in slack mode the
/// constraint is kept and relaxed.
FilterStepResult filter_step(const Scene& scene, const RobotState& state,
                             const Vec3& u_ref, const FilterConfig& cfg);

}  // namespace splatcone
