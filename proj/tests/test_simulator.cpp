#include <cmath>

#include <gtest/gtest.h>

#include "splatcone/simulator.hpp"

using namespace splatcone;

namespace {

Scene sphere_at_origin(double scale) {
  return Scene({make_splat(Vec3::Zero(), Quat::Identity(), Vec3::Constant(scale), 1.0)},
               11.344866730144373);
}

TrajectoryRecord record_with_controls(const std::vector<Vec3>& controls, double dt,
                                      const Vec3& v0 = Vec3::Zero()) {
  TrajectoryRecord rec;
  rec.dt = dt;
  RobotState s;
  s.v = v0;
  for (std::size_t k = 0; k < controls.size(); ++k) {
    TrajectorySample smp;
    smp.t = static_cast<double>(k) * dt;
    smp.p = s.p;
    smp.v = s.v;
    smp.u = controls[k];
    rec.samples.push_back(smp);
    s = step(s, controls[k], dt);
  }
  rec.final_state = s;
  return rec;
}

SimConfig sim_with(FilterKind kind) {
  SimConfig cfg;
  cfg.filter = kind;
  return cfg;
}

}  // namespace

TEST(PdReference, ZeroAtGoalAtRest) {
  RobotState s;
  s.p = Vec3(1, 2, 3);
  EXPECT_EQ(pd_reference(s, Vec3(1, 2, 3), PdGains{}), Vec3::Zero());
}

TEST(PdReference, ProportionalTerm) {
  PdGains g;
  g.kp = 2.0;
  g.kd = 1.0;
  EXPECT_EQ(pd_reference(RobotState{}, Vec3(1, 0, 0), g), Vec3(2, 0, 0));
  RobotState moving;
  moving.v = Vec3(0, 1, 0);
  EXPECT_EQ(pd_reference(moving, Vec3::Zero(), g), Vec3(0, -1, 0));
}

TEST(Step, ZeroControlDrifts) {
  RobotState s;
  s.p = Vec3(1, 1, 1);
  s.v = Vec3(0.5, -1, 2);
  const RobotState n = step(s, Vec3::Zero(), 0.1);
  EXPECT_LT((n.p - Vec3(1.05, 0.9, 1.2)).norm(), 1e-15);
  EXPECT_EQ(n.v, s.v);
  EXPECT_DOUBLE_EQ(n.t, 0.1);
}

TEST(Step, UnitAccelerationForOneSecond) {
  const RobotState n = step(RobotState{}, Vec3(1, 0, 0), 1.0);
  EXPECT_EQ(n.p, Vec3(0.5, 0, 0));
  EXPECT_EQ(n.v, Vec3(1, 0, 0));
}

TEST(Step, EndpointIndependentOfStepCount) {
  RobotState a, b;
  a.v = b.v = Vec3(0.3, -0.2, 0.1);
  const Vec3 u(0.7, 0.1, -0.4);
  for (int k = 0; k < 100; ++k) a = step(a, u, 0.01);
  for (int k = 0; k < 1000; ++k) b = step(b, u, 0.001);
  // Closed form after T = 1: p = v0 T + u T^2 / 2.
  const Vec3 p = Vec3(0.3, -0.2, 0.1) + 0.5 * u;
  EXPECT_LT((a.p - p).norm(), 1e-13);
  EXPECT_LT((b.p - p).norm(), 1e-12);
  EXPECT_LT((a.v - b.v).norm(), 1e-12);
}

TEST(RunTrajectory, EmptySceneReachesGoalWithoutIntervention) {
  const Scene empty({}, 1.0);
  const TrajectoryRecord rec = run_trajectory(empty, Vec3(0, 0, 1), Vec3(4, -3, 1), SimConfig{});
  EXPECT_EQ(rec.outcome, Outcome::reached_goal);
  EXPECT_EQ(rec.interventions, 0u);
  EXPECT_FALSE(rec.first_intervention.has_value());
  for (const TrajectorySample& s : rec.samples) EXPECT_TRUE(std::isinf(s.min_h));
  EXPECT_LT((rec.final_state.p - Vec3(4, -3, 1)).norm(), 0.05);
  for (std::size_t k = 1; k < rec.samples.size(); ++k) {
    EXPECT_NEAR(rec.samples[k].t - rec.samples[k - 1].t, rec.dt, 1e-9);
  }
}

TEST(RunTrajectory, CriticallyDampedPdMatchesClosedForm) {
  // x'' = kp (D - x) - kd x' with kd = 2 sqrt(kp):
  // x(t) = D (1 - (1 + w t) e^{-w t}), w = sqrt(kp), monotone, no overshoot.
  const Scene empty({}, 1.0);
  SimConfig cfg = sim_with(FilterKind::off);
  const double D = 5.0;
  const TrajectoryRecord rec = run_trajectory(empty, Vec3::Zero(), Vec3(D, 0, 0), cfg);
  ASSERT_EQ(rec.outcome, Outcome::reached_goal);
  const double w = std::sqrt(cfg.gains.kp);
  double worst = 0.0;
  for (const TrajectorySample& s : rec.samples) {
    const double x = D * (1.0 - (1.0 + w * s.t) * std::exp(-w * s.t));
    worst = std::max(worst, std::abs(s.p.x() - x));
    EXPECT_LE(s.p.x(), D + 1e-9);
  }
  EXPECT_LT(worst, 1e-2 * D);
}

TEST(RunTrajectory, BlockingSplatConeFilterStaysSafe) {
  // The splat is inside the activation radius from the first step.
  const Scene scene = sphere_at_origin(0.3);
  const TrajectoryRecord rec =
      run_trajectory(scene, Vec3(-2.5, 1e-3, 0), Vec3(6, 0, 0), sim_with(FilterKind::cone));
  EXPECT_EQ(rec.outcome, Outcome::reached_goal);
  double min_h = INFINITY;
  for (const TrajectorySample& s : rec.samples) min_h = std::min(min_h, s.min_h);
  EXPECT_GE(min_h, -1e-6);
  EXPECT_GE(rec.audit.min_clearance, -1e-6);
  EXPECT_GT(rec.interventions, 0u);
}

TEST(RunTrajectory, BlockingSplatWithoutFilterCollides) {
  const Scene scene = sphere_at_origin(0.3);
  const TrajectoryRecord rec =
      run_trajectory(scene, Vec3(-6, 1e-3, 0), Vec3(6, 0, 0), sim_with(FilterKind::off));
  EXPECT_EQ(rec.outcome, Outcome::collided);
  EXPECT_TRUE(rec.audit.collided);
  EXPECT_LT(rec.audit.min_clearance, 0.0);
}

TEST(RunTrajectory, BlockingSplatDistanceBaselineStaysSafe) {
  const Scene scene = sphere_at_origin(0.3);
  const TrajectoryRecord rec = run_trajectory(scene, Vec3(-6, 1e-3, 0), Vec3(6, 0, 0),
                                              sim_with(FilterKind::distance_baseline));
  EXPECT_NE(rec.outcome, Outcome::collided);
  EXPECT_GE(rec.audit.min_clearance, -1e-6);
}

TEST(RunTrajectory, StartInsideEllipsoidIsConfigError) {
  const Scene scene = sphere_at_origin(1.0);
  EXPECT_THROW(run_trajectory(scene, Vec3(0.1, 0, 0), Vec3(8, 0, 0), SimConfig{}), ConfigError);
}

TEST(RunTrajectory, ConeFilterActivatesEarlierThanBaselineHeadOn) {
  const Scene scene = sphere_at_origin(0.3);
  const TrajectoryRecord cone =
      run_trajectory(scene, Vec3(-2.5, 1e-3, 0), Vec3(6, 0, 0), sim_with(FilterKind::cone));
  const TrajectoryRecord base = run_trajectory(scene, Vec3(-2.5, 1e-3, 0), Vec3(6, 0, 0),
                                               sim_with(FilterKind::distance_baseline));
  ASSERT_TRUE(cone.first_intervention.has_value());
  ASSERT_TRUE(base.first_intervention.has_value());
  EXPECT_GT(cone.first_intervention_distance, base.first_intervention_distance);
}

TEST(CollisionAudit, UsesPositionsOnly) {
  const Scene scene = sphere_at_origin(0.5);
  const double c2 = scene.confidence();
  const double radius = 0.5 * std::sqrt(c2);
  const CollisionAudit clear =
      audit_positions(scene, {Vec3(-3, 0, 0), Vec3(0, radius * 1.01, 0), Vec3(3, 0, 0)}, c2, 0.0);
  EXPECT_FALSE(clear.collided);
  EXPECT_GT(clear.min_clearance, 0.0);
  EXPECT_EQ(clear.worst_sample, 1u);
  const CollisionAudit hit = audit_positions(scene, {Vec3(-3, 0, 0), Vec3(0, radius * 0.9, 0)}, c2, 0.0);
  EXPECT_TRUE(hit.collided);
  // A robot radius inflates the ellipsoid to c + rho / s_min.
  const CollisionAudit inflated =
      audit_positions(scene, {Vec3(0, radius * 1.01, 0)}, c2, 0.1);
  EXPECT_TRUE(inflated.collided);
  const double cm = std::sqrt(c2) + 0.1 / 0.5;
  EXPECT_NEAR(inflated.min_clearance, std::pow(radius * 1.01 / 0.5, 2) - cm * cm, 1e-9);
}

TEST(BaselineFilter, FarFromSplatsKeepsReference) {
  const Scene scene = sphere_at_origin(0.3);
  RobotState s;
  s.p = Vec3(50, 0, 0);
  const FilterStepResult r = baseline_distance_filter_step(scene, s, Vec3(-1, 0.5, 0), FilterConfig{});
  EXPECT_EQ(r.solution.u, Vec3(-1, 0.5, 0));
}

TEST(BaselineFilter, ReactsAtRestNearSplat) {
  const Scene scene = sphere_at_origin(0.3);
  const double radius = 0.3 * std::sqrt(scene.confidence());
  RobotState s;
  s.p = Vec3(radius + 0.05, 0, 0);
  const Vec3 u_ref(-5, 0, 0);
  FilterConfig cfg;
  const FilterStepResult r = baseline_distance_filter_step(scene, s, u_ref, cfg);
  EXPECT_EQ(r.solution.status, SolveStatus::optimal);
  EXPECT_GT((r.solution.u - u_ref).norm(), 1.0);
  EXPECT_GT(r.solution.u.x(), u_ref.x());
}

TEST(Metrics, ConstantControlHasNoJerk) {
  const TrajectoryRecord rec = record_with_controls(std::vector<Vec3>(50, Vec3(0.2, 0, 0)), 0.02);
  const SmoothnessMetrics m = compute_metrics(rec);
  EXPECT_EQ(m.isj, 0.0);
  EXPECT_EQ(m.rmsJ, 0.0);
}

TEST(Metrics, AlternatingControlClosedForm) {
  const double a = 0.5, dt = 0.02;
  std::vector<Vec3> u;
  for (int k = 0; k < 41; ++k) u.push_back(Vec3((k % 2 ? -a : a), 0, 0));
  const SmoothnessMetrics m = compute_metrics(record_with_controls(u, dt));
  const double expected = 40.0 * std::pow(2.0 * a / dt, 2) * dt;
  EXPECT_NEAR(m.isj, expected, 1e-9 * expected);
  EXPECT_NEAR(m.rmsJ * m.rmsJ * m.duration, m.isj, 1e-9 * m.isj);
  EXPECT_NEAR(m.duration, 41 * dt, 1e-15);
}

TEST(Metrics, StraightLinePathLength) {
  const double speed = 1.3, dt = 0.02;
  const TrajectoryRecord rec =
      record_with_controls(std::vector<Vec3>(100, Vec3::Zero()), dt, Vec3(speed, 0, 0));
  const SmoothnessMetrics m = compute_metrics(rec);
  EXPECT_NEAR(m.path_length, speed * m.duration, 1e-9);
  EXPECT_EQ(m.nJ, 0.0);
}

TEST(Metrics, NeedsFourSamples) {
  EXPECT_THROW(compute_metrics(record_with_controls(std::vector<Vec3>(3, Vec3::Zero()), 0.02)),
               ConfigError);
}

TEST(Summarize, LinearQuantiles) {
  const Distribution d = summarize({5, 1, 4, 2, 3});
  EXPECT_EQ(d.min, 1.0);
  EXPECT_EQ(d.max, 5.0);
  EXPECT_EQ(d.median, 3.0);
  EXPECT_EQ(d.p25, 2.0);
  EXPECT_DOUBLE_EQ(d.p90, 4.6);
  EXPECT_DOUBLE_EQ(d.mean, 3.0);
  EXPECT_EQ(d.count, 5u);
}

TEST(RunBatch, EmptySceneAntipodalPairs) {
  const Scene empty({}, 1.0);
  BatchConfig cfg;
  const BatchReport rep = run_batch(empty, 2, cfg, 3);
  ASSERT_EQ(rep.trajectories.size(), 2u);
  EXPECT_DOUBLE_EQ(rep.success_rate, 1.0);
  for (const TrajectoryResult& t : rep.trajectories) {
    EXPECT_EQ(t.record.outcome, Outcome::reached_goal);
    EXPECT_EQ(t.record.interventions, 0u);
    EXPECT_LT((t.record.start + t.record.goal).norm(), 2e-3);
  }
  EXPECT_LT((rep.trajectories[0].record.start + rep.trajectories[1].record.start).norm(), 1e-9);
}

TEST(RunBatch, DeterministicForSeedAndThreadCount) {
  SyntheticSpec spec;
  spec.count = 400;
  const Scene scene = make_synthetic_scene(spec, 7);
  BatchConfig cfg;
  cfg.sim.timeout = 30.0;
  cfg.threads = 1;
  const BatchReport a = run_batch(scene, 4, cfg, 9);
  cfg.threads = 4;
  const BatchReport b = run_batch(scene, 4, cfg, 9);
  ASSERT_EQ(a.trajectories.size(), b.trajectories.size());
  for (std::size_t k = 0; k < a.trajectories.size(); ++k) {
    const auto& ra = a.trajectories[k].record;
    const auto& rb = b.trajectories[k].record;
    EXPECT_EQ(ra.outcome, rb.outcome);
    ASSERT_EQ(ra.samples.size(), rb.samples.size());
    EXPECT_EQ(ra.final_state.p, rb.final_state.p);
  }
  EXPECT_EQ(a.isj.median, b.isj.median);
  EXPECT_EQ(a.success_rate, b.success_rate);
}

TEST(FilterKind, ParsesNames) {
  EXPECT_EQ(parse_filter_kind("cone"), FilterKind::cone);
  EXPECT_EQ(parse_filter_kind(to_string(FilterKind::distance_baseline)), FilterKind::distance_baseline);
  EXPECT_EQ(parse_filter_kind("off"), FilterKind::off);
  EXPECT_THROW(parse_filter_kind("magic"), ConfigError);
}
