// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "splatcone/cbf_qp.hpp"
#include "splatcone/chi2.hpp"
#include "splatcone/collision_cone.hpp"
#include "splatcone/simulator.hpp"
#include "splatcone/splat_scene.hpp"
#include "test_util.hpp"

namespace {

using namespace splatcone;
using namespace splatcone::testing;
using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double h_scale(const RelativeGeometry& g) { return g.beta() * g.r.dot(g.A * g.r); }

std::vector<RelativeGeometry> cone_cases(std::size_t n) {
  std::mt19937_64 rng(2024);
  std::vector<RelativeGeometry> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_exterior_geometry(rng, 0.1, 10.0));
  return out;
}

void cone_oracle(const std::vector<RelativeGeometry>& cases) {
  const auto t0 = Clock::now();
  std::size_t compared = 0, agree = 0, hits = 0;
  for (const RelativeGeometry& g : cases) {
    if (std::abs(barrier_value(g)) <= 1e-9 * h_scale(g)) continue;
    const bool verdict = in_forward_cone(g);
    ++compared;
    hits += verdict;
    agree += verdict == quadratic_root_hits(g);
  }
  const double elapsed = seconds_since(t0);
  report(1, agree == compared && elapsed < 5.0,
         fmt("cone vs root oracle: %zu/%zu agree (%zu hits), %.3f s", agree, compared, hits,
             elapsed));
}

void whitening(const std::vector<RelativeGeometry>& cases) {
  std::size_t verdict_agree = 0;
  double worst = 0.0;
  for (const RelativeGeometry& g : cases) {
    const Mat3 L = Eigen::LLT<Mat3>(g.A).matrixU();  // L^T L = A
    verdict_agree += whitened_test(g, L) == in_forward_cone(g);
    const double h = barrier_value(g);
    const double hw = whitened_barrier_value(g, L);
    worst = std::max(worst, std::abs(hw - h) / std::max(std::abs(h), 1e-300));
  }
  report(2, verdict_agree == cases.size() && worst < 1e-8,
         fmt("verdicts %zu/%zu equal, worst relative |h~ - h| / |h| = %.2e", verdict_agree,
             cases.size(), worst));
}

Vec3 central_difference(const std::function<double(const Vec3&)>& f, const Vec3& x, double eps) {
  Vec3 g;
  for (int k = 0; k < 3; ++k) {
    Vec3 xp = x, xm = x;
    xp[k] += eps;
    xm[k] -= eps;
    g[k] = (f(xp) - f(xm)) / (2.0 * eps);
  }
  return g;
}

Mat3 central_jacobian(const std::function<Vec3(const Vec3&)>& f, const Vec3& x, double eps) {
  Mat3 J;
  for (int k = 0; k < 3; ++k) {
    Vec3 xp = x, xm = x;
    xp[k] += eps;
    xm[k] -= eps;
    J.col(k) = (f(xp) - f(xm)) / (2.0 * eps);
  }
  return J;
}

double mat_rel_err(const Mat3& a, const Mat3& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-300});
}

void gradients() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double worst_h = 0.0, worst_cm_p = 0.0, worst_cm_v = 0.0, worst_t_r = 0.0, worst_t_v = 0.0;
  std::size_t excluded = 0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    const RandomEllipsoid e = random_ellipsoid(rng, 0.1, 10.0);
    RelativeGeometry g = random_exterior_geometry(rng, 0.1, 10.0);
    g.A = e.A;
    const double radius = std::sqrt(g.c2 / g.r.normalized().dot(g.A * g.r.normalized()));
    g.r = g.r.normalized() * radius * (1.05 + 3.0 * u01(rng));

    const Vec3 grad = 2.0 * lie_derivative_w(g);
    const Vec3 fd = central_difference(
        [&](const Vec3& v) {
          RelativeGeometry q = g;
          q.v = v;
          return barrier_value(q);
        },
        g.v, 1e-3 * g.v.norm());
    worst_h = std::max(worst_h, vec_rel_err(grad, fd));

    const Vec3 t = projection_t(g.r, g.v, g.A);
    if (t.norm() < 1e-3 * g.r.norm()) {
      ++excluded;
      continue;
    }
    const double rho = 0.05 + 0.5 * u01(rng);
    const InflationResult inf = inflate(g, e.scales, rho, InflationMode::exact);
    const double eps_p = 1e-6 * g.r.norm();
    const double eps_v = 1e-6 * g.v.norm();
    const Vec3 fd_p = central_difference(
        [&](const Vec3& p) {
          RelativeGeometry q = g;
          q.r = g.r - p;  // r = mu - p, evaluated at p = 0 + dp
          return inflate(q, e.scales, rho, InflationMode::exact).c_M;
        },
        Vec3::Zero(), eps_p);
    const Vec3 fd_v = central_difference(
        [&](const Vec3& v) {
          RelativeGeometry q = g;
          q.v = v;
          return inflate(q, e.scales, rho, InflationMode::exact).c_M;
        },
        g.v, eps_v);
    worst_cm_p = std::max(worst_cm_p, vec_rel_err(inf.grad_cM_p, fd_p));
    worst_cm_v = std::max(worst_cm_v, vec_rel_err(inf.grad_cM_v, fd_v));
    worst_t_r = std::max(
        worst_t_r,
        mat_rel_err(projection_t_dr(g.r, g.v, g.A),
                    central_jacobian([&](const Vec3& r) { return projection_t(r, g.v, g.A); },
                                     g.r, eps_p)));
    worst_t_v = std::max(
        worst_t_v,
        mat_rel_err(projection_t_dv(g.r, g.v, g.A),
                    central_jacobian([&](const Vec3& v) { return projection_t(g.r, v, g.A); },
                                     g.v, eps_v)));
  }
  const bool pass = worst_h < 1e-5 && worst_cm_p < 1e-4 && worst_cm_v < 1e-4 &&
                    worst_t_r < 1e-4 && worst_t_v < 1e-4;
  report(3, pass,
         fmt("%d states: grad_v h %.1e, grad_p c_M %.1e, grad_v c_M %.1e, dt/dr %.1e, "
             "dt/dv %.1e (%zu in degenerate band skipped)",
             n, worst_h, worst_cm_p, worst_cm_v, worst_t_r, worst_t_v, excluded));
}

struct BatchPair {
  BatchReport cone;
  BatchReport baseline;
};

BatchPair ring_batches(const Scene& scene) {
  BatchConfig cfg;
  cfg.sim.filter_cfg.slack = SlackPolicy::hard;
  BatchPair out;
  cfg.sim.filter = FilterKind::cone;
  out.cone = run_batch(scene, 50, cfg, 1);
  cfg.sim.filter = FilterKind::distance_baseline;
  out.baseline = run_batch(scene, 50, cfg, 1);
  return out;
}

std::string outcome_counts(const BatchReport& r) {
  return fmt("reached %zu, infeasible %zu, collided %zu, timeout %zu", r.outcome_counts[0],
             r.outcome_counts[1], r.outcome_counts[2], r.outcome_counts[3]);
}

void forward_invariance(const Scene& scene, const BatchPair& b) {
  double worst = INFINITY;
  std::size_t reached = 0, unsafe = 0;
  for (const TrajectoryResult& t : b.cone.trajectories) {
    if (t.record.outcome != Outcome::reached_goal) continue;
    ++reached;
    worst = std::min(worst, t.record.audit.min_clearance);
    unsafe += t.record.audit.min_clearance < -1e-6;
  }
  report(4, unsafe == 0 && b.cone.success_rate >= 0.9,
         fmt("%zu-splat ring, 50 trajectories: success %.0f%% (%s), worst audited clearance "
             "over reached %.3g (%zu unsafe)",
             scene.size(), 100.0 * b.cone.success_rate, outcome_counts(b.cone).c_str(), worst,
             unsafe));
}

void proactivity() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double c2 = default_confidence();
  const int n = 24;
  int ordered = 0, compared = 0;
  double cone_sum = 0.0, base_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec3 scales = i % 2 == 0 ? Vec3::Constant(0.2 + 0.3 * u01(rng))
                                   : Vec3(0.2 + 0.4 * u01(rng), 0.2 + 0.4 * u01(rng),
                                          0.2 + 0.4 * u01(rng));
    std::normal_distribution<double> nd;
    const Quat q = Quat(nd(rng), nd(rng), nd(rng), nd(rng)).normalized();
    const Scene scene({make_splat(Vec3::Zero(), q, scales, 1.0)}, c2);
    const double surface = std::sqrt(c2) * scales.maxCoeff();
    const double d = surface + 0.5 + 1.5 * u01(rng);
    const Vec3 dir = random_unit(rng);
    const Vec3 lateral = dir.unitOrthogonal() * 1e-3;
    const Vec3 start = -d * dir + lateral;
    const Vec3 goal = d * dir;
    SimConfig cfg;
    cfg.timeout = 60.0;
    cfg.filter = FilterKind::cone;
    const TrajectoryRecord cone = run_trajectory(scene, start, goal, cfg);
    cfg.filter = FilterKind::distance_baseline;
    const TrajectoryRecord base = run_trajectory(scene, start, goal, cfg);
    ++compared;
    const double dc = cone.first_intervention ? cone.first_intervention_distance : 0.0;
    const double db = base.first_intervention ? base.first_intervention_distance : 0.0;
    cone_sum += dc;
    base_sum += db;
    ordered += cone.first_intervention.has_value() && dc >= db;
  }
  report(5, ordered >= 0.8 * compared,
         fmt("%d/%d head-on scenarios with cone first-intervention distance >= baseline "
             "(mean %.3f vs %.3f)",
             ordered, compared, cone_sum / compared, base_sum / compared));
}

void smoothness(const BatchPair& b) {
  const bool pass = b.cone.isj.median <= b.baseline.isj.median &&
                    b.cone.rmsJ.median <= b.baseline.rmsJ.median;
  report(6, pass,
         fmt("median ISJ cone %.3g vs baseline %.3g, median RMS-J cone %.3g vs baseline %.3g, "
             "median nJ cone %.3g vs baseline %.3g",
             b.cone.isj.median, b.baseline.isj.median, b.cone.rmsJ.median,
             b.baseline.rmsJ.median, b.cone.nJ.median, b.baseline.nJ.median));
}

void planning_time(const BatchPair& b) {
  const double c = b.cone.step_time.median;
  const double d = b.baseline.step_time.median;
  report(7, c <= d,
         fmt("median step time cone %.2f us vs baseline %.2f us (baseline/cone ratio %.2f)",
             1e6 * c, 1e6 * d, d / c));
}

void solver() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int n = 1000;
  double worst_u = 0.0, worst_kkt = 0.0;
  int non_optimal = 0;
  for (int i = 0; i < n; ++i) {
    FilterProblem p;
    p.a_max = 1.0 + 2.0 * (u(rng) + 1.0);
    p.reference = 8.0 * Vec3(u(rng), u(rng), u(rng));
    const Vec3 x0 = 0.7 * p.a_max * random_unit(rng) * std::abs(u(rng));
    std::vector<HalfSpace> hs;
    const int m = 1 + static_cast<int>(rng() % 5);
    for (int k = 0; k < m; ++k) {
      const Vec3 a = random_unit(rng) * (0.1 + 10.0 * std::abs(u(rng)));
      const double b = a.dot(x0) - std::abs(u(rng)) * a.norm();
      p.constraints.push_back({a, b, static_cast<std::size_t>(k), 0.0});
      hs.push_back({a, b});
    }
    std::vector<Ball> balls{{Vec3::Zero(), p.a_max}};
    if (i % 2 == 0) {
      const double dt = 0.1;
      const Vec3 v = 0.9 * random_unit(rng) * std::abs(u(rng));
      if ((v + dt * x0).norm() <= 1.0) {
        p.velocity = VelocityBound{v, dt, 1.0};
        balls.push_back({-v / dt, 1.0 / dt});
      }
    }
    const FilterSolution s = solve_filter(p);
    if (s.status != SolveStatus::optimal) {
      ++non_optimal;
      continue;
    }
    worst_u = std::max(worst_u, (s.u - dykstra_projection(p.reference, hs, balls)).norm());
    worst_kkt = std::max(worst_kkt, s.kkt_residual);
  }
  report(8, non_optimal == 0 && worst_u < 1e-4 && worst_kkt < 1e-6,
         fmt("%d random QPs: worst |u - oracle| %.2e, worst KKT residual %.2e, %d not optimal",
             n, worst_u, worst_kkt, non_optimal));
}

void scale() {
  SyntheticSpec spec;
  spec.pattern = ScenePattern::clutter;
  spec.count = 170000;
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "splatcone_acceptance_170k.ply";
  write_ply(path, make_synthetic_raw(spec, 3));
  auto t0 = Clock::now();
  const Scene scene = load_ply(path, PreprocessOptions{});
  const double load_time = seconds_since(t0);
  std::filesystem::remove(path);

  RobotState s;
  s.p = Vec3::Zero();
  s.v = Vec3(1.0, 0.2, 0.0);
  FilterConfig cfg;
  cfg.activation_horizon = 0.0;
  double lo = 0.0, hi = 20.0;
  for (int it = 0; it < 60; ++it) {
    cfg.activation_radius = 0.5 * (lo + hi);
    const std::size_t k = scene.query_reach(s.p, cfg.activation_radius, scene.confidence()).size();
    (k < 2000 ? lo : hi) = cfg.activation_radius;
  }
  cfg.activation_radius = hi;

  const int steps = 500;
  std::size_t candidates = 0, approached = 0;
  t0 = Clock::now();
  for (int k = 0; k < steps; ++k) {
    RobotState q = s;
    q.v = Vec3(std::cos(0.01 * k), std::sin(0.01 * k), 0.1);
    const FilterStepResult r = filter_step(scene, q, Vec3(0.5, 0.0, 0.0), cfg);
    candidates = std::max(candidates, r.candidates);
    approached = std::max(approached, r.diagnostics.size());
  }
  const double rate = steps / seconds_since(t0);
  report(9, scene.size() == 170000 && candidates >= 2000 && rate >= 50.0,
         fmt("%zu splats loaded and indexed in %.2f s; %zu-splat activation set (%zu "
             "approached rows): %.0f filter steps/s",
             scene.size(), load_time, candidates, approached, rate));
}

bool throws_precondition(const RelativeGeometry& g) {
  try {
    in_forward_cone(g);
  } catch (const ConePreconditionError& e) {
    return e.status() == ConeStatus::inside_ellipsoid;
  }
  return false;
}

void degenerate() {
  const double c2 = default_confidence();
  const Scene sphere({make_splat(Vec3::Zero(), Quat::Identity(), Vec3::Constant(0.5), 1.0)}, c2);
  std::vector<std::string> failed;
  const auto check = [&](bool ok, const char* what) {
    if (!ok) failed.emplace_back(what);
  };

  // v = 0: not in the cone, vacuous row, the filter escapes at rest.
  const RelativeGeometry rest = relative_geometry(sphere[0], Vec3(-4, 0, 0), Vec3::Zero(), c2);
  check(!in_forward_cone(rest) && classify_cone(rest) == ConeStatus::zero_velocity, "v=0 verdict");
  check(barrier_value(rest) == 0.0, "v=0 barrier");
  check(build_constraint_double_integrator(rest, 1.0).normal.isZero(0.0), "v=0 row");
  {
    RobotState s;
    s.p = Vec3(-2.5, 1e-3, 0);
    const FilterStepResult r = filter_step(sphere, s, Vec3(1, 0, 0), FilterConfig{});
    const RobotState next = step(s, r.solution.u, 0.02);
    const RelativeGeometry g = relative_geometry(sphere[0], next.p, next.v, c2);
    check(r.solution.status == SolveStatus::optimal && barrier_value(g) >= 0.0, "v=0 escape");
  }

  // Start inside the ellipsoid.
  const RelativeGeometry inside = relative_geometry(sphere[0], Vec3(0.1, 0, 0), Vec3(1, 0, 0), c2);
  check(throws_precondition(inside), "inside cone test");
  {
    bool config_error = false;
    try {
      run_trajectory(sphere, Vec3(0.1, 0, 0), Vec3(8, 0, 0), SimConfig{});
    } catch (const ConfigError&) {
      config_error = true;
    }
    check(config_error, "inside run");
    RobotState s;
    s.p = Vec3(0.1, 0, 0);
    s.v = Vec3(1, 0, 0);
    check(filter_step(sphere, s, Vec3::Zero(), FilterConfig{}).solution.status ==
              SolveStatus::infeasible,
          "inside hard step");
  }

  // Receding: the backward line hits but the forward ray does not.
  const RelativeGeometry away = relative_geometry(sphere[0], Vec3(-3, 0, 0), Vec3(-1, 0, 0), c2);
  check(barrier_value(away) < 0.0 && away.delta() < 0.0 && !in_forward_cone(away),
        "receding verdict");
  {
    RobotState s;
    s.p = Vec3(-3, 0, 0);
    s.v = Vec3(-1, 0, 0);
    const Vec3 u_ref(-0.5, 0.2, 0);
    const FilterStepResult r = filter_step(sphere, s, u_ref, FilterConfig{});
    check(r.diagnostics.empty() && r.solution.u == u_ref, "receding step");
  }

  // Isotropic inflation: exact equals conservative equals c + rho / s.
  const RelativeGeometry g = relative_geometry(sphere[0], Vec3(-3, 0.7, 0.2), Vec3(1, 0.1, 0), c2);
  const double rho = 0.3;
  const InflationResult ex = inflate(g, Vec3::Constant(0.5), rho, InflationMode::exact);
  const InflationResult co = inflate(g, Vec3::Constant(0.5), rho, InflationMode::conservative);
  const double expected = std::sqrt(c2) + rho / 0.5;
  check(std::abs(ex.c_M - expected) <= 1e-12 * expected && co.c_M == expected, "isotropic c_M");
  check(ex.grad_cM_p.norm() <= 1e-12 && ex.grad_cM_v.norm() <= 1e-12, "isotropic gradients");

  // rho = 0: both modes return c with zero gradients and h unchanged.
  const Vec3 scales(0.5, 0.2, 0.9);
  const Splat aniso = make_splat(Vec3::Zero(), Quat(0.9, 0.2, -0.3, 0.1).normalized(), scales, 1.0);
  const RelativeGeometry ga = relative_geometry(aniso, Vec3(-3, 0.4, 0.1), Vec3(1, 0.2, 0), c2);
  for (const InflationMode mode : {InflationMode::exact, InflationMode::conservative}) {
    const InflationResult z = inflate(ga, scales, 0.0, mode);
    check(z.c_M == std::sqrt(c2) && z.grad_cM_p.isZero(0.0) && z.grad_cM_v.isZero(0.0),
          "rho=0 identity");
    check(inflated_barrier_value(ga, scales, 0.0, mode) == barrier_value(ga), "rho=0 barrier");
  }

  std::string detail = "v=0, start inside, receding, isotropic inflation, rho=0 identity";
  for (const std::string& f : failed) detail += "; failed: " + f;
  report(10, failed.empty(), detail);
}

}  // namespace

int main() {
  const std::vector<RelativeGeometry> cases = cone_cases(10000);
  cone_oracle(cases);
  whitening(cases);
  gradients();

  SyntheticSpec ring;
  ring.pattern = ScenePattern::ring;
  const Scene scene = make_synthetic_scene(ring, 7);
  const BatchPair batches = ring_batches(scene);
  forward_invariance(scene, batches);
  proactivity();
  smoothness(batches);
  planning_time(batches);
  solver();
  scale();
  degenerate();

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
