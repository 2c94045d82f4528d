#include "splatcone/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <random>
#include <thread>

namespace splatcone {

Vec3 pd_reference(const RobotState& state, const Vec3& goal, const PdGains& gains) {
  if (!(gains.kp > 0.0) || !(gains.kd > 0.0)) throw ConfigError("PD gains must be positive");
  return gains.kp * (goal - state.p) - gains.kd * state.v;
}

RobotState step(const RobotState& state, const Vec3& u, double dt) {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  return {state.p + state.v * dt + 0.5 * dt * dt * u, state.v + dt * u, state.t + dt};
}

std::string to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::cone: return "cone";
    case FilterKind::distance_baseline: return "distance_baseline";
    case FilterKind::off: return "off";
  }
  return "?";
}

FilterKind parse_filter_kind(const std::string& name) {
  if (name == "cone") return FilterKind::cone;
  if (name == "distance_baseline" || name == "baseline" || name == "distance") {
    return FilterKind::distance_baseline;
  }
  if (name == "off" || name == "none") return FilterKind::off;
  throw ConfigError("unknown filter '" + name + "'");
}

std::string to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::reached_goal: return "reached_goal";
    case Outcome::infeasible: return "infeasible";
    case Outcome::collided: return "collided";
    case Outcome::timeout: return "timeout";
  }
  return "?";
}

FilterStepResult baseline_distance_filter_step(const Scene& scene,
                                               const RobotState& state,
                                               const Vec3& u_ref,
                                               const FilterConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  if (!state.p.allFinite() || !state.v.allFinite()) {
    throw ConfigError("robot state is not finite");
  }
  const double a1 = cfg.alpha1.value_or(cfg.p_k);
  const double a2 = cfg.alpha2.value_or(cfg.p_k);
  if (!(a1 > 0.0) || !(a2 > 0.0)) throw ConfigError("baseline gains must be positive");
  const double c = std::sqrt(cfg.confidence.value_or(scene.confidence()));

  FilterStepResult out;
  std::vector<std::size_t> ids =
      scene.query_reach(state.p, cfg.activation_radius_at(state.v), c * c, cfg.rho);
  std::sort(ids.begin(), ids.end());
  out.candidates = ids.size();

  FilterProblem problem;
  problem.reference = u_ref;
  problem.a_max = cfg.a_max;
  if (cfg.v_max) problem.velocity = VelocityBound{state.v, cfg.dt, *cfg.v_max};
  if (cfg.slack == SlackPolicy::slack) problem.slack_weight = cfg.slack_weight;
  problem.constraints.reserve(ids.size());
  for (const std::size_t id : ids) {
    const Splat& s = scene[id];
    const double cm = c + cfg.rho / s.s_min;
    const Vec3 d = state.p - s.mean;
    const Vec3 ad = s.inv_cov * d;
    const double h = d.dot(ad) - cm * cm;
    const double h_dot = 2.0 * ad.dot(state.v);
    const double drift = 2.0 * state.v.dot(s.inv_cov * state.v);
    if (!(h > 0.0)) {
      out.inside_ids.push_back(id);
      if (cfg.slack == SlackPolicy::hard) continue;
    }
    LinearControlConstraint con;
    con.normal = 2.0 * ad;
    con.offset = -drift - (a1 + a2) * h_dot - a1 * a2 * h;
    con.splat_id = id;
    con.h_value = h;
    out.diagnostics.push_back({id, h});
    out.min_h = std::min(out.min_h, h);
    problem.constraints.push_back(con);
  }
  out.build_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!out.inside_ids.empty() && cfg.slack == SlackPolicy::hard) {
    out.solution.status = SolveStatus::infeasible;
    return out;
  }
  out.solution = solve_filter(problem);
  return out;
}

CollisionAudit audit_positions(const Scene& scene, const std::vector<Vec3>& positions,
                               double confidence, double rho) {
  CollisionAudit audit;
  if (scene.empty()) return audit;
  const double c = std::sqrt(confidence);
  double reach = 0.0;
  for (const Splat& s : scene.splats()) {
    reach = std::max(reach, (c + rho / s.s_min) * s.max_scale());
  }
  std::vector<std::size_t> ids;
  for (std::size_t k = 0; k < positions.size(); ++k) {
    ids = scene.query_nearby(positions[k], 2.0 * reach);
    for (const std::size_t i : ids) {
      const Splat& s = scene[i];
      const double cm = c + rho / s.s_min;
      const Vec3 d = positions[k] - s.mean;
      const double value = d.dot(s.inv_cov * d) - cm * cm;
      if (value < audit.min_clearance) {
        audit.min_clearance = value;
        audit.worst_splat = i;
        audit.worst_sample = k;
      }
    }
  }
  audit.collided = audit.min_clearance < -kContactTolerance;
  return audit;
}

std::vector<Vec3> TrajectoryRecord::positions() const {
  std::vector<Vec3> out;
  out.reserve(samples.size() + 1);
  for (const TrajectorySample& s : samples) out.push_back(s.p);
  out.push_back(final_state.p);
  return out;
}

namespace {

double nearest_mean_distance(const Scene& scene, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const Splat& s : scene.splats()) best = std::min(best, (s.mean - p).norm());
  return best;
}

FilterStepResult run_filter(const Scene& scene, const RobotState& state,
                            const Vec3& u_ref, const SimConfig& cfg) {
  switch (cfg.filter) {
    case FilterKind::cone: return filter_step(scene, state, u_ref, cfg.filter_cfg);
    case FilterKind::distance_baseline:
      return baseline_distance_filter_step(scene, state, u_ref, cfg.filter_cfg);
    case FilterKind::off: {
      FilterProblem problem;
      problem.reference = u_ref;
      problem.a_max = cfg.filter_cfg.a_max;
      if (cfg.filter_cfg.v_max) {
        problem.velocity = VelocityBound{state.v, cfg.filter_cfg.dt, *cfg.filter_cfg.v_max};
      }
      FilterStepResult out;
      out.solution = solve_filter(problem);
      return out;
    }
  }
  throw ConfigError("unknown filter kind");
}

}  // namespace

TrajectoryRecord run_trajectory(const Scene& scene, const Vec3& start,
                                const Vec3& goal, const SimConfig& cfg) {
  const double dt = cfg.filter_cfg.dt;
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(cfg.timeout > 0.0)) throw ConfigError("timeout must be positive");
  if (!start.allFinite() || !goal.allFinite()) throw ConfigError("start/goal not finite");
  const double c2 = cfg.filter_cfg.confidence.value_or(scene.confidence());
  const CollisionAudit at_start = audit_positions(scene, {start}, c2, cfg.filter_cfg.rho);
  if (!(at_start.min_clearance > 0.0)) {
    throw ConfigError("start lies inside the ellipsoid of splat " +
                      std::to_string(at_start.worst_splat));
  }

  TrajectoryRecord rec;
  rec.start = start;
  rec.goal = goal;
  rec.dt = dt;
  RobotState state{start, Vec3::Zero(), 0.0};
  const auto max_steps = static_cast<std::size_t>(std::ceil(cfg.timeout / dt));
  rec.outcome = Outcome::timeout;
  for (std::size_t k = 0; k < max_steps; ++k) {
    state.t = static_cast<double>(k) * dt;
    if ((state.p - goal).norm() < cfg.goal_tolerance &&
        state.v.norm() < cfg.goal_speed_tolerance) {
      rec.outcome = Outcome::reached_goal;
      break;
    }
    const Vec3 u_ref = pd_reference(state, goal, cfg.gains);
    const FilterStepResult res = run_filter(scene, state, u_ref, cfg);
    if (res.solution.status == SolveStatus::infeasible) {
      rec.outcome = Outcome::infeasible;
      break;
    }
    TrajectorySample s;
    s.t = state.t;
    s.p = state.p;
    s.v = state.v;
    s.u = res.solution.u;
    s.u_ref = u_ref;
    s.min_h = res.min_h;
    s.build_time = res.build_time;
    s.qp_time = res.solution.solve_time;
    s.intervened = res.solution.status == SolveStatus::degraded ||
                   std::any_of(res.solution.multipliers.begin(),
                               res.solution.multipliers.end(),
                               [&](double m) { return m > cfg.intervention_tol; });
    if (s.intervened) {
      ++rec.interventions;
      if (!rec.first_intervention) {
        rec.first_intervention = s;
        rec.first_intervention_distance = nearest_mean_distance(scene, s.p);
      }
    }
    rec.samples.push_back(s);
    state = step(state, s.u, dt);
    state.t = static_cast<double>(k + 1) * dt;
  }
  rec.final_state = state;
  rec.audit = audit_positions(scene, rec.positions(), c2, cfg.filter_cfg.rho);
  if (rec.audit.collided) rec.outcome = Outcome::collided;
  return rec;
}

SmoothnessMetrics compute_metrics(const TrajectoryRecord& record) {
  const auto& s = record.samples;
  if (s.size() < 4) {
    throw ConfigError("compute_metrics needs at least 4 samples, got " +
                      std::to_string(s.size()));
  }
  const double dt = record.dt;
  SmoothnessMetrics m;
  for (std::size_t k = 0; k + 1 < s.size(); ++k) {
    const Vec3 jerk = (s[k + 1].u - s[k].u) / dt;
    m.isj += jerk.squaredNorm() * dt;
  }
  const std::vector<Vec3> pos = record.positions();
  for (std::size_t k = 0; k + 1 < pos.size(); ++k) m.path_length += (pos[k + 1] - pos[k]).norm();
  m.duration = static_cast<double>(s.size()) * dt;
  m.rmsJ = std::sqrt(m.isj / m.duration);
  m.nJ = m.path_length > 0.0 ? m.isj / m.path_length : 0.0;
  return m;
}

Distribution summarize(std::vector<double> values) {
  Distribution d;
  d.count = values.size();
  if (values.empty()) return d;
  std::sort(values.begin(), values.end());
  const auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  d.min = values.front();
  d.max = values.back();
  d.p25 = quantile(0.25);
  d.median = quantile(0.5);
  d.p75 = quantile(0.75);
  d.p90 = quantile(0.9);
  double sum = 0.0;
  for (double v : values) sum += v;
  d.mean = sum / static_cast<double>(values.size());
  return d;
}

namespace {

// Pushes a point radially (about `center`, horizontally) until it clears
// every ellipsoid.
Vec3 clear_outward(const Scene& scene, Vec3 p, const Vec3& center, double c2,
                   double rho, bool* moved) {
  Vec3 dir = p - center;
  dir.z() = 0.0;
  if (dir.norm() < 1e-12) dir = Vec3::UnitX();
  dir.normalize();
  *moved = false;
  for (int i = 0; i < 1000; ++i) {
    if (audit_positions(scene, {p}, c2, rho).min_clearance > 0.0) return p;
    p += 0.25 * dir;
    *moved = true;
  }
  throw ConfigError("could not place trajectory endpoint outside obstacles");
}

}  // namespace

std::vector<std::pair<Vec3, Vec3>> batch_endpoints(const Scene& scene, std::size_t n,
                                                   const BatchConfig& cfg, std::uint64_t seed,
                                                   std::vector<std::string>* warnings) {
  if (n == 0) throw ConfigError("batch needs at least one trajectory");
  const Aabb& b = scene.bounds();
  const Vec3 center = scene.empty() ? Vec3::Zero() : b.center();
  const double half = scene.empty() ? 4.0 : 0.5 * std::max(b.extent().x(), b.extent().y());
  const double radius = cfg.start_radius.value_or(1.25 * half + 1.0);
  if (!(radius > 0.0)) throw ConfigError("start radius must be positive");
  const double height = cfg.height.value_or(center.z());
  const double c2 = cfg.sim.filter_cfg.confidence.value_or(scene.confidence());
  const double rho = cfg.sim.filter_cfg.rho;

  std::mt19937_64 rng(seed);
  const auto uniform = [&rng](double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  };
  const double step_angle = 2.0 * std::numbers::pi / static_cast<double>(n);
  const double phase = uniform(0.0, step_angle);

  std::vector<std::pair<Vec3, Vec3>> endpoints(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double theta = phase + step_angle * static_cast<double>(k);
    const Vec3 dir(std::cos(theta), std::sin(theta), 0.0);
    const Vec3 lateral(-dir.y(), dir.x(), 0.0);
    Vec3 start = Vec3(center.x(), center.y(), height) + radius * dir;
    Vec3 goal = Vec3(center.x(), center.y(), height) - radius * dir +
                cfg.goal_jitter * uniform(-1.0, 1.0) * lateral;
    bool moved = false;
    start = clear_outward(scene, start, center, c2, rho, &moved);
    if (moved && warnings) {
      warnings->push_back("trajectory " + std::to_string(k) +
                          ": start moved outward to clear an obstacle");
    }
    goal = clear_outward(scene, goal, center, c2, rho, &moved);
    if (moved && warnings) {
      warnings->push_back("trajectory " + std::to_string(k) +
                          ": goal moved outward to clear an obstacle");
    }
    endpoints[k] = {start, goal};
  }
  return endpoints;
}

BatchReport run_batch(const Scene& scene, std::size_t n, const BatchConfig& cfg,
                      std::uint64_t seed) {
  BatchReport report;
  const std::vector<std::pair<Vec3, Vec3>> endpoints =
      batch_endpoints(scene, n, cfg, seed, &report.warnings);

  report.trajectories.resize(n);
  unsigned threads = cfg.threads != 0 ? cfg.threads : std::thread::hardware_concurrency();
  threads = std::clamp<unsigned>(threads, 1u, static_cast<unsigned>(n));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (std::size_t k = next++; k < n; k = next++) {
      try {
        TrajectoryResult& r = report.trajectories[k];
        r.record = run_trajectory(scene, endpoints[k].first, endpoints[k].second, cfg.sim);
        if (r.record.samples.size() >= 4) r.metrics = compute_metrics(r.record);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<double> nj, rms, isj, len, build, qp, total;
  for (const TrajectoryResult& r : report.trajectories) {
    ++report.outcome_counts[static_cast<int>(r.record.outcome)];
    if (r.metrics) {
      nj.push_back(r.metrics->nJ);
      rms.push_back(r.metrics->rmsJ);
      isj.push_back(r.metrics->isj);
      len.push_back(r.metrics->path_length);
    }
    for (const TrajectorySample& s : r.record.samples) {
      build.push_back(s.build_time);
      qp.push_back(s.qp_time);
      total.push_back(s.solve_time());
    }
  }
  report.success_rate =
      static_cast<double>(report.outcome_counts[static_cast<int>(Outcome::reached_goal)]) /
      static_cast<double>(n);
  report.nJ = summarize(nj);
  report.rmsJ = summarize(rms);
  report.isj = summarize(isj);
  report.path_length = summarize(len);
  report.step_build_time = summarize(build);
  report.step_qp_time = summarize(qp);
  report.step_time = summarize(total);
  return report;
}

}  // namespace splatcone
