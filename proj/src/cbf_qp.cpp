#include "splatcone/cbf_qp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <optional>

#include "active_set.hpp"
#include "interior_point.hpp"

namespace splatcone {

Vec3 lie_derivative_w(const RelativeGeometry& geom) {
  const Vec3 av = geom.A * geom.v;
  const Vec3 ar = geom.A * geom.r;
  return geom.gamma() * av - geom.delta() * ar;
}

LinearControlConstraint build_constraint(const RelativeGeometry& geom,
                                         const VelocityDynamics& dynamics,
                                         double p_k, std::size_t splat_id) {
  if (!(p_k > 0.0)) throw ConfigError("p_k must be positive");
  const Vec3 w = lie_derivative_w(geom);
  const double h = barrier_value(geom);
  LinearControlConstraint c;
  c.normal = dynamics.g_v.transpose() * w;
  c.offset = -0.5 * p_k * h - w.dot(dynamics.f_v);
  c.splat_id = splat_id;
  c.h_value = h;
  return c;
}

LinearControlConstraint build_constraint_double_integrator(
    const RelativeGeometry& geom, double p_k, std::size_t splat_id) {
  if (!(p_k > 0.0)) throw ConfigError("p_k must be positive");
  const double h = barrier_value(geom);
  return {lie_derivative_w(geom), -0.5 * p_k * h, splat_id, h};
}

namespace {

struct InflatedTerms {
  double h = 0.0;
  double beta = 0.0;
  double c_M = 0.0;
  Vec3 q = Vec3::Zero();  // eta A v - delta A r - beta c_M grad_v c_M
  InflationResult inflation;
};

InflatedTerms inflated_terms(const RelativeGeometry& geom, const Vec3& scales,
                             double rho, InflationMode mode) {
  InflatedTerms out;
  out.inflation = inflate(geom, scales, rho, mode);
  out.c_M = out.inflation.c_M;
  const double cm2 = rho == 0.0 ? geom.c2 : out.c_M * out.c_M;
  const Vec3 av = geom.A * geom.v;
  const Vec3 ar = geom.A * geom.r;
  out.beta = geom.v.dot(av);
  const double delta = geom.r.dot(av);
  const double eta = geom.r.dot(ar) - cm2;
  out.h = out.beta * eta - delta * delta;
  out.q = eta * av - delta * ar - out.beta * out.c_M * out.inflation.grad_cM_v;
  return out;
}

}  // namespace

double inflated_barrier_value(const RelativeGeometry& geom, const Vec3& scales,
                              double rho, InflationMode mode) {
  return inflated_terms(geom, scales, rho, mode).h;
}

LinearControlConstraint build_constraint_inflated(
    const RelativeGeometry& geom, const Vec3& scales, double rho,
    InflationMode mode, const VelocityDynamics& dynamics, double p_k,
    std::size_t splat_id) {
  if (!(p_k > 0.0)) throw ConfigError("p_k must be positive");
  const InflatedTerms t = inflated_terms(geom, scales, rho, mode);
  LinearControlConstraint c;
  c.normal = dynamics.g_v.transpose() * t.q;
  c.offset = -0.5 * p_k * t.h - t.q.dot(dynamics.f_v) +
             t.beta * t.c_M * t.inflation.grad_cM_p.dot(dynamics.f_p);
  c.splat_id = splat_id;
  c.h_value = t.h;
  return c;
}

std::string to_string(SlackPolicy policy) {
  return policy == SlackPolicy::hard ? "hard" : "slack";
}

SlackPolicy parse_slack_policy(const std::string& name) {
  if (name == "hard") return SlackPolicy::hard;
  if (name == "slack") return SlackPolicy::slack;
  throw ConfigError("unknown slack policy '" + name + "'");
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::degraded: return "degraded";
  }
  return "?";
}

namespace {

constexpr double kZeroNormal = 1e-14;
constexpr double kActiveTol = 1e-7;
constexpr double kSlackTol = 1e-8;
constexpr double kFeasTol = 1e-9;

struct Row {
  Vec3 a;
  double b;
  std::size_t index;
};

struct Ball {
  Vec3 center;
  double radius;
};

// A point strictly inside every ball (at most two).
Vec3 ball_interior_point(const std::vector<Ball>& balls) {
  if (balls.size() == 1) return balls[0].center;
  const Ball& b0 = balls[0];
  const Ball& b1 = balls[1];
  const Vec3 d = b1.center - b0.center;
  const double dist = d.norm();
  if (dist < 1e-15) {
    return b0.center;
  }
  const Vec3 e = d / dist;
  const double lo = std::max(-b0.radius, dist - b1.radius);
  const double hi = std::min(b0.radius, dist + b1.radius);
  if (!(lo < hi)) throw SolverError("acceleration and velocity bounds do not intersect");
  return b0.center + 0.5 * (lo + hi) * e;
}

double min_margin(const std::vector<Row>& rows, const Vec3& u) {
  double m = std::numeric_limits<double>::infinity();
  for (const Row& r : rows) m = std::min(m, r.a.dot(u) - r.b);
  return m;
}

bool inside_balls(const std::vector<Ball>& balls, const Vec3& u) {
  for (const Ball& b : balls) {
    if ((u - b.center).norm() > b.radius) return false;
  }
  return true;
}

void check_converged(const detail::IpmResult& r, const char* phase) {
  if (r.converged) return;
  if (r.gap <= 1e-8 && r.dual_residual <= 1e-7) return;
  throw SolverError(std::string(phase) + " did not converge after " +
                    std::to_string(r.iterations) + " iterations (gap " +
                    std::to_string(r.gap) + ", dual residual " +
                    std::to_string(r.dual_residual) + ")");
}

// Ball constraints enter the active-set projection as tangent cuts at the
// current iterate; each cut contains its ball, so infeasibility of the cut
// problem proves infeasibility of the original one.
constexpr int kMaxCutRounds = 200;
constexpr double kBallTol = 1e-12;

// Multipliers of the near-active rows and balls at u for the objective
// |u - ref|^2, with balls scaled as in detail::ConvexProgram.
void recover_multipliers(const std::vector<Row>& rows, const std::vector<Ball>& balls,
                         const Vec3& ref, const Vec3& u, std::vector<double>& row_lambda,
                         std::vector<double>& ball_lambda) {
  detail::ConvexProgram<3> prog;
  prog.H = 2.0 * Mat3::Identity();
  prog.g = -2.0 * ref;
  for (const Row& r : rows) {
    prog.G.push_back(-r.a);
    prog.h.push_back(-r.b);
  }
  for (const Ball& b : balls) {
    prog.ball_center.push_back(b.center);
    prog.ball_radius.push_back(b.radius);
  }
  std::vector<double> f;
  prog.constraint_values(u, f);
  for (double& fi : f) fi = std::min(fi, 0.0);
  std::vector<double> lambda(f.size(), 0.0);
  detail::refine_multipliers(prog, u, f, kActiveTol, lambda);
  row_lambda.assign(lambda.begin(), lambda.begin() + static_cast<std::ptrdiff_t>(rows.size()));
  ball_lambda.assign(lambda.begin() + static_cast<std::ptrdiff_t>(rows.size()), lambda.end());
}

// Tangent cuts leave the iterate within kBallTol of the active balls, but the
// cut normals lag the true ball normals. Newton's method on the equality
// system of the final active set restores stationarity; the polished point
// is kept only if it stays feasible with nonnegative multipliers.
Vec3 polish_on_active_set(const std::vector<Row>& rows, const std::vector<Ball>& balls,
                          const Vec3& ref, const Vec3& u0) {
  std::vector<const Row*> act_rows;
  std::vector<const Ball*> act_balls;
  for (const Row& r : rows) {
    if (r.a.dot(u0) - r.b <= kActiveTol) act_rows.push_back(&r);
  }
  for (const Ball& b : balls) {
    if ((u0 - b.center).norm() >= b.radius - 1e-6 * (1.0 + b.radius)) act_balls.push_back(&b);
  }
  if (act_balls.empty()) return u0;
  const Eigen::Index nr = static_cast<Eigen::Index>(act_rows.size());
  const Eigen::Index nb = static_cast<Eigen::Index>(act_balls.size());
  const Eigen::Index n = 3 + nr + nb;

  const auto gradients = [&](const Vec3& u) {
    Eigen::MatrixXd G(3, nr + nb);
    for (Eigen::Index i = 0; i < nr; ++i) G.col(i) = act_rows[i]->a;
    for (Eigen::Index j = 0; j < nb; ++j) {
      G.col(nr + j) = -(u - act_balls[j]->center) / act_balls[j]->radius;
    }
    return G;
  };
  Eigen::VectorXd z(n);
  z.head<3>() = u0;
  z.tail(nr + nb) = gradients(u0).completeOrthogonalDecomposition().solve(2.0 * (u0 - ref));

  const auto residual = [&](const Eigen::VectorXd& zz) {
    const Vec3 u = zz.head<3>();
    Eigen::VectorXd F(n);
    F.head<3>() = 2.0 * (u - ref) - gradients(u) * zz.tail(nr + nb);
    for (Eigen::Index i = 0; i < nr; ++i) F[3 + i] = act_rows[i]->a.dot(u) - act_rows[i]->b;
    for (Eigen::Index j = 0; j < nb; ++j) {
      const Ball& b = *act_balls[j];
      F[3 + nr + j] = ((u - b.center).squaredNorm() - b.radius * b.radius) / (2.0 * b.radius);
    }
    return F;
  };
  for (int it = 0; it < 20; ++it) {
    const Eigen::VectorXd F = residual(z);
    if (F.norm() <= 1e-15 * (1.0 + ref.norm())) break;
    const Vec3 u = z.head<3>();
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    double curvature = 2.0;
    for (Eigen::Index j = 0; j < nb; ++j) curvature += z[3 + nr + j] / act_balls[j]->radius;
    J.topLeftCorner(3, 3) = curvature * Mat3::Identity();
    const Eigen::MatrixXd G = gradients(u);
    J.topRightCorner(3, nr + nb) = -G;
    for (Eigen::Index i = 0; i < nr; ++i) J.block(3 + i, 0, 1, 3) = act_rows[i]->a.transpose();
    for (Eigen::Index j = 0; j < nb; ++j) {
      J.block(3 + nr + j, 0, 1, 3) = ((u - act_balls[j]->center) / act_balls[j]->radius).transpose();
    }
    z -= J.completeOrthogonalDecomposition().solve(F);
  }

  const Vec3 u = z.head<3>();
  if (!u.allFinite() || (u - u0).norm() > 1e-4 * (1.0 + u0.norm())) return u0;
  if ((z.tail(nr + nb).array() < -1e-9).any()) return u0;
  if (min_margin(rows, u) < -kFeasTol) return u0;
  for (const Ball& b : balls) {
    if ((u - b.center).norm() - b.radius > kBallTol * (1.0 + b.radius)) return u0;
  }
  return u;
}

}  // namespace

FilterSolution solve_filter(const FilterProblem& problem) {
  const auto start = std::chrono::steady_clock::now();
  if (!(problem.a_max > 0.0) || !std::isfinite(problem.a_max)) {
    throw ConfigError("a_max must be positive and finite");
  }
  if (!problem.reference.allFinite()) throw ConfigError("reference control is not finite");
  if (problem.slack_weight && !(*problem.slack_weight > 0.0)) {
    throw ConfigError("slack weight must be positive");
  }

  FilterSolution sol;
  const std::size_t n_in = problem.constraints.size();
  sol.multipliers.assign(n_in, 0.0);
  const bool soft = problem.slack_weight.has_value();
  if (soft) sol.slacks.assign(n_in, 0.0);

  std::vector<Row> rows;
  rows.reserve(n_in);
  bool zero_row_infeasible = false;
  double zero_row_slack = 0.0;
  for (std::size_t i = 0; i < n_in; ++i) {
    const LinearControlConstraint& c = problem.constraints[i];
    if (!c.normal.allFinite() || !std::isfinite(c.offset)) {
      throw SolverError("constraint " + std::to_string(i) + " is not finite");
    }
    const double n = c.normal.norm();
    if (n <= kZeroNormal) {
      if (c.offset > 0.0) {
        zero_row_infeasible = true;
        zero_row_slack += c.offset;
        if (soft) sol.slacks[i] = c.offset;
      }
      continue;
    }
    rows.push_back({c.normal / n, c.offset / n, i});
  }

  std::vector<Ball> balls{{Vec3::Zero(), problem.a_max}};
  if (problem.velocity && std::isfinite(problem.velocity->v_max)) {
    const VelocityBound& vb = *problem.velocity;
    if (!(vb.dt > 0.0) || !(vb.v_max > 0.0)) {
      throw ConfigError("velocity bound needs dt > 0 and v_max > 0");
    }
    const double radius = std::max(vb.v_max, vb.v.norm() - 0.5 * problem.a_max * vb.dt);
    balls.push_back({-vb.v / vb.dt, radius / vb.dt});
  }

  const auto finish = [&](FilterSolution& s) -> FilterSolution {
    s.solve_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return s;
  };

  if (zero_row_infeasible && !soft) {
    sol.status = SolveStatus::infeasible;
    return finish(sol);
  }

  const Vec3& ref = problem.reference;
  if (inside_balls(balls, ref) && min_margin(rows, ref) >= 0.0) {
    sol.u = ref;
    sol.status = zero_row_infeasible ? SolveStatus::degraded : SolveStatus::optimal;
    sol.slack_used = zero_row_slack;
    return finish(sol);
  }

  std::vector<double> row_lambda, ball_lambda;
  if (soft) {
    // Squared-hinge penalty over every row; only the balls are constraints.
    detail::ConvexProgram<3> prog;
    prog.H = 2.0 * Mat3::Identity();
    prog.g = -2.0 * ref;
    prog.pen_weight = *problem.slack_weight;
    for (const Row& r : rows) {
      prog.pen_a.push_back(r.a);
      prog.pen_b.push_back(r.b);
    }
    for (const Ball& b : balls) {
      prog.ball_center.push_back(b.center);
      prog.ball_radius.push_back(b.radius);
    }
    const detail::IpmResult res = detail::solve_ipm<3>(prog, ball_interior_point(balls), {});
    check_converged(res, "slack solve");
    sol.u = res.x.head<3>();
    sol.iterations = res.iterations;
    ball_lambda = res.lambda;
    for (const Row& r : rows) {
      row_lambda.push_back(2.0 * prog.pen_weight * std::max(0.0, r.b - r.a.dot(sol.u)));
    }
  } else {
    // Rows that all pass through one point (as cone rows do at the braking
    // control -p_k v / 2) make the exact projection degenerate, and rounding
    // can then report a false infeasibility. A second attempt relaxes every
    // offset by kFeasTol.
    bool feasible = false;
    for (const double relax : {0.0, kFeasTol}) {
      detail::ActiveSetProjector projector;
      for (const Row& r : rows) projector.add_row(r.a, r.b - relax);
      int round = 0;
      while (true) {
        const detail::ProjectionResult res = projector.solve(ref, kFeasTol * 1e-3);
        sol.iterations += res.iterations;
        sol.u = res.x;
        if (!res.feasible) break;
        std::size_t worst = balls.size();
        double worst_excess = 0.0;
        for (std::size_t j = 0; j < balls.size(); ++j) {
          const double excess = (res.x - balls[j].center).norm() - balls[j].radius;
          if (excess > kBallTol * (1.0 + balls[j].radius) && excess > worst_excess) {
            worst_excess = excess;
            worst = j;
          }
        }
        if (worst == balls.size()) {
          feasible = true;
          break;
        }
        if (++round > kMaxCutRounds) {
          throw SolverError("norm-bound cuts did not converge (excess " +
                            std::to_string(worst_excess) + ")");
        }
        const Ball& b = balls[worst];
        const Vec3 e = (res.x - b.center).normalized();
        projector.add_row(-e, -(b.radius + e.dot(b.center)));
      }
      if (feasible) break;
    }
    if (!feasible) {
      sol.status = SolveStatus::infeasible;
      return finish(sol);
    }
    sol.u = polish_on_active_set(rows, balls, ref, sol.u);
    recover_multipliers(rows, balls, ref, sol.u, row_lambda, ball_lambda);
  }

  const Vec3 u = sol.u;
  Vec3 stationarity = 2.0 * (u - ref);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    sol.multipliers[rows[k].index] = row_lambda[k];
    stationarity -= row_lambda[k] * rows[k].a;
  }
  for (std::size_t j = 0; j < balls.size(); ++j) {
    const double lam = ball_lambda[j];
    if (j == 0) sol.accel_multiplier = lam;
    else sol.velocity_multiplier = lam;
    stationarity += lam * (u - balls[j].center) / balls[j].radius;
  }
  sol.kkt_residual = stationarity.norm();

  bool degraded = zero_row_infeasible;
  sol.slack_used = zero_row_slack;
  for (const Row& r : rows) {
    const double margin = r.a.dot(u) - r.b;
    if (margin <= kActiveTol) sol.active_ids.push_back(problem.constraints[r.index].splat_id);
    if (soft) {
      const double xi = std::max(0.0, -margin);
      sol.slacks[r.index] = xi;
      sol.slack_used += xi;
      degraded = degraded || xi > kSlackTol;
    }
  }
  sol.status = degraded ? SolveStatus::degraded : SolveStatus::optimal;
  return finish(sol);
}

namespace {

struct RestCone {
  std::size_t id;
  Vec3 r;
  Mat3 whitening;  // L with A = L^T L
  double c;
  double h;
};

bool direction_in_cone(const RestCone& k, const Vec3& d) {
  const Vec3 rt = k.whitening * k.r;
  const Vec3 dt = k.whitening * d;
  const double delta = rt.dot(dt);
  if (delta < 0.0) return false;
  return dt.squaredNorm() * (rt.squaredNorm() - k.c * k.c) - delta * delta <= 0.0;
}

bool direction_clear(const std::vector<RestCone>& cones, const Vec3& d) {
  for (const RestCone& k : cones) {
    if (direction_in_cone(k, d)) return false;
  }
  return true;
}

// Unit direction outside every cone with the smallest angle to d0, searched
// over kRestAzimuths rotation planes.
std::optional<Vec3> escape_direction(const std::vector<RestCone>& cones, const Vec3& d0) {
  constexpr int kRestAzimuths = 16;
  constexpr int kRestSteps = 720;
  if (direction_clear(cones, d0)) return d0;
  const Vec3 e1 = d0.unitOrthogonal();
  const Vec3 e2 = d0.cross(e1);
  std::optional<Vec3> best;
  double best_angle = std::numeric_limits<double>::infinity();
  for (int k = 0; k < kRestAzimuths; ++k) {
    const double az = 2.0 * std::numbers::pi * k / kRestAzimuths;
    const Vec3 e = std::cos(az) * e1 + std::sin(az) * e2;
    const auto dir = [&](double phi) { return Vec3(std::cos(phi) * d0 + std::sin(phi) * e); };
    for (int j = 1; j <= kRestSteps; ++j) {
      double hi = std::numbers::pi * j / kRestSteps;
      if (hi >= best_angle) break;
      if (!direction_clear(cones, dir(hi))) continue;
      double lo = std::numbers::pi * (j - 1) / kRestSteps;
      for (int it = 0; it < 30; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (direction_clear(cones, dir(mid))) hi = mid;
        else lo = mid;
      }
      best_angle = hi;
      best = dir(hi);
      break;
    }
  }
  return best;
}

}  // namespace

FilterStepResult filter_step(const Scene& scene, const RobotState& state,
                             const Vec3& u_ref, const FilterConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  if (!state.p.allFinite() || !state.v.allFinite()) {
    throw ConfigError("robot state is not finite");
  }
  if (!(cfg.dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(cfg.p_k > 0.0)) throw ConfigError("p_k must be positive");
  if (!(cfg.rho >= 0.0)) throw ConfigError("robot radius must be non-negative");
  if (!(cfg.rest_speed >= 0.0) || !(cfg.rest_speed < cfg.a_max * cfg.dt)) {
    throw ConfigError("rest_speed must lie in [0, a_max * dt)");
  }
  FilterStepResult out;
  const double c2 = cfg.confidence.value_or(scene.confidence());
  std::vector<std::size_t> ids =
      scene.query_reach(state.p, cfg.activation_radius_at(state.v), c2, cfg.rho);
  std::sort(ids.begin(), ids.end());
  out.candidates = ids.size();

  const VelocityDynamics dyn = VelocityDynamics::double_integrator(state.v);
  FilterProblem problem;
  problem.reference = u_ref;
  problem.a_max = cfg.a_max;
  if (cfg.v_max) problem.velocity = VelocityBound{state.v, cfg.dt, *cfg.v_max};
  if (cfg.slack == SlackPolicy::slack) problem.slack_weight = cfg.slack_weight;
  problem.constraints.reserve(ids.size());
  const bool at_rest = state.v.norm() <= cfg.rest_speed;
  std::vector<RestCone> rest_cones;

  const bool plain = cfg.rho == 0.0 || cfg.inflation == InflationMode::conservative;
  const double c = std::sqrt(c2);
  for (const std::size_t id : ids) {
    const Splat& splat = scene[id];
    if (plain) {
      // Same expressions as build_constraint_double_integrator, with the
      // products A r and A v shared.
      const double c_M = cfg.rho == 0.0 ? c : c + cfg.rho / splat.s_min;
      const double c2_eff = cfg.rho == 0.0 ? c2 : c_M * c_M;
      const Vec3 r = splat.mean - state.p;
      const Vec3 ar = splat.inv_cov * r;
      const Vec3 av = splat.inv_cov * state.v;
      const double gamma = r.dot(ar) - c2_eff;
      const double delta = r.dot(av);
      const double beta = state.v.dot(av);
      const double h = beta * gamma - delta * delta;
      if (!(gamma > 0.0)) {
        out.inside_ids.push_back(id);
        if (cfg.slack == SlackPolicy::hard) continue;
      }
      if (at_rest) {
        rest_cones.push_back({id, r, splat.whitening, c_M, h});
        continue;
      }
      if (cfg.approach_gating && delta < 0.0) continue;
      out.diagnostics.push_back({id, h});
      out.min_h = std::min(out.min_h, h);
      const Vec3 w = gamma * av - delta * ar;
      if (w.isZero(0.0) && h >= 0.0) continue;
      problem.constraints.push_back({w, -0.5 * cfg.p_k * h, id, h});
      continue;
    }
    RelativeGeometry geom = relative_geometry(splat, state.p, state.v, c2);
    InflationMode mode = cfg.inflation;
    double c2_eff = c2;
    if (cfg.rho > 0.0) {
      const InflationResult inf = inflate_or_fallback(geom, splat.scales, cfg.rho, mode);
      mode = inf.mode;
      c2_eff = inf.c_M * inf.c_M;
    }
    RelativeGeometry eff = geom;
    eff.c2 = c2_eff;
    if (!eff.exterior()) {
      out.inside_ids.push_back(id);
      if (cfg.slack == SlackPolicy::hard) continue;
    }
    if (at_rest) {
      rest_cones.push_back({id, geom.r, splat.whitening, std::sqrt(c2_eff), barrier_value(eff)});
      continue;
    }
    if (cfg.approach_gating && eff.delta() < 0.0) continue;

    LinearControlConstraint con;
    if (cfg.rho == 0.0) {
      con = build_constraint_double_integrator(geom, cfg.p_k, id);
    } else if (mode == InflationMode::conservative) {
      con = build_constraint_double_integrator(eff, cfg.p_k, id);
    } else {
      con = build_constraint_inflated(geom, splat.scales, cfg.rho, mode, dyn, cfg.p_k, id);
    }
    out.diagnostics.push_back({id, con.h_value});
    out.min_h = std::min(out.min_h, con.h_value);
    // v = 0 gives w = 0 and h = 0: nothing to enforce.
    if (con.normal.isZero(0.0) && con.h_value >= 0.0) continue;
    problem.constraints.push_back(con);
  }
  const Vec3 heading = u_ref.isZero(0.0) ? state.v : u_ref;
  if (at_rest && !rest_cones.empty() && out.inside_ids.empty() && !heading.isZero(0.0)) {
    // The barrier degenerates as v -> 0 (h = 0 and grad_v h = 0 at rest), so
    // near rest the next velocity v + dt u is constrained directly: it must
    // point outside every cone. Each cone's supporting plane through the
    // escape direction is a convex inner approximation of that condition.
    const std::optional<Vec3> escape = escape_direction(rest_cones, heading.normalized());
    if (!escape) {
      out.build_time =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      out.solution.status = SolveStatus::infeasible;
      return out;
    }
    for (const RestCone& k : rest_cones) {
      const Vec3 rt = k.whitening * k.r;
      const Vec3 axis = rt.normalized();
      const Vec3 dt = k.whitening * *escape;
      const Vec3 perp = dt - dt.dot(axis) * axis;
      if (perp.norm() <= 1e-12 * dt.norm()) continue;  // cone straight behind
      const double sin_a = k.c / rt.norm();
      const double cos_a = std::sqrt(std::max(0.0, 1.0 - sin_a * sin_a));
      const Vec3 n = -sin_a * axis + cos_a * perp.normalized();
      LinearControlConstraint con;
      con.normal = k.whitening.transpose() * n;
      con.offset = -con.normal.dot(state.v) / cfg.dt;
      con.splat_id = k.id;
      con.h_value = k.h;
      out.diagnostics.push_back({k.id, k.h});
      out.min_h = std::min(out.min_h, k.h);
      problem.constraints.push_back(con);
    }
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

}  // namespace splatcone
