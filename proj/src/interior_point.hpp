#pragma once

// Log-barrier interior-point method for the small convex programs behind
// the safety filter: a strongly convex (or linear) objective over x in R^N
// with linear inequalities and Euclidean balls on the first three
// coordinates. Requires a strictly feasible start; every iterate stays
// strictly feasible.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>

#include "splatcone/types.hpp"

namespace splatcone::detail {

template <int N>
struct ConvexProgram {
  using Vec = Eigen::Matrix<double, N, 1>;
  using Mat = Eigen::Matrix<double, N, N>;

  // 0.5 x^T H x + g^T x + weight * sum_k max(0, pen_b[k] - pen_a[k]^T u)^2
  Mat H = Mat::Zero();
  Vec g = Vec::Zero();
  std::vector<Vec3> pen_a;
  std::vector<double> pen_b;
  double pen_weight = 0.0;

  // G[i]^T x <= h[i]
  std::vector<Vec> G;
  std::vector<double> h;

  // |u - center| <= radius, u = x.head<3>
  std::vector<Vec3> ball_center;
  std::vector<double> ball_radius;

  std::size_t num_constraints() const { return G.size() + ball_center.size(); }

  double objective(const Vec& x) const {
    double f = 0.5 * x.dot(H * x) + g.dot(x);
    const Vec3 u = x.template head<3>();
    for (std::size_t k = 0; k < pen_a.size(); ++k) {
      const double s = pen_b[k] - pen_a[k].dot(u);
      if (s > 0.0) f += pen_weight * s * s;
    }
    return f;
  }

  // objective(x + d) - objective(x)
  double objective_change(const Vec& x, const Vec& d) const {
    double change = (H * x + g).dot(d) + 0.5 * d.dot(H * d);
    const Vec3 u = x.template head<3>();
    const Vec3 du = d.template head<3>();
    for (std::size_t k = 0; k < pen_a.size(); ++k) {
      const double s0 = std::max(0.0, pen_b[k] - pen_a[k].dot(u));
      const double s1 = std::max(0.0, pen_b[k] - pen_a[k].dot(u + du));
      change += pen_weight * (s1 - s0) * (s1 + s0);
    }
    return change;
  }

  Vec objective_gradient(const Vec& x) const {
    Vec grad = H * x + g;
    const Vec3 u = x.template head<3>();
    for (std::size_t k = 0; k < pen_a.size(); ++k) {
      const double s = pen_b[k] - pen_a[k].dot(u);
      if (s > 0.0) grad.template head<3>() -= 2.0 * pen_weight * s * pen_a[k];
    }
    return grad;
  }

  Mat objective_hessian(const Vec& x) const {
    Mat hess = H;
    const Vec3 u = x.template head<3>();
    for (std::size_t k = 0; k < pen_a.size(); ++k) {
      if (pen_b[k] - pen_a[k].dot(u) > 0.0) {
        hess.template topLeftCorner<3, 3>() +=
            2.0 * pen_weight * pen_a[k] * pen_a[k].transpose();
      }
    }
    return hess;
  }

  // Constraint values f_i(x) <= 0. Balls are scaled by 1 / (2 radius) so
  // their gradient has unit length on the boundary.
  void constraint_values(const Vec& x, std::vector<double>& f) const {
    f.resize(num_constraints());
    for (std::size_t i = 0; i < G.size(); ++i) f[i] = G[i].dot(x) - h[i];
    const Vec3 u = x.template head<3>();
    for (std::size_t j = 0; j < ball_center.size(); ++j) {
      const double r = ball_radius[j];
      f[G.size() + j] = ((u - ball_center[j]).squaredNorm() - r * r) / (2.0 * r);
    }
  }

  Vec constraint_gradient(std::size_t i, const Vec& x) const {
    if (i < G.size()) return G[i];
    const std::size_t j = i - G.size();
    Vec grad = Vec::Zero();
    grad.template head<3>() =
        (x.template head<3>() - ball_center[j]) / ball_radius[j];
    return grad;
  }

  Mat constraint_hessian(std::size_t i) const {
    Mat hess = Mat::Zero();
    if (i >= G.size()) {
      hess.template topLeftCorner<3, 3>() = Mat3::Identity() / ball_radius[i - G.size()];
    }
    return hess;
  }
};

struct IpmResult {
  Eigen::VectorXd x;
  std::vector<double> lambda;  // linear rows first, then balls
  int iterations = 0;          // Newton steps
  double gap = 0.0;            // duality gap bound m / t
  double dual_residual = 0.0;  // |grad f0 + sum lambda_i grad f_i|
  bool converged = false;
};

struct IpmOptions {
  int max_iterations = 400;
  double gap_tol = 1e-11;
  double mu = 20.0;
  double t0 = 1.0;
  double newton_tol = 1e-9;  // half squared Newton decrement
  double active_tol = 1e-8;   // slack below which a constraint counts as active
  // Optional early exit, checked after every accepted step.
  std::function<bool(const Eigen::VectorXd&)> stop_when;
};

// Barrier multipliers 1 / (t |f_i|) lose relative accuracy as the slack
// approaches rounding level. Re-fit the multipliers of near-active
// constraints by nonnegative least squares (Lawson-Hanson) on the
// stationarity condition; the passive set stays small even when thousands
// of constraints are active at a degenerate vertex.
template <int N>
void refine_multipliers(const ConvexProgram<N>& prog,
                        const typename ConvexProgram<N>::Vec& x,
                        const std::vector<double>& f, double active_tol,
                        std::vector<double>& lambda) {
  using Vec = typename ConvexProgram<N>::Vec;
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (-f[i] <= active_tol) active.push_back(i);
  }
  const Vec target = -prog.objective_gradient(x);
  const std::size_t m = active.size();
  if (m == 0) return;
  Eigen::Matrix<double, N, Eigen::Dynamic> A(N, m);
  for (std::size_t k = 0; k < m; ++k) A.col(k) = prog.constraint_gradient(active[k], x);
  const double tol = 1e-13 * (1.0 + target.norm()) * (1.0 + A.cwiseAbs().maxCoeff());

  Eigen::VectorXd sol = Eigen::VectorXd::Zero(m);
  std::vector<std::size_t> passive;
  std::vector<bool> in_passive(m, false);
  const auto solve_passive = [&] {
    Eigen::Matrix<double, N, Eigen::Dynamic> Ap(N, passive.size());
    for (std::size_t k = 0; k < passive.size(); ++k) Ap.col(k) = A.col(passive[k]);
    return Eigen::VectorXd(Ap.completeOrthogonalDecomposition().solve(target));
  };
  for (std::size_t outer = 0; outer < 3 * m + 10; ++outer) {
    const Vec resid = target - A * sol;
    std::size_t best = m;
    double best_w = tol;
    for (std::size_t k = 0; k < m; ++k) {
      if (in_passive[k]) continue;
      const double w = A.col(k).dot(resid);
      if (w > best_w) {
        best_w = w;
        best = k;
      }
    }
    if (best == m) break;
    passive.push_back(best);
    in_passive[best] = true;
    for (std::size_t inner = 0; inner < 3 * m + 10; ++inner) {
      const Eigen::VectorXd z = solve_passive();
      double alpha = 1.0;
      bool positive = true;
      for (std::size_t k = 0; k < passive.size(); ++k) {
        if (z[k] <= 0.0) {
          positive = false;
          const double old = sol[passive[k]];
          alpha = std::min(alpha, old / (old - z[k]));
        }
      }
      if (positive) {
        for (std::size_t k = 0; k < passive.size(); ++k) sol[passive[k]] = z[k];
        break;
      }
      for (std::size_t k = 0; k < passive.size(); ++k) {
        sol[passive[k]] += alpha * (z[k] - sol[passive[k]]);
      }
      std::vector<std::size_t> kept;
      for (const std::size_t k : passive) {
        if (sol[k] > 1e-15) {
          kept.push_back(k);
        } else {
          sol[k] = 0.0;
          in_passive[k] = false;
        }
      }
      passive.swap(kept);
    }
  }
  for (std::size_t k = 0; k < m; ++k) lambda[active[k]] = sol[k];
}

template <int N>
IpmResult solve_ipm(const ConvexProgram<N>& prog,
                    const typename ConvexProgram<N>::Vec& x0,
                    const IpmOptions& opts) {
  using Vec = typename ConvexProgram<N>::Vec;
  using Mat = typename ConvexProgram<N>::Mat;
  const std::size_t m = prog.num_constraints();

  std::vector<double> f;
  const auto strictly_feasible = [&](const Vec& x, std::vector<double>& vals) {
    prog.constraint_values(x, vals);
    for (double fi : vals) {
      if (!(fi < 0.0)) return false;
    }
    return true;
  };
  // phi(x + d) - phi(x) evaluated without cancellation against the large
  // absolute barrier value.
  const auto barrier_change = [&](const Vec& x, const Vec& d, const std::vector<double>& f0,
                                  const std::vector<double>& f1, double t) {
    double change = t * prog.objective_change(x, d);
    for (std::size_t i = 0; i < f0.size(); ++i) change -= std::log1p((f1[i] - f0[i]) / f0[i]);
    return change;
  };

  Vec x = x0;
  if (!strictly_feasible(x, f)) {
    throw SolverError("interior-point start is not strictly feasible");
  }

  IpmResult res;
  std::vector<double> f_new;
  double t = m > 0 ? opts.t0 : 1.0;
  bool stopped = false;
  int steps = 0;
  while (steps < opts.max_iterations && !stopped) {
    // Centering: damped Newton on t f0 - sum log(-f_i).
    while (steps < opts.max_iterations) {
      Vec grad = t * prog.objective_gradient(x);
      Mat hess = t * prog.objective_hessian(x);
      for (std::size_t i = 0; i < m; ++i) {
        const double slack = -f[i];
        const Vec gi = prog.constraint_gradient(i, x);
        grad += gi / slack;
        hess += gi * gi.transpose() / (slack * slack) + prog.constraint_hessian(i) / slack;
      }
      const Eigen::LDLT<Mat> ldlt(hess);
      const Vec dx = -ldlt.solve(grad);
      if (!dx.allFinite()) throw SolverError("interior-point Newton step is not finite");
      const double decrement = -grad.dot(dx);
      if (!(decrement > 2.0 * opts.newton_tol)) break;
      double s = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 80; ++ls, s *= 0.5) {
        const Vec xn = x + s * dx;
        if (!strictly_feasible(xn, f_new)) continue;
        if (barrier_change(x, s * dx, f, f_new, t) <= -0.25 * s * decrement) {
          x = xn;
          f.swap(f_new);
          accepted = true;
          break;
        }
      }
      ++steps;
      if (!accepted || s * dx.norm() <= 1e-15 * (1.0 + x.norm())) break;
      if (opts.stop_when && opts.stop_when(x)) {
        stopped = true;
        break;
      }
    }
    if (stopped || m == 0 || static_cast<double>(m) / t <= opts.gap_tol) break;
    t *= opts.mu;
  }

  res.x = x;
  res.iterations = steps;
  res.lambda.resize(m);
  for (std::size_t i = 0; i < m; ++i) res.lambda[i] = 1.0 / (t * -f[i]);
  refine_multipliers(prog, x, f, opts.active_tol, res.lambda);
  Vec rd = prog.objective_gradient(x);
  for (std::size_t i = 0; i < m; ++i) rd += res.lambda[i] * prog.constraint_gradient(i, x);
  res.gap = m > 0 ? static_cast<double>(m) / t : 0.0;
  res.dual_residual = rd.norm();
  res.converged = stopped || res.gap <= opts.gap_tol;
  return res;
}

}  // namespace splatcone::detail
