#pragma once

// Dual active-set method (Goldfarb–Idnani) for the Euclidean projection
//   min 0.5 |x - ref|^2  s.t.  a_i^T x >= b_i
// in R^3. Starts from the unconstrained optimum and adds the most violated
// row at a time, dropping rows whose multiplier would turn negative. It
// either terminates at the optimum or proves the rows infeasible.

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "splatcone/types.hpp"

namespace splatcone::detail {

struct ProjectionResult {
  bool feasible = true;
  Vec3 x = Vec3::Zero();
  std::vector<std::size_t> active;  // row indices
  std::vector<double> multipliers;  // aligned with `active`, for 0.5 |x - ref|^2
  int iterations = 0;
};

class ActiveSetProjector {
 public:
  void add_row(const Vec3& a, double b) {
    a_.push_back(a);
    b_.push_back(b);
  }
  std::size_t size() const { return a_.size(); }
  const Vec3& normal(std::size_t i) const { return a_[i]; }
  double offset(std::size_t i) const { return b_[i]; }

  // Rows count as satisfied when a^T x - b >= -tol.
  ProjectionResult solve(const Vec3& ref, double tol, int max_iterations = 500) const {
    ProjectionResult res;
    Vec3 x = ref;
    std::vector<std::size_t> act;
    std::vector<double> lam;
    for (int it = 0; it < max_iterations; ++it) {
      res.iterations = it;
      std::size_t p = a_.size();
      double worst = -tol;
      for (std::size_t i = 0; i < a_.size(); ++i) {
        if (contains(act, i)) continue;
        const double s = a_[i].dot(x) - b_[i];
        if (s < worst) {
          worst = s;
          p = i;
        }
      }
      if (p == a_.size()) {
        res.x = x;
        res.active = act;
        res.multipliers = lam;
        return res;
      }
      double lam_p = 0.0;
      // Step toward satisfying row p, dropping blocking rows as needed.
      while (true) {
        Vec3 z;
        Eigen::VectorXd r;
        directions(act, a_[p], z, r);
        double t1 = std::numeric_limits<double>::infinity();
        std::size_t block = act.size();
        for (std::size_t k = 0; k < act.size(); ++k) {
          if (r[k] > 1e-14) {
            const double ratio = lam[k] / r[k];
            if (ratio < t1) {
              t1 = ratio;
              block = k;
            }
          }
        }
        const double zn = z.dot(a_[p]);
        const double s = a_[p].dot(x) - b_[p];
        if (zn <= 1e-14 * a_[p].squaredNorm()) {
          // Row p is dependent on the active rows.
          if (block == act.size()) {
            res.feasible = false;
            res.x = x;
            return res;
          }
          for (std::size_t k = 0; k < act.size(); ++k) lam[k] -= t1 * r[k];
          lam_p += t1;
          drop(act, lam, block);
          continue;
        }
        const double t2 = -s / zn;
        const double t = std::min(t1, t2);
        x += t * z;
        for (std::size_t k = 0; k < act.size(); ++k) lam[k] -= t * r[k];
        lam_p += t;
        if (t2 <= t1) {
          act.push_back(p);
          lam.push_back(lam_p);
          break;
        }
        drop(act, lam, block);
      }
    }
    throw SolverError("active-set projection did not terminate");
  }

 private:
  static bool contains(const std::vector<std::size_t>& v, std::size_t i) {
    for (std::size_t j : v) {
      if (j == i) return true;
    }
    return false;
  }

  static void drop(std::vector<std::size_t>& act, std::vector<double>& lam, std::size_t k) {
    act.erase(act.begin() + static_cast<std::ptrdiff_t>(k));
    lam.erase(lam.begin() + static_cast<std::ptrdiff_t>(k));
  }

  // z: component of n orthogonal to the active normals (primal direction);
  // r: coefficients of n in the active normals (dual direction).
  void directions(const std::vector<std::size_t>& act, const Vec3& n, Vec3& z,
                  Eigen::VectorXd& r) const {
    const auto q = static_cast<Eigen::Index>(act.size());
    r.resize(q);
    if (q == 0) {
      z = n;
      return;
    }
    Eigen::Matrix<double, 3, Eigen::Dynamic> N(3, q);
    for (Eigen::Index k = 0; k < q; ++k) N.col(k) = a_[act[static_cast<std::size_t>(k)]];
    const Eigen::MatrixXd gram = N.transpose() * N;
    r = gram.partialPivLu().solve(N.transpose() * n);
    z = n - N * r;
  }

  std::vector<Vec3> a_;
  std::vector<double> b_;
};

}  // namespace splatcone::detail
