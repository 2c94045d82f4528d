#include "splatcone/collision_cone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace splatcone {

RelativeGeometry relative_geometry(const Splat& splat, const Vec3& p,
                                   const Vec3& v, double c2) {
  return {splat.mean - p, v, splat.inv_cov, c2};
}

double barrier_value(const RelativeGeometry& geom) {
  const Vec3 av = geom.A * geom.v;
  const double beta = geom.v.dot(av);
  const double delta = geom.r.dot(av);
  const double gamma = geom.r.dot(geom.A * geom.r) - geom.c2;
  return beta * gamma - delta * delta;
}

ConeStatus classify_cone(const RelativeGeometry& geom) {
  if (!geom.exterior()) return ConeStatus::inside_ellipsoid;
  if (geom.v.isZero(0.0)) return ConeStatus::zero_velocity;
  const double h = barrier_value(geom);
  return (h <= 0.0 && geom.delta() >= 0.0) ? ConeStatus::in_cone
                                           : ConeStatus::clear;
}

namespace {
const char* status_message(ConeStatus s) {
  switch (s) {
    case ConeStatus::inside_ellipsoid: return "robot inside ellipsoid (r^T A r <= c^2)";
    case ConeStatus::zero_velocity: return "zero relative velocity";
    case ConeStatus::in_cone: return "in cone";
    case ConeStatus::clear: return "clear";
  }
  return "?";
}
}  // namespace

ConePreconditionError::ConePreconditionError(ConeStatus status)
    : Error(status_message(status)), status_(status) {}

bool in_forward_cone(const RelativeGeometry& geom) {
  const ConeStatus s = classify_cone(geom);
  if (s == ConeStatus::inside_ellipsoid) throw ConePreconditionError(s);
  return s == ConeStatus::in_cone;
}

double whitened_barrier_value(const RelativeGeometry& geom, const Mat3& L) {
  const Vec3 rw = L * geom.r;
  const Vec3 vw = L * geom.v;
  const double rv = rw.dot(vw);
  return vw.squaredNorm() * (rw.squaredNorm() - geom.c2) - rv * rv;
}

bool whitened_test(const RelativeGeometry& geom, const Mat3& L) {
  const Vec3 rw = L * geom.r;
  const Vec3 vw = L * geom.v;
  if (!(rw.squaredNorm() > geom.c2)) {
    throw ConePreconditionError(ConeStatus::inside_ellipsoid);
  }
  if (vw.isZero(0.0)) return false;
  const double rv = rw.dot(vw);
  const double h = vw.squaredNorm() * (rw.squaredNorm() - geom.c2) - rv * rv;
  return h <= 0.0 && rv >= 0.0;
}

RayOracleResult oracle_ray_detail(const RelativeGeometry& geom, double t_max,
                                  int steps) {
  const auto phi = [&](double t) {
    const Vec3 d = geom.r - t * geom.v;
    return d.dot(geom.A * d) - geom.c2;
  };
  RayOracleResult res;
  const double a = geom.v.dot(geom.A * geom.v);
  const double b = geom.r.dot(geom.A * geom.v);
  res.t_star = a > 0.0 ? std::max(0.0, b / a) : 0.0;
  t_max = std::max({t_max, 2.0 * res.t_star, 0.0});

  const double at_zero = phi(0.0);
  const double at_star = phi(std::min(res.t_star, t_max));
  res.analytic_hit = std::min(at_zero, at_star) <= 0.0;

  double sampled = at_zero;
  steps = std::max(steps, 2);
  for (int i = 0; i < steps; ++i) {
    const double t = t_max * static_cast<double>(i) / (steps - 1);
    sampled = std::min(sampled, phi(t));
  }
  res.sampled_hit = sampled <= 0.0;
  res.min_phi = std::min({at_zero, at_star, sampled});
  return res;
}

bool oracle_ray_hits(const RelativeGeometry& geom, double t_max, int steps) {
  const RayOracleResult res = oracle_ray_detail(geom, t_max, steps);
  return res.analytic_hit || res.sampled_hit;
}

Vec3 projection_t(const Vec3& r, const Vec3& v, const Mat3& A) {
  const Vec3 av = A * v;
  return r - v * (r.dot(av) / v.dot(av));
}

Mat3 projection_t_dr(const Vec3& r, const Vec3& v, const Mat3& A) {
  (void)r;
  const Vec3 av = A * v;
  return Mat3::Identity() - v * av.transpose() / v.dot(av);
}

Mat3 projection_t_dv(const Vec3& r, const Vec3& v, const Mat3& A) {
  const Vec3 av = A * v;
  const Vec3 ar = A * r;
  const double beta = v.dot(av);
  const double delta = r.dot(av);
  return -v * (beta * ar - 2.0 * delta * av).transpose() / (beta * beta) -
         (delta / beta) * Mat3::Identity();
}

double radial_factor(const Vec3& t, const Mat3& A) {
  return std::sqrt(t.dot(A * t)) / t.norm();
}

Vec3 radial_factor_gradient(const Vec3& t, const Mat3& A) {
  const double n = t.norm();
  const double q = std::sqrt(t.dot(A * t));
  return A * t / (n * q) - (q / (n * n * n)) * t;
}

InflationResult inflate(const RelativeGeometry& geom, const Vec3& scales,
                        double rho, InflationMode mode) {
  if (!(rho >= 0.0)) throw ConfigError("robot radius must be non-negative");
  const double c = std::sqrt(geom.c2);
  InflationResult res;
  res.mode = mode;
  if (mode == InflationMode::conservative) {
    res.psi = 1.0 / scales.minCoeff();
    res.c_M = c + rho * res.psi;
    return res;
  }

  const double beta = geom.beta();
  const Vec3 t =
      beta > 0.0 ? projection_t(geom.r, geom.v, geom.A) : Vec3::Zero().eval();
  if (!(beta > 0.0) || t.norm() < 1e-9 * geom.r.norm()) {
    if (rho == 0.0) {
      res.c_M = c;
      return res;
    }
    throw DegenerateDirectionError(
        "exact inflation undefined: velocity parallel to line of sight or zero");
  }
  res.psi = radial_factor(t, geom.A);
  res.c_M = c + rho * res.psi;
  if (rho == 0.0) return res;
  const Vec3 grad_psi = radial_factor_gradient(t, geom.A);
  // r = mu - p, so d/dp = -d/dr.
  res.grad_cM_p = -rho * projection_t_dr(geom.r, geom.v, geom.A).transpose() * grad_psi;
  res.grad_cM_v = rho * projection_t_dv(geom.r, geom.v, geom.A).transpose() * grad_psi;
  return res;
}

std::string to_string(InflationMode mode) {
  return mode == InflationMode::exact ? "exact" : "conservative";
}

InflationMode parse_inflation_mode(const std::string& name) {
  if (name == "exact") return InflationMode::exact;
  if (name == "conservative") return InflationMode::conservative;
  throw ConfigError("unknown inflation mode '" + name + "'");
}

InflationResult inflate_or_fallback(const RelativeGeometry& geom,
                                    const Vec3& scales, double rho,
                                    InflationMode mode) {
  try {
    return inflate(geom, scales, rho, mode);
  } catch (const DegenerateDirectionError&) {
    return inflate(geom, scales, rho, InflationMode::conservative);
  }
}

}  // namespace splatcone
