#pragma once

#include <string>

#include "splatcone/splat_scene.hpp"
#include "splatcone/types.hpp"

namespace splatcone {

/// Relative geometry between a point robot and one confidence ellipsoid.
///
/// r is the line of sight mu - p, v the relative velocity, A the inverse
/// covariance and c2 the squared confidence radius (c^2, or c_M^2 when the
/// robot is inflated). The scalars follow the cone conditions:
///   beta = v^T A v,  delta = r^T A v,  gamma = r^T A r - c2.
struct RelativeGeometry {
  Vec3 r = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Mat3 A = Mat3::Identity();
  double c2 = 1.0;

  double beta() const { return v.dot(A * v); }
  double delta() const { return r.dot(A * v); }
  double gamma() const { return r.dot(A * r) - c2; }
  // Robot strictly outside the ellipsoid.
  bool exterior() const { return gamma() > 0.0; }
};

RelativeGeometry relative_geometry(const Splat& splat, const Vec3& p,
                                   const Vec3& v, double c2);

// h = beta * gamma - delta^2. Non-negative exactly when the forward ray
// misses the ellipsoid (or points away from it).
double barrier_value(const RelativeGeometry& geom);

enum class ConeStatus {
  clear,             // outside the ellipsoid, ray misses
  in_cone,           // outside the ellipsoid, ray hits (h <= 0, delta >= 0)
  inside_ellipsoid,  // gamma <= 0
  zero_velocity,     // v == 0; a stationary exterior robot never enters
};

// Total classification, never throws. inside_ellipsoid takes precedence
// over zero_velocity.
ConeStatus classify_cone(const RelativeGeometry& geom);

class ConePreconditionError : public Error {
 public:
  explicit ConePreconditionError(ConeStatus status);
  ConeStatus status() const { return status_; }

 private:
  ConeStatus status_;
};

/// Forward collision cone test: h <= 0 and delta >= 0. The boundary h = 0
/// counts as a collision. Zero velocity is reported as not in the cone;
/// a robot inside the ellipsoid throws ConePreconditionError.
bool in_forward_cone(const RelativeGeometry& geom);

// Same verdict evaluated on whitened variables r~ = L r, v~ = L v, where
// L^T L = A (the sphere form of the cone conditions).
bool whitened_test(const RelativeGeometry& geom, const Mat3& L);
// |v~|^2 (|r~|^2 - c2) - (r~ . v~)^2.
double whitened_barrier_value(const RelativeGeometry& geom, const Mat3& L);

/// Ground truth for the cone test: does phi(t) = (r - t v)^T A (r - t v) - c2
/// reach <= 0 for some t in [0, t_max]? Evaluates phi directly at t = 0, at
/// the clamped minimizer delta / beta, and on `steps` uniform samples.
/// t_max is extended to at least twice the minimizer.
struct RayOracleResult {
  bool analytic_hit = false;
  bool sampled_hit = false;
  double min_phi = 0.0;
  double t_star = 0.0;
};
RayOracleResult oracle_ray_detail(const RelativeGeometry& geom, double t_max,
                                  int steps);
bool oracle_ray_hits(const RelativeGeometry& geom, double t_max, int steps);

enum class InflationMode { exact, conservative };
std::string to_string(InflationMode mode);
InflationMode parse_inflation_mode(const std::string& name);

struct InflationResult {
  double c_M = 0.0;
  double psi = 0.0;
  Vec3 grad_cM_p = Vec3::Zero();
  Vec3 grad_cM_v = Vec3::Zero();
  InflationMode mode = InflationMode::conservative;
};

class DegenerateDirectionError : public Error {
 public:
  using Error::Error;
};

// A-orthogonal projection of r onto the complement of v: t = r - v delta/beta.
Vec3 projection_t(const Vec3& r, const Vec3& v, const Mat3& A);
// dt/dr = I - v (A v)^T / beta.
Mat3 projection_t_dr(const Vec3& r, const Vec3& v, const Mat3& A);
// dt/dv = -v (beta A r - 2 delta A v)^T / beta^2 - (delta / beta) I.
Mat3 projection_t_dv(const Vec3& r, const Vec3& v, const Mat3& A);
// psi(t) = sqrt(t^T A t) / |t|, the robot's radial size in whitened units.
double radial_factor(const Vec3& t, const Mat3& A);
Vec3 radial_factor_gradient(const Vec3& t, const Mat3& A);

/// Minkowski-sum inflation of the confidence radius by a robot sphere of
/// radius rho. `geom.c2` is the un-inflated c^2.
///
/// conservative: c_M = c + rho / s_min, zero gradients.
/// exact: c_M = c + rho * psi(t), with gradients with respect to the robot
/// position p (note r = mu - p) and velocity v. Throws
/// DegenerateDirectionError when beta == 0 or |t| < 1e-9 |r|.
InflationResult inflate(const RelativeGeometry& geom, const Vec3& scales,
                        double rho, InflationMode mode);

// Exact mode, falling back to conservative on degenerate directions.
InflationResult inflate_or_fallback(const RelativeGeometry& geom,
                                    const Vec3& scales, double rho,
                                    InflationMode mode);

}  // namespace splatcone
