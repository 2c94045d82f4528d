#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "splatcone/kd_tree.hpp"
#include "splatcone/types.hpp"

namespace splatcone {

/// Geometric part of one Gaussian primitive.
///
/// `inv_cov` is A = (R S S^T R^T)^-1 and `whitening` is L = S^-1 R^T, so that
/// L^T L = A and the confidence ellipsoid maps to a sphere under L.
struct Splat {
  Vec3 mean = Vec3::Zero();
  Quat rotation = Quat::Identity();  // unit, scalar-first on disk
  Vec3 scales = Vec3::Ones();
  double opacity = 1.0;
  Mat3 inv_cov = Mat3::Identity();
  Mat3 whitening = Mat3::Identity();
  double s_min = 1.0;

  Mat3 covariance() const;
  double max_scale() const { return scales.maxCoeff(); }
};

// Builds a splat and its derived matrices. `rotation` is normalized here;
// callers reject degenerate quaternions before getting this far.
Splat make_splat(const Vec3& mean, const Quat& rotation, const Vec3& scales,
                 double opacity);

// Returns a description of the first violated invariant, if any.
std::optional<std::string> audit_splat(const Splat& splat,
                                       double anisotropy_cap);

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
};

/// Immutable splat collection with a radius-query index over the means.
class Scene {
 public:
  Scene() = default;
  Scene(std::vector<Splat> splats, double confidence);

  const std::vector<Splat>& splats() const { return splats_; }
  const Splat& operator[](std::size_t i) const { return splats_[i]; }
  std::size_t size() const { return splats_.size(); }
  bool empty() const { return splats_.empty(); }

  /// Scene-wide c^2 of the confidence ellipsoids.
  double confidence() const { return confidence_; }
  /// Box around the means, padded by the largest confidence semi-axis.
  const Aabb& bounds() const { return bounds_; }
  double max_inv_cov_eigenvalue() const { return max_eigenvalue_; }

  std::vector<std::size_t> query_nearby(const Vec3& p, double radius) const;
  /// Splats whose sphere |x - mean| <= sqrt(c2) * max_scale + pad comes
  /// within `radius` of p.
  std::vector<std::size_t> query_reach(const Vec3& p, double radius, double c2,
                                       double pad = 0.0) const;
  double max_scale() const { return max_scale_; }

 private:
  std::vector<Splat> splats_;
  double confidence_ = 1.0;
  Aabb bounds_;
  double max_eigenvalue_ = 0.0;
  double max_scale_ = 0.0;
  KdTree index_;
};

std::vector<std::size_t> query_nearby(const Scene& scene, const Vec3& p,
                                      double radius);

// Unset scale bounds are derived from the scene diameter proxy (the
// diagonal of the means' bounding box plus twice the largest raw scale):
// scale_min = 1e-3 * diameter, scale_max = diameter.
struct PreprocessOptions {
  double opacity_min = 0.1;
  std::optional<double> scale_min;
  std::optional<double> scale_max;
  double anisotropy_cap = 100.0;
  std::optional<double> confidence;  // defaults to chi2(3, 0.99)
};

struct PreprocessReport {
  std::size_t read = 0;
  std::size_t kept = 0;
  std::size_t filtered_opacity = 0;
  std::size_t rejected_rotation = 0;
  std::size_t clamped = 0;
  double scale_min = 0.0;
  double scale_max = 0.0;
  std::vector<std::string> warnings;
};

// Pre-activation splat as stored by 3DGS exporters, already mapped through
// exp (scales) and sigmoid (opacity).
struct RawSplat {
  Vec3 mean = Vec3::Zero();
  Eigen::Vector4d rotation{1.0, 0.0, 0.0, 0.0};  // w, x, y, z
  Vec3 scales = Vec3::Ones();
  double opacity = 1.0;
};

Scene preprocess(const std::vector<RawSplat>& raw, const PreprocessOptions& opts,
                 PreprocessReport* report = nullptr);

/// Reads a binary little-endian 3DGS PLY (x, y, z, scale_0..2 in log space,
/// rot_0..3 scalar-first, opacity as a logit). Extra properties are ignored.
Scene load_ply(const std::filesystem::path& path, const PreprocessOptions& opts,
               PreprocessReport* report = nullptr);

/// Writes the same layout back (float32), used for fixtures and round trips.
void write_ply(const std::filesystem::path& path, const Scene& scene);
void write_ply(const std::filesystem::path& path,
               const std::vector<RawSplat>& raw);

// Text dump, one splat per line, doubles printed with 17 significant digits:
//
//   splatcone-scene 1
//   confidence <c2>
//   count <n>
//   <mx> <my> <mz> <qw> <qx> <qy> <qz> <s0> <s1> <s2> <opacity>
//
// Derived matrices are recomputed on load.
inline constexpr int kSceneDumpVersion = 1;
void write_scene_dump(const std::filesystem::path& path, const Scene& scene);
Scene read_scene_dump(const std::filesystem::path& path);

// Loads either format by sniffing the first line.
Scene load_scene_file(const std::filesystem::path& path,
                      const PreprocessOptions& opts,
                      PreprocessReport* report = nullptr);

enum class ScenePattern { single, ring, clutter, wall };

std::string to_string(ScenePattern pattern);
ScenePattern parse_scene_pattern(const std::string& name);

struct SyntheticSpec {
  ScenePattern pattern = ScenePattern::ring;
  std::size_t count = 2000;
  double scale_lo = 0.03;  // longest axis is drawn from [scale_lo, scale_hi]
  double scale_hi = 0.12;
  double anisotropy_max = 4.0;  // other axes shorter by up to this ratio
  Vec3 single_scales = Vec3::Ones();
  double height = 4.0;
  // ring: pillar clusters on a circle around an empty center
  std::size_t pillars = 8;
  double ring_radius = 8.0;
  double pillar_radius = 0.8;
  // clutter / wall half-width
  double extent = 10.0;
  double opacity = 0.9;
  std::optional<double> confidence;
};

Scene make_synthetic_scene(const SyntheticSpec& spec, std::uint64_t seed);

// Same draws as make_synthetic_scene, before derived quantities; used to
// write synthetic PLY fixtures.
std::vector<RawSplat> make_synthetic_raw(const SyntheticSpec& spec,
                                         std::uint64_t seed);

}  // namespace splatcone
