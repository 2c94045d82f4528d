#include <cmath>
#include <numbers>
#include <random>

#include "splatcone/chi2.hpp"
#include "splatcone/splat_scene.hpp"

namespace splatcone {
namespace {

void validate(const SyntheticSpec& spec) {
  if (spec.count == 0) throw ConfigError("synthetic scene: count must be positive");
  if (!(spec.scale_lo > 0.0) || spec.scale_hi < spec.scale_lo) {
    throw ConfigError("synthetic scene: invalid scale range");
  }
  if (spec.anisotropy_max < 1.0) {
    throw ConfigError("synthetic scene: anisotropy_max must be >= 1");
  }
  if (!(spec.height > 0.0) || !(spec.extent > 0.0)) {
    throw ConfigError("synthetic scene: height and extent must be positive");
  }
  if (!(spec.opacity >= 0.0 && spec.opacity <= 1.0)) {
    throw ConfigError("synthetic scene: opacity outside [0, 1]");
  }
  if (spec.pattern == ScenePattern::single) {
    if (spec.count != 1) throw ConfigError("synthetic scene: single pattern needs count = 1");
    if (!(spec.single_scales.minCoeff() > 0.0)) {
      throw ConfigError("synthetic scene: single_scales must be positive");
    }
  }
  if (spec.pattern == ScenePattern::ring) {
    if (spec.pillars == 0) throw ConfigError("synthetic scene: pillars must be positive");
    if (!(spec.ring_radius > 0.0) || !(spec.pillar_radius > 0.0)) {
      throw ConfigError("synthetic scene: ring and pillar radius must be positive");
    }
  }
}

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) {
    // 53 random bits mapped onto [0, 1), independent of the library's
    // distribution implementation.
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

  Eigen::Vector4d rotation() {
    // Uniform on SO(3) (Shoemake).
    const double u1 = uniform(0.0, 1.0);
    const double u2 = uniform(0.0, 2.0 * std::numbers::pi);
    const double u3 = uniform(0.0, 2.0 * std::numbers::pi);
    const double a = std::sqrt(1.0 - u1);
    const double b = std::sqrt(u1);
    return {a * std::sin(u2), a * std::cos(u2), b * std::sin(u3), b * std::cos(u3)};
  }

  Vec3 scales(double lo, double hi, double anisotropy) {
    const double longest = uniform(lo, hi);
    Vec3 s(longest, longest / uniform(1.0, anisotropy), longest / uniform(1.0, anisotropy));
    // Shuffle which local axis is the long one.
    const int k = static_cast<int>(uniform(0.0, 3.0));
    std::swap(s[0], s[std::min(k, 2)]);
    return s;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

std::vector<RawSplat> make_synthetic_raw(const SyntheticSpec& spec,
                                         std::uint64_t seed) {
  validate(spec);
  Sampler rng(seed);
  std::vector<RawSplat> out;
  out.reserve(spec.count);
  const auto emit = [&](const Vec3& mean) {
    RawSplat s;
    s.mean = mean;
    s.rotation = rng.rotation();
    s.scales = rng.scales(spec.scale_lo, spec.scale_hi, spec.anisotropy_max);
    s.opacity = spec.opacity;
    out.push_back(s);
  };

  switch (spec.pattern) {
    case ScenePattern::single: {
      RawSplat s;
      s.scales = spec.single_scales;
      s.opacity = spec.opacity;
      out.push_back(s);
      break;
    }
    case ScenePattern::ring: {
      for (std::size_t i = 0; i < spec.count; ++i) {
        const std::size_t pillar = i % spec.pillars;
        const double theta =
            2.0 * std::numbers::pi * static_cast<double>(pillar) / spec.pillars;
        const Vec3 center(spec.ring_radius * std::cos(theta),
                          spec.ring_radius * std::sin(theta), 0.0);
        const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double rad = spec.pillar_radius * std::sqrt(rng.uniform(0.0, 1.0));
        const double z = rng.uniform(0.0, spec.height);
        emit(center + Vec3(rad * std::cos(phi), rad * std::sin(phi), z));
      }
      break;
    }
    case ScenePattern::clutter: {
      for (std::size_t i = 0; i < spec.count; ++i) {
        emit(Vec3(rng.uniform(-spec.extent, spec.extent),
                  rng.uniform(-spec.extent, spec.extent),
                  rng.uniform(0.0, spec.height)));
      }
      break;
    }
    case ScenePattern::wall: {
      for (std::size_t i = 0; i < spec.count; ++i) {
        emit(Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-spec.extent, spec.extent),
                  rng.uniform(0.0, spec.height)));
      }
      break;
    }
  }
  return out;
}

Scene make_synthetic_scene(const SyntheticSpec& spec, std::uint64_t seed) {
  const std::vector<RawSplat> raw = make_synthetic_raw(spec, seed);
  std::vector<Splat> splats;
  splats.reserve(raw.size());
  for (const RawSplat& r : raw) {
    splats.push_back(make_splat(
        r.mean, Quat(r.rotation[0], r.rotation[1], r.rotation[2], r.rotation[3]),
        r.scales, r.opacity));
  }
  return Scene(std::move(splats), spec.confidence.value_or(default_confidence()));
}

}  // namespace splatcone
