#include "splatcone/splat_scene.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "splatcone/chi2.hpp"

namespace splatcone {

Mat3 Splat::covariance() const {
  const Mat3 rs = rotation.toRotationMatrix() * scales.asDiagonal();
  return rs * rs.transpose();
}

Splat make_splat(const Vec3& mean, const Quat& rotation, const Vec3& scales,
                 double opacity) {
  Splat s;
  s.mean = mean;
  s.rotation = rotation.normalized();
  s.scales = scales;
  s.opacity = opacity;
  const Mat3 r = s.rotation.toRotationMatrix();
  s.whitening = scales.cwiseInverse().asDiagonal() * r.transpose();
  s.inv_cov = s.whitening.transpose() * s.whitening;
  s.inv_cov = 0.5 * (s.inv_cov + s.inv_cov.transpose()).eval();
  s.s_min = scales.minCoeff();
  return s;
}

std::optional<std::string> audit_splat(const Splat& splat,
                                       double anisotropy_cap) {
  if (!splat.mean.allFinite()) return "non-finite mean";
  if (!(splat.scales.minCoeff() > 0.0) || !splat.scales.allFinite()) {
    return "non-positive scale";
  }
  if (splat.scales.maxCoeff() / splat.scales.minCoeff() >
      anisotropy_cap * (1.0 + 1e-12)) {
    return "anisotropy above cap";
  }
  if (std::abs(splat.rotation.norm() - 1.0) > 1e-9) return "rotation not unit";
  if (!(splat.opacity >= 0.0 && splat.opacity <= 1.0)) {
    return "opacity outside [0, 1]";
  }
  const Mat3 sigma = splat.covariance();
  const Mat3 a = splat.inv_cov;
  if ((a - a.transpose()).norm() > 1e-12 * a.norm()) return "inv_cov asymmetric";
  const double rel =
      (a * sigma - Mat3::Identity()).norm();  // covers (RSS^TR^T)^-1
  if (rel > 1e-10) return "inv_cov does not invert covariance";
  if ((splat.whitening.transpose() * splat.whitening - a).norm() >
      1e-10 * a.norm()) {
    return "whitening inconsistent with inv_cov";
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(a, Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) return "inv_cov not positive";
  if (std::abs(splat.s_min - splat.scales.minCoeff()) > 0.0) {
    return "s_min inconsistent";
  }
  return std::nullopt;
}

Scene::Scene(std::vector<Splat> splats, double confidence)
    : splats_(std::move(splats)), confidence_(confidence) {
  if (!(confidence_ > 0.0) || !std::isfinite(confidence_)) {
    throw ConfigError("scene confidence must be positive");
  }
  std::vector<Vec3> means;
  means.reserve(splats_.size());
  double pad = 0.0;
  const double c = std::sqrt(confidence_);
  for (const Splat& s : splats_) {
    means.push_back(s.mean);
    pad = std::max(pad, c * s.max_scale());
    max_scale_ = std::max(max_scale_, s.max_scale());
    max_eigenvalue_ = std::max(max_eigenvalue_, 1.0 / (s.s_min * s.s_min));
  }
  if (!means.empty()) {
    bounds_.min = means.front();
    bounds_.max = means.front();
    for (const Vec3& m : means) {
      bounds_.min = bounds_.min.cwiseMin(m);
      bounds_.max = bounds_.max.cwiseMax(m);
    }
    bounds_.min.array() -= pad;
    bounds_.max.array() += pad;
  }
  index_ = KdTree(std::move(means));
}

std::vector<std::size_t> Scene::query_nearby(const Vec3& p,
                                             double radius) const {
  std::vector<std::size_t> out;
  index_.radius_query(p, radius, out);
  return out;
}

std::vector<std::size_t> Scene::query_reach(const Vec3& p, double radius,
                                            double c2, double pad) const {
  const double c = std::sqrt(c2);
  std::vector<std::size_t> out;
  index_.radius_query(p, radius + c * max_scale_ + pad, out);
  std::erase_if(out, [&](std::size_t i) {
    const Splat& s = splats_[i];
    return (s.mean - p).norm() > radius + c * s.max_scale() + pad;
  });
  return out;
}

std::vector<std::size_t> query_nearby(const Scene& scene, const Vec3& p,
                                      double radius) {
  return scene.query_nearby(p, radius);
}

Scene preprocess(const std::vector<RawSplat>& raw, const PreprocessOptions& opts,
                 PreprocessReport* report) {
  if (opts.anisotropy_cap < 1.0) throw ConfigError("anisotropy cap must be >= 1");
  PreprocessReport rep;
  rep.read = raw.size();

  std::vector<const RawSplat*> kept;
  kept.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const RawSplat& s = raw[i];
    if (s.rotation.norm() < 1e-8) {
      ++rep.rejected_rotation;
      rep.warnings.push_back("splat " + std::to_string(i) +
                             ": degenerate quaternion, rejected");
      continue;
    }
    if (s.opacity < opts.opacity_min) {
      ++rep.filtered_opacity;
      continue;
    }
    if (!(s.scales.minCoeff() > 0.0)) {
      throw ParseError("splat " + std::to_string(i) + ": non-positive scale");
    }
    kept.push_back(&s);
  }
  if (kept.empty()) {
    throw ParseError("no splats left after filtering (" +
                     std::to_string(rep.read) + " read)");
  }

  Vec3 lo = kept.front()->mean;
  Vec3 hi = lo;
  double max_raw = 0.0;
  for (const RawSplat* s : kept) {
    lo = lo.cwiseMin(s->mean);
    hi = hi.cwiseMax(s->mean);
    max_raw = std::max(max_raw, s->scales.maxCoeff());
  }
  const double diameter = (hi - lo).norm() + 2.0 * max_raw;
  const double smin = opts.scale_min.value_or(1e-3 * diameter);
  const double smax = opts.scale_max.value_or(diameter);
  if (!(smin > 0.0) || !(smax >= smin)) {
    throw ConfigError("invalid scale clamp range");
  }
  rep.scale_min = smin;
  rep.scale_max = smax;

  std::vector<Splat> splats;
  splats.reserve(kept.size());
  for (const RawSplat* s : kept) {
    Vec3 scales = s->scales.cwiseMax(smin).cwiseMin(smax);
    scales = scales.cwiseMax(scales.maxCoeff() / opts.anisotropy_cap);
    if (scales != s->scales) ++rep.clamped;
    const Quat q(s->rotation[0], s->rotation[1], s->rotation[2], s->rotation[3]);
    splats.push_back(make_splat(s->mean, q, scales, s->opacity));
  }
  rep.kept = splats.size();
  if (report != nullptr) *report = rep;
  return Scene(std::move(splats), opts.confidence.value_or(default_confidence()));
}

std::string to_string(ScenePattern pattern) {
  switch (pattern) {
    case ScenePattern::single: return "single";
    case ScenePattern::ring: return "ring";
    case ScenePattern::clutter: return "clutter";
    case ScenePattern::wall: return "wall";
  }
  return "?";
}

ScenePattern parse_scene_pattern(const std::string& name) {
  if (name == "single") return ScenePattern::single;
  if (name == "ring") return ScenePattern::ring;
  if (name == "clutter") return ScenePattern::clutter;
  if (name == "wall") return ScenePattern::wall;
  throw ConfigError("unknown scene pattern '" + name + "'");
}

}  // namespace splatcone
