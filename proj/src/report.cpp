#include "splatcone/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <system_error>

#include <Eigen/Eigenvalues>

namespace splatcone {

namespace fs = std::filesystem;

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " to " + path.string());
  }
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0.0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

template <typename T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

}  // namespace

Json to_json(const FilterConfig& cfg) {
  Json j;
  j["p_k"] = cfg.p_k;
  j["confidence"] = optional_json(cfg.confidence);
  j["activation_radius"] = cfg.activation_radius;
  j["activation_horizon"] = cfg.activation_horizon;
  j["rho"] = cfg.rho;
  j["inflation"] = to_string(cfg.inflation);
  j["slack"] = to_string(cfg.slack);
  j["slack_weight"] = cfg.slack_weight;
  j["a_max"] = cfg.a_max;
  j["v_max"] = optional_json(cfg.v_max);
  j["dt"] = cfg.dt;
  j["rest_speed"] = cfg.rest_speed;
  j["approach_gating"] = cfg.approach_gating;
  j["alpha1"] = cfg.alpha1.value_or(cfg.p_k);
  j["alpha2"] = cfg.alpha2.value_or(cfg.p_k);
  return j;
}

Json to_json(const SimConfig& cfg) {
  Json j;
  j["filter"] = to_string(cfg.filter);
  j["filter_config"] = to_json(cfg.filter_cfg);
  j["gains"] = {{"kp", cfg.gains.kp}, {"kd", cfg.gains.kd}};
  j["timeout"] = cfg.timeout;
  j["goal_tolerance"] = cfg.goal_tolerance;
  j["goal_speed_tolerance"] = cfg.goal_speed_tolerance;
  j["intervention_tol"] = cfg.intervention_tol;
  return j;
}

Json to_json(const BatchConfig& cfg) {
  Json j;
  j["sim"] = to_json(cfg.sim);
  j["start_radius"] = optional_json(cfg.start_radius);
  j["height"] = optional_json(cfg.height);
  j["goal_jitter"] = cfg.goal_jitter;
  return j;
}

Json to_json(const SmoothnessMetrics& m) {
  Json j;
  j["nJ"] = m.nJ;
  j["rmsJ"] = m.rmsJ;
  j["isj"] = m.isj;
  j["path_length"] = m.path_length;
  j["duration"] = m.duration;
  return j;
}

Json to_json(const Distribution& d) {
  Json j;
  j["count"] = d.count;
  j["min"] = d.min;
  j["p25"] = d.p25;
  j["median"] = d.median;
  j["mean"] = d.mean;
  j["p75"] = d.p75;
  j["p90"] = d.p90;
  j["max"] = d.max;
  return j;
}

Json to_json(const CollisionAudit& a) {
  Json j;
  j["min_clearance"] = a.min_clearance;
  j["worst_splat"] = a.worst_splat;
  j["worst_sample"] = a.worst_sample;
  j["collided"] = a.collided;
  return j;
}

std::string trajectory_csv(const TrajectoryRecord& record) {
  std::string out = "t,px,py,pz,vx,vy,vz,ux,uy,uz,min_h,solve_time,build_time,qp_time\n";
  for (const TrajectorySample& s : record.samples) {
    const double fields[] = {s.t,      s.p.x(),        s.p.y(),      s.p.z(),     s.v.x(),
                             s.v.y(),  s.v.z(),        s.u.x(),      s.u.y(),     s.u.z(),
                             s.min_h,  s.solve_time(), s.build_time, s.qp_time};
    for (std::size_t i = 0; i < std::size(fields); ++i) {
      if (i > 0) out += ',';
      out += format_double(fields[i]);
    }
    out += '\n';
  }
  return out;
}

Json trajectory_summary(const TrajectoryRecord& record,
                        const std::optional<SmoothnessMetrics>& metrics) {
  double min_h = std::numeric_limits<double>::infinity();
  for (const TrajectorySample& s : record.samples) min_h = std::min(min_h, s.min_h);
  Json j;
  j["outcome"] = to_string(record.outcome);
  j["start"] = vec_json(record.start);
  j["goal"] = vec_json(record.goal);
  j["final_state"] = {{"t", record.final_state.t},
                      {"p", vec_json(record.final_state.p)},
                      {"v", vec_json(record.final_state.v)}};
  j["dt"] = record.dt;
  j["samples"] = record.samples.size();
  j["min_h"] = min_h;  // +inf (no active splat) serializes as null
  j["interventions"] = record.interventions;
  if (record.first_intervention) {
    j["first_intervention"] = {{"t", record.first_intervention->t},
                               {"p", vec_json(record.first_intervention->p)},
                               {"distance", record.first_intervention_distance}};
  } else {
    j["first_intervention"] = nullptr;
  }
  j["audit"] = to_json(record.audit);
  j["metrics"] = metrics ? to_json(*metrics) : Json(nullptr);
  j["nJ_definition"] = kNjDefinition;
  return j;
}

Json trajectory_timing(const TrajectoryRecord& record) {
  std::vector<double> build, qp, total;
  for (const TrajectorySample& s : record.samples) {
    build.push_back(s.build_time);
    qp.push_back(s.qp_time);
    total.push_back(s.solve_time());
  }
  Json j;
  j["unit"] = "seconds";
  j["step_build_time"] = to_json(summarize(build));
  j["step_qp_time"] = to_json(summarize(qp));
  j["step_time"] = to_json(summarize(total));
  return j;
}

std::string batch_metrics_csv(const BatchReport& report) {
  std::string out =
      "index,outcome,nJ,rmsJ,isj,path_length,duration,min_clearance,interventions,"
      "first_intervention_distance\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < report.trajectories.size(); ++i) {
    const TrajectoryResult& r = report.trajectories[i];
    const SmoothnessMetrics m = r.metrics.value_or(SmoothnessMetrics{nan, nan, nan, nan, nan});
    out += std::to_string(i) + ',' + to_string(r.record.outcome);
    for (double v : {m.nJ, m.rmsJ, m.isj, m.path_length, m.duration,
                     r.record.audit.min_clearance}) {
      out += ',' + format_double(v);
    }
    out += ',' + std::to_string(r.record.interventions) + ',' +
           format_double(r.record.first_intervention_distance) + '\n';
  }
  return out;
}

Json batch_summary(const BatchReport& report) {
  Json j;
  j["trajectories"] = report.trajectories.size();
  j["success_rate"] = report.success_rate;
  Json outcomes;
  for (int k = 0; k < 4; ++k) {
    outcomes[to_string(static_cast<Outcome>(k))] = report.outcome_counts[k];
  }
  j["outcomes"] = outcomes;
  j["metrics"] = {{"nJ", to_json(report.nJ)},
                  {"rmsJ", to_json(report.rmsJ)},
                  {"isj", to_json(report.isj)},
                  {"path_length", to_json(report.path_length)}};
  j["nJ_definition"] = kNjDefinition;

  std::vector<double> first;
  double reached_clearance = std::numeric_limits<double>::infinity();
  for (const TrajectoryResult& r : report.trajectories) {
    if (r.record.first_intervention) first.push_back(r.record.first_intervention_distance);
    if (r.record.outcome == Outcome::reached_goal) {
      reached_clearance = std::min(reached_clearance, r.record.audit.min_clearance);
    }
  }
  j["first_intervention_distance"] = to_json(summarize(first));
  j["min_clearance_reached"] = reached_clearance;
  j["warnings"] = report.warnings;
  return j;
}

Json batch_timing(const BatchReport& report) {
  Json j;
  j["unit"] = "seconds";
  j["step_build_time"] = to_json(report.step_build_time);
  j["step_qp_time"] = to_json(report.step_qp_time);
  j["step_time"] = to_json(report.step_time);
  return j;
}

PlotOptions parse_projection(const std::string& axes) {
  PlotOptions opts;
  if (axes == "xy") {
    opts.axis_x = 0;
    opts.axis_y = 1;
  } else if (axes == "xz") {
    opts.axis_x = 0;
    opts.axis_y = 2;
  } else if (axes == "yz") {
    opts.axis_x = 1;
    opts.axis_y = 2;
  } else {
    throw ConfigError("projection must be xy, xz or yz, got '" + axes + "'");
  }
  return opts;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};

struct Frame {
  double x0, x1, y0, y1, scale;
  double px(double x) const { return (x - x0) * scale; }
  double py(double y) const { return (y1 - y) * scale; }
};

}  // namespace

std::string trajectory_svg(const Scene& scene,
                           const std::vector<const TrajectoryRecord*>& records,
                           const PlotOptions& opts) {
  const int ax = opts.axis_x;
  const int ay = opts.axis_y;
  if (ax < 0 || ax > 2 || ay < 0 || ay > 2 || ax == ay) {
    throw ConfigError("plot axes must be two distinct indices in [0, 2]");
  }
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  const auto grow = [&](const Vec3& p) {
    x0 = std::min(x0, p[ax]);
    x1 = std::max(x1, p[ax]);
    y0 = std::min(y0, p[ay]);
    y1 = std::max(y1, p[ay]);
  };
  if (!scene.empty()) {
    grow(scene.bounds().min);
    grow(scene.bounds().max);
  }
  for (const TrajectoryRecord* r : records) {
    grow(r->start);
    grow(r->goal);
    for (const Vec3& p : r->positions()) grow(p);
  }
  if (!std::isfinite(x0)) x0 = -1.0, x1 = 1.0, y0 = -1.0, y1 = 1.0;
  const double pad = 0.05 * std::max({x1 - x0, y1 - y0, 1e-6});
  Frame f{x0 - pad, x1 + pad, y0 - pad, y1 + pad, 0.0};
  f.scale = opts.width / (f.x1 - f.x0);
  const double height = (f.y1 - f.y0) * f.scale;

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << fmt(opts.width)
      << "\" height=\"" << fmt(height) << "\" viewBox=\"0 0 " << fmt(opts.width) << ' '
      << fmt(height) << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<g fill=\"#7f7f7f\">\n";

  const std::size_t stride =
      opts.max_splats == 0 ? 1 : std::max<std::size_t>(1, (scene.size() + opts.max_splats - 1) / opts.max_splats);
  for (std::size_t i = 0; i < scene.size(); i += stride) {
    const Splat& s = scene[i];
    const Mat3 cov = s.covariance();
    Eigen::Matrix2d m;
    m << cov(ax, ax), cov(ax, ay), cov(ay, ax), cov(ay, ay);
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(m);
    const Eigen::Vector2d lam = eig.eigenvalues().cwiseMax(0.0);
    const Eigen::Vector2d major = eig.eigenvectors().col(1);
    // The drawing's y axis points down, so angles flip sign.
    const double angle = -std::atan2(major.y(), major.x()) * 180.0 / std::numbers::pi;
    const double cx = f.px(s.mean[ax]);
    const double cy = f.py(s.mean[ay]);
    svg << "<ellipse cx=\"" << fmt(cx) << "\" cy=\"" << fmt(cy) << "\" rx=\""
        << fmt(2.0 * std::sqrt(lam[1]) * f.scale) << "\" ry=\""
        << fmt(2.0 * std::sqrt(lam[0]) * f.scale) << "\" fill-opacity=\""
        << fmt(0.15 + 0.35 * std::clamp(s.opacity, 0.0, 1.0)) << "\" transform=\"rotate("
        << fmt(angle) << ' ' << fmt(cx) << ' ' << fmt(cy) << ")\"/>\n";
  }
  svg << "</g>\n";

  for (std::size_t k = 0; k < records.size(); ++k) {
    const TrajectoryRecord& r = *records[k];
    const char* color = kPalette[k % std::size(kPalette)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    const std::vector<Vec3> pos = r.positions();
    for (std::size_t i = 0; i < pos.size(); ++i) {
      if (i > 0) svg << ' ';
      svg << fmt(f.px(pos[i][ax])) << ',' << fmt(f.py(pos[i][ay]));
    }
    svg << "\"/>\n";
    svg << "<circle cx=\"" << fmt(f.px(r.start[ax])) << "\" cy=\"" << fmt(f.py(r.start[ay]))
        << "\" r=\"5\" fill=\"#2ca02c\" stroke=\"black\"/>\n";
    const double gx = f.px(r.goal[ax]);
    const double gy = f.py(r.goal[ay]);
    svg << "<rect x=\"" << fmt(gx - 5.0) << "\" y=\"" << fmt(gy - 5.0)
        << "\" width=\"10\" height=\"10\" fill=\"#d62728\" stroke=\"black\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string batch_box_svg(const std::vector<NamedReport>& reports) {
  struct Panel {
    const char* title;
    Distribution BatchReport::*field;
    double unit;
  };
  const Panel panels[] = {{"nJ", &BatchReport::nJ, 1.0},
                          {"RMS J", &BatchReport::rmsJ, 1.0},
                          {"ISJ", &BatchReport::isj, 1.0},
                          {"step time [ms]", &BatchReport::step_time, 1e3}};
  const double pw = 240.0, ph = 320.0, top = 40.0, bottom = 50.0, left = 60.0;
  const double width = left + pw * std::size(panels);
  const double height = top + ph + bottom;

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << fmt(width)
      << "\" height=\"" << fmt(height) << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t p = 0; p < std::size(panels); ++p) {
    const Panel& panel = panels[p];
    const double ox = left + pw * static_cast<double>(p);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const NamedReport& nr : reports) {
      const Distribution& d = nr.report->*panel.field;
      if (d.count == 0) continue;
      lo = std::min(lo, d.min * panel.unit);
      hi = std::max(hi, d.max * panel.unit);
    }
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const auto y = [&](double v) { return top + ph * (1.0 - (v - lo) / (hi - lo)); };
    svg << "<text x=\"" << fmt(ox + pw / 2.0) << "\" y=\"" << fmt(top - 15.0)
        << "\" text-anchor=\"middle\">" << panel.title << "</text>\n"
        << "<line x1=\"" << fmt(ox) << "\" y1=\"" << fmt(top) << "\" x2=\"" << fmt(ox)
        << "\" y2=\"" << fmt(top + ph) << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
      const double v = lo + (hi - lo) * t / 4.0;
      char label[32];
      std::snprintf(label, sizeof(label), "%.3g", v);
      svg << "<line x1=\"" << fmt(ox - 4.0) << "\" y1=\"" << fmt(y(v)) << "\" x2=\"" << fmt(ox)
          << "\" y2=\"" << fmt(y(v)) << "\" stroke=\"black\"/>\n"
          << "<text x=\"" << fmt(ox - 6.0) << "\" y=\"" << fmt(y(v) + 4.0)
          << "\" text-anchor=\"end\">" << label << "</text>\n";
    }
    const double slot = pw / static_cast<double>(std::max<std::size_t>(1, reports.size()));
    for (std::size_t k = 0; k < reports.size(); ++k) {
      const Distribution& d = reports[k].report->*panel.field;
      const double cx = ox + slot * (static_cast<double>(k) + 0.5);
      const double bw = std::min(40.0, 0.5 * slot);
      const char* color = kPalette[k % std::size(kPalette)];
      svg << "<text x=\"" << fmt(cx) << "\" y=\"" << fmt(top + ph + 20.0)
          << "\" text-anchor=\"middle\">" << reports[k].name << "</text>\n";
      if (d.count == 0) continue;
      const double u = panel.unit;
      svg << "<line x1=\"" << fmt(cx) << "\" y1=\"" << fmt(y(d.min * u)) << "\" x2=\"" << fmt(cx)
          << "\" y2=\"" << fmt(y(d.max * u)) << "\" stroke=\"" << color << "\"/>\n"
          << "<rect x=\"" << fmt(cx - bw / 2.0) << "\" y=\"" << fmt(y(d.p75 * u))
          << "\" width=\"" << fmt(bw) << "\" height=\""
          << fmt(std::max(0.0, y(d.p25 * u) - y(d.p75 * u))) << "\" fill=\"" << color
          << "\" fill-opacity=\"0.35\" stroke=\"" << color << "\"/>\n"
          << "<line x1=\"" << fmt(cx - bw / 2.0) << "\" y1=\"" << fmt(y(d.median * u))
          << "\" x2=\"" << fmt(cx + bw / 2.0) << "\" y2=\"" << fmt(y(d.median * u))
          << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace splatcone
