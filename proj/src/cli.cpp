#include "splatcone/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <ostream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "splatcone/chi2.hpp"

namespace splatcone {

namespace fs = std::filesystem;

namespace {

double parse_double(const std::string& text, const std::string& name) {
  std::string s = text;
  s.erase(0, s.find_first_not_of(" \t"));
  s.erase(s.find_last_not_of(" \t") + 1);
  double value = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() ||
      !std::isfinite(value)) {
    throw ConfigError(name + ": expected a finite number, got '" + text + "'");
  }
  return value;
}

std::uint64_t parse_unsigned(const std::string& text, const std::string& name) {
  std::uint64_t value = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError(name + ": expected a non-negative integer, got '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& text, const std::string& name) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(name + ": expected true or false, got '" + text + "'");
}

Vec3 parse_vec3(const std::string& text, const std::string& name) {
  std::string s = text;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream in(s);
  std::string a, b, c, extra;
  if (!(in >> a >> b >> c) || (in >> extra)) {
    throw ConfigError(name + ": expected three numbers, got '" + text + "'");
  }
  return {parse_double(a, name), parse_double(b, name), parse_double(c, name)};
}

std::vector<FilterKind> parse_filters(const std::string& text) {
  std::vector<FilterKind> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(parse_filter_kind(item));
  }
  if (out.empty()) throw ConfigError("batch.filters: no filter given");
  return out;
}

std::optional<double> optional_number(const std::string& text, const std::string& name) {
  if (text == "none" || text.empty()) return std::nullopt;
  return parse_double(text, name);
}

std::string join_filters(const std::vector<FilterKind>& filters) {
  std::string out;
  for (FilterKind f : filters) {
    if (!out.empty()) out += ',';
    out += to_string(f);
  }
  return out;
}

Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Json scene_json(const std::string& source, const Scene& scene) {
  Json j;
  j["source"] = source;
  j["splats"] = scene.size();
  j["confidence"] = scene.confidence();
  return j;
}

void write_json(const fs::path& path, const Json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

}  // namespace

BatchConfig RunConfig::batch_config() const {
  BatchConfig b;
  b.sim = sim;
  b.start_radius = start_radius;
  b.height = height;
  b.goal_jitter = goal_jitter;
  b.threads = threads;
  return b;
}

void RunConfig::validate() const {
  const FilterConfig& f = sim.filter_cfg;
  const auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(f.p_k, "filter.p_k");
  positive(f.a_max, "filter.a_max");
  positive(f.dt, "filter.dt");
  positive(f.slack_weight, "filter.slack_weight");
  positive(sim.gains.kp, "sim.kp");
  positive(sim.gains.kd, "sim.kd");
  positive(sim.timeout, "sim.timeout");
  positive(sim.goal_tolerance, "sim.goal_tolerance");
  positive(sim.goal_speed_tolerance, "sim.goal_speed_tolerance");
  if (f.v_max) positive(*f.v_max, "filter.v_max");
  if (f.confidence) positive(*f.confidence, "filter.confidence");
  if (f.alpha1) positive(*f.alpha1, "filter.alpha1");
  if (f.alpha2) positive(*f.alpha2, "filter.alpha2");
  if (start_radius) positive(*start_radius, "batch.start_radius");
  if (!(f.rho >= 0.0)) throw ConfigError("filter.rho must be non-negative");
  if (!(f.activation_radius > 0.0)) throw ConfigError("filter.activation_radius must be positive");
  if (!(f.activation_horizon >= 0.0)) {
    throw ConfigError("filter.activation_horizon must be non-negative");
  }
  if (!(f.rest_speed >= 0.0) || !(f.rest_speed < f.a_max * f.dt)) {
    throw ConfigError("filter.rest_speed must lie in [0, a_max * dt)");
  }
  if (!(preprocess.opacity_min >= 0.0) || !(preprocess.opacity_min <= 1.0)) {
    throw ConfigError("scene.opacity_min must lie in [0, 1]");
  }
  if (!(preprocess.anisotropy_cap >= 1.0)) throw ConfigError("scene.anisotropy_cap must be >= 1");
  if (n == 0) throw ConfigError("batch.n must be at least 1");
  if (!(goal_jitter >= 0.0)) throw ConfigError("batch.goal_jitter must be non-negative");
  if (filters.empty()) throw ConfigError("batch.filters: no filter given");
  parse_projection(projection);
  if (!scene.starts_with("synthetic:") && !fs::exists(scene)) {
    throw ConfigError("scene file does not exist: " + scene);
  }
}

void apply_option(RunConfig& cfg, const std::string& name, const std::string& value) {
  FilterConfig& f = cfg.sim.filter_cfg;
  PreprocessOptions& pre = cfg.preprocess;
  const auto num = [&] { return parse_double(value, name); };
  if (name == "scene.source") cfg.scene = value;
  else if (name == "scene.opacity_min") pre.opacity_min = num();
  else if (name == "scene.scale_min") pre.scale_min = optional_number(value, name);
  else if (name == "scene.scale_max") pre.scale_max = optional_number(value, name);
  else if (name == "scene.anisotropy_cap") pre.anisotropy_cap = num();
  else if (name == "scene.confidence") pre.confidence = optional_number(value, name);
  else if (name == "filter.kind") cfg.sim.filter = parse_filter_kind(value);
  else if (name == "filter.p_k") f.p_k = num();
  else if (name == "filter.rho") f.rho = num();
  else if (name == "filter.inflation") f.inflation = parse_inflation_mode(value);
  else if (name == "filter.slack") f.slack = parse_slack_policy(value);
  else if (name == "filter.slack_weight") f.slack_weight = num();
  else if (name == "filter.a_max") f.a_max = num();
  else if (name == "filter.v_max") f.v_max = optional_number(value, name);
  else if (name == "filter.dt") f.dt = num();
  else if (name == "filter.confidence") f.confidence = optional_number(value, name);
  else if (name == "filter.activation_radius") f.activation_radius = num();
  else if (name == "filter.activation_horizon") f.activation_horizon = num();
  else if (name == "filter.rest_speed") f.rest_speed = num();
  else if (name == "filter.approach_gating") f.approach_gating = parse_bool(value, name);
  else if (name == "filter.alpha1") f.alpha1 = optional_number(value, name);
  else if (name == "filter.alpha2") f.alpha2 = optional_number(value, name);
  else if (name == "sim.kp") cfg.sim.gains.kp = num();
  else if (name == "sim.kd") cfg.sim.gains.kd = num();
  else if (name == "sim.timeout") cfg.sim.timeout = num();
  else if (name == "sim.goal_tolerance") cfg.sim.goal_tolerance = num();
  else if (name == "sim.goal_speed_tolerance") cfg.sim.goal_speed_tolerance = num();
  else if (name == "run.start") cfg.start = parse_vec3(value, name);
  else if (name == "run.goal") cfg.goal = parse_vec3(value, name);
  else if (name == "run.seed") cfg.seed = parse_unsigned(value, name);
  else if (name == "run.out") cfg.out = value;
  else if (name == "run.projection") cfg.projection = value;
  else if (name == "batch.n") cfg.n = static_cast<std::size_t>(parse_unsigned(value, name));
  else if (name == "batch.filters") cfg.filters = parse_filters(value);
  else if (name == "batch.start_radius") cfg.start_radius = optional_number(value, name);
  else if (name == "batch.height") cfg.height = optional_number(value, name);
  else if (name == "batch.goal_jitter") cfg.goal_jitter = num();
  else if (name == "batch.threads") cfg.threads = static_cast<unsigned>(parse_unsigned(value, name));
  else throw ConfigError("unknown option '" + name + "'");
}

void apply_config_file(const fs::path& path, RunConfig& cfg) {
  if (!fs::exists(path)) throw ConfigError("config file does not exist: " + path.string());
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError("config " + path.string() + ": key '" + section +
                        "' is outside any section");
    }
    for (const auto& [key, value] : body) {
      apply_option(cfg, section + "." + key, value.get_value<std::string>());
    }
  }
}

Json to_json(const RunConfig& cfg) {
  Json j;
  j["scene"] = cfg.scene;
  Json pre;
  pre["opacity_min"] = cfg.preprocess.opacity_min;
  pre["scale_min"] = cfg.preprocess.scale_min ? Json(*cfg.preprocess.scale_min) : Json(nullptr);
  pre["scale_max"] = cfg.preprocess.scale_max ? Json(*cfg.preprocess.scale_max) : Json(nullptr);
  pre["anisotropy_cap"] = cfg.preprocess.anisotropy_cap;
  pre["confidence"] =
      cfg.preprocess.confidence ? Json(*cfg.preprocess.confidence) : Json(nullptr);
  j["preprocess"] = pre;
  j["sim"] = to_json(cfg.sim);
  j["start"] = cfg.start ? vec_json(*cfg.start) : Json(nullptr);
  j["goal"] = cfg.goal ? vec_json(*cfg.goal) : Json(nullptr);
  j["seed"] = cfg.seed;
  j["projection"] = cfg.projection;
  j["batch"] = {{"n", cfg.n},
                {"filters", join_filters(cfg.filters)},
                {"start_radius", cfg.start_radius ? Json(*cfg.start_radius) : Json(nullptr)},
                {"height", cfg.height ? Json(*cfg.height) : Json(nullptr)},
                {"goal_jitter", cfg.goal_jitter}};
  return j;
}

Scene make_scene(const std::string& source, const PreprocessOptions& opts,
                 PreprocessReport* report) {
  constexpr std::string_view kPrefix = "synthetic:";
  if (!source.starts_with(kPrefix)) {
    const fs::path path(source);
    if (!fs::exists(path)) throw ParseError("scene file does not exist: " + source);
    return load_scene_file(path, opts, report);
  }
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(source.substr(kPrefix.size()));
  while (std::getline(in, item, ':')) parts.push_back(item);
  if (parts.empty() || parts.size() > 3) {
    throw ConfigError("synthetic scene must be synthetic:<pattern>[:<count>[:<seed>]]");
  }
  if (parts.size() == 1 && parts[0] == "empty") {
    return Scene({}, opts.confidence.value_or(default_confidence()));
  }
  SyntheticSpec spec;
  spec.pattern = parse_scene_pattern(parts[0]);
  spec.count = spec.pattern == ScenePattern::single ? 1 : 2000;
  if (parts.size() > 1) spec.count = static_cast<std::size_t>(parse_unsigned(parts[1], "count"));
  const std::uint64_t seed = parts.size() > 2 ? parse_unsigned(parts[2], "seed") : 7;
  spec.confidence = opts.confidence;
  return make_synthetic_scene(spec, seed);
}

int cmd_convert(const ConvertOptions& opts, std::ostream& log) {
  PreprocessReport report;
  const Scene scene = load_scene_file(opts.input, opts.preprocess, &report);
  if (opts.output.extension() == ".ply") {
    write_ply(opts.output, scene);
  } else {
    write_scene_dump(opts.output, scene);
  }
  std::vector<double> smin, smax;
  for (const Splat& s : scene.splats()) {
    smin.push_back(s.s_min);
    smax.push_back(s.max_scale());
  }
  const Distribution lo = summarize(smin);
  const Distribution hi = summarize(smax);
  log << "splats: " << scene.size() << " (read " << report.read << ", filtered by opacity "
      << report.filtered_opacity << ", rejected rotation " << report.rejected_rotation
      << ", clamped " << report.clamped << ")\n"
      << "smallest scale: min " << lo.min << " median " << lo.median << " max " << lo.max << '\n'
      << "largest scale: min " << hi.min << " median " << hi.median << " max " << hi.max << '\n'
      << "max eigenvalue of inv_cov: " << scene.max_inv_cov_eigenvalue() << '\n';
  for (const std::string& w : report.warnings) log << "warning: " << w << '\n';
  log << "wrote " << opts.output.string() << '\n';
  return kExitOk;
}

int cmd_generate(const std::string& source, const fs::path& output, std::ostream& log) {
  if (!source.starts_with("synthetic:")) {
    throw ConfigError("generate expects synthetic:<pattern>[:<count>[:<seed>]]");
  }
  const Scene scene = make_scene(source, {});
  if (output.extension() == ".ply") {
    write_ply(output, scene);
  } else {
    write_scene_dump(output, scene);
  }
  log << "splats: " << scene.size() << "\nwrote " << output.string() << '\n';
  return kExitOk;
}

int cmd_run(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Scene scene = make_scene(cfg.scene, cfg.preprocess);
  Vec3 start, goal;
  if (cfg.start && cfg.goal) {
    start = *cfg.start;
    goal = *cfg.goal;
  } else {
    const auto pairs = batch_endpoints(scene, 1, cfg.batch_config(), cfg.seed);
    start = cfg.start.value_or(pairs[0].first);
    goal = cfg.goal.value_or(pairs[0].second);
  }
  const TrajectoryRecord rec = run_trajectory(scene, start, goal, cfg.sim);
  std::optional<SmoothnessMetrics> metrics;
  if (rec.samples.size() >= 4) metrics = compute_metrics(rec);

  Json summary;
  summary["seed"] = cfg.seed;
  summary["config"] = to_json(cfg);
  summary["scene"] = scene_json(cfg.scene, scene);
  summary["result"] = trajectory_summary(rec, metrics);
  summary["timing"] = trajectory_timing(rec);

  write_file_atomic(cfg.out / "trajectory.csv", trajectory_csv(rec));
  write_json(cfg.out / "summary.json", summary);
  PlotOptions plot = parse_projection(cfg.projection);
  write_file_atomic(cfg.out / "trajectory.svg", trajectory_svg(scene, {&rec}, plot));

  log << "outcome: " << to_string(rec.outcome) << "\nsamples: " << rec.samples.size()
      << "\nmin clearance: " << rec.audit.min_clearance << '\n';
  log << "wrote " << (cfg.out / "summary.json").string() << '\n';
  return kExitOk;
}

int cmd_batch(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Scene scene = make_scene(cfg.scene, cfg.preprocess);
  const PlotOptions plot = parse_projection(cfg.projection);

  std::vector<BatchReport> reports;
  reports.reserve(cfg.filters.size());
  Json filters_json, timing_json;
  std::vector<NamedReport> named;
  std::set<FilterKind> seen;
  for (FilterKind kind : cfg.filters) {
    if (!seen.insert(kind).second) continue;
    BatchConfig bc = cfg.batch_config();
    bc.sim.filter = kind;
    reports.push_back(run_batch(scene, cfg.n, bc, cfg.seed));
    const BatchReport& rep = reports.back();
    const std::string name = to_string(kind);
    write_file_atomic(cfg.out / (name + "_metrics.csv"), batch_metrics_csv(rep));
    std::vector<const TrajectoryRecord*> recs;
    for (const TrajectoryResult& r : rep.trajectories) recs.push_back(&r.record);
    write_file_atomic(cfg.out / (name + "_trajectories.svg"), trajectory_svg(scene, recs, plot));
    filters_json[name] = batch_summary(rep);
    timing_json[name] = batch_timing(rep);
    log << name << ": success " << rep.success_rate << ", median ISJ " << rep.isj.median
        << ", median RMS-J " << rep.rmsJ.median << ", median step time "
        << rep.step_time.median * 1e3 << " ms\n";
    for (const std::string& w : rep.warnings) log << "warning: " << w << '\n';
  }
  {
    std::size_t k = 0;
    std::set<FilterKind> once;
    for (FilterKind kind : cfg.filters) {
      if (once.insert(kind).second) named.push_back({to_string(kind), &reports[k++]});
    }
  }

  Json report;
  report["seed"] = cfg.seed;
  report["config"] = to_json(cfg);
  report["scene"] = scene_json(cfg.scene, scene);
  report["nJ_definition"] = kNjDefinition;
  report["filters"] = filters_json;
  write_json(cfg.out / "batch_report.json", report);

  Json timing;
  timing["filters"] = timing_json;
  if (timing_json.contains("cone") && timing_json.contains("distance_baseline")) {
    const double cone = timing_json["cone"]["step_time"]["median"].get<double>();
    const double base = timing_json["distance_baseline"]["step_time"]["median"].get<double>();
    timing["median_step_time_ratio_baseline_over_cone"] =
        cone > 0.0 ? Json(base / cone) : Json(nullptr);
  }
  write_json(cfg.out / "batch_timing.json", timing);
  write_file_atomic(cfg.out / "batch_boxes.svg", batch_box_svg(named));
  log << "wrote " << (cfg.out / "batch_report.json").string() << '\n';
  return kExitOk;
}

int run_command(const std::function<int()>& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitIo;
  } catch (const IoError& e) {
    err << "output error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "file system error: " << e.what() << '\n';
    return kExitIo;
  } catch (const SolverError& e) {
    err << "solver failure: " << e.what() << '\n';
    return kExitSolver;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitSolver;
  }
}

}  // namespace splatcone
