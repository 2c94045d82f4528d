#include <filesystem>
#include <fstream>
#include <sstream>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "splatcone/cli.hpp"

using namespace splatcone;
using ::testing::HasSubstr;

namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = SPLATCONE_FIXTURES;

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "splatcone_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Json read_json(const fs::path& path) { return Json::parse(slurp(path)); }

RunConfig blocking_config(FilterKind kind, const fs::path& out) {
  RunConfig cfg;
  cfg.scene = "synthetic:single";
  cfg.sim.filter = kind;
  cfg.start = Vec3(-6, 1e-3, 0);
  cfg.goal = Vec3(9, 0, 0);
  cfg.out = out;
  return cfg;
}

}  // namespace

TEST(ConfigFile, SectionsAndOverrides) {
  const fs::path dir = fresh_dir("config");
  {
    std::ofstream out(dir / "run.ini");
    out << "[scene]\nsource = synthetic:clutter:300\nopacity_min = 0.2\n"
           "[filter]\nkind = distance_baseline\np_k = 2.5\nv_max = none\n"
           "[sim]\ntimeout = 30\n[run]\nstart = 1 2 3\nseed = 11\n"
           "[batch]\nn = 7\nfilters = cone, off\n";
  }
  RunConfig cfg;
  apply_config_file(dir / "run.ini", cfg);
  EXPECT_EQ(cfg.scene, "synthetic:clutter:300");
  EXPECT_DOUBLE_EQ(cfg.preprocess.opacity_min, 0.2);
  EXPECT_EQ(cfg.sim.filter, FilterKind::distance_baseline);
  EXPECT_DOUBLE_EQ(cfg.sim.filter_cfg.p_k, 2.5);
  EXPECT_FALSE(cfg.sim.filter_cfg.v_max.has_value());
  EXPECT_DOUBLE_EQ(cfg.sim.timeout, 30.0);
  ASSERT_TRUE(cfg.start.has_value());
  EXPECT_EQ(*cfg.start, Vec3(1, 2, 3));
  EXPECT_EQ(cfg.seed, 11u);
  EXPECT_EQ(cfg.n, 7u);
  EXPECT_THAT(cfg.filters, ::testing::ElementsAre(FilterKind::cone, FilterKind::off));
  // Flags are applied after the file and win.
  apply_option(cfg, "filter.p_k", "0.5");
  EXPECT_DOUBLE_EQ(cfg.sim.filter_cfg.p_k, 0.5);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(ConfigFile, UnknownKeyIsConfigError) {
  const fs::path dir = fresh_dir("config_bad");
  {
    std::ofstream out(dir / "bad.ini");
    out << "[filter]\npk = 1\n";
  }
  RunConfig cfg;
  EXPECT_THROW(apply_config_file(dir / "bad.ini", cfg), ConfigError);
  EXPECT_THROW(apply_config_file(dir / "missing.ini", cfg), ConfigError);
  EXPECT_THROW(apply_option(cfg, "filter.p_k", "fast"), ConfigError);
  EXPECT_THROW(apply_option(cfg, "run.start", "1 2"), ConfigError);
}

TEST(ConfigValidation, RejectsOutOfRangeValues) {
  RunConfig cfg;
  cfg.sim.filter_cfg.dt = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = RunConfig{};
  cfg.scene = "/nonexistent/scene.ply";
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = RunConfig{};
  cfg.projection = "zz";
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_NO_THROW(RunConfig{}.validate());
}

TEST(ConfigEcho, ContainsResolvedDefaults) {
  const Json j = to_json(RunConfig{});
  EXPECT_EQ(j["scene"], "synthetic:ring");
  EXPECT_EQ(j["sim"]["filter"], "cone");
  EXPECT_DOUBLE_EQ(j["sim"]["filter_config"]["p_k"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(j["sim"]["filter_config"]["dt"].get<double>(), 0.02);
  EXPECT_DOUBLE_EQ(j["sim"]["filter_config"]["a_max"].get<double>(), 5.0);
  EXPECT_EQ(j["sim"]["filter_config"]["slack"], "hard");
  EXPECT_EQ(j["batch"]["n"], 50);
}

TEST(MakeScene, SyntheticSources) {
  EXPECT_EQ(make_scene("synthetic:single", {}).size(), 1u);
  EXPECT_EQ(make_scene("synthetic:ring", {}).size(), 2000u);
  EXPECT_EQ(make_scene("synthetic:clutter:123:5", {}).size(), 123u);
  EXPECT_TRUE(make_scene("synthetic:empty", {}).empty());
  EXPECT_THROW(make_scene("synthetic:spiral", {}), ConfigError);
  EXPECT_THROW(make_scene("synthetic:ring:many", {}), ConfigError);
  EXPECT_THROW(make_scene("missing.ply", {}), ParseError);
}

TEST(CmdConvert, ThreeSplatFixture) {
  const fs::path dir = fresh_dir("convert");
  ConvertOptions opts{kFixtures / "three_splats.ply", dir / "three.scene", {}};
  std::ostringstream log;
  EXPECT_EQ(cmd_convert(opts, log), kExitOk);
  EXPECT_THAT(log.str(), HasSubstr("splats: 3"));
  EXPECT_THAT(log.str(), HasSubstr("max eigenvalue"));
  EXPECT_EQ(read_scene_dump(dir / "three.scene").size(), 3u);
}

TEST(CmdConvert, LogsFilteredSplat) {
  const fs::path dir = fresh_dir("convert_filtered");
  ConvertOptions opts{kFixtures / "one_transparent.ply", dir / "two.scene", {}};
  std::ostringstream log;
  EXPECT_EQ(cmd_convert(opts, log), kExitOk);
  EXPECT_THAT(log.str(), HasSubstr("splats: 2"));
  EXPECT_THAT(log.str(), HasSubstr("filtered by opacity 1"));
}

TEST(CmdConvert, LoaderErrorsMapToExitTwo) {
  const fs::path dir = fresh_dir("convert_missing");
  ConvertOptions opts{dir / "nope.ply", dir / "out.scene", {}};
  std::ostringstream log, err;
  EXPECT_EQ(run_command([&] { return cmd_convert(opts, log); }, err), kExitIo);
  EXPECT_THAT(err.str(), HasSubstr("nope.ply"));
}

TEST(CmdConvert, LargeSyntheticSceneRoundTrips) {
  const fs::path dir = fresh_dir("convert_large");
  std::ostringstream log;
  ASSERT_EQ(cmd_generate("synthetic:clutter:170000:3", dir / "big.ply", log), kExitOk);
  ConvertOptions opts;
  opts.input = dir / "big.ply";
  opts.output = dir / "big.scene";
  opts.preprocess.opacity_min = 0.0;
  opts.preprocess.scale_min = 1e-9;
  opts.preprocess.scale_max = 1e9;
  opts.preprocess.anisotropy_cap = 1e9;
  ASSERT_EQ(cmd_convert(opts, log), kExitOk);
  const Scene original = make_scene("synthetic:clutter:170000:3", {});
  const Scene loaded = read_scene_dump(dir / "big.scene");
  ASSERT_EQ(loaded.size(), 170000u);
  double worst = 0.0;
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    worst = std::max(worst, (loaded[i].mean - original[i].mean).norm() /
                                std::max(1.0, original[i].mean.norm()));
    worst = std::max(worst, (loaded[i].scales - original[i].scales).norm() /
                                original[i].scales.norm());
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(CmdRun, EmptySceneReachesGoal) {
  const fs::path dir = fresh_dir("run_empty");
  RunConfig cfg;
  cfg.scene = "synthetic:empty";
  cfg.start = Vec3(0, 0, 0);
  cfg.goal = Vec3(3, 1, 0);
  cfg.out = dir;
  std::ostringstream log;
  ASSERT_EQ(cmd_run(cfg, log), kExitOk);
  const Json summary = read_json(dir / "summary.json");
  EXPECT_EQ(summary["result"]["outcome"], "reached_goal");
  EXPECT_EQ(summary["result"]["interventions"], 0);
  EXPECT_TRUE(summary["result"]["min_h"].is_null());
  EXPECT_EQ(summary["config"], to_json(cfg));
  const std::string csv = slurp(dir / "trajectory.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "t,px,py,pz,vx,vy,vz,ux,uy,uz,min_h,solve_time,build_time,qp_time");
  const std::string svg = slurp(dir / "trajectory.svg");
  EXPECT_THAT(svg, HasSubstr("<svg"));
  EXPECT_THAT(svg, HasSubstr("<polyline"));
}

TEST(CmdRun, BlockingSplatFilterOffCollidesWithExitZero) {
  const fs::path dir = fresh_dir("run_off");
  std::ostringstream log, err;
  const RunConfig cfg = blocking_config(FilterKind::off, dir);
  EXPECT_EQ(run_command([&] { return cmd_run(cfg, log); }, err), kExitOk);
  EXPECT_EQ(read_json(dir / "summary.json")["result"]["outcome"], "collided");
}

TEST(CmdRun, BlockingSplatConeFilterReachesGoal) {
  const fs::path dir = fresh_dir("run_cone");
  std::ostringstream log;
  ASSERT_EQ(cmd_run(blocking_config(FilterKind::cone, dir), log), kExitOk);
  const Json result = read_json(dir / "summary.json")["result"];
  EXPECT_EQ(result["outcome"], "reached_goal");
  EXPECT_GE(result["min_h"].get<double>(), -1e-6);
  EXPECT_GE(result["audit"]["min_clearance"].get<double>(), -1e-6);
}

TEST(CmdRun, InvalidConfigMapsToExitOne) {
  RunConfig cfg;
  cfg.sim.filter_cfg.p_k = 0.0;
  std::ostringstream log, err;
  EXPECT_EQ(run_command([&] { return cmd_run(cfg, log); }, err), kExitConfig);
}

TEST(CmdBatch, EmptySceneBothFiltersSucceedAndRerunIsIdentical) {
  const fs::path a = fresh_dir("batch_a"), b = fresh_dir("batch_b");
  RunConfig cfg;
  cfg.scene = "synthetic:empty";
  cfg.n = 2;
  cfg.out = a;
  std::ostringstream log;
  ASSERT_EQ(cmd_batch(cfg, log), kExitOk);
  cfg.out = b;
  ASSERT_EQ(cmd_batch(cfg, log), kExitOk);

  const Json report = read_json(a / "batch_report.json");
  for (const char* name : {"cone", "distance_baseline"}) {
    EXPECT_DOUBLE_EQ(report["filters"][name]["success_rate"].get<double>(), 1.0) << name;
    EXPECT_TRUE(fs::exists(a / (std::string(name) + "_metrics.csv")));
  }
  EXPECT_EQ(report["nJ_definition"], kNjDefinition);
  // Wall-clock fields live only in batch_timing.json.
  EXPECT_EQ(slurp(a / "batch_report.json"), slurp(b / "batch_report.json"));
  EXPECT_EQ(slurp(a / "cone_metrics.csv"), slurp(b / "cone_metrics.csv"));
  EXPECT_EQ(slurp(a / "batch_boxes.svg").empty(), false);
  const Json timing = read_json(a / "batch_timing.json");
  EXPECT_TRUE(timing["filters"]["cone"].contains("step_time"));
}

TEST(CmdBatch, ReportCarriesDistributions) {
  const fs::path dir = fresh_dir("batch_ring");
  RunConfig cfg;
  cfg.scene = "synthetic:ring:600";
  cfg.n = 4;
  cfg.out = dir;
  std::ostringstream log;
  ASSERT_EQ(cmd_batch(cfg, log), kExitOk);
  const Json timing = read_json(dir / "batch_timing.json");
  EXPECT_TRUE(timing.contains("median_step_time_ratio_baseline_over_cone"));
  const Json report = read_json(dir / "batch_report.json");
  for (const char* name : {"cone", "distance_baseline"}) {
    const Json& m = report["filters"][name]["metrics"];
    for (const char* key : {"nJ", "rmsJ", "isj"}) {
      for (const char* stat : {"min", "median", "mean", "p90", "max"}) {
        EXPECT_TRUE(m[key].contains(stat)) << name << " " << key << " " << stat;
      }
    }
  }
}

TEST(RunCommand, MapsExceptionsToExitCodes) {
  std::ostringstream err;
  EXPECT_EQ(run_command([]() -> int { throw ConfigError("x"); }, err), kExitConfig);
  EXPECT_EQ(run_command([]() -> int { throw ParseError("x"); }, err), kExitIo);
  EXPECT_EQ(run_command([]() -> int { throw IoError("x"); }, err), kExitIo);
  EXPECT_EQ(run_command([]() -> int { throw SolverError("x"); }, err), kExitSolver);
  EXPECT_EQ(run_command([] { return 0; }, err), kExitOk);
}

TEST(Report, FormatDouble) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(INFINITY), "inf");
  EXPECT_EQ(format_double(-INFINITY), "-inf");
  EXPECT_EQ(format_double(NAN), "nan");
}

TEST(Report, SvgIsDeterministic) {
  const Scene scene = make_scene("synthetic:ring:300", {});
  SimConfig sim;
  sim.timeout = 20.0;
  const TrajectoryRecord rec = run_trajectory(scene, Vec3(-12, 0.1, 2), Vec3(12, 0, 2), sim);
  EXPECT_EQ(trajectory_svg(scene, {&rec}), trajectory_svg(scene, {&rec}));
  EXPECT_THROW(parse_projection("xx"), ConfigError);
  const PlotOptions xz = parse_projection("xz");
  EXPECT_EQ(xz.axis_x, 0);
  EXPECT_EQ(xz.axis_y, 2);
}
