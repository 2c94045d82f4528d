#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "splatcone/cli.hpp"

namespace {

using splatcone::RunConfig;

struct OverrideFlags {
  std::string config;
  std::optional<std::string> scene, filter, out, projection;
  std::optional<double> pk, rho, dt;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n;
  std::optional<std::string> filters;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, OverrideFlags& f) {
  cmd->add_option("--config", f.config, "INI config file");
  cmd->add_option("--scene", f.scene, "PLY, scene dump or synthetic:<pattern>[:<count>[:<seed>]]");
  cmd->add_option("--pk", f.pk, "class-K gain p_k");
  cmd->add_option("--rho", f.rho, "robot radius");
  cmd->add_option("--dt", f.dt, "control period [s]");
  cmd->add_option("--seed", f.seed, "endpoint seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--projection", f.projection, "plot plane: xy, xz or yz");
  cmd->add_option("--set", f.sets, "override section.key=value (repeatable)");
}

RunConfig resolve(const OverrideFlags& f) {
  RunConfig cfg;
  if (!f.config.empty()) splatcone::apply_config_file(f.config, cfg);
  const auto num = [](double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  };
  if (f.scene) cfg.scene = *f.scene;
  if (f.filter) splatcone::apply_option(cfg, "filter.kind", *f.filter);
  if (f.pk) splatcone::apply_option(cfg, "filter.p_k", num(*f.pk));
  if (f.rho) splatcone::apply_option(cfg, "filter.rho", num(*f.rho));
  if (f.dt) splatcone::apply_option(cfg, "filter.dt", num(*f.dt));
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.out = *f.out;
  if (f.projection) cfg.projection = *f.projection;
  if (f.n) cfg.n = *f.n;
  if (f.filters) splatcone::apply_option(cfg, "batch.filters", *f.filters);
  for (const std::string& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw splatcone::ConfigError("--set expects section.key=value, got '" + s + "'");
    }
    splatcone::apply_option(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safety-filtered navigation among Gaussian splats"};
  app.require_subcommand(1);

  splatcone::ConvertOptions convert;
  std::vector<double> scale_clamp;
  auto* convert_cmd = app.add_subcommand("convert", "Preprocess a 3DGS PLY into a scene file");
  convert_cmd->add_option("--in", convert.input, "input PLY")->required();
  convert_cmd->add_option("--out", convert.output, "output (.ply or scene dump)")->required();
  convert_cmd->add_option("--opacity-min", convert.preprocess.opacity_min, "opacity threshold");
  convert_cmd->add_option("--scale-clamp", scale_clamp, "scale clamp bounds MIN MAX")
      ->expected(2);
  convert_cmd->add_option("--anisotropy-cap", convert.preprocess.anisotropy_cap,
                          "largest allowed scale ratio");
  convert_cmd->add_option("--confidence", convert.preprocess.confidence,
                          "confidence c^2 (default chi2(3, 0.99))");

  std::string gen_source, gen_out;
  auto* gen_cmd = app.add_subcommand("generate", "Write a synthetic scene");
  gen_cmd->add_option("--scene", gen_source, "synthetic:<pattern>[:<count>[:<seed>]]")->required();
  gen_cmd->add_option("--out", gen_out, "output (.ply or scene dump)")->required();

  OverrideFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "Simulate one trajectory");
  add_common(run_cmd, run_flags);
  run_cmd->add_option("--filter", run_flags.filter, "cone, distance_baseline or off");

  OverrideFlags batch_flags;
  auto* batch_cmd = app.add_subcommand("batch", "Simulate a batch per filter");
  add_common(batch_cmd, batch_flags);
  batch_cmd->add_option("--n", batch_flags.n, "trajectories per filter");
  batch_cmd->add_option("--filters", batch_flags.filters, "comma separated filter kinds");

  CLI11_PARSE(app, argc, argv);

  return splatcone::run_command(
      [&]() -> int {
        if (convert_cmd->parsed()) {
          if (!scale_clamp.empty()) {
            if (!(scale_clamp[0] > 0.0) || !(scale_clamp[0] <= scale_clamp[1])) {
              throw splatcone::ConfigError("--scale-clamp needs 0 < MIN <= MAX");
            }
            convert.preprocess.scale_min = scale_clamp[0];
            convert.preprocess.scale_max = scale_clamp[1];
          }
          return splatcone::cmd_convert(convert, std::cout);
        }
        if (gen_cmd->parsed()) return splatcone::cmd_generate(gen_source, gen_out, std::cout);
        if (run_cmd->parsed()) return splatcone::cmd_run(resolve(run_flags), std::cout);
        return splatcone::cmd_batch(resolve(batch_flags), std::cout);
      },
      std::cerr);
}
