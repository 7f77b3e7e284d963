// pvo: point + plane RGB-D odometry command line.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pvo/odometry.hpp"

namespace {

struct CommonOptions {
  std::string config_file;
  std::string mode;
  std::string weighting;
  std::optional<double> alpha;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> settings;
  std::string output_dir = "pvo_out";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_file, "key = value config file (see the key list below)");
  cmd->add_option("--mode", o.mode, "points_only | planes_only | points_and_planes (default points_and_planes)");
  cmd->add_option("--weighting", o.weighting, "probabilistic | deterministic (default probabilistic)");
  cmd->add_option("--alpha", o.alpha, "plane residual scale (default 10)");
  cmd->add_option("--seed", o.seed, "run seed (default 1)");
  cmd->add_option("--set", o.settings, "override a config key, e.g. --set solver.max_iterations=20");
  cmd->add_option("--output-dir", o.output_dir, "directory for result files")->capture_default_str();
}

pvo::RunConfig build_config(const CommonOptions& o) {
  pvo::RunConfig config;
  if (!o.config_file.empty()) pvo::load_config(std::filesystem::path(o.config_file), config);
  if (!o.mode.empty()) config.mode = pvo::parse_mode(o.mode);
  if (!o.weighting.empty()) config.solver.weighting = pvo::parse_weighting(o.weighting);
  if (o.alpha) config.solver.alpha = *o.alpha;
  if (o.seed) config.seed = *o.seed;
  for (const auto& s : o.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got " + s);
    config.set(s.substr(0, eq), s.substr(eq + 1));
  }
  config.validate();
  return config;
}

void print_summary(const pvo::RunResult& result) {
  const auto errors = pvo::step_translation_errors(result);
  std::printf("frames            %zu\n", result.estimate.poses.size());
  std::printf("fallback fraction %.4f\n", pvo::fallback_fraction(result));
  if (result.rpe)
    std::printf("rpe translation   %.6f m\nrpe rotation      %.6f deg\n", result.rpe->translation_rmse_mm / 1000.0,
                result.rpe->rotation_rmse_deg);
  if (!errors.empty()) {
    auto sorted = errors;
    std::sort(sorted.begin(), sorted.end());
    std::printf("median step error %.6f mm\n", sorted[sorted.size() / 2]);
  }
}

std::vector<double> parse_alphas(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad alpha value: " + item);
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frame-to-frame RGB-D odometry from points and planes"};
  app.require_subcommand(1);
  app.footer("Config keys and defaults (for --config files and --set):\n" + pvo::RunConfig{}.dump() +
             "\nInputs: a fixture name (corner3, wall+points, notexture), a scene file, or a TUM sequence directory.");

  CommonOptions run_opts;
  std::string run_input;
  auto* run = app.add_subcommand("run", "run odometry and write trajectory, diagnostics and RPE");
  run->add_option("input", run_input, "fixture name, scene file or TUM directory")->required();
  add_common(run, run_opts);

  CommonOptions sweep_opts;
  std::string sweep_input;
  std::string alpha_list = "0.1,1,10,100";
  auto* sweep = app.add_subcommand("sweep-alpha", "RPE for a list of alpha values (CSV)");
  sweep->add_option("input", sweep_input, "fixture name, scene file or TUM directory")->required();
  sweep->add_option("--alphas", alpha_list, "comma-separated alpha values")->capture_default_str();
  add_common(sweep, sweep_opts);

  std::string eval_estimate, eval_truth;
  double eval_interval = 1.0;
  auto* eval = app.add_subcommand("eval", "relative pose error of a trajectory against ground truth");
  eval->add_option("estimate", eval_estimate, "TUM trajectory file")->required()->check(CLI::ExistingFile);
  eval->add_option("groundtruth", eval_truth, "TUM ground-truth file")->required()->check(CLI::ExistingFile);
  eval->add_option("--interval", eval_interval, "RPE interval in seconds")->capture_default_str();

  CommonOptions render_opts;
  std::string render_name;
  bool render_sequence = false;
  auto* render = app.add_subcommand("render-fixture", "write a fixture as a scene file (and optionally a TUM sequence)");
  render->add_option("fixture", render_name, "corner3 | wall+points | notexture")->required();
  render->add_flag("--sequence", render_sequence, "also write depth/gray PNGs, rgb.txt, depth.txt, groundtruth.txt");
  add_common(render, render_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto config = build_config(run_opts);
      const auto result = pvo::run_odometry(pvo::RunSource::resolve(run_input, config), config);
      pvo::write_run_outputs(result, config, run_opts.output_dir);
      print_summary(result);
    } else if (*sweep) {
      const auto config = build_config(sweep_opts);
      const auto rows = pvo::sweep_alpha(pvo::RunSource::resolve(sweep_input, config), parse_alphas(alpha_list), config);
      std::filesystem::create_directories(sweep_opts.output_dir);
      std::ofstream csv(std::filesystem::path(sweep_opts.output_dir) / "alpha_sweep.csv");
      pvo::write_alpha_csv(rows, csv);
      pvo::write_alpha_csv(rows, std::cout);
    } else if (*eval) {
      const auto rpe =
          pvo::relative_pose_error(pvo::read_trajectory(std::filesystem::path(eval_estimate)),
                                   pvo::read_trajectory(std::filesystem::path(eval_truth)), eval_interval);
      pvo::write_rpe_report(rpe, std::cout);
    } else if (*render) {
      const auto config = build_config(render_opts);
      const auto source = pvo::RunSource::resolve(render_name, config);
      if (!source.scene) throw std::invalid_argument("not a fixture: " + render_name);
      const std::filesystem::path dir(render_opts.output_dir);
      std::filesystem::create_directories(dir);
      pvo::write_scene(*source.scene, dir / "scene.txt");
      if (render_sequence) pvo::write_tum_sequence(*source.scene, dir, config.seed);
      std::printf("wrote %s\n", (dir / "scene.txt").c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "pvo: %s\n", e.what());
    return 1;
  }
  return 0;
}
