// Command-line front end: simulate datasets, run training grids, and render
// result tables. See docs/formats.md for every file format involved.

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "realm/experiment.hpp"

namespace fs = std::filesystem;

namespace {

// --out wins; otherwise REALM_OUT_ROOT/<config stem>; otherwise out/<stem>.
fs::path resolve_out_dir(const std::string& out_flag,
                         const std::string& config_path) {
  if (!out_flag.empty()) return fs::path(out_flag);
  const char* root = std::getenv("REALM_OUT_ROOT");
  fs::path base = (root != nullptr && *root != '\0') ? fs::path(root)
                                                     : fs::path("out");
  if (config_path.empty()) return base;
  return base / fs::path(config_path).stem();
}

realm::ExperimentConfig load_config(const std::string& path, int seeds_override,
                                    bool freeze) {
  realm::ExperimentConfig cfg =
      realm::parse_experiment_config_string(realm::read_text_file(path));
  if (seeds_override > 0) cfg.seeds = seeds_override;
  if (freeze) cfg.freeze_expertise = true;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "realm: trains a restricted-softmax classifier jointly with "
      "per-annotator expertise from noisy multi-annotator labels"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_flag;
  int seeds_override = 0;
  int jobs = 1;
  bool freeze = false;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", config_path,
                                "experiment config file (INI format)");
    if (config_required) opt->required();
    sub->add_option("--out", out_flag,
                    "output directory (default: $REALM_OUT_ROOT/<config "
                    "stem>, else out/<config stem>)");
    sub->add_option("--seeds", seeds_override,
                    "override the number of seeds in the config")
        ->check(CLI::PositiveNumber);
  };

  CLI::App* sim = app.add_subcommand("simulate",
                                     "generate and write the grid's datasets");
  add_common(sim, true);

  CLI::App* train = app.add_subcommand(
      "train", "run the training grid and write raw results");
  add_common(train, true);
  train->add_option("--jobs", jobs, "number of parallel runs")
      ->check(CLI::PositiveNumber);
  train->add_flag("--debug-freeze-expertise", freeze,
                  "freeze expertise at +20 (mixture reduces to cross-entropy)");

  CLI::App* report = app.add_subcommand(
      "report", "aggregate raw results into tables and curves");
  add_common(report, false);

  CLI::App* run = app.add_subcommand(
      "run", "simulate, train from the written datasets, then report");
  add_common(run, true);
  run->add_option("--jobs", jobs, "number of parallel runs")
      ->check(CLI::PositiveNumber);
  run->add_flag("--debug-freeze-expertise", freeze,
                "freeze expertise at +20 (mixture reduces to cross-entropy)");

  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path out = resolve_out_dir(out_flag, config_path);
    if (sim->parsed()) {
      realm::cmd_simulate(load_config(config_path, seeds_override, freeze),
                          out);
    } else if (train->parsed()) {
      realm::cmd_train(load_config(config_path, seeds_override, freeze), out,
                       jobs);
    } else if (report->parsed()) {
      if (config_path.empty() && out_flag.empty())
        throw std::runtime_error("report needs --out or --config");
      realm::cmd_report(out);
    } else if (run->parsed()) {
      realm::cmd_run(load_config(config_path, seeds_override, freeze), out,
                     jobs);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
