#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "frisbi/cli/commands.hpp"

namespace {

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FRISBI: inductive amortized simulation-based inference under misspecification"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", stages_csv, sweep, baselines_csv, results_dir;
  bool export_plans = false;

  CLI::App* sim = app.add_subcommand("simulate", "generate the pendulum dataset splits");
  sim->add_option("--config", config_path, "experiment config (JSON)")->required();
  sim->add_option("--out", out_dir, "output directory");

  CLI::App* run = app.add_subcommand("run", "execute training stages and evaluation");
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--stages", stages_csv, "comma list from {npe,transfer,amortize,evaluate}");
  run->add_option("--sweep", sweep, "sweep protocol: calib or noise");
  run->add_option("--baselines", baselines_csv, "comma list of baseline names");
  run->add_flag("--export-plans", export_plans, "write transport plans as CSV");

  CLI::App* report = app.add_subcommand("report", "aggregate results into tables");
  report->add_option("--results", results_dir, "directory holding results_*.json")->required();
  report->add_option("--out", out_dir, "output directory for report.csv/report.md");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      frisbi::cli::cmd_simulate(config_path, out_dir);
    } else if (run->parsed()) {
      frisbi::cli::RunOptions opt;
      opt.stages = split_list(stages_csv);
      opt.sweep = sweep;
      opt.baselines_override = split_list(baselines_csv);
      opt.export_plans = export_plans;
      frisbi::cli::cmd_run(config_path, out_dir, opt);
    } else if (report->parsed()) {
      frisbi::cli::report_to(results_dir, out_dir);
    }
  } catch (const frisbi::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return frisbi::cli::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
