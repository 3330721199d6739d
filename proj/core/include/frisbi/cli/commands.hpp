#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "frisbi/cli/config.hpp"
#include "frisbi/error.hpp"

namespace frisbi::cli {

struct RunOptions {
  std::vector<std::string> stages;              // subset of npe/transfer/amortize/evaluate; empty = all
  std::string sweep;                            // "", "calib", "noise"
  std::vector<std::string> baselines_override;  // names; empty = config list
  bool export_plans = false;
};

/// Generates all dataset splits under <out>/datasets and records the manifest.
/// Idempotent per (config, seed).
void simulate_to(const ExperimentConfig& cfg, const std::filesystem::path& out);

/// Executes the requested stages for every fold; writes checkpoints, alpha
/// tables, per-baseline EvalReports and summary.csv. Sweep mode loops the
/// protocol over calibration sizes {10, 50, 200, 1000} or noise rates
/// {0, 0.01, 0.10}, generating datasets per sweep point.
void run_to(const ExperimentConfig& cfg, const std::filesystem::path& out,
            const RunOptions& opt);

/// Aggregates results_*.json under a directory into report.csv / report.md
/// (mean +- std across folds).
void report_to(const std::filesystem::path& results_dir, const std::filesystem::path& out);

void cmd_simulate(const std::filesystem::path& config_path, const std::filesystem::path& out);
void cmd_run(const std::filesystem::path& config_path, const std::filesystem::path& out,
             const RunOptions& opt);

/// 2 config, 3 missing dependency/stage, 4 diverged, 1 anything else.
int exit_code_for(const Error& e);

}  // namespace frisbi::cli
