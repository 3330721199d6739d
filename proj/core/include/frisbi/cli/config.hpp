#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "frisbi/baselines/baselines.hpp"
#include "frisbi/ot/ot.hpp"
#include "frisbi/pipeline/pipeline.hpp"
#include "frisbi/simulate/datasets.hpp"

namespace frisbi::cli {

/// Full experiment configuration. JSON files may set any subset of keys;
/// unknown keys are errors (Error code "config:<path>").
struct ExperimentConfig {
  std::uint64_t seed = 7;
  sim::BundleSizes sizes;          // n_sbi, n_u, n_ot, n_calib_pool, n_test
  std::size_t n_calib = 200;       // per-fold calibration subset size
  ot::OtParams ot;                 // gamma = 0.5, rho = 0 (joint loss uses the closed form)
  pipeline::NpeConfig npe;
  pipeline::JointLossConfig joint;
  pipeline::AmortizeConfig amortize;
  double noise_rate = 0.0;         // calibration label noise, fraction of range
  std::size_t folds = 5;
  std::vector<baselines::BaselineKind> baseline_kinds = baselines::all_baselines();
  std::size_t samples_per_point = 1024;
  double sigma_obs = 0.01;
  bool rope_unbalanced = false;    // unbalanced-OT RoPE variant (off for the pendulum)
  double rope_rho = 1.0;
};

ExperimentConfig parse_config_file(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& text);

/// Defaults echoed, keys sorted; the hashing and manifest source of truth.
std::string canonical_config_json(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

std::uint64_t fold_seed(const ExperimentConfig& cfg, std::size_t fold);

}  // namespace frisbi::cli
