#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "frisbi/numeric/matrix.hpp"
#include "frisbi/numeric/rng.hpp"
#include "frisbi/simulate/pendulum.hpp"

namespace frisbi::sim {

inline constexpr double kFrictionLo = 0.1;
inline constexpr double kFrictionHi = 0.5;

struct BundleSizes {
  std::size_t n_sbi = 1000;
  std::size_t n_u = 1000;
  std::size_t n_ot = 1000;
  std::size_t n_calib_pool = 1000;
  std::size_t n_test = 1000;
};

/// All pendulum splits. Observations live in row matrices (one observation per
/// row), theta in n x 2 matrices. The u/test theta columns exist for records
/// and evaluation only; training never reads u_theta.
struct DatasetBundle {
  numeric::Matrix sbi_theta, sbi_x;                    // ideal simulator pairs
  numeric::Matrix u_theta, u_x;                        // unpaired damped reals
  std::vector<double> u_friction;
  numeric::Matrix ot_theta, ot_x;                      // fresh ideal sims for OT
  numeric::Matrix calib_theta, calib_xr, calib_xs;     // paired pool
  std::vector<double> calib_friction;
  numeric::Matrix test_theta, test_x;
  std::vector<double> test_friction;
};

/// Draws every split from per-sample forked streams: d_sbi/d_ot ideal
/// (friction 0), reals damped with friction ~ U[0.1, 0.5] per draw,
/// calib triples share one theta with x_s = S(theta).
DatasetBundle make_bundle(const BundleSizes& sizes, double sigma_obs, std::uint64_t seed);

/// Calibration label noise: theta' = clip(theta + eps), eps_d ~ N(0, (rate*range_d)^2),
/// x_s regenerated as S(theta'). rate outside {0, 0.01, 0.10} warns.
void corrupt_labels(numeric::Matrix& calib_theta, numeric::Matrix& calib_xs, double rate,
                    double sigma_obs, numeric::RngStream& rng);

// --- CSV persistence -------------------------------------------------------
// One file per split, schema: theta_omega0, theta_phi0, x_0..x_99, split, friction.
// d_calib.csv interleaves calib_real / calib_sim rows (one triple = two rows).

void write_bundle_csv(const DatasetBundle& bundle, const std::filesystem::path& dir);

struct SplitData {
  numeric::Matrix theta, x;
  std::vector<double> friction;
};

SplitData read_split_csv(const std::filesystem::path& file, const std::string& expected_split);

struct CalibData {
  numeric::Matrix theta, xr, xs;
  std::vector<double> friction;
};

CalibData read_calib_csv(const std::filesystem::path& file);

/// Loads every split (all files must exist).
DatasetBundle read_bundle_csv(const std::filesystem::path& dir);

}  // namespace frisbi::sim
