#include "frisbi/simulate/datasets.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "frisbi/error.hpp"

namespace frisbi::sim {

namespace {

void fill_row(numeric::Matrix& x, std::size_t row, const Observation& obs) {
  for (std::size_t k = 0; k < kObsDim; ++k) x(row, k) = obs[k];
}

struct SplitDraw {
  numeric::Matrix theta;
  numeric::Matrix x;
  std::vector<double> friction;
};

// One fork per sample index keeps the split reproducible under any
// generation order.
SplitDraw draw_split(std::size_t n, bool damped, double sigma_obs,
                     const numeric::RngStream& base) {
  SplitDraw out{numeric::Matrix(n, kThetaDim), numeric::Matrix(n, kObsDim),
                std::vector<double>(n, 0.0)};
  const BoxDomain box = pendulum_prior_box();
  for (std::size_t i = 0; i < n; ++i) {
    numeric::RngStream rng = base.fork(i);
    ParameterVector theta{rng.uniform(box.lo[0], box.hi[0]), rng.uniform(box.lo[1], box.hi[1])};
    const double friction = damped ? rng.uniform(kFrictionLo, kFrictionHi) : 0.0;
    const Observation obs = simulate_pendulum(theta, friction, rng, sigma_obs);
    out.theta(i, 0) = theta.omega0;
    out.theta(i, 1) = theta.phi0;
    out.friction[i] = friction;
    fill_row(out.x, i, obs);
  }
  return out;
}

const char* kHeaderPrefix = "theta_omega0,theta_phi0";

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_header(std::ofstream& os) {
  os << kHeaderPrefix;
  for (std::size_t k = 0; k < kObsDim; ++k) os << ",x_" << k;
  os << ",split,friction\n";
}

void write_row(std::ofstream& os, std::span<const double> theta, std::span<const double> x,
               const std::string& split, double friction) {
  os << format_double(theta[0]) << ',' << format_double(theta[1]);
  for (double v : x) os << ',' << format_double(v);
  os << ',' << split << ',' << format_double(friction) << '\n';
}

void write_split_file(const std::filesystem::path& file, const numeric::Matrix& theta,
                      const numeric::Matrix& x, const std::vector<double>& friction,
                      const std::string& split) {
  std::ofstream os(file);
  if (!os) throw Error("io", "cannot open " + file.string() + " for writing");
  write_header(os);
  for (std::size_t i = 0; i < x.rows(); ++i)
    write_row(os, theta.row(i), x.row(i), split, friction.empty() ? 0.0 : friction[i]);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

struct RawRow {
  double theta[2];
  std::vector<double> x;
  std::string split;
  double friction;
};

std::vector<RawRow> read_rows(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw Error("io", "cannot open " + file.string());
  std::string line;
  if (!std::getline(is, line)) throw Error("io", "empty csv " + file.string());
  if (line.rfind(kHeaderPrefix, 0) != 0)
    throw Error("io", "unexpected csv header in " + file.string());
  std::vector<RawRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 2 + kObsDim + 2)
      throw Error("io", "bad field count in " + file.string());
    RawRow r;
    r.theta[0] = std::strtod(fields[0].c_str(), nullptr);
    r.theta[1] = std::strtod(fields[1].c_str(), nullptr);
    r.x.resize(kObsDim);
    for (std::size_t k = 0; k < kObsDim; ++k)
      r.x[k] = std::strtod(fields[2 + k].c_str(), nullptr);
    r.split = fields[2 + kObsDim];
    r.friction = std::strtod(fields[3 + kObsDim].c_str(), nullptr);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace

DatasetBundle make_bundle(const BundleSizes& sizes, double sigma_obs, std::uint64_t seed) {
  if (sizes.n_sbi == 0 || sizes.n_u == 0 || sizes.n_ot == 0 || sizes.n_calib_pool == 0 ||
      sizes.n_test == 0)
    throw Error("empty-request", "all bundle sizes must be >= 1");

  DatasetBundle b;
  {
    auto s = draw_split(sizes.n_sbi, false, sigma_obs, numeric::RngStream(seed, numeric::StreamId::kSimSbi));
    b.sbi_theta = std::move(s.theta);
    b.sbi_x = std::move(s.x);
  }
  {
    auto s = draw_split(sizes.n_u, true, sigma_obs, numeric::RngStream(seed, numeric::StreamId::kSimUnpaired));
    b.u_theta = std::move(s.theta);
    b.u_x = std::move(s.x);
    b.u_friction = std::move(s.friction);
  }
  {
    auto s = draw_split(sizes.n_ot, false, sigma_obs, numeric::RngStream(seed, numeric::StreamId::kSimOt));
    b.ot_theta = std::move(s.theta);
    b.ot_x = std::move(s.x);
  }
  {
    // Calibration triples: the damped draw provides (theta, x_r); the paired
    // ideal observation x_s = S(theta) comes from a sub-fork.
    const std::size_t n = sizes.n_calib_pool;
    numeric::RngStream base(seed, numeric::StreamId::kSimCalib);
    b.calib_theta = numeric::Matrix(n, kThetaDim);
    b.calib_xr = numeric::Matrix(n, kObsDim);
    b.calib_xs = numeric::Matrix(n, kObsDim);
    b.calib_friction.assign(n, 0.0);
    const BoxDomain box = pendulum_prior_box();
    for (std::size_t i = 0; i < n; ++i) {
      numeric::RngStream rng = base.fork(i);
      ParameterVector theta{rng.uniform(box.lo[0], box.hi[0]), rng.uniform(box.lo[1], box.hi[1])};
      const double friction = rng.uniform(kFrictionLo, kFrictionHi);
      const Observation xr = simulate_pendulum(theta, friction, rng, sigma_obs);
      numeric::RngStream sim_rng = rng.fork(1);
      const Observation xs = simulate_pendulum(theta, 0.0, sim_rng, sigma_obs);
      b.calib_theta(i, 0) = theta.omega0;
      b.calib_theta(i, 1) = theta.phi0;
      b.calib_friction[i] = friction;
      fill_row(b.calib_xr, i, xr);
      fill_row(b.calib_xs, i, xs);
    }
  }
  {
    auto s = draw_split(sizes.n_test, true, sigma_obs, numeric::RngStream(seed, numeric::StreamId::kSimTest));
    b.test_theta = std::move(s.theta);
    b.test_x = std::move(s.x);
    b.test_friction = std::move(s.friction);
  }
  return b;
}

void corrupt_labels(numeric::Matrix& calib_theta, numeric::Matrix& calib_xs, double rate,
                    double sigma_obs, numeric::RngStream& rng) {
  if (rate < 0.0) throw Error("negative-noise", "label noise rate must be >= 0");
  if (rate == 0.0) return;
  if (rate != 0.01 && rate != 0.10)
    std::cerr << "[frisbi] warning: label noise rate " << rate
              << " outside the studied set {0, 0.01, 0.10}\n";
  const BoxDomain box = pendulum_prior_box();
  for (std::size_t i = 0; i < calib_theta.rows(); ++i) {
    numeric::RngStream r = rng.fork(i);
    ParameterVector noisy;
    noisy.omega0 = box.clip(calib_theta(i, 0) + rate * box.range(0) * r.normal(), 0);
    noisy.phi0 = box.clip(calib_theta(i, 1) + rate * box.range(1) * r.normal(), 1);
    calib_theta(i, 0) = noisy.omega0;
    calib_theta(i, 1) = noisy.phi0;
    const Observation xs = simulate_pendulum(noisy, 0.0, r, sigma_obs);
    for (std::size_t k = 0; k < kObsDim; ++k) calib_xs(i, k) = xs[k];
  }
}

void write_bundle_csv(const DatasetBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_split_file(dir / "d_sbi.csv", bundle.sbi_theta, bundle.sbi_x, {}, "sbi");
  write_split_file(dir / "d_u.csv", bundle.u_theta, bundle.u_x, bundle.u_friction, "u");
  write_split_file(dir / "d_ot.csv", bundle.ot_theta, bundle.ot_x, {}, "ot");
  write_split_file(dir / "d_test.csv", bundle.test_theta, bundle.test_x, bundle.test_friction,
                   "test");
  std::ofstream os(dir / "d_calib.csv");
  if (!os) throw Error("io", "cannot open d_calib.csv for writing");
  write_header(os);
  for (std::size_t i = 0; i < bundle.calib_xr.rows(); ++i) {
    write_row(os, bundle.calib_theta.row(i), bundle.calib_xr.row(i), "calib_real",
              bundle.calib_friction[i]);
    write_row(os, bundle.calib_theta.row(i), bundle.calib_xs.row(i), "calib_sim", 0.0);
  }
}

SplitData read_split_csv(const std::filesystem::path& file, const std::string& expected_split) {
  auto rows = read_rows(file);
  SplitData out;
  out.theta = numeric::Matrix(rows.size(), kThetaDim);
  out.x = numeric::Matrix(rows.size(), kObsDim);
  out.friction.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].split != expected_split)
      throw Error("io", "unexpected split tag '" + rows[i].split + "' in " + file.string());
    out.theta(i, 0) = rows[i].theta[0];
    out.theta(i, 1) = rows[i].theta[1];
    for (std::size_t k = 0; k < kObsDim; ++k) out.x(i, k) = rows[i].x[k];
    out.friction[i] = rows[i].friction;
  }
  return out;
}

CalibData read_calib_csv(const std::filesystem::path& file) {
  auto rows = read_rows(file);
  if (rows.size() % 2 != 0) throw Error("io", "d_calib.csv must pair real/sim rows");
  const std::size_t n = rows.size() / 2;
  CalibData out;
  out.theta = numeric::Matrix(n, kThetaDim);
  out.xr = numeric::Matrix(n, kObsDim);
  out.xs = numeric::Matrix(n, kObsDim);
  out.friction.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const RawRow& real = rows[2 * i];
    const RawRow& simr = rows[2 * i + 1];
    if (real.split != "calib_real" || simr.split != "calib_sim")
      throw Error("io", "d_calib.csv rows out of order");
    out.theta(i, 0) = real.theta[0];
    out.theta(i, 1) = real.theta[1];
    out.friction[i] = real.friction;
    for (std::size_t k = 0; k < kObsDim; ++k) {
      out.xr(i, k) = real.x[k];
      out.xs(i, k) = simr.x[k];
    }
  }
  return out;
}

DatasetBundle read_bundle_csv(const std::filesystem::path& dir) {
  DatasetBundle b;
  auto sbi = read_split_csv(dir / "d_sbi.csv", "sbi");
  b.sbi_theta = std::move(sbi.theta);
  b.sbi_x = std::move(sbi.x);
  auto u = read_split_csv(dir / "d_u.csv", "u");
  b.u_theta = std::move(u.theta);
  b.u_x = std::move(u.x);
  b.u_friction = std::move(u.friction);
  auto ot = read_split_csv(dir / "d_ot.csv", "ot");
  b.ot_theta = std::move(ot.theta);
  b.ot_x = std::move(ot.x);
  auto calib = read_calib_csv(dir / "d_calib.csv");
  b.calib_theta = std::move(calib.theta);
  b.calib_xr = std::move(calib.xr);
  b.calib_xs = std::move(calib.xs);
  b.calib_friction = std::move(calib.friction);
  auto test = read_split_csv(dir / "d_test.csv", "test");
  b.test_theta = std::move(test.theta);
  b.test_x = std::move(test.x);
  b.test_friction = std::move(test.friction);
  return b;
}

}  // namespace frisbi::sim
