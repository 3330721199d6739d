#include "frisbi/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "frisbi/metrics/metrics.hpp"
#include "frisbi/nets/checkpoint.hpp"
#include "frisbi/simulate/datasets.hpp"

namespace frisbi::cli {

namespace {

using nlohmann::json;
using numeric::Matrix;
using numeric::RngStream;

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::filesystem::path fold_dir(const std::filesystem::path& out, std::size_t fold) {
  return out / ("fold_" + std::to_string(fold));
}

std::filesystem::path ckpt_path(const std::filesystem::path& out, const std::string& role,
                                std::size_t fold) {
  return fold_dir(out, fold) / (role + "_" + std::to_string(fold) + ".ckpt.json");
}

nets::Checkpoint load_ckpt_for_stage(const std::filesystem::path& path, const std::string& stage,
                                     const std::string& expected_hash) {
  if (!std::filesystem::exists(path))
    throw Error("missing-stage:" + stage, "required checkpoint " + path.string() + " not found");
  nets::Checkpoint ckpt = nets::load_checkpoint(path);
  if (!expected_hash.empty() && ckpt.config_hash != expected_hash)
    throw Error("config:hash-mismatch",
                path.string() + " was produced under a different configuration");
  return ckpt;
}

nets::MlpEncoder encoder_from_ckpt(nets::Checkpoint&& ckpt) {
  nets::MlpEncoder enc;
  if (ckpt.params.size() % 2 != 0 || ckpt.params.empty())
    throw Error("io", "encoder checkpoint must hold (W, b) pairs");
  enc.widths.push_back(ckpt.params[0].rows());
  for (std::size_t l = 0; l < ckpt.params.size(); l += 2)
    enc.widths.push_back(ckpt.params[l].cols());
  enc.params = std::move(ckpt.params);
  return enc;
}

nets::FlowModel flow_from_ckpt(nets::Checkpoint&& ckpt, const BoxDomain& box) {
  nets::FlowModel flow;
  if (ckpt.params.size() != nets::FlowModel::kCouplings * 6)
    throw Error("io", "flow checkpoint must hold 6 tensors per coupling");
  flow.box = box;
  flow.ctx_dim = ckpt.params[0].rows() - 1;
  flow.params = std::move(ckpt.params);
  return flow;
}

std::vector<std::size_t> calib_subset(const ExperimentConfig& cfg, std::size_t fold,
                                      std::size_t pool_size) {
  RngStream rng(fold_seed(cfg, fold), numeric::StreamId::kFoldCalibSubset);
  std::vector<std::size_t> idx(pool_size);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = pool_size; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(idx[i - 1], idx[j]);
  }
  idx.resize(std::min<std::size_t>(cfg.n_calib, pool_size));
  std::sort(idx.begin(), idx.end());
  return idx;
}

bool stage_on(const RunOptions& opt, const std::string& name) {
  if (opt.stages.empty()) return true;
  return std::find(opt.stages.begin(), opt.stages.end(), name) != opt.stages.end();
}

std::vector<baselines::BaselineKind> requested_baselines(const ExperimentConfig& cfg,
                                                         const RunOptions& opt) {
  if (opt.baselines_override.empty()) return cfg.baseline_kinds;
  std::vector<baselines::BaselineKind> kinds;
  for (const auto& name : opt.baselines_override)
    kinds.push_back(baselines::baseline_from_string(name));
  return kinds;
}

bool contains(const std::vector<baselines::BaselineKind>& kinds, baselines::BaselineKind k) {
  return std::find(kinds.begin(), kinds.end(), k) != kinds.end();
}

void update_manifest(const std::filesystem::path& out, const ExperimentConfig& cfg,
                     const std::function<void(json&)>& mutate) {
  const std::filesystem::path path = out / "manifest.json";
  json m;
  if (std::filesystem::exists(path)) {
    std::ifstream is(path);
    try {
      is >> m;
    } catch (const json::exception&) {
      m = json::object();
    }
  }
  m["config"] = json::parse(canonical_config_json(cfg));
  m["config_hash"] = config_hash(cfg);
  json seeds = json::array();
  for (std::size_t k = 0; k < cfg.folds; ++k) seeds.push_back(fold_seed(cfg, k));
  m["fold_seeds"] = seeds;
  mutate(m);
  std::ofstream os(path);
  os << m.dump(2) << "\n";
}

void check_hash_against_manifest(const std::filesystem::path& out, const ExperimentConfig& cfg) {
  const std::filesystem::path path = out / "manifest.json";
  if (!std::filesystem::exists(path)) return;
  std::ifstream is(path);
  json m;
  try {
    is >> m;
  } catch (const json::exception&) {
    return;
  }
  if (m.contains("config_hash") && m["config_hash"].get<std::string>() != config_hash(cfg))
    throw Error("config:hash-mismatch",
                out.string() + " holds artifacts from a different configuration");
}

struct FoldData {
  sim::SplitData u, ot, test;
  sim::CalibData calib_pool;
  Matrix calib_xr, calib_xs, calib_theta;
  bool u_loaded = false, ot_loaded = false, test_loaded = false, calib_loaded = false;
};

class DataCache {
 public:
  DataCache(const std::filesystem::path& out, const ExperimentConfig& cfg, std::size_t fold)
      : dir_(out / "datasets"), cfg_(cfg), fold_(fold) {}

  const sim::SplitData& sbi() {
    if (!sbi_loaded_) {
      sbi_ = load("d_sbi.csv", "sbi");
      sbi_loaded_ = true;
    }
    return sbi_;
  }
  const sim::SplitData& u() {
    if (!d_.u_loaded) {
      d_.u = load("d_u.csv", "u");
      d_.u_loaded = true;
    }
    return d_.u;
  }
  const sim::SplitData& ot() {
    if (!d_.ot_loaded) {
      d_.ot = load("d_ot.csv", "ot");
      d_.ot_loaded = true;
    }
    return d_.ot;
  }
  const sim::SplitData& test() {
    if (!d_.test_loaded) {
      d_.test = load("d_test.csv", "test");
      d_.test_loaded = true;
    }
    return d_.test;
  }
  /// The fold's calibration subset (drawn from the pool by the fold seed).
  void ensure_calib() {
    if (d_.calib_loaded) return;
    const auto file = dir_ / "d_calib.csv";
    if (!std::filesystem::exists(file))
      throw Error("missing-stage:simulate", "dataset file " + file.string() + " not found");
    d_.calib_pool = sim::read_calib_csv(file);
    const auto idx = calib_subset(cfg_, fold_, d_.calib_pool.xr.rows());
    d_.calib_xr = numeric::take_rows(d_.calib_pool.xr, idx);
    d_.calib_xs = numeric::take_rows(d_.calib_pool.xs, idx);
    d_.calib_theta = numeric::take_rows(d_.calib_pool.theta, idx);
    d_.calib_loaded = true;
  }
  const Matrix& calib_xr() {
    ensure_calib();
    return d_.calib_xr;
  }
  const Matrix& calib_xs() {
    ensure_calib();
    return d_.calib_xs;
  }

 private:
  sim::SplitData load(const char* name, const char* split) {
    const auto file = dir_ / name;
    if (!std::filesystem::exists(file))
      throw Error("missing-stage:simulate", "dataset file " + file.string() + " not found");
    return sim::read_split_csv(file, split);
  }

  std::filesystem::path dir_;
  const ExperimentConfig& cfg_;
  std::size_t fold_;
  FoldData d_;
  sim::SplitData sbi_;
  bool sbi_loaded_ = false;
};

void write_alphas_csv(const std::filesystem::path& file, const pipeline::SparseWeights& alphas) {
  std::ofstream os(file);
  if (!os) throw Error("io", "cannot open " + file.string());
  os << "i,j,alpha\n";
  for (std::size_t i = 0; i < alphas.size(); ++i)
    for (const auto& [j, a] : alphas[i]) os << i << ',' << j << ',' << fmt17(a) << '\n';
}

void write_plan_csv(const std::filesystem::path& file, const Matrix& alpha) {
  std::ofstream os(file);
  if (!os) throw Error("io", "cannot open " + file.string());
  os << "i,j,alpha\n";
  for (std::size_t i = 0; i < alpha.rows(); ++i)
    for (std::size_t j = 0; j < alpha.cols(); ++j)
      if (alpha(i, j) > 0.0) os << i << ',' << j << ',' << fmt17(alpha(i, j)) << '\n';
}

struct FoldFlags {
  bool frisbi_not_learning = false;
  bool rope_not_learning = false;
};

void write_fold_flags(const std::filesystem::path& out, std::size_t fold, const FoldFlags& f) {
  json j{{"frisbi_amortizer_not_learning", f.frisbi_not_learning},
         {"rope_amortizer_not_learning", f.rope_not_learning}};
  std::ofstream os(fold_dir(out, fold) / "amortize_flags.json");
  os << j.dump(2) << "\n";
}

FoldFlags read_fold_flags(const std::filesystem::path& out, std::size_t fold) {
  FoldFlags f;
  const auto path = fold_dir(out, fold) / "amortize_flags.json";
  if (!std::filesystem::exists(path)) return f;
  std::ifstream is(path);
  json j;
  try {
    is >> j;
  } catch (const json::exception&) {
    return f;
  }
  f.frisbi_not_learning = j.value("frisbi_amortizer_not_learning", false);
  f.rope_not_learning = j.value("rope_amortizer_not_learning", false);
  return f;
}

void rebuild_summary_csv(const std::filesystem::path& out) {
  std::vector<std::string> rows;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(out)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("results_", 0) != 0 || entry.path().extension() != ".json") continue;
    std::ifstream is(entry.path());
    json j;
    try {
      is >> j;
    } catch (const json::exception&) {
      continue;
    }
    std::ostringstream row;
    row << j.value("baseline", "?") << ',' << j.value("fold", 0) << ','
        << j.value("calib_size", 0) << ',' << fmt17(j.value("noise_rate", 0.0)) << ','
        << fmt17(j.value("lpp", 0.0)) << ',' << fmt17(j.value("acauc", 0.0));
    rows.push_back(row.str());
  }
  if (rows.empty()) return;
  std::sort(rows.begin(), rows.end());
  std::ofstream os(out / "summary.csv");
  os << "baseline,fold,calib_size,noise_rate,lpp,acauc\n";
  for (const auto& r : rows) os << r << '\n';
}

void run_single(const ExperimentConfig& cfg, const std::filesystem::path& out,
                const RunOptions& opt);

}  // namespace

void simulate_to(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  check_hash_against_manifest(out, cfg);
  std::filesystem::create_directories(out);
  sim::DatasetBundle bundle = sim::make_bundle(cfg.sizes, cfg.sigma_obs, cfg.seed);
  if (cfg.noise_rate > 0.0) {
    RngStream rng(cfg.seed, numeric::StreamId::kCorruptLabels);
    sim::corrupt_labels(bundle.calib_theta, bundle.calib_xs, cfg.noise_rate, cfg.sigma_obs, rng);
  }
  sim::write_bundle_csv(bundle, out / "datasets");
  update_manifest(out, cfg, [&](json& m) {
    json files = json::array();
    for (const char* f : {"d_sbi.csv", "d_u.csv", "d_ot.csv", "d_calib.csv", "d_test.csv"})
      files.push_back((out / "datasets" / f).string());
    m["datasets"] = files;
  });
}

namespace {

void run_single(const ExperimentConfig& cfg, const std::filesystem::path& out,
                const RunOptions& opt) {
  check_hash_against_manifest(out, cfg);
  const std::string hash = config_hash(cfg);
  const BoxDomain box = sim::pendulum_prior_box();
  const auto kinds = requested_baselines(cfg, opt);
  json timings = json::object();

  for (std::size_t fold = 0; fold < cfg.folds; ++fold) {
    std::filesystem::create_directories(fold_dir(out, fold));
    DataCache data(out, cfg, fold);
    const std::uint64_t fseed = fold_seed(cfg, fold);
    json fold_timing = json::object();

    if (stage_on(opt, "npe")) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto& sbi = data.sbi();
      auto trained = pipeline::train_npe(sbi.theta, sbi.x, cfg.npe, box,
                                         RngStream(fseed, numeric::StreamId::kInitNse),
                                         RngStream(fseed, numeric::StreamId::kBatchNpe));
      nets::save_checkpoint(ckpt_path(out, "nse", fold), "nse", trained.nse.params, hash);
      nets::save_checkpoint(ckpt_path(out, "npe", fold), "npe", trained.npe.params, hash);
      fold_timing["npe"] = elapsed_s(t0);
      std::cout << "[fold " << fold << "] npe trained, final loss "
                << trained.epoch_loss.back() << "\n";
    }

    if (stage_on(opt, "transfer")) {
      const auto t0 = std::chrono::steady_clock::now();
      auto nse = encoder_from_ckpt(load_ckpt_for_stage(ckpt_path(out, "nse", fold), "npe", hash));
      pipeline::JointLossConfig joint_cfg = cfg.joint;
      joint_cfg.gamma = cfg.ot.gamma;
      auto frisbi = pipeline::train_transfer(
          data.u().x, data.calib_xr(), data.calib_xs(), nse, data.ot().x, joint_cfg,
          RngStream(fseed, numeric::StreamId::kBatchTransfer).fork(0));
      nets::save_checkpoint(ckpt_path(out, "real_encoder", fold), "real_encoder",
                            frisbi.encoder.params, hash);
      auto rope = baselines::rope_finetune(
          data.calib_xr(), data.calib_xs(), nse, joint_cfg,
          RngStream(fseed, numeric::StreamId::kBatchTransfer).fork(1));
      nets::save_checkpoint(ckpt_path(out, "rope_encoder", fold), "rope_encoder",
                            rope.encoder.params, hash);
      fold_timing["transfer"] = elapsed_s(t0);
      std::cout << "[fold " << fold << "] transfer done, joint loss "
                << frisbi.epoch_loss.back() << ", soft-min gap " << frisbi.max_soft_min_gap
                << "\n";
    }

    if (stage_on(opt, "amortize")) {
      const auto t0 = std::chrono::steady_clock::now();
      auto nse = encoder_from_ckpt(load_ckpt_for_stage(ckpt_path(out, "nse", fold), "npe", hash));
      auto npe =
          flow_from_ckpt(load_ckpt_for_stage(ckpt_path(out, "npe", fold), "npe", hash), box);
      auto g = encoder_from_ckpt(
          load_ckpt_for_stage(ckpt_path(out, "real_encoder", fold), "transfer", hash));
      FoldFlags flags;

      const Matrix z_u = g.forward(data.u().x);
      const Matrix atlas = nse.forward(numeric::stack_rows(data.ot().x, data.calib_xs()));
      auto am = pipeline::amortize(z_u, atlas, npe, cfg.amortize, cfg.ot.gamma, box,
                                   RngStream(fseed, numeric::StreamId::kInitAmortizer),
                                   RngStream(fseed, numeric::StreamId::kBatchAmortize),
                                   RngStream(fseed, numeric::StreamId::kFlowSampleAmortize));
      nets::save_checkpoint(ckpt_path(out, "amortizer", fold), "amortizer", am.amortizer.params,
                            hash);
      write_alphas_csv(fold_dir(out, fold) / ("alphas_" + std::to_string(fold) + ".csv"),
                       am.alphas);
      flags.frisbi_not_learning = am.not_learning;

      if (contains(kinds, baselines::BaselineKind::kFrisbiAmortizeOnly)) {
        auto g_rope = encoder_from_ckpt(
            load_ckpt_for_stage(ckpt_path(out, "rope_encoder", fold), "transfer", hash));
        const Matrix z_u_rope = g_rope.forward(data.u().x);
        const Matrix rope_atlas = nse.forward(data.ot().x);
        auto coupling = baselines::rope_coupling(z_u_rope, rope_atlas, cfg.ot,
                                                 cfg.rope_unbalanced, cfg.rope_rho);
        auto kept = pipeline::floor_and_renormalize(coupling.alpha, cfg.amortize.weight_floor);
        auto rope_am = pipeline::amortize_from_alphas(
            z_u_rope, kept, rope_atlas, npe, cfg.amortize, box,
            RngStream(fseed, numeric::StreamId::kInitRopeAmortizer),
            RngStream(fseed, numeric::StreamId::kBatchAmortize).fork(2),
            RngStream(fseed, numeric::StreamId::kFlowSampleRopeAmortize));
        nets::save_checkpoint(ckpt_path(out, "rope_amortizer", fold), "rope_amortizer",
                              rope_am.amortizer.params, hash);
        flags.rope_not_learning = rope_am.not_learning;
      }
      write_fold_flags(out, fold, flags);
      fold_timing["amortize"] = elapsed_s(t0);
      std::cout << "[fold " << fold << "] amortize done\n";
    }

    if (stage_on(opt, "evaluate")) {
      const auto t0 = std::chrono::steady_clock::now();
      const FoldFlags flags = read_fold_flags(out, fold);

      baselines::BaselineInputs in;
      in.box = box;
      in.ot = cfg.ot;
      in.rope_unbalanced = cfg.rope_unbalanced;
      in.rope_rho = cfg.rope_rho;
      in.sigma_obs = cfg.sigma_obs;
      in.seed = fseed;
      in.test_x = &data.test().x;
      in.test_theta = &data.test().theta;

      // Load only what the requested baselines need.
      nets::MlpEncoder nse, rope_enc, frisbi_enc;
      nets::FlowModel npe, amortizer, rope_amortizer;
      Matrix rope_atlas, frisbi_atlas;

      const bool need_nse = !(kinds.size() == 1 && kinds[0] == baselines::BaselineKind::kPrior);
      if (need_nse) {
        nse =
            encoder_from_ckpt(load_ckpt_for_stage(ckpt_path(out, "nse", fold), "npe", hash));
        npe = flow_from_ckpt(load_ckpt_for_stage(ckpt_path(out, "npe", fold), "npe", hash), box);
        in.nse = &nse;
        in.npe = &npe;
      }
      const bool need_rope_enc =
          contains(kinds, baselines::BaselineKind::kRopeFullTest) ||
          contains(kinds, baselines::BaselineKind::kRopeSingleSample) ||
          contains(kinds, baselines::BaselineKind::kFinetuneOnly) ||
          contains(kinds, baselines::BaselineKind::kFrisbiAmortizeOnly);
      if (need_rope_enc) {
        rope_enc = encoder_from_ckpt(
            load_ckpt_for_stage(ckpt_path(out, "rope_encoder", fold), "transfer", hash));
        in.rope_encoder = &rope_enc;
      }
      const bool need_frisbi_enc = contains(kinds, baselines::BaselineKind::kFrisbiJointOnly) ||
                                   contains(kinds, baselines::BaselineKind::kFrisbiFull);
      if (need_frisbi_enc) {
        frisbi_enc = encoder_from_ckpt(
            load_ckpt_for_stage(ckpt_path(out, "real_encoder", fold), "transfer", hash));
        in.frisbi_encoder = &frisbi_enc;
      }
      if (contains(kinds, baselines::BaselineKind::kFrisbiFull)) {
        amortizer = flow_from_ckpt(
            load_ckpt_for_stage(ckpt_path(out, "amortizer", fold), "amortize", hash), box);
        in.frisbi_amortizer = &amortizer;
      }
      if (contains(kinds, baselines::BaselineKind::kFrisbiAmortizeOnly)) {
        rope_amortizer = flow_from_ckpt(
            load_ckpt_for_stage(ckpt_path(out, "rope_amortizer", fold), "amortize", hash), box);
        in.rope_amortizer = &rope_amortizer;
      }
      const bool need_rope_atlas = contains(kinds, baselines::BaselineKind::kRopeFullTest) ||
                                   contains(kinds, baselines::BaselineKind::kRopeSingleSample) ||
                                   contains(kinds, baselines::BaselineKind::kOtOnlyFullTest) ||
                                   contains(kinds, baselines::BaselineKind::kOtOnlySingleSample);
      if (need_rope_atlas) {
        rope_atlas = nse.forward(data.ot().x);
        in.rope_atlas = &rope_atlas;
      }
      if (contains(kinds, baselines::BaselineKind::kFrisbiJointOnly)) {
        frisbi_atlas = nse.forward(numeric::stack_rows(data.ot().x, data.calib_xs()));
        in.frisbi_atlas = &frisbi_atlas;
      }
      const bool need_u = contains(kinds, baselines::BaselineKind::kRopeSingleSample) ||
                          contains(kinds, baselines::BaselineKind::kOtOnlySingleSample);
      if (need_u) in.u_x = &data.u().x;

      for (std::size_t bi = 0; bi < kinds.size(); ++bi) {
        const auto kind = kinds[bi];
        const std::string name = baselines::to_string(kind);
        auto built = baselines::build_baseline(kind, in);
        std::vector<const baselines::Posterior*> ptrs;
        for (const auto& p : built.posteriors) ptrs.push_back(p.get());
        RngStream eval_rng =
            RngStream(fseed, numeric::StreamId::kEvalSampling).fork(static_cast<std::uint64_t>(kind));
        auto report = metrics::evaluate(ptrs, data.test().theta, cfg.samples_per_point, eval_rng);

        json rj;
        rj["baseline"] = name;
        rj["fold"] = fold;
        rj["calib_size"] = cfg.n_calib;
        rj["noise_rate"] = cfg.noise_rate;
        rj["lpp"] = report.lpp;
        rj["acauc"] = report.acauc;
        rj["n_test"] = report.n_test;
        rj["samples_per_point"] = report.samples_per_point;
        rj["config_hash"] = hash;
        rj["coupling_converged"] = built.coupling_converged;
        if (kind == baselines::BaselineKind::kFrisbiFull)
          rj["amortizer_not_learning"] = flags.frisbi_not_learning;
        if (kind == baselines::BaselineKind::kFrisbiAmortizeOnly)
          rj["amortizer_not_learning"] = flags.rope_not_learning;
        json curve = json::array();
        for (auto [level, ecp] : report.coverage_curve) curve.push_back({level, ecp});
        rj["coverage_curve"] = curve;
        rj["lpp_per_point"] = report.lpp_per_point;
        std::ofstream os(fold_dir(out, fold) /
                         ("results_" + name + "_" + std::to_string(fold) + ".json"));
        os << rj.dump(2) << "\n";

        if (opt.export_plans && built.full_test_alpha.size() > 0)
          write_plan_csv(fold_dir(out, fold) /
                             ("plan_" + name + "_" + std::to_string(fold) + ".csv"),
                         built.full_test_alpha);
        std::cout << "[fold " << fold << "] " << name << ": lpp " << report.lpp << ", acauc "
                  << report.acauc << "\n";
      }
      fold_timing["evaluate"] = elapsed_s(t0);
    }

    timings["fold_" + std::to_string(fold)] = fold_timing;
  }

  rebuild_summary_csv(out);
  update_manifest(out, cfg, [&](json& m) { m["timings"] = timings; });
}

}  // namespace

void run_to(const ExperimentConfig& cfg, const std::filesystem::path& out,
            const RunOptions& opt) {
  if (opt.sweep.empty()) {
    run_single(cfg, out, opt);
    return;
  }
  std::vector<std::pair<std::string, ExperimentConfig>> points;
  if (opt.sweep == "calib") {
    for (std::size_t n : {10u, 50u, 200u, 1000u}) {
      ExperimentConfig c = cfg;
      c.n_calib = n;
      points.emplace_back("calib_" + std::to_string(n), c);
    }
  } else if (opt.sweep == "noise") {
    for (double r : {0.0, 0.01, 0.10}) {
      ExperimentConfig c = cfg;
      c.noise_rate = r;
      std::ostringstream name;
      name << "noise_" << r;
      points.emplace_back(name.str(), c);
    }
  } else {
    throw Error("config:sweep", "sweep must be 'calib' or 'noise'");
  }
  for (const auto& [name, sub_cfg] : points) {
    const auto sub_out = out / name;
    std::cout << "=== sweep point " << name << " ===\n";
    simulate_to(sub_cfg, sub_out);
    run_single(sub_cfg, sub_out, opt);
  }
  // Merge sweep summaries at the root.
  std::ofstream os(out / "summary.csv");
  os << "baseline,fold,calib_size,noise_rate,lpp,acauc\n";
  for (const auto& [name, _] : points) {
    std::ifstream is(out / name / "summary.csv");
    if (!is) continue;
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line))
      if (!line.empty()) os << line << '\n';
  }
}

void report_to(const std::filesystem::path& results_dir, const std::filesystem::path& out) {
  struct Row {
    std::string baseline;
    std::size_t fold;
    std::size_t calib;
    double noise;
    double lpp;
    double acauc;
    bool not_learning;
  };
  std::vector<Row> rows;
  if (std::filesystem::exists(results_dir))
    for (const auto& entry : std::filesystem::recursive_directory_iterator(results_dir)) {
      if (!entry.is_regular_file()) continue;
      const std::string name = entry.path().filename().string();
      if (name.rfind("results_", 0) != 0 || entry.path().extension() != ".json") continue;
      std::ifstream is(entry.path());
      json j;
      try {
        is >> j;
      } catch (const json::exception&) {
        continue;
      }
      rows.push_back({j.value("baseline", "?"), j.value("fold", std::size_t{0}),
                      j.value("calib_size", std::size_t{0}), j.value("noise_rate", 0.0),
                      j.value("lpp", 0.0), j.value("acauc", 0.0),
                      j.value("amortizer_not_learning", false)});
    }
  if (rows.empty()) throw Error("no-results", "no results_*.json under " + results_dir.string());

  std::map<std::tuple<std::string, std::size_t, double>, std::vector<const Row*>> groups;
  for (const auto& r : rows) groups[{r.baseline, r.calib, r.noise}].push_back(&r);

  auto mean_std = [](const std::vector<const Row*>& g, auto getter) {
    double mean = 0.0;
    for (const Row* r : g) mean += getter(*r);
    mean /= static_cast<double>(g.size());
    double var = 0.0;
    if (g.size() > 1) {
      for (const Row* r : g) var += (getter(*r) - mean) * (getter(*r) - mean);
      var /= static_cast<double>(g.size() - 1);
    }
    return std::pair<double, double>{mean, std::sqrt(var)};
  };

  std::filesystem::create_directories(out);
  std::ofstream csv(out / "report.csv");
  csv << "baseline,calib_size,noise_rate,folds,lpp_mean,lpp_std,acauc_mean,acauc_std\n";
  std::ofstream md(out / "report.md");
  md << "# Results\n\nPrior reference LPP: -2.8773 (uniform density over the parameter box).\n\n";
  md << "| baseline | calib | noise | folds | LPP (mean +- std) | ACAUC (mean +- std) |\n";
  md << "|---|---|---|---|---|---|\n";
  for (const auto& [key, group] : groups) {
    const auto& [baseline, calib, noise] = key;
    auto [lpp_mean, lpp_std] = mean_std(group, [](const Row& r) { return r.lpp; });
    auto [ac_mean, ac_std] = mean_std(group, [](const Row& r) { return r.acauc; });
    csv << baseline << ',' << calib << ',' << fmt17(noise) << ',' << group.size() << ','
        << fmt17(lpp_mean) << ',' << fmt17(lpp_std) << ',' << fmt17(ac_mean) << ','
        << fmt17(ac_std) << '\n';
    char lppbuf[64], acbuf[64];
    std::snprintf(lppbuf, sizeof(lppbuf), "%.4f +- %.4f", lpp_mean, lpp_std);
    std::snprintf(acbuf, sizeof(acbuf), "%.4f +- %.4f", ac_mean, ac_std);
    md << "| " << baseline << " | " << calib << " | " << noise << " | " << group.size() << " | "
       << lppbuf << " | " << acbuf << " |\n";
  }
  std::vector<std::string> flagged;
  for (const auto& r : rows)
    if (r.not_learning)
      flagged.push_back(r.baseline + " fold " + std::to_string(r.fold));
  if (!flagged.empty()) {
    md << "\n**amortizer-not-learning folds:** ";
    for (std::size_t i = 0; i < flagged.size(); ++i) md << (i ? ", " : "") << flagged[i];
    md << "\n";
  }
}

void cmd_simulate(const std::filesystem::path& config_path, const std::filesystem::path& out) {
  simulate_to(parse_config_file(config_path), out);
}

void cmd_run(const std::filesystem::path& config_path, const std::filesystem::path& out,
             const RunOptions& opt) {
  for (const auto& s : opt.stages)
    if (s != "npe" && s != "transfer" && s != "amortize" && s != "evaluate")
      throw Error("config:stages", "unknown stage '" + s + "'");
  run_to(parse_config_file(config_path), out, opt);
}

int exit_code_for(const Error& e) {
  const std::string& code = e.code();
  if (code.rfind("config", 0) == 0) return 2;
  if (code.rfind("missing-", 0) == 0) return 3;
  if (code == "diverged") return 4;
  return 1;
}

}  // namespace frisbi::cli
