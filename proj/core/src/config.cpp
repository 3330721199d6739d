#include "frisbi/cli/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "frisbi/error.hpp"

namespace frisbi::cli {

namespace {

using nlohmann::json;

[[noreturn]] void bad_field(const std::string& path, const std::string& why) {
  throw Error("config:" + path, why);
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) bad_field(path.empty() ? key : path + "." + key, "unknown key");
}

template <typename T>
void read(const json& obj, const std::string& path, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    bad_field(path.empty() ? key : path + "." + std::string(key), e.what());
  }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error("config:parse", std::string("invalid JSON at byte ") + std::to_string(e.byte) +
                                    ": " + e.what());
  }
  if (!j.is_object()) throw Error("config:parse", "top level must be a JSON object");

  ExperimentConfig cfg;
  check_keys(j, "", {"seed", "sizes", "ot", "npe", "joint", "amortize", "noise_rate", "folds",
                     "baselines", "eval", "sigma_obs", "rope"});
  read(j, "", "seed", cfg.seed);
  read(j, "", "noise_rate", cfg.noise_rate);
  read(j, "", "folds", cfg.folds);
  read(j, "", "sigma_obs", cfg.sigma_obs);

  if (j.contains("sizes")) {
    const json& s = j.at("sizes");
    check_keys(s, "sizes", {"n_sbi", "n_u", "n_ot", "n_calib", "n_calib_pool", "n_test"});
    read(s, "sizes", "n_sbi", cfg.sizes.n_sbi);
    read(s, "sizes", "n_u", cfg.sizes.n_u);
    read(s, "sizes", "n_ot", cfg.sizes.n_ot);
    read(s, "sizes", "n_calib", cfg.n_calib);
    read(s, "sizes", "n_calib_pool", cfg.sizes.n_calib_pool);
    read(s, "sizes", "n_test", cfg.sizes.n_test);
  }
  if (j.contains("ot")) {
    const json& s = j.at("ot");
    check_keys(s, "ot", {"gamma", "rho", "max_iter", "tol"});
    read(s, "ot", "gamma", cfg.ot.gamma);
    read(s, "ot", "rho", cfg.ot.rho);
    read(s, "ot", "max_iter", cfg.ot.max_iter);
    read(s, "ot", "tol", cfg.ot.tol);
  }
  if (j.contains("npe")) {
    const json& s = j.at("npe");
    check_keys(s, "npe", {"batch_size", "epochs", "lr"});
    read(s, "npe", "batch_size", cfg.npe.batch_size);
    read(s, "npe", "epochs", cfg.npe.epochs);
    read(s, "npe", "lr", cfg.npe.lr);
  }
  if (j.contains("joint")) {
    const json& s = j.at("joint");
    check_keys(s, "joint", {"lambda", "batch_size", "epochs", "lr"});
    read(s, "joint", "lambda", cfg.joint.lambda);
    read(s, "joint", "batch_size", cfg.joint.batch_size);
    read(s, "joint", "epochs", cfg.joint.epochs);
    read(s, "joint", "lr", cfg.joint.lr);
  }
  if (j.contains("amortize")) {
    const json& s = j.at("amortize");
    check_keys(s, "amortize", {"k", "weight_floor", "batch_size", "epochs", "lr"});
    read(s, "amortize", "k", cfg.amortize.k);
    read(s, "amortize", "weight_floor", cfg.amortize.weight_floor);
    read(s, "amortize", "batch_size", cfg.amortize.batch_size);
    read(s, "amortize", "epochs", cfg.amortize.epochs);
    read(s, "amortize", "lr", cfg.amortize.lr);
  }
  if (j.contains("eval")) {
    const json& s = j.at("eval");
    check_keys(s, "eval", {"samples_per_point"});
    read(s, "eval", "samples_per_point", cfg.samples_per_point);
  }
  if (j.contains("rope")) {
    const json& s = j.at("rope");
    check_keys(s, "rope", {"unbalanced", "rho"});
    read(s, "rope", "unbalanced", cfg.rope_unbalanced);
    read(s, "rope", "rho", cfg.rope_rho);
  }
  if (j.contains("baselines")) {
    if (!j.at("baselines").is_array()) bad_field("baselines", "must be an array of names");
    cfg.baseline_kinds.clear();
    for (const auto& name : j.at("baselines")) {
      if (!name.is_string()) bad_field("baselines", "entries must be strings");
      cfg.baseline_kinds.push_back(baselines::baseline_from_string(name.get<std::string>()));
    }
  }

  // Validation.
  if (cfg.sizes.n_sbi == 0) bad_field("sizes.n_sbi", "must be >= 1");
  if (cfg.sizes.n_u == 0) bad_field("sizes.n_u", "must be >= 1");
  if (cfg.sizes.n_ot == 0) bad_field("sizes.n_ot", "must be >= 1");
  if (cfg.sizes.n_test == 0) bad_field("sizes.n_test", "must be >= 1");
  if (cfg.sizes.n_calib_pool == 0) bad_field("sizes.n_calib_pool", "must be >= 1");
  if (cfg.n_calib == 0) bad_field("sizes.n_calib", "must be >= 1");
  if (cfg.n_calib > cfg.sizes.n_calib_pool)
    bad_field("sizes.n_calib", "cannot exceed n_calib_pool");
  if (cfg.folds == 0) bad_field("folds", "must be >= 1");
  if (!(cfg.ot.gamma > 0.0)) bad_field("ot.gamma", "must be > 0");
  if (cfg.ot.rho < 0.0) bad_field("ot.rho", "must be >= 0");
  if (cfg.joint.lambda < 0.0) bad_field("joint.lambda", "must be >= 0");
  if (cfg.noise_rate < 0.0) bad_field("noise_rate", "must be >= 0");
  if (cfg.amortize.k == 0) bad_field("amortize.k", "must be >= 1");
  if (cfg.samples_per_point < 256) bad_field("eval.samples_per_point", "must be >= 256");
  if (cfg.baseline_kinds.empty()) bad_field("baselines", "must not be empty");

  // The joint loss shares the OT entropy weight.
  cfg.joint.gamma = cfg.ot.gamma;
  return cfg;
}

ExperimentConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("config:file", "cannot open config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

std::string canonical_config_json(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["sizes"] = {{"n_sbi", cfg.sizes.n_sbi},   {"n_u", cfg.sizes.n_u},
                {"n_ot", cfg.sizes.n_ot},     {"n_calib", cfg.n_calib},
                {"n_calib_pool", cfg.sizes.n_calib_pool}, {"n_test", cfg.sizes.n_test}};
  j["ot"] = {{"gamma", cfg.ot.gamma},
             {"rho", cfg.ot.rho},
             {"max_iter", cfg.ot.max_iter},
             {"tol", cfg.ot.tol}};
  j["npe"] = {{"batch_size", cfg.npe.batch_size}, {"epochs", cfg.npe.epochs}, {"lr", cfg.npe.lr}};
  j["joint"] = {{"lambda", cfg.joint.lambda},
                {"batch_size", cfg.joint.batch_size},
                {"epochs", cfg.joint.epochs},
                {"lr", cfg.joint.lr}};
  j["amortize"] = {{"k", cfg.amortize.k},
                   {"weight_floor", cfg.amortize.weight_floor},
                   {"batch_size", cfg.amortize.batch_size},
                   {"epochs", cfg.amortize.epochs},
                   {"lr", cfg.amortize.lr}};
  j["noise_rate"] = cfg.noise_rate;
  j["folds"] = cfg.folds;
  json names = json::array();
  for (auto kind : cfg.baseline_kinds) names.push_back(baselines::to_string(kind));
  j["baselines"] = names;
  j["eval"] = {{"samples_per_point", cfg.samples_per_point}};
  j["sigma_obs"] = cfg.sigma_obs;
  j["rope"] = {{"unbalanced", cfg.rope_unbalanced}, {"rho", cfg.rope_rho}};
  return j.dump(2);
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string s = canonical_config_json(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

std::uint64_t fold_seed(const ExperimentConfig& cfg, std::size_t fold) {
  std::uint64_t x = cfg.seed + 0x9e3779b97f4a7c15ULL * (fold + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace frisbi::cli
