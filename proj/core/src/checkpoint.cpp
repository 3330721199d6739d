#include "frisbi/nets/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "frisbi/error.hpp"

namespace frisbi::nets {

namespace {
std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

void save_checkpoint(const std::filesystem::path& file, const std::string& kind,
                     const std::vector<numeric::Matrix>& params, const std::string& config_hash) {
  std::ofstream os(file);
  if (!os) throw Error("io", "cannot open " + file.string() + " for writing");
  os << "{\n  \"kind\": \"" << kind << "\",\n  \"config_hash\": \"" << config_hash
     << "\",\n  \"shapes\": [";
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (p) os << ", ";
    os << '[' << params[p].rows() << ", " << params[p].cols() << ']';
  }
  os << "],\n  \"values\": [";
  bool first = true;
  for (const auto& m : params)
    for (double v : m.flat()) {
      if (!first) os << ", ";
      first = false;
      os << fmt17(v);
    }
  os << "]\n}\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw Error("io", "cannot open checkpoint " + file.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("io", "malformed checkpoint " + file.string() + ": " + e.what());
  }
  Checkpoint ckpt;
  ckpt.kind = j.at("kind").get<std::string>();
  ckpt.config_hash = j.value("config_hash", "");
  std::vector<double> values = j.at("values").get<std::vector<double>>();
  std::size_t offset = 0;
  for (const auto& shape : j.at("shapes")) {
    const auto rows = shape.at(0).get<std::size_t>();
    const auto cols = shape.at(1).get<std::size_t>();
    if (offset + rows * cols > values.size())
      throw Error("io", "checkpoint values shorter than shapes imply");
    numeric::Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows * cols; ++i) m.flat()[i] = values[offset + i];
    offset += rows * cols;
    ckpt.params.push_back(std::move(m));
  }
  if (offset != values.size()) throw Error("io", "checkpoint values longer than shapes imply");
  return ckpt;
}

std::string params_hash(const std::vector<numeric::Matrix>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& m : params) {
    mix(std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ";");
    for (double v : m.flat()) mix(fmt17(v) + ",");
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

}  // namespace frisbi::nets
