#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "frisbi/numeric/matrix.hpp"

namespace frisbi::nets {

/// Checkpoint schema: {"kind": "...", "shapes": [[r, c], ...],
/// "values": [flat doubles, 17 significant digits], "config_hash": "..."}.
void save_checkpoint(const std::filesystem::path& file, const std::string& kind,
                     const std::vector<numeric::Matrix>& params,
                     const std::string& config_hash = "");

struct Checkpoint {
  std::string kind;
  std::vector<numeric::Matrix> params;
  std::string config_hash;
};

Checkpoint load_checkpoint(const std::filesystem::path& file);

/// FNV-1a over the 17-digit serialization of all parameters; stable across
/// runs on the same data, used for the freeze-invariant checks.
std::string params_hash(const std::vector<numeric::Matrix>& params);

}  // namespace frisbi::nets
