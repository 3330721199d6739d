#pragma once

#include <cstdint>

namespace frisbi::numeric {

/// Stream purposes. One stream per purpose keeps results independent of
/// evaluation order; fold-specific streams are derived via fork().
enum class StreamId : std::uint64_t {
  kSimSbi = 1,
  kSimUnpaired,
  kSimOt,
  kSimCalib,
  kSimTest,
  kCorruptLabels,
  kInitNse,
  kInitNpe,
  kInitRealEncoder,
  kInitAmortizer,
  kInitRopeAmortizer,
  kBatchNpe,
  kBatchTransfer,
  kBatchAmortize,
  kFlowSampleAmortize,
  kFlowSampleRopeAmortize,
  kEvalSampling,
  kFoldCalibSubset,
  kSbiOracleSim,
  kTest = 9000,
};

/// Counter-seeded xoshiro256** stream. Identical (seed, stream_id, call
/// sequence) gives identical output regardless of what other streams do.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);
  RngStream(std::uint64_t seed, StreamId stream_id)
      : RngStream(seed, static_cast<std::uint64_t>(stream_id)) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller (second draw cached).
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Derive an independent substream, e.g. one per sample index or fold.
  RngStream fork(std::uint64_t index) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::uint64_t state_[4] = {0, 0, 0, 0};
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace frisbi::numeric
