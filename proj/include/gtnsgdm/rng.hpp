#pragma once

#include <cstdint>
#include <optional>

namespace gtnsgdm {

/// Counter-based stream: draw k of stream (seed, node, domain) is a pure
/// function of those four values, so replays and cross-node interleavings
/// never change a node's sequence.
class RngStream {
 public:
  /// Domains separate independent uses of the same (seed, node) pair.
  enum Domain : std::uint64_t { kOracle = 0, kDataset = 1, kMinibatch = 2, kDiagnostics = 3 };

  RngStream(std::uint64_t seed, std::uint64_t node, std::uint64_t domain = kOracle);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t node() const noexcept { return node_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  /// Exp(1).
  double exponential();
  /// Gamma(shape, 1), shape > 0 (Marsaglia-Tsang).
  double gamma(double shape);
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

 private:
  std::uint64_t seed_;
  std::uint64_t node_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::optional<double> spare_normal_;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace gtnsgdm
