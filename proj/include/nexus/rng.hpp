#pragma once

#include <cstdint>
#include <string>

namespace nexus {

/// Serializable generator state. A draw is a pure function of
/// (seed, position), so replaying from a checkpoint is exact.
struct RngState {
  std::string algorithm = "splitmix64-ctr";
  std::uint64_t seed = 0;
  std::uint64_t position = 0;

  bool operator==(const RngState&) const = default;
};

/// Counter-based generator: output i is the SplitMix64 finalizer applied to
/// seed + (i + 1) * golden-ratio increment.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t position = 0);
  explicit CounterRng(const RngState& state);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  // Uniform on (0, 1]; safe for log().
  double uniform_open_low();
  // Standard normal via Box-Muller; consumes exactly two draws.
  double gaussian();
  // Uniform integer in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound);

  RngState state() const;
  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

  // Independent child stream; deterministic in (seed, stream id).
  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

 private:
  std::uint64_t seed_;
  std::uint64_t position_;
};

std::uint64_t splitmix64_mix(std::uint64_t z);

}  // namespace nexus
