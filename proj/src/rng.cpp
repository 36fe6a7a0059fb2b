#include "nexus/rng.hpp"

#include <cmath>
#include <numbers>

#include "nexus/errors.hpp"

namespace nexus {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr const char* kAlgorithm = "splitmix64-ctr";
}  // namespace

std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t position)
    : seed_(seed), position_(position) {}

CounterRng::CounterRng(const RngState& state)
    : seed_(state.seed), position_(state.position) {
  if (state.algorithm != kAlgorithm) {
    throw ValidationError("unsupported rng algorithm '" + state.algorithm + "'");
  }
}

std::uint64_t CounterRng::next_u64() {
  ++position_;
  return splitmix64_mix(seed_ + position_ * kGolden);
}

double CounterRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::uniform_open_low() {
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double CounterRng::gaussian() {
  const double u1 = uniform_open_low();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t CounterRng::below(std::uint64_t bound) {
  if (bound == 0) throw ValidationError("CounterRng::below: bound must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x < limit) return x % bound;
  }
}

RngState CounterRng::state() const { return RngState{kAlgorithm, seed_, position_}; }

std::uint64_t CounterRng::derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64_mix(splitmix64_mix(seed) ^ (stream * kGolden + 0x632BE59BD9B4E019ULL));
}

}  // namespace nexus
