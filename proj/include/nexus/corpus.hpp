#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace nexus {

inline constexpr std::size_t kCorpusSymbols = 64;
inline constexpr std::size_t kRepeatPeriod = 16;

// Stream ids of the three disjoint token streams drawn from one corpus seed.
inline constexpr std::uint64_t kPretrainStream = 0;
inline constexpr std::uint64_t kHeldOutStream = 1;
inline constexpr std::uint64_t kContinuedStream = 2;

/// Order-2 Markov chain over kCorpusSymbols symbols:
/// P(c | a, b) = w * T1(c | b) + (1 - w) * T2(c | a), where each row of the
/// seeded tables T1, T2 has kFanout successors with random weights.
struct MarkovK2 {
  static constexpr std::size_t kFanout = 4;
  static constexpr double kNearWeight = 0.6;
  // probs[(a * S + b) * S + c] = P(c | a, b)
  std::vector<double> probs;

  static MarkovK2 from_seed(std::uint64_t seed);
  double p(std::size_t a, std::size_t b, std::size_t c) const {
    return probs[(a * kCorpusSymbols + b) * kCorpusSymbols + c];
  }
};

/// The period-16 pattern of "repeat-pattern" for a seed.
std::vector<int> repeat_pattern(std::uint64_t seed);

/// Deterministic token stream. Generators: "markov-k2", "repeat-pattern",
/// "mixed" (64-token chunks alternating at random between the two). The
/// chain and the pattern depend only on `seed`; `stream` selects an
/// independent sample path.
std::vector<int> gen_corpus(const std::string& generator, std::uint64_t seed, std::size_t length,
                            std::uint64_t stream = kPretrainStream);

bool is_known_generator(const std::string& generator);

}  // namespace nexus
