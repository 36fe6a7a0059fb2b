#include "nexus/corpus.hpp"

#include <algorithm>
#include <cmath>

#include "nexus/errors.hpp"
#include "nexus/rng.hpp"

namespace nexus {

namespace {

constexpr std::size_t S = kCorpusSymbols;
constexpr std::uint64_t kChainStream = 0x6d61726b6f76ULL;
constexpr std::uint64_t kPatternStream = 0x70617474ULL;
constexpr std::size_t kMixedChunk = 64;

std::size_t sample_next(const MarkovK2& chain, std::size_t a, std::size_t b, double u) {
  const double* row = &chain.probs[(a * S + b) * S];
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t c = 0; c < S; ++c) {
    if (row[c] == 0.0) continue;
    acc += row[c];
    last = c;
    if (u < acc) return c;
  }
  return last;
}

}  // namespace

MarkovK2 MarkovK2::from_seed(std::uint64_t seed) {
  CounterRng rng(CounterRng::derive_seed(seed, kChainStream));
  // Two sparse first-order tables: successors of the last symbol and of
  // the one before it.
  auto sparse_table = [&] {
    std::vector<double> t(S * S, 0.0);
    for (std::size_t from = 0; from < S; ++from) {
      double* row = &t[from * S];
      std::size_t placed = 0;
      while (placed < kFanout) {
        const auto c = static_cast<std::size_t>(rng.below(S));
        if (row[c] != 0.0) continue;
        // Exponential weights give a flat Dirichlet over the successors.
        row[c] = -std::log(rng.uniform_open_low());
        ++placed;
      }
      double total = 0.0;
      for (std::size_t c = 0; c < S; ++c) total += row[c];
      for (std::size_t c = 0; c < S; ++c) row[c] /= total;
    }
    return t;
  };
  const auto near = sparse_table();
  const auto skip = sparse_table();
  MarkovK2 m;
  m.probs.assign(S * S * S, 0.0);
  for (std::size_t a = 0; a < S; ++a) {
    for (std::size_t b = 0; b < S; ++b) {
      double* row = &m.probs[(a * S + b) * S];
      for (std::size_t c = 0; c < S; ++c) {
        row[c] = kNearWeight * near[b * S + c] + (1.0 - kNearWeight) * skip[a * S + c];
      }
    }
  }
  return m;
}

std::vector<int> repeat_pattern(std::uint64_t seed) {
  CounterRng rng(CounterRng::derive_seed(seed, kPatternStream));
  std::vector<int> pattern(kRepeatPeriod);
  for (auto& t : pattern) t = static_cast<int>(rng.below(S));
  return pattern;
}

bool is_known_generator(const std::string& g) {
  return g == "markov-k2" || g == "repeat-pattern" || g == "mixed";
}

std::vector<int> gen_corpus(const std::string& generator, std::uint64_t seed, std::size_t length,
                            std::uint64_t stream) {
  if (!is_known_generator(generator)) {
    throw ValidationError("unknown corpus generator '" + generator +
                          "' (expected markov-k2, repeat-pattern or mixed)");
  }
  if (length == 0) throw ValidationError("gen_corpus: length must be >= 1");
  CounterRng rng(CounterRng::derive_seed(seed, stream));
  std::vector<int> out(length);

  if (generator == "repeat-pattern") {
    const auto pattern = repeat_pattern(seed);
    const auto offset = static_cast<std::size_t>(rng.below(kRepeatPeriod));
    for (std::size_t i = 0; i < length; ++i) out[i] = pattern[(i + offset) % kRepeatPeriod];
    return out;
  }

  const auto chain = MarkovK2::from_seed(seed);
  std::size_t a = rng.below(S), b = rng.below(S);
  if (generator == "markov-k2") {
    for (std::size_t i = 0; i < length; ++i) {
      const std::size_t c = sample_next(chain, a, b, rng.uniform());
      out[i] = static_cast<int>(c);
      a = b;
      b = c;
    }
    return out;
  }

  const auto pattern = repeat_pattern(seed);
  for (std::size_t start = 0; start < length; start += kMixedChunk) {
    const bool markov = rng.uniform() < 0.5;
    const std::size_t end = std::min(length, start + kMixedChunk);
    for (std::size_t i = start; i < end; ++i) {
      std::size_t c;
      if (markov) {
        c = sample_next(chain, a, b, rng.uniform());
      } else {
        c = static_cast<std::size_t>(pattern[i % kRepeatPeriod]);
      }
      out[i] = static_cast<int>(c);
      a = b;
      b = c;
    }
  }
  return out;
}

}  // namespace nexus
