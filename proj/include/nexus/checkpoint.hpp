#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "nexus/model.hpp"
#include "nexus/optim.hpp"
#include "nexus/rng.hpp"

namespace nexus {

inline constexpr char kCheckpointMagic[4] = {'N', 'X', 'F', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to continue training bit-identically.
struct TrainState {
  ModelConfig config;
  ModelParams params;
  AdamWState opt;
  std::uint64_t step = 0;
  std::uint64_t tokens = 0;
  std::uint64_t warmup_start = 0;  // step at which the lr warmup last began
  std::uint64_t warmup_steps = 0;  // length of that warmup
  std::uint64_t data_stream = 0;   // corpus stream the batches are drawn from
  RngState rng;                    // batch sampler; batch k uses position k
  // Projection dims before any growth, for alignment metrics.
  std::size_t base_m = 0, base_a = 0;
};

/// Little-endian layout: magic "NXF1", u32 version, u64 length + UTF-8 JSON
/// (config and counters), u64 matrix count, then per matrix u32 name length,
/// name, u64 rows, u64 cols, u8 dtype tag (1 = f64) and the row-major
/// payload. Parameters come first, then "adam.m.<name>" and "adam.v.<name>".
std::string save_checkpoint(const TrainState& state);
TrainState load_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState read_checkpoint(const std::filesystem::path& path);

}  // namespace nexus
