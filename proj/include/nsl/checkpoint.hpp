// Versioned binary model checkpoints. Layout (little-endian):
//   "NSLM" u32 version
//   u32 mode, u64 slots, u64 features, u64 n + n x u64 hidden widths
//   u64 fact_count, per slot: u64 heads, per head: u8 kind, u64 n, n x u32 fact ids
//   u64 n + n x u64 head_hidden widths, u64 classes
//   u64 layers, per layer: u64 rows, u64 cols, rows*cols f64 weights (row-major), rows f64 bias
//   u64 length + bytes of free-form metadata (the resolved run config)
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "nsl/perception.hpp"

namespace nsl {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const PerceptionModel& model, const std::string& metadata = {});

struct Checkpoint {
  PerceptionModel model;
  std::string metadata;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace nsl
