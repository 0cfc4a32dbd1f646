#pragma once

#include "numerics/optimizer.hpp"
#include "numerics/parameter.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace clap::numerics {

// Binary checkpoint container (little-endian throughout):
//
//   char[8]  magic "CLAPCKPT"
//   u32      format version
//   u32      scalar width in bytes (4 = float32, 8 = float64)
//   u64      metadata length, then that many bytes of UTF-8 JSON
//   u64      tensor count, then per tensor:
//              u32 path length, path bytes, u64 rows, u64 cols,
//              rows*cols scalars (row-major)
//   u64      optimizer count, then per optimizer:
//              u32 name length, name bytes, u64 step,
//              f64 learning rate, f64 beta1, f64 beta2, f64 epsilon,
//              u64 entry count, then per entry:
//                u32 path length, path bytes, u64 rows, u64 cols,
//                first-moment scalars, second-moment scalars
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string path;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<unsigned char> bytes;
};

struct MomentRecord {
  std::string path;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<unsigned char> first;
  std::vector<unsigned char> second;
};

struct OptimizerRecord {
  std::string name;
  std::uint64_t step = 0;
  double learning_rate = 0, beta1 = 0, beta2 = 0, epsilon = 0;
  std::vector<MomentRecord> entries;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint32_t scalar_bytes = 4;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<TensorRecord> tensors;
  std::vector<OptimizerRecord> optimizers;

  const OptimizerRecord* optimizer(const std::string& name) const;
};

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws DataError on a bad magic, truncated data or a version mismatch (the
// message carries both versions).
Checkpoint read_checkpoint(const std::filesystem::path& path);
// Reads only the header fields needed to choose a precision.
std::uint32_t peek_scalar_bytes(const std::filesystem::path& path);

template <typename S>
void export_parameters(const ParameterStore<S>& store, Checkpoint& ckpt);
// Every parameter of `store` must be present with a matching shape.
template <typename S>
void import_parameters(const Checkpoint& ckpt, ParameterStore<S>& store);

template <typename S>
OptimizerRecord export_optimizer(const Adam<S>& adam);
template <typename S>
void import_optimizer(const OptimizerRecord& record, Adam<S>& adam);

}  // namespace clap::numerics
