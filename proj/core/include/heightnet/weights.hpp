#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "heightnet/nadam.hpp"
#include "heightnet/network.hpp"

// Weight file layout, all integers little-endian:
//
//   offset  size  field
//   0       4     magic "HNWT"
//   4       4     u32 format version (1)
//   8       4     u32 entry count
//   12      ...   entries, each:
//                   u16 name length, name bytes (UTF-8, no terminator)
//                   u8  dtype (1 = float32, 2 = float64, 3 = uint8)
//                   u8  rank, then rank x u32 dims
//                   u64 payload byte count, payload (row-major)
//   end-4   4     u32 CRC-32 (zlib polynomial) of every preceding byte
//
// A network file holds a `config` entry (uint8, the NetworkConfig text) and
// one float32 rank-4 entry per parameter under its stable name. Checkpoints
// add `optimizer.scalars` (float64: lr, beta1, beta2, epsilon,
// schedule_decay, t, m_schedule) and `optimizer.m/<param>` /
// `optimizer.v/<param>` float64 moments.

namespace heightnet {

enum class DType : std::uint8_t { f32 = 1, f64 = 2, u8 = 3 };

struct WeightEntry {
  std::string name;
  DType dtype = DType::f32;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;
};

struct WeightFile {
  static constexpr std::uint32_t kVersion = 1;
  std::vector<WeightEntry> entries;

  const WeightEntry* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_weight_file(const WeightFile& file);
/// Throws FormatError on bad magic, unsupported version, truncation or a
/// checksum mismatch. `source` only labels messages.
WeightFile decode_weight_file(std::span<const std::uint8_t> bytes, const std::string& source = "<memory>");

void write_weight_file(const std::filesystem::path& path, const WeightFile& file);
WeightFile read_weight_file(const std::filesystem::path& path);

WeightFile to_weight_file(const Network<float>& net, const OptimizerState* optimizer = nullptr);

/// Atomic write of the network (and optionally optimizer state).
void save_weights(const Network<float>& net, const std::filesystem::path& path,
                  const OptimizerState* optimizer = nullptr);

/// Rebuilds the network from the embedded config, then loads every parameter.
Network<float> load_weights(const std::filesystem::path& path);

/// Loads parameters into an existing network. Throws FormatError listing
/// every missing, unexpected or wrongly shaped name if the file does not
/// match the network exactly.
void load_weights_into(Network<float>& net, const WeightFile& file);
void load_weights_into(Network<float>& net, const std::filesystem::path& path);

std::optional<OptimizerState> load_optimizer_state(const WeightFile& file);

}  // namespace heightnet
