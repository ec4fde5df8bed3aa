#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "heightnet/kv_config.hpp"

namespace heightnet {

enum class BlockKind { plain, residual };
enum class Activation { relu, linear };

std::string_view to_string(BlockKind kind) noexcept;
std::string_view to_string(Activation act) noexcept;

/// One block: `conv_layers` stacked 3x3 convolutions (each followed by
/// normalization when enabled) producing `channels` feature maps. Inner
/// layers use ReLU; `activation` is applied to the block output, after the
/// shortcut add for residual blocks.
struct BlockSpec {
  BlockKind kind = BlockKind::residual;
  std::size_t conv_layers = 2;
  std::size_t channels = 64;
  Activation activation = Activation::relu;

  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

struct EncoderStage {
  BlockSpec block;
  bool pool_after = false;
  friend bool operator==(const EncoderStage&, const EncoderStage&) = default;
};

struct DecoderStage {
  BlockSpec block;
  bool unpool_before = false;
  friend bool operator==(const DecoderStage&, const DecoderStage&) = default;
};

/// Output of encoder block `source` is concatenated (after the decoder
/// tensor's own channels) onto the input of decoder block `target`.
struct SkipSpec {
  std::size_t source = 0;
  std::size_t target = 0;
  friend bool operator==(const SkipSpec&, const SkipSpec&) = default;
};

/// Declarative encoder/decoder description. A final linear 3x3 convolution
/// maps the last feature maps to a single height channel.
///
/// Text form (see configs/*.cfg):
///
///     [network]
///     seed = 7
///     batch_norm = true
///     input_channels = 3
///     skip = 0 3            # or: none
///     [encoder]
///     block = residual 2 64 relu pool
///     [decoder]
///     block = residual 2 64 relu unpool
struct NetworkConfig {
  std::size_t input_channels = 3;
  std::vector<EncoderStage> encoder;
  std::vector<DecoderStage> decoder;
  std::optional<SkipSpec> skip;
  bool use_batch_norm = true;
  std::uint64_t seed = 7;

  std::size_t pool_count() const noexcept;

  /// Throws ConfigError when pools/unpools do not mirror, channel counts at an
  /// unpool disagree with the recorded pool, or the skip joins two different
  /// resolutions.
  void validate() const;

  static NetworkConfig parse(const KeyValueFile& kv);
  static NetworkConfig parse_text(std::string_view text);
  static NetworkConfig load(const std::filesystem::path& path);
  std::string to_text() const;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Widths `base`, 2*base, 4*base with a pool after each, an 8*base
/// bottleneck, and a mirrored decoder whose last block receives the skip.
NetworkConfig encoder_decoder_config(std::size_t base_channels, BlockKind kind, bool with_skip,
                                     std::uint64_t seed = 7);

/// Named presets: "desk" (base 64), "tiny" (base 8), "gradcheck"
/// (two 4-channel blocks around one pool, with skip).
NetworkConfig preset_config(std::string_view name);
std::vector<std::string> preset_names();

}  // namespace heightnet
