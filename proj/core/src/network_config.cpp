#include "heightnet/network_config.hpp"

#include <sstream>

#include "heightnet/error.hpp"

namespace heightnet {

std::string_view to_string(BlockKind kind) noexcept { return kind == BlockKind::plain ? "plain" : "residual"; }
std::string_view to_string(Activation act) noexcept { return act == Activation::relu ? "relu" : "linear"; }

std::size_t NetworkConfig::pool_count() const noexcept {
  std::size_t p = 0;
  for (const auto& s : encoder) p += s.pool_after ? 1 : 0;
  return p;
}

void NetworkConfig::validate() const {
  if (input_channels < 1) throw ConfigError("network: input_channels must be >= 1");
  if (encoder.empty()) throw ConfigError("network: at least one encoder block is required");
  auto check_block = [](const BlockSpec& b, const std::string& where) {
    if (b.conv_layers < 1) throw ConfigError(where + ": conv_layers must be >= 1");
    if (b.channels < 1) throw ConfigError(where + ": channels must be >= 1");
  };

  std::size_t unpools = 0;
  for (const auto& d : decoder) unpools += d.unpool_before ? 1 : 0;
  if (unpools != pool_count()) {
    throw ConfigError("network: " + std::to_string(pool_count()) + " pools but " + std::to_string(unpools) +
                      " unpools; the decoder must mirror the encoder");
  }
  if (skip) {
    if (skip->source >= encoder.size()) throw ConfigError("network: skip source is not an encoder block");
    if (skip->target >= decoder.size()) throw ConfigError("network: skip target is not a decoder block");
  }

  struct Pooled {
    std::size_t channels;
  };
  std::vector<Pooled> stack;
  std::size_t channels = input_channels;
  std::size_t level = 0;
  std::size_t skip_level = 0;
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    check_block(encoder[i].block, "encoder block " + std::to_string(i));
    channels = encoder[i].block.channels;
    if (skip && skip->source == i) skip_level = level;
    if (encoder[i].pool_after) {
      stack.push_back({channels});
      ++level;
    }
  }
  for (std::size_t j = 0; j < decoder.size(); ++j) {
    const std::string where = "decoder block " + std::to_string(j);
    check_block(decoder[j].block, where);
    if (decoder[j].unpool_before) {
      if (stack.empty()) throw ConfigError(where + ": unpool without a matching pool");
      if (stack.back().channels != channels) {
        throw ConfigError(where + ": unpooling " + std::to_string(channels) + " channels with indices recorded on " +
                          std::to_string(stack.back().channels) + " channels");
      }
      stack.pop_back();
      --level;
    }
    if (skip && skip->target == j && skip_level != level) {
      throw ConfigError("network: skip joins resolution level " + std::to_string(skip_level) + " to level " +
                        std::to_string(level));
    }
    channels = decoder[j].block.channels;
  }
}

namespace {

BlockSpec parse_block_line(const KeyValueFile& kv, const KeyValueFile::Entry& e, std::string_view flag_word,
                           bool& flag) {
  const auto tokens = split_whitespace(e.value);
  if (tokens.size() < 3) kv.fail(e, "expected '<plain|residual> <layers> <channels> [relu|linear] [" +
                                        std::string(flag_word) + "]'");
  BlockSpec b;
  if (tokens[0] == "plain") {
    b.kind = BlockKind::plain;
  } else if (tokens[0] == "residual") {
    b.kind = BlockKind::residual;
  } else {
    kv.fail(e, "unknown block kind '" + tokens[0] + "'");
  }
  try {
    const long long layers = parse_int(tokens[1]);
    const long long ch = parse_int(tokens[2]);
    if (layers < 1 || ch < 1) kv.fail(e, "layers and channels must be >= 1");
    b.conv_layers = static_cast<std::size_t>(layers);
    b.channels = static_cast<std::size_t>(ch);
  } catch (const ConfigError& err) {
    kv.fail(e, err.what());
  }
  flag = false;
  for (std::size_t i = 3; i < tokens.size(); ++i) {
    if (tokens[i] == "relu") {
      b.activation = Activation::relu;
    } else if (tokens[i] == "linear") {
      b.activation = Activation::linear;
    } else if (tokens[i] == flag_word) {
      flag = true;
    } else {
      kv.fail(e, "unexpected token '" + tokens[i] + "'");
    }
  }
  return b;
}

}  // namespace

NetworkConfig NetworkConfig::parse(const KeyValueFile& kv) {
  kv.require_known("network", {"seed", "batch_norm", "input_channels", "skip"});
  kv.require_known("encoder", {"block"});
  kv.require_known("decoder", {"block"});

  NetworkConfig cfg;
  cfg.seed = static_cast<std::uint64_t>(kv.get_int("network", "seed", 7));
  cfg.use_batch_norm = kv.get_bool("network", "batch_norm", true);
  cfg.input_channels = static_cast<std::size_t>(kv.get_int("network", "input_channels", 3));
  if (const auto* e = kv.find("network", "skip")) {
    const auto tokens = split_whitespace(e->value);
    if (tokens.size() == 1 && tokens[0] == "none") {
      cfg.skip.reset();
    } else if (tokens.size() == 2) {
      try {
        cfg.skip = SkipSpec{static_cast<std::size_t>(parse_int(tokens[0])),
                            static_cast<std::size_t>(parse_int(tokens[1]))};
      } catch (const ConfigError& err) {
        kv.fail(*e, err.what());
      }
    } else {
      kv.fail(*e, "expected '<encoder index> <decoder index>' or 'none'");
    }
  }
  for (const auto* e : kv.find_all("encoder", "block")) {
    EncoderStage s;
    s.block = parse_block_line(kv, *e, "pool", s.pool_after);
    cfg.encoder.push_back(s);
  }
  for (const auto* e : kv.find_all("decoder", "block")) {
    DecoderStage s;
    s.block = parse_block_line(kv, *e, "unpool", s.unpool_before);
    cfg.decoder.push_back(s);
  }
  cfg.validate();
  return cfg;
}

NetworkConfig NetworkConfig::parse_text(std::string_view text) { return parse(KeyValueFile::parse(text)); }

NetworkConfig NetworkConfig::load(const std::filesystem::path& path) { return parse(KeyValueFile::load(path)); }

std::string NetworkConfig::to_text() const {
  std::ostringstream out;
  out << "[network]\n";
  out << "seed = " << seed << "\n";
  out << "batch_norm = " << (use_batch_norm ? "true" : "false") << "\n";
  out << "input_channels = " << input_channels << "\n";
  if (skip) {
    out << "skip = " << skip->source << " " << skip->target << "\n";
  } else {
    out << "skip = none\n";
  }
  auto block_text = [](const BlockSpec& b) {
    std::ostringstream s;
    s << to_string(b.kind) << " " << b.conv_layers << " " << b.channels << " " << to_string(b.activation);
    return s.str();
  };
  out << "\n[encoder]\n";
  for (const auto& s : encoder) out << "block = " << block_text(s.block) << (s.pool_after ? " pool" : "") << "\n";
  out << "\n[decoder]\n";
  for (const auto& s : decoder) {
    out << "block = " << block_text(s.block) << (s.unpool_before ? " unpool" : "") << "\n";
  }
  return out.str();
}

NetworkConfig encoder_decoder_config(std::size_t base, BlockKind kind, bool with_skip, std::uint64_t seed) {
  auto spec = [kind](std::size_t ch) { return BlockSpec{kind, 2, ch, Activation::relu}; };
  NetworkConfig cfg;
  cfg.seed = seed;
  cfg.encoder = {{spec(base), true}, {spec(2 * base), true}, {spec(4 * base), true}, {spec(8 * base), false}};
  // The first decoder block narrows the bottleneck back to the width of the
  // deepest pooled tensor so its indices can be reused.
  cfg.decoder = {{spec(4 * base), false}, {spec(2 * base), true}, {spec(base), true}, {spec(base), true}};
  if (with_skip) cfg.skip = SkipSpec{0, 3};
  cfg.validate();
  return cfg;
}

NetworkConfig preset_config(std::string_view name) {
  if (name == "desk") return encoder_decoder_config(64, BlockKind::residual, true);
  if (name == "tiny") return encoder_decoder_config(8, BlockKind::residual, true);
  if (name == "gradcheck") {
    NetworkConfig cfg;
    cfg.encoder = {{BlockSpec{BlockKind::residual, 2, 4, Activation::relu}, true}};
    cfg.decoder = {{BlockSpec{BlockKind::residual, 2, 4, Activation::relu}, true}};
    cfg.skip = SkipSpec{0, 0};
    cfg.validate();
    return cfg;
  }
  throw ConfigError("unknown network preset '" + std::string(name) + "'");
}

std::vector<std::string> preset_names() { return {"desk", "tiny", "gradcheck"}; }

}  // namespace heightnet
