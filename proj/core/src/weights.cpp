#include "heightnet/weights.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <set>

#include "heightnet/error.hpp"
#include "heightnet/raster_io.hpp"

namespace heightnet {

namespace {

constexpr char kMagic[4] = {'H', 'N', 'W', 'T'};
constexpr const char* kOptimizerPrefix = "optimizer.";

class Writer {
 public:
  template <typename U>
  void put(U v) {
    std::uint8_t b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    bytes.insert(bytes.end(), b, b + sizeof(U));
  }
  void put_bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> b, const std::string& source) : b_(b), source_(source) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, b_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto out = b_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t pos() const noexcept { return pos_; }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw FormatError(source_ + ": truncated weight file");
  }
  std::span<const std::uint8_t> b_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u8: return 1;
  }
  return 0;
}

std::uint32_t crc(std::span<const std::uint8_t> b) {
  uLong c = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in pieces.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < b.size(); off += kChunk) {
    const std::size_t n = std::min(kChunk, b.size() - off);
    c = crc32(c, b.data() + off, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(c);
}

template <typename U>
WeightEntry make_entry(std::string name, DType dtype, std::vector<std::uint32_t> dims, std::span<const U> values) {
  WeightEntry e{std::move(name), dtype, std::move(dims), {}};
  e.payload.resize(values.size_bytes());
  std::memcpy(e.payload.data(), values.data(), values.size_bytes());
  return e;
}

template <typename U>
std::vector<U> entry_values(const WeightEntry& e) {
  std::vector<U> out(e.payload.size() / sizeof(U));
  std::memcpy(out.data(), e.payload.data(), out.size() * sizeof(U));
  return out;
}

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

}  // namespace

const WeightEntry* WeightFile::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode_weight_file(const WeightFile& file) {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(WeightFile::kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(file.entries.size()));
  for (const WeightEntry& e : file.entries) {
    if (e.name.size() > 0xffff) throw FormatError("weight entry name too long: " + e.name.substr(0, 32) + "...");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.put_bytes(e.name.data(), e.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.dtype));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.dims.size()));
    for (std::uint32_t d : e.dims) w.put<std::uint32_t>(d);
    w.put<std::uint64_t>(e.payload.size());
    w.put_bytes(e.payload.data(), e.payload.size());
  }
  w.put<std::uint32_t>(crc(w.bytes));
  return std::move(w.bytes);
}

WeightFile decode_weight_file(std::span<const std::uint8_t> bytes, const std::string& source) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(source + ": not a weight file (bad magic)");
  }
  Reader r(bytes, source);
  r.take(4);
  const auto version = r.get<std::uint32_t>();
  if (version != WeightFile::kVersion) {
    throw FormatError(source + ": unsupported weight file version " + std::to_string(version) + " (expected " +
                      std::to_string(WeightFile::kVersion) + ")");
  }
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  if (crc(bytes.first(bytes.size() - 4)) != stored_crc) throw FormatError(source + ": checksum mismatch");

  Reader body(bytes.first(bytes.size() - 4), source);
  body.take(8);
  const auto count = body.get<std::uint32_t>();
  WeightFile file;
  for (std::uint32_t i = 0; i < count; ++i) {
    WeightEntry e;
    const auto name_len = body.get<std::uint16_t>();
    const auto name = body.take(name_len);
    e.name.assign(name.begin(), name.end());
    const auto dtype = body.get<std::uint8_t>();
    if (dtype < 1 || dtype > 3) throw FormatError(source + ": entry " + e.name + " has unknown dtype");
    e.dtype = static_cast<DType>(dtype);
    const auto rank = body.get<std::uint8_t>();
    std::uint64_t elements = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      e.dims.push_back(body.get<std::uint32_t>());
      elements *= e.dims.back();
    }
    const auto size = body.get<std::uint64_t>();
    if (size != elements * dtype_size(e.dtype)) {
      throw FormatError(source + ": entry " + e.name + " payload size does not match its shape");
    }
    const auto payload = body.take(size);
    e.payload.assign(payload.begin(), payload.end());
    file.entries.push_back(std::move(e));
  }
  if (body.pos() != bytes.size() - 4) throw FormatError(source + ": trailing bytes after entry table");
  return file;
}

void write_weight_file(const std::filesystem::path& path, const WeightFile& file) {
  write_file_atomic(path, encode_weight_file(file));
}

WeightFile read_weight_file(const std::filesystem::path& path) {
  return decode_weight_file(read_file(path), path.string());
}

WeightFile to_weight_file(const Network<float>& net, const OptimizerState* optimizer) {
  WeightFile file;
  const std::string text = net.config().to_text();
  file.entries.push_back(make_entry<char>("config", DType::u8, {static_cast<std::uint32_t>(text.size())},
                                          std::span<const char>(text.data(), text.size())));
  for (const auto& p : net.parameters()) {
    const Shape4& s = p.tensor->shape();
    file.entries.push_back(make_entry<float>(p.name, DType::f32,
                                             {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                                              static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)},
                                             p.tensor->values()));
  }
  if (optimizer != nullptr) {
    const NadamParams& hp = optimizer->params;
    const std::vector<double> scalars{hp.learning_rate, hp.beta1,
                                      hp.beta2,         hp.epsilon,
                                      hp.schedule_decay, static_cast<double>(optimizer->t),
                                      optimizer->m_schedule};
    file.entries.push_back(make_entry<double>("optimizer.scalars", DType::f64,
                                              {static_cast<std::uint32_t>(scalars.size())}, scalars));
    for (const auto& [name, slot] : optimizer->slots) {
      const auto n = static_cast<std::uint32_t>(slot.m.size());
      file.entries.push_back(make_entry<double>("optimizer.m/" + name, DType::f64, {n}, slot.m));
      file.entries.push_back(make_entry<double>("optimizer.v/" + name, DType::f64, {n}, slot.v));
    }
  }
  return file;
}

void save_weights(const Network<float>& net, const std::filesystem::path& path, const OptimizerState* optimizer) {
  write_weight_file(path, to_weight_file(net, optimizer));
}

void load_weights_into(Network<float>& net, const WeightFile& file) {
  std::vector<std::string> missing, wrong_shape, unexpected;
  std::set<std::string> known;
  auto params = net.parameters();
  for (auto& p : params) {
    known.insert(p.name);
    const WeightEntry* e = file.find(p.name);
    if (e == nullptr) {
      missing.push_back(p.name);
      continue;
    }
    const Shape4& s = p.tensor->shape();
    const std::vector<std::uint32_t> want{static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                                          static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
    if (e->dtype != DType::f32 || e->dims != want) wrong_shape.push_back(p.name);
  }
  for (const auto& e : file.entries) {
    if (e.name == "config" || e.name.starts_with(kOptimizerPrefix)) continue;
    if (!known.contains(e.name)) unexpected.push_back(e.name);
  }
  if (!missing.empty() || !wrong_shape.empty() || !unexpected.empty()) {
    std::string msg = "weight file does not match the network";
    if (!missing.empty()) msg += "; missing: " + join(missing);
    if (!unexpected.empty()) msg += "; unexpected: " + join(unexpected);
    if (!wrong_shape.empty()) msg += "; wrong shape: " + join(wrong_shape);
    throw FormatError(msg);
  }
  for (auto& p : params) {
    const std::vector<float> v = entry_values<float>(*file.find(p.name));
    std::copy(v.begin(), v.end(), p.tensor->values().begin());
    require_finite(*p.tensor, p.name.c_str());
  }
}

void load_weights_into(Network<float>& net, const std::filesystem::path& path) {
  load_weights_into(net, read_weight_file(path));
}

Network<float> load_weights(const std::filesystem::path& path) {
  const WeightFile file = read_weight_file(path);
  const WeightEntry* cfg = file.find("config");
  if (cfg == nullptr || cfg->dtype != DType::u8) throw FormatError(path.string() + ": no embedded network config");
  const std::string text(cfg->payload.begin(), cfg->payload.end());
  Network<float> net = Network<float>::build(NetworkConfig::parse_text(text));
  load_weights_into(net, file);
  return net;
}

std::optional<OptimizerState> load_optimizer_state(const WeightFile& file) {
  const WeightEntry* s = file.find("optimizer.scalars");
  if (s == nullptr) return std::nullopt;
  const std::vector<double> v = entry_values<double>(*s);
  if (v.size() != 7 || s->dtype != DType::f64) throw FormatError("optimizer.scalars: malformed");
  OptimizerState state;
  state.params = NadamParams{v[0], v[1], v[2], v[3], v[4]};
  state.t = static_cast<std::uint64_t>(v[5]);
  state.m_schedule = v[6];
  for (const auto& e : file.entries) {
    if (!e.name.starts_with("optimizer.m/")) continue;
    const std::string name = e.name.substr(12);
    const WeightEntry* ve = file.find("optimizer.v/" + name);
    if (ve == nullptr || e.dtype != DType::f64 || ve->dtype != DType::f64) {
      throw FormatError("optimizer moments for " + name + " are incomplete");
    }
    state.slots[name] = MomentSlot{entry_values<double>(e), entry_values<double>(*ve)};
  }
  return state;
}

}  // namespace heightnet
