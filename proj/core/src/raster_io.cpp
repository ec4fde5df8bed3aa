#include "heightnet/raster_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "heightnet/error.hpp"
#include "heightnet/kv_config.hpp"

namespace heightnet {

namespace fs = std::filesystem;

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

namespace {

static_assert(std::endian::native == std::endian::little, "raster formats assume a little-endian host");

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

// Reads the next whitespace-delimited ASCII token of a PNM header, skipping
// '#' comments.
std::string pnm_token(const std::vector<std::uint8_t>& b, std::size_t& pos) {
  auto space = [](std::uint8_t ch) { return ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r'; };
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (space(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < b.size() && !space(b[pos])) tok.push_back(static_cast<char>(b[pos++]));
  return tok;
}

std::size_t pnm_number(const std::vector<std::uint8_t>& b, std::size_t& pos, const fs::path& path) {
  const std::string tok = pnm_token(b, pos);
  try {
    return static_cast<std::size_t>(parse_int(tok));
  } catch (const ConfigError&) {
    throw FormatError(path.string() + ": bad header field '" + tok + "'");
  }
}

std::string lower_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

}  // namespace

void write_height_raster(const fs::path& path, const HeightRaster& raster) {
  const Shape4& s = raster.height.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("write_height_raster: expected (1,1,H,W), got " + s.str());
  std::ostringstream head;
  head << "HNHEIGHT 1\n"
       << "rows " << s.h << "\n"
       << "cols " << s.w << "\n"
       << "height_min_m " << format_double(raster.meta.height_min_m) << "\n"
       << "height_max_m " << format_double(raster.meta.height_max_m) << "\n"
       << "ground_spacing_m " << format_double(raster.meta.ground_spacing_m) << "\n"
       << "flat " << (raster.meta.flat ? 1 : 0) << "\n"
       << "normalized " << (raster.normalized ? 1 : 0) << "\n"
       << "end\n";
  const std::string h = head.str();
  std::vector<std::uint8_t> bytes(h.begin(), h.end());
  const std::size_t payload = raster.height.size() * sizeof(float);
  bytes.resize(h.size() + payload);
  std::memcpy(bytes.data() + h.size(), raster.height.data(), payload);
  write_file_atomic(path, bytes);
}

HeightRaster read_height_raster(const fs::path& path) {
  const std::vector<std::uint8_t> b = read_file(path);
  std::size_t pos = 0;
  auto line = [&] {
    std::string out;
    while (pos < b.size() && b[pos] != '\n') out.push_back(static_cast<char>(b[pos++]));
    if (pos >= b.size()) throw FormatError(path.string() + ": truncated header");
    ++pos;
    return out;
  };
  if (line() != "HNHEIGHT 1") throw FormatError(path.string() + ": not a version-1 height raster");
  HeightRaster r;
  std::size_t rows = 0, cols = 0;
  for (std::string l = line(); l != "end"; l = line()) {
    const auto fields = split_whitespace(l);
    if (fields.size() != 2) throw FormatError(path.string() + ": bad header line '" + l + "'");
    const std::string& key = fields[0];
    const std::string& value = fields[1];
    try {
      if (key == "rows") rows = static_cast<std::size_t>(parse_int(value));
      else if (key == "cols") cols = static_cast<std::size_t>(parse_int(value));
      else if (key == "height_min_m") r.meta.height_min_m = parse_double(value);
      else if (key == "height_max_m") r.meta.height_max_m = parse_double(value);
      else if (key == "ground_spacing_m") r.meta.ground_spacing_m = parse_double(value);
      else if (key == "flat") r.meta.flat = parse_bool(value);
      else if (key == "normalized") r.normalized = parse_bool(value);
      else throw FormatError(path.string() + ": unknown header key '" + key + "'");
    } catch (const ConfigError& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  if (rows == 0 || cols == 0) throw FormatError(path.string() + ": missing rows/cols");
  const std::size_t payload = rows * cols * sizeof(float);
  if (b.size() - pos != payload) {
    throw FormatError(path.string() + ": expected " + std::to_string(payload) + " payload bytes, found " +
                      std::to_string(b.size() - pos));
  }
  r.height = Tensor4<float>(Shape4{1, 1, rows, cols});
  std::memcpy(r.height.data(), b.data() + pos, payload);
  require_finite(r.height, path.string().c_str());
  return r;
}

namespace {

Tensor4<float> rgb_from_interleaved(const std::uint8_t* px, std::size_t rows, std::size_t cols) {
  Tensor4<float> out(Shape4{1, 3, rows, cols});
  for (std::size_t y = 0; y < rows; ++y) {
    for (std::size_t x = 0; x < cols; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.at(0, c, y, x) = static_cast<float>(px[(y * cols + x) * 3 + c]) / 255.0f;
    }
  }
  return out;
}

std::vector<std::uint8_t> interleaved_from_rgb(const Tensor4<float>& image) {
  const Shape4& s = image.shape();
  if (s.n != 1 || s.c != 3) throw ShapeError("write_rgb: expected (1,3,H,W), got " + s.str());
  std::vector<std::uint8_t> px(s.h * s.w * 3);
  for (std::size_t y = 0; y < s.h; ++y) {
    for (std::size_t x = 0; x < s.w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(0, c, y, x), 0.0f, 1.0f);
        px[(y * s.w + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  return px;
}

Tensor4<float> read_png(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw FormatError(path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, px.data(), 0, nullptr)) {
    png_image_free(&img);
    throw FormatError(path.string() + ": " + img.message);
  }
  return rgb_from_interleaved(px.data(), img.height, img.width);
}

Tensor4<float> read_ppm(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  if (pnm_token(bytes, pos) != "P6") throw FormatError(path.string() + ": not a binary PPM (P6)");
  const std::size_t cols = pnm_number(bytes, pos, path);
  const std::size_t rows = pnm_number(bytes, pos, path);
  const std::size_t maxval = pnm_number(bytes, pos, path);
  if (maxval != 255) throw FormatError(path.string() + ": only 8-bit PPM is supported");
  ++pos;  // single whitespace byte before the raster
  if (rows == 0 || cols == 0 || bytes.size() < pos + rows * cols * 3) throw FormatError(path.string() + ": truncated");
  return rgb_from_interleaved(bytes.data() + pos, rows, cols);
}

}  // namespace

Tensor4<float> read_rgb(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  const std::string ext = lower_extension(path);
  if (ext == ".png") return read_png(path, bytes);
  if (ext == ".ppm") return read_ppm(path, bytes);
  throw FormatError(path.string() + ": unsupported image extension (use .png or .ppm)");
}

void write_rgb(const fs::path& path, const Tensor4<float>& image) {
  const std::vector<std::uint8_t> px = interleaved_from_rgb(image);
  const std::size_t rows = image.shape().h, cols = image.shape().w;
  const std::string ext = lower_extension(path);
  if (ext == ".ppm") {
    const std::string head = "P6\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
    std::vector<std::uint8_t> bytes(head.begin(), head.end());
    bytes.insert(bytes.end(), px.begin(), px.end());
    write_file_atomic(path, bytes);
    return;
  }
  if (ext != ".png") throw FormatError(path.string() + ": unsupported image extension (use .png or .ppm)");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(cols);
  img.height = static_cast<png_uint_32>(rows);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, px.data(), 0, nullptr)) {
    throw FormatError(path.string() + ": " + img.message);
  }
  std::vector<std::uint8_t> bytes(size);
  if (!png_image_write_to_memory(&img, bytes.data(), &size, 0, px.data(), 0, nullptr)) {
    throw FormatError(path.string() + ": " + img.message);
  }
  bytes.resize(size);
  write_file_atomic(path, bytes);
}

void write_pgm8(const fs::path& path, std::span<const double> values, std::size_t rows, std::size_t cols, double lo,
                double hi) {
  if (values.size() != rows * cols) throw ShapeError("write_pgm8: value count does not match shape");
  const std::string head = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
  std::vector<std::uint8_t> bytes(head.begin(), head.end());
  const double span = hi > lo ? hi - lo : 1.0;
  for (double v : values) {
    const double t = std::clamp((v - lo) / span, 0.0, 1.0);
    bytes.push_back(static_cast<std::uint8_t>(std::lround(t * 255.0)));
  }
  write_file_atomic(path, bytes);
}

void write_pgm16(const fs::path& path, std::span<const std::uint32_t> values, std::size_t rows, std::size_t cols) {
  if (values.size() != rows * cols) throw ShapeError("write_pgm16: value count does not match shape");
  const std::string head = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n65535\n";
  std::vector<std::uint8_t> bytes(head.begin(), head.end());
  for (std::uint32_t v : values) {
    if (v > 65535) throw FormatError(path.string() + ": label " + std::to_string(v) + " exceeds 16 bits");
    bytes.push_back(static_cast<std::uint8_t>(v >> 8));
    bytes.push_back(static_cast<std::uint8_t>(v & 0xff));
  }
  write_file_atomic(path, bytes);
}

std::vector<std::uint32_t> read_pgm16(const fs::path& path, std::size_t& rows, std::size_t& cols) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  std::size_t pos = 0;
  if (pnm_token(bytes, pos) != "P5") throw FormatError(path.string() + ": not a binary PGM (P5)");
  cols = pnm_number(bytes, pos, path);
  rows = pnm_number(bytes, pos, path);
  if (pnm_number(bytes, pos, path) != 65535) throw FormatError(path.string() + ": not a 16-bit PGM");
  ++pos;
  if (bytes.size() < pos + rows * cols * 2) throw FormatError(path.string() + ": truncated");
  std::vector<std::uint32_t> out(rows * cols);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (std::uint32_t{bytes[pos + 2 * i]} << 8) | bytes[pos + 2 * i + 1];
  return out;
}

}  // namespace heightnet
