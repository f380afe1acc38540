// Copyright 2026 The fasd Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fasd/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace fasd::io {
namespace {

namespace fs = std::filesystem;

constexpr std::uint8_t kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

bool is_png(const std::vector<std::uint8_t>& b) {
  return b.size() >= 8 && std::memcmp(b.data(), kPngMagic, 8) == 0;
}

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
         (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

Grid from_rgb_bytes(const std::uint8_t* rgb, std::size_t h, std::size_t w) {
  Grid g(3, h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        g(c, y, x) = rgb[(y * w + x) * 3 + c] / 255.0;
      }
    }
  }
  return g;
}

std::vector<std::uint8_t> to_rgb_bytes(const Grid& image) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw ShapeError("images need 1 or 3 channels, got " + image.shape().str());
  }
  const std::size_t h = image.height();
  const std::size_t w = image.width();
  std::vector<std::uint8_t> rgb(h * w * 3);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t src_c = image.channels() == 3 ? c : 0;
        rgb[(y * w + x) * 3 + c] = quantize(image(src_c, y, x));
      }
    }
  }
  return rgb;
}

Grid decode_png(const std::vector<std::uint8_t>& bytes) {
  // IHDR sits at a fixed offset: width, height, depth, colour type, ...,
  // interlace.
  if (bytes.size() < 33) throw FormatError("truncated PNG header");
  const std::uint8_t* ihdr = bytes.data() + 16;
  const int depth = ihdr[8];
  const int color_type = ihdr[9];
  const int interlace = ihdr[12];
  if (depth != 8 || color_type != 2) {
    throw FormatError("unsupported PNG: need 8-bit RGB, got depth " +
                      std::to_string(depth) + " colour type " +
                      std::to_string(color_type));
  }
  if (interlace != 0) throw FormatError("unsupported PNG: interlaced");
  if (be32(ihdr) == 0 || be32(ihdr + 4) == 0) throw FormatError("empty PNG");

  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw FormatError(std::string("PNG decode failed: ") + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, rgb.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw FormatError("PNG decode failed: " + msg);
  }
  return from_rgb_bytes(rgb.data(), img.height, img.width);
}

std::vector<std::uint8_t> encode_png(const Grid& image) {
  const auto rgb = to_rgb_bytes(image);
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width());
  img.height = static_cast<png_uint_32>(image.height());
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(img, size, 0, rgb.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, rgb.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

// ---- little-endian byte stream -----------------------------------------

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("truncated container");
  }
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{in_[pos_++]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{in_[pos_++]} << (8 * i);
    return v;
  }
  std::vector<std::uint8_t> raw(std::uint64_t n) {
    if (n > in_.size() - pos_) throw FormatError("truncated container");
    std::vector<std::uint8_t> out(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

template <typename U>
void put_le(std::vector<std::uint8_t>& out, std::size_t index, U bits) {
  for (std::size_t b = 0; b < sizeof(U); ++b) {
    out[index * sizeof(U) + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
}

template <typename U>
U get_le(const std::vector<std::uint8_t>& in, std::size_t index) {
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) {
    bits |= static_cast<U>(in[index * sizeof(U) + b]) << (8 * b);
  }
  return bits;
}

}  // namespace

std::uint8_t quantize(double v) {
  if (!(v > 0.0)) return 0;  // also maps NaN to 0
  if (v >= 1.0) return 255;
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

std::vector<std::uint8_t> encode_ppm(const Grid& image) {
  const auto rgb = to_rgb_bytes(image);
  const std::string header = "P6\n" + std::to_string(image.width()) + " " +
                             std::to_string(image.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), rgb.begin(), rgb.end());
  return out;
}

Grid decode_ppm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw FormatError("not a PPM file");
  if (bytes[1] != '6') {
    throw FormatError(std::string("unsupported PNM variant P") +
                      static_cast<char>(bytes[1]) + " (only binary RGB P6)");
  }
  std::size_t pos = 2;
  auto next_int = [&]() -> std::uint64_t {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
      throw FormatError("malformed PPM header");
    }
    std::uint64_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > (1u << 24)) throw FormatError("PPM dimension too large");
    }
    return v;
  };
  const auto w = next_int();
  const auto h = next_int();
  const auto maxval = next_int();
  if (w == 0 || h == 0) throw FormatError("empty PPM image");
  if (maxval != 255) {
    throw FormatError("unsupported PPM maxval " + std::to_string(maxval));
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw FormatError("malformed PPM header");
  }
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w * h * 3);
  if (bytes.size() - pos < need) throw FormatError("truncated PPM data");
  return from_rgb_bytes(bytes.data() + pos, h, w);
}

Grid read_image(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    if (is_png(bytes)) return decode_png(bytes);
    return decode_ppm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_image(const Grid& image, const fs::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".ppm") {
    write_file(path, encode_ppm(image));
  } else if (ext == ".png") {
    write_file(path, encode_png(image));
  } else {
    throw FormatError(path.string() + ": unknown image extension (use .ppm or .png)");
  }
}

// ---- container ----------------------------------------------------------

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::kF64: return 8;
    case DType::kF32: return 4;
    case DType::kU8: return 1;
  }
  throw FormatError("unknown dtype tag");
}

std::string to_string(DType d) {
  switch (d) {
    case DType::kF64: return "f64";
    case DType::kF32: return "f32";
    case DType::kU8: return "u8";
  }
  return "?";
}

std::uint64_t Tensor::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

Tensor Tensor::from_grid(std::string name, const Grid& g, DType dtype) {
  Tensor t;
  t.name = std::move(name);
  t.dtype = dtype;
  t.dims = {g.channels(), g.height(), g.width()};
  t.bytes.resize(g.size() * dtype_size(dtype));
  for (std::size_t i = 0; i < g.size(); ++i) {
    switch (dtype) {
      case DType::kF64: put_le(t.bytes, i, std::bit_cast<std::uint64_t>(g[i])); break;
      case DType::kF32:
        put_le(t.bytes, i, std::bit_cast<std::uint32_t>(static_cast<float>(g[i])));
        break;
      case DType::kU8: t.bytes[i] = quantize(g[i]); break;
    }
  }
  return t;
}

Tensor Tensor::from_values(std::string name, const std::vector<double>& values) {
  Tensor t;
  t.name = std::move(name);
  t.dims = {values.size()};
  t.bytes.resize(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    put_le(t.bytes, i, std::bit_cast<std::uint64_t>(values[i]));
  }
  return t;
}

std::vector<double> Tensor::to_values() const {
  const std::size_t n = element_count();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (dtype) {
      case DType::kF64: out[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, i)); break;
      case DType::kF32:
        out[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, i));
        break;
      case DType::kU8: out[i] = bytes[i] / 255.0; break;
    }
  }
  return out;
}

Grid Tensor::to_grid() const {
  if (dims.size() != 3) {
    throw FormatError("tensor '" + name + "' has " + std::to_string(dims.size()) +
                      " dims, expected 3");
  }
  return Grid(Shape{dims[0], dims[1], dims[2]}, to_values());
}

std::vector<std::uint8_t> encode_container(const std::vector<Tensor>& tensors) {
  Writer w;
  w.raw("FBDS", 4);
  w.u32(kContainerVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const Tensor& t : tensors) {
    if (t.bytes.size() != t.element_count() * dtype_size(t.dtype)) {
      throw FormatError("tensor '" + t.name + "': byte length does not match dims");
    }
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.raw(t.name.data(), t.name.size());
    w.u8(static_cast<std::uint8_t>(t.dtype));
    w.u32(static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) w.u64(d);
    w.u64(t.bytes.size());
    w.raw(t.bytes.data(), t.bytes.size());
  }
  return w.take();
}

std::vector<Tensor> decode_container(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const auto magic = r.raw(4);
  if (std::memcmp(magic.data(), "FBDS", 4) != 0) throw FormatError("bad container magic");
  const auto version = r.u32();
  if (version != kContainerVersion) {
    throw FormatError("unsupported container version " + std::to_string(version));
  }
  const auto count = r.u32();
  std::vector<Tensor> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    Tensor t;
    const auto name = r.raw(r.u32());
    t.name.assign(name.begin(), name.end());
    const auto tag = r.u8();
    if (tag > 2) throw FormatError("unknown dtype tag " + std::to_string(tag));
    t.dtype = static_cast<DType>(tag);
    const auto ndim = r.u32();
    if (ndim > 8) throw FormatError("tensor '" + t.name + "': too many dims");
    for (std::uint32_t d = 0; d < ndim; ++d) t.dims.push_back(r.u64());
    const auto len = r.u64();
    const std::uint64_t count_el = t.element_count();
    if (count_el > std::numeric_limits<std::uint64_t>::max() / 8 ||
        len != count_el * dtype_size(t.dtype)) {
      throw FormatError("tensor '" + t.name + "': byte length does not match dims");
    }
    t.bytes = r.raw(len);
    out.push_back(std::move(t));
  }
  if (!r.done()) throw FormatError("trailing bytes after container");
  return out;
}

void write_container(const std::vector<Tensor>& tensors, const fs::path& path) {
  write_file(path, encode_container(tensors));
}

std::vector<Tensor> read_container(const fs::path& path) {
  try {
    return decode_container(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

const Tensor& find_tensor(const std::vector<Tensor>& tensors, const std::string& name) {
  for (const Tensor& t : tensors) {
    if (t.name == name) return t;
  }
  throw FormatError("container has no tensor '" + name + "'");
}

void append_state(std::vector<Tensor>& out, const std::string& prefix,
                  const FrequencyState& state) {
  const Shape& s = state.latent_shape;
  out.push_back(Tensor::from_values(
      prefix + "meta",
      {static_cast<double>(state.filter_index), static_cast<double>(state.levels),
       static_cast<double>(s.channels), static_cast<double>(s.height),
       static_cast<double>(s.width)}));
  for (std::size_t b = 0; b < state.band_count(); ++b) {
    out.push_back(Tensor::from_grid(prefix + state.subbands.band_name(b),
                                    state.subbands.band(b)));
  }
}

FrequencyState extract_state(const std::vector<Tensor>& tensors, const std::string& prefix) {
  const auto meta = find_tensor(tensors, prefix + "meta").to_values();
  if (meta.size() != 5) throw FormatError("state meta must have 5 entries");
  FrequencyState st;
  st.filter_index = static_cast<int>(meta[0]);
  st.levels = static_cast<int>(meta[1]);
  st.latent_shape = Shape{static_cast<std::size_t>(meta[2]),
                          static_cast<std::size_t>(meta[3]),
                          static_cast<std::size_t>(meta[4])};
  st.subbands = wavelet::Subbands2D::zeros_like(
      decompose_latent(Grid(st.latent_shape), st.filter_index, st.levels).subbands);
  for (std::size_t b = 0; b < st.band_count(); ++b) {
    Grid g = find_tensor(tensors, prefix + st.subbands.band_name(b)).to_grid();
    if (g.shape() != st.subbands.band(b).shape()) {
      throw FormatError("band '" + prefix + st.subbands.band_name(b) +
                        "' has shape " + g.shape().str());
    }
    st.subbands.band(b) = std::move(g);
  }
  return st;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> out((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return out;
}

void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace fasd::io
