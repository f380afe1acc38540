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

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fasd/frequency_state.hpp"
#include "fasd/grid.hpp"

namespace fasd::io {

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File exists but its content is unsupported, corrupt or truncated.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

// ---- images ----------------------------------------------------------

/// Reads an 8-bit RGB image (binary PPM P6 with maxval 255, or
/// non-interlaced 8-bit RGB PNG) into a 3xHxW grid of byte/255 values.
/// The format is chosen from the file's magic bytes.
Grid read_image(const std::filesystem::path& path);

/// Writes a 1- or 3-channel grid as 8-bit RGB. Values are clamped to [0,1]
/// and quantized with round(v*255); a single channel is replicated. The
/// format follows the extension: .ppm or .png.
void write_image(const Grid& image, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_ppm(const Grid& image);
Grid decode_ppm(const std::vector<std::uint8_t>& bytes);

/// round(clamp(v,0,1)*255).
std::uint8_t quantize(double v);

// ---- FBDS tensor container -------------------------------------------

inline constexpr std::uint32_t kContainerVersion = 1;

enum class DType : std::uint8_t { kF64 = 0, kF32 = 1, kU8 = 2 };
std::size_t dtype_size(DType d);
std::string to_string(DType d);

/// Named tensor with raw little-endian element bytes.
struct Tensor {
  std::string name;
  DType dtype = DType::kF64;
  std::vector<std::uint64_t> dims;
  std::vector<std::uint8_t> bytes;

  std::uint64_t element_count() const;

  /// f64 tensors hold the grid exactly; f32 and u8 narrow (u8 via quantize).
  static Tensor from_grid(std::string name, const Grid& g, DType dtype = DType::kF64);
  /// 1-D f64 tensor.
  static Tensor from_values(std::string name, const std::vector<double>& values);
  /// Converts back to doubles. Needs 3 dims for to_grid.
  Grid to_grid() const;
  std::vector<double> to_values() const;

  bool operator==(const Tensor&) const = default;
};

/// Layout:
///   "FBDS" | u32 version | u32 count |
///   count x { u32 name_len | name | u8 dtype | u32 ndim | ndim x u64 dim |
///             u64 byte_len | data }
/// All integers little-endian.
std::vector<std::uint8_t> encode_container(const std::vector<Tensor>& tensors);
std::vector<Tensor> decode_container(const std::vector<std::uint8_t>& bytes);

void write_container(const std::vector<Tensor>& tensors,
                     const std::filesystem::path& path);
std::vector<Tensor> read_container(const std::filesystem::path& path);

/// Looks a tensor up by name; throws FormatError if absent.
const Tensor& find_tensor(const std::vector<Tensor>& tensors, const std::string& name);

/// "<prefix>meta" (p, J, C, H, W) plus one f64 tensor per subband named
/// "<prefix><band name>".
void append_state(std::vector<Tensor>& out, const std::string& prefix,
                  const FrequencyState& state);
FrequencyState extract_state(const std::vector<Tensor>& tensors,
                             const std::string& prefix);

// ---- small file helpers ------------------------------------------------

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace fasd::io
