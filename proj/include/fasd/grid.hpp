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

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fasd {

/// Raised when two grids (or a grid and a request) disagree on shape.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Shape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return channels * height * width; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// C x H x W array of doubles, channel-major then row-major:
/// index = c*H*W + y*W + x.
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t channels, std::size_t height, std::size_t width,
       double fill = 0.0);
  explicit Grid(Shape shape, double fill = 0.0);
  Grid(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }
  double operator()(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> channel(std::size_t c);
  std::span<const double> channel(std::size_t c) const;

  const std::vector<double>& values() const { return data_; }

  Grid& operator+=(const Grid& other);
  Grid& operator-=(const Grid& other);
  Grid& operator*=(double s);

  void fill(double v);
  bool all_finite() const;

  /// Bitwise equality of shape and every entry.
  bool bit_equal(const Grid& other) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

Grid operator+(Grid a, const Grid& b);
Grid operator-(Grid a, const Grid& b);
Grid operator*(double s, Grid a);

void require_same_shape(const Grid& a, const Grid& b, const char* what);

/// Sum of a_i * b_i, accumulated sequentially in index order.
double inner_product(const Grid& a, const Grid& b);

double squared_norm(const Grid& a);
double max_abs(const Grid& a);
double max_abs_diff(const Grid& a, const Grid& b);
double mean(const Grid& a);

/// a += s * b
void axpy(double s, const Grid& b, Grid& a);

}  // namespace fasd
