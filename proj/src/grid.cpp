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

#include "fasd/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace fasd {

std::string Shape::str() const {
  return std::to_string(channels) + "x" + std::to_string(height) + "x" +
         std::to_string(width);
}

Grid::Grid(std::size_t channels, std::size_t height, std::size_t width,
           double fill)
    : Grid(Shape{channels, height, width}, fill) {}

Grid::Grid(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {
  if (shape.channels == 0 || shape.height == 0 || shape.width == 0) {
    throw ShapeError("grid dimensions must be positive, got " + shape.str());
  }
}

Grid::Grid(Shape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  if (shape.channels == 0 || shape.height == 0 || shape.width == 0) {
    throw ShapeError("grid dimensions must be positive, got " + shape.str());
  }
  if (data_.size() != shape_.size()) {
    throw ShapeError("grid data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
  }
}

std::span<double> Grid::channel(std::size_t c) {
  const std::size_t plane = shape_.height * shape_.width;
  return std::span<double>(data_).subspan(c * plane, plane);
}

std::span<const double> Grid::channel(std::size_t c) const {
  const std::size_t plane = shape_.height * shape_.width;
  return std::span<const double>(data_).subspan(c * plane, plane);
}

Grid& Grid::operator+=(const Grid& other) {
  require_same_shape(*this, other, "grid +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Grid& Grid::operator-=(const Grid& other) {
  require_same_shape(*this, other, "grid -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Grid& Grid::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

void Grid::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Grid::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

bool Grid::bit_equal(const Grid& other) const {
  if (shape_ != other.shape_) return false;
  if (data_.empty()) return true;
  return std::memcmp(data_.data(), other.data_.data(),
                     data_.size() * sizeof(double)) == 0;
}

Grid operator+(Grid a, const Grid& b) { return a += b; }
Grid operator-(Grid a, const Grid& b) { return a -= b; }
Grid operator*(double s, Grid a) { return a *= s; }

void require_same_shape(const Grid& a, const Grid& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() +
                     " vs " + b.shape().str());
  }
}

double inner_product(const Grid& a, const Grid& b) {
  require_same_shape(a, b, "inner_product");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double squared_norm(const Grid& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v * v;
  return acc;
}

double max_abs(const Grid& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Grid& a, const Grid& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

double mean(const Grid& a) {
  if (a.empty()) return 0.0;
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return acc / static_cast<double>(a.size());
}

void axpy(double s, const Grid& b, Grid& a) {
  require_same_shape(a, b, "axpy");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
}

}  // namespace fasd
