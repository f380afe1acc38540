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

#include <functional>
#include <stdexcept>

#include "fasd/grid.hpp"

namespace fasd {

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ScalarFunction = std::function<double(const Grid&)>;

/// Central-difference gradient (f(x + h e_i) - f(x - h e_i)) / 2h for every
/// entry of x. Throws NonFiniteError if f returns NaN/Inf or h <= 0.
Grid finite_diff_gradient(const ScalarFunction& f, const Grid& x, double h);

}  // namespace fasd
