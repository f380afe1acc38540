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

#include "fasd/finite_diff.hpp"

#include <cmath>
#include <string>

namespace fasd {

Grid finite_diff_gradient(const ScalarFunction& f, const Grid& x, double h) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw std::invalid_argument("finite_diff_gradient: step must be positive");
  }
  Grid probe = x;
  Grid grad(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double plus = f(probe);
    probe[i] = saved - h;
    const double minus = f(probe);
    probe[i] = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw NonFiniteError("finite_diff_gradient: non-finite value at entry " +
                           std::to_string(i));
    }
    grad[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

}  // namespace fasd
