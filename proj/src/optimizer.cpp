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

#include "fasd/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace fasd {

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

void optimizer_step(const OptimizerConfig& config, OptimizerSlot& slot,
                    Grid& param, const Grid& grad) {
  require_same_shape(param, grad, "optimizer_step");
  const double lr = config.step_size;
  if (config.kind == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
    return;
  }

  if (slot.m.shape() != param.shape()) {
    slot.m = Grid(param.shape());
    slot.v = Grid(param.shape());
    slot.step = 0;
  }
  ++slot.step;
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(slot.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(slot.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * g;
    slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * g * g;
    const double m_hat = slot.m[i] / c1;
    const double v_hat = slot.v[i] / c2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

}  // namespace fasd
