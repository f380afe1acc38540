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
#include <string>
#include <vector>

#include "fasd/grid.hpp"

namespace fasd {

enum class OptimizerKind { kSgd, kAdam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double step_size = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-parameter optimizer memory. Moments are allocated on first use.
struct OptimizerSlot {
  Grid m;
  Grid v;
  long step = 0;
};

/// One update of `param` in place.
///   SGD:  p <- p - lr * g
///   Adam: m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;
///         p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
void optimizer_step(const OptimizerConfig& config, OptimizerSlot& slot,
                    Grid& param, const Grid& grad);

/// Optimizer over a fixed, ordered list of parameters.
class OptimizerState {
 public:
  OptimizerState() = default;
  OptimizerState(OptimizerConfig config, std::size_t num_params)
      : config_(config), slots_(num_params) {}

  const OptimizerConfig& config() const { return config_; }
  std::size_t num_params() const { return slots_.size(); }
  const OptimizerSlot& slot(std::size_t i) const { return slots_.at(i); }

  void step(std::size_t index, Grid& param, const Grid& grad) {
    optimizer_step(config_, slots_.at(index), param, grad);
  }

 private:
  OptimizerConfig config_;
  std::vector<OptimizerSlot> slots_;
};

}  // namespace fasd
