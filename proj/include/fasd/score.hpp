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

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "fasd/grid.hpp"
#include "fasd/prng.hpp"

namespace fasd::score {

/// Base for every failure a gradient provider can surface.
class ProviderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownLabelError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

/// DDPM linear-beta schedule over t = 1..T.
///   beta_t = beta_start + (beta_end - beta_start) (t-1)/(T-1)
///   alpha_bar_t = prod_{s<=t} (1 - beta_s)
///   alpha_t = sqrt(alpha_bar_t), sigma_t = sqrt(1 - alpha_bar_t)
class NoiseSchedule {
 public:
  explicit NoiseSchedule(int steps = 1000, double beta_start = 1e-4,
                         double beta_end = 0.02);

  int steps() const { return steps_; }
  double alpha_bar(int t) const;
  double alpha(int t) const;
  double sigma(int t) const;

 private:
  int steps_;
  std::vector<double> alpha_bar_;
};

enum class Weighting { kUnit, kSigmaSquared };
std::string to_string(Weighting w);
Weighting parse_weighting(const std::string& name);

/// Data distribution N(mean, std^2 I) for one prompt.
struct PromptDistribution {
  Grid mean;
  double std = 0.0;
};

/// Closed-form stand-in for a text-conditioned denoiser: each label is a
/// Gaussian data distribution whose MMSE noise predictor is known exactly.
class GaussianPromptModel {
 public:
  GaussianPromptModel() = default;
  explicit GaussianPromptModel(Weighting weighting) : weighting_(weighting) {}

  void add(const std::string& label, Grid mean, double std);
  const PromptDistribution& at(const std::string& label) const;
  bool contains(const std::string& label) const;

  Weighting weighting() const { return weighting_; }
  double weight(int t, const NoiseSchedule& schedule) const;

 private:
  Weighting weighting_ = Weighting::kUnit;
  std::map<std::string, PromptDistribution> prompts_;
};

/// eps*(z_t, t) = sigma_t (z_t - alpha_t mu) / (alpha_t^2 s^2 + sigma_t^2)
Grid optimal_eps(const Grid& z_t, int t, const NoiseSchedule& schedule,
                 const GaussianPromptModel& model, const std::string& label);

/// Delta-denoising gradient
///   w(t) (eps*(a z_hat + s eps_tgt; tgt) - eps*(a z_src + s eps_src; src)).
/// With `shared_noise` both branches use `eps`; otherwise the source branch
/// draws fresh noise from `fresh_noise`, which must then be non-null.
Grid dds_gradient(const Grid& z_hat, const Grid& z_src, int t, const Grid& eps,
                  const NoiseSchedule& schedule, const GaussianPromptModel& model,
                  const std::string& src_label, const std::string& tgt_label,
                  bool shared_noise, Prng* fresh_noise = nullptr);

/// Score-distillation gradient w(t) (eps*(a z_hat + s eps; tgt) - eps).
Grid sds_gradient(const Grid& z_hat, int t, const Grid& eps,
                  const NoiseSchedule& schedule, const GaussianPromptModel& model,
                  const std::string& tgt_label);

/// What an editing loop asks for at every step.
struct GradientQuery {
  const Grid& current;  // z_hat, or the rendered image for texture editing
  const Grid& source;   // z_src; ignored by SDS providers
  long step = 0;
};

struct GradientResult {
  Grid gradient;
  int timestep = 0;
};

class GradientProvider {
 public:
  virtual ~GradientProvider() = default;
  virtual GradientResult gradient(const GradientQuery& query) = 0;
};

/// Timestep range for per-step uniform sampling (inclusive).
struct TimestepRange {
  int t_min = 50;
  int t_max = 950;
};

/// Draws the timestep for `step` from its own sub-stream of `seed`.
int sample_timestep(std::uint64_t seed, long step, TimestepRange range);
/// Draws the forward-process noise for `step` from its own sub-stream.
Grid sample_step_noise(std::uint64_t seed, long step, Shape shape,
                       const char* label = "noise");

enum class DistillationMode { kDds, kSds };

struct AnalyticProviderConfig {
  DistillationMode mode = DistillationMode::kDds;
  bool shared_noise = true;
  std::string source_label = "source";
  std::string target_label = "target";
  TimestepRange timesteps;
  std::uint64_t seed = 0;
};

/// Gradient provider backed by GaussianPromptModel.
class AnalyticProvider : public GradientProvider {
 public:
  AnalyticProvider(GaussianPromptModel model, AnalyticProviderConfig config,
                   NoiseSchedule schedule = NoiseSchedule());
  GradientResult gradient(const GradientQuery& query) override;

  const NoiseSchedule& schedule() const { return schedule_; }
  const GaussianPromptModel& model() const { return model_; }

 private:
  GaussianPromptModel model_;
  AnalyticProviderConfig config_;
  NoiseSchedule schedule_;
};

/// Always returns an exact zero gradient.
class ZeroProvider : public GradientProvider {
 public:
  GradientResult gradient(const GradientQuery& query) override {
    return {Grid(query.current.shape()), 0};
  }
};

/// Sends step k to providers[k mod n]; used to give every camera view its
/// own prompt model.
class RoundRobinProvider : public GradientProvider {
 public:
  explicit RoundRobinProvider(std::vector<std::unique_ptr<GradientProvider>> providers);
  GradientResult gradient(const GradientQuery& query) override;

 private:
  std::vector<std::unique_ptr<GradientProvider>> providers_;
};

}  // namespace fasd::score
