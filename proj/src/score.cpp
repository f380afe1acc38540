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

#include "fasd/score.hpp"

#include <cmath>

namespace fasd::score {

NoiseSchedule::NoiseSchedule(int steps, double beta_start, double beta_end)
    : steps_(steps) {
  if (steps < 2) throw std::invalid_argument("noise schedule needs >= 2 steps");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    throw std::invalid_argument("noise schedule betas must satisfy 0 < start <= end < 1");
  }
  alpha_bar_.resize(static_cast<std::size_t>(steps));
  double prod = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double beta =
        beta_start + (beta_end - beta_start) * (t - 1) / static_cast<double>(steps - 1);
    prod *= 1.0 - beta;
    alpha_bar_[t - 1] = prod;
  }
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 1 || t > steps_) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [1, " +
                            std::to_string(steps_) + "]");
  }
  return alpha_bar_[t - 1];
}

double NoiseSchedule::alpha(int t) const { return std::sqrt(alpha_bar(t)); }
double NoiseSchedule::sigma(int t) const { return std::sqrt(1.0 - alpha_bar(t)); }

std::string to_string(Weighting w) {
  return w == Weighting::kUnit ? "unit" : "sigma-squared";
}

Weighting parse_weighting(const std::string& name) {
  if (name == "unit") return Weighting::kUnit;
  if (name == "sigma-squared") return Weighting::kSigmaSquared;
  throw std::invalid_argument("unknown weighting '" + name + "'");
}

void GaussianPromptModel::add(const std::string& label, Grid mean, double std) {
  if (!(std >= 0.0) || !std::isfinite(std)) {
    throw std::invalid_argument("prompt '" + label + "': std must be >= 0");
  }
  if (!prompts_.empty()) {
    require_same_shape(prompts_.begin()->second.mean, mean, "GaussianPromptModel");
  }
  prompts_[label] = PromptDistribution{std::move(mean), std};
}

const PromptDistribution& GaussianPromptModel::at(const std::string& label) const {
  const auto it = prompts_.find(label);
  if (it == prompts_.end()) {
    throw UnknownLabelError("unknown prompt label '" + label + "'");
  }
  return it->second;
}

bool GaussianPromptModel::contains(const std::string& label) const {
  return prompts_.count(label) != 0;
}

double GaussianPromptModel::weight(int t, const NoiseSchedule& schedule) const {
  if (weighting_ == Weighting::kUnit) return 1.0;
  const double s = schedule.sigma(t);
  return s * s;
}

Grid optimal_eps(const Grid& z_t, int t, const NoiseSchedule& schedule,
                 const GaussianPromptModel& model, const std::string& label) {
  const PromptDistribution& p = model.at(label);
  require_same_shape(z_t, p.mean, "optimal_eps");
  const double a = schedule.alpha(t);
  const double s = schedule.sigma(t);
  const double scale = s / (a * a * p.std * p.std + s * s);
  Grid eps(z_t.shape());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    eps[i] = scale * (z_t[i] - a * p.mean[i]);
  }
  return eps;
}

namespace {

Grid noised(const Grid& z, const Grid& eps, double a, double s) {
  Grid out(z.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z[i] + s * eps[i];
  return out;
}

}  // namespace

Grid dds_gradient(const Grid& z_hat, const Grid& z_src, int t, const Grid& eps,
                  const NoiseSchedule& schedule, const GaussianPromptModel& model,
                  const std::string& src_label, const std::string& tgt_label,
                  bool shared_noise, Prng* fresh_noise) {
  require_same_shape(z_hat, z_src, "dds_gradient");
  require_same_shape(z_hat, eps, "dds_gradient");
  const double a = schedule.alpha(t);
  const double s = schedule.sigma(t);
  Grid eps_src;
  if (shared_noise) {
    eps_src = eps;
  } else {
    if (fresh_noise == nullptr) {
      throw std::invalid_argument("dds_gradient: independent noise needs a PRNG");
    }
    eps_src = sample_gaussian(*fresh_noise, eps.shape());
  }
  Grid g = optimal_eps(noised(z_hat, eps, a, s), t, schedule, model, tgt_label);
  g -= optimal_eps(noised(z_src, eps_src, a, s), t, schedule, model, src_label);
  g *= model.weight(t, schedule);
  return g;
}

Grid sds_gradient(const Grid& z_hat, int t, const Grid& eps,
                  const NoiseSchedule& schedule, const GaussianPromptModel& model,
                  const std::string& tgt_label) {
  require_same_shape(z_hat, eps, "sds_gradient");
  const double a = schedule.alpha(t);
  const double s = schedule.sigma(t);
  Grid g = optimal_eps(noised(z_hat, eps, a, s), t, schedule, model, tgt_label);
  g -= eps;
  g *= model.weight(t, schedule);
  return g;
}

int sample_timestep(std::uint64_t seed, long step, TimestepRange range) {
  if (range.t_min < 1 || range.t_max < range.t_min) {
    throw std::invalid_argument("invalid timestep range");
  }
  Prng prng = Prng::stream(seed, "timestep", static_cast<std::uint64_t>(step));
  return static_cast<int>(prng.uniform_int(range.t_min, range.t_max));
}

Grid sample_step_noise(std::uint64_t seed, long step, Shape shape,
                       const char* label) {
  Prng prng = Prng::stream(seed, label, static_cast<std::uint64_t>(step));
  return sample_gaussian(prng, shape);
}

AnalyticProvider::AnalyticProvider(GaussianPromptModel model,
                                   AnalyticProviderConfig config,
                                   NoiseSchedule schedule)
    : model_(std::move(model)), config_(std::move(config)), schedule_(schedule) {
  if (config_.timesteps.t_max > schedule_.steps()) {
    throw std::invalid_argument("timestep range exceeds the schedule length");
  }
  model_.at(config_.target_label);
  if (config_.mode == DistillationMode::kDds) model_.at(config_.source_label);
}

GradientResult AnalyticProvider::gradient(const GradientQuery& query) {
  const int t = sample_timestep(config_.seed, query.step, config_.timesteps);
  const Grid eps = sample_step_noise(config_.seed, query.step, query.current.shape());
  if (config_.mode == DistillationMode::kSds) {
    return {sds_gradient(query.current, t, eps, schedule_, model_,
                         config_.target_label),
            t};
  }
  Prng fresh = Prng::stream(config_.seed, "noise-source",
                            static_cast<std::uint64_t>(query.step));
  return {dds_gradient(query.current, query.source, t, eps, schedule_, model_,
                       config_.source_label, config_.target_label,
                       config_.shared_noise, &fresh),
          t};
}

RoundRobinProvider::RoundRobinProvider(std::vector<std::unique_ptr<GradientProvider>> providers)
    : providers_(std::move(providers)) {
  if (providers_.empty()) throw std::invalid_argument("RoundRobinProvider needs a provider");
}

GradientResult RoundRobinProvider::gradient(const GradientQuery& query) {
  if (query.step < 0) throw std::invalid_argument("RoundRobinProvider: negative step");
  return providers_[static_cast<std::size_t>(query.step) % providers_.size()]->gradient(query);
}

}  // namespace fasd::score
