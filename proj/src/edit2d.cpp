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

#include "fasd/edit2d.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "fasd/io.hpp"
#include "json.hpp"

namespace fasd {
namespace {

namespace fs = std::filesystem;

bool due(long step, long every, long last) {
  return every > 0 && (step % every == 0 || step == last);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string snapshot_dir_name(long step) {
  if (step < 0) return "snapshot_init";
  char buf[32];
  std::snprintf(buf, sizeof buf, "snapshot_%06ld", step);
  return buf;
}

std::string band_file_stem(std::string name) {
  for (char& c : name) {
    if (c == '/') c = '_';
  }
  return name;
}

}  // namespace

void EditConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("edit: steps must be >= 1");
  if (!(optimizer.step_size > 0.0)) {
    throw std::invalid_argument("edit: step size must be > 0");
  }
  if (levels < 1) throw std::invalid_argument("edit: levels must be >= 1");
  if (trace_every < 0 || snapshot_every < 0) {
    throw std::invalid_argument("edit: trace cadence must be >= 0");
  }
  resolved_policy().require_levels(static_cast<std::size_t>(levels));
}

FreezePolicy EditConfig::resolved_policy() const {
  if (policy.freeze_detail.empty() && !policy.freeze_low) return FreezePolicy::none(levels);
  return policy;
}

EditResult run_edit_2d(const Grid& z_src, const EditConfig& config,
                       score::GradientProvider& provider) {
  config.validate();
  const FreezePolicy policy = config.resolved_policy();
  FrequencyState state = decompose_latent(z_src, config.filter_index, config.levels);
  OptimizerState optimizer = make_subband_optimizer(config.optimizer, state);

  EditTrace trace;
  trace.levels = config.levels;
  for (std::size_t b = 0; b < state.band_count(); ++b) {
    trace.band_names.push_back(state.subbands.band_name(b));
    trace.frozen.push_back(policy.is_frozen(b));
  }
  if (config.snapshot_every > 0) trace.snapshots.push_back({-1, state});

  // Latents are rebuilt as z_src + IDWT(phi - phi_0). IDWT is linear, so
  // this equals IDWT(phi) while keeping untouched content exactly z_src.
  const FrequencyState initial = state;
  auto current_latent = [&]() {
    FrequencyState delta = state;
    delta.subbands += wavelet::Subbands2D(initial.subbands) *= -1.0;
    return z_src + reconstruct_latent(delta);
  };

  const long last = config.steps - 1;
  for (long k = 0; k < config.steps; ++k) {
    const Grid z_hat = current_latent();
    score::GradientResult res;
    try {
      res = provider.gradient({z_hat, z_src, k});
    } catch (const std::exception& e) {
      throw EditAborted("provider failed at step " + std::to_string(k) + ": " + e.what(),
                        k, std::move(trace));
    }
    if (res.gradient.shape() != z_hat.shape()) {
      throw EditAborted("provider returned gradient shape " + res.gradient.shape().str() +
                            " at step " + std::to_string(k) + ", expected " +
                            z_hat.shape().str(),
                        k, std::move(trace));
    }
    if (!res.gradient.all_finite()) {
      throw EditAborted("provider returned a non-finite gradient at step " +
                            std::to_string(k),
                        k, std::move(trace));
    }
    const wavelet::Subbands2D grads = route_gradient(state, res.gradient, policy);
    if (due(k, config.trace_every, last)) {
      TraceStep rec{k, res.timestep, {}};
      for (std::size_t b = 0; b < grads.band_count(); ++b) {
        rec.grad_l2.push_back(std::sqrt(squared_norm(grads.band(b))));
      }
      trace.steps.push_back(std::move(rec));
    }
    state = apply_update(state, grads, optimizer);
    if (config.snapshot_every > 0 &&
        ((k + 1) % config.snapshot_every == 0 || k == last)) {
      trace.snapshots.push_back({k, state});
    }
  }
  Grid z_out = current_latent();
  return {std::move(z_out), std::move(state), std::move(trace)};
}

std::string trace_csv(const EditTrace& trace) {
  std::ostringstream out;
  out << "step,level,orientation,grad_l2,frozen\n";
  for (const TraceStep& s : trace.steps) {
    for (std::size_t b = 0; b < s.grad_l2.size(); ++b) {
      int level = trace.levels;
      std::string orient = "LL";
      if (b > 0) {
        level = static_cast<int>((b - 1) / 3) + 1;
        orient = wavelet::to_string(wavelet::kOrientations[(b - 1) % 3]);
      }
      out << s.step << ',' << level << ',' << orient << ','
          << format_double(s.grad_l2[b]) << ','
          << (trace.frozen[b] ? "true" : "false") << '\n';
    }
  }
  return out.str();
}

BandImage band_image(const Grid& band) {
  BandImage out;
  out.min = band[0];
  out.max = band[0];
  for (double v : band.data()) {
    out.min = std::min(out.min, v);
    out.max = std::max(out.max, v);
  }
  const std::size_t h = band.height();
  const std::size_t w = band.width();
  out.image = Grid(1, h, band.channels() * w);
  const double range = out.max - out.min;
  for (std::size_t c = 0; c < band.channels(); ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        out.image(0, y, c * w + x) = range > 0.0 ? (band(c, y, x) - out.min) / range : 0.5;
      }
    }
  }
  return out;
}

Grid run_edit_spectral(const Grid& z_src, const SpectralEditConfig& config,
                       score::GradientProvider& provider) {
  if (config.steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (!(config.optimizer.step_size > 0.0)) throw std::invalid_argument("step size must be > 0");
  const auto mask = spectral::build_lowpass_mask(z_src.height(), z_src.width(), config.cutoff,
                                                 config.mask);
  OptimizerState opt(config.optimizer, 1);
  Grid z = z_src;
  for (long k = 0; k < config.steps; ++k) {
    const score::GradientResult res = provider.gradient({z, z_src, k});
    if (res.gradient.shape() != z.shape() || !res.gradient.all_finite()) {
      throw score::ProviderError("provider returned an invalid gradient at step " +
                                 std::to_string(k));
    }
    opt.step(0, z, spectral::masked_spectral_gradient(res.gradient, mask, config.transform,
                                                      config.keep));
  }
  return z;
}

void export_trace(const EditTrace& trace, const fs::path& dir, const std::string& image_ext) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io::IoError("cannot create '" + dir.string() + "': " + ec.message());
  io::write_text(dir / "trace.csv", trace_csv(trace));

  for (const TraceSnapshot& snap : trace.snapshots) {
    const fs::path sdir = dir / snapshot_dir_name(snap.step);
    fs::create_directories(sdir, ec);
    if (ec) throw io::IoError("cannot create '" + sdir.string() + "': " + ec.message());
    std::vector<io::Tensor> tensors;
    io::append_state(tensors, "", snap.state);
    io::write_container(tensors, sdir / "state.fbds");

    nlohmann::json bands = nlohmann::json::array();
    for (std::size_t b = 0; b < snap.state.band_count(); ++b) {
      const std::string name = snap.state.subbands.band_name(b);
      const std::string file = band_file_stem(name) + image_ext;
      const BandImage img = band_image(snap.state.subbands.band(b));
      io::write_image(img.image, sdir / file);
      bands.push_back({{"name", name}, {"file", file}, {"min", img.min}, {"max", img.max}});
    }
    const nlohmann::json meta = {{"step", snap.step}, {"bands", bands}};
    io::write_text(sdir / "bands.json", meta.dump(2) + "\n");
  }
}

}  // namespace fasd
