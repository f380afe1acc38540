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

#include <fstream>

#include "doctest.h"
#include "fasd/edit2d.hpp"
#include "fasd/io.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace fasd;
using namespace fasd::score;
using fasd::testing::random_grid;
using fasd::testing::TempDir;

namespace {

const Shape kShape{4, 32, 32};

struct Scenario {
  Grid z_src;
  Grid delta;
  GaussianPromptModel model;
};

// s = 0 prompts whose means differ by exactly delta.
Scenario scenario(std::uint64_t seed, double delta_scale = 0.5) {
  Scenario s;
  s.z_src = random_grid(kShape, seed);
  s.delta = delta_scale * random_grid(kShape, seed + 1);
  const Grid mu_src = random_grid(kShape, seed + 2);
  s.model.add("source", mu_src, 0.0);
  s.model.add("target", mu_src + s.delta, 0.0);
  return s;
}

AnalyticProvider dds_provider(const Scenario& s, std::uint64_t seed,
                              TimestepRange range = {}) {
  AnalyticProviderConfig cfg;
  cfg.seed = seed;
  cfg.timesteps = range;
  return AnalyticProvider(s.model, cfg);
}

EditConfig config(const std::string& policy, long steps = 500) {
  EditConfig c;
  c.levels = 3;
  c.filter_index = 3;
  c.policy = FreezePolicy::preset(policy, 3);
  c.steps = steps;
  c.trace_every = 10;
  return c;
}

class ThrowingProvider : public GradientProvider {
 public:
  explicit ThrowingProvider(long fail_at) : fail_at_(fail_at) {}
  GradientResult gradient(const GradientQuery& q) override {
    if (q.step == fail_at_) throw ProviderError("backend unavailable");
    return {Grid(q.current.shape(), 0.01), 1};
  }

 private:
  long fail_at_;
};

// Forwards to another provider and records the DDS objective at each query.
class ObjectiveProbe : public GradientProvider {
 public:
  ObjectiveProbe(GradientProvider& inner, const Grid& target, double k)
      : inner_(inner), target_(target), k_(k) {}
  GradientResult gradient(const GradientQuery& q) override {
    values.push_back(0.5 * k_ * squared_norm(q.current - target_));
    return inner_.gradient(q);
  }
  std::vector<double> values;

 private:
  GradientProvider& inner_;
  const Grid& target_;
  double k_;
};

}  // namespace

TEST_CASE("FreezeNone converges to the DDS fixed point z_src + delta") {
  const Scenario s = scenario(10);
  auto provider = dds_provider(s, 1);
  const EditResult r = run_edit_2d(s.z_src, config("none"), provider);
  CHECK(max_abs_diff(r.z_out, s.z_src + s.delta) <= 1e-3);
}

TEST_CASE("FreezeHigh keeps details and moves the low band to the fixed point") {
  const Scenario s = scenario(20);
  auto provider = dds_provider(s, 2);
  const EditResult r = run_edit_2d(s.z_src, config("freeze-high"), provider);
  const FrequencyState src = decompose_latent(s.z_src, 3, 3);
  const FrequencyState fixed = decompose_latent(s.z_src + s.delta, 3, 3);
  for (std::size_t b = 1; b < r.state.band_count(); ++b) {
    CHECK(r.state.subbands.band(b).bit_equal(src.subbands.band(b)));
  }
  CHECK(max_abs_diff(r.state.subbands.low, fixed.subbands.low) <= 1e-3);
  CHECK(max_abs_diff(decompose_latent(r.z_out, 3, 3).subbands.low, fixed.subbands.low) <=
        1e-3);
}

TEST_CASE("FreezeLow keeps the low band bit-identical, under SGD and Adam") {
  const Scenario s = scenario(30);
  for (auto kind : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
    auto provider = dds_provider(s, 3);
    EditConfig c = config("freeze-low", 100);
    c.optimizer.kind = kind;
    c.optimizer.step_size = kind == OptimizerKind::kAdam ? 0.01 : 0.1;
    const EditResult r = run_edit_2d(s.z_src, c, provider);
    const FrequencyState src = decompose_latent(s.z_src, 3, 3);
    CHECK(r.state.subbands.low.bit_equal(src.subbands.low));
    CHECK_FALSE(r.state.subbands.details[0].hh.bit_equal(src.subbands.details[0].hh));
  }
}

TEST_CASE("zero-gradient provider leaves the latent bit-identical") {
  const Grid z = random_grid(kShape, 40);
  ZeroProvider zero;
  const EditResult r = run_edit_2d(z, config("none", 20), zero);
  CHECK(r.z_out.bit_equal(z));
  CHECK(r.state.bit_equal(decompose_latent(z, 3, 3)));
}

TEST_CASE("runs are deterministic given the seed") {
  const Scenario s = scenario(50);
  AnalyticProviderConfig pc;
  pc.seed = 77;
  pc.shared_noise = false;
  GaussianPromptModel noisy;
  noisy.add("source", s.model.at("source").mean, 0.3);
  noisy.add("target", s.model.at("target").mean, 0.3);
  AnalyticProvider a(noisy, pc);
  AnalyticProvider b(noisy, pc);
  EditConfig c = config("none", 60);
  c.snapshot_every = 20;
  const EditResult ra = run_edit_2d(s.z_src, c, a);
  const EditResult rb = run_edit_2d(s.z_src, c, b);
  CHECK(ra.z_out.bit_equal(rb.z_out));
  CHECK(trace_csv(ra.trace) == trace_csv(rb.trace));
  REQUIRE(ra.trace.snapshots.size() == rb.trace.snapshots.size());
  for (std::size_t i = 0; i < ra.trace.snapshots.size(); ++i) {
    CHECK(ra.trace.snapshots[i].state.bit_equal(rb.trace.snapshots[i].state));
  }
  pc.seed = 78;
  AnalyticProvider other(noisy, pc);
  CHECK_FALSE(run_edit_2d(s.z_src, c, other).z_out.bit_equal(ra.z_out));
}

TEST_CASE("objective is non-increasing with exact gradients and fixed t") {
  const Scenario s = scenario(60);
  const int t = 500;
  auto inner = dds_provider(s, 4, TimestepRange{t, t});
  const NoiseSchedule sched;
  const double k = sched.alpha(t) / sched.sigma(t);
  const double lr = 0.1;
  REQUIRE(lr < 2.0 * sched.sigma(t) / sched.alpha(t));
  const Grid target = s.z_src + s.delta;
  ObjectiveProbe probe(inner, target, k);
  EditConfig c = config("none", 200);
  c.optimizer.step_size = lr;
  run_edit_2d(s.z_src, c, probe);
  REQUIRE(probe.values.size() == 200);
  CHECK(probe.values.front() > 0.0);
  for (std::size_t i = 1; i < probe.values.size(); ++i) {
    CHECK(probe.values[i] <= probe.values[i - 1]);
  }
  // Quadratic flow: every step scales the objective by (1 - lr k)^2.
  const double factor = (1.0 - lr * k) * (1.0 - lr * k);
  for (std::size_t i = 1; i < 50; ++i) {
    CHECK(probe.values[i] / probe.values[i - 1] == doctest::Approx(factor).epsilon(1e-9));
  }
}

TEST_CASE("FreezeHigh details do not depend on delta") {
  const Scenario s1 = scenario(70, 0.5);
  Scenario s2 = s1;
  s2.delta = 2.0 * random_grid(kShape, 999);
  s2.model = GaussianPromptModel();
  s2.model.add("source", s1.model.at("source").mean, 0.0);
  s2.model.add("target", s1.model.at("source").mean + s2.delta, 0.0);
  auto p1 = dds_provider(s1, 5);
  auto p2 = dds_provider(s2, 5);
  const EditResult r1 = run_edit_2d(s1.z_src, config("freeze-high", 50), p1);
  const EditResult r2 = run_edit_2d(s2.z_src, config("freeze-high", 50), p2);
  for (std::size_t b = 1; b < r1.state.band_count(); ++b) {
    CHECK(r1.state.subbands.band(b).bit_equal(r2.state.subbands.band(b)));
  }
  CHECK_FALSE(r1.state.subbands.low.bit_equal(r2.state.subbands.low));
}

TEST_CASE("trace records per-band norms with frozen bands at exactly zero") {
  const Scenario s = scenario(80);
  auto provider = dds_provider(s, 6);
  EditConfig c = config("freeze-high", 25);
  c.trace_every = 10;
  const EditResult r = run_edit_2d(s.z_src, c, provider);
  REQUIRE(r.trace.steps.size() == 4);  // 0, 10, 20 and the last step 24
  CHECK(r.trace.steps[3].step == 24);
  CHECK(r.trace.band_names.size() == 10);
  for (const TraceStep& st : r.trace.steps) {
    CHECK(st.timestep >= 50);
    CHECK(st.grad_l2[0] > 0.0);
    for (std::size_t b = 1; b < st.grad_l2.size(); ++b) CHECK(st.grad_l2[b] == 0.0);
  }
  const std::string csv = trace_csv(r.trace);
  CHECK(csv.rfind("step,level,orientation,grad_l2,frozen\n", 0) == 0);
  CHECK(csv.find("0,3,LL,") != std::string::npos);
  CHECK(csv.find("0,1,HH,0,true\n") != std::string::npos);
}

TEST_CASE("provider failure aborts with the partial trace") {
  ThrowingProvider provider(5);
  EditConfig c = config("none", 20);
  c.trace_every = 1;
  try {
    run_edit_2d(random_grid(kShape, 90), c, provider);
    FAIL("expected EditAborted");
  } catch (const EditAborted& e) {
    CHECK(e.step() == 5);
    CHECK(e.trace().steps.size() == 5);
    CHECK(std::string(e.what()).find("backend unavailable") != std::string::npos);
  }
}

TEST_CASE("config and shape errors") {
  ZeroProvider zero;
  EditConfig c = config("none", 0);
  CHECK_THROWS_AS(run_edit_2d(random_grid(kShape, 1), c, zero), std::invalid_argument);
  c.steps = 1;
  c.optimizer.step_size = 0.0;
  CHECK_THROWS_AS(run_edit_2d(random_grid(kShape, 1), c, zero), std::invalid_argument);
  CHECK_THROWS_AS(run_edit_2d(random_grid(Shape{4, 20, 20}, 1), config("none", 1), zero),
                  ShapeError);
  c = config("none", 1);
  c.policy = FreezePolicy::freeze_high(2);
  CHECK_THROWS(run_edit_2d(random_grid(kShape, 1), c, zero));
}

TEST_CASE("export_trace") {
  TempDir dir;
  SUBCASE("empty trace gives a header-only CSV") {
    export_trace(EditTrace{}, dir.path());
    const auto bytes = io::read_file(dir / "trace.csv");
    CHECK(std::string(bytes.begin(), bytes.end()) ==
          "step,level,orientation,grad_l2,frozen\n");
  }
  SUBCASE("all-zero snapshot gives mid-gray maps with min = max") {
    EditTrace t;
    t.levels = 2;
    t.snapshots.push_back({-1, decompose_latent(Grid(Shape{3, 8, 8}), 2, 2)});
    export_trace(t, dir.path(), ".ppm");
    const auto sdir = dir.path() / "snapshot_init";
    const auto meta = nlohmann::json::parse(std::ifstream(sdir / "bands.json"));
    REQUIRE(meta["bands"].size() == 7);
    for (const auto& b : meta["bands"]) {
      CHECK(b["min"] == 0.0);
      CHECK(b["max"] == 0.0);
      const Grid img = io::read_image(sdir / b["file"].get<std::string>());
      for (double v : img.data()) CHECK(v == 128.0 / 255.0);
    }
    CHECK(io::read_image(sdir / "low.ppm").shape() == Shape{3, 2, 6});
    CHECK(io::read_image(sdir / "L1_HL.ppm").shape() == Shape{3, 4, 12});
    CHECK(io::extract_state(io::read_container(sdir / "state.fbds"), "")
              .bit_equal(t.snapshots[0].state));
  }
  SUBCASE("a real run") {
    const Scenario s = scenario(100);
    auto provider = dds_provider(s, 7);
    EditConfig c = config("freeze-high", 12);
    c.trace_every = 4;
    c.snapshot_every = 6;
    const EditResult r = run_edit_2d(s.z_src, c, provider);
    export_trace(r.trace, dir.path());
    CHECK(std::filesystem::exists(dir / "snapshot_init/low.png"));
    CHECK(std::filesystem::exists(dir / "snapshot_000005/L3_HH.png"));
    CHECK(std::filesystem::exists(dir / "snapshot_000011/bands.json"));
    const auto meta = nlohmann::json::parse(std::ifstream(dir / "snapshot_000011/bands.json"));
    const BandImage low = band_image(r.state.subbands.low);
    CHECK(meta["bands"][0]["min"].get<double>() == low.min);
    CHECK(meta["bands"][0]["max"].get<double>() == low.max);
  }
}

TEST_CASE("run_edit_spectral keeps the frozen band and moves the kept one") {
  const Scenario s = scenario(61);
  for (auto t : {spectral::Transform::kDct, spectral::Transform::kDft}) {
    CAPTURE(spectral::to_string(t));
    AnalyticProvider p = dds_provider(s, 3);
    SpectralEditConfig cfg;
    cfg.transform = t;
    cfg.cutoff = 0.3;
    cfg.keep = spectral::Keep::kLow;
    cfg.steps = 300;
    const Grid z = run_edit_spectral(s.z_src, cfg, p);
    const auto mask = spectral::build_lowpass_mask(32, 32, 0.3, spectral::MaskShape::kRect);
    const Grid high_out = spectral::masked_spectral_gradient(z, mask, t, spectral::Keep::kHigh);
    const Grid high_src =
        spectral::masked_spectral_gradient(s.z_src, mask, t, spectral::Keep::kHigh);
    CHECK(max_abs_diff(high_out, high_src) <= 1e-6);
    // The kept band converges to that of z_src + delta.
    const Grid want = spectral::masked_spectral_gradient(s.z_src + s.delta, mask, t,
                                                         spectral::Keep::kLow);
    const Grid low_out = spectral::masked_spectral_gradient(z, mask, t, spectral::Keep::kLow);
    CHECK(max_abs_diff(low_out, want) <= 1e-3);
  }

  ZeroProvider zero;
  SpectralEditConfig cfg;
  cfg.steps = 5;
  CHECK(run_edit_spectral(random_grid(kShape, 1), cfg, zero).bit_equal(random_grid(kShape, 1)));
  cfg.steps = -1;
  CHECK_THROWS_AS(run_edit_spectral(random_grid(kShape, 1), cfg, zero), std::invalid_argument);
}
