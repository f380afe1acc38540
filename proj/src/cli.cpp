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

#include "fasd/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <thread>
#include <exception>

#include "CLI11.hpp"
#include "fasd/edit2d.hpp"
#include "fasd/io.hpp"
#include "fasd/mesh.hpp"
#include "fasd/metrics.hpp"
#include "fasd/remote.hpp"
#include "fasd/triplane.hpp"

namespace fasd::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config ---------------------------------------------------------------

json provider_defaults() {
  return {{"kind", "analytic"},
          {"mode", "dds"},
          {"shared_noise", true},
          {"weighting", "unit"},
          {"source_std", 0.0},
          {"target_std", 0.0},
          {"t_min", 50},
          {"t_max", 950},
          {"endpoint", ""},
          {"prompt_source", ""},
          {"prompt_target", ""},
          {"guidance_scale", 7.5},
          {"connect_timeout_ms", 2000},
          {"read_timeout_ms", 60000},
          {"max_attempts", 3}};
}

json optimizer_defaults(const char* kind, double lr) {
  return {{"kind", kind}, {"step_size", lr}, {"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}};
}

json camera_defaults() {
  return {{"size", 64},
          {"azimuths", 8},
          {"elevations", json::array({0.0, 30.0})},
          {"radius", 3.0},
          {"fov_deg", 40.0}};
}

json edit_defaults() {
  return {{"policy", "none"},
          {"steps", 500},
          {"trace_every", 1},
          {"snapshot_every", 0},
          {"optimizer", optimizer_defaults("sgd", 0.1)}};
}

json base_defaults(const std::string& command) {
  return {{"config_version", kConfigVersion},
          {"command", command},
          {"seed", 0},
          {"threads", 1},
          {"output", {{"image_format", "png"}}}};
}

json build_defaults(const std::string& command) {
  json d = base_defaults(command);
  const json wavelet = {{"filter_index", 3}, {"levels", 3}};
  const json shift = json::array({0.2, 0.0, -0.2});
  if (command == "edit2d") {
    d["input"] = "";
    d["target"] = "";
    d["shift"] = shift;
    d["wavelet"] = wavelet;
    d["edit"] = edit_defaults();
    d["provider"] = provider_defaults();
  } else if (command == "wavelet-sweep") {
    d["input"] = "";
    d["target"] = "";
    d["shift"] = shift;
    d["sweep"] = {{"filters", json::array({1, 2, 3, 4, 5, 6, 7, 8})},
                  {"levels", json::array({1, 2, 3, 4, 5})}};
    json e = edit_defaults();
    e["policy"] = "freeze-high";
    e["steps"] = 200;
    e["trace_every"] = 0;
    e.erase("snapshot_every");
    d["edit"] = e;
    d["provider"] = provider_defaults();
  } else if (command == "spectral-compare") {
    d["input"] = "";
    d["target"] = "";
    d["shift"] = shift;
    d["wavelet"] = wavelet;
    // No default cutoff: a separation comparable to the wavelet split has
    // to be chosen per input (see the energy columns of `decompose`).
    d["spectral"] = {{"cutoff", 0.0}, {"mask", "rect"}, {"keep", "low"}};
    d["edit"] = {{"steps", 500}, {"optimizer", optimizer_defaults("sgd", 0.1)}};
    d["provider"] = provider_defaults();
  } else if (command == "decompose") {
    d["input"] = "";
    d["wavelet"] = wavelet;
  } else if (command == "texture-init") {
    d["mesh"] = "builtin:quad";
    d["texture"] = "builtin:checkerboard";
    d["cameras"] = camera_defaults();
    d["triplane"] = {{"channels", 16}, {"resolution", 128}, {"levels", 2},
                     {"filter_index", 3}, {"hidden", 64},   {"init_std", 0.1}};
    d["fit"] = {{"steps", 2000}, {"plane_lr", 1e-2}, {"mlp_lr", 3e-3}, {"target_l1", 0.0}};
    d["bake_size"] = 0;
  } else if (command == "texture-edit") {
    d["checkpoint"] = "";
    d["mesh"] = "builtin:quad";
    d["shift"] = shift;
    d["cameras"] = camera_defaults();
    d["texture_edit"] = {{"policy", "freeze-high"},
                         {"steps", 1000},
                         {"optimizer", optimizer_defaults("adam", 0.05)}};
    d["provider"] = provider_defaults();
    d["provider"]["mode"] = "sds";
    d["bake_size"] = 256;
  } else if (command == "metrics") {
    d["reference"] = "";
    d["test"] = "";
    d["wavelet"] = wavelet;
  } else {
    throw ConfigError("unknown command '" + command + "'");
  }
  return d;
}

std::string kind_name(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

bool compatible(const json& def, const json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_number()) return v.is_number();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) {
    if (!v.is_array()) return false;
    if (def.empty()) return true;
    return std::all_of(v.begin(), v.end(), [&](const json& e) { return compatible(def[0], e); });
  }
  return def.is_object() && v.is_object();
}

void merge_checked(json& into, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError(path + ": expected an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key_path = path + "/" + it.key();
    if (!into.contains(it.key())) throw ConfigError("unknown config key " + key_path);
    json& slot = into[it.key()];
    if (!compatible(slot, it.value())) {
      throw ConfigError(key_path + ": expected " + kind_name(slot) + ", got " +
                        kind_name(it.value()));
    }
    if (slot.is_object()) {
      merge_checked(slot, it.value(), key_path);
    } else {
      slot = it.value();
    }
  }
}

// ---- flags ------------------------------------------------------------------

struct FlagSpec {
  std::string flag;
  std::string pointer;
  std::string help;
};

std::vector<FlagSpec> provider_flags() {
  return {{"--provider", "/provider/kind", "analytic | zero | remote"},
          {"--mode", "/provider/mode", "dds | sds"},
          {"--shared-noise", "/provider/shared_noise", "true | false"},
          {"--weighting", "/provider/weighting", "unit | sigma-squared"},
          {"--source-std", "/provider/source_std", "analytic source prompt std"},
          {"--target-std", "/provider/target_std", "analytic target prompt std"},
          {"--t-min", "/provider/t_min", "smallest sampled timestep"},
          {"--t-max", "/provider/t_max", "largest sampled timestep"},
          {"--endpoint", "/provider/endpoint", "remote provider base URL"},
          {"--prompt-source", "/provider/prompt_source", "remote source prompt"},
          {"--prompt-target", "/provider/prompt_target", "remote target prompt"},
          {"--guidance", "/provider/guidance_scale", "remote guidance scale"},
          {"--max-attempts", "/provider/max_attempts", "remote transport attempts"}};
}

std::vector<FlagSpec> flags_for(const std::string& command) {
  std::vector<FlagSpec> f = {{"--seed", "/seed", "master seed"},
                             {"--threads", "/threads", "worker threads"},
                             {"--format", "/output/image_format", "png | ppm"}};
  auto add = [&f](std::vector<FlagSpec> more) { f.insert(f.end(), more.begin(), more.end()); };
  const std::vector<FlagSpec> edit_source = {
      {"--in", "/input", "source image"},
      {"--target", "/target", "analytic target image"},
      {"--shift", "/shift", "analytic target color shift r,g,b"}};
  const std::vector<FlagSpec> optimizer = {
      {"--steps", "/edit/steps", "optimization steps"},
      {"--optimizer", "/edit/optimizer/kind", "sgd | adam"},
      {"--lr", "/edit/optimizer/step_size", "step size"}};
  const std::vector<FlagSpec> cameras = {
      {"--size", "/cameras/size", "render height and width"},
      {"--azimuths", "/cameras/azimuths", "cameras per elevation"},
      {"--elevations", "/cameras/elevations", "elevations in degrees, comma separated"},
      {"--radius", "/cameras/radius", "orbit radius"},
      {"--fov", "/cameras/fov_deg", "vertical field of view in degrees"}};
  if (command == "edit2d") {
    add(edit_source);
    add(optimizer);
    add({{"--p", "/wavelet/filter_index", "Daubechies index 1..8"},
         {"--J", "/wavelet/levels", "decomposition levels"},
         {"--policy", "/edit/policy", "none | freeze-high | freeze-low"},
         {"--trace-every", "/edit/trace_every", "trace period (0 = off)"},
         {"--snapshot-every", "/edit/snapshot_every", "snapshot period (0 = off)"}});
    add(provider_flags());
  } else if (command == "wavelet-sweep") {
    add(edit_source);
    add(optimizer);
    add({{"--p", "/sweep/filters", "filter indices, e.g. 1..8"},
         {"--J", "/sweep/levels", "levels, e.g. 1..5"},
         {"--policy", "/edit/policy", "none | freeze-high | freeze-low"}});
    add(provider_flags());
  } else if (command == "spectral-compare") {
    add(edit_source);
    add(optimizer);
    add({{"--p", "/wavelet/filter_index", "Daubechies index 1..8"},
         {"--J", "/wavelet/levels", "decomposition levels"},
         {"--cutoff", "/spectral/cutoff", "mask cutoff as a fraction of Nyquist"},
         {"--mask", "/spectral/mask", "rect | radial"},
         {"--keep", "/spectral/keep", "band that is optimized: low | high"}});
    add(provider_flags());
  } else if (command == "decompose") {
    add({{"--in", "/input", "input image"},
         {"--p", "/wavelet/filter_index", "Daubechies index 1..8"},
         {"--J", "/wavelet/levels", "decomposition levels"}});
  } else if (command == "texture-init") {
    add({{"--mesh", "/mesh", "OBJ path or builtin:quad|sphere|torus"},
         {"--texture", "/texture", "texture image or builtin:checkerboard"}});
    add(cameras);
    add({{"--channels", "/triplane/channels", "plane channels"},
         {"--plane", "/triplane/resolution", "plane height and width"},
         {"--J", "/triplane/levels", "decomposition levels"},
         {"--p", "/triplane/filter_index", "Daubechies index 1..8"},
         {"--hidden", "/triplane/hidden", "MLP hidden width"},
         {"--init-std", "/triplane/init_std", "plane init std"},
         {"--steps", "/fit/steps", "Adam steps"},
         {"--plane-lr", "/fit/plane_lr", "plane step size"},
         {"--mlp-lr", "/fit/mlp_lr", "MLP step size"},
         {"--target-l1", "/fit/target_l1", "stop once the mean L1 reaches this"},
         {"--bake-size", "/bake_size", "baked texture size (0 = texture size)"}});
  } else if (command == "texture-edit") {
    add({{"--checkpoint", "/checkpoint", "texture-init checkpoint"},
         {"--mesh", "/mesh", "OBJ path or builtin:quad|sphere|torus"},
         {"--shift", "/shift", "analytic target color shift r,g,b"}});
    add(cameras);
    add({{"--policy", "/texture_edit/policy", "none | freeze-high | freeze-low"},
         {"--steps", "/texture_edit/steps", "optimization steps"},
         {"--optimizer", "/texture_edit/optimizer/kind", "sgd | adam"},
         {"--lr", "/texture_edit/optimizer/step_size", "step size"},
         {"--bake-size", "/bake_size", "baked texture size"}});
    add(provider_flags());
  } else if (command == "metrics") {
    add({{"--ref", "/reference", "reference image or directory"},
         {"--test", "/test", "test image or directory"},
         {"--p", "/wavelet/filter_index", "residual decomposition filter"},
         {"--J", "/wavelet/levels", "residual decomposition levels"}});
  }
  return f;
}

json parse_list_element(const std::string& text, const json& like) {
  if (like.is_number_integer()) {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw ConfigError("not an integer: '" + text + "'");
    return v;
  }
  std::size_t used = 0;
  const double v = std::stod(text, &used);
  if (used != text.size()) throw ConfigError("not a number: '" + text + "'");
  return v;
}

// Converts a flag's text to the type of the default at the same pointer.
json parse_flag_value(const std::string& flag, const std::string& text, const json& like) {
  try {
    if (like.is_boolean()) {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw ConfigError("expected true or false");
    }
    if (like.is_number()) return parse_list_element(text, like);
    if (like.is_string()) return text;
    if (like.is_array()) {
      json out = json::array();
      const json elem = like.empty() ? json(0.0) : like[0];
      const auto dots = text.find("..");
      if (dots != std::string::npos && elem.is_number_integer()) {
        const long long lo = parse_list_element(text.substr(0, dots), elem);
        const long long hi = parse_list_element(text.substr(dots + 2), elem);
        if (hi < lo) throw ConfigError("empty range");
        for (long long v = lo; v <= hi; ++v) out.push_back(v);
        return out;
      }
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(parse_list_element(item, elem));
      return out;
    }
  } catch (const ConfigError& e) {
    throw ConfigError(flag + ": " + e.what());
  } catch (const std::logic_error&) {
    throw ConfigError(flag + ": cannot parse '" + text + "'");
  }
  throw ConfigError(flag + ": unsupported value");
}

// ---- helpers ------------------------------------------------------------------

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string image_ext(const json& cfg) {
  const std::string f = cfg["output"]["image_format"].get<std::string>();
  if (f != "png" && f != "ppm") throw ConfigError("/output/image_format must be png or ppm");
  return "." + f;
}

std::string file_stem(const std::string& band_name) {
  std::string s = band_name;
  std::replace(s.begin(), s.end(), '/', '_');
  return s;
}

void write_json(const fs::path& path, const json& j) { io::write_text(path, j.dump(2) + "\n"); }

OptimizerConfig optimizer_from(const json& j) {
  OptimizerConfig o;
  o.kind = parse_optimizer_kind(j["kind"].get<std::string>());
  o.step_size = j["step_size"].get<double>();
  o.beta1 = j["beta1"].get<double>();
  o.beta2 = j["beta2"].get<double>();
  o.eps = j["eps"].get<double>();
  if (!(o.step_size > 0.0)) throw ConfigError("optimizer step_size must be > 0");
  return o;
}

std::array<double, 3> shift_from(const json& cfg) {
  const auto& s = cfg["shift"];
  if (s.size() != 3) throw ConfigError("/shift needs exactly 3 values");
  return {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
}

std::uint64_t seed_from(const json& cfg) {
  const long long s = cfg["seed"].get<long long>();
  if (s < 0) throw ConfigError("/seed must be >= 0");
  return static_cast<std::uint64_t>(s);
}

int threads_from(const json& cfg) {
  const int t = cfg["threads"].get<int>();
  if (t < 1) throw ConfigError("/threads must be >= 1");
  return t;
}

// Builds a provider whose analytic prompt means are `source` and `target`.
std::unique_ptr<score::GradientProvider> make_provider(const json& p, std::uint64_t seed,
                                                       const Grid& source, const Grid& target) {
  const std::string kind = p["kind"].get<std::string>();
  score::TimestepRange range{p["t_min"].get<int>(), p["t_max"].get<int>()};
  if (range.t_min < 0 || range.t_max < range.t_min) {
    throw ConfigError("/provider: need 0 <= t_min <= t_max");
  }
  if (kind == "zero") return std::make_unique<score::ZeroProvider>();
  if (kind == "remote") {
    score::RemoteProviderConfig rc;
    rc.endpoint = p["endpoint"].get<std::string>();
    if (rc.endpoint.empty()) throw ConfigError("/provider/endpoint is required for remote");
    rc.prompt_source = p["prompt_source"].get<std::string>();
    rc.prompt_target = p["prompt_target"].get<std::string>();
    rc.guidance_scale = p["guidance_scale"].get<double>();
    rc.timesteps = range;
    rc.seed = seed;
    rc.options.connect_timeout = std::chrono::milliseconds(p["connect_timeout_ms"].get<long>());
    rc.options.read_timeout = std::chrono::milliseconds(p["read_timeout_ms"].get<long>());
    rc.options.max_attempts = p["max_attempts"].get<int>();
    return std::make_unique<score::RemoteProvider>(rc);
  }
  if (kind != "analytic") throw ConfigError("/provider/kind must be analytic, zero or remote");
  score::GaussianPromptModel model(score::parse_weighting(p["weighting"].get<std::string>()));
  model.add("source", source, p["source_std"].get<double>());
  model.add("target", target, p["target_std"].get<double>());
  score::AnalyticProviderConfig ac;
  const std::string mode = p["mode"].get<std::string>();
  if (mode != "dds" && mode != "sds") throw ConfigError("/provider/mode must be dds or sds");
  ac.mode = mode == "dds" ? score::DistillationMode::kDds : score::DistillationMode::kSds;
  ac.shared_noise = p["shared_noise"].get<bool>();
  ac.timesteps = range;
  ac.seed = seed;
  return std::make_unique<score::AnalyticProvider>(std::move(model), ac);
}

Grid read_rgb(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " is required");
  return io::read_image(path);
}

// Analytic target: an explicit image, or the source plus a color shift.
Grid edit_target(const json& cfg, const Grid& source) {
  const std::string t = cfg["target"].get<std::string>();
  if (!t.empty()) {
    Grid g = io::read_image(t);
    if (g.shape() != source.shape()) {
      throw ConfigError("target image " + g.shape().str() + " does not match source " +
                        source.shape().str());
    }
    return g;
  }
  const auto shift = shift_from(cfg);
  Grid g = source;
  for (std::size_t c = 0; c < g.channels(); ++c) {
    for (double& v : g.channel(c)) v += shift[c % 3];
  }
  return g;
}

mesh::TriangleMesh load_mesh(const std::string& spec, bool require_uvs) {
  if (spec == "builtin:quad") return mesh::make_quad();
  if (spec == "builtin:sphere") return mesh::make_uv_sphere();
  if (spec == "builtin:torus") return mesh::make_torus();
  if (spec.rfind("builtin:", 0) == 0) throw ConfigError("unknown builtin mesh '" + spec + "'");
  return mesh::normalize_mesh(mesh::load_obj(spec, require_uvs));
}

std::vector<mesh::Camera> cameras_from(const json& c) {
  const long size = c["size"].get<long>();
  if (size < 1) throw ConfigError("/cameras/size must be >= 1");
  return mesh::orbit_cameras(static_cast<std::size_t>(size), static_cast<std::size_t>(size),
                             c["azimuths"].get<int>(),
                             c["elevations"].get<std::vector<double>>(),
                             c["radius"].get<double>(), c["fov_deg"].get<double>());
}

Grid builtin_checkerboard() {
  Grid t(3, 64, 64);
  for (std::size_t y = 0; y < 64; ++y) {
    for (std::size_t x = 0; x < 64; ++x) {
      const double v = ((y / 8 + x / 8) % 2) ? 1.0 : 0.0;
      for (std::size_t c = 0; c < 3; ++c) t(c, y, x) = v;
    }
  }
  return t;
}

std::string view_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "view_%02zu", i);
  return buf;
}

double ssim_or_nan(const Grid& a, const Grid& b) {
  if (a.height() < metrics::kSsimWindow || a.width() < metrics::kSsimWindow) return std::nan("");
  return metrics::ssim(a, b);
}

// ---- commands ---------------------------------------------------------------

struct Context {
  json cfg;
  fs::path out;
  std::ostream& log;
};

int cmd_edit2d(Context& ctx) {
  const json& cfg = ctx.cfg;
  const std::string ext = image_ext(cfg);
  const Grid src = read_rgb(cfg["input"].get<std::string>(), "/input");
  const Grid tgt = edit_target(cfg, src);
  EditConfig ec;
  ec.filter_index = cfg["wavelet"]["filter_index"].get<int>();
  ec.levels = cfg["wavelet"]["levels"].get<int>();
  ec.policy = FreezePolicy::preset(cfg["edit"]["policy"].get<std::string>(), ec.levels);
  ec.steps = cfg["edit"]["steps"].get<long>();
  ec.optimizer = optimizer_from(cfg["edit"]["optimizer"]);
  ec.trace_every = cfg["edit"]["trace_every"].get<long>();
  ec.snapshot_every = cfg["edit"]["snapshot_every"].get<long>();
  ec.validate();
  auto provider = make_provider(cfg["provider"], seed_from(cfg), src, tgt);
  const EditResult r = run_edit_2d(src, ec, *provider);

  io::write_image(src, ctx.out / ("source" + ext));
  io::write_image(r.z_out, ctx.out / ("edited" + ext));
  std::vector<io::Tensor> tensors = {io::Tensor::from_grid("z_src", src),
                                     io::Tensor::from_grid("z_out", r.z_out)};
  io::append_state(tensors, "state/", r.state);
  io::write_container(tensors, ctx.out / "result.fbds");
  if (ec.trace_every > 0 || ec.snapshot_every > 0) export_trace(r.trace, ctx.out / "trace", ext);
  write_json(ctx.out / "summary.json",
             {{"ssim_to_source", ssim_or_nan(src, r.z_out)},
              {"psnr_to_source", num(metrics::psnr(src, r.z_out))},
              {"steps", ec.steps}});
  ctx.log << "edit2d: wrote " << (ctx.out / ("edited" + ext)).string() << "\n";
  return kExitOk;
}

int cmd_decompose(Context& ctx) {
  const json& cfg = ctx.cfg;
  const std::string ext = image_ext(cfg);
  const Grid img = read_rgb(cfg["input"].get<std::string>(), "/input");
  const int p = cfg["wavelet"]["filter_index"].get<int>();
  const int levels = cfg["wavelet"]["levels"].get<int>();
  const FrequencyState state = decompose_latent(img, p, levels);
  const auto report = metrics::subband_energy(state);

  fs::create_directories(ctx.out / "bands");
  json bands = json::array();
  std::ostringstream csv;
  csv << "band,level,orientation,energy,fraction\n";
  for (std::size_t b = 0; b < state.subbands.band_count(); ++b) {
    const std::string name = state.subbands.band_name(b);
    const BandImage bi = band_image(state.subbands.band(b));
    const std::string file = "bands/" + file_stem(name) + ext;
    io::write_image(bi.image, ctx.out / file);
    bands.push_back({{"name", name}, {"file", file}, {"min", bi.min}, {"max", bi.max}});
    const auto& e = report.bands[b];
    const int level = b == 0 ? levels : e.level;
    const std::string orient = b == 0 ? "LL" : name.substr(name.find('/') + 1);
    csv << name << ',' << level << ',' << orient << ',' << num(e.energy) << ','
        << num(e.fraction) << '\n';
  }
  write_json(ctx.out / "bands.json", bands);
  io::write_text(ctx.out / "energy.csv", csv.str());
  std::vector<io::Tensor> tensors;
  io::append_state(tensors, "", state);
  io::write_container(tensors, ctx.out / "state.fbds");
  ctx.log << "decompose: " << state.subbands.band_count() << " subband maps\n";
  return kExitOk;
}

Grid montage(const std::vector<std::vector<Grid>>& cells, std::size_t gap) {
  const std::size_t rows = cells.size(), cols = cells[0].size();
  const std::size_t h = cells[0][0].height(), w = cells[0][0].width();
  Grid out(3, rows * h + (rows + 1) * gap, cols * w + (cols + 1) * gap, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const Grid& g = cells[r][c];
      for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t y = 0; y < h; ++y) {
          for (std::size_t x = 0; x < w; ++x) {
            out(k, gap + r * (h + gap) + y, gap + c * (w + gap) + x) = g(k % g.channels(), y, x);
          }
        }
      }
    }
  }
  return out;
}

int cmd_wavelet_sweep(Context& ctx) {
  const json& cfg = ctx.cfg;
  const std::string ext = image_ext(cfg);
  const Grid src = read_rgb(cfg["input"].get<std::string>(), "/input");
  const Grid tgt = edit_target(cfg, src);
  const auto filters = cfg["sweep"]["filters"].get<std::vector<int>>();
  const auto levels = cfg["sweep"]["levels"].get<std::vector<int>>();
  if (filters.empty() || levels.empty()) throw ConfigError("/sweep needs filters and levels");
  const std::uint64_t seed = seed_from(cfg);

  // Cells are independent: each one gets its own provider seeded from a
  // sub-stream of the master seed, so the worker count does not matter.
  struct Cell {
    int p = 0, j = 0;
    Grid z_out;
    std::exception_ptr error;
  };
  std::vector<Cell> cells;
  for (int p : filters) {
    for (int j : levels) cells.push_back({p, j, Grid(), nullptr});
  }
  auto run_cell = [&](Cell& cell) {
    try {
      EditConfig ec;
      ec.filter_index = cell.p;
      ec.levels = cell.j;
      ec.policy = FreezePolicy::preset(cfg["edit"]["policy"].get<std::string>(), cell.j);
      ec.steps = cfg["edit"]["steps"].get<long>();
      ec.optimizer = optimizer_from(cfg["edit"]["optimizer"]);
      ec.trace_every = 0;
      ec.validate();
      Prng cell_prng =
          Prng::stream(seed, "sweep-cell", static_cast<std::uint64_t>(cell.p * 64 + cell.j));
      auto provider = make_provider(cfg["provider"], cell_prng.next(), src, tgt);
      cell.z_out = run_edit_2d(src, ec, *provider).z_out;
    } catch (...) {
      cell.error = std::current_exception();
    }
  };
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(threads_from(cfg)), cells.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(cells[i]);
    });
  }
  for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(cells[i]);
  for (auto& t : pool) t.join();
  for (const Cell& cell : cells) {
    if (cell.error) std::rethrow_exception(cell.error);
  }

  fs::create_directories(ctx.out / "cells");
  std::vector<std::vector<Grid>> grid(filters.size());
  json files = json::array();
  std::ostringstream csv;
  csv << "p,J,ssim_to_source,psnr_to_source,ssim_to_target,psnr_to_target\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell& cell = cells[i];
    const std::size_t row = i / levels.size();
    if (i % levels.size() == 0) files.push_back(json::array());
    char name[32];
    std::snprintf(name, sizeof name, "cells/p%d_J%d", cell.p, cell.j);
    io::write_image(cell.z_out, ctx.out / (std::string(name) + ext));
    files[row].push_back(std::string(name) + ext);
    csv << cell.p << ',' << cell.j << ',' << num(ssim_or_nan(src, cell.z_out)) << ','
        << num(metrics::psnr(src, cell.z_out)) << ',' << num(ssim_or_nan(tgt, cell.z_out)) << ','
        << num(metrics::psnr(tgt, cell.z_out)) << '\n';
    grid[row].push_back(cell.z_out);
  }
  constexpr std::size_t kGap = 2;
  io::write_image(montage(grid, kGap), ctx.out / ("montage" + ext));
  io::write_text(ctx.out / "sweep.csv", csv.str());
  write_json(ctx.out / "grid.json", {{"rows", "p"},
                                     {"row_values", filters},
                                     {"columns", "J"},
                                     {"column_values", levels},
                                     {"cell_height", src.height()},
                                     {"cell_width", src.width()},
                                     {"gap", kGap},
                                     {"files", files}});
  ctx.log << "wavelet-sweep: " << filters.size() << " x " << levels.size() << " cells\n";
  return kExitOk;
}

// Mask picture: kept-for-update bins blue, frozen bins white; DFT shown with
// DC at the center.
Grid mask_picture(const spectral::SpectralMask& m, spectral::Transform t, spectral::Keep keep) {
  const Grid lay = m.layout(t);
  const std::size_t h = lay.height(), w = lay.width();
  Grid out(3, h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t sy = y, sx = x;
      if (t == spectral::Transform::kDft) {
        sy = (y + h - h / 2) % h;
        sx = (x + w - w / 2) % w;
      }
      const bool in_mask = lay(0, sy, sx) != 0.0;
      const bool updated = (keep == spectral::Keep::kLow) == in_mask;
      out(0, y, x) = updated ? 0.2 : 1.0;
      out(1, y, x) = updated ? 0.4 : 1.0;
      out(2, y, x) = 1.0;
    }
  }
  return out;
}

int cmd_spectral_compare(Context& ctx) {
  const json& cfg = ctx.cfg;
  const std::string ext = image_ext(cfg);
  const Grid src = read_rgb(cfg["input"].get<std::string>(), "/input");
  const Grid tgt = edit_target(cfg, src);
  const std::uint64_t seed = seed_from(cfg);
  const auto keep = spectral::parse_keep(cfg["spectral"]["keep"].get<std::string>());
  const auto shape = spectral::parse_mask_shape(cfg["spectral"]["mask"].get<std::string>());
  const double cutoff = cfg["spectral"]["cutoff"].get<double>();
  if (cutoff == 0.0) throw ConfigError("spectral-compare needs --cutoff (or /spectral/cutoff)");
  const long steps = cfg["edit"]["steps"].get<long>();
  const OptimizerConfig opt = optimizer_from(cfg["edit"]["optimizer"]);

  EditConfig ec;
  ec.filter_index = cfg["wavelet"]["filter_index"].get<int>();
  ec.levels = cfg["wavelet"]["levels"].get<int>();
  ec.policy = keep == spectral::Keep::kLow ? FreezePolicy::freeze_high(ec.levels)
                                           : FreezePolicy::freeze_low_band(ec.levels);
  ec.steps = steps;
  ec.optimizer = opt;
  ec.trace_every = 0;
  ec.validate();
  auto dwt_provider = make_provider(cfg["provider"], seed, src, tgt);
  const EditResult dwt = run_edit_2d(src, ec, *dwt_provider);
  double dwt_drift = 0.0;
  const FrequencyState src_state = decompose_latent(src, ec.filter_index, ec.levels);
  for (std::size_t b = 0; b < dwt.state.subbands.band_count(); ++b) {
    if (ec.policy.is_frozen(b)) {
      dwt_drift = std::max(dwt_drift, max_abs_diff(dwt.state.subbands.band(b),
                                                   src_state.subbands.band(b)));
    }
  }

  const auto mask = spectral::build_lowpass_mask(src.height(), src.width(), cutoff, shape);
  const spectral::Keep frozen =
      keep == spectral::Keep::kLow ? spectral::Keep::kHigh : spectral::Keep::kLow;
  struct Row {
    std::string method;
    Grid z;
    double drift;
  };
  std::vector<Row> rows = {{"dwt", dwt.z_out, dwt_drift}};
  fs::create_directories(ctx.out / "masks");
  for (auto t : {spectral::Transform::kDct, spectral::Transform::kDft}) {
    SpectralEditConfig sc;
    sc.transform = t;
    sc.cutoff = cutoff;
    sc.mask = shape;
    sc.keep = keep;
    sc.steps = steps;
    sc.optimizer = opt;
    auto provider = make_provider(cfg["provider"], seed, src, tgt);
    const Grid z = run_edit_spectral(src, sc, *provider);
    const double drift = max_abs(spectral::masked_spectral_gradient(z - src, mask, t, frozen));
    rows.push_back({spectral::to_string(t), z, drift});
    io::write_image(mask_picture(mask, t, keep),
                    ctx.out / "masks" / (spectral::to_string(t) + "_mask" + ext));
  }

  io::write_image(src, ctx.out / ("source" + ext));
  io::write_image(tgt, ctx.out / ("target" + ext));
  std::ostringstream csv;
  csv << "method,ssim_to_source,psnr_to_source,ssim_to_target,psnr_to_target,frozen_drift\n";
  for (const Row& r : rows) {
    io::write_image(r.z, ctx.out / (r.method + ext));
    csv << r.method << ',' << num(ssim_or_nan(src, r.z)) << ',' << num(metrics::psnr(src, r.z))
        << ',' << num(ssim_or_nan(tgt, r.z)) << ',' << num(metrics::psnr(tgt, r.z)) << ','
        << num(r.drift) << '\n';
  }
  io::write_text(ctx.out / "compare.csv", csv.str());
  ctx.log << "spectral-compare: dwt, dct, dft\n";
  return kExitOk;
}

int cmd_texture_init(Context& ctx) {
  const json& cfg = ctx.cfg;
  const std::string ext = image_ext(cfg);
  const int threads = threads_from(cfg);
  const std::string tex_spec = cfg["texture"].get<std::string>();
  const Grid texture = tex_spec == "builtin:checkerboard" ? builtin_checkerboard()
                                                          : read_rgb(tex_spec, "/texture");
  const auto mesh = load_mesh(cfg["mesh"].get<std::string>(), true);
  const auto views = triplane::prepare_views(mesh, cameras_from(cfg["cameras"]), &texture, threads);

  const json& tp = cfg["triplane"];
  const long res = tp["resolution"].get<long>();
  const long channels = tp["channels"].get<long>();
  const long hidden = tp["hidden"].get<long>();
  if (res < 2 || channels < 1 || hidden < 1) throw ConfigError("/triplane sizes must be positive");
  triplane::TriplaneShape shape{static_cast<std::size_t>(channels), static_cast<std::size_t>(res),
                                static_cast<std::size_t>(res), tp["levels"].get<int>(),
                                tp["filter_index"].get<int>()};
  const std::uint64_t seed = seed_from(cfg);
  auto ft = triplane::FrequencyTriplane::random(shape, seed, tp["init_std"].get<double>());
  auto mlp = triplane::MlpDecoder::random(3 * shape.channels, seed,
                                          static_cast<std::size_t>(hidden));
  triplane::FitConfig fc;
  fc.steps = cfg["fit"]["steps"].get<long>();
  fc.plane_lr = cfg["fit"]["plane_lr"].get<double>();
  fc.mlp_lr = cfg["fit"]["mlp_lr"].get<double>();
  fc.target_l1 = cfg["fit"]["target_l1"].get<double>();
  fc.threads = threads;
  const auto report = triplane::init_fit(ft, mlp, views, fc);

  triplane::save_checkpoint(ctx.out / "checkpoint.fbds", ft, mlp, cfg.dump());
  fs::create_directories(ctx.out / "renders");
  for (std::size_t i = 0; i < views.size(); ++i) {
    io::write_image(triplane::render_view(ft, mlp, views[i].gbuffer, threads),
                    ctx.out / "renders" / (view_name(i) + ext));
    io::write_image(views[i].target, ctx.out / "renders" / (view_name(i) + "_target" + ext));
  }
  long bake = cfg["bake_size"].get<long>();
  if (bake < 0) throw ConfigError("/bake_size must be >= 0");
  const std::size_t bh = bake == 0 ? texture.height() : static_cast<std::size_t>(bake);
  const std::size_t bw = bake == 0 ? texture.width() : static_cast<std::size_t>(bake);
  io::write_image(triplane::bake_texture(ft, mlp, mesh, bh, bw), ctx.out / ("baked" + ext));
  std::ostringstream csv;
  csv << "step,l1\n";
  for (std::size_t i = 0; i < report.losses.size(); ++i) csv << i << ',' << num(report.losses[i]) << '\n';
  io::write_text(ctx.out / "fit_loss.csv", csv.str());
  write_json(ctx.out / "summary.json",
             {{"final_l1", report.final_l1}, {"steps_run", report.steps_run}, {"views", views.size()}});
  ctx.log << "texture-init: final mean L1 " << num(report.final_l1) << " after "
          << report.steps_run << " steps\n";
  return kExitOk;
}

int cmd_texture_edit(Context& ctx) {
  const json& cfg = ctx.cfg;
  const std::string ext = image_ext(cfg);
  const int threads = threads_from(cfg);
  const std::string ckpt = cfg["checkpoint"].get<std::string>();
  if (ckpt.empty()) throw ConfigError("/checkpoint is required");
  const auto cp = triplane::load_checkpoint(ckpt);
  const auto mesh = load_mesh(cfg["mesh"].get<std::string>(), false);
  const auto views = triplane::prepare_views(mesh, cameras_from(cfg["cameras"]), nullptr, threads);
  const auto shift = shift_from(cfg);
  const std::uint64_t seed = seed_from(cfg);

  std::vector<std::unique_ptr<score::GradientProvider>> per_view;
  for (const auto& v : views) {
    const Grid init = triplane::render_view(cp.ft, cp.mlp, v.gbuffer, threads);
    Grid target = init;
    for (std::size_t y = 0; y < init.height(); ++y) {
      for (std::size_t x = 0; x < init.width(); ++x) {
        if (v.gbuffer.hit_mask(0, y, x) == 0.0) continue;
        for (std::size_t c = 0; c < 3; ++c) {
          target(c, y, x) = std::clamp(target(c, y, x) + shift[c], 0.0, 1.0);
        }
      }
    }
    per_view.push_back(make_provider(cfg["provider"], seed, init, target));
  }
  score::RoundRobinProvider provider(std::move(per_view));

  const json& te = cfg["texture_edit"];
  triplane::TextureEditConfig ec;
  ec.steps = te["steps"].get<long>();
  ec.optimizer = optimizer_from(te["optimizer"]);
  ec.policy = FreezePolicy::preset(te["policy"].get<std::string>(), cp.ft.planes[0].levels);
  ec.threads = threads;
  const auto r = triplane::run_texture_edit(cp.ft, cp.mlp, views, provider, ec);

  triplane::save_checkpoint(ctx.out / "checkpoint.fbds", r.ft, cp.mlp, cfg.dump());
  fs::create_directories(ctx.out / "renders");
  std::ostringstream csv;
  csv << "view,ssim_to_initial,psnr_to_initial\n";
  for (std::size_t i = 0; i < views.size(); ++i) {
    io::write_image(r.initial_renders[i], ctx.out / "renders" / (view_name(i) + "_initial" + ext));
    io::write_image(r.final_renders[i], ctx.out / "renders" / (view_name(i) + "_final" + ext));
    csv << view_name(i) << ',' << num(ssim_or_nan(r.initial_renders[i], r.final_renders[i]))
        << ',' << num(metrics::psnr(r.initial_renders[i], r.final_renders[i])) << '\n';
  }
  io::write_text(ctx.out / "views.csv", csv.str());
  const long bake = cfg["bake_size"].get<long>();
  if (bake < 1) throw ConfigError("/bake_size must be >= 1");
  if (mesh.has_uvs()) {
    io::write_image(triplane::bake_texture(r.ft, cp.mlp, mesh, static_cast<std::size_t>(bake),
                                           static_cast<std::size_t>(bake)),
                    ctx.out / ("baked" + ext));
  }
  bool low_same = true, details_same = true;
  for (int p = 0; p < 3; ++p) {
    const auto& a = r.ft.planes[p].subbands;
    const auto& b = cp.ft.planes[p].subbands;
    low_same = low_same && a.low.bit_equal(b.low);
    for (std::size_t i = 1; i < a.band_count(); ++i) {
      details_same = details_same && a.band(i).bit_equal(b.band(i));
    }
  }
  write_json(ctx.out / "summary.json", {{"low_bands_unchanged", low_same},
                                         {"detail_bands_unchanged", details_same},
                                         {"views", views.size()}});
  ctx.log << "texture-edit: " << ec.steps << " steps over " << views.size() << " views\n";
  return kExitOk;
}

std::vector<std::pair<std::string, std::pair<fs::path, fs::path>>> metric_pairs(
    const fs::path& ref, const fs::path& test) {
  std::vector<std::pair<std::string, std::pair<fs::path, fs::path>>> pairs;
  if (fs::is_directory(ref) != fs::is_directory(test)) {
    throw ConfigError("/reference and /test must both be files or both be directories");
  }
  if (!fs::is_directory(ref)) {
    pairs.push_back({test.filename().string(), {ref, test}});
    return pairs;
  }
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(test)) {
    const std::string ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".png" || ext == ".ppm") && fs::exists(ref / e.path().filename())) {
      names.push_back(e.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  for (const auto& n : names) pairs.push_back({n, {ref / n, test / n}});
  if (pairs.empty()) throw io::IoError("no images with matching names in " + ref.string() + " and " + test.string());
  return pairs;
}

int cmd_metrics(Context& ctx) {
  const json& cfg = ctx.cfg;
  const std::string ref = cfg["reference"].get<std::string>();
  const std::string test = cfg["test"].get<std::string>();
  if (ref.empty() || test.empty()) throw ConfigError("/reference and /test are required");
  const int p = cfg["wavelet"]["filter_index"].get<int>();
  const int levels = cfg["wavelet"]["levels"].get<int>();
  std::ostringstream csv;
  bool header = false;
  for (const auto& [id, paths] : metric_pairs(ref, test)) {
    const Grid a = io::read_image(paths.first);
    const Grid b = io::read_image(paths.second);
    if (a.shape() != b.shape()) throw ConfigError(id + ": image shapes differ");
    const auto energy = metrics::subband_energy(decompose_latent(b - a, p, levels));
    if (!header) {
      csv << "image_id,ssim,psnr,clip_score,lpips,residual_energy";
      for (const auto& e : energy.bands) csv << ",energy_" << file_stem(e.name);
      csv << '\n';
      header = true;
    }
    csv << id << ',' << num(ssim_or_nan(a, b)) << ',' << num(metrics::psnr(a, b)) << ",,,"
        << num(energy.total);
    for (const auto& e : energy.bands) csv << ',' << num(e.fraction);
    csv << '\n';
  }
  io::write_text(ctx.out / "metrics.csv", csv.str());
  ctx.log << "metrics: wrote " << (ctx.out / "metrics.csv").string() << "\n";
  return kExitOk;
}

int dispatch(const std::string& command, Context& ctx) {
  if (command == "edit2d") return cmd_edit2d(ctx);
  if (command == "decompose") return cmd_decompose(ctx);
  if (command == "wavelet-sweep") return cmd_wavelet_sweep(ctx);
  if (command == "spectral-compare") return cmd_spectral_compare(ctx);
  if (command == "texture-init") return cmd_texture_init(ctx);
  if (command == "texture-edit") return cmd_texture_edit(ctx);
  return cmd_metrics(ctx);
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"edit2d",       "texture-init",  "texture-edit",
                                                 "decompose",    "wavelet-sweep", "spectral-compare",
                                                 "metrics"};
  return names;
}

json default_config(const std::string& command) { return build_defaults(command); }

json resolve_config(const std::string& command, const json& user) {
  json resolved = build_defaults(command);
  if (user.is_null()) return resolved;
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  if (user.contains("config_version") && user["config_version"] != kConfigVersion) {
    throw ConfigError("unsupported config_version " + user["config_version"].dump() +
                      " (expected 1)");
  }
  if (user.contains("command") && user["command"] != command) {
    throw ConfigError("config is for command " + user["command"].dump() + ", not " + command);
  }
  merge_checked(resolved, user, "");
  return resolved;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Frequency-aware score distillation editing toolkit", "fasd"};
  app.require_subcommand(1, 1);
  std::string config_path, out_dir;
  std::map<std::string, std::map<std::string, std::string>> values;
  std::map<std::string, CLI::App*> subs;
  for (const auto& name : command_names()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--out", out_dir, "run directory (must not exist)")->required();
    for (const auto& f : flags_for(name)) sub->add_option(f.flag, values[name][f.flag], f.help);
    subs[name] = sub;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* failing = &app;
    for (const auto& [name, sub] : subs) {
      if (sub->parsed()) failing = sub;
    }
    err << failing->help();
    return kExitUsage;
  }

  std::string command;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) command = name;
  }
  Context ctx{json(), fs::path(out_dir), out};
  try {
    json user;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw io::IoError("cannot open config " + config_path);
      try {
        user = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ConfigError("config " + config_path + " is not valid JSON: " + e.what());
      }
    }
    ctx.cfg = resolve_config(command, user);
    for (const auto& f : flags_for(command)) {
      if (subs[command]->count(f.flag) == 0) continue;
      const json::json_pointer ptr(f.pointer);
      ctx.cfg[ptr] = parse_flag_value(f.flag, values[command][f.flag], ctx.cfg[ptr]);
    }
    image_ext(ctx.cfg);
    threads_from(ctx.cfg);
    seed_from(ctx.cfg);

    if (fs::exists(ctx.out)) {
      throw io::IoError("run directory " + ctx.out.string() + " already exists");
    }
    fs::create_directories(ctx.out);
    write_json(ctx.out / "config.json", ctx.cfg);
    return dispatch(command, ctx);
  } catch (const mesh::ObjParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const io::IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const score::ProviderError& e) {
    err << "error: provider failure: " << e.what() << "\n";
    return kExitProvider;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace fasd::cli
