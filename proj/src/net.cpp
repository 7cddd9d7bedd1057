#include "ucolor/net.hpp"

#include <algorithm>

#include "ucolor/error.hpp"
#include "ucolor/rng.hpp"

namespace ucolor::net {

using ad::Var;

std::vector<std::string> ModelConfig::violations() const {
  std::vector<std::string> out;
  if (base_width == 0) out.push_back("model.base_width must be positive");
  if (levels != 3) out.push_back("model.levels must be 3 (got " + std::to_string(levels) + ")");
  if (attention_reduction == 0) {
    out.push_back("model.attention_reduction must be positive");
  } else if (base_width % attention_reduction != 0) {
    out.push_back("model.attention_reduction (" + std::to_string(attention_reduction) + ") must divide model.base_width (" +
                  std::to_string(base_width) + ")");
  }
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) out.push_back("model.leaky_slope must lie in [0,1)");
  if (transmission_patch == 0 || transmission_patch % 2 == 0) out.push_back("model.transmission_patch must be odd");
  if (!(init_std > 0.0)) out.push_back("model.init_std must be positive");
  return out;
}

void ModelConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid model configuration:";
  for (const auto& s : v) msg += "\n  " + s;
  throw ConfigError(msg);
}

std::vector<std::string> ModelConfig::paths() const {
  std::vector<std::string> p{"rgb"};
  if (use_hsv) p.push_back("hsv");
  if (use_lab) p.push_back("lab");
  return p;
}

namespace {

void conv_param(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t cout, std::size_t cin) {
  out.push_back({prefix + ".w", {cout, cin, 3, 3}, false});
  out.push_back({prefix + ".b", {cout}, true});
}

void re_params(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t width) {
  for (int b = 1; b <= 2; ++b)
    for (int c = 1; c <= 3; ++c)
      conv_param(out, prefix + ".b" + std::to_string(b) + ".c" + std::to_string(c), width, width);
}

std::string lvl(std::size_t k) { return ".l" + std::to_string(k); }

}  // namespace

std::vector<ParamSpec> declare_parameters(const ModelConfig& cfg) {
  cfg.validate();
  const auto paths = cfg.paths();
  const std::size_t n = paths.size();
  std::vector<ParamSpec> out;
  for (std::size_t k = 1; k <= cfg.levels; ++k) {
    const std::size_t w = cfg.width(k);
    const std::size_t cin = k == 1 ? 3 : cfg.width(k - 1);
    for (const auto& p : paths) {
      const std::string prefix = "enc." + p + lvl(k);
      conv_param(out, prefix + ".in", w, cin);
      if (p == "rgb" && n > 1) conv_param(out, prefix + ".fuse", w, n * w);
      re_params(out, prefix + ".re", w);
    }
  }
  for (std::size_t k = cfg.levels; k >= 1; --k) {
    const std::size_t w = cfg.width(k);
    const std::size_t fused = n * w;
    const std::string prefix = "dec" + lvl(k);
    if (cfg.use_cam) {
      const std::size_t hidden = fused / cfg.attention_reduction;
      out.push_back({prefix + ".cam.fc1.w", {hidden, fused}, false});
      out.push_back({prefix + ".cam.fc1.b", {hidden}, true});
      out.push_back({prefix + ".cam.fc2.w", {fused, hidden}, false});
      out.push_back({prefix + ".cam.fc2.b", {fused}, true});
    }
    if (k == cfg.levels) {
      conv_param(out, prefix + ".in", w, fused);
    } else {
      conv_param(out, prefix + ".fuse", w, cfg.width(k + 1) + fused);
    }
    re_params(out, prefix + ".re", w);
  }
  conv_param(out, "dec.out", 3, cfg.width(1));
  return out;
}

std::size_t parameter_count(const ModelConfig& cfg) {
  std::size_t total = 0;
  for (const auto& s : declare_parameters(cfg)) total += shape_size(s.shape);
  return total;
}

ModelWeights init_weights(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  ModelWeights w;
  for (const auto& spec : declare_parameters(cfg)) {
    Tensor t(spec.shape);
    if (spec.bias) {
      if (spec.name == "dec.out.b") std::fill(t.data().begin(), t.data().end(), cfg.output_bias);
    } else {
      for (double& v : t.data()) v = rng.normal(0.0, cfg.init_std);
    }
    w.emplace(spec.name, std::move(t));
  }
  return w;
}

void check_compatible(const ModelConfig& cfg, const ModelWeights& weights) {
  const auto specs = declare_parameters(cfg);
  for (const auto& spec : specs) {
    auto it = weights.find(spec.name);
    if (it == weights.end()) throw ShapeError("weights", spec.name, "missing; expected " + shape_string(spec.shape));
    if (it->second.shape() != spec.shape) {
      throw ShapeError("weights", spec.name,
                       "file has " + shape_string(it->second.shape()) + ", config expects " + shape_string(spec.shape));
    }
  }
  if (weights.size() != specs.size()) {
    for (const auto& [name, t] : weights) {
      const bool known = std::any_of(specs.begin(), specs.end(), [&](const ParamSpec& s) { return s.name == name; });
      if (!known) throw ShapeError("weights", name, "not declared by the configuration (" + shape_string(t.shape()) + ")");
    }
  }
}

Params Params::constants(const ModelWeights& weights) {
  Params p;
  for (const auto& [name, t] : weights) p.vars_.emplace(name, Var::constant(t));
  return p;
}

Params Params::leaves(const ModelWeights& weights, ad::Tape& tape) {
  Params p;
  for (const auto& [name, t] : weights) p.vars_.emplace(name, tape.leaf(t));
  return p;
}

const Var& Params::operator()(const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw Error("parameter '" + name + "' is not present");
  return it->second;
}

namespace {

Var conv(const Var& x, const Params& p, const std::string& prefix) {
  return ad::conv2d(x, p(prefix + ".w"), p(prefix + ".b"));
}

Var residual_block(const Var& x, const Params& p, const std::string& prefix, double slope) {
  Var h = ad::leaky_relu(conv(x, p, prefix + ".c1"), slope);
  h = ad::leaky_relu(conv(h, p, prefix + ".c2"), slope);
  return conv(h, p, prefix + ".c3");
}

}  // namespace

Var residual_enhancement(const Var& x, const Params& p, const std::string& prefix, double slope) {
  const Var y1 = ad::add(residual_block(x, p, prefix + ".b1", slope), x);
  return ad::add(residual_block(y1, p, prefix + ".b2", slope), y1);
}

Var attention_weights(const Var& features, const AttentionParams& p, std::size_t reduction) {
  if (features.value().rank() != 3) {
    throw ShapeError("channel_attention", "rank", "expected N x H x W, got " + shape_string(features.shape()));
  }
  const std::size_t n = features.shape()[0];
  if (reduction == 0 || n % reduction != 0) {
    throw DomainError("channel_attention: reduction " + std::to_string(reduction) + " does not divide " +
                      std::to_string(n) + " channels");
  }
  if (p.fc1_w.shape() != Shape{n / reduction, n}) {
    throw ShapeError("channel_attention", "fc1", "expected " + shape_string({n / reduction, n}) + ", got " +
                                                    shape_string(p.fc1_w.shape()));
  }
  const Var z = ad::global_avg_pool(features);
  const Var hidden = ad::relu(ad::fully_connected(z, p.fc1_w, p.fc1_b));
  return ad::sigmoid(ad::fully_connected(hidden, p.fc2_w, p.fc2_b));
}

Var apply_channel_gate(const Var& features, const Var& s) { return ad::add(features, ad::mul(features, s)); }

Var channel_attention(const Var& features, const AttentionParams& p, std::size_t reduction) {
  return apply_channel_gate(features, attention_weights(features, p, reduction));
}

Var mt_guidance(const Var& u, const Var& rmt) {
  if (u.value().rank() != 3 || rmt.value().rank() != 3 || rmt.shape()[0] != 1) {
    throw ShapeError("mt_guidance", "rank", shape_string(u.shape()) + " with map " + shape_string(rmt.shape()));
  }
  if (u.shape()[1] != rmt.shape()[1]) {
    throw ShapeError("mt_guidance", "height", std::to_string(u.shape()[1]) + " vs " + std::to_string(rmt.shape()[1]));
  }
  if (u.shape()[2] != rmt.shape()[2]) {
    throw ShapeError("mt_guidance", "width", std::to_string(u.shape()[2]) + " vs " + std::to_string(rmt.shape()[2]));
  }
  return ad::add(u, ad::mul(u, rmt));
}

PreparedInput prepare_input(const Image& rgb, const ModelConfig& cfg, bool require_multiple) {
  const std::size_t mult = require_multiple ? std::size_t{1} << (cfg.levels - 1) : 1;
  if (rgb.height % mult != 0) {
    throw ShapeError("forward", "height", std::to_string(rgb.height) + " is not a multiple of " + std::to_string(mult));
  }
  if (rgb.width % mult != 0) {
    throw ShapeError("forward", "width", std::to_string(rgb.width) + " is not a multiple of " + std::to_string(mult));
  }
  PreparedInput in;
  in.views = color::to_network_input(rgb);
  in.light = physics::estimate_background_light(rgb);
  in.transmission = physics::estimate_transmission(rgb, in.light, cfg.prior, cfg.transmission_patch);
  in.rmt = physics::rmt_pyramid(physics::reverse_transmission(in.transmission), cfg.levels);
  return in;
}

PreparedInput crop_prepared(const PreparedInput& full, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w,
                            std::size_t levels) {
  PreparedInput out;
  out.views.rgb = full.views.rgb.crop(y0, x0, h, w);
  out.views.hsv = full.views.hsv.crop(y0, x0, h, w);
  out.views.lab = full.views.lab.crop(y0, x0, h, w);
  out.light = full.light;
  out.transmission = TransmissionMap(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out.transmission.at(y, x) = full.transmission.at(y0 + y, x0 + x);
  out.rmt = physics::rmt_pyramid(physics::reverse_transmission(out.transmission), levels);
  return out;
}

std::vector<Var> encode(const color::NetworkInput& in, const ModelConfig& cfg, const Params& p) {
  if (in.hsv.height != in.rgb.height || in.lab.height != in.rgb.height || in.hsv.width != in.rgb.width ||
      in.lab.width != in.rgb.width) {
    throw ShapeError("encode", "size", "color-space views differ in size");
  }
  const std::size_t mult = std::size_t{1} << (cfg.levels - 1);
  if (in.rgb.height % mult != 0 || in.rgb.width % mult != 0) {
    throw ShapeError("encode", "size", "input sides must be multiples of " + std::to_string(mult));
  }
  const auto paths = cfg.paths();
  const double slope = cfg.leaky_slope;
  auto source = [&](const std::string& path) -> const Image& {
    if (cfg.triplicate_rgb || path == "rgb") return in.rgb;
    return path == "hsv" ? in.hsv : in.lab;
  };

  std::map<std::string, Var> prev;
  std::vector<Var> fused;
  for (std::size_t k = 1; k <= cfg.levels; ++k) {
    std::map<std::string, Var> out;
    auto stage_input = [&](const std::string& path) {
      const std::string prefix = "enc." + path + lvl(k);
      const Var x = k == 1 ? Var::constant(source(path).to_tensor()) : ad::max_pool2(prev.at(path));
      return ad::leaky_relu(conv(x, p, prefix + ".in"), slope);
    };
    // HSV and Lab stages first: the RGB stage consumes them.
    for (const auto& path : paths) {
      if (path == "rgb") continue;
      out[path] = residual_enhancement(stage_input(path), p, "enc." + path + lvl(k) + ".re", slope);
    }
    Var h = stage_input("rgb");
    if (paths.size() > 1) {
      std::vector<Var> dense{h};
      for (const auto& path : paths)
        if (path != "rgb") dense.push_back(out.at(path));
      h = ad::leaky_relu(conv(ad::concat_channels(dense), p, "enc.rgb" + lvl(k) + ".fuse"), slope);
    }
    out["rgb"] = residual_enhancement(h, p, "enc.rgb" + lvl(k) + ".re", slope);

    std::vector<Var> level;
    for (const auto& path : paths) level.push_back(out.at(path));
    fused.push_back(ad::concat_channels(level));
    prev = std::move(out);
  }
  return fused;
}

Var decode(const std::vector<Var>& features, const std::vector<TransmissionMap>& rmt, const ModelConfig& cfg,
           const Params& p) {
  if (features.size() != cfg.levels) {
    throw ShapeError("decode", "levels", std::to_string(features.size()) + " feature levels, expected " +
                                             std::to_string(cfg.levels));
  }
  if (cfg.use_mtgm && rmt.size() != cfg.levels) {
    throw ShapeError("decode", "levels", std::to_string(rmt.size()) + " RMT levels, expected " + std::to_string(cfg.levels));
  }
  const double slope = cfg.leaky_slope;
  Var d;
  for (std::size_t k = cfg.levels; k >= 1; --k) {
    const std::string prefix = "dec" + lvl(k);
    Var g = features[k - 1];
    if (cfg.use_cam) {
      const AttentionParams ap{p(prefix + ".cam.fc1.w"), p(prefix + ".cam.fc1.b"), p(prefix + ".cam.fc2.w"),
                               p(prefix + ".cam.fc2.b")};
      g = channel_attention(g, ap, cfg.attention_reduction);
    }
    if (cfg.use_mtgm) g = mt_guidance(g, Var::constant(rmt[k - 1].to_tensor()));
    if (k == cfg.levels) {
      d = ad::leaky_relu(conv(g, p, prefix + ".in"), slope);
    } else {
      d = ad::leaky_relu(conv(ad::concat_channels({ad::upsample_bilinear2(d), g}), p, prefix + ".fuse"), slope);
    }
    d = residual_enhancement(d, p, prefix + ".re", slope);
  }
  return ad::clamp(conv(d, p, "dec.out"), 0.0, 1.0);
}

Var forward(const PreparedInput& in, const ModelConfig& cfg, const Params& p) {
  return decode(encode(in.views, cfg, p), in.rmt, cfg, p);
}

Image enhance(const Image& rgb, const ModelConfig& cfg, const ModelWeights& weights) {
  cfg.validate();
  check_compatible(cfg, weights);
  const PreparedInput in = prepare_input(rgb, cfg);
  const Var out = forward(in, cfg, Params::constants(weights));
  return Image::from_tensor(out.value());
}

}  // namespace ucolor::net
