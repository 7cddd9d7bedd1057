#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ucolor/autodiff.hpp"
#include "ucolor/colorspace.hpp"
#include "ucolor/image.hpp"
#include "ucolor/waterphysics.hpp"

namespace ucolor::net {

// Architecture hyper-parameters. Full scale is base_width 128, reduction 16;
// the desk defaults keep CPU training tractable.
struct ModelConfig {
  std::size_t base_width = 8;
  std::size_t levels = 3;
  std::size_t attention_reduction = 4;
  double leaky_slope = ad::kDefaultLeakySlope;
  bool use_hsv = true;
  bool use_lab = true;
  bool triplicate_rgb = false;  // every encoder path receives the RGB image
  bool use_mtgm = true;
  bool use_cam = true;
  physics::Prior prior = physics::Prior::kGdcp;
  std::size_t transmission_patch = physics::kDefaultPatch;
  double init_std = 0.02;
  double output_bias = 0.5;

  // Every violated invariant, empty when valid.
  std::vector<std::string> violations() const;
  void validate() const;  // throws ConfigError listing violations

  std::vector<std::string> paths() const;  // active encoder paths, "rgb" first
  std::size_t width(std::size_t level) const { return base_width << (level - 1); }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ParamSpec {
  std::string name;
  Shape shape;
  bool bias = false;
};

// Every parameter the configuration needs, in a fixed order.
std::vector<ParamSpec> declare_parameters(const ModelConfig& cfg);
std::size_t parameter_count(const ModelConfig& cfg);

using ModelWeights = std::map<std::string, Tensor>;

// Weights ~ N(0, init_std) from a seeded generator; biases 0 except the
// reconstruction layer's, which starts at output_bias.
ModelWeights init_weights(const ModelConfig& cfg, std::uint64_t seed);

// Throws ShapeError naming the first missing or mismatching parameter.
void check_compatible(const ModelConfig& cfg, const ModelWeights& weights);

// Name -> Var view of a weight set, either as tape leaves (training) or as
// untracked constants (inference).
class Params {
 public:
  static Params constants(const ModelWeights& weights);
  static Params leaves(const ModelWeights& weights, ad::Tape& tape);

  const ad::Var& operator()(const std::string& name) const;
  const std::map<std::string, ad::Var>& all() const { return vars_; }

 private:
  std::map<std::string, ad::Var> vars_;
};

// y = B2(B1(x) + x) + (B1(x) + x), each block conv-lrelu-conv-lrelu-conv with
// parameters "<prefix>.b{1,2}.c{1,2,3}.{w,b}".
ad::Var residual_enhancement(const ad::Var& x, const Params& p, const std::string& prefix, double slope);

struct AttentionParams {
  ad::Var fc1_w, fc1_b, fc2_w, fc2_b;
};

// s = sigmoid(W2 relu(W1 z + b1) + b2), z = global average pool of F.
ad::Var attention_weights(const ad::Var& features, const AttentionParams& p, std::size_t reduction);
// U = F + F * s, s broadcast per channel.
ad::Var apply_channel_gate(const ad::Var& features, const ad::Var& s);
ad::Var channel_attention(const ad::Var& features, const AttentionParams& p, std::size_t reduction);

// V = U + U * rmt, rmt (1 x H x W) shared by all channels.
ad::Var mt_guidance(const ad::Var& u, const ad::Var& rmt);

struct PreparedInput {
  color::NetworkInput views;
  physics::BackgroundLight light;
  TransmissionMap transmission;
  std::vector<TransmissionMap> rmt;  // pyramid, finest first
};

// Color conversion plus background light, prior transmission, reverse map
// and its pyramid. H and W must be multiples of 4 unless the caller only
// intends to run on aligned crops (training).
PreparedInput prepare_input(const Image& rgb, const ModelConfig& cfg, bool require_multiple = true);
PreparedInput crop_prepared(const PreparedInput& full, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w,
                            std::size_t levels);

// Per-level concatenation of the active paths' features, finest first.
std::vector<ad::Var> encode(const color::NetworkInput& in, const ModelConfig& cfg, const Params& p);
// 3 x H x W reconstruction clamped to [0,1].
ad::Var decode(const std::vector<ad::Var>& features, const std::vector<TransmissionMap>& rmt, const ModelConfig& cfg,
               const Params& p);
ad::Var forward(const PreparedInput& in, const ModelConfig& cfg, const Params& p);

// End-to-end inference on an RGB image whose sides are multiples of 4.
Image enhance(const Image& rgb, const ModelConfig& cfg, const ModelWeights& weights);

}  // namespace ucolor::net
