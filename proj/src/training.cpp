#include "ucolor/training.hpp"

#include <cmath>
#include <cstdio>

#include "ucolor/error.hpp"

namespace ucolor::train {

using ad::Var;

std::string to_string(ReconLoss l) { return l == ReconLoss::kL2 ? "l2" : "l1"; }

ReconLoss recon_loss_from_string(const std::string& s) {
  if (s == "l2") return ReconLoss::kL2;
  if (s == "l1") return ReconLoss::kL1;
  throw ConfigError("unknown reconstruction loss '" + s + "' (expected l2 or l1)");
}

std::string to_string(Reduction r) { return r == Reduction::kSum ? "sum" : "mean"; }

Reduction reduction_from_string(const std::string& s) {
  if (s == "sum") return Reduction::kSum;
  if (s == "mean") return Reduction::kMean;
  throw ConfigError("unknown reduction '" + s + "' (expected sum or mean)");
}

std::vector<std::string> TrainConfig::violations() const {
  std::vector<std::string> out;
  if (!(learning_rate > 0.0)) out.push_back("train.learning_rate must be positive");
  if (batch_size == 0) out.push_back("train.batch_size must be positive");
  if (patch == 0 || patch % 4 != 0) out.push_back("train.patch must be a positive multiple of 4");
  if (use_perceptual && patch < 16) out.push_back("train.patch must be >= 16 when the perceptual loss is on");
  if (!(lambda >= 0.0)) out.push_back("train.lambda must be >= 0");
  return out;
}

void TrainConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid training configuration:";
  for (const auto& s : v) msg += "\n  " + s;
  throw ConfigError(msg);
}

FeatureExtractor::FeatureExtractor(std::uint64_t seed) {
  Rng rng(seed);
  std::size_t cin = 3;
  for (std::size_t w : kWidths) {
    Tensor k({w, cin, 3, 3});
    const double stddev = std::sqrt(2.0 / static_cast<double>(9 * cin));
    for (double& v : k.data()) v = rng.normal(0.0, stddev);
    kernels_.push_back(std::move(k));
    biases_.emplace_back(Shape{w});
    cin = w;
  }
}

FeatureExtractor::FeatureExtractor(std::vector<Tensor> kernels, std::vector<Tensor> biases)
    : kernels_(std::move(kernels)), biases_(std::move(biases)) {
  if (kernels_.empty() || kernels_.size() != biases_.size()) {
    throw ShapeError("feature_extractor", "stages", "kernel and bias counts differ or are zero");
  }
}

Var FeatureExtractor::features(const Var& image) const {
  const std::size_t need = std::size_t{1} << kernels_.size();
  if (image.value().rank() != 3 || image.shape()[1] < need || image.shape()[2] < need) {
    throw ShapeError("perceptual_loss", "size",
                     "image " + shape_string(image.shape()) + " too small for " + std::to_string(kernels_.size()) +
                         " pooling stages (needs >= " + std::to_string(need) + "x" + std::to_string(need) + ")");
  }
  Var x = image;
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    x = ad::max_pool2(ad::relu(ad::conv2d(x, Var::constant(kernels_[i]), Var::constant(biases_[i]))));
  }
  return x;
}

namespace {

void check_pair(const Var& pred, const Tensor& gt, const char* op) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError(op, "shape", shape_string(pred.shape()) + " vs " + shape_string(gt.shape()));
  }
}

Var reduce(const Var& v, Reduction r) { return r == Reduction::kSum ? ad::sum(v) : ad::mean(v); }

}  // namespace

Var l2_loss(const Var& pred, const Tensor& gt, Reduction reduction) {
  check_pair(pred, gt, "l2_loss");
  return reduce(ad::square(ad::sub(pred, Var::constant(gt))), reduction);
}

Var l1_loss(const Var& pred, const Tensor& gt, Reduction reduction) {
  check_pair(pred, gt, "l1_loss");
  return reduce(ad::abs(ad::sub(pred, Var::constant(gt))), reduction);
}

Var perceptual_loss(const Var& pred, const Tensor& gt, const FeatureExtractor& fx, Reduction reduction) {
  check_pair(pred, gt, "perceptual_loss");
  const Var target = fx.features(Var::constant(gt));
  return reduce(ad::abs(ad::sub(fx.features(pred), target)), reduction);
}

Var combine_losses(const Var& recon, const Var& perceptual, double lambda) {
  if (!perceptual.defined()) return recon;
  return ad::add(recon, ad::scale(perceptual, lambda));
}

LossTerms total_loss(const Var& pred, const Tensor& gt, const TrainConfig& cfg, const FeatureExtractor& fx) {
  LossTerms t;
  t.recon = cfg.recon_loss == ReconLoss::kL2 ? l2_loss(pred, gt, cfg.reduction) : l1_loss(pred, gt, cfg.reduction);
  if (cfg.use_perceptual) t.perceptual = perceptual_loss(pred, gt, fx, cfg.reduction);
  t.total = combine_losses(t.recon, t.perceptual, cfg.lambda);
  return t;
}

void adam_step(net::ModelWeights& weights, const std::map<std::string, Tensor>& grads, AdamState& state, double lr,
               const AdamOptions& opts) {
  for (const auto& [name, g] : grads) {
    auto it = weights.find(name);
    if (it == weights.end()) throw ShapeError("adam_step", name, "gradient for unknown weight");
    if (it->second.shape() != g.shape()) {
      throw ShapeError("adam_step", name, shape_string(it->second.shape()) + " vs gradient " + shape_string(g.shape()));
    }
    for (auto* moments : {&state.m, &state.v}) {
      auto [mit, inserted] = moments->try_emplace(name, Tensor::like(g));
      if (!inserted && mit->second.shape() != g.shape()) {
        throw ShapeError("adam_step", name, "optimizer state " + shape_string(mit->second.shape()));
      }
    }
  }
  state.t += 1;
  const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(state.t));
  for (const auto& [name, g] : grads) {
    auto w = weights.at(name).data();
    auto m = state.m.at(name).data();
    auto v = state.v.at(name).data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * g[i];
      v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + opts.epsilon);
    }
  }
}

std::vector<Patch> sample_patches(const std::vector<TrainingPair>& data, const TrainConfig& cfg, Rng& rng) {
  if (data.empty()) throw Error("sample_patches: empty dataset");
  std::vector<Patch> out;
  out.reserve(cfg.batch_size);
  for (std::size_t b = 0; b < cfg.batch_size; ++b) {
    Patch p;
    p.pair = static_cast<std::size_t>(rng.below(data.size()));
    const Image& img = data[p.pair].input;
    if (img.height < cfg.patch || img.width < cfg.patch) {
      throw ShapeError("sample_patches", "size",
                       data[p.pair].name + " is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                           ", smaller than the " + std::to_string(cfg.patch) + " patch");
    }
    p.y0 = static_cast<std::size_t>(rng.below(img.height - cfg.patch + 1));
    p.x0 = static_cast<std::size_t>(rng.below(img.width - cfg.patch + 1));
    out.push_back(p);
  }
  return out;
}

TrainResult train(const std::vector<TrainingPair>& data, const net::ModelConfig& model_cfg, const TrainConfig& cfg,
                  const StepCallback& on_step) {
  return train(data, model_cfg, cfg, net::init_weights(model_cfg, cfg.seed), on_step);
}

TrainResult train(const std::vector<TrainingPair>& data, const net::ModelConfig& model_cfg, const TrainConfig& cfg,
                  net::ModelWeights initial, const StepCallback& on_step) {
  model_cfg.validate();
  cfg.validate();
  net::check_compatible(model_cfg, initial);
  if (data.empty()) throw Error("train: empty dataset");

  std::vector<net::PreparedInput> prepared;
  prepared.reserve(data.size());
  for (const auto& pair : data) {
    if (pair.input.height != pair.reference.height || pair.input.width != pair.reference.width) {
      throw ShapeError("train", "size", pair.name + ": input and reference sizes differ");
    }
    if (pair.input.height < cfg.patch || pair.input.width < cfg.patch) {
      throw ShapeError("train", "size", pair.name + " is smaller than the " + std::to_string(cfg.patch) + " patch");
    }
    prepared.push_back(net::prepare_input(pair.input, model_cfg, /*require_multiple=*/false));
  }

  const FeatureExtractor fx(cfg.extractor_seed);
  // Offset so patch sampling does not replay the weight-init stream.
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  AdamState adam;
  TrainResult result;
  result.weights = std::move(initial);
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto patches = sample_patches(data, cfg, rng);
    ad::Tape tape;
    const net::Params params = net::Params::leaves(result.weights, tape);
    Var batch_loss;
    StepRecord rec;
    rec.step = step;
    for (const auto& patch : patches) {
      const auto in = net::crop_prepared(prepared[patch.pair], patch.y0, patch.x0, cfg.patch, cfg.patch, model_cfg.levels);
      const Tensor gt = data[patch.pair].reference.crop(patch.y0, patch.x0, cfg.patch, cfg.patch).to_tensor();
      const Var pred = net::forward(in, model_cfg, params);
      const LossTerms terms = total_loss(pred, gt, cfg, fx);
      rec.recon += terms.recon.value().item() * inv_batch;
      if (terms.perceptual.defined()) rec.perceptual += terms.perceptual.value().item() * inv_batch;
      batch_loss = batch_loss.defined() ? ad::add(batch_loss, terms.total) : terms.total;
    }
    batch_loss = ad::scale(batch_loss, inv_batch);
    rec.total = batch_loss.value().item();
    if (!std::isfinite(rec.total)) {
      throw NumericError("train: non-finite loss at step " + std::to_string(step));
    }
    const ad::Gradients grads = tape.backward(batch_loss);
    std::map<std::string, Tensor> by_name;
    for (const auto& [name, var] : params.all()) by_name.emplace(name, grads[var]);
    adam_step(result.weights, by_name, adam, cfg.learning_rate);
    result.trace.push_back(rec);
    if (on_step) on_step(rec);
  }
  return result;
}

std::string trace_header() { return "step,recon,perceptual,total"; }

std::string trace_line(const StepRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g", r.step, r.recon, r.perceptual, r.total);
  return buf;
}

}  // namespace ucolor::train
