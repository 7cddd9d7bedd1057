#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ucolor/autodiff.hpp"
#include "ucolor/image.hpp"
#include "ucolor/net.hpp"
#include "ucolor/rng.hpp"

namespace ucolor::train {

enum class ReconLoss { kL2, kL1 };
enum class Reduction { kSum, kMean };

std::string to_string(ReconLoss l);
ReconLoss recon_loss_from_string(const std::string& s);
std::string to_string(Reduction r);
Reduction reduction_from_string(const std::string& s);

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 2;
  std::size_t patch = 32;
  double lambda = 0.01;
  ReconLoss recon_loss = ReconLoss::kL2;
  Reduction reduction = Reduction::kMean;
  bool use_perceptual = true;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
  std::uint64_t extractor_seed = 19;

  std::vector<std::string> violations() const;
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Fixed convolutional feature stack standing in for a pretrained perceptual
// network: four stages of {3x3 conv, relu, 2x max-pool} with widths
// 8/16/32/64, He-scaled Gaussian weights from a seed. The deepest stage's
// output is the feature map compared by the perceptual loss.
class FeatureExtractor {
 public:
  static constexpr std::size_t kStages = 4;
  static constexpr std::size_t kWidths[kStages] = {8, 16, 32, 64};

  explicit FeatureExtractor(std::uint64_t seed);
  // Externally supplied stack: kernels[i] is Cout x Cin x 3 x 3, biases[i] Cout.
  FeatureExtractor(std::vector<Tensor> kernels, std::vector<Tensor> biases);

  ad::Var features(const ad::Var& image) const;

  const std::vector<Tensor>& kernels() const { return kernels_; }

 private:
  std::vector<Tensor> kernels_;
  std::vector<Tensor> biases_;
};

ad::Var l2_loss(const ad::Var& pred, const Tensor& gt, Reduction reduction);
ad::Var l1_loss(const ad::Var& pred, const Tensor& gt, Reduction reduction);
// Sum (or mean) of |phi(pred) - phi(gt)| over the extractor's output. The
// reference branch is evaluated without a tape.
ad::Var perceptual_loss(const ad::Var& pred, const Tensor& gt, const FeatureExtractor& fx, Reduction reduction);

struct LossTerms {
  ad::Var recon;
  ad::Var perceptual;  // undefined when the term is disabled
  ad::Var total;
};

LossTerms total_loss(const ad::Var& pred, const Tensor& gt, const TrainConfig& cfg, const FeatureExtractor& fx);
// recon + lambda * perceptual
ad::Var combine_losses(const ad::Var& recon, const ad::Var& perceptual, double lambda);

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::uint64_t t = 0;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// In-place bias-corrected ADAM update of every weight that has a gradient.
void adam_step(net::ModelWeights& weights, const std::map<std::string, Tensor>& grads, AdamState& state, double lr,
               const AdamOptions& opts = {});

struct TrainingPair {
  std::string name;
  Image input;
  Image reference;
};

struct Patch {
  std::size_t pair = 0;  // index into the dataset
  std::size_t y0 = 0, x0 = 0;
};

// Aligned crop coordinates for one batch.
std::vector<Patch> sample_patches(const std::vector<TrainingPair>& data, const TrainConfig& cfg, Rng& rng);

struct StepRecord {
  std::size_t step = 0;
  double recon = 0.0;
  double perceptual = 0.0;
  double total = 0.0;
};

struct TrainResult {
  net::ModelWeights weights;
  std::vector<StepRecord> trace;
};

using StepCallback = std::function<void(const StepRecord&)>;

// steps x {sample, forward, loss, backward, adam}. Throws NumericError
// naming the step when the loss stops being finite.
TrainResult train(const std::vector<TrainingPair>& data, const net::ModelConfig& model_cfg, const TrainConfig& cfg,
                  const StepCallback& on_step = {});
TrainResult train(const std::vector<TrainingPair>& data, const net::ModelConfig& model_cfg, const TrainConfig& cfg,
                  net::ModelWeights initial, const StepCallback& on_step = {});

// "step,recon,perceptual,total"
std::string trace_header();
std::string trace_line(const StepRecord& r);

}  // namespace ucolor::train
