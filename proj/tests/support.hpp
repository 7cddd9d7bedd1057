#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "ucolor/autodiff.hpp"
#include "ucolor/image.hpp"
#include "ucolor/rng.hpp"

namespace testing {

using ucolor::Image;
using ucolor::Rng;
using ucolor::Shape;
using ucolor::Tensor;
namespace ad = ucolor::ad;

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  Rng rng(seed);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Values whose magnitude stays >= margin, keeping kinked ops (relu, abs,
// pooling ties) away from their non-differentiable points.
inline Tensor away_from_zero(const Shape& shape, std::uint64_t seed, double margin = 0.1) {
  Tensor t(shape);
  Rng rng(seed);
  for (double& v : t.data()) {
    const double m = rng.uniform(margin, 1.0);
    v = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

inline Image random_image(std::size_t h, std::size_t w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Image img(h, w);
  Rng rng(seed);
  for (double& v : img.pixels) v = rng.uniform(lo, hi);
  return img;
}

// sum(f(x) * R) for a fixed random R, so every output element matters.
inline ad::Var probe(const ad::Var& out, std::uint64_t seed) {
  return ad::sum(ad::mul(out, ad::Var::constant(random_tensor(out.shape(), seed))));
}

using LossFn = std::function<ad::Var(const std::vector<ad::Var>&)>;

// max over elements of |analytic - numeric| / max(1, |numeric|), numeric
// gradients by central differences. `elements`, when given, restricts the
// check to those flat indices of input 0.
inline double gradient_error(const std::vector<Tensor>& inputs, const LossFn& f, double h = 1e-5,
                             const std::vector<std::size_t>* elements = nullptr) {
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  const ad::Var loss = f(leaves);
  const ad::Gradients grads = tape.backward(loss);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& analytic = grads[leaves[k]];
    auto check = [&](std::size_t i) {
      auto eval = [&](double delta) {
        std::vector<ad::Var> vs;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          Tensor t = inputs[j];
          if (j == k) t[i] += delta;
          vs.push_back(ad::Var::constant(std::move(t)));
        }
        return f(vs).value().item();
      };
      const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    };
    if (elements && k == 0) {
      for (std::size_t i : *elements) check(i);
    } else if (!elements) {
      for (std::size_t i = 0; i < inputs[k].size(); ++i) check(i);
    }
  }
  return worst;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("ucolor-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
