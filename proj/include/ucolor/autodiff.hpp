#pragma once

// Reverse-mode automatic differentiation over Tensor values.
//
// A Var is an immutable tensor value, optionally linked to a node of a Tape.
// Ops on Vars compute their result eagerly; when any input is tracked the op
// appends a node (inputs, saved values, backward closure) to that input's
// tape. Untracked inputs produce untracked results, so inference builds no
// graph at all.
//
// A Tape is single-writer: build the graph and call backward() from one
// thread. The kernels behind the ops parallelize internally.

#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ucolor/tensor.hpp"

namespace ucolor::ad {

using NodeId = std::size_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

class Tape;

class Var {
 public:
  Var() = default;

  // Untracked value.
  static Var constant(Tensor value);

  const Tensor& value() const { return *value_; }
  const Shape& shape() const { return value_->shape(); }
  bool defined() const noexcept { return value_ != nullptr; }
  bool tracked() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  NodeId id() const noexcept { return id_; }

  // Shares the value, drops the tape link.
  Var detached() const;

 private:
  friend class Tape;
  std::shared_ptr<const Tensor> value_;
  Tape* tape_ = nullptr;
  NodeId id_ = kNoNode;
};

// Receives the output gradient and one accumulator per op input; a slot is
// null when that input does not need a gradient.
using GradSlots = std::span<Tensor* const>;
using BackwardFn = std::function<void(const Tensor& grad_out, GradSlots grad_in)>;

class Gradients {
 public:
  bool contains(NodeId id) const { return grads_.count(id) != 0; }
  const Tensor& at(NodeId id) const;
  const Tensor& operator[](const Var& v) const { return at(v.id()); }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<NodeId, Tensor> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Trainable input.
  Var leaf(Tensor value);

  // Appends an op node. Returns an untracked Var when no input is tracked.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op);

  // d loss / d leaf for every leaf on this tape (zeros for leaves the loss
  // does not depend on). Each node is visited at most once, in reverse
  // recording order.
  Gradients backward(const Var& loss) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(NodeId id) const;
  const std::string& op_name(NodeId id) const;

 private:
  struct Node {
    std::shared_ptr<const Tensor> value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    std::string op;
    bool leaf = false;
  };
  std::vector<Node> nodes_;
};

enum class Activation { kLeakyRelu, kRelu, kSigmoid };

inline constexpr double kDefaultLeakySlope = 0.2;

// 3x3 stride-1 convolution with zero padding 1. x: Cin x H x W,
// kernel: Cout x Cin x 3 x 3, bias: Cout.
Var conv2d(const Var& x, const Var& kernel, const Var& bias);
Var max_pool2(const Var& x);
Var upsample_bilinear2(const Var& x);
Var activation(const Var& x, Activation kind, double leaky_slope = kDefaultLeakySlope);
Var leaky_relu(const Var& x, double slope = kDefaultLeakySlope);
Var relu(const Var& x);
Var sigmoid(const Var& x);
// N x H x W -> N
Var global_avg_pool(const Var& x);
// x: N, weight: M x N, bias: M -> M
Var fully_connected(const Var& x, const Var& weight, const Var& bias);
Var concat_channels(const std::vector<Var>& parts);

// b is either a's shape, a single value, a per-channel vector (C or C x 1 x 1
// against C x H x W), or a per-pixel map (H x W or 1 x H x W).
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var abs(const Var& a);
Var square(const Var& a);
Var clamp(const Var& a, double lo, double hi);
Var sum(const Var& a);
Var mean(const Var& a);

// Inverse of concat_channels on plain values.
std::vector<Tensor> split_channels(const Tensor& t, std::span<const std::size_t> channels);

}  // namespace ucolor::ad
