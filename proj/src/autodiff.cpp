#include "ucolor/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "ucolor/error.hpp"
#include "ucolor/kernels.hpp"

namespace ucolor::ad {

Var Var::constant(Tensor value) {
  Var v;
  v.value_ = std::make_shared<const Tensor>(std::move(value));
  return v;
}

Var Var::detached() const {
  Var v;
  v.value_ = value_;
  return v;
}

const Tensor& Gradients::at(NodeId id) const {
  auto it = grads_.find(id);
  if (it == grads_.end()) throw Error("gradients: no gradient recorded for node " + std::to_string(id));
  return it->second;
}

Var Tape::leaf(Tensor value) {
  Var v;
  v.value_ = std::make_shared<const Tensor>(std::move(value));
  v.tape_ = this;
  v.id_ = nodes_.size();
  nodes_.push_back(Node{v.value_, {}, {}, "leaf", true});
  return v;
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op) {
#ifndef NDEBUG
  bool inputs_finite = true;
  for (const auto& in : inputs) inputs_finite = inputs_finite && in.value().all_finite();
  if (inputs_finite && !value.all_finite()) throw NumericError(std::string(op) + ": non-finite output");
#endif
  bool any_tracked = false;
  for (const auto& in : inputs) {
    if (!in.tracked()) continue;
    if (in.tape() != this) throw Error(std::string(op) + ": inputs recorded on different tapes");
    any_tracked = true;
  }
  Var out = Var::constant(std::move(value));
  if (!any_tracked) return out;
  Node node;
  node.value = out.value_;
  node.backward = std::move(backward);
  node.op = op;
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) node.inputs.push_back(in.tracked() ? in.id() : kNoNode);
  out.tape_ = this;
  out.id_ = nodes_.size();
  nodes_.push_back(std::move(node));
  return out;
}

const Tensor& Tape::value(NodeId id) const {
  if (id >= nodes_.size()) throw Error("tape: dangling node " + std::to_string(id));
  return *nodes_[id].value;
}

const std::string& Tape::op_name(NodeId id) const {
  if (id >= nodes_.size()) throw Error("tape: dangling node " + std::to_string(id));
  return nodes_[id].op;
}

Gradients Tape::backward(const Var& loss) const {
  if (!loss.tracked() || loss.tape() != this || loss.id() >= nodes_.size()) {
    throw Error("backward: loss is not a node of this tape (dangling node)");
  }
  if (loss.value().size() != 1) {
    throw ShapeError("backward", "loss", "loss must be scalar, got " + shape_string(loss.shape()));
  }
  std::vector<Tensor> grads(loss.id() + 1);
  grads[loss.id()] = Tensor::like(loss.value(), 1.0);
  std::vector<Tensor*> slots;
  for (NodeId id = loss.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (node.leaf || grads[id].empty()) continue;
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const NodeId in = node.inputs[k];
      if (in == kNoNode) continue;
      if (grads[in].empty()) grads[in] = Tensor::like(*nodes_[in].value);
      slots[k] = &grads[in];
    }
    node.backward(grads[id], slots);
    grads[id] = Tensor();
  }
  Gradients out;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (!nodes_[id].leaf) continue;
    if (id < grads.size() && !grads[id].empty()) {
      out.grads_.emplace(id, std::move(grads[id]));
    } else {
      out.grads_.emplace(id, Tensor::like(*nodes_[id].value));
    }
  }
  return out;
}

namespace {

// Records on the tape of the first tracked input, or returns a constant.
Var emit(Tensor value, std::vector<Var> inputs, BackwardFn fn, const char* op) {
  Tape* tape = nullptr;
  for (const auto& in : inputs) {
    if (in.tracked()) {
      tape = in.tape();
      break;
    }
  }
  if (!tape) return Var::constant(std::move(value));
  return tape->record(std::move(value), std::move(inputs), std::move(fn), op);
}

kernels::Dims chw(const Tensor& t, const char* op) {
  if (t.rank() != 3) throw ShapeError(op, "rank", "expected C x H x W, got " + shape_string(t.shape()));
  return {t.extent(0), t.extent(1), t.extent(2)};
}

}  // namespace

Var conv2d(const Var& x, const Var& kernel, const Var& bias) {
  const kernels::Dims d = chw(x.value(), "conv2d");
  const Tensor& k = kernel.value();
  if (k.rank() != 4) throw ShapeError("conv2d", "kernel", "expected Cout x Cin x 3 x 3, got " + shape_string(k.shape()));
  if (k.extent(2) != 3 || k.extent(3) != 3) throw ShapeError("conv2d", "kernel", "spatial size must be 3x3, got " + shape_string(k.shape()));
  if (k.extent(1) != d.c) {
    throw ShapeError("conv2d", "channels", "input has " + std::to_string(d.c) + " channels, kernel expects " + std::to_string(k.extent(1)));
  }
  const std::size_t cout = k.extent(0);
  if (bias.value().rank() != 1 || bias.value().extent(0) != cout) {
    throw ShapeError("conv2d", "bias", "expected [" + std::to_string(cout) + "], got " + shape_string(bias.shape()));
  }
  Tensor out({cout, d.h, d.w});
  kernels::conv3x3_forward(x.value().data(), d, k.data(), bias.value().data(), cout, out.data());
  auto xv = x.detached(), kv = kernel.detached();
  return emit(std::move(out), {x, kernel, bias},
              [xv, kv, d, cout](const Tensor& g, GradSlots gin) {
                if (gin[0]) kernels::conv3x3_backward_input(g.data(), cout, kv.value().data(), d, gin[0]->data());
                std::span<double> gw = gin[1] ? gin[1]->data() : std::span<double>{};
                std::span<double> gb = gin[2] ? gin[2]->data() : std::span<double>{};
                if (!gw.empty() || !gb.empty()) kernels::conv3x3_backward_params(g.data(), cout, xv.value().data(), d, gw, gb);
              },
              "conv2d");
}

Var max_pool2(const Var& x) {
  const kernels::Dims d = chw(x.value(), "max_pool2");
  Tensor out({d.c, kernels::pooled(d.h), kernels::pooled(d.w)});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.size());
  kernels::max_pool2_forward(x.value().data(), d, out.data(), *argmax);
  return emit(std::move(out), {x},
              [argmax](const Tensor& g, GradSlots gin) {
                auto gx = gin[0]->data();
                for (std::size_t i = 0; i < argmax->size(); ++i) gx[(*argmax)[i]] += g[i];
              },
              "max_pool2");
}

Var upsample_bilinear2(const Var& x) {
  const kernels::Dims d = chw(x.value(), "upsample_bilinear2");
  Tensor out({d.c, 2 * d.h, 2 * d.w});
  kernels::upsample2_forward(x.value().data(), d, out.data());
  return emit(std::move(out), {x},
              [d](const Tensor& g, GradSlots gin) { kernels::upsample2_backward(g.data(), d, gin[0]->data()); },
              "upsample_bilinear2");
}

namespace {

template <typename F, typename DF>
Var unary(const Var& x, F f, DF df, const char* op) {
  const Tensor& xv = x.value();
  Tensor out = Tensor::like(xv);
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  auto saved = x.detached();
  return emit(std::move(out), {x},
              [saved, df](const Tensor& g, GradSlots gin) {
                const Tensor& v = saved.value();
                auto gx = gin[0]->data();
                for (std::size_t i = 0; i < v.size(); ++i) gx[i] += g[i] * df(v[i]);
              },
              op);
}

}  // namespace

Var leaky_relu(const Var& x, double slope) {
  return unary(
      x, [slope](double v) { return v >= 0.0 ? v : slope * v; },
      [slope](double v) { return v >= 0.0 ? 1.0 : slope; }, "leaky_relu");
}

Var relu(const Var& x) {
  return unary(
      x, [](double v) { return v >= 0.0 ? v : 0.0; }, [](double v) { return v >= 0.0 ? 1.0 : 0.0; }, "relu");
}

Var sigmoid(const Var& x) {
  auto s = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  return unary(
      x, s,
      [s](double v) {
        const double y = s(v);
        return y * (1.0 - y);
      },
      "sigmoid");
}

Var activation(const Var& x, Activation kind, double leaky_slope) {
  switch (kind) {
    case Activation::kLeakyRelu: return leaky_relu(x, leaky_slope);
    case Activation::kRelu: return relu(x);
    case Activation::kSigmoid: return sigmoid(x);
  }
  throw DomainError("activation: unknown kind");
}

Var abs(const Var& a) {
  return unary(
      a, [](double v) { return std::fabs(v); },
      [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }, "abs");
}

Var square(const Var& a) {
  return unary(a, [](double v) { return v * v; }, [](double v) { return 2.0 * v; }, "square");
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v) { return (v >= lo && v <= hi) ? 1.0 : 0.0; }, "clamp");
}

Var scale(const Var& a, double factor) {
  return unary(a, [factor](double v) { return factor * v; }, [factor](double) { return factor; }, "scale");
}

Var global_avg_pool(const Var& x) {
  const kernels::Dims d = chw(x.value(), "global_avg_pool");
  Tensor out({d.c});
  const double inv = 1.0 / static_cast<double>(d.plane());
  for (std::size_t c = 0; c < d.c; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d.plane(); ++i) acc += x.value()[c * d.plane() + i];
    out[c] = acc * inv;
  }
  return emit(std::move(out), {x},
              [d, inv](const Tensor& g, GradSlots gin) {
                auto gx = gin[0]->data();
                for (std::size_t c = 0; c < d.c; ++c) {
                  const double v = g[c] * inv;
                  for (std::size_t i = 0; i < d.plane(); ++i) gx[c * d.plane() + i] += v;
                }
              },
              "global_avg_pool");
}

Var fully_connected(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& w = weight.value();
  if (xv.rank() != 1) throw ShapeError("fully_connected", "input", "expected a vector, got " + shape_string(xv.shape()));
  if (w.rank() != 2 || w.extent(1) != xv.size()) {
    throw ShapeError("fully_connected", "weight", shape_string(w.shape()) + " against input " + shape_string(xv.shape()));
  }
  const std::size_t m = w.extent(0), n = w.extent(1);
  if (bias.value().rank() != 1 || bias.value().size() != m) {
    throw ShapeError("fully_connected", "bias", "expected [" + std::to_string(m) + "], got " + shape_string(bias.shape()));
  }
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = bias.value()[i];
    for (std::size_t j = 0; j < n; ++j) acc += w[i * n + j] * xv[j];
    out[i] = acc;
  }
  auto xs = x.detached(), ws = weight.detached();
  return emit(std::move(out), {x, weight, bias},
              [xs, ws, m, n](const Tensor& g, GradSlots gin) {
                const Tensor& xv = xs.value();
                const Tensor& w = ws.value();
                if (gin[0]) {
                  auto gx = gin[0]->data();
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gx[j] += g[i] * w[i * n + j];
                }
                if (gin[1]) {
                  auto gw = gin[1]->data();
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gw[i * n + j] += g[i] * xv[j];
                }
                if (gin[2]) {
                  auto gb = gin[2]->data();
                  for (std::size_t i = 0; i < m; ++i) gb[i] += g[i];
                }
              },
              "fully_connected");
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels", "inputs", "no tensors to concatenate");
  const kernels::Dims d0 = chw(parts[0].value(), "concat_channels");
  std::size_t channels = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const kernels::Dims d = chw(p.value(), "concat_channels");
    if (d.h != d0.h) throw ShapeError("concat_channels", "height", std::to_string(d.h) + " vs " + std::to_string(d0.h));
    if (d.w != d0.w) throw ShapeError("concat_channels", "width", std::to_string(d.w) + " vs " + std::to_string(d0.w));
    offsets.push_back(channels * d0.plane());
    channels += d.c;
  }
  Tensor out({channels, d0.h, d0.w});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<long>(offsets[k]));
  }
  return emit(std::move(out), parts,
              [offsets](const Tensor& g, GradSlots gin) {
                for (std::size_t k = 0; k < gin.size(); ++k) {
                  if (!gin[k]) continue;
                  auto gk = gin[k]->data();
                  for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += g[offsets[k] + i];
                }
              },
              "concat_channels");
}

std::vector<Tensor> split_channels(const Tensor& t, std::span<const std::size_t> channels) {
  if (t.rank() != 3) throw ShapeError("split_channels", "rank", "expected C x H x W, got " + shape_string(t.shape()));
  std::size_t total = 0;
  for (auto c : channels) total += c;
  if (total != t.extent(0)) {
    throw ShapeError("split_channels", "channels", std::to_string(total) + " requested from " + std::to_string(t.extent(0)));
  }
  const std::size_t plane = t.extent(1) * t.extent(2);
  std::vector<Tensor> out;
  std::size_t offset = 0;
  for (auto c : channels) {
    std::vector<double> data(t.data().begin() + static_cast<long>(offset * plane),
                             t.data().begin() + static_cast<long>((offset + c) * plane));
    out.emplace_back(Shape{c, t.extent(1), t.extent(2)}, std::move(data));
    offset += c;
  }
  return out;
}

namespace {

// Maps each element index of `a` onto the index of `b` it pairs with.
struct Broadcast {
  enum Kind { kSame, kScalar, kPerChannel, kPerPixel } kind;
  std::size_t plane = 1;

  std::size_t operator()(std::size_t i) const {
    switch (kind) {
      case kSame: return i;
      case kScalar: return 0;
      case kPerChannel: return i / plane;
      case kPerPixel: return i % plane;
    }
    return i;
  }
};

Broadcast classify(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return {Broadcast::kSame};
  if (b.size() == 1) return {Broadcast::kScalar};
  if (a.rank() == 3) {
    const std::size_t c = a.extent(0), h = a.extent(1), w = a.extent(2);
    const Shape& s = b.shape();
    if (s == Shape{c} || s == Shape{c, 1, 1}) return {Broadcast::kPerChannel, h * w};
    if (s == Shape{h, w} || s == Shape{1, h, w}) return {Broadcast::kPerPixel, h * w};
  }
  throw ShapeError(op, "broadcast", shape_string(b.shape()) + " does not broadcast over " + shape_string(a.shape()));
}

}  // namespace

Var add(const Var& a, const Var& b) {
  const Broadcast map = classify(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[map(i)];
  return emit(std::move(out), {a, b},
              [map](const Tensor& g, GradSlots gin) {
                if (gin[0]) gin[0]->accumulate(g);
                if (gin[1]) {
                  auto gb = gin[1]->data();
                  for (std::size_t i = 0; i < g.size(); ++i) gb[map(i)] += g[i];
                }
              },
              "add");
}

Var mul(const Var& a, const Var& b) {
  const Broadcast map = classify(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[map(i)];
  auto as = a.detached(), bs = b.detached();
  return emit(std::move(out), {a, b},
              [map, as, bs](const Tensor& g, GradSlots gin) {
                const Tensor& av = as.value();
                const Tensor& bv = bs.value();
                if (gin[0]) {
                  auto ga = gin[0]->data();
                  for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[map(i)];
                }
                if (gin[1]) {
                  auto gb = gin[1]->data();
                  for (std::size_t i = 0; i < g.size(); ++i) gb[map(i)] += g[i] * av[i];
                }
              },
              "mul");
}

Var sub(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    try {
      return add(a, scale(b, -1.0));
    } catch (const ShapeError&) {
      throw ShapeError("sub", "shape", shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return emit(std::move(out), {a, b},
              [](const Tensor& g, GradSlots gin) {
                if (gin[0]) gin[0]->accumulate(g);
                if (gin[1]) {
                  auto gb = gin[1]->data();
                  for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                }
              },
              "sub");
}

Var sum(const Var& a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  return emit(Tensor::scalar(acc), {a},
              [](const Tensor& g, GradSlots gin) {
                for (double& v : gin[0]->data()) v += g[0];
              },
              "sum");
}

Var mean(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a.value().size());
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  return emit(Tensor::scalar(acc * inv), {a},
              [inv](const Tensor& g, GradSlots gin) {
                for (double& v : gin[0]->data()) v += g[0] * inv;
              },
              "mean");
}

}  // namespace ucolor::ad
