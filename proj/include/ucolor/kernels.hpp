#pragma once

// Raw compute kernels over C x H x W planes. The functions in
// ucolor::kernels are OpenMP-parallel (when built with OpenMP) and are what
// the autodiff ops call; ucolor::kernels::serial holds straightforward
// single-threaded versions with identical signatures, kept as the reference
// the parallel kernels are tested and benchmarked against.
//
// Every parallel kernel partitions work so that each output element is
// produced by exactly one thread with a fixed summation order: results are
// bit-identical for any thread count.
//
// Functions named *_backward_* accumulate into their output spans.

#include <cstddef>
#include <cstdint>
#include <span>

namespace ucolor::kernels {

struct Dims {
  std::size_t c = 1, h = 1, w = 1;
  std::size_t plane() const noexcept { return h * w; }
  std::size_t size() const noexcept { return c * h * w; }
};

inline std::size_t pooled(std::size_t n) { return (n + 1) / 2; }

// 3x3, stride 1, zero padding 1. weight is Cout x Cin x 3 x 3.
void conv3x3_forward(std::span<const double> in, Dims in_dims, std::span<const double> weight,
                     std::span<const double> bias, std::size_t cout, std::span<double> out);
void conv3x3_backward_input(std::span<const double> grad_out, std::size_t cout,
                            std::span<const double> weight, Dims in_dims, std::span<double> grad_in);
// Either grad_weight or grad_bias may be empty to skip it.
void conv3x3_backward_params(std::span<const double> grad_out, std::size_t cout, std::span<const double> in,
                             Dims in_dims, std::span<double> grad_weight, std::span<double> grad_bias);

// 2x2 window, stride 2, truncated windows at odd edges. argmax receives the
// flat input index (within the whole tensor) of the first maximum.
void max_pool2_forward(std::span<const double> in, Dims in_dims, std::span<double> out,
                       std::span<std::uint32_t> argmax);

// Exact 2x upsampling with half-pixel centres: src = (dst + 0.5) / 2 - 0.5,
// clamped to [0, n - 1].
void upsample2_forward(std::span<const double> in, Dims in_dims, std::span<double> out);
void upsample2_backward(std::span<const double> grad_out, Dims in_dims, std::span<double> grad_in);

// Min / max over a patch x patch window centred on each pixel, truncated at
// the borders. Single plane, patch odd.
void window_min(std::span<const double> plane, std::size_t h, std::size_t w, std::size_t patch,
                std::span<double> out);
void window_max(std::span<const double> plane, std::size_t h, std::size_t w, std::size_t patch,
                std::span<double> out);

// Number of threads the parallel kernels will use.
int max_threads();
void set_threads(int n);

namespace serial {

void conv3x3_forward(std::span<const double> in, Dims in_dims, std::span<const double> weight,
                     std::span<const double> bias, std::size_t cout, std::span<double> out);
void conv3x3_backward_input(std::span<const double> grad_out, std::size_t cout,
                            std::span<const double> weight, Dims in_dims, std::span<double> grad_in);
void conv3x3_backward_params(std::span<const double> grad_out, std::size_t cout, std::span<const double> in,
                             Dims in_dims, std::span<double> grad_weight, std::span<double> grad_bias);
void max_pool2_forward(std::span<const double> in, Dims in_dims, std::span<double> out,
                       std::span<std::uint32_t> argmax);
void upsample2_forward(std::span<const double> in, Dims in_dims, std::span<double> out);
void upsample2_backward(std::span<const double> grad_out, Dims in_dims, std::span<double> grad_in);
void window_min(std::span<const double> plane, std::size_t h, std::size_t w, std::size_t patch,
                std::span<double> out);
void window_max(std::span<const double> plane, std::size_t h, std::size_t w, std::size_t patch,
                std::span<double> out);

}  // namespace serial

}  // namespace ucolor::kernels
