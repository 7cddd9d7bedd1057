#include <algorithm>
#include <cmath>

#include "ucolor/kernels.hpp"

namespace ucolor::kernels::serial {

namespace {

struct Tap {
  std::size_t i0, i1;
  double frac;
};

Tap source_tap(std::size_t dst, std::size_t n) {
  double src = (static_cast<double>(dst) + 0.5) / 2.0 - 0.5;
  src = std::clamp(src, 0.0, static_cast<double>(n - 1));
  const auto i0 = static_cast<std::size_t>(std::floor(src));
  const std::size_t i1 = std::min(i0 + 1, n - 1);
  return {i0, i1, src - static_cast<double>(i0)};
}

}  // namespace

void conv3x3_forward(std::span<const double> in, Dims d, std::span<const double> weight,
                     std::span<const double> bias, std::size_t cout, std::span<double> out) {
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t y = 0; y < d.h; ++y) {
      for (std::size_t x = 0; x < d.w; ++x) {
        double acc = bias.empty() ? 0.0 : bias[co];
        for (std::size_t ci = 0; ci < d.c; ++ci) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const long sy = static_cast<long>(y) + ky - 1;
              const long sx = static_cast<long>(x) + kx - 1;
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(d.h) || sx >= static_cast<long>(d.w)) continue;
              acc += weight[((co * d.c + ci) * 3 + ky) * 3 + kx] * in[(ci * d.h + sy) * d.w + sx];
            }
          }
        }
        out[(co * d.h + y) * d.w + x] = acc;
      }
    }
  }
}

void conv3x3_backward_input(std::span<const double> grad_out, std::size_t cout, std::span<const double> weight,
                            Dims d, std::span<double> grad_in) {
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t y = 0; y < d.h; ++y) {
      for (std::size_t x = 0; x < d.w; ++x) {
        const double g = grad_out[(co * d.h + y) * d.w + x];
        for (std::size_t ci = 0; ci < d.c; ++ci) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const long sy = static_cast<long>(y) + ky - 1;
              const long sx = static_cast<long>(x) + kx - 1;
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(d.h) || sx >= static_cast<long>(d.w)) continue;
              grad_in[(ci * d.h + sy) * d.w + sx] += g * weight[((co * d.c + ci) * 3 + ky) * 3 + kx];
            }
          }
        }
      }
    }
  }
}

void conv3x3_backward_params(std::span<const double> grad_out, std::size_t cout, std::span<const double> in, Dims d,
                             std::span<double> grad_weight, std::span<double> grad_bias) {
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t y = 0; y < d.h; ++y) {
      for (std::size_t x = 0; x < d.w; ++x) {
        const double g = grad_out[(co * d.h + y) * d.w + x];
        if (!grad_bias.empty()) grad_bias[co] += g;
        if (grad_weight.empty()) continue;
        for (std::size_t ci = 0; ci < d.c; ++ci) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const long sy = static_cast<long>(y) + ky - 1;
              const long sx = static_cast<long>(x) + kx - 1;
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(d.h) || sx >= static_cast<long>(d.w)) continue;
              grad_weight[((co * d.c + ci) * 3 + ky) * 3 + kx] += g * in[(ci * d.h + sy) * d.w + sx];
            }
          }
        }
      }
    }
  }
}

void max_pool2_forward(std::span<const double> in, Dims d, std::span<double> out, std::span<std::uint32_t> argmax) {
  const std::size_t oh = pooled(d.h), ow = pooled(d.w);
  for (std::size_t c = 0; c < d.c; ++c) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (c * d.h + 2 * oy) * d.w + 2 * ox;
        for (std::size_t y = 2 * oy; y < std::min(2 * oy + 2, d.h); ++y) {
          for (std::size_t x = 2 * ox; x < std::min(2 * ox + 2, d.w); ++x) {
            const std::size_t i = (c * d.h + y) * d.w + x;
            if (in[i] > in[best]) best = i;
          }
        }
        const std::size_t o = (c * oh + oy) * ow + ox;
        out[o] = in[best];
        if (!argmax.empty()) argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

void upsample2_forward(std::span<const double> in, Dims d, std::span<double> out) {
  const std::size_t oh = 2 * d.h, ow = 2 * d.w;
  for (std::size_t c = 0; c < d.c; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      const Tap ty = source_tap(y, d.h);
      for (std::size_t x = 0; x < ow; ++x) {
        const Tap tx = source_tap(x, d.w);
        auto v = [&](std::size_t yy, std::size_t xx) { return in[(c * d.h + yy) * d.w + xx]; };
        const double top = (1.0 - tx.frac) * v(ty.i0, tx.i0) + tx.frac * v(ty.i0, tx.i1);
        const double bot = (1.0 - tx.frac) * v(ty.i1, tx.i0) + tx.frac * v(ty.i1, tx.i1);
        out[(c * oh + y) * ow + x] = (1.0 - ty.frac) * top + ty.frac * bot;
      }
    }
  }
}

void upsample2_backward(std::span<const double> grad_out, Dims d, std::span<double> grad_in) {
  const std::size_t oh = 2 * d.h, ow = 2 * d.w;
  for (std::size_t c = 0; c < d.c; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      const Tap ty = source_tap(y, d.h);
      for (std::size_t x = 0; x < ow; ++x) {
        const Tap tx = source_tap(x, d.w);
        const double g = grad_out[(c * oh + y) * ow + x];
        auto add = [&](std::size_t yy, std::size_t xx, double wgt) { grad_in[(c * d.h + yy) * d.w + xx] += wgt * g; };
        add(ty.i0, tx.i0, (1.0 - ty.frac) * (1.0 - tx.frac));
        add(ty.i0, tx.i1, (1.0 - ty.frac) * tx.frac);
        add(ty.i1, tx.i0, ty.frac * (1.0 - tx.frac));
        add(ty.i1, tx.i1, ty.frac * tx.frac);
      }
    }
  }
}

namespace {

template <typename Pick>
void window_reduce(std::span<const double> plane, std::size_t h, std::size_t w, std::size_t patch,
                   std::span<double> out, Pick pick) {
  const long r = static_cast<long>(patch / 2);
  for (long y = 0; y < static_cast<long>(h); ++y) {
    for (long x = 0; x < static_cast<long>(w); ++x) {
      double acc = plane[y * w + x];
      for (long yy = std::max(0L, y - r); yy <= std::min<long>(h - 1, y + r); ++yy) {
        for (long xx = std::max(0L, x - r); xx <= std::min<long>(w - 1, x + r); ++xx) {
          acc = pick(acc, plane[yy * w + xx]);
        }
      }
      out[y * w + x] = acc;
    }
  }
}

}  // namespace

void window_min(std::span<const double> plane, std::size_t h, std::size_t w, std::size_t patch,
                std::span<double> out) {
  window_reduce(plane, h, w, patch, out, [](double a, double b) { return std::min(a, b); });
}

void window_max(std::span<const double> plane, std::size_t h, std::size_t w, std::size_t patch,
                std::span<double> out) {
  window_reduce(plane, h, w, patch, out, [](double a, double b) { return std::max(a, b); });
}

}  // namespace ucolor::kernels::serial
