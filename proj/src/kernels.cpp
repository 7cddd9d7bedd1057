#include "ucolor/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ucolor::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

using Index = long;

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

void conv3x3_forward(std::span<const double> in, Dims d, std::span<const double> weight,
                     std::span<const double> bias, std::size_t cout, std::span<double> out) {
  const Index rows = static_cast<Index>(cout * d.h);
  const Index h = static_cast<Index>(d.h), w = static_cast<Index>(d.w);
  const bool par = cout * d.size() * 9 > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (Index row = 0; row < rows; ++row) {
    const Index co = row / h, y = row % h;
    double* dst = out.data() + row * w;
    std::fill(dst, dst + w, bias.empty() ? 0.0 : bias[co]);
    for (Index ci = 0; ci < static_cast<Index>(d.c); ++ci) {
      for (Index ky = 0; ky < 3; ++ky) {
        const Index sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        const double* src = in.data() + (ci * h + sy) * w;
        for (Index kx = 0; kx < 3; ++kx) {
          const double k = weight[((co * d.c + ci) * 3 + ky) * 3 + kx];
          const Index x0 = std::max<Index>(0, 1 - kx), x1 = std::min<Index>(w, w + 1 - kx);
          const Index off = kx - 1;
          for (Index x = x0; x < x1; ++x) dst[x] += k * src[x + off];
        }
      }
    }
  }
}

void conv3x3_backward_input(std::span<const double> grad_out, std::size_t cout, std::span<const double> weight,
                            Dims d, std::span<double> grad_in) {
  const Index rows = static_cast<Index>(d.c * d.h);
  const Index h = static_cast<Index>(d.h), w = static_cast<Index>(d.w);
  const bool par = cout * d.size() * 9 > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (Index row = 0; row < rows; ++row) {
    const Index ci = row / h, sy = row % h;
    double* dst = grad_in.data() + row * w;
    for (Index co = 0; co < static_cast<Index>(cout); ++co) {
      for (Index ky = 0; ky < 3; ++ky) {
        const Index y = sy - ky + 1;
        if (y < 0 || y >= h) continue;
        const double* g = grad_out.data() + (co * h + y) * w;
        for (Index kx = 0; kx < 3; ++kx) {
          const double k = weight[((co * d.c + ci) * 3 + ky) * 3 + kx];
          // output x = sx - kx + 1 must lie in [0, w)
          const Index s0 = std::max<Index>(0, kx - 1), s1 = std::min<Index>(w, w + kx - 1);
          const Index off = 1 - kx;
          for (Index sx = s0; sx < s1; ++sx) dst[sx] += k * g[sx + off];
        }
      }
    }
  }
}

void conv3x3_backward_params(std::span<const double> grad_out, std::size_t cout, std::span<const double> in, Dims d,
                             std::span<double> grad_weight, std::span<double> grad_bias) {
  const Index h = static_cast<Index>(d.h), w = static_cast<Index>(d.w);
  const bool par = cout * d.size() * 9 > kParallelWork;
  if (!grad_bias.empty()) {
    for (std::size_t co = 0; co < cout; ++co) {
      const double* g = grad_out.data() + co * d.plane();
      double acc = 0.0;
      for (std::size_t i = 0; i < d.plane(); ++i) acc += g[i];
      grad_bias[co] += acc;
    }
  }
  if (grad_weight.empty()) return;
  const Index pairs = static_cast<Index>(cout * d.c);
#pragma omp parallel for schedule(static) if (par)
  for (Index pair = 0; pair < pairs; ++pair) {
    const Index co = pair / static_cast<Index>(d.c), ci = pair % static_cast<Index>(d.c);
    const double* g = grad_out.data() + co * h * w;
    const double* src = in.data() + ci * h * w;
    for (Index ky = 0; ky < 3; ++ky) {
      for (Index kx = 0; kx < 3; ++kx) {
        const Index y0 = std::max<Index>(0, 1 - ky), y1 = std::min<Index>(h, h + 1 - ky);
        const Index x0 = std::max<Index>(0, 1 - kx), x1 = std::min<Index>(w, w + 1 - kx);
        double acc = 0.0;
        for (Index y = y0; y < y1; ++y) {
          const double* grow = g + y * w;
          const double* srow = src + (y + ky - 1) * w + (kx - 1);
          for (Index x = x0; x < x1; ++x) acc += grow[x] * srow[x];
        }
        grad_weight[pair * 9 + ky * 3 + kx] += acc;
      }
    }
  }
}

void max_pool2_forward(std::span<const double> in, Dims d, std::span<double> out, std::span<std::uint32_t> argmax) {
  const std::size_t oh = pooled(d.h), ow = pooled(d.w);
  const Index rows = static_cast<Index>(d.c * oh);
  const bool par = d.size() > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (Index row = 0; row < rows; ++row) {
    const std::size_t c = row / oh, oy = row % oh;
    const std::size_t y0 = 2 * oy, y1 = std::min(y0 + 2, d.h);
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const std::size_t x0 = 2 * ox, x1 = std::min(x0 + 2, d.w);
      std::size_t best = (c * d.h + y0) * d.w + x0;
      for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t x = x0; x < x1; ++x) {
          const std::size_t i = (c * d.h + y) * d.w + x;
          if (in[i] > in[best]) best = i;
        }
      }
      out[row * ow + ox] = in[best];
      if (!argmax.empty()) argmax[row * ow + ox] = static_cast<std::uint32_t>(best);
    }
  }
}

namespace {

struct Taps {
  std::vector<std::size_t> i0, i1;
  std::vector<double> frac;
};

Taps source_taps(std::size_t n) {
  Taps t;
  const std::size_t m = 2 * n;
  t.i0.resize(m);
  t.i1.resize(m);
  t.frac.resize(m);
  for (std::size_t dst = 0; dst < m; ++dst) {
    double src = (static_cast<double>(dst) + 0.5) / 2.0 - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(n - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    t.i0[dst] = i0;
    t.i1[dst] = std::min(i0 + 1, n - 1);
    t.frac[dst] = src - static_cast<double>(i0);
  }
  return t;
}

}  // namespace

void upsample2_forward(std::span<const double> in, Dims d, std::span<double> out) {
  const Taps ty = source_taps(d.h), tx = source_taps(d.w);
  const std::size_t oh = 2 * d.h, ow = 2 * d.w;
  const Index rows = static_cast<Index>(d.c * oh);
  const bool par = 4 * d.size() > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (Index row = 0; row < rows; ++row) {
    const std::size_t c = row / oh, y = row % oh;
    const double* r0 = in.data() + (c * d.h + ty.i0[y]) * d.w;
    const double* r1 = in.data() + (c * d.h + ty.i1[y]) * d.w;
    const double fy = ty.frac[y];
    double* dst = out.data() + row * ow;
    for (std::size_t x = 0; x < ow; ++x) {
      const double fx = tx.frac[x];
      const double top = (1.0 - fx) * r0[tx.i0[x]] + fx * r0[tx.i1[x]];
      const double bot = (1.0 - fx) * r1[tx.i0[x]] + fx * r1[tx.i1[x]];
      dst[x] = (1.0 - fy) * top + fy * bot;
    }
  }
}

void upsample2_backward(std::span<const double> grad_out, Dims d, std::span<double> grad_in) {
  const Taps ty = source_taps(d.h), tx = source_taps(d.w);
  const std::size_t oh = 2 * d.h, ow = 2 * d.w;
  const bool par = 4 * d.size() > kParallelWork;
  // Scatter within a channel, channels in parallel.
#pragma omp parallel for schedule(static) if (par)
  for (Index c = 0; c < static_cast<Index>(d.c); ++c) {
    double* gin = grad_in.data() + c * d.plane();
    for (std::size_t y = 0; y < oh; ++y) {
      const double fy = ty.frac[y];
      const double* g = grad_out.data() + (c * oh + y) * ow;
      double* r0 = gin + ty.i0[y] * d.w;
      double* r1 = gin + ty.i1[y] * d.w;
      for (std::size_t x = 0; x < ow; ++x) {
        const double fx = tx.frac[x];
        r0[tx.i0[x]] += (1.0 - fy) * (1.0 - fx) * g[x];
        r0[tx.i1[x]] += (1.0 - fy) * fx * g[x];
        r1[tx.i0[x]] += fy * (1.0 - fx) * g[x];
        r1[tx.i1[x]] += fy * fx * g[x];
      }
    }
  }
}

namespace {

// Separable window reduction: along rows, then along columns.
template <typename Pick>
void window_reduce(std::span<const double> plane, std::size_t h, std::size_t w, std::size_t patch,
                   std::span<double> out, Pick pick) {
  const Index r = static_cast<Index>(patch / 2);
  const Index H = static_cast<Index>(h), W = static_cast<Index>(w);
  std::vector<double> tmp(h * w);
  const bool par = h * w * patch > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (Index y = 0; y < H; ++y) {
    const double* src = plane.data() + y * W;
    for (Index x = 0; x < W; ++x) {
      double acc = src[x];
      const Index x1 = std::min(W - 1, x + r);
      for (Index xx = std::max<Index>(0, x - r); xx <= x1; ++xx) acc = pick(acc, src[xx]);
      tmp[y * W + x] = acc;
    }
  }
#pragma omp parallel for schedule(static) if (par)
  for (Index y = 0; y < H; ++y) {
    const Index y0 = std::max<Index>(0, y - r), y1 = std::min(H - 1, y + r);
    double* dst = out.data() + y * W;
    for (Index x = 0; x < W; ++x) dst[x] = tmp[y0 * W + x];
    for (Index yy = y0 + 1; yy <= y1; ++yy) {
      const double* src = tmp.data() + yy * W;
      for (Index x = 0; x < W; ++x) dst[x] = pick(dst[x], src[x]);
    }
  }
}

}  // namespace

void window_min(std::span<const double> plane, std::size_t h, std::size_t w, std::size_t patch,
                std::span<double> out) {
  window_reduce(plane, h, w, patch, out, [](double a, double b) { return b < a ? b : a; });
}

void window_max(std::span<const double> plane, std::size_t h, std::size_t w, std::size_t patch,
                std::span<double> out) {
  window_reduce(plane, h, w, patch, out, [](double a, double b) { return b > a ? b : a; });
}

}  // namespace ucolor::kernels
