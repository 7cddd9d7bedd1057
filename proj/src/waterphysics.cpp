#include "ucolor/waterphysics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ucolor/error.hpp"
#include "ucolor/kernels.hpp"

namespace ucolor::physics {

std::string to_string(Prior p) {
  switch (p) {
    case Prior::kGdcp: return "gdcp";
    case Prior::kDcp: return "dcp";
    case Prior::kUdcp: return "udcp";
  }
  return "gdcp";
}

Prior prior_from_string(const std::string& s) {
  if (s == "gdcp") return Prior::kGdcp;
  if (s == "dcp") return Prior::kDcp;
  if (s == "udcp") return Prior::kUdcp;
  throw ConfigError("unknown prior '" + s + "' (expected gdcp, dcp or udcp)");
}

namespace {

void check_image(const Image& img, const char* op) {
  if (img.height == 0 || img.width == 0 || img.pixels.size() != img.pixel_count() * 3) {
    throw ShapeError(op, "size", "degenerate " + std::to_string(img.height) + "x" + std::to_string(img.width) + " image");
  }
}

void check_light(const BackgroundLight& a, const char* op) {
  for (std::size_t c = 0; c < 3; ++c) {
    if (!(a[c] > 0.0 && a[c] < 1.0)) {
      throw DomainError(std::string(op) + ": background light component " + std::to_string(a[c]) + " outside (0,1)");
    }
  }
}

void check_patch(std::size_t patch, const char* op) {
  if (patch == 0 || patch % 2 == 0) throw DomainError(std::string(op) + ": patch size must be odd, got " + std::to_string(patch));
}

void check_same_size(const Image& img, const TransmissionMap& t, const char* op) {
  if (t.height != img.height) throw ShapeError(op, "height", std::to_string(t.height) + " vs " + std::to_string(img.height));
  if (t.width != img.width) throw ShapeError(op, "width", std::to_string(t.width) + " vs " + std::to_string(img.width));
}

std::vector<double> channel_plane(const Image& img, std::size_t c) {
  std::vector<double> plane(img.pixel_count());
  for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = img.pixels[i * 3 + c];
  return plane;
}

std::vector<double> channel_window_min(const Image& img, std::size_t c, std::size_t patch) {
  const auto plane = channel_plane(img, c);
  std::vector<double> out(plane.size());
  kernels::window_min(plane, img.height, img.width, patch, out);
  return out;
}

struct Region {
  std::size_t y0, x0, h, w;
};

}  // namespace

BackgroundLightEstimate estimate_background_light_detailed(const Image& img, const BackgroundLightOptions& opts) {
  check_image(img, "estimate_background_light");
  const std::size_t n = img.pixel_count();
  Triple mu{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) mu[c] += img.pixels[i * 3 + c];
  }
  for (double& m : mu) m /= static_cast<double>(n);

  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      const double d = img.pixels[i * 3 + c] - mu[c];
      s += d * d;
    }
    dist[i] = std::sqrt(s);
  }

  auto mean_dist = [&](const Region& r) {
    double s = 0.0;
    for (std::size_t y = r.y0; y < r.y0 + r.h; ++y)
      for (std::size_t x = r.x0; x < r.x0 + r.w; ++x) s += dist[y * img.width + x];
    return s / static_cast<double>(r.h * r.w);
  };

  Region region{0, 0, img.height, img.width};
  while ((region.h > opts.min_region || region.w > opts.min_region) && (region.h >= 2 || region.w >= 2)) {
    const std::size_t h0 = region.h >= 2 ? region.h / 2 : region.h;
    const std::size_t w0 = region.w >= 2 ? region.w / 2 : region.w;
    std::vector<Region> parts;
    for (std::size_t iy = 0; iy < (region.h >= 2 ? 2u : 1u); ++iy) {
      for (std::size_t ix = 0; ix < (region.w >= 2 ? 2u : 1u); ++ix) {
        parts.push_back({region.y0 + iy * h0, region.x0 + ix * w0, iy ? region.h - h0 : h0, ix ? region.w - w0 : w0});
      }
    }
    Region best = parts[0];
    double best_score = mean_dist(parts[0]);
    for (std::size_t k = 1; k < parts.size(); ++k) {
      const double s = mean_dist(parts[k]);
      if (s > best_score) {
        best = parts[k];
        best_score = s;
      }
    }
    region = best;
  }

  std::vector<std::size_t> idx;
  idx.reserve(region.h * region.w);
  for (std::size_t y = region.y0; y < region.y0 + region.h; ++y)
    for (std::size_t x = region.x0; x < region.x0 + region.w; ++x) idx.push_back(y * img.width + x);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
  const auto wanted = static_cast<std::size_t>(std::ceil(opts.top_fraction * static_cast<double>(n)));
  const std::size_t k = std::clamp<std::size_t>(wanted, 1, idx.size());

  BackgroundLightEstimate est;
  Triple sum{0.0, 0.0, 0.0};
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t i = idx[j];
    est.selected.emplace_back(i / img.width, i % img.width);
    for (std::size_t c = 0; c < 3; ++c) sum[c] += img.pixels[i * 3 + c];
  }
  const double lo = opts.epsilon, hi = 1.0 - opts.epsilon;
  est.light.r = std::clamp(sum[0] / static_cast<double>(k), lo, hi);
  est.light.g = std::clamp(sum[1] / static_cast<double>(k), lo, hi);
  est.light.b = std::clamp(sum[2] / static_cast<double>(k), lo, hi);
  return est;
}

BackgroundLight estimate_background_light(const Image& img, const BackgroundLightOptions& opts) {
  return estimate_background_light_detailed(img, opts).light;
}

TransmissionMap gdcp_transmission(const Image& img, const BackgroundLight& a, std::size_t patch) {
  check_image(img, "gdcp_transmission");
  check_light(a, "gdcp_transmission");
  check_patch(patch, "gdcp_transmission");
  TransmissionMap t(img.height, img.width, -std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < 3; ++c) {
    const auto mn = channel_window_min(img, c, patch);
    const double denom = std::max(a[c], 1.0 - a[c]);
    for (std::size_t i = 0; i < mn.size(); ++i) t.values[i] = std::max(t.values[i], (a[c] - mn[i]) / denom);
  }
  for (double& v : t.values) v = std::clamp(v, 0.0, 1.0);
  return t;
}

namespace {

TransmissionMap dark_channel_transmission(const Image& img, const BackgroundLight& a, std::size_t patch,
                                          std::initializer_list<std::size_t> channels, const char* op) {
  check_image(img, op);
  check_light(a, op);
  check_patch(patch, op);
  TransmissionMap dark(img.height, img.width, std::numeric_limits<double>::infinity());
  for (std::size_t c : channels) {
    const auto mn = channel_window_min(img, c, patch);
    for (std::size_t i = 0; i < mn.size(); ++i) dark.values[i] = std::min(dark.values[i], mn[i] / a[c]);
  }
  for (double& v : dark.values) v = std::clamp(1.0 - v, 0.0, 1.0);
  return dark;
}

}  // namespace

TransmissionMap dcp_transmission(const Image& img, const BackgroundLight& a, std::size_t patch) {
  return dark_channel_transmission(img, a, patch, {0, 1, 2}, "dcp_transmission");
}

TransmissionMap udcp_transmission(const Image& img, const BackgroundLight& a, std::size_t patch) {
  return dark_channel_transmission(img, a, patch, {1, 2}, "udcp_transmission");
}

TransmissionMap estimate_transmission(const Image& img, const BackgroundLight& a, Prior prior, std::size_t patch) {
  switch (prior) {
    case Prior::kGdcp: return gdcp_transmission(img, a, patch);
    case Prior::kDcp: return dcp_transmission(img, a, patch);
    case Prior::kUdcp: return udcp_transmission(img, a, patch);
  }
  throw DomainError("unknown prior");
}

TransmissionMap reverse_transmission(const TransmissionMap& t) {
  TransmissionMap r = t;
  for (double& v : r.values) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("reverse_transmission: value " + std::to_string(v) + " outside [0,1]");
    v = 1.0 - v;
  }
  return r;
}

std::vector<TransmissionMap> rmt_pyramid(const TransmissionMap& reverse, std::size_t levels) {
  if (levels == 0) throw DomainError("rmt_pyramid: levels must be >= 1");
  const std::size_t need = std::size_t{1} << (levels - 1);
  if (reverse.height < need || reverse.width < need) {
    throw ShapeError("rmt_pyramid", "size",
                     std::to_string(reverse.height) + "x" + std::to_string(reverse.width) + " map is smaller than " +
                         std::to_string(need) + " for " + std::to_string(levels) + " levels");
  }
  std::vector<TransmissionMap> out{reverse};
  for (std::size_t k = 1; k < levels; ++k) {
    const TransmissionMap& prev = out.back();
    TransmissionMap next(kernels::pooled(prev.height), kernels::pooled(prev.width));
    kernels::max_pool2_forward(prev.values, {1, prev.height, prev.width}, next.values, {});
    out.push_back(std::move(next));
  }
  return out;
}

Image synthesize(const Image& clean, const TransmissionMap& t, const BackgroundLight& a) {
  check_image(clean, "synthesize");
  check_same_size(clean, t, "synthesize");
  Image out(clean.height, clean.width);
  for (std::size_t i = 0; i < clean.pixel_count(); ++i) {
    const double ti = t.values[i];
    if (!(ti >= 0.0 && ti <= 1.0)) throw DomainError("synthesize: transmission " + std::to_string(ti) + " outside [0,1]");
    for (std::size_t c = 0; c < 3; ++c) {
      out.pixels[i * 3 + c] = clean.pixels[i * 3 + c] * ti + a[c] * (1.0 - ti);
    }
  }
  return out;
}

Image invert_model_raw(const Image& observed, const TransmissionMap& t, const BackgroundLight& a, double t_floor) {
  check_image(observed, "invert_model");
  check_same_size(observed, t, "invert_model");
  if (!(t_floor > 0.0 && t_floor <= 1.0)) throw DomainError("invert_model: t_floor must lie in (0,1]");
  Image out(observed.height, observed.width);
  for (std::size_t i = 0; i < observed.pixel_count(); ++i) {
    const double ti = t.values[i];
    const double denom = std::max(ti, t_floor);
    for (std::size_t c = 0; c < 3; ++c) {
      out.pixels[i * 3 + c] = (observed.pixels[i * 3 + c] - a[c] * (1.0 - ti)) / denom;
    }
  }
  return out;
}

Image invert_model(const Image& observed, const TransmissionMap& t, const BackgroundLight& a, double t_floor) {
  Image out = invert_model_raw(observed, t, a, t_floor);
  for (double& v : out.pixels) v = std::clamp(v, 0.0, 1.0);
  return out;
}

RestoreResult classical_restore(const Image& img, Prior prior, const BackgroundLight& a, double t_floor,
                                std::size_t patch) {
  RestoreResult r;
  r.light = a;
  r.transmission = estimate_transmission(img, a, prior, patch);
  r.image = invert_model(img, r.transmission, a, t_floor);
  r.degenerate = std::all_of(r.transmission.values.begin(), r.transmission.values.end(),
                             [t_floor](double v) { return v < t_floor; });
  return r;
}

RestoreResult classical_restore(const Image& img, Prior prior, double t_floor, std::size_t patch) {
  return classical_restore(img, prior, estimate_background_light(img), t_floor, patch);
}

}  // namespace ucolor::physics
