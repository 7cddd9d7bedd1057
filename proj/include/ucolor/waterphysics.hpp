#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ucolor/image.hpp"

namespace ucolor::physics {

enum class Prior { kGdcp, kDcp, kUdcp };

std::string to_string(Prior p);
Prior prior_from_string(const std::string& s);

struct BackgroundLight {
  double r = 0.5, g = 0.5, b = 0.5;
  double operator[](std::size_t c) const { return c == 0 ? r : (c == 1 ? g : b); }
  Triple triple() const { return {r, g, b}; }
};

struct BackgroundLightOptions {
  double epsilon = 1e-3;          // A is clamped to [eps, 1 - eps]
  std::size_t min_region = 32;    // quad-tree stops once both sides are <= this
  double top_fraction = 1e-3;     // share of the image's pixels averaged into A
};

struct BackgroundLightEstimate {
  BackgroundLight light;
  // Pixels averaged into A, as (y, x).
  std::vector<std::pair<std::size_t, std::size_t>> selected;
};

// Quad-tree search: repeatedly descend into the quadrant whose pixels lie
// farthest (mean Euclidean distance) from the global mean color, then
// average the most distant pixels of the final region.
BackgroundLightEstimate estimate_background_light_detailed(const Image& img,
                                                            const BackgroundLightOptions& opts = {});
BackgroundLight estimate_background_light(const Image& img, const BackgroundLightOptions& opts = {});

inline constexpr std::size_t kDefaultPatch = 15;

// max over c, y in patch of (A^c - I^c(y)) / max(A^c, 1 - A^c), clamped to [0,1].
TransmissionMap gdcp_transmission(const Image& img, const BackgroundLight& a, std::size_t patch = kDefaultPatch);
// 1 - min over c in {r,g,b}, y in patch of I^c(y) / A^c, clamped.
TransmissionMap dcp_transmission(const Image& img, const BackgroundLight& a, std::size_t patch = kDefaultPatch);
// As DCP over {g,b} only.
TransmissionMap udcp_transmission(const Image& img, const BackgroundLight& a, std::size_t patch = kDefaultPatch);
TransmissionMap estimate_transmission(const Image& img, const BackgroundLight& a, Prior prior,
                                      std::size_t patch = kDefaultPatch);

TransmissionMap reverse_transmission(const TransmissionMap& t);

// Level 0 is the input; level k+1 is the 2x2 max-pool of level k.
std::vector<TransmissionMap> rmt_pyramid(const TransmissionMap& reverse, std::size_t levels);

// I = J * T + A * (1 - T)
Image synthesize(const Image& clean, const TransmissionMap& t, const BackgroundLight& a);

inline constexpr double kDefaultTFloor = 0.1;

// Unclamped inverse: (I - A (1 - T)) / max(T, t_floor).
Image invert_model_raw(const Image& observed, const TransmissionMap& t, const BackgroundLight& a,
                       double t_floor = kDefaultTFloor);
// Same, clamped to [0,1].
Image invert_model(const Image& observed, const TransmissionMap& t, const BackgroundLight& a,
                   double t_floor = kDefaultTFloor);

struct RestoreResult {
  Image image;
  BackgroundLight light;
  TransmissionMap transmission;
  // Every pixel's transmission fell below t_floor: the inversion is floor
  // division everywhere and carries no information.
  bool degenerate = false;
};

RestoreResult classical_restore(const Image& img, Prior prior, double t_floor = kDefaultTFloor,
                                std::size_t patch = kDefaultPatch);
// Restoration with a known background light.
RestoreResult classical_restore(const Image& img, Prior prior, const BackgroundLight& a,
                                double t_floor = kDefaultTFloor, std::size_t patch = kDefaultPatch);

}  // namespace ucolor::physics
