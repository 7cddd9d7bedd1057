#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "ucolor/tensor.hpp"

namespace ucolor {

enum class ColorSpace { kRgb, kHsv01, kLab01 };

using Triple = std::array<double, 3>;

// H x W x 3 interleaved pixels. Values are in [0,1] for every tagged space.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  ColorSpace space = ColorSpace::kRgb;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, ColorSpace s = ColorSpace::kRgb, double fill = 0.0)
      : height(h), width(w), space(s), pixels(h * w * 3, fill) {}

  static Image filled(std::size_t h, std::size_t w, const Triple& c);

  std::size_t pixel_count() const noexcept { return height * width; }
  bool empty() const noexcept { return pixels.empty(); }

  double& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
  Triple pixel(std::size_t y, std::size_t x) const;
  void set_pixel(std::size_t y, std::size_t x, const Triple& p);

  // 3 x H x W planar copy for the network.
  Tensor to_tensor() const;
  static Image from_tensor(const Tensor& chw, ColorSpace s = ColorSpace::kRgb);

  Image crop(std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) const;

  friend bool operator==(const Image&, const Image&) = default;
};

// Single-channel H x W map; values in [0,1].
struct TransmissionMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  TransmissionMap() = default;
  TransmissionMap(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}

  double& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }

  // 1 x H x W
  Tensor to_tensor() const;
  static TransmissionMap from_tensor(const Tensor& t);

  friend bool operator==(const TransmissionMap&, const TransmissionMap&) = default;
};

// Pads by edge replication so both extents become multiples of `multiple`.
Image pad_to_multiple(const Image& img, std::size_t multiple);

}  // namespace ucolor
