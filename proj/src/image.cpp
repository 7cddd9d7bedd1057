#include "ucolor/image.hpp"

#include <algorithm>

#include "ucolor/error.hpp"

namespace ucolor {

Image Image::filled(std::size_t h, std::size_t w, const Triple& c) {
  Image img(h, w);
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t k = 0; k < 3; ++k) img.pixels[i * 3 + k] = c[k];
  }
  return img;
}

Triple Image::pixel(std::size_t y, std::size_t x) const {
  const double* p = &pixels[(y * width + x) * 3];
  return {p[0], p[1], p[2]};
}

void Image::set_pixel(std::size_t y, std::size_t x, const Triple& p) {
  double* d = &pixels[(y * width + x) * 3];
  d[0] = p[0];
  d[1] = p[1];
  d[2] = p[2];
}

Tensor Image::to_tensor() const {
  if (empty()) throw ShapeError("image", "size", "empty image");
  Tensor t({3, height, width});
  const std::size_t plane = height * width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) t[c * plane + i] = pixels[i * 3 + c];
  }
  return t;
}

Image Image::from_tensor(const Tensor& chw, ColorSpace s) {
  if (chw.rank() != 3 || chw.extent(0) != 3) {
    throw ShapeError("image", "channels", "expected 3 x H x W, got " + shape_string(chw.shape()));
  }
  Image img(chw.extent(1), chw.extent(2), s);
  const std::size_t plane = img.pixel_count();
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) img.pixels[i * 3 + c] = chw[c * plane + i];
  }
  return img;
}

Image Image::crop(std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) const {
  if (y0 + h > height || x0 + w > width) {
    throw ShapeError("crop", "bounds",
                     std::to_string(h) + "x" + std::to_string(w) + " at (" + std::to_string(y0) + "," +
                         std::to_string(x0) + ") exceeds " + std::to_string(height) + "x" + std::to_string(width));
  }
  Image out(h, w, space);
  for (std::size_t y = 0; y < h; ++y) {
    const auto src = pixels.begin() + static_cast<long>(((y0 + y) * width + x0) * 3);
    std::copy(src, src + static_cast<long>(w * 3), out.pixels.begin() + static_cast<long>(y * w * 3));
  }
  return out;
}

Tensor TransmissionMap::to_tensor() const {
  if (values.empty()) throw ShapeError("transmission", "size", "empty map");
  return Tensor({1, height, width}, values);
}

TransmissionMap TransmissionMap::from_tensor(const Tensor& t) {
  if (t.rank() != 3 || t.extent(0) != 1) {
    throw ShapeError("transmission", "channels", "expected 1 x H x W, got " + shape_string(t.shape()));
  }
  TransmissionMap m(t.extent(1), t.extent(2));
  m.values = t.vec();
  return m;
}

Image pad_to_multiple(const Image& img, std::size_t multiple) {
  const std::size_t h = (img.height + multiple - 1) / multiple * multiple;
  const std::size_t w = (img.width + multiple - 1) / multiple * multiple;
  if (h == img.height && w == img.width) return img;
  Image out(h, w, img.space);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      out.set_pixel(y, x, img.pixel(std::min(y, img.height - 1), std::min(x, img.width - 1)));
    }
  }
  return out;
}

}  // namespace ucolor
