#include "ucolor/colorspace.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ucolor/error.hpp"

namespace ucolor::color {

namespace {

void check_unit(const Triple& p, const char* op) {
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DomainError(std::string(op) + ": component " + std::to_string(v) + " outside [0,1]");
    }
  }
}

// IEC 61966-2-1 sRGB primaries, D65.
constexpr double kRgbToXyz[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};

using Mat3 = std::array<std::array<double, 3>, 3>;

Triple mat_apply(const double m[3][3], const Triple& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
          m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

Triple mat_apply(const Mat3& m, const Triple& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
          m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

Mat3 inverse(const double m[3][3]) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  Mat3 r{};
  r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return r;
}

const Mat3& xyz_to_rgb() {
  static const Mat3 m = inverse(kRgbToXyz);
  return m;
}

// White point = image of linear (1,1,1), so sRGB white lands on L=100, a=b=0 exactly.
const Triple& white() {
  static const Triple w = mat_apply(kRgbToXyz, Triple{1.0, 1.0, 1.0});
  return w;
}

double srgb_to_linear(double v) { return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4); }
double linear_to_srgb(double v) { return v <= 0.0031308 ? v * 12.92 : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055; }

constexpr double kDelta = 6.0 / 29.0;

double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}
double lab_f_inv(double t) { return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0); }

}  // namespace

Triple rgb_to_hsv(const Triple& rgb) {
  check_unit(rgb, "rgb_to_hsv");
  const auto [r, g, b] = rgb;
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  if (delta == 0.0) return {0.0, 0.0, mx};
  double h;
  if (mx == r) {
    h = (g - b) / delta;
    if (h < 0.0) h += 6.0;
  } else if (mx == g) {
    h = (b - r) / delta + 2.0;
  } else {
    h = (r - g) / delta + 4.0;
  }
  h /= 6.0;
  if (h >= 1.0) h -= 1.0;
  return {h, delta / mx, mx};
}

Triple hsv_to_rgb(const Triple& hsv) {
  check_unit(hsv, "hsv_to_rgb");
  const auto [h, s, v] = hsv;
  if (s == 0.0) return {v, v, v};
  double sector = h * 6.0;
  if (sector >= 6.0) sector -= 6.0;
  const int i = static_cast<int>(std::floor(sector));
  const double f = sector - i;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

Triple rgb_to_lab(const Triple& rgb) {
  check_unit(rgb, "rgb_to_lab");
  const Triple lin{srgb_to_linear(rgb[0]), srgb_to_linear(rgb[1]), srgb_to_linear(rgb[2])};
  // Grays map onto the white point's axis: X/Xn = Y/Yn = Z/Zn = lin. Taken
  // directly so a and b are exactly zero instead of matrix round-off.
  if (rgb[0] == rgb[1] && rgb[1] == rgb[2]) return {116.0 * lab_f(lin[0]) - 16.0, 0.0, 0.0};
  const Triple xyz = mat_apply(kRgbToXyz, lin);
  const Triple& w = white();
  const double fx = lab_f(xyz[0] / w[0]);
  const double fy = lab_f(xyz[1] / w[1]);
  const double fz = lab_f(xyz[2] / w[2]);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

LabToRgb lab_to_rgb_checked(const Triple& lab) {
  const double fy = (lab[0] + 16.0) / 116.0;
  const double fx = fy + lab[1] / 500.0;
  const double fz = fy - lab[2] / 200.0;
  const Triple& w = white();
  const Triple xyz{w[0] * lab_f_inv(fx), w[1] * lab_f_inv(fy), w[2] * lab_f_inv(fz)};
  const Triple lin = mat_apply(xyz_to_rgb(), xyz);
  LabToRgb out;
  constexpr double kGamutSlack = 1e-9;
  for (int c = 0; c < 3; ++c) {
    double v = lin[c];
    if (v < -kGamutSlack || v > 1.0 + kGamutSlack) out.out_of_gamut = true;
    v = std::clamp(v, 0.0, 1.0);
    out.rgb[c] = std::clamp(linear_to_srgb(v), 0.0, 1.0);
  }
  return out;
}

Triple normalize_lab(const Triple& lab) {
  return {std::clamp(lab[0] / 100.0, 0.0, 1.0), std::clamp((lab[1] + 128.0) / 255.0, 0.0, 1.0),
          std::clamp((lab[2] + 128.0) / 255.0, 0.0, 1.0)};
}

namespace {

// Exceptions must not escape an OpenMP region; validate up front.
void check_image(const Image& img, const char* op) {
  for (double v : img.pixels) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DomainError(std::string(op) + ": pixel value " + std::to_string(v) + " outside [0,1]");
    }
  }
}

}  // namespace

Image rgb_to_hsv(const Image& rgb) {
  check_image(rgb, "rgb_to_hsv");
  Image out(rgb.height, rgb.width, ColorSpace::kHsv01);
  const long n = static_cast<long>(rgb.pixel_count());
#pragma omp parallel for schedule(static) if (n > 4096)
  for (long i = 0; i < n; ++i) {
    const double* p = &rgb.pixels[i * 3];
    const Triple hsv = rgb_to_hsv(Triple{p[0], p[1], p[2]});
    std::copy(hsv.begin(), hsv.end(), out.pixels.begin() + i * 3);
  }
  return out;
}

std::vector<Triple> lab_pixels(const Image& rgb) {
  check_image(rgb, "rgb_to_lab");
  std::vector<Triple> out(rgb.pixel_count());
  const long n = static_cast<long>(out.size());
#pragma omp parallel for schedule(static) if (n > 4096)
  for (long i = 0; i < n; ++i) {
    const double* p = &rgb.pixels[i * 3];
    out[i] = rgb_to_lab(Triple{p[0], p[1], p[2]});
  }
  return out;
}

NetworkInput to_network_input(const Image& rgb) {
  NetworkInput in;
  in.rgb = rgb;
  in.rgb.space = ColorSpace::kRgb;
  in.hsv = rgb_to_hsv(rgb);
  in.lab = Image(rgb.height, rgb.width, ColorSpace::kLab01);
  const auto lab = lab_pixels(rgb);
  for (std::size_t i = 0; i < lab.size(); ++i) {
    const Triple n = normalize_lab(lab[i]);
    std::copy(n.begin(), n.end(), in.lab.pixels.begin() + static_cast<long>(i * 3));
  }
  return in;
}

}  // namespace ucolor::color
