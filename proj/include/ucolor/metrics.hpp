#pragma once

#include <array>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ucolor/image.hpp"

namespace ucolor::metrics {

// PSNR of identical images. Serialized as "INF".
inline constexpr double kPsnrInf = std::numeric_limits<double>::infinity();

// Mean of (255a - 255b)^2 over every pixel and channel.
double mse(const Image& a, const Image& b);
double psnr(const Image& a, const Image& b);
double psnr_from_mse(double mse);

// kL = kC = kH = 1.
double ciede2000(const Triple& lab1, const Triple& lab2);

struct Rect {
  std::size_t x = 0, y = 0, width = 0, height = 0;
  friend bool operator==(const Rect&, const Rect&) = default;
};

struct ColorCheckerLayout {
  static constexpr std::size_t kPatches = 24;
  std::vector<Rect> patches;
  std::vector<Triple> reference_lab;

  // Throws DomainError when the patch count is wrong, a rectangle is empty,
  // leaves the image, or overlaps another.
  void validate(std::size_t height, std::size_t width) const;
};

// 8-bit sRGB values of the 24-patch chart, row-major from dark skin to black.
const std::array<std::array<int, 3>, 24>& color_checker_srgb8();
// 6 x 4 grid over the image, each patch the central half of its cell;
// references are the chart's sRGB values taken to Lab.
ColorCheckerLayout default_color_checker(std::size_t height, std::size_t width);
// Every patch filled with the RGB of its reference Lab; background gray.
Image paint_color_checker(const ColorCheckerLayout& layout, std::size_t height, std::size_t width);

// Mean over patches of ciede2000(Lab of the patch's mean RGB, reference).
double color_checker_score(const Image& img, const ColorCheckerLayout& layout);

// UCIQE weights for chroma spread, luminance contrast, mean saturation.
inline constexpr double kUciqeC1 = 0.4680;
inline constexpr double kUciqeC2 = 0.2745;
inline constexpr double kUciqeC3 = 0.2576;

struct UciqeTerms {
  double sigma_chroma = 0.0;     // std of sqrt(a^2 + b^2), Lab scaled by 1/100
  double contrast_l = 0.0;       // 99th minus 1st percentile of L / 100
  double mean_saturation = 0.0;  // mean chroma / L, 0 where L = 0
  double score = 0.0;
};
UciqeTerms uciqe_terms(const Image& img);
double uciqe(const Image& img);

// Linearly interpolated percentile of unsorted data, p in [0,1].
double percentile(std::vector<double> values, double p);

// UIQM weights for colorfulness, sharpness, contrast.
inline constexpr double kUiqmC1 = 0.0282;
inline constexpr double kUiqmC2 = 0.2953;
inline constexpr double kUiqmC3 = 3.5753;
inline constexpr std::size_t kUiqmBlock = 8;
inline constexpr double kUicmAlpha = 0.1;

struct UiqmTerms {
  double uicm = 0.0;
  double uism = 0.0;
  double uiconm = 0.0;
  double score = 0.0;
};
// Needs at least one full 8 x 8 block; channel statistics on the 0-255 scale.
UiqmTerms uiqm_terms(const Image& img);
double uiqm(const Image& img);

// Mean after dropping ceil(alpha_lo K) smallest and floor(alpha_hi K) largest values.
double alpha_trimmed_mean(std::vector<double> values, double alpha_lo, double alpha_hi);

struct ImageRecord {
  std::string path;
  std::optional<double> psnr_db;
  std::optional<double> mse_255sq;
  double uciqe = 0.0;
  double uiqm = 0.0;
  std::optional<double> ciede2000;
};

struct Aggregate {
  std::size_t count = 0;
  std::optional<double> psnr_db;
  std::optional<double> mse_255sq;
  double uciqe = 0.0;
  double uiqm = 0.0;
  std::optional<double> ciede2000;
};

struct EvalReport {
  bool with_reference = false;
  bool with_layout = false;
  std::vector<ImageRecord> records;  // manifest order
  std::vector<std::string> missing;
  Aggregate aggregate;
};

ImageRecord evaluate_image(const std::string& path, const Image& result, const Image* reference,
                           const ColorCheckerLayout* layout);
// Per-image values summed in record order, then divided by the count of
// records carrying that metric.
Aggregate aggregate(const std::vector<ImageRecord>& records);

std::string report_json(const EvalReport& report);
std::string report_table(const EvalReport& report);

}  // namespace ucolor::metrics
