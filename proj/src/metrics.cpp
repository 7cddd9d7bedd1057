#include "ucolor/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "json.hpp"

#include "ucolor/colorspace.hpp"
#include "ucolor/error.hpp"

namespace ucolor::metrics {

namespace {

void check_same(const Image& a, const Image& b, const char* op) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError(op, "size",
                     std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                         std::to_string(b.width));
  }
}

constexpr double deg(double rad) { return rad * 180.0 / std::numbers::pi; }
constexpr double rad(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace

double mse(const Image& a, const Image& b) {
  check_same(a, b, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = 255.0 * a.pixels[i] - 255.0 * b.pixels[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.pixels.size());
}

double psnr_from_mse(double m) {
  if (m == 0.0) return kPsnrInf;
  return 10.0 * std::log10(255.0 * 255.0 / m);
}

double psnr(const Image& a, const Image& b) { return psnr_from_mse(mse(a, b)); }

double ciede2000(const Triple& lab1, const Triple& lab2) {
  const auto [l1, a1, b1] = lab1;
  const auto [l2, a2, b2] = lab2;
  constexpr double k25_7 = 6103515625.0;  // 25^7

  const double c_bar = (std::hypot(a1, b1) + std::hypot(a2, b2)) / 2.0;
  const double c_bar7 = std::pow(c_bar, 7.0);
  const double g = 0.5 * (1.0 - std::sqrt(c_bar7 / (c_bar7 + k25_7)));
  const double a1p = (1.0 + g) * a1;
  const double a2p = (1.0 + g) * a2;
  const double c1p = std::hypot(a1p, b1);
  const double c2p = std::hypot(a2p, b2);

  auto hue = [](double b, double a) {
    if (a == 0.0 && b == 0.0) return 0.0;
    double h = deg(std::atan2(b, a));
    return h < 0.0 ? h + 360.0 : h;
  };
  const double h1p = hue(b1, a1p);
  const double h2p = hue(b2, a2p);

  const double dl = l2 - l1;
  const double dc = c2p - c1p;
  double dh = 0.0;
  const bool chromatic = c1p * c2p != 0.0;
  if (chromatic) {
    dh = h2p - h1p;
    if (dh > 180.0) dh -= 360.0;
    else if (dh < -180.0) dh += 360.0;
  }
  const double d_big_h = 2.0 * std::sqrt(c1p * c2p) * std::sin(rad(dh / 2.0));

  const double l_bar = (l1 + l2) / 2.0;
  const double cp_bar = (c1p + c2p) / 2.0;
  double h_bar = h1p + h2p;
  if (chromatic) {
    if (std::abs(h1p - h2p) <= 180.0) h_bar /= 2.0;
    else if (h_bar < 360.0) h_bar = (h_bar + 360.0) / 2.0;
    else h_bar = (h_bar - 360.0) / 2.0;
  }

  const double t = 1.0 - 0.17 * std::cos(rad(h_bar - 30.0)) + 0.24 * std::cos(rad(2.0 * h_bar)) +
                   0.32 * std::cos(rad(3.0 * h_bar + 6.0)) - 0.20 * std::cos(rad(4.0 * h_bar - 63.0));
  const double d_theta = 30.0 * std::exp(-std::pow((h_bar - 275.0) / 25.0, 2.0));
  const double cp_bar7 = std::pow(cp_bar, 7.0);
  const double rc = 2.0 * std::sqrt(cp_bar7 / (cp_bar7 + k25_7));
  const double l50 = (l_bar - 50.0) * (l_bar - 50.0);
  const double sl = 1.0 + 0.015 * l50 / std::sqrt(20.0 + l50);
  const double sc = 1.0 + 0.045 * cp_bar;
  const double sh = 1.0 + 0.015 * cp_bar * t;
  const double rt = -std::sin(rad(2.0 * d_theta)) * rc;

  const double tl = dl / sl;
  const double tc = dc / sc;
  const double th = d_big_h / sh;
  return std::sqrt(std::max(0.0, tl * tl + tc * tc + th * th + rt * tc * th));
}

void ColorCheckerLayout::validate(std::size_t height, std::size_t width) const {
  if (patches.size() != kPatches || reference_lab.size() != kPatches) {
    throw DomainError("color checker layout: expected " + std::to_string(kPatches) + " patches and references, got " +
                      std::to_string(patches.size()) + " and " + std::to_string(reference_lab.size()));
  }
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const Rect& r = patches[i];
    if (r.width == 0 || r.height == 0) throw DomainError("color checker layout: patch " + std::to_string(i) + " is empty");
    if (r.x + r.width > width || r.y + r.height > height) {
      throw DomainError("color checker layout: patch " + std::to_string(i) + " leaves the " + std::to_string(height) +
                        "x" + std::to_string(width) + " image");
    }
    for (std::size_t j = 0; j < i; ++j) {
      const Rect& o = patches[j];
      const bool apart = r.x + r.width <= o.x || o.x + o.width <= r.x || r.y + r.height <= o.y || o.y + o.height <= r.y;
      if (!apart) {
        throw DomainError("color checker layout: patches " + std::to_string(j) + " and " + std::to_string(i) +
                          " overlap");
      }
    }
  }
}

const std::array<std::array<int, 3>, 24>& color_checker_srgb8() {
  static const std::array<std::array<int, 3>, 24> kChart{{
      {115, 82, 68},   {194, 150, 130}, {98, 122, 157},  {87, 108, 67},   {133, 128, 177}, {103, 189, 170},
      {214, 126, 44},  {80, 91, 166},   {193, 90, 99},   {94, 60, 108},   {157, 188, 64},  {224, 163, 46},
      {56, 61, 150},   {70, 148, 73},   {175, 54, 60},   {231, 199, 31},  {187, 86, 149},  {8, 133, 161},
      {243, 243, 242}, {200, 200, 200}, {160, 160, 160}, {122, 122, 121}, {85, 85, 85},    {52, 52, 52},
  }};
  return kChart;
}

ColorCheckerLayout default_color_checker(std::size_t height, std::size_t width) {
  constexpr std::size_t kCols = 6, kRows = 4;
  if (height < 2 * kRows || width < 2 * kCols) {
    throw DomainError("default color checker needs at least " + std::to_string(2 * kRows) + "x" +
                      std::to_string(2 * kCols) + " pixels");
  }
  ColorCheckerLayout layout;
  for (std::size_t i = 0; i < ColorCheckerLayout::kPatches; ++i) {
    const std::size_t row = i / kCols, col = i % kCols;
    const std::size_t y0 = row * height / kRows, y1 = (row + 1) * height / kRows;
    const std::size_t x0 = col * width / kCols, x1 = (col + 1) * width / kCols;
    const std::size_t ch = y1 - y0, cw = x1 - x0;
    const std::size_t ph = std::max<std::size_t>(1, ch / 2), pw = std::max<std::size_t>(1, cw / 2);
    layout.patches.push_back(Rect{x0 + (cw - pw) / 2, y0 + (ch - ph) / 2, pw, ph});
    const auto& c = color_checker_srgb8()[i];
    layout.reference_lab.push_back(color::rgb_to_lab({c[0] / 255.0, c[1] / 255.0, c[2] / 255.0}));
  }
  return layout;
}

Image paint_color_checker(const ColorCheckerLayout& layout, std::size_t height, std::size_t width) {
  layout.validate(height, width);
  Image img = Image::filled(height, width, {0.5, 0.5, 0.5});
  for (std::size_t i = 0; i < layout.patches.size(); ++i) {
    const Rect& r = layout.patches[i];
    const Triple rgb = color::lab_to_rgb(layout.reference_lab[i]);
    for (std::size_t y = r.y; y < r.y + r.height; ++y)
      for (std::size_t x = r.x; x < r.x + r.width; ++x) img.set_pixel(y, x, rgb);
  }
  return img;
}

double color_checker_score(const Image& img, const ColorCheckerLayout& layout) {
  layout.validate(img.height, img.width);
  double total = 0.0;
  for (std::size_t i = 0; i < layout.patches.size(); ++i) {
    const Rect& r = layout.patches[i];
    Triple mean{0.0, 0.0, 0.0};
    for (std::size_t y = r.y; y < r.y + r.height; ++y)
      for (std::size_t x = r.x; x < r.x + r.width; ++x)
        for (std::size_t c = 0; c < 3; ++c) mean[c] += img.at(y, x, c);
    const double n = static_cast<double>(r.width * r.height);
    for (double& v : mean) v = std::clamp(v / n, 0.0, 1.0);
    total += ciede2000(color::rgb_to_lab(mean), layout.reference_lab[i]);
  }
  return total / static_cast<double>(layout.patches.size());
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw DomainError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

// Chroma spread, luminance contrast and saturation after Yang and Sowmya
// (IEEE TIP 2015). Lab is scaled by 1/100 so the terms share a unit range.
UciqeTerms uciqe_terms(const Image& img) {
  const auto lab = color::lab_pixels(img);
  const std::size_t n = lab.size();
  std::vector<double> lum(n), chroma(n);
  double chroma_sum = 0.0, sat_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    lum[i] = lab[i][0] / 100.0;
    chroma[i] = std::hypot(lab[i][1], lab[i][2]) / 100.0;
    chroma_sum += chroma[i];
    sat_sum += lum[i] > 0.0 ? chroma[i] / lum[i] : 0.0;
  }
  const double chroma_mean = chroma_sum / static_cast<double>(n);
  double var = 0.0;
  for (double c : chroma) var += (c - chroma_mean) * (c - chroma_mean);
  UciqeTerms t;
  t.sigma_chroma = std::sqrt(var / static_cast<double>(n));
  t.contrast_l = percentile(lum, 0.99) - percentile(lum, 0.01);
  t.mean_saturation = sat_sum / static_cast<double>(n);
  t.score = kUciqeC1 * t.sigma_chroma + kUciqeC2 * t.contrast_l + kUciqeC3 * t.mean_saturation;
  return t;
}

double uciqe(const Image& img) { return uciqe_terms(img).score; }

double alpha_trimmed_mean(std::vector<double> values, double alpha_lo, double alpha_hi) {
  const std::size_t k = values.size();
  const auto lo = static_cast<std::size_t>(std::ceil(alpha_lo * static_cast<double>(k)));
  const auto hi = static_cast<std::size_t>(std::floor(alpha_hi * static_cast<double>(k)));
  if (k == 0 || lo + hi >= k) throw DomainError("alpha-trimmed mean: nothing left after trimming");
  std::sort(values.begin(), values.end());
  double acc = 0.0;
  for (std::size_t i = lo; i < k - hi; ++i) acc += values[i];
  return acc / static_cast<double>(k - lo - hi);
}

namespace {

// Colorfulness, sharpness and contrast measures after Panetta, Gao and
// Agaian (IEEE JOE 2016).

double uicm(const Image& img) {
  const std::size_t n = img.pixel_count();
  std::vector<double> rg(n), yb(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = 255.0 * img.pixels[3 * i], g = 255.0 * img.pixels[3 * i + 1], b = 255.0 * img.pixels[3 * i + 2];
    rg[i] = r - g;
    yb[i] = (r + g) / 2.0 - b;
  }
  auto stats = [&](const std::vector<double>& v) {
    const double mu = alpha_trimmed_mean(v, kUicmAlpha, kUicmAlpha);
    double var = 0.0;
    for (double x : v) var += (x - mu) * (x - mu);
    return std::pair{mu, var / static_cast<double>(v.size())};
  };
  const auto [mu_rg, var_rg] = stats(rg);
  const auto [mu_yb, var_yb] = stats(yb);
  return -0.0268 * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb) + 0.1586 * std::sqrt(var_rg + var_yb);
}

// Visits every 8 x 8 block (trailing blocks truncated) with its min and max.
template <typename F>
void for_each_block(const std::vector<double>& plane, std::size_t h, std::size_t w, F&& f) {
  for (std::size_t by = 0; by < h; by += kUiqmBlock) {
    for (std::size_t bx = 0; bx < w; bx += kUiqmBlock) {
      double mn = plane[by * w + bx], mx = mn;
      for (std::size_t y = by; y < std::min(by + kUiqmBlock, h); ++y)
        for (std::size_t x = bx; x < std::min(bx + kUiqmBlock, w); ++x) {
          mn = std::min(mn, plane[y * w + x]);
          mx = std::max(mx, plane[y * w + x]);
        }
      f(mn, mx);
    }
  }
}

std::size_t block_count(std::size_t h, std::size_t w) {
  return ((h + kUiqmBlock - 1) / kUiqmBlock) * ((w + kUiqmBlock - 1) / kUiqmBlock);
}

// 2/(k1 k2) * sum log(max/min); blocks with a zero extreme contribute nothing.
double eme(const std::vector<double>& plane, std::size_t h, std::size_t w) {
  double acc = 0.0;
  for_each_block(plane, h, w, [&](double mn, double mx) {
    if (mn > 0.0 && mx > 0.0) acc += std::log(mx / mn);
  });
  return 2.0 * acc / static_cast<double>(block_count(h, w));
}

// Sobel magnitude with replicated borders.
std::vector<double> sobel(const std::vector<double>& p, std::size_t h, std::size_t w) {
  std::vector<double> out(h * w);
  auto at = [&](long y, long x) {
    y = std::clamp<long>(y, 0, static_cast<long>(h) - 1);
    x = std::clamp<long>(x, 0, static_cast<long>(w) - 1);
    return p[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  };
  for (long y = 0; y < static_cast<long>(h); ++y)
    for (long x = 0; x < static_cast<long>(w); ++x) {
      const double gx = at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1) - at(y - 1, x - 1) -
                        2.0 * at(y, x - 1) - at(y + 1, x - 1);
      const double gy = at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1) - at(y - 1, x - 1) -
                        2.0 * at(y - 1, x) - at(y - 1, x + 1);
      out[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = std::hypot(gx, gy);
    }
  return out;
}

double uism(const Image& img) {
  constexpr double kLambda[3] = {0.299, 0.587, 0.114};
  const std::size_t h = img.height, w = img.width;
  double total = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> plane(h * w);
    for (std::size_t i = 0; i < h * w; ++i) plane[i] = 255.0 * img.pixels[3 * i + c];
    std::vector<double> edges = sobel(plane, h, w);
    for (std::size_t i = 0; i < h * w; ++i) edges[i] *= plane[i];
    total += kLambda[c] * eme(edges, h, w);
  }
  return total;
}

// logAMEE with ordinary arithmetic: -1/(k1 k2) * sum r log r,
// r = (max - min) / (max + min), 0 log 0 = 0.
double uiconm(const Image& img) {
  const std::size_t h = img.height, w = img.width;
  std::vector<double> intensity(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    intensity[i] =
        255.0 * (0.299 * img.pixels[3 * i] + 0.587 * img.pixels[3 * i + 1] + 0.114 * img.pixels[3 * i + 2]);
  }
  double acc = 0.0;
  for_each_block(intensity, h, w, [&](double mn, double mx) {
    const double top = mx - mn, bot = mx + mn;
    if (top > 0.0 && bot > 0.0) {
      const double r = top / bot;
      acc += r * std::log(r);
    }
  });
  return -acc / static_cast<double>(block_count(h, w));
}

}  // namespace

UiqmTerms uiqm_terms(const Image& img) {
  if (img.height < kUiqmBlock || img.width < kUiqmBlock) {
    throw ShapeError("uiqm", "size",
                     std::to_string(img.height) + "x" + std::to_string(img.width) + " is smaller than one " +
                         std::to_string(kUiqmBlock) + "x" + std::to_string(kUiqmBlock) + " block");
  }
  UiqmTerms t;
  t.uicm = uicm(img);
  t.uism = uism(img);
  t.uiconm = uiconm(img);
  t.score = kUiqmC1 * t.uicm + kUiqmC2 * t.uism + kUiqmC3 * t.uiconm;
  return t;
}

double uiqm(const Image& img) { return uiqm_terms(img).score; }

ImageRecord evaluate_image(const std::string& path, const Image& result, const Image* reference,
                           const ColorCheckerLayout* layout) {
  ImageRecord r;
  r.path = path;
  if (reference) {
    r.mse_255sq = mse(result, *reference);
    r.psnr_db = psnr_from_mse(*r.mse_255sq);
  }
  r.uciqe = uciqe(result);
  r.uiqm = uiqm(result);
  if (layout) r.ciede2000 = color_checker_score(result, *layout);
  return r;
}

Aggregate aggregate(const std::vector<ImageRecord>& records) {
  Aggregate a;
  a.count = records.size();
  if (records.empty()) return a;
  auto mean_of = [&](auto member) -> std::optional<double> {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& r : records) {
      if (const std::optional<double>& v = r.*member) {
        acc += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return acc / static_cast<double>(n);
  };
  a.psnr_db = mean_of(&ImageRecord::psnr_db);
  a.mse_255sq = mean_of(&ImageRecord::mse_255sq);
  a.ciede2000 = mean_of(&ImageRecord::ciede2000);
  double u = 0.0, q = 0.0;
  for (const auto& r : records) {
    u += r.uciqe;
    q += r.uiqm;
  }
  a.uciqe = u / static_cast<double>(records.size());
  a.uiqm = q / static_cast<double>(records.size());
  return a;
}

namespace {

nlohmann::json number(double v) {
  if (std::isinf(v) && v > 0) return "INF";
  return v;
}

nlohmann::json optional_number(const std::optional<double>& v) { return v ? number(*v) : nlohmann::json(nullptr); }

std::string cell(const std::optional<double>& v) {
  if (!v) return "-";
  if (std::isinf(*v)) return "INF";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

}  // namespace

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["config"] = {{"with_reference", report.with_reference},
                 {"with_layout", report.with_layout},
                 {"mse_scale", "0-255"},
                 {"aggregation", "per-image mean"},
                 {"uciqe_coefficients", {kUciqeC1, kUciqeC2, kUciqeC3}},
                 {"uiqm_coefficients", {kUiqmC1, kUiqmC2, kUiqmC3}},
                 {"uiqm_block", kUiqmBlock}};
  nlohmann::ordered_json images = nlohmann::ordered_json::array();
  for (const auto& r : report.records) {
    images.push_back({{"path", r.path},
                      {"psnr_db", optional_number(r.psnr_db)},
                      {"mse_255sq", optional_number(r.mse_255sq)},
                      {"uciqe", r.uciqe},
                      {"uiqm", r.uiqm},
                      {"ciede2000", optional_number(r.ciede2000)}});
  }
  j["images"] = images;
  const Aggregate& a = report.aggregate;
  j["aggregate"] = {{"count", a.count},
                    {"psnr_db", optional_number(a.psnr_db)},
                    {"mse_255sq", optional_number(a.mse_255sq)},
                    {"uciqe", a.count ? nlohmann::ordered_json(a.uciqe) : nlohmann::ordered_json(nullptr)},
                    {"uiqm", a.count ? nlohmann::ordered_json(a.uiqm) : nlohmann::ordered_json(nullptr)},
                    {"ciede2000", optional_number(a.ciede2000)}};
  j["missing"] = report.missing;
  return j.dump(2) + "\n";
}

std::string report_table(const EvalReport& report) {
  std::vector<std::array<std::string, 6>> rows;
  rows.push_back({"image", "psnr_db", "mse_255sq", "uciqe", "uiqm", "ciede2000"});
  for (const auto& r : report.records) {
    rows.push_back({r.path, cell(r.psnr_db), cell(r.mse_255sq), cell(r.uciqe), cell(r.uiqm), cell(r.ciede2000)});
  }
  const Aggregate& a = report.aggregate;
  if (a.count) {
    rows.push_back({"mean", cell(a.psnr_db), cell(a.mse_255sq), cell(a.uciqe), cell(a.uiqm), cell(a.ciede2000)});
  }
  std::array<std::size_t, 6> width{};
  for (const auto& row : rows)
    for (std::size_t c = 0; c < 6; ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < 6; ++c) {
      const std::string pad(width[c] - row[c].size(), ' ');
      line += c == 0 ? row[c] + pad : "  " + pad + row[c];
    }
    out += line + "\n";
  }
  for (const auto& m : report.missing) out += "missing: " + m + "\n";
  return out;
}

}  // namespace ucolor::metrics
