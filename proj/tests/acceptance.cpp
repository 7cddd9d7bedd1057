// Acceptance runner: one PASS/FAIL line per criterion, exit 1 on any FAIL.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "support.hpp"
#include "ucolor/app.hpp"
#include "ucolor/colorspace.hpp"
#include "ucolor/io.hpp"
#include "ucolor/metrics.hpp"
#include "ucolor/net.hpp"
#include "ucolor/training.hpp"
#include "ucolor/waterphysics.hpp"

using namespace ucolor;
using ad::Var;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kOpGradTol = 1e-4;
constexpr double kModelGradTol = 1e-3;
constexpr double kAutodiffSeconds = 60.0;
constexpr double kRoundTripTol = 1e-10;
constexpr double kTFloor = 0.1;
constexpr double kHsvTol = 1e-10;
constexpr double kLabTol = 1e-8;
constexpr double kSharmaTol = 1e-4;
constexpr double kSharmaSeconds = 1.0;
constexpr double kOverfitRatio = 0.05;
constexpr double kOverfitPsnr = 30.0;
constexpr double kOverfitSeconds = 300.0;
constexpr std::size_t kOverfitSteps = 500;
// FNV-1a of the PPM bytes of the golden enhance fixture.
constexpr std::uint64_t kGoldenHash = 0x8f40f58676b3591eULL;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

net::ModelConfig desk_model() {
  net::ModelConfig cfg;
  cfg.base_width = 4;
  cfg.attention_reduction = 2;
  return cfg;
}

Image smooth_scene(std::size_t h, std::size_t w) {
  Image img(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      img.set_pixel(y, x,
                    {0.2 + 0.6 * x / (w - 1.0), 0.3 + 0.4 * y / (h - 1.0), 0.5 + 0.3 * std::sin(0.3 * (x + y))});
  return img;
}

// ---------------------------------------------------------------- 1

Outcome autodiff_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  using testing::away_from_zero;
  using testing::gradient_error;
  using testing::probe;
  using testing::random_tensor;
  double worst_op = 0.0;
  std::string worst_name;
  auto track = [&](const char* name, double e) {
    if (e > worst_op) {
      worst_op = e;
      worst_name = name;
    }
  };
  for (std::uint64_t s = 0; s < 5; ++s) {
    const std::size_t c = 2 + s % 3, h = 3 + s, w = 4 + (s * 2) % 5;
    const Shape x{c, h, w};
    const auto pr = [s](const Var& v) { return probe(v, 1000 + s); };
    track("conv2d", gradient_error({random_tensor(x, s), random_tensor({3, c, 3, 3}, s + 1), random_tensor({3}, s + 2)},
                                   [&](const std::vector<Var>& v) { return pr(ad::conv2d(v[0], v[1], v[2])); }));
    track("max_pool2", gradient_error({random_tensor(x, s + 3)},
                                      [&](const std::vector<Var>& v) { return pr(ad::max_pool2(v[0])); }));
    track("upsample_bilinear2", gradient_error({random_tensor(x, s + 4)}, [&](const std::vector<Var>& v) {
            return pr(ad::upsample_bilinear2(v[0]));
          }));
    track("leaky_relu", gradient_error({away_from_zero(x, s + 5)},
                                       [&](const std::vector<Var>& v) { return pr(ad::leaky_relu(v[0])); }));
    track("relu", gradient_error({away_from_zero(x, s + 6)},
                                 [&](const std::vector<Var>& v) { return pr(ad::relu(v[0])); }));
    track("sigmoid", gradient_error({random_tensor(x, s + 7, -3, 3)},
                                    [&](const std::vector<Var>& v) { return pr(ad::sigmoid(v[0])); }));
    track("abs", gradient_error({away_from_zero(x, s + 8)},
                                [&](const std::vector<Var>& v) { return pr(ad::abs(v[0])); }));
    track("square", gradient_error({random_tensor(x, s + 9)},
                                   [&](const std::vector<Var>& v) { return pr(ad::square(v[0])); }));
    track("scale", gradient_error({random_tensor(x, s + 10)},
                                  [&](const std::vector<Var>& v) { return pr(ad::scale(v[0], -1.7)); }));
    track("clamp", gradient_error({random_tensor(x, s + 11)},
                                  [&](const std::vector<Var>& v) { return pr(ad::clamp(v[0], -0.05, 0.5)); }));
    track("global_avg_pool", gradient_error({random_tensor(x, s + 12)}, [&](const std::vector<Var>& v) {
            return pr(ad::global_avg_pool(v[0]));
          }));
    track("fully_connected",
          gradient_error({random_tensor({c}, s + 13), random_tensor({4, c}, s + 14), random_tensor({4}, s + 15)},
                         [&](const std::vector<Var>& v) { return pr(ad::fully_connected(v[0], v[1], v[2])); }));
    track("concat_channels",
          gradient_error({random_tensor(x, s + 16), random_tensor({1, h, w}, s + 17)},
                         [&](const std::vector<Var>& v) { return pr(ad::concat_channels({v[0], v[1]})); }));
    track("sum", gradient_error({random_tensor(x, s + 18)}, [&](const std::vector<Var>& v) { return ad::sum(v[0]); }));
    track("mean",
          gradient_error({random_tensor(x, s + 19)}, [&](const std::vector<Var>& v) { return ad::mean(v[0]); }));
    const std::vector<Shape> forms{x, {1}, {c}, {c, 1, 1}, {h, w}, {1, h, w}};
    for (const auto& bs : forms) {
      const std::vector<Tensor> in{random_tensor(x, s + 20), random_tensor(bs, s + 21)};
      track("add", gradient_error(in, [&](const std::vector<Var>& v) { return pr(ad::add(v[0], v[1])); }));
      track("mul", gradient_error(in, [&](const std::vector<Var>& v) { return pr(ad::mul(v[0], v[1])); }));
      track("sub", gradient_error(in, [&](const std::vector<Var>& v) { return pr(ad::sub(v[0], v[1])); }));
    }
  }

  // Full desk model. FD at h = 1e-5 needs pre-activations clear of the
  // leaky-relu kink, so weights are drawn wider than the training init and
  // biases are spread.
  net::ModelConfig cfg = desk_model();
  cfg.init_std = 0.15;
  auto w = net::init_weights(cfg, 11);
  Rng bias_rng(21);
  for (auto& [name, t] : w)
    if (name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0 && name != "dec.out.b")
      for (double& v : t.data()) v = bias_rng.uniform(-0.2, 0.2);
  const auto in = net::prepare_input(testing::random_image(16, 16, 22, 0.1, 0.9), cfg);
  auto loss = [&](const net::Params& p) { return probe(net::forward(in, cfg, p), 99); };
  ad::Tape tape;
  const net::Params leaves = net::Params::leaves(w, tape);
  const auto grads = tape.backward(loss(leaves));
  std::vector<std::string> names;
  for (const auto& [n, t] : w) names.push_back(n);
  Rng rng(12);
  double worst_model = 0.0;
  const double h = 1e-5;
  for (int k = 0; k < 50; ++k) {
    const std::string& n = names[rng.below(names.size())];
    const std::size_t i = rng.below(w.at(n).size());
    auto eval = [&](double d) {
      auto shifted = w;
      shifted.at(n)[i] += d;
      return loss(net::Params::constants(shifted)).value().item();
    };
    const double numeric = (eval(h) - eval(-h)) / (2 * h);
    worst_model =
        std::max(worst_model, std::abs(grads[leaves(n)][i] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst_op < kOpGradTol && worst_model < kModelGradTol && secs < kAutodiffSeconds;
  o.detail = "ops max " + num(worst_op) + " (" + worst_name + "), model max " + num(worst_model) + ", " + num(secs) +
             " s";
  return o;
}

// ---------------------------------------------------------------- 2

Outcome gdcp_contract() {
  using namespace physics;
  auto all_eq = [](const TransmissionMap& t, double v) {
    return std::all_of(t.values.begin(), t.values.end(), [v](double x) { return x == v; });
  };
  const BackgroundLight a{0.3, 0.5, 0.8};
  const bool zero = all_eq(gdcp_transmission(Image::filled(9, 11, a.triple()), a), 0.0);
  const bool one = all_eq(gdcp_transmission(Image(9, 11), {0.6, 0.6, 0.6}), 1.0);
  const double single = gdcp_transmission(Image::filled(1, 1, {0.2, 0.2, 0.2}), {0.6, 0.6, 0.6}).values[0];
  const bool third = single == 2.0 / 3.0;
  std::size_t out_of_range = 0;
  Rng rng(8);
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const std::size_t h = 1 + rng.below(12), w = 1 + rng.below(12);
    const Image img = testing::random_image(h, w, s);
    const auto light = estimate_background_light(img);
    const std::size_t patch = 1 + 2 * rng.below(4);
    for (Prior p : {Prior::kGdcp, Prior::kDcp, Prior::kUdcp}) {
      const auto t = estimate_transmission(img, light, p, patch);
      for (double v : t.values) out_of_range += !(v >= 0.0 && v <= 1.0);
    }
  }
  Outcome o;
  o.pass = zero && one && third && out_of_range == 0;
  o.detail = std::string("I=A->0 ") + (zero ? "ok" : "no") + ", black->1 " + (one ? "ok" : "no") + ", 2/3 " +
             (third ? "exact" : "off") + ", out-of-range " + std::to_string(out_of_range) + "/30000 maps";
  return o;
}

// ---------------------------------------------------------------- 3

Outcome model_round_trip() {
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(s + 500);
    const std::size_t h = 4 + rng.below(12), w = 4 + rng.below(12);
    const Image j = testing::random_image(h, w, s);
    TransmissionMap t(h, w);
    for (double& v : t.values) v = rng.uniform();
    const physics::BackgroundLight a{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
    const Image back = physics::invert_model(physics::synthesize(j, t, a), t, a, kTFloor);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        if (t.at(y, x) < kTFloor) continue;
        ++checked;
        for (std::size_t c = 0; c < 3; ++c) worst = std::max(worst, std::abs(back.at(y, x, c) - j.at(y, x, c)));
      }
  }
  return {worst < kRoundTripTol, "max error " + num(worst) + " over " + std::to_string(checked) + " pixels"};
}

// ---------------------------------------------------------------- 4

Outcome guidance_identities() {
  const Var f = Var::constant(testing::random_tensor({6, 5, 7}, 3));
  const bool gate0 = net::apply_channel_gate(f, Var::constant(Tensor({6}))).value() == f.value();
  const Var u = Var::constant(testing::random_tensor({6, 5, 7}, 4));
  const bool mt0 = net::mt_guidance(u, Var::constant(Tensor({1, 5, 7}))).value() == u.value();
  const Tensor v1 = net::mt_guidance(u, Var::constant(Tensor({1, 5, 7}, 1.0))).value();
  bool mt1 = true;
  for (std::size_t i = 0; i < v1.size(); ++i) mt1 = mt1 && v1[i] == 2.0 * u.value()[i];
  return {gate0 && mt0 && mt1, std::string("s=0 ") + (gate0 ? "exact" : "differs") + ", T=0 " +
                                   (mt0 ? "exact" : "differs") + ", T=1 " + (mt1 ? "exact" : "differs")};
}

// ---------------------------------------------------------------- 5

Outcome color_math() {
  Rng rng(1);
  double hsv = 0.0, lab = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Triple p{rng.uniform(), rng.uniform(), rng.uniform()};
    const Triple h = color::hsv_to_rgb(color::rgb_to_hsv(p));
    const Triple l = color::lab_to_rgb(color::rgb_to_lab(p));
    for (int c = 0; c < 3; ++c) {
      hsv = std::max(hsv, std::abs(h[c] - p[c]));
      lab = std::max(lab, std::abs(l[c] - p[c]));
    }
  }
  const bool white = color::rgb_to_lab(Triple{1, 1, 1})[0] == 100.0;
  const bool red = color::rgb_to_hsv(Triple{1, 0, 0})[0] == 0.0;
  return {hsv < kHsvTol && lab < kLabTol && white && red,
          "hsv " + num(hsv) + ", lab " + num(lab) + ", white L=100 " + (white ? "exact" : "off") + ", red H=0 " +
              (red ? "exact" : "off")};
}

// ---------------------------------------------------------------- 6

Outcome ciede2000_conformance() {
  std::ifstream in(std::string(UCOLOR_TEST_DATA) + "/ciede2000_sharma.txt");
  if (!in) return {false, "fixture missing"};
  std::vector<std::array<double, 7>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::array<double, 7> r{};
    for (double& v : r) ss >> v;
    rows.push_back(r);
  }
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (const auto& r : rows) {
    const double d = metrics::ciede2000({r[0], r[1], r[2]}, {r[3], r[4], r[5]});
    worst = std::max(worst, std::abs(d - r[6]));
  }
  const double secs = seconds_since(t0);
  return {rows.size() == 34 && worst < kSharmaTol && secs < kSharmaSeconds,
          std::to_string(rows.size()) + " pairs, max deviation " + num(worst) + ", " + num(secs) + " s"};
}

// ---------------------------------------------------------------- 7

Outcome overfit_sanity() {
  const auto t0 = std::chrono::steady_clock::now();
  const Image clean = smooth_scene(32, 32);
  TransmissionMap t(32, 32);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) t.at(y, x) = 0.4 + 0.4 * x / 31.0;
  const Image degraded = physics::synthesize(clean, t, {0.1, 0.6, 0.7});

  train::TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.batch_size = 1;
  tc.patch = 32;
  tc.lambda = 0.01;
  tc.recon_loss = train::ReconLoss::kL2;
  tc.use_perceptual = true;
  tc.steps = kOverfitSteps;
  tc.seed = 3;
  const auto cfg = desk_model();
  const auto result = train::train({{"pair", degraded, clean}}, cfg, tc);
  const double first = result.trace.front().total;
  const double last = result.trace.back().total;
  const double ratio = last / first;
  const double db = metrics::psnr(net::enhance(degraded, cfg, result.weights), clean);
  const double secs = seconds_since(t0);
  return {ratio < kOverfitRatio && db > kOverfitPsnr && secs < kOverfitSeconds,
          "loss ratio " + num(ratio) + ", psnr " + num(db) + " dB, " + num(secs) + " s"};
}

// ---------------------------------------------------------------- 8

Outcome ablation_plumbing() {
  const Image img = smooth_scene(16, 16);
  const Tensor target = testing::random_image(16, 16, 2).to_tensor();
  std::size_t built = 0, dead = 0;
  std::string first_dead;
  for (int mask = 0; mask < 32; ++mask)
    for (auto prior : {physics::Prior::kGdcp, physics::Prior::kDcp, physics::Prior::kUdcp}) {
      net::ModelConfig cfg = desk_model();
      cfg.use_hsv = mask & 1;
      cfg.use_lab = mask & 2;
      cfg.triplicate_rgb = mask & 4;
      cfg.use_mtgm = mask & 8;
      cfg.use_cam = mask & 16;
      cfg.prior = prior;
      const auto w = net::init_weights(cfg, 13);
      const auto in = net::prepare_input(img, cfg);
      ad::Tape tape;
      const auto p = net::Params::leaves(w, tape);
      const Var out = net::forward(in, cfg, p);
      if (out.shape() != Shape{3, 16, 16}) continue;
      ++built;
      const auto grads = tape.backward(ad::mean(ad::square(ad::sub(out, Var::constant(target)))));
      for (const auto& [name, v] : p.all()) {
        const auto& g = grads[v];
        if (std::none_of(g.data().begin(), g.data().end(), [](double x) { return x != 0.0; })) {
          if (dead++ == 0) first_dead = name + " (mask " + std::to_string(mask) + ")";
        }
      }
    }
  return {built == 96 && dead == 0, std::to_string(built) + "/96 variants, " + std::to_string(dead) +
                                        " parameter tensors without gradient" +
                                        (dead ? ", first " + first_dead : std::string())};
}

// ---------------------------------------------------------------- 9

int quiet_run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  return app::run(args, out, err);
}

Outcome determinism() {
  testing::TempDir dir("accept");
  for (int i = 0; i < 2; ++i) {
    const Image clean = testing::random_image(24, 28, i, 0.2, 0.8);
    io::write_image(physics::synthesize(clean, TransmissionMap(24, 28, 0.5), {0.1, 0.6, 0.7}),
                    dir / ("raw/" + std::to_string(i) + ".ppm"));
    io::write_image(clean, dir / ("ref/" + std::to_string(i) + ".ppm"));
  }
  std::ofstream(dir / "m.json") << R"({"entries": [{"input": "raw/0.ppm", "reference": "ref/0.ppm"},
                                                   {"input": "raw/1.ppm", "reference": "ref/1.ppm"}]})";
  std::ofstream(dir / "cfg.json") << R"({"seed": 17, "model": {"base_width": 4, "attention_reduction": 2},
                                        "train": {"learning_rate": 0.001, "batch_size": 2, "patch": 16, "steps": 5}})";
  auto train_to = [&](const std::string& tag) {
    return quiet_run({"--quiet", "train", "--manifest", (dir / "m.json").string(), "--config",
                      (dir / "cfg.json").string(), "--out-weights", (dir / (tag + ".uclr")).string(), "--trace",
                      (dir / (tag + ".csv")).string()});
  };
  auto enhance_to = [&](const std::string& tag) {
    return quiet_run({"--quiet", "enhance", "--input", (dir / "raw/1.ppm").string(), "--weights",
                      (dir / "a.uclr").string(), "--out", (dir / (tag + ".ppm")).string()});
  };
  const bool ran = train_to("a") == 0 && train_to("b") == 0 && enhance_to("ea") == 0 && enhance_to("eb") == 0;
  const bool train_same = ran && io::read_file(dir / "a.uclr") == io::read_file(dir / "b.uclr") &&
                          io::read_file(dir / "a.csv") == io::read_file(dir / "b.csv");
  const bool enhance_same = ran && io::read_file(dir / "ea.ppm") == io::read_file(dir / "eb.ppm");

  bool ppm_exact = true;
  for (std::uint64_t s = 0; s < 50; ++s) {
    Image img(5 + s % 7, 3 + s % 11);
    Rng rng(s);
    for (double& v : img.pixels) v = static_cast<double>(rng.below(256)) / 255.0;
    const std::string bytes = io::encode_ppm(img);
    const Image back = io::decode_ppm(bytes);
    ppm_exact = ppm_exact && back == img && io::encode_ppm(back) == bytes;
  }

  // Golden fixture: seeded tiny weights on a fixed scene. At the 0.02 init
  // the output is nearly flat, so the fixture draws wider weights.
  net::ModelConfig golden_cfg = desk_model();
  golden_cfg.init_std = 0.1;
  const std::string golden =
      io::encode_ppm(net::enhance(smooth_scene(16, 20), golden_cfg, net::init_weights(golden_cfg, 2024)));
  const std::uint64_t hash = fnv1a(golden);
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));
  const bool golden_ok = hash == kGoldenHash;
  return {train_same && enhance_same && ppm_exact && golden_ok,
          std::string("train ") + (train_same ? "identical" : "differs") + ", enhance " +
              (enhance_same ? "identical" : "differs") + ", ppm " + (ppm_exact ? "exact" : "lossy") + ", golden " +
              hex + (golden_ok ? " matches" : " != pinned")};
}

// ---------------------------------------------------------------- 10

Outcome metric_consistency() {
  bool identity = true;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Image a = testing::random_image(6, 9, s), b = testing::random_image(6, 9, s + 100);
    identity = identity && metrics::psnr(a, b) == 10.0 * std::log10(255.0 * 255.0 / metrics::mse(a, b));
  }
  const bool gray_uciqe = metrics::uciqe(Image::filled(16, 16, {0.5, 0.5, 0.5})) == 0.0;
  const auto gq = metrics::uiqm_terms(Image::filled(16, 16, {0.5, 0.5, 0.5}));
  const bool gray_uiqm = gq.uicm == 0.0 && gq.uism == 0.0 && gq.uiconm == 0.0;

  testing::TempDir dir("accept-eval");
  std::ofstream m(dir / "m.json");
  m << R"({"entries": [)";
  for (int i = 0; i < 4; ++i) {
    const std::string n = std::to_string(i) + ".ppm";
    io::write_image(testing::random_image(12, 16, i), dir / ("in/" + n));
    io::write_image(testing::random_image(12, 16, i + 10), dir / ("ref/" + n));
    io::write_image(testing::random_image(12, 16, i + 20), dir / ("out/in/" + n));
    m << (i ? "," : "") << R"({"input": "in/)" << n << R"(", "reference": "ref/)" << n << R"("})";
  }
  m << "]}";
  m.close();
  const auto rep = io::evaluate(io::load_manifest(dir / "m.json"), dir / "out", true);
  double p = 0, e = 0, u = 0, q = 0;
  for (const auto& r : rep.records) {
    p += *r.psnr_db;
    e += *r.mse_255sq;
    u += r.uciqe;
    q += r.uiqm;
  }
  const double n = static_cast<double>(rep.records.size());
  const auto& a = rep.aggregate;
  const bool means = rep.records.size() == 4 && *a.psnr_db == p / n && *a.mse_255sq == e / n && a.uciqe == u / n &&
                     a.uiqm == q / n;
  return {identity && gray_uciqe && gray_uiqm && means,
          std::string("psnr/mse ") + (identity ? "ok" : "off") + ", gray UCIQE " + (gray_uciqe ? "0" : "nonzero") +
              ", gray UIQM terms " + (gray_uiqm ? "0" : "nonzero") + ", aggregates " + (means ? "exact" : "off")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"autodiff gradients", autodiff_correctness},
      {"transmission prior contract", gdcp_contract},
      {"formation model round trip", model_round_trip},
      {"attention and guidance identities", guidance_identities},
      {"color conversions", color_math},
      {"CIEDE2000 conformance", ciede2000_conformance},
      {"overfit sanity", overfit_sanity},
      {"ablation plumbing", ablation_plumbing},
      {"determinism", determinism},
      {"metric self-consistency", metric_consistency},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
