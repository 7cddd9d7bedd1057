#include <cmath>
#include <set>

#include "doctest.h"
#include "support.hpp"
#include "ucolor/error.hpp"
#include "ucolor/net.hpp"

using namespace ucolor;
using namespace ucolor::net;
using ad::Var;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.base_width = 4;
  cfg.attention_reduction = 2;
  return cfg;
}

ModelWeights random_weights(const Shape& shape, const std::string& name, std::uint64_t seed, double scale = 0.3) {
  return {{name, testing::random_tensor(shape, seed, -scale, scale)}};
}

// Smooth synthetic scene, away from the clamp limits.
Image scene(std::size_t h, std::size_t w) {
  Image img(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      img.set_pixel(y, x, {0.2 + 0.5 * x / w, 0.3 + 0.4 * y / h, 0.5 + 0.3 * std::sin(0.4 * (x + y))});
  return img;
}

Var probe_loss(const PreparedInput& in, const ModelConfig& cfg, const Params& p) {
  return testing::probe(forward(in, cfg, p), 99);
}

}  // namespace

TEST_SUITE("net") {
  TEST_CASE("encoder level shapes") {
    ModelConfig cfg;
    const auto w = init_weights(cfg, 1);
    const auto in = prepare_input(scene(32, 32), cfg);
    const auto f = encode(in.views, cfg, Params::constants(w));
    REQUIRE(f.size() == 3);
    CHECK(f[0].shape() == Shape{24, 32, 32});
    CHECK(f[1].shape() == Shape{48, 16, 16});
    CHECK(f[2].shape() == Shape{96, 8, 8});
    CHECK(forward(in, cfg, Params::constants(w)).shape() == Shape{3, 32, 32});
  }

  TEST_CASE("parameter declaration") {
    ModelConfig cfg = small_config();
    std::set<std::string> names;
    for (const auto& s : declare_parameters(cfg)) CHECK(names.insert(s.name).second);
    CHECK(names.count("enc.rgb.l1.fuse.w") == 1);
    CHECK(names.count("dec.l3.cam.fc1.w") == 1);
    cfg.use_hsv = cfg.use_lab = false;
    cfg.use_cam = false;
    for (const auto& s : declare_parameters(cfg)) {
      if (s.name.rfind("enc", 0) == 0) CHECK(s.name.find("fuse") == std::string::npos);
      CHECK(s.name.find("cam") == std::string::npos);
      CHECK(s.name.find("hsv") == std::string::npos);
    }
    const auto w = init_weights(small_config(), 5);
    CHECK(w.at("dec.out.b")[0] == 0.5);
    CHECK(w.at("enc.rgb.l1.in.b")[0] == 0.0);
    CHECK(init_weights(small_config(), 5) == w);
  }

  TEST_CASE("reduction must divide the base width") {
    ModelConfig cfg = small_config();
    cfg.attention_reduction = 3;
    const auto v = cfg.violations();
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("must divide") != std::string::npos);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.levels = 4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.transmission_patch = 4;
    CHECK_FALSE(cfg.violations().empty());
  }

  TEST_CASE("check_compatible names the offending tensor") {
    const ModelConfig cfg = small_config();
    auto w = init_weights(cfg, 2);
    CHECK_NOTHROW(check_compatible(cfg, w));
    auto missing = w;
    missing.erase("dec.l2.re.b1.c2.w");
    CHECK_THROWS_WITH_AS(check_compatible(cfg, missing), doctest::Contains("dec.l2.re.b1.c2.w"), ShapeError);
    auto wrong = w;
    wrong["dec.out.w"] = Tensor({3, 5, 3, 3});
    CHECK_THROWS_WITH_AS(check_compatible(cfg, wrong), doctest::Contains("dec.out.w"), ShapeError);
    auto extra = w;
    extra["stray"] = Tensor({1});
    CHECK_THROWS_WITH_AS(check_compatible(cfg, extra), doctest::Contains("stray"), ShapeError);
    ModelConfig wider = cfg;
    wider.base_width = 8;
    CHECK_THROWS_AS(check_compatible(wider, w), ShapeError);
  }

  TEST_CASE("channel gate identities") {
    const Var f = Var::constant(testing::random_tensor({6, 4, 5}, 3));
    const Var zero = Var::constant(Tensor({6}));
    CHECK(apply_channel_gate(f, zero).value() == f.value());
    const Var one = Var::constant(Tensor({6}, 1.0));
    const Tensor doubled = apply_channel_gate(f, one).value();
    for (std::size_t i = 0; i < doubled.size(); ++i) CHECK(doubled[i] == 2.0 * f.value()[i]);
  }

  TEST_CASE("attention weights follow the fc oracle") {
    const Tensor f = testing::random_tensor({4, 3, 3}, 4);
    const Tensor w1 = testing::random_tensor({2, 4}, 5), b1 = testing::random_tensor({2}, 6);
    const Tensor w2 = testing::random_tensor({4, 2}, 7), b2 = testing::random_tensor({4}, 8);
    const AttentionParams p{Var::constant(w1), Var::constant(b1), Var::constant(w2), Var::constant(b2)};
    const Tensor s = attention_weights(Var::constant(f), p, 2).value();
    double z[4] = {}, h[2] = {};
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t i = 0; i < 9; ++i) z[c] += f[c * 9 + i];
      z[c] /= 9.0;
    }
    for (std::size_t j = 0; j < 2; ++j) {
      h[j] = b1[j];
      for (std::size_t c = 0; c < 4; ++c) h[j] += w1[j * 4 + c] * z[c];
      h[j] = std::max(0.0, h[j]);
    }
    for (std::size_t c = 0; c < 4; ++c) {
      double a = b2[c];
      for (std::size_t j = 0; j < 2; ++j) a += w2[c * 2 + j] * h[j];
      CHECK(std::abs(s[c] - 1.0 / (1.0 + std::exp(-a))) < 1e-14);
      CHECK(s[c] > 0.0);
      CHECK(s[c] < 1.0);
    }
    CHECK_THROWS_AS(attention_weights(Var::constant(f), p, 3), DomainError);
  }

  TEST_CASE("mt guidance identities") {
    const Var u = Var::constant(testing::random_tensor({5, 4, 6}, 9));
    CHECK(mt_guidance(u, Var::constant(Tensor({1, 4, 6}))).value() == u.value());
    const Tensor v = mt_guidance(u, Var::constant(Tensor({1, 4, 6}, 1.0))).value();
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == 2.0 * u.value()[i]);
    const Tensor t = testing::random_tensor({1, 4, 6}, 10, 0.0, 1.0);
    const Tensor g = mt_guidance(u, Var::constant(t)).value();
    for (std::size_t c = 0; c < 5; ++c)
      for (std::size_t i = 0; i < 24; ++i) CHECK(g[c * 24 + i] == u.value()[c * 24 + i] + u.value()[c * 24 + i] * t[i]);
    CHECK_THROWS_AS(mt_guidance(u, Var::constant(Tensor({1, 4, 5}))), ShapeError);
    CHECK_THROWS_AS(mt_guidance(u, Var::constant(Tensor({2, 4, 6}))), ShapeError);
  }

  TEST_CASE("residual enhancement and attention gradients") {
    const std::size_t c = 4;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Shape xs{c, 5 + seed, 6};
      ModelWeights w;
      for (int b = 1; b <= 2; ++b)
        for (int k = 1; k <= 3; ++k) {
          const std::string prefix = "re.b" + std::to_string(b) + ".c" + std::to_string(k);
          w.merge(random_weights({c, c, 3, 3}, prefix + ".w", 100 * seed + 10 * b + k));
          w.merge(random_weights({c}, prefix + ".b", 100 * seed + 10 * b + k + 5));
        }
      std::vector<std::string> names;
      std::vector<Tensor> inputs{testing::away_from_zero(xs, seed)};
      for (const auto& [n, t] : w) {
        names.push_back(n);
        inputs.push_back(t);
      }
      const double re_err = testing::gradient_error(inputs, [&](const std::vector<Var>& v) {
        std::map<std::string, Var> m;
        for (std::size_t i = 0; i < names.size(); ++i) m.emplace(names[i], v[i + 1]);
        const Var& x = v[0];
        auto conv = [&](const Var& in, const std::string& prefix) {
          return ad::conv2d(in, m.at(prefix + ".w"), m.at(prefix + ".b"));
        };
        auto block = [&](const Var& in, const std::string& prefix) {
          Var h = ad::leaky_relu(conv(in, prefix + ".c1"));
          h = ad::leaky_relu(conv(h, prefix + ".c2"));
          return conv(h, prefix + ".c3");
        };
        const Var y1 = ad::add(block(x, "re.b1"), x);
        return testing::probe(ad::add(block(y1, "re.b2"), y1), seed);
      });
      CHECK(re_err < 1e-4);

      const double cam_err = testing::gradient_error(
          {testing::random_tensor({c, 3, 4}, seed + 20), testing::random_tensor({2, c}, seed + 21),
           testing::random_tensor({2}, seed + 22, 0.2, 0.5), testing::random_tensor({c, 2}, seed + 23),
           testing::random_tensor({c}, seed + 24)},
          [&](const std::vector<Var>& v) {
            return testing::probe(channel_attention(v[0], {v[1], v[2], v[3], v[4]}, 2), seed + 25);
          });
      CHECK(cam_err < 1e-4);

      const double mt_err = testing::gradient_error(
          {testing::random_tensor({c, 3, 4}, seed + 30)},
          [&](const std::vector<Var>& v) {
            return testing::probe(mt_guidance(v[0], Var::constant(testing::random_tensor({1, 3, 4}, seed + 31, 0, 1))),
                                  seed + 32);
          });
      CHECK(mt_err < 1e-4);
    }
  }

  TEST_CASE("residual_enhancement matches a hand-wired composition") {
    ModelWeights w;
    for (int b = 1; b <= 2; ++b)
      for (int k = 1; k <= 3; ++k) {
        const std::string prefix = "x.b" + std::to_string(b) + ".c" + std::to_string(k);
        w.merge(random_weights({3, 3, 3, 3}, prefix + ".w", 10 * b + k));
        w.merge(random_weights({3}, prefix + ".b", 10 * b + k + 5));
      }
    const Params p = Params::constants(w);
    const Var x = Var::constant(testing::random_tensor({3, 5, 5}, 1));
    auto block = [&](const Var& in, const std::string& pre) {
      Var h = ad::leaky_relu(ad::conv2d(in, p(pre + ".c1.w"), p(pre + ".c1.b")), 0.1);
      h = ad::leaky_relu(ad::conv2d(h, p(pre + ".c2.w"), p(pre + ".c2.b")), 0.1);
      return ad::conv2d(h, p(pre + ".c3.w"), p(pre + ".c3.b"));
    };
    const Var y1 = ad::add(block(x, "x.b1"), x);
    const Var expected = ad::add(block(y1, "x.b2"), y1);
    CHECK(residual_enhancement(x, p, "x", 0.1).value() == expected.value());
  }

  TEST_CASE("end-to-end gradient on 50 sampled parameters") {
    // Central differences with h = 1e-5 need pre-activations well clear of
    // the leaky-relu kink. At the 0.02 training init with zero biases every
    // activation sits within ~1e-3 of zero and the difference quotient
    // straddles kinks, so the check runs at a spread-out parameter point.
    ModelConfig cfg = small_config();
    cfg.init_std = 0.15;
    auto w = init_weights(cfg, 11);
    Rng bias_rng(21);
    for (auto& [name, t] : w)
      if (name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0 && name != "dec.out.b")
        for (double& v : t.data()) v = bias_rng.uniform(-0.2, 0.2);
    const auto in = prepare_input(testing::random_image(16, 16, 22, 0.1, 0.9), cfg);

    ad::Tape tape;
    const Params leaves = Params::leaves(w, tape);
    const auto grads = tape.backward(probe_loss(in, cfg, leaves));

    std::vector<std::pair<std::string, std::size_t>> picks;
    std::vector<std::string> names;
    for (const auto& [n, t] : w) names.push_back(n);
    Rng rng(12);
    while (picks.size() < 50) {
      const std::string& n = names[rng.below(names.size())];
      picks.emplace_back(n, rng.below(w.at(n).size()));
    }
    const double h = 1e-5;
    double worst = 0.0;
    for (const auto& [n, i] : picks) {
      auto eval = [&](double delta) {
        auto shifted = w;
        shifted.at(n)[i] += delta;
        return probe_loss(in, cfg, Params::constants(shifted)).value().item();
      };
      const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
      const double analytic = grads[leaves(n)][i];
      worst = std::max(worst, std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric)));
    }
    MESSAGE("end-to-end worst relative error " << worst);
    CHECK(worst < 1e-3);
  }

  TEST_CASE("every ablation builds, runs and trains all its parameters") {
    const Image img = scene(16, 16);
    int combos = 0;
    for (int mask = 0; mask < 32; ++mask)
      for (auto prior : {physics::Prior::kGdcp, physics::Prior::kDcp, physics::Prior::kUdcp}) {
        ModelConfig cfg = small_config();
        cfg.use_hsv = mask & 1;
        cfg.use_lab = mask & 2;
        cfg.triplicate_rgb = mask & 4;
        cfg.use_mtgm = mask & 8;
        cfg.use_cam = mask & 16;
        cfg.prior = prior;
        CAPTURE(mask);
        CAPTURE(physics::to_string(prior));
        const auto w = init_weights(cfg, 13);
        const auto in = prepare_input(img, cfg);
        ad::Tape tape;
        const Params p = Params::leaves(w, tape);
        const Var out = forward(in, cfg, p);
        REQUIRE(out.shape() == Shape{3, 16, 16});
        const auto grads = tape.backward(ad::mean(ad::square(ad::sub(out, Var::constant(scene(16, 16).to_tensor())))));
        for (const auto& [name, v] : p.all()) {
          const auto& g = grads[v];
          const bool nonzero = std::any_of(g.data().begin(), g.data().end(), [](double x) { return x != 0.0; });
          CAPTURE(name);
          CHECK(nonzero);
        }
        ++combos;
      }
    CHECK(combos == 96);
  }

  TEST_CASE("triplicated input feeds rgb to every path") {
    ModelConfig cfg = small_config();
    cfg.triplicate_rgb = true;
    const auto w = init_weights(cfg, 14);
    const Image img = scene(16, 16);
    auto in = prepare_input(img, cfg);
    const Tensor a = forward(in, cfg, Params::constants(w)).value();
    in.views.hsv = in.views.rgb;
    in.views.lab = in.views.rgb;
    cfg.triplicate_rgb = false;
    CHECK(forward(in, cfg, Params::constants(w)).value() == a);
  }

  TEST_CASE("enhance") {
    const ModelConfig cfg = small_config();
    const auto w = init_weights(cfg, 15);
    const Image out = enhance(scene(20, 24), cfg, w);
    CHECK(out.height == 20);
    CHECK(out.width == 24);
    for (double v : out.pixels) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(enhance(scene(20, 24), cfg, w) == out);
    CHECK_THROWS_AS(enhance(scene(18, 24), cfg, w), ShapeError);
    CHECK_THROWS_AS(enhance(scene(20, 22), cfg, w), ShapeError);
  }

  TEST_CASE("prepared crops match a prepared crop of the views") {
    const ModelConfig cfg = small_config();
    const Image img = scene(20, 28);
    const auto full = prepare_input(img, cfg, false);
    const auto c = crop_prepared(full, 4, 8, 12, 16, cfg.levels);
    CHECK(c.views.rgb == img.crop(4, 8, 12, 16));
    CHECK(c.transmission.at(0, 0) == full.transmission.at(4, 8));
    CHECK(c.rmt.size() == 3);
    CHECK(c.rmt[2].height == 3);
  }
}
