#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "approx.hpp"
#include "marksweep/checkpoint.hpp"
#include "marksweep/intensify.hpp"
#include "marksweep/losses.hpp"
#include "marksweep/optim.hpp"
#include "marksweep/rng.hpp"
#include "marksweep/textures.hpp"
#include "marksweep/train.hpp"
#include "oracles.hpp"

using namespace marksweep;

namespace {

Raster random_raster(int h, int w, int c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Raster r(h, w, c);
  Rng rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : r.data()) v = u(rng);
  return r;
}

Raster step_edge(int n) {
  Raster r(n, n, 1);
  for (int y = 0; y < n; ++y)
    for (int x = n / 2; x < n; ++x) r(y, x, 0) = 1.0;
  return r;
}

Raster add_const(const Raster& a, double c) {
  Raster r = a;
  for (double& v : r.data()) v += c;
  return r;
}

TrainConfig tiny_config(int steps) {
  TrainConfig cfg;
  cfg.schedule.total_steps = steps;
  cfg.schedule.warmup_steps = std::max(1, steps / 10);
  cfg.batch_size = 4;
  cfg.patch_size = 32;
  cfg.synthetic_images = 50;
  cfg.synthetic_size = 64;
  cfg.val_every = steps;
  cfg.val_patches = 16;
  cfg.checkpoint_every = 0;
  return cfg;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("perceptual stand-in") {
    Raster x = random_raster(16, 16, 3, 1, 0.2, 0.8);
    CHECK(perceptual_loss(x, x) == 0.0);
    CHECK(perceptual_loss(add_const(x, 0.1), x) < 1e-20);
    Raster edge = step_edge(16);
    CHECK(perceptual_loss(gaussian_blur(edge, 1.5), edge) > 1e-3);
    CHECK_THROWS_AS(perceptual_loss(x, Raster(16, 8, 3)), Error);
  }

  TEST_CASE("amplitude loss") {
    Raster x = random_raster(8, 12, 2, 2);
    CHECK(fft_amplitude_loss(x, x) == 0.0);
    Raster shifted(8, 12, 2);
    for (int y = 0; y < 8; ++y)
      for (int xx = 0; xx < 12; ++xx)
        for (int c = 0; c < 2; ++c) shifted((y + 3) % 8, (xx + 5) % 12, c) = x(y, xx, c);
    CHECK(fft_amplitude_loss(shifted, x) < 1e-14);
    Raster imp(6, 10, 1);
    imp(0, 0, 0) = 1.0;
    CHECK(fft_amplitude_loss(Raster(6, 10, 1), imp) == rel(1.0 / 60).epsilon(1e-12));
    CHECK_THROWS_AS(fft_amplitude_loss(x, Raster(8, 12, 1)), Error);
  }

  TEST_CASE("noise estimation loss") {
    Raster x_n = random_raster(8, 8, 3, 3);
    Raster n = random_raster(8, 8, 3, 4, -0.1, 0.1);
    CHECK(noise_estimation_loss(x_n, subtract(x_n, n), n) < 1e-20);
    double ms = 0;
    for (double v : n.data()) ms += v * v;
    CHECK(noise_estimation_loss(x_n, x_n, n) == rel(ms / n.size()).epsilon(1e-12));

    ImageTensor img(256, 256, 3, 0.5);
    NoiseParams p;
    auto inj = inject_noise(img, Raster(256, 256, 1, 1.0), p, 99);
    const double loss = noise_estimation_loss(inj.x_n, inj.x_n, inj.noise);
    CHECK(loss == rel(std::pow(50.0 / 255, 2)).epsilon(0.02));
  }

  TEST_CASE("total loss composition and fixed point") {
    Raster x = random_raster(16, 16, 3, 5, 0.1, 0.9);
    Raster n = random_raster(16, 16, 3, 6, -0.05, 0.05);
    Raster x_n = add_const(x, 0.0);
    for (std::size_t i = 0; i < x_n.size(); ++i) x_n.data()[i] += n.data()[i];
    CHECK(total_loss(x, x, x_n, subtract(x_n, x), LossWeights{}).terms.total < 1e-20);

    Raster xh = random_raster(16, 16, 3, 7);
    auto only_mse = total_loss(xh, x, x_n, n, LossWeights{0, 1, 0, 0});
    CHECK(only_mse.terms.total == rel(mse_loss(xh, x)).epsilon(1e-14));
    auto full = total_loss(xh, x, x_n, n, LossWeights{});
    const auto& t = full.terms;
    CHECK(t.total == rel(t.perceptual + 35 * t.mse + 0.2 * t.fft + 20 * t.noise).epsilon(1e-12));
    for (double v : {t.perceptual, t.mse, t.fft, t.noise}) CHECK(v >= 0.0);
    CHECK_THROWS_AS(LossWeights({-1, 1, 1, 1}).validate(), Error);
  }

  TEST_CASE("total loss gradient against central differences") {
    Raster x = random_raster(16, 16, 3, 8, 0.1, 0.9);
    Raster x_n = random_raster(16, 16, 3, 9, 0.1, 0.9);
    Raster n = random_raster(16, 16, 3, 10, -0.1, 0.1);
    Raster xh = random_raster(16, 16, 3, 11, 0.1, 0.9);
    auto tl = total_loss(xh, x, x_n, n, LossWeights{});
    const double h = 1e-5;
    int bad = 0;
    for (std::size_t k = 0; k < xh.size(); ++k) {
      Raster up = xh, dn = xh;
      up.data()[k] += h;
      dn.data()[k] -= h;
      const double num = (total_loss(up, x, x_n, n, LossWeights{}, false).terms.total -
                          total_loss(dn, x, x_n, n, LossWeights{}, false).terms.total) / (2 * h);
      const double ana = tl.grad.data()[k];
      const double err = std::abs(num - ana);
      if (err > 1e-8 && err > 1e-5 * std::max(std::abs(num), std::abs(ana))) ++bad;
    }
    CHECK(bad == 0);
  }

  TEST_CASE("adam") {
    std::vector<double> th{0.0};
    OptimState st(1);
    REQUIRE(adam_step(th, {1.0}, st, 1e-3));
    CHECK(th[0] == rel(-1e-3 / (1 + 1e-8)).epsilon(1e-12));
    CHECK(std::abs(th[0] - -9.99999990e-4) < 1e-12);
    for (float v : st.v) CHECK(v >= 0.0f);

    std::vector<double> z{0.5, -2.0};
    OptimState sz(2);
    for (int i = 0; i < 50; ++i) adam_step(z, {0.0, 0.0}, sz, 1e-2);
    CHECK(z == std::vector<double>{0.5, -2.0});

    std::vector<float> a{1.0f, 2.0f}, b = a;
    OptimState s1(2), s2(2);
    Rng r1(3), r2(3);
    std::normal_distribution<float> nd;
    for (int i = 0; i < 20; ++i) {
      std::vector<float> g1{nd(r1), nd(r1)}, g2{nd(r2), nd(r2)};
      adam_step(a, g1, s1, 1e-3);
      adam_step(b, g2, s2, 1e-3);
    }
    CHECK(a == b);

    std::vector<float> before = a;
    const auto step_before = s1.step;
    CHECK_FALSE(adam_step(a, {NAN, 0.0f}, s1, 1e-3));
    CHECK(a == before);
    CHECK(s1.step == step_before);
  }

  TEST_CASE("warmup cosine schedule") {
    Schedule s{1e-3, 100, 1000};
    CHECK(lr_at(0, s) == 0.0);
    CHECK(lr_at(50, s) == rel(5e-4));
    CHECK(lr_at(100, s) == rel(1e-3));
    CHECK(lr_at(1000, s) < 1e-18);
    CHECK(lr_at(550, s) == rel(5e-4));
    CHECK(std::abs(lr_at(99, s) - lr_at(101, s)) < 2e-5);
    for (int k = 0; k <= 1000; k += 7) CHECK(lr_at(k, s) >= 0.0);
    CHECK_THROWS_AS(lr_at(1001, s), Error);
    CHECK_THROWS_AS(lr_at(0, Schedule{1e-3, 100, 100}), Error);
  }

  TEST_CASE("checkpoint persistence") {
    testutil::TempDir dir("ckpt");
    Checkpoint ck;
    ck.params = init_params<float>(4);
    Rng rng(1);
    std::normal_distribution<float> nd;
    for (float& v : ck.params.values) v = nd(rng);
    ck.optim = OptimState(ck.params.values.size());
    for (float& v : ck.optim.m) v = nd(rng);
    for (float& v : ck.optim.v) v = std::abs(nd(rng));
    ck.optim.step = 17;
    ck.step = 17;
    ck.metrics = {{"val_psnr", 30.5}};
    const std::string path = dir.str("a.ckpt");
    save_checkpoint(ck, path);

    std::ifstream in(path, std::ios::binary);
    char magic[8];
    in.read(magic, 8);
    CHECK(std::string(magic, 8) == "MSWEEP01");

    Checkpoint back = load_checkpoint(path, &ck.params.arch);
    CHECK(back.params.values == ck.params.values);
    CHECK(back.optim.m == ck.optim.m);
    CHECK(back.optim.v == ck.optim.v);
    CHECK(back.optim.step == 17);
    CHECK(back.step == 17);
    CHECK(back.metrics == ck.metrics);
    save_checkpoint(back, dir.str("b.ckpt"));
    CHECK(file_sha256(path) == file_sha256(dir.str("b.ckpt")));

    const auto size = std::filesystem::file_size(path);
    for (auto cut : {size - 1, size / 2, std::uintmax_t{10}}) {
      std::filesystem::copy_file(path, dir.str("t.ckpt"), std::filesystem::copy_options::overwrite_existing);
      std::filesystem::resize_file(dir.str("t.ckpt"), cut);
      try {
        load_checkpoint(dir.str("t.ckpt"));
        FAIL("truncated checkpoint loaded");
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kCheckpoint);
      }
    }
    {
      std::fstream f(dir.str("b.ckpt"), std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(static_cast<std::streamoff>(size / 2));
      f.put('\x5a');
    }
    CHECK_THROWS_AS(load_checkpoint(dir.str("b.ckpt")), Error);

    Architecture other;
    other.stage_channels = {8, 16, 32, 64};
    try {
      load_checkpoint(path, &other);
      FAIL("architecture mismatch accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kCheckpoint);
    }
    try {
      load_checkpoint(dir.str("missing.ckpt"));
      FAIL("missing checkpoint loaded");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kFileNotFound);
    }
  }

  TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.patch_size = 40;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = TrainConfig{};
    cfg.schedule.warmup_steps = cfg.schedule.total_steps;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = TrainConfig{};
    cfg.synthetic_images = 0;
    testutil::TempDir dir("train-empty");
    CHECK_THROWS_AS(train(cfg, TrainOutputs{dir.str("m.ckpt"), "", {}}), Error);
  }

  TEST_CASE("zero loss weights leave the parameters alone") {
    testutil::TempDir dir("train-zero");
    TrainConfig cfg = tiny_config(5);
    cfg.weights = LossWeights{0, 0, 0, 0};
    TrainResult r = train(cfg, TrainOutputs{dir.str("m.ckpt"), "", {}});
    CHECK(r.checkpoint.params.values == init_params<float>(cfg.seed, cfg.arch).values);
  }

  TEST_CASE("training is deterministic") {
    testutil::TempDir dir("train-det");
    TrainConfig cfg = tiny_config(6);
    train(cfg, TrainOutputs{dir.str("a.ckpt"), dir.str("a.csv"), {}});
    train(cfg, TrainOutputs{dir.str("b.ckpt"), "", {}});
    CHECK(file_sha256(dir.str("a.ckpt")) == file_sha256(dir.str("b.ckpt")));
    std::ifstream csv(dir.str("a.csv"));
    std::string header;
    std::getline(csv, header);
    CHECK(header.starts_with("step,lr,"));
    CHECK(header.find("val_psnr") != std::string::npos);
    int rows = 0;
    for (std::string line; std::getline(csv, line);) ++rows;
    CHECK(rows == 6);
  }

  TEST_CASE("smoke training improves validation loss") {
    testutil::TempDir dir("train-smoke");
    TrainConfig cfg = tiny_config(200);
    TrainResult r = train(cfg, TrainOutputs{dir.str("m.ckpt"), "", {}});
    MESSAGE("validation total " << r.initial.total << " -> " << r.final.total << ", psnr " << r.initial.psnr
                                << " -> " << r.final.psnr);
    CHECK(r.final.total < r.initial.total);
    CHECK(std::filesystem::exists(dir.str("m.ckpt")));
  }
}
