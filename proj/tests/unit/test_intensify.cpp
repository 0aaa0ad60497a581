#include <doctest.h>

#include <cmath>

#include "approx.hpp"
#include "marksweep/intensify.hpp"
#include "marksweep/rng.hpp"

using namespace marksweep;

namespace {

Raster vertical_step(int h, int w, int col) {
  Raster g(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = col; x < w; ++x) g(y, x, 0) = 1.0;
  return g;
}

double variance_where(const Raster& n, const Mask& m) {
  double s = 0, s2 = 0;
  std::size_t k = 0;
  for (int y = 0; y < n.height(); ++y)
    for (int x = 0; x < n.width(); ++x) {
      if (!m(y, x)) continue;
      for (int c = 0; c < n.channels(); ++c) {
        s += n(y, x, c);
        s2 += n(y, x, c) * n(y, x, c);
        ++k;
      }
    }
  const double mean = s / k;
  return s2 / k - mean * mean;
}

}  // namespace

TEST_SUITE("intensifier") {
  TEST_CASE("parameter validation") {
    NoiseParams p;
    CHECK_NOTHROW(p.validate());
    p.s = 4;
    CHECK_THROWS_AS(p.validate(), Error);
    p = {};
    p.ring_gain = 1.2;
    CHECK_THROWS_AS(p.validate(), Error);
    p = {};
    p.canny_low = 0.3;
    CHECK_THROWS_AS(p.validate(), Error);
    p = {};
    p.sigma = -1;
    CHECK_THROWS_AS(p.validate(), Error);
  }

  TEST_CASE("sobel on constant and step images") {
    Gradients flat = sobel_gradients(Raster(6, 6, 1, 0.3));
    for (double v : flat.magnitude.values()) CHECK(v == 0.0);

    Gradients g = sobel_gradients(vertical_step(8, 8, 4));
    const double peak = 4.0 / (4.0 * std::sqrt(2.0));
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        CHECK(g.gy(y, x, 0) == 0.0);
        if (x == 3 || x == 4) {
          CHECK(g.gx(y, x, 0) == 4.0);
          CHECK(g.magnitude(y, x, 0) == rel(peak));
        } else {
          CHECK(g.gx(y, x, 0) == 0.0);
        }
      }
    CHECK_THROWS_AS(sobel_gradients(Raster(4, 4, 3)), Error);
  }

  TEST_CASE("sobel on a 45 degree step has |gx| = |gy|") {
    Raster d(12, 12, 1);
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 12; ++x) d(y, x, 0) = x > y ? 1.0 : (x < y ? 0.0 : 0.5);
    Gradients g = sobel_gradients(d);
    int band = 0;
    for (int y = 1; y < 11; ++y)
      for (int x = 1; x < 11; ++x) {
        if (g.magnitude(y, x, 0) == 0.0) continue;
        ++band;
        CHECK(std::abs(g.gx(y, x, 0)) == rel(std::abs(g.gy(y, x, 0))));
      }
    CHECK(band > 0);
  }

  TEST_CASE("canny") {
    NoiseParams p;
    CHECK(canny_edges(Raster(16, 16, 1, 0.7), p).count() == 0);

    // A clean step gives a one-pixel-wide vertical line.
    Mask m = canny_edges(vertical_step(24, 24, 12), p);
    int line_col = -1;
    for (int y = 3; y < 21; ++y) {
      int count = 0, col = -1;
      for (int x = 0; x < 24; ++x)
        if (m(y, x)) {
          ++count;
          col = x;
        }
      CHECK(count == 1);
      if (line_col < 0) line_col = col;
      CHECK(col == line_col);
    }
    CHECK((line_col == 11 || line_col == 12));

    // Weak noise never crosses the hysteresis thresholds.
    Raster noisy(64, 64, 1);
    Rng rng(5);
    std::normal_distribution<double> nd(0.0, 0.02);
    for (double& v : noisy.data()) v = 0.5 + nd(rng);
    CHECK(canny_edges(noisy, p).count() == 0);
  }

  TEST_CASE("square dilation") {
    Mask one(11, 11);
    one(5, 5) = 1;
    Mask d = dilate(one, 5);
    CHECK(d.count() == 25);
    for (int y = 3; y <= 7; ++y)
      for (int x = 3; x <= 7; ++x) CHECK(d(y, x) == 1);
    CHECK(dilate(one, 1).bits == one.bits);
    CHECK(dilate(Mask(5, 5), 3).count() == 0);
    CHECK_THROWS_AS(dilate(one, 4), Error);
    // Border pixels dilate inward only.
    Mask corner(6, 6);
    corner(0, 0) = 1;
    CHECK(dilate(corner, 3).count() == 4);
  }

  TEST_CASE("edge mask pair is disjoint and inside the dilation") {
    Mask core(9, 9);
    core(4, 4) = 1;
    core(4, 5) = 1;
    EdgeMaskPair e = edge_masks(core, 3);
    Mask d = dilate(core, 3);
    for (int i = 0; i < 81; ++i) {
      CHECK_FALSE((e.core.bits[i] && e.extended.bits[i]));
      if (e.extended.bits[i]) CHECK(d.bits[i]);
    }
    CHECK(e.extended.count() + e.core.count() == d.count());
  }

  TEST_CASE("gradient weight mask") {
    NoiseParams p;
    Raster mag(5, 5, 1, 0.3);
    EdgeMaskPair none{Mask(5, 5), Mask(5, 5)};
    const Raster zero = gradient_weight_mask(none, mag, p);
    for (double v : zero.values()) CHECK(v == 0.0);

    EdgeMaskPair single{Mask(5, 5), Mask(5, 5)};
    single.core(2, 2) = 1;
    CHECK(gradient_weight_mask(single, mag, p)(2, 2, 0) == rel(p.core_gain));

    EdgeMaskPair pair{Mask(5, 5), Mask(5, 5)};
    pair.core(2, 2) = 1;
    pair.extended(2, 3) = 1;
    Raster w = gradient_weight_mask(pair, mag, p);
    CHECK(w(2, 2, 0) == rel(1.0));
    CHECK(w(2, 3, 0) == rel(0.4));
    CHECK(w(0, 0, 0) == 0.0);

    // Min-max normalisation over the support.
    Raster ramp(1, 3, 1, std::vector<double>{0.2, 0.4, 0.6});
    EdgeMaskPair row{Mask(1, 3), Mask(1, 3)};
    row.core.bits = {1, 1, 1};
    Raster wr = gradient_weight_mask(row, ramp, p);
    CHECK(wr(0, 0, 0) == rel(0.0));
    CHECK(wr(0, 1, 0) == rel(0.5));
    CHECK(wr(0, 2, 0) == rel(1.0));
  }

  TEST_CASE("intensify trivial cases") {
    ImageTensor step(32, 32, 3);
    for (int y = 0; y < 32; ++y)
      for (int x = 16; x < 32; ++x)
        for (int c = 0; c < 3; ++c) step(y, x, c) = 0.8;
    NoiseParams quiet;
    quiet.sigma = 0;
    Intensified a = intensify(step, quiet, 1);
    CHECK(a.x_n.values() == step.values());
    for (double v : a.noise.values()) CHECK(v == 0.0);

    ImageTensor flat(32, 32, 3, 0.4);
    CHECK(intensify(flat, NoiseParams{}, 9).x_n.values() == flat.values());
  }

  TEST_CASE("noise support around a vertical step") {
    ImageTensor step(40, 40, 3, 0.2);
    for (int y = 0; y < 40; ++y)
      for (int x = 20; x < 40; ++x)
        for (int c = 0; c < 3; ++c) step(y, x, c) = 0.8;
    NoiseParams p;
    Intensified r = intensify(step, p, 3);
    Mask core = canny_edges(to_luma(step), p);
    Mask support = dilate(core, p.s);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x) {
        const bool far = x <= 15 || x >= 24;
        for (int c = 0; c < 3; ++c) {
          if (!support(y, x)) CHECK(r.noise(y, x, c) == 0.0);
          if (far) CHECK(r.x_n(y, x, c) == step(y, x, c));
        }
      }
  }

  TEST_CASE("core pixels are noisier than ring pixels") {
    const int h = 200, w = 100;
    EdgeMaskPair e{Mask(h, w), Mask(h, w)};
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) (x < w / 2 ? e.core : e.extended)(y, x) = 1;
    NoiseParams p;
    // One pixel below the rest keeps the normalisation away from the degenerate case.
    Raster mag(h, w, 1, 0.5);
    mag(0, 0, 0) = 0.0;
    Raster weights = gradient_weight_mask(e, mag, p);
    Intensified r = inject_noise(ImageTensor(h, w, 3, 0.5), weights, p, 12);
    const double vc = variance_where(r.noise, e.core), vr = variance_where(r.noise, e.extended);
    CHECK(vc > vr);
    CHECK(std::sqrt(vr / vc) == rel(0.4).epsilon(0.05));
  }

  TEST_CASE("noise scale with unit weights") {
    const int h = 600, w = 600;
    NoiseParams p;
    Intensified r = inject_noise(ImageTensor(h, w, 3, 0.5), Raster(h, w, 1, 1.0), p, 99);
    double s = 0, s2 = 0;
    for (double v : r.noise.values()) {
      s += v;
      s2 += v * v;
    }
    const double n = static_cast<double>(r.noise.size());
    const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
    CHECK(sd == rel(50.0 / 255.0).epsilon(0.02));
    // The returned noise is pre-clamp; the image is clamped.
    bool clamped_somewhere = false;
    for (std::size_t i = 0; i < r.noise.size(); ++i) {
      const double want = std::clamp(0.5 + r.noise.values()[i], 0.0, 1.0);
      CHECK_EQ(r.x_n.values()[i], want);
      clamped_somewhere |= std::abs(r.noise.values()[i]) > 0.5;
      if (i > 2000) break;
    }
    CHECK(clamped_somewhere);
  }

  TEST_CASE("intensify is reproducible from its seed") {
    ImageTensor img(48, 48, 3, 0.1);
    for (int y = 10; y < 30; ++y)
      for (int x = 10; x < 30; ++x)
        for (int c = 0; c < 3; ++c) img(y, x, c) = 0.9;
    Intensified a = intensify(img, NoiseParams{}, 42), b = intensify(img, NoiseParams{}, 42),
                c = intensify(img, NoiseParams{}, 43);
    CHECK(a.x_n.values() == b.x_n.values());
    CHECK(a.noise.values() == b.noise.values());
    CHECK(a.noise.values() != c.noise.values());
  }
}
