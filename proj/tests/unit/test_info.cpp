#include <doctest.h>

#include <cmath>

#include "approx.hpp"
#include "marksweep/info.hpp"
#include "marksweep/rng.hpp"
#include "oracles.hpp"

using namespace marksweep;

namespace {

BitChannelStats bsc_sample(double flip, int n, std::uint64_t seed) {
  BitChannelStats s;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    const int w = static_cast<int>(rng() & 1);
    s.add(w, uniform01(rng) < flip ? 1 - w : w);
  }
  return s;
}

BitChannelStats counts(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  BitChannelStats s;
  s.add(0, 0, a);
  s.add(0, 1, b);
  s.add(1, 0, c);
  s.add(1, 1, d);
  return s;
}

}  // namespace

TEST_SUITE("info-theory") {
  TEST_CASE("binary entropy") {
    CHECK(binary_entropy(0.5) == 1.0);
    CHECK(binary_entropy(0.0) == 0.0);
    CHECK(binary_entropy(1.0) == 0.0);
    CHECK(binary_entropy(0.11) == rel(0.4999, 1e-3));
    CHECK(binary_entropy(0.3) == rel(oracle::h2(0.3), 1e-14));
    CHECK_THROWS_AS(binary_entropy(-0.01), Error);
    CHECK_THROWS_AS(binary_entropy(1.5), Error);
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
      const double p = uniform01(rng), q = uniform01(rng);
      CHECK(binary_entropy((p + q) / 2) >= (binary_entropy(p) + binary_entropy(q)) / 2 - 1e-15);
    }
  }

  TEST_CASE("plug-in mutual information") {
    CHECK(std::abs(empirical_mi(counts(250, 250, 250, 250))) < 1e-15);
    CHECK(empirical_mi(counts(500, 0, 0, 500)) == rel(1.0, 1e-14));
    CHECK(conditional_entropy(counts(500, 0, 0, 500)) < 1e-14);
    CHECK(conditional_entropy(counts(250, 250, 250, 250)) == rel(1.0, 1e-14));
    CHECK(input_entropy(counts(10, 0, 30, 0)) == rel(oracle::h2(0.75), 1e-14));

    BitChannelStats bsc = bsc_sample(0.11, 100000, 17);
    CHECK(std::abs(empirical_mi(bsc) - oracle::bsc_mi(0.11)) < 0.01);
    CHECK(std::abs(conditional_entropy(bsc) - oracle::h2(0.11)) < 0.01);
    CHECK(bsc.error_rate() == rel(0.11, 0.03));
    CHECK(bsc.total() == 100000);

    Rng rng(9);
    for (int i = 0; i < 300; ++i) {
      BitChannelStats s = counts(rng() % 50, rng() % 50, rng() % 50, 1 + rng() % 50);
      const double mi = empirical_mi(s);
      const double hw = input_entropy(s);
      const double n0 = s.n[0][0] + s.n[1][0], n1 = s.n[0][1] + s.n[1][1];
      const double hwh = oracle::h2(n1 / (n0 + n1));
      CHECK(mi >= 0.0);
      CHECK(mi <= std::min(hw, hwh) + 1e-12);
    }
    BitChannelStats a = counts(1, 2, 3, 4), b = counts(4, 3, 2, 1);
    a += b;
    CHECK(a.n[0][0] == 5);
    CHECK(a.total() == 20);
  }

  TEST_CASE("fano lower bound") {
    CHECK(fano_lower_bound(0.0, 2) == 0.0);
    CHECK(fano_lower_bound(1.0, 2) == rel(0.5, 1e-8));
    CHECK(fano_lower_bound(1.3, 2) == rel(0.5, 1e-8));
    CHECK(fano_lower_bound(0.4999, 2) == rel(0.11, 1e-3));
    for (int i = 0; i <= 100; ++i) {
      const double p = 0.5 * i / 100;
      CHECK(std::abs(fano_lower_bound(binary_entropy(p), 2) - p) < 1e-6);
    }
    // Larger alphabets: (H - 1) / log2(|W| - 1), floored at zero.
    CHECK(fano_lower_bound(3.0, 5) == rel(1.0));
    CHECK(fano_lower_bound(0.5, 5) == 0.0);
    CHECK_THROWS_AS(fano_lower_bound(0.5, 1), Error);
  }

  TEST_CASE("degenerate chain gives equal taps") {
    DpiConfig cfg;
    cfg.n_trials = 300;
    cfg.force_sigma_zero = true;
    cfg.bootstrap = 200;
    DpiResult r = dpi_experiment(init_params<float>(1), WatermarkKey{}, 48, NoiseParams{}, cfg);
    CHECK(r.degenerate);
    CHECK(r.ordering_holds);
    CHECK(r.fano_consistent);
    CHECK(r.calibration_ba >= 0.99);
    for (const auto& st : r.stages) {
      CHECK(st.stats.total() == 14400u);
      CHECK(std::abs(st.mi - r.stages[0].mi) <= 2 * st.mi_std + 1e-12);
      CHECK(st.fano_consistent);
      CHECK(st.mi >= 0.0);
      CHECK(st.mi <= 1.0);
      CHECK(st.position_mi_min <= st.mi + 1e-12);
    }
    auto j = r.to_json();
    CHECK(j["degenerate"] == true);
    CHECK(j["n_trials"] == 300);
  }

  TEST_CASE("bad experiment settings") {
    DpiConfig cfg;
    cfg.image_size = 32;
    CHECK_THROWS_AS(dpi_experiment(init_params<float>(1), WatermarkKey{}, 48, NoiseParams{}, cfg), Error);
  }
}
