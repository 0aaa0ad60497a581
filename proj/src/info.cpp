#include "marksweep/info.hpp"

#include <algorithm>
#include <cmath>

#include "marksweep/error.hpp"
#include "marksweep/parallel.hpp"
#include "marksweep/rng.hpp"
#include "marksweep/textures.hpp"

namespace marksweep {

namespace {

double xlog2x(double p) { return p > 0 ? p * std::log2(p) : 0.0; }

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0 : s / v.size();
}

double std_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return v.size() < 2 ? 0 : std::sqrt(s / (v.size() - 1));
}

}  // namespace

BitChannelStats& BitChannelStats::operator+=(const BitChannelStats& o) {
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) n[a][b] += o.n[a][b];
  return *this;
}

double BitChannelStats::error_rate() const {
  const auto t = total();
  return t ? static_cast<double>(n[0][1] + n[1][0]) / t : 0.0;
}

double binary_entropy(double p) {
  require(p >= 0 && p <= 1, ErrorCode::kInvalidArgument, "binary_entropy: p must lie in [0,1]");
  return -xlog2x(p) - xlog2x(1 - p);
}

double input_entropy(const BitChannelStats& s) {
  const double t = static_cast<double>(s.total());
  require(t >= 1, ErrorCode::kInvalidArgument, "bit channel stats are empty");
  return binary_entropy((s.n[1][0] + s.n[1][1]) / t);
}

double empirical_mi(const BitChannelStats& s) {
  const double t = static_cast<double>(s.total());
  require(t >= 1, ErrorCode::kInvalidArgument, "bit channel stats are empty");
  const double pw[2] = {(s.n[0][0] + s.n[0][1]) / t, (s.n[1][0] + s.n[1][1]) / t};
  const double ph[2] = {(s.n[0][0] + s.n[1][0]) / t, (s.n[0][1] + s.n[1][1]) / t};
  double mi = 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const double p = s.n[a][b] / t;
      if (p > 0) mi += p * std::log2(p / (pw[a] * ph[b]));
    }
  return std::max(0.0, mi);
}

double conditional_entropy(const BitChannelStats& s) { return std::max(0.0, input_entropy(s) - empirical_mi(s)); }

double fano_lower_bound(double h_cond, std::uint64_t w_size) {
  require(w_size >= 2, ErrorCode::kInvalidArgument, "fano_lower_bound: alphabet needs >= 2 symbols");
  if (h_cond <= 0) return 0.0;
  if (w_size > 2) return std::clamp((h_cond - 1.0) / std::log2(static_cast<double>(w_size - 1)), 0.0, 1.0);
  const double target = std::min(h_cond, 1.0);
  double lo = 0.0, hi = 0.5;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    (binary_entropy(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

void DpiConfig::validate() const {
  require(n_trials >= 1, ErrorCode::kConfig, "dpi.n_trials must be >= 1");
  require(bootstrap >= 1, ErrorCode::kConfig, "dpi.bootstrap must be >= 1");
  require(image_size >= 64, ErrorCode::kConfig, "dpi.image_size must be >= 64");
  require(fano_tolerance >= 0, ErrorCode::kConfig, "dpi.fano_tolerance must be >= 0");
  require(threads >= 1, ErrorCode::kConfig, "threads must be >= 1");
}

DpiResult dpi_experiment(const NetParams<float>& model, const WatermarkKey& key, int bits, const NoiseParams& p,
                         const DpiConfig& cfg) {
  cfg.validate();
  NoiseParams noise = p;
  if (cfg.force_sigma_zero) noise.sigma = noise.mu = 0.0;
  noise.validate();
  const int T = cfg.n_trials, S = cfg.image_size;
  // decoded[stage][trial * bits + i], truth[trial * bits + i]
  std::vector<std::uint8_t> truth(static_cast<std::size_t>(T) * bits);
  std::array<std::vector<std::uint8_t>, 3> decoded;
  for (auto& d : decoded) d.resize(truth.size());
  parallel_for(T, cfg.threads, [&](int t) {
    const std::uint64_t tt = static_cast<std::uint64_t>(t);
    Payload w = Payload::random(bits, derive_seed(cfg.seed, {0x64706977, tt}));
    ImageTensor x = synth_texture(derive_seed(cfg.seed, {0x64706978, tt}), S, S);
    ImageTensor x_w = embed(x, w, key);
    Intensified in = intensify(x_w, noise, derive_seed(cfg.seed, {0x6470696e, tt}));
    ForwardResult<float> fwd = net_forward(in.x_n, model, false);
    const ImageTensor* taps[3] = {&x_w, &in.x_n, &fwd.x_hat};
    for (int s = 0; s < 3; ++s) {
      Payload d = decode(*taps[s], key, bits);
      for (int i = 0; i < bits; ++i) decoded[s][tt * bits + i] = d[i];
    }
    for (int i = 0; i < bits; ++i) truth[tt * bits + i] = w[i];
  });

  // Per-trial stats make the bootstrap a resampling of trials.
  std::array<std::vector<BitChannelStats>, 3> per_trial;
  for (int s = 0; s < 3; ++s) {
    per_trial[s].resize(T);
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < bits; ++i) {
        const std::size_t k = static_cast<std::size_t>(t) * bits + i;
        per_trial[s][t].add(truth[k], decoded[s][k]);
      }
  }

  DpiResult r;
  r.n_trials = T;
  r.bits = bits;
  for (int s = 0; s < 3; ++s) {
    DpiStage& st = r.stages[s];
    for (const auto& b : per_trial[s]) st.stats += b;
    st.mi = empirical_mi(st.stats);
    st.h_cond = conditional_entropy(st.stats);
    st.error_rate = st.stats.error_rate();
    st.fano_bound = fano_lower_bound(st.h_cond, 2);
    st.fano_consistent = binary_entropy(st.error_rate) >= st.h_cond - cfg.fano_tolerance;
    std::vector<double> pos(bits);
    for (int i = 0; i < bits; ++i) {
      BitChannelStats b;
      for (int t = 0; t < T; ++t) {
        const std::size_t k = static_cast<std::size_t>(t) * bits + i;
        b.add(truth[k], decoded[s][k]);
      }
      pos[i] = empirical_mi(b);
    }
    st.position_mi_min = *std::min_element(pos.begin(), pos.end());
    st.position_mi_max = *std::max_element(pos.begin(), pos.end());
    st.position_mi_std = std_of(pos);
  }
  r.calibration_ba = 1.0 - r.stages[0].error_rate;
  require(r.calibration_ba >= 0.99, ErrorCode::kNumeric,
          "watermark channel miscalibrated: unattacked bit accuracy " + std::to_string(r.calibration_ba) +
              " < 0.99 at " + std::to_string(S) + "x" + std::to_string(S));

  Rng rng(derive_seed(cfg.seed, {0x626f6f74}));
  std::array<std::vector<double>, 3> boot;
  std::array<std::vector<double>, 2> diffs;
  for (int b = 0; b < cfg.bootstrap; ++b) {
    std::array<BitChannelStats, 3> acc;
    for (int t = 0; t < T; ++t) {
      const std::size_t pick = uniform_index(rng, static_cast<std::uint64_t>(T));
      for (int s = 0; s < 3; ++s) acc[s] += per_trial[s][pick];
    }
    double mi[3];
    for (int s = 0; s < 3; ++s) boot[s].push_back(mi[s] = empirical_mi(acc[s]));
    diffs[0].push_back(mi[1] - mi[0]);
    diffs[1].push_back(mi[2] - mi[1]);
  }
  for (int s = 0; s < 3; ++s) r.stages[s].mi_std = std_of(boot[s]);
  r.diff_std = {std_of(diffs[0]), std_of(diffs[1])};
  const double i_w = r.stages[0].mi, i_n = r.stages[1].mi, i_d = r.stages[2].mi;
  r.ordering_holds = i_n <= i_w + 2 * r.diff_std[0] && i_d <= i_n + 2 * r.diff_std[1];
  r.degenerate = std::abs(i_n - i_w) <= 2 * r.diff_std[0] && std::abs(i_d - i_n) <= 2 * r.diff_std[1];
  r.fano_consistent = r.stages[0].fano_consistent && r.stages[1].fano_consistent && r.stages[2].fano_consistent;
  return r;
}

nlohmann::json DpiResult::to_json() const {
  static const char* names[3] = {"watermarked", "intensified", "denoised"};
  nlohmann::json st = nlohmann::json::object();
  for (int s = 0; s < 3; ++s) {
    const DpiStage& x = stages[s];
    st[names[s]] = {{"mi_bits", x.mi},
                    {"mi_bootstrap_std", x.mi_std},
                    {"h_cond_bits", x.h_cond},
                    {"error_rate", x.error_rate},
                    {"fano_lower_bound", x.fano_bound},
                    {"fano_consistent", x.fano_consistent},
                    {"position_mi_min", x.position_mi_min},
                    {"position_mi_max", x.position_mi_max},
                    {"position_mi_std", x.position_mi_std},
                    {"counts", {{"n00", x.stats.n[0][0]}, {"n01", x.stats.n[0][1]}, {"n10", x.stats.n[1][0]},
                                {"n11", x.stats.n[1][1]}}}};
  }
  return {{"stages", st},
          {"diff_bootstrap_std", {{"intensified_minus_watermarked", diff_std[0]}, {"denoised_minus_intensified", diff_std[1]}}},
          {"ordering_holds", ordering_holds},
          {"degenerate", degenerate},
          {"fano_consistent", fano_consistent},
          {"n_trials", n_trials},
          {"bits", bits},
          {"calibration_ba", calibration_ba}};
}

}  // namespace marksweep
