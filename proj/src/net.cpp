#include "marksweep/net.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "marksweep/rng.hpp"

namespace marksweep {

namespace {

[[maybe_unused]] const bool kBlasSingleThreaded = [] {
  openblas_set_num_threads(1);
  return true;
}();

void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a,
              lda, b, ldb, beta, c, ldc);
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a,
              lda, b, ldb, beta, c, ldc);
}

const char* gate_name(GateMode g) {
  switch (g) {
    case GateMode::kSigmoid: return "sigmoid";
    case GateMode::kRelu: return "relu";
    case GateMode::kForcedOne: return "forced_one";
  }
  return "sigmoid";
}

GateMode gate_from_name(const std::string& s) {
  if (s == "sigmoid") return GateMode::kSigmoid;
  if (s == "relu") return GateMode::kRelu;
  if (s == "forced_one") return GateMode::kForcedOne;
  fail(ErrorCode::kConfig, "unknown gate mode '" + s + "'");
}

template <class T>
T gate_value(GateMode g, T v) {
  switch (g) {
    case GateMode::kSigmoid: return static_cast<T>(sigmoid(static_cast<double>(v)));
    case GateMode::kRelu: return v > T(0) ? v : T(0);
    case GateMode::kForcedOne: return T(1);
  }
  return v;
}

/// Derivative expressed through the forward input v and output y.
template <class T>
T gate_derivative(GateMode g, T v, T y) {
  switch (g) {
    case GateMode::kSigmoid: return y * (T(1) - y);
    case GateMode::kRelu: return v > T(0) ? T(1) : T(0);
    case GateMode::kForcedOne: return T(0);
  }
  return T(0);
}

struct ConvGeometry {
  int cin, h, w, k, stride, pad, oh, ow;
  int kdim() const { return cin * k * k; }
  int out_plane() const { return oh * ow; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

template <class T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const int plane = g.out_plane();
  for (int ci = 0; ci < g.cin; ++ci)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        T* row = col + static_cast<std::size_t>((ci * g.k + ky) * g.k + kx) * plane;
        const T* src = x + static_cast<std::size_t>(ci) * g.h * g.w;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* dst = row + oy * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix < 0 || ix >= g.w) ? T(0) : srow[ix];
          }
        }
      }
}

template <class T>
void col2im_add(const T* col, const ConvGeometry& g, T* dx) {
  const int plane = g.out_plane();
  for (int ci = 0; ci < g.cin; ++ci)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        const T* row = col + static_cast<std::size_t>((ci * g.k + ky) * g.k + kx) * plane;
        T* dst = dx + static_cast<std::size_t>(ci) * g.h * g.w;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          T* drow = dst + static_cast<std::size_t>(iy) * g.w;
          const T* srow = row + oy * g.ow;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) drow[ix] += srow[ox];
          }
        }
      }
}

/// Plain convolution of a feature map with weights (cout x cin x k x k) and bias.
template <class T>
struct ConvResult {
  FeatureMap<T> y;
  std::shared_ptr<std::vector<T>> col;
  ConvGeometry geom;
};

template <class T>
ConvResult<T> conv_forward(const FeatureMap<T>& x, const T* weight, const T* bias, int cout, int k, int stride,
                           int pad, bool keep_col) {
  ConvGeometry g{x.channels, x.height, x.width, k, stride, pad, (x.height + 2 * pad - k) / stride + 1,
                 (x.width + 2 * pad - k) / stride + 1};
  require(g.oh >= 1 && g.ow >= 1, ErrorCode::kGeometry, "convolution input too small");
  ConvResult<T> r{FeatureMap<T>(cout, g.oh, g.ow), nullptr, g};
  const T* colp = x.data.data();
  std::vector<T> local;
  if (!g.pointwise()) {
    if (keep_col) {
      r.col = std::make_shared<std::vector<T>>(static_cast<std::size_t>(g.kdim()) * g.out_plane());
      colp = r.col->data();
      im2col(x.data.data(), g, r.col->data());
    } else {
      local.resize(static_cast<std::size_t>(g.kdim()) * g.out_plane());
      im2col(x.data.data(), g, local.data());
      colp = local.data();
    }
  }
  const int plane = g.out_plane();
  for (int co = 0; co < cout; ++co)
    std::fill(r.y.data.begin() + static_cast<std::size_t>(co) * plane,
              r.y.data.begin() + static_cast<std::size_t>(co + 1) * plane, bias ? bias[co] : T(0));
  gemm(false, false, cout, plane, g.kdim(), T(1), weight, g.kdim(), colp, plane, T(1), r.y.data.data(), plane);
  return r;
}

/// Accumulates weight/bias gradients and (optionally) input gradients.
template <class T>
void conv_backward(const T* dy, const ConvGeometry& g, int cout, const T* weight, const T* col, const T* x_data,
                   T* dweight, T* dbias, T* dx) {
  const int plane = g.out_plane();
  const T* colp = g.pointwise() ? x_data : col;
  gemm(false, true, cout, g.kdim(), plane, T(1), dy, plane, colp, plane, T(1), dweight, g.kdim());
  if (dbias)
    for (int co = 0; co < cout; ++co) {
      T s = 0;
      const T* row = dy + static_cast<std::size_t>(co) * plane;
      for (int i = 0; i < plane; ++i) s += row[i];
      dbias[co] += s;
    }
  if (!dx) return;
  if (g.pointwise()) {
    gemm(true, false, g.kdim(), plane, cout, T(1), weight, g.kdim(), dy, plane, T(1), dx, plane);
    return;
  }
  std::vector<T> dcol(static_cast<std::size_t>(g.kdim()) * plane);
  gemm(true, false, g.kdim(), plane, cout, T(1), weight, g.kdim(), dy, plane, T(0), dcol.data(), plane);
  col2im_add(dcol.data(), g, dx);
}

// ---- tape ops -------------------------------------------------------------

template <class T>
int conv_op(Tape<T>& tape, int in, const NetParams<T>& P, const std::string& name, int stride) {
  const ParamEntry& we = P.manifest.at(name + ".w");
  const ParamEntry& be = P.manifest.at(name + ".b");
  const int cout = we.shape[0], cin = we.shape[1], k = we.shape[2];
  require(tape.value(in).channels == cin, ErrorCode::kDimensionMismatch, name + ": input channel mismatch");
  const T* weight = P.values.data() + we.offset;
  const T* bias = P.values.data() + be.offset;
  ConvResult<T> r = conv_forward(tape.value(in), weight, bias, cout, k, stride, k / 2, tape.recording());
  const int id = tape.push(std::move(r.y));
  if (tape.recording()) {
    tape.record("conv:" + name, [=, col = r.col, g = r.geom, wo = we.offset, bo = be.offset](Tape<T>& t,
                                                                                           std::vector<T>& grads) {
      if (!t.has_grad(id)) return;
      const T* dy = t.grad(id).data.data();
      conv_backward(dy, g, cout, weight, col ? col->data() : nullptr, t.value(in).data.data(), grads.data() + wo,
                    grads.data() + bo, t.grad(in).data.data());
    });
  }
  return id;
}

template <class T>
int leaky_op(Tape<T>& tape, int in, T slope) {
  FeatureMap<T> y = tape.value(in);
  for (T& v : y.data) v = v > T(0) ? v : slope * v;
  const int id = tape.push(std::move(y));
  if (tape.recording()) {
    tape.note_activation_input(in);
    tape.record("leaky", [=](Tape<T>& t, std::vector<T>&) {
      if (!t.has_grad(id)) return;
      const auto& x = t.value(in).data;
      const auto& dy = t.grad(id).data;
      auto& dx = t.grad(in).data;
      for (std::size_t i = 0; i < x.size(); ++i) dx[i] += x[i] > T(0) ? dy[i] : slope * dy[i];
    });
  }
  return id;
}

struct AxisTap {
  int i0, i1;
  double frac;
};

std::vector<AxisTap> axis_taps(int in, int out) {
  std::vector<AxisTap> taps(out);
  for (int i = 0; i < out; ++i) {
    double src = std::clamp((i + 0.5) * in / out - 0.5, 0.0, static_cast<double>(in - 1));
    int i0 = static_cast<int>(std::floor(src));
    taps[i] = {i0, std::min(i0 + 1, in - 1), src - i0};
  }
  return taps;
}

template <class T>
int upsample2_op(Tape<T>& tape, int in) {
  const FeatureMap<T>& x = tape.value(in);
  const int c = x.channels, h = x.height, w = x.width;
  auto ty = axis_taps(h, 2 * h), tx = axis_taps(w, 2 * w);
  FeatureMap<T> y(c, 2 * h, 2 * w);
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < 2 * h; ++oy) {
      const AxisTap& a = ty[oy];
      for (int ox = 0; ox < 2 * w; ++ox) {
        const AxisTap& b = tx[ox];
        double top = x.at(ch, a.i0, b.i0) * (1 - b.frac) + x.at(ch, a.i0, b.i1) * b.frac;
        double bot = x.at(ch, a.i1, b.i0) * (1 - b.frac) + x.at(ch, a.i1, b.i1) * b.frac;
        y.at(ch, oy, ox) = static_cast<T>(top * (1 - a.frac) + bot * a.frac);
      }
    }
  const int id = tape.push(std::move(y));
  if (tape.recording()) {
    tape.record("upsample2", [=](Tape<T>& t, std::vector<T>&) {
      if (!t.has_grad(id)) return;
      const FeatureMap<T>& dy = t.grad(id);
      FeatureMap<T>& dx = t.grad(in);
      for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < 2 * h; ++oy) {
          const AxisTap& a = ty[oy];
          for (int ox = 0; ox < 2 * w; ++ox) {
            const AxisTap& b = tx[ox];
            const double g = dy.at(ch, oy, ox);
            dx.at(ch, a.i0, b.i0) += static_cast<T>(g * (1 - a.frac) * (1 - b.frac));
            dx.at(ch, a.i0, b.i1) += static_cast<T>(g * (1 - a.frac) * b.frac);
            dx.at(ch, a.i1, b.i0) += static_cast<T>(g * a.frac * (1 - b.frac));
            dx.at(ch, a.i1, b.i1) += static_cast<T>(g * a.frac * b.frac);
          }
        }
    });
  }
  return id;
}

template <class T>
int concat_op(Tape<T>& tape, int a, int b) {
  const FeatureMap<T>& xa = tape.value(a);
  const FeatureMap<T>& xb = tape.value(b);
  require(xa.height == xb.height && xa.width == xb.width, ErrorCode::kDimensionMismatch,
          "concat: spatial shape mismatch between decoder and skip");
  FeatureMap<T> y(xa.channels + xb.channels, xa.height, xa.width);
  std::copy(xa.data.begin(), xa.data.end(), y.data.begin());
  std::copy(xb.data.begin(), xb.data.end(), y.data.begin() + xa.data.size());
  const std::size_t na = xa.data.size();
  const int id = tape.push(std::move(y));
  if (tape.recording()) {
    tape.record("concat", [=](Tape<T>& t, std::vector<T>&) {
      if (!t.has_grad(id)) return;
      const auto& dy = t.grad(id).data;
      auto& da = t.grad(a).data;
      for (std::size_t i = 0; i < na; ++i) da[i] += dy[i];
      auto& db = t.grad(b).data;
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[na + i];
    });
  }
  return id;
}

}  // namespace

// ---- architecture / manifest ------------------------------------------------

void Architecture::validate() const {
  require(stage_channels.size() == 4, ErrorCode::kInvalidArgument, "architecture needs four encoder stages");
  for (int c : stage_channels) require(c >= 1, ErrorCode::kInvalidArgument, "stage channels must be positive");
  const int c = stage_channels.back();
  require(attention_reduction >= 1 && (3 * c) % attention_reduction == 0, ErrorCode::kInvalidArgument,
          "attention_reduction must divide 3c");
  require(spatial_kernel >= 1 && spatial_kernel % 2 == 1, ErrorCode::kInvalidArgument,
          "spatial attention kernel must be odd");
  require(leaky_slope >= 0.0 && leaky_slope < 1.0, ErrorCode::kInvalidArgument, "leaky slope must lie in [0,1)");
}

nlohmann::json Architecture::to_json() const {
  return {{"stage_channels", stage_channels},
          {"leaky_slope", leaky_slope},
          {"attention_reduction", attention_reduction},
          {"spatial_kernel", spatial_kernel},
          {"gate", gate_name(gate)}};
}

Architecture Architecture::from_json(const nlohmann::json& j) {
  Architecture a;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "stage_channels") a.stage_channels = it->get<std::vector<int>>();
    else if (k == "leaky_slope") a.leaky_slope = it->get<double>();
    else if (k == "attention_reduction") a.attention_reduction = it->get<int>();
    else if (k == "spatial_kernel") a.spatial_kernel = it->get<int>();
    else if (k == "gate") a.gate = gate_from_name(it->get<std::string>());
    else fail(ErrorCode::kConfig, "unknown key 'arch." + k + "'");
  }
  a.validate();
  return a;
}

const ParamEntry& Manifest::at(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return e;
  fail(ErrorCode::kInvalidArgument, "no parameter named " + name);
}

nlohmann::json Manifest::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : entries) arr.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}});
  return arr;
}

Manifest build_manifest(const Architecture& arch) {
  arch.validate();
  Manifest m;
  auto add = [&](std::string name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int s : shape) n *= static_cast<std::size_t>(s);
    m.entries.push_back({std::move(name), std::move(shape), m.total, n});
    m.total += n;
  };
  const auto& sc = arch.stage_channels;
  int in = arch.input_channels();
  for (int i = 0; i < 4; ++i) {
    const std::string p = "enc" + std::to_string(i);
    add(p + ".conv.w", {sc[i], in, 3, 3});
    add(p + ".conv.b", {sc[i]});
    add(p + ".down.w", {sc[i], sc[i], 3, 3});
    add(p + ".down.b", {sc[i]});
    in = sc[i];
  }
  add("lfdm.a", {1});
  add("lfdm.b", {1});
  add("lfdm.w", {3});
  const int c = sc.back(), c3 = 3 * c, hidden = c3 / arch.attention_reduction;
  add("fafm.ca1.w", {hidden, c3, 1, 1});
  add("fafm.ca1.b", {hidden});
  add("fafm.ca2.w", {c3, hidden, 1, 1});
  add("fafm.ca2.b", {c3});
  add("fafm.sa.w", {1, 3, arch.spatial_kernel, arch.spatial_kernel});
  add("fafm.sa.b", {1});
  in = c;
  for (int j = 0; j < 4; ++j) {
    const int skip = sc[3 - j];
    const std::string p = "dec" + std::to_string(j);
    add(p + ".up.w", {skip, in, 3, 3});
    add(p + ".up.b", {skip});
    add(p + ".fuse.w", {skip, 2 * skip, 3, 3});
    add(p + ".fuse.b", {skip});
    in = skip;
  }
  add("head.w", {arch.input_channels(), in, 3, 3});
  add("head.b", {arch.input_channels()});
  return m;
}

template <class T>
NetParams<T> init_params(std::uint64_t seed, const Architecture& arch) {
  NetParams<T> p{arch, build_manifest(arch), {}};
  p.values.assign(p.manifest.total, T(0));
  for (std::size_t e = 0; e < p.manifest.entries.size(); ++e) {
    const ParamEntry& entry = p.manifest.entries[e];
    T* dst = p.values.data() + entry.offset;
    const std::string& n = entry.name;
    if (n == "lfdm.w") {
      std::fill(dst, dst + entry.size, T(1));
    } else if (n.ends_with(".w") && n != "head.w") {
      std::size_t fan_in = 1;
      for (std::size_t k = 1; k < entry.shape.size(); ++k) fan_in *= static_cast<std::size_t>(entry.shape[k]);
      Rng rng(derive_seed(seed, {0x696e6974, e}));
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      for (std::size_t i = 0; i < entry.size; ++i) dst[i] = static_cast<T>(normal(rng));
    }
  }
  return p;
}

// ---- tape -------------------------------------------------------------------

template <class T>
int Tape<T>::push(FeatureMap<T> value) {
  values_.push_back(std::move(value));
  grads_.emplace_back();
  return static_cast<int>(values_.size()) - 1;
}

template <class T>
FeatureMap<T>& Tape<T>::grad(int id) {
  FeatureMap<T>& g = grads_[id];
  if (g.data.empty()) {
    const FeatureMap<T>& v = values_[id];
    g = FeatureMap<T>(v.channels, v.height, v.width);
  }
  return g;
}

template <class T>
void Tape<T>::record(std::string op, Backward fn) {
  if (!recording_) return;
  names_.push_back(std::move(op));
  ops_.push_back(std::move(fn));
}

template <class T>
void Tape<T>::backward(std::vector<T>& param_grads) {
  require(recording_, ErrorCode::kInvalidArgument, "backward on a non-recording tape");
  require(!consumed_, ErrorCode::kInvalidArgument, "tape reuse: backward already ran on this tape");
  consumed_ = true;
  for (std::size_t i = ops_.size(); i-- > 0;) ops_[i](*this, param_grads);
}

template <class T>
std::vector<std::uint8_t> Tape<T>::activation_signature() const {
  std::vector<std::uint8_t> sig;
  for (int id : activation_inputs_)
    for (T v : values_[id].data) sig.push_back(v > T(0));
  return sig;
}

// ---- stages ----------------------------------------------------------------

template <class T>
FeatureMap<T> to_feature_map(const Raster& img) {
  FeatureMap<T> f(img.channels(), img.height(), img.width());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) f.at(c, y, x) = static_cast<T>(img(y, x, c));
  return f;
}

template <class T>
EncoderOutput<T> encoder_forward(Tape<T>& tape, int input, const NetParams<T>& params) {
  const FeatureMap<T>& x = tape.value(input);
  const int mult = params.arch.multiple();
  require(x.height % mult == 0 && x.width % mult == 0 && x.height > 0 && x.width > 0, ErrorCode::kGeometry,
          "network input dims must be positive multiples of " + std::to_string(mult));
  require(x.channels == params.arch.input_channels(), ErrorCode::kDimensionMismatch,
          "network expects a 3-channel input");
  const T slope = static_cast<T>(params.arch.leaky_slope);
  EncoderOutput<T> out;
  int cur = input;
  for (int i = 0; i < 4; ++i) {
    const std::string p = "enc" + std::to_string(i);
    cur = leaky_op(tape, conv_op(tape, cur, params, p + ".conv", 1), slope);
    out.skips[i] = cur;
    cur = leaky_op(tape, conv_op(tape, cur, params, p + ".down", 2), slope);
  }
  out.features = cur;
  return out;
}

template <class T>
std::array<int, 3> lfdm_forward(Tape<T>& tape, int features, const NetParams<T>& params, double* max_imag) {
  const FeatureMap<T>& f = tape.value(features);
  FeatureMap<double> fd(f.channels, f.height, f.width);
  std::copy(f.data.begin(), f.data.end(), fd.data.begin());
  const std::size_t a_off = params.manifest.at("lfdm.a").offset;
  const std::size_t b_off = params.manifest.at("lfdm.b").offset;
  const std::size_t w_off = params.manifest.at("lfdm.w").offset;
  BandThresholds gamma{static_cast<double>(params.values[a_off]), static_cast<double>(params.values[b_off])};
  std::array<double, 3> weights{};
  for (int i = 0; i < 3; ++i) weights[i] = params.values[w_off + i];
  auto dec = std::make_shared<Decomposition>(decompose(fd, gamma, weights));
  if (max_imag) *max_imag = dec->max_imag_residue;
  std::array<int, 3> ids{};
  for (int i = 0; i < 3; ++i) {
    FeatureMap<T> band(f.channels, f.height, f.width);
    std::copy(dec->bands[i].data.begin(), dec->bands[i].data.end(), band.data.begin());
    ids[i] = tape.push(std::move(band));
  }
  if (tape.recording()) {
    tape.record("lfdm", [=](Tape<T>& t, std::vector<T>& grads) {
      std::array<FeatureMap<double>, 3> up;
      for (int i = 0; i < 3; ++i) {
        up[i] = FeatureMap<double>(dec->cache.channels, dec->cache.height, dec->cache.width);
        if (t.has_grad(ids[i])) {
          const auto& g = t.grad(ids[i]).data;
          std::copy(g.begin(), g.end(), up[i].data.begin());
        }
      }
      DecomposeGrads dg = decompose_backward(up, dec->cache);
      auto& dx = t.grad(features).data;
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += static_cast<T>(dg.df.data[i]);
      grads[a_off] += static_cast<T>(dg.da);
      grads[b_off] += static_cast<T>(dg.db);
      for (int i = 0; i < 3; ++i) grads[w_off + i] += static_cast<T>(dg.dweights[i]);
    });
  }
  return ids;
}

template <class T>
FafmOutput<T> fafm_forward(Tape<T>& tape, const std::array<int, 3>& bands, const NetParams<T>& params) {
  const FeatureMap<T>& b0 = tape.value(bands[0]);
  for (int i = 1; i < 3; ++i)
    require(tape.value(bands[i]).same_shape(b0), ErrorCode::kDimensionMismatch, "fafm: band shape mismatch");
  const int c = b0.channels, h = b0.height, w = b0.width;
  const std::size_t plane = b0.plane();
  const int c3 = 3 * c;
  const GateMode gate = params.arch.gate;
  const ParamEntry& w1e = params.manifest.at("fafm.ca1.w");
  const int hidden = w1e.shape[0];
  const T* W1 = params.data("fafm.ca1.w");
  const T* B1 = params.data("fafm.ca1.b");
  const T* W2 = params.data("fafm.ca2.w");
  const T* B2 = params.data("fafm.ca2.b");
  const T* WS = params.data("fafm.sa.w");
  const T* BS = params.data("fafm.sa.b");
  const int ks = params.arch.spatial_kernel;

  struct Cache {
    std::vector<T> z, u, r, v, wc;
    FeatureMap<T> s_in, s, ws;
    std::shared_ptr<std::vector<T>> col;
    ConvGeometry geom{};
  };
  auto cache = std::make_shared<Cache>();

  // Channel branch: GAP over the 3c concat -> 1x1 -> ReLU -> 1x1 -> gate.
  cache->z.assign(c3, T(0));
  for (int b = 0; b < 3; ++b) {
    const FeatureMap<T>& fb = tape.value(bands[b]);
    for (int ch = 0; ch < c; ++ch) {
      double s = 0;
      for (std::size_t p = 0; p < plane; ++p) s += fb.data[ch * plane + p];
      cache->z[b * c + ch] = static_cast<T>(s / plane);
    }
  }
  cache->u.assign(B1, B1 + hidden);
  gemm(false, false, hidden, 1, c3, T(1), W1, c3, cache->z.data(), 1, T(1), cache->u.data(), 1);
  cache->r.resize(hidden);
  for (int i = 0; i < hidden; ++i) cache->r[i] = cache->u[i] > T(0) ? cache->u[i] : T(0);
  cache->v.assign(B2, B2 + c3);
  gemm(false, false, c3, 1, hidden, T(1), W2, hidden, cache->r.data(), 1, T(1), cache->v.data(), 1);
  cache->wc.resize(c3);
  for (int i = 0; i < c3; ++i) cache->wc[i] = gate_value(gate, cache->v[i]);

  // Spatial branch: per-band channel means -> kxk conv -> gate.
  cache->s_in = FeatureMap<T>(3, h, w);
  for (int b = 0; b < 3; ++b) {
    const FeatureMap<T>& fb = tape.value(bands[b]);
    for (std::size_t p = 0; p < plane; ++p) {
      double s = 0;
      for (int ch = 0; ch < c; ++ch) s += fb.data[ch * plane + p];
      cache->s_in.data[b * plane + p] = static_cast<T>(s / c);
    }
  }
  ConvResult<T> sr = conv_forward(cache->s_in, WS, BS, 1, ks, 1, ks / 2, tape.recording());
  cache->s = std::move(sr.y);
  cache->col = sr.col;
  cache->geom = sr.geom;
  cache->ws = FeatureMap<T>(1, h, w);
  for (std::size_t p = 0; p < plane; ++p) cache->ws.data[p] = gate_value(gate, cache->s.data[p]);

  FeatureMap<T> fused(c, h, w);
  for (int b = 0; b < 3; ++b) {
    const FeatureMap<T>& fb = tape.value(bands[b]);
    for (int ch = 0; ch < c; ++ch) {
      const T wc = cache->wc[b * c + ch];
      for (std::size_t p = 0; p < plane; ++p)
        fused.data[ch * plane + p] += fb.data[ch * plane + p] * wc * cache->ws.data[p] / T(3);
    }
  }

  FafmOutput<T> out;
  out.channel_weights = FeatureMap<T>(c, 3, 1);
  for (int ch = 0; ch < c; ++ch)
    for (int b = 0; b < 3; ++b) out.channel_weights.at(ch, b, 0) = cache->wc[b * c + ch];
  out.spatial_weights = cache->ws;
  out.fused = tape.push(std::move(fused));
  const int id = out.fused;
  if (!tape.recording()) return out;

  const std::size_t w1o = w1e.offset, b1o = params.manifest.at("fafm.ca1.b").offset;
  const std::size_t w2o = params.manifest.at("fafm.ca2.w").offset, b2o = params.manifest.at("fafm.ca2.b").offset;
  const std::size_t wso = params.manifest.at("fafm.sa.w").offset, bso = params.manifest.at("fafm.sa.b").offset;
  {
    // Pre-activation nodes, kept only so kink detection sees them.
    FeatureMap<T> u(hidden, 1, 1);
    std::copy(cache->u.begin(), cache->u.end(), u.data.begin());
    tape.note_activation_input(tape.push(std::move(u)));
    if (gate == GateMode::kRelu) {
      FeatureMap<T> v(c3, 1, 1);
      std::copy(cache->v.begin(), cache->v.end(), v.data.begin());
      tape.note_activation_input(tape.push(std::move(v)));
      tape.note_activation_input(tape.push(cache->s));
    }
  }
  tape.record("fafm", [=](Tape<T>& t, std::vector<T>& grads) {
    if (!t.has_grad(id)) return;
    const FeatureMap<T>& g = t.grad(id);
    std::vector<T> dwc(c3, T(0));
    FeatureMap<T> dws(1, h, w);
    for (int b = 0; b < 3; ++b) {
      const FeatureMap<T>& fb = t.value(bands[b]);
      FeatureMap<T>& dfb = t.grad(bands[b]);
      for (int ch = 0; ch < c; ++ch) {
        const T wc = cache->wc[b * c + ch];
        double acc = 0;
        for (std::size_t p = 0; p < plane; ++p) {
          const T gp = g.data[ch * plane + p] / T(3);
          const T fv = fb.data[ch * plane + p];
          dfb.data[ch * plane + p] += gp * wc * cache->ws.data[p];
          acc += gp * fv * cache->ws.data[p];
          dws.data[p] += gp * fv * wc;
        }
        dwc[b * c + ch] = static_cast<T>(acc);
      }
    }
    // Channel branch backward.
    std::vector<T> dv(c3), dr(hidden, T(0)), du(hidden), dz(c3, T(0));
    for (int i = 0; i < c3; ++i) dv[i] = dwc[i] * gate_derivative(gate, cache->v[i], cache->wc[i]);
    gemm(false, true, c3, hidden, 1, T(1), dv.data(), 1, cache->r.data(), 1, T(1), grads.data() + w2o, hidden);
    for (int i = 0; i < c3; ++i) grads[b2o + i] += dv[i];
    gemm(true, false, hidden, 1, c3, T(1), W2, hidden, dv.data(), 1, T(0), dr.data(), 1);
    for (int i = 0; i < hidden; ++i) du[i] = cache->u[i] > T(0) ? dr[i] : T(0);
    gemm(false, true, hidden, c3, 1, T(1), du.data(), 1, cache->z.data(), 1, T(1), grads.data() + w1o, c3);
    for (int i = 0; i < hidden; ++i) grads[b1o + i] += du[i];
    gemm(true, false, c3, 1, hidden, T(1), W1, c3, du.data(), 1, T(0), dz.data(), 1);
    for (int b = 0; b < 3; ++b) {
      FeatureMap<T>& dfb = t.grad(bands[b]);
      for (int ch = 0; ch < c; ++ch) {
        const T d = dz[b * c + ch] / static_cast<T>(plane);
        for (std::size_t p = 0; p < plane; ++p) dfb.data[ch * plane + p] += d;
      }
    }
    // Spatial branch backward.
    FeatureMap<T> ds(1, h, w);
    for (std::size_t p = 0; p < plane; ++p)
      ds.data[p] = dws.data[p] * gate_derivative(gate, cache->s.data[p], cache->ws.data[p]);
    FeatureMap<T> ds_in(3, h, w);
    conv_backward(ds.data.data(), cache->geom, 1, WS, cache->col ? cache->col->data() : nullptr,
                  cache->s_in.data.data(), grads.data() + wso, grads.data() + bso, ds_in.data.data());
    for (int b = 0; b < 3; ++b) {
      FeatureMap<T>& dfb = t.grad(bands[b]);
      for (std::size_t p = 0; p < plane; ++p) {
        const T d = ds_in.data[b * plane + p] / static_cast<T>(c);
        for (int ch = 0; ch < c; ++ch) dfb.data[ch * plane + p] += d;
      }
    }
  });
  return out;
}

template <class T>
int decoder_forward(Tape<T>& tape, int fused, const std::array<int, 4>& skips, const NetParams<T>& params) {
  const T slope = static_cast<T>(params.arch.leaky_slope);
  int cur = fused;
  for (int j = 0; j < 4; ++j) {
    const std::string p = "dec" + std::to_string(j);
    const int skip = skips[3 - j];
    int up = upsample2_op(tape, cur);
    require(tape.value(up).height == tape.value(skip).height && tape.value(up).width == tape.value(skip).width,
            ErrorCode::kDimensionMismatch, "decoder: upsampled map does not match skip " + std::to_string(3 - j));
    int a = leaky_op(tape, conv_op(tape, up, params, p + ".up", 1), slope);
    int cat = concat_op(tape, a, skip);
    cur = leaky_op(tape, conv_op(tape, cat, params, p + ".fuse", 1), slope);
  }
  return conv_op(tape, cur, params, "head", 1);
}

template <class T>
ForwardResult<T> net_forward(const ImageTensor& x_n, const NetParams<T>& params, bool record) {
  require(x_n.channels() == params.arch.input_channels(), ErrorCode::kDimensionMismatch,
          "network expects a 3-channel image");
  require(params.values.size() == params.manifest.total, ErrorCode::kCheckpoint,
          "parameter vector does not match manifest");
  ForwardResult<T> r;
  r.tape = std::make_unique<Tape<T>>(record);
  r.param_count = params.values.size();
  Tape<T>& tape = *r.tape;
  const int input = tape.push(to_feature_map<T>(x_n));
  r.encoder = encoder_forward(tape, input, params);
  auto bands = lfdm_forward(tape, r.encoder.features, params, &r.lfdm_max_imag);
  auto fafm = fafm_forward(tape, bands, params);
  r.output_node = decoder_forward(tape, fafm.fused, r.encoder.skips, params);

  const FeatureMap<T>& pred = tape.value(r.output_node);
  r.pre_clamp = Raster(x_n.height(), x_n.width(), x_n.channels());
  for (int y = 0; y < x_n.height(); ++y)
    for (int x = 0; x < x_n.width(); ++x)
      for (int c = 0; c < x_n.channels(); ++c)
        r.pre_clamp(y, x, c) = x_n(y, x, c) + static_cast<double>(pred.at(c, y, x));
  r.x_hat = ImageTensor::clamped(r.pre_clamp);
  return r;
}

template <class T>
std::vector<T> net_backward(ForwardResult<T>& fwd, const Raster& dl_dxhat) {
  require(fwd.tape && fwd.tape->recording(), ErrorCode::kInvalidArgument, "net_backward needs a recorded tape");
  require(dl_dxhat.same_shape(fwd.pre_clamp), ErrorCode::kDimensionMismatch, "net_backward: gradient shape mismatch");
  Tape<T>& tape = *fwd.tape;
  FeatureMap<T>& dpred = tape.grad(fwd.output_node);
  for (int y = 0; y < dl_dxhat.height(); ++y)
    for (int x = 0; x < dl_dxhat.width(); ++x)
      for (int c = 0; c < dl_dxhat.channels(); ++c) {
        const double v = fwd.pre_clamp(y, x, c);
        dpred.at(c, y, x) = (v >= 0.0 && v <= 1.0) ? static_cast<T>(dl_dxhat(y, x, c)) : T(0);
      }
  std::vector<T> grads(fwd.param_count, T(0));
  tape.backward(grads);
  return grads;
}

template NetParams<float> init_params<float>(std::uint64_t, const Architecture&);
template class Tape<float>;
template FeatureMap<float> to_feature_map<float>(const Raster&);
template EncoderOutput<float> encoder_forward<float>(Tape<float>&, int, const NetParams<float>&);
template std::array<int, 3> lfdm_forward<float>(Tape<float>&, int, const NetParams<float>&, double*);
template FafmOutput<float> fafm_forward<float>(Tape<float>&, const std::array<int, 3>&, const NetParams<float>&);
template int decoder_forward<float>(Tape<float>&, int, const std::array<int, 4>&, const NetParams<float>&);
template ForwardResult<float> net_forward<float>(const ImageTensor&, const NetParams<float>&, bool);
template std::vector<float> net_backward<float>(ForwardResult<float>&, const Raster&);

template NetParams<double> init_params<double>(std::uint64_t, const Architecture&);
template class Tape<double>;
template FeatureMap<double> to_feature_map<double>(const Raster&);
template EncoderOutput<double> encoder_forward<double>(Tape<double>&, int, const NetParams<double>&);
template std::array<int, 3> lfdm_forward<double>(Tape<double>&, int, const NetParams<double>&, double*);
template FafmOutput<double> fafm_forward<double>(Tape<double>&, const std::array<int, 3>&, const NetParams<double>&);
template int decoder_forward<double>(Tape<double>&, int, const std::array<int, 4>&, const NetParams<double>&);
template ForwardResult<double> net_forward<double>(const ImageTensor&, const NetParams<double>&, bool);
template std::vector<double> net_backward<double>(ForwardResult<double>&, const Raster&);

}  // namespace marksweep
