// Command-line front end over the C API.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>

#include "marksweep/marksweep.h"

namespace {

struct ImageDel {
  void operator()(ms_image* p) const { ms_image_free(p); }
};
struct KeyDel {
  void operator()(ms_key* p) const { ms_key_free(p); }
};
struct ModelDel {
  void operator()(ms_model* p) const { ms_model_free(p); }
};
struct StrDel {
  void operator()(char* p) const { ms_string_free(p); }
};
using Image = std::unique_ptr<ms_image, ImageDel>;
using Key = std::unique_ptr<ms_key, KeyDel>;
using Model = std::unique_ptr<ms_model, ModelDel>;
using Str = std::unique_ptr<char, StrDel>;

/// Thrown to unwind with an exit status after printing the library's message.
struct Exit {
  int code;
};

void check(ms_status s) {
  if (s == MS_OK) return;
  std::fprintf(stderr, "error: %s\n", ms_last_error());
  throw Exit{static_cast<int>(s)};
}

[[noreturn]] void usage(const std::string& msg) {
  std::fprintf(stderr, "error: %s\n", msg.c_str());
  throw Exit{MS_ERR_USAGE};
}

struct KeyOpts {
  uint64_t seed = 0x6d61726b;
  double alpha = 0.04;
  int coeffs_per_bit = 12;
  int bits = 48;
};

void add_key_opts(CLI::App* cmd, KeyOpts& k) {
  cmd->add_option("--key-seed", k.seed, "watermark key seed");
  cmd->add_option("--alpha", k.alpha, "embedding strength (DCT units)");
  cmd->add_option("--coeffs-per-bit", k.coeffs_per_bit, "carrier coefficients per bit");
  cmd->add_option("--bits", k.bits, "payload length");
}

Key make_key(const KeyOpts& k) {
  ms_key* key = nullptr;
  check(ms_key_create(k.seed, k.alpha, k.coeffs_per_bit, &key));
  return Key(key);
}

Image load(const std::string& path) {
  ms_image* img = nullptr;
  check(ms_image_load(path.c_str(), &img));
  return Image(img);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Watermark removal laboratory: embed, attack, train, evaluate."};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ms_version()));

  // embed
  KeyOpts ek;
  std::string e_in, e_out, e_payload;
  uint64_t e_seed = 1;
  auto* embed = app.add_subcommand("embed", "embed a payload into a PNG");
  embed->add_option("--in", e_in, "clean image")->required();
  embed->add_option("--out", e_out, "watermarked output")->required();
  embed->add_option("--payload", e_payload, "payload as hex (random when omitted)");
  embed->add_option("--seed", e_seed, "seed for a random payload");
  add_key_opts(embed, ek);

  // decode
  KeyOpts dk;
  std::string d_in, d_expect;
  auto* decode = app.add_subcommand("decode", "decode the payload of a PNG");
  decode->add_option("--in", d_in, "image to decode")->required();
  decode->add_option("--expect", d_expect, "expected payload hex; prints bit accuracy");
  add_key_opts(decode, dk);

  // threshold
  int t_bits = 48;
  double t_fpr = 1e-6;
  auto* thr = app.add_subcommand("threshold", "detection threshold for a target false-positive rate");
  thr->add_option("--bits", t_bits, "payload length")->required();
  thr->add_option("--fpr", t_fpr, "target false-positive rate")->required();

  // attack
  std::string a_in, a_out, a_kind, a_ckpt;
  int a_quality = 50, a_ksize = 10;
  double a_mu = 0.0, a_sigma = 0.05, a_ratio = 0.9;
  bool a_sharpen = false;
  uint64_t a_seed = 1;
  ms_noise_params np;
  ms_noise_params_default(&np);
  auto* attack = app.add_subcommand("attack", "apply one attack to a PNG");
  attack->add_option("--in", a_in, "input image")->required();
  attack->add_option("--out", a_out, "attacked output")->required();
  attack->add_option("--attack", a_kind, "marksweep | jpeg | blur | noise | crop")
      ->required()
      ->check(CLI::IsMember({"marksweep", "jpeg", "blur", "noise", "crop"}));
  attack->add_option("--checkpoint", a_ckpt, "trained model (marksweep)");
  attack->add_option("--quality", a_quality, "JPEG quality");
  attack->add_option("--ksize", a_ksize, "blur kernel size");
  attack->add_option("--mu", a_mu, "noise mean (unit scale)");
  attack->add_option("--sigma", a_sigma, "noise std (unit scale)");
  attack->add_option("--ratio", a_ratio, "central crop ratio");
  attack->add_flag("--sharpen", a_sharpen, "unsharp-mask the marksweep output");
  attack->add_option("--seed", a_seed, "attack seed");
  attack->add_option("--intensify-sigma", np.sigma, "intensification std (0-255 scale)");
  attack->add_option("--intensify-mu", np.mu, "intensification mean (0-255 scale)");
  attack->add_option("--intensify-s", np.s, "dilation size");

  // config-driven commands
  std::string c_train, c_eval, c_dpi;
  int threads = 0;
  auto* train = app.add_subcommand("train", "train the denoiser from a JSON run config");
  train->add_option("config", c_train, "run config")->required();
  train->add_option("--threads", threads, "override the config's thread count");
  auto* eval = app.add_subcommand("eval", "evaluate attacks from a JSON run config");
  eval->add_option("config", c_eval, "run config")->required();
  eval->add_option("--threads", threads, "override the config's thread count");
  auto* dpi = app.add_subcommand("dpi-demo", "mutual-information chain experiment");
  dpi->add_option("config", c_dpi, "run config")->required();
  dpi->add_option("--threads", threads, "override the config's thread count");

  // synth
  std::string s_out;
  int s_count = 100, s_size = 128;
  uint64_t s_seed = 1;
  auto* synth = app.add_subcommand("synth", "write a synthetic texture dataset");
  synth->add_option("--out", s_out, "output directory")->required();
  synth->add_option("--count", s_count, "number of images");
  synth->add_option("--size", s_size, "edge length in pixels");
  synth->add_option("--seed", s_seed, "dataset seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : MS_ERR_USAGE;
  }

  try {
    if (*embed) {
      Image x = load(e_in);
      Key key = make_key(ek);
      ms_image* y = nullptr;
      char* hex = nullptr;
      check(ms_embed(x.get(), key.get(), ek.bits, e_payload.empty() ? nullptr : e_payload.c_str(), e_seed, &y, &hex));
      Image yw(y);
      Str h(hex);
      check(ms_image_save(yw.get(), e_out.c_str()));
      // Report quality on the saved (8-bit) image.
      Image saved = load(e_out);
      double p = 0;
      check(ms_psnr(saved.get(), x.get(), &p));
      std::printf("payload %s\npsnr %.2f dB\n", h.get(), p);
    } else if (*decode) {
      Image x = load(d_in);
      Key key = make_key(dk);
      char* hex = nullptr;
      check(ms_decode(x.get(), key.get(), dk.bits, &hex));
      Str h(hex);
      std::printf("payload %s\n", h.get());
      if (!d_expect.empty()) {
        double ba = 0;
        check(ms_bit_accuracy(h.get(), d_expect.c_str(), dk.bits, &ba));
        std::printf("ba %.3f\n", ba);
      }
    } else if (*thr) {
      int tau = 0;
      double frac = 0;
      check(ms_threshold(t_bits, t_fpr, &tau, &frac));
      std::printf("%d (%.3f)\n", tau, frac);
    } else if (*attack) {
      if (a_kind == "marksweep" && a_ckpt.empty()) usage("--attack marksweep requires --checkpoint");
      Image x = load(a_in);
      ms_image* y = nullptr;
      double seconds = 0;
      if (a_kind == "marksweep") {
        ms_model* m = nullptr;
        check(ms_model_load(a_ckpt.c_str(), &m));
        Model model(m);
        check(ms_attack_marksweep(x.get(), model.get(), &np, a_sharpen ? 1 : 0, a_seed, &y, &seconds));
      } else {
        const auto t0 = std::chrono::steady_clock::now();
        if (a_kind == "jpeg") check(ms_attack_jpeg(x.get(), a_quality, &y));
        else if (a_kind == "blur") {
          int promoted = 0;
          check(ms_attack_blur(x.get(), a_ksize, &y, &promoted));
          if (promoted) std::printf("note: blur ksize %d promoted to %d\n", a_ksize, a_ksize + 1);
        } else if (a_kind == "noise") check(ms_attack_noise(x.get(), a_mu, a_sigma, a_seed, &y));
        else check(ms_attack_crop(x.get(), a_ratio, &y));
        seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      }
      Image out(y);
      check(ms_image_save(out.get(), a_out.c_str()));
      std::printf("seconds %.3f\n", seconds);
    } else if (*train) {
      char* s = nullptr;
      check(ms_train(c_train.c_str(), threads, &s));
      Str summary(s);
      std::printf("%s\n", summary.get());
    } else if (*eval) {
      char* s = nullptr;
      check(ms_eval(c_eval.c_str(), threads, &s));
      Str summary(s);
      std::printf("%s", summary.get());
    } else if (*dpi) {
      char* s = nullptr;
      check(ms_dpi(c_dpi.c_str(), threads, &s));
      Str result(s);
      std::printf("%s\n", result.get());
      const std::string j = result.get();
      const bool degenerate = j.find("\"degenerate\": true") != std::string::npos;
      const bool ordered = j.find("\"ordering_holds\": true") != std::string::npos;
      const bool fano = j.find("\"fano_consistent\": true") != std::string::npos;
      if (degenerate) std::printf("chain degenerate: equal within noise\n");
      std::printf("DPI ordering: %s\n", ordered ? "PASS" : "FAIL");
      std::printf("Fano consistency: %s\n", fano ? "PASS" : "FAIL");
    } else if (*synth) {
      check(ms_synth_dataset(s_out.c_str(), s_count, s_seed, s_size, s_size));
      std::printf("wrote %d images to %s\n", s_count, s_out.c_str());
    }
  } catch (const Exit& e) {
    return e.code;
  }
  return 0;
}
