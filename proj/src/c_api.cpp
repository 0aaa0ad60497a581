#include "marksweep/marksweep.h"

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "marksweep/attacks.hpp"
#include "marksweep/checkpoint.hpp"
#include "marksweep/config.hpp"
#include "marksweep/evaluate.hpp"
#include "marksweep/image_io.hpp"
#include "marksweep/info.hpp"
#include "marksweep/metrics.hpp"
#include "marksweep/textures.hpp"
#include "marksweep/train.hpp"
#include "marksweep/watermark.hpp"

struct ms_image {
  marksweep::ImageTensor img;
};
struct ms_model {
  marksweep::NetParams<float> params;
};
struct ms_key {
  marksweep::WatermarkKey key;
};

namespace {

using namespace marksweep;
namespace fs = std::filesystem;

thread_local std::string g_last_error;

ms_status status_of(ErrorCode c) {
  switch (c) {
    case ErrorCode::kFileNotFound:
    case ErrorCode::kUnsupportedFormat:
    case ErrorCode::kIo: return MS_ERR_IO;
    case ErrorCode::kGeometry: return MS_ERR_GEOMETRY;
    case ErrorCode::kCheckpoint: return MS_ERR_CHECKPOINT;
    case ErrorCode::kNumeric: return MS_ERR_NUMERIC;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kConfig: return MS_ERR_USAGE;
  }
  return MS_ERR_USAGE;
}

template <class F>
ms_status guard(F&& f) {
  g_last_error.clear();
  try {
    f();
    return MS_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MS_ERR_NUMERIC;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MS_ERR_USAGE;
  }
}

void need(const void* p, const char* what) {
  require(p != nullptr, ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

ms_image* wrap(ImageTensor img) { return new ms_image{std::move(img)}; }

NoiseParams to_noise(const ms_noise_params* p) {
  NoiseParams n;
  if (!p) return n;
  n.mu = p->mu;
  n.sigma = p->sigma;
  n.s = p->s;
  n.core_gain = p->core_gain;
  n.ring_gain = p->ring_gain;
  n.canny_low = p->canny_low;
  n.canny_high = p->canny_high;
  return n;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc | std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + p.string());
  out << text;
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed for " + p.string());
}

RunConfig load_run(const char* path, int threads) {
  need(path, "config path");
  RunConfig cfg = RunConfig::load(path);
  if (threads > 0) {
    cfg.threads = threads;
    cfg.propagate();
  }
  require(!cfg.paths.output_dir.empty(), ErrorCode::kConfig, "config key 'paths.output_dir' is required");
  write_resolved_config(cfg, cfg.paths.output_dir);
  return cfg;
}

}  // namespace

extern "C" {

const char* ms_last_error(void) { return g_last_error.c_str(); }
const char* ms_version(void) {
  static const std::string v = code_version();
  return v.c_str();
}
void ms_string_free(char* s) { std::free(s); }

ms_status ms_image_load(const char* path, ms_image** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = wrap(load_image(path));
  });
}

ms_status ms_image_save(const ms_image* img, const char* path) {
  return guard([&] {
    need(img, "image");
    need(path, "path");
    save_image(img->img, path);
  });
}

ms_status ms_image_create(int height, int width, int channels, const double* data, ms_image** out) {
  return guard([&] {
    need(data, "data");
    need(out, "out");
    require(height > 0 && width > 0 && (channels == 1 || channels == 3), ErrorCode::kInvalidArgument,
            "image needs positive dims and 1 or 3 channels");
    const std::size_t n = static_cast<std::size_t>(height) * width * channels;
    *out = wrap(ImageTensor(height, width, channels, std::vector<double>(data, data + n)));
  });
}

int ms_image_height(const ms_image* img) { return img ? img->img.height() : 0; }
int ms_image_width(const ms_image* img) { return img ? img->img.width() : 0; }
int ms_image_channels(const ms_image* img) { return img ? img->img.channels() : 0; }

ms_status ms_image_copy_data(const ms_image* img, double* out, size_t count) {
  return guard([&] {
    need(img, "image");
    need(out, "out");
    require(count >= img->img.size(), ErrorCode::kInvalidArgument, "output buffer too small");
    std::copy(img->img.values().begin(), img->img.values().end(), out);
  });
}

void ms_image_free(ms_image* img) { delete img; }

ms_status ms_key_create(uint64_t seed, double alpha, int coeffs_per_bit, ms_key** out) {
  return guard([&] {
    need(out, "out");
    WatermarkKey k;
    k.seed = seed;
    k.alpha = alpha;
    k.coeffs_per_bit = coeffs_per_bit;
    k.validate();
    *out = new ms_key{k};
  });
}

ms_status ms_key_default(ms_key** out) {
  return guard([&] {
    need(out, "out");
    *out = new ms_key{WatermarkKey{}};
  });
}

ms_status ms_key_set_midband(ms_key* key, const int* zigzag, size_t count) {
  return guard([&] {
    need(key, "key");
    need(zigzag, "zigzag");
    WatermarkKey k = key->key;
    k.midband.assign(zigzag, zigzag + count);
    k.validate();
    key->key = k;
  });
}

void ms_key_free(ms_key* key) { delete key; }

ms_status ms_embed(const ms_image* x, const ms_key* key, int bits, const char* payload_hex, uint64_t seed,
                   ms_image** out, char** payload_out) {
  return guard([&] {
    need(x, "image");
    need(key, "key");
    need(out, "out");
    Payload w = payload_hex ? Payload::from_hex(payload_hex, bits) : Payload::random(bits, seed);
    ImageTensor y = embed(x->img, w, key->key);
    char* hex = payload_out ? dup(w.to_hex()) : nullptr;
    *out = wrap(std::move(y));
    if (payload_out) *payload_out = hex;
  });
}

ms_status ms_decode(const ms_image* img, const ms_key* key, int bits, char** payload_out) {
  return guard([&] {
    need(img, "image");
    need(key, "key");
    need(payload_out, "payload_out");
    *payload_out = dup(decode(img->img, key->key, bits).to_hex());
  });
}

ms_status ms_bit_accuracy(const char* hex_a, const char* hex_b, int bits, double* out) {
  return guard([&] {
    need(hex_a, "hex_a");
    need(hex_b, "hex_b");
    need(out, "out");
    *out = bit_accuracy(Payload::from_hex(hex_a, bits), Payload::from_hex(hex_b, bits));
  });
}

ms_status ms_psnr(const ms_image* a, const ms_image* b, double* out) {
  return guard([&] {
    need(a, "a");
    need(b, "b");
    need(out, "out");
    *out = psnr(a->img, b->img);
  });
}

ms_status ms_ssim(const ms_image* a, const ms_image* b, double* out) {
  return guard([&] {
    need(a, "a");
    need(b, "b");
    need(out, "out");
    *out = ssim(a->img, b->img);
  });
}

ms_status ms_threshold(int bits, double fpr, int* tau_bits, double* tau_fraction) {
  return guard([&] {
    DetectionThreshold t = detection_threshold(bits, fpr);
    if (tau_bits) *tau_bits = t.tau_bits;
    if (tau_fraction) *tau_fraction = t.tau_fraction;
  });
}

ms_status ms_model_load(const char* checkpoint_path, ms_model** out) {
  return guard([&] {
    need(checkpoint_path, "checkpoint path");
    need(out, "out");
    Checkpoint ck = load_checkpoint(checkpoint_path);
    *out = new ms_model{std::move(ck.params)};
  });
}

ms_status ms_model_init(uint64_t seed, ms_model** out) {
  return guard([&] {
    need(out, "out");
    *out = new ms_model{init_params<float>(seed)};
  });
}

void ms_model_free(ms_model* model) { delete model; }

void ms_noise_params_default(ms_noise_params* p) {
  if (!p) return;
  NoiseParams n;
  *p = ms_noise_params{n.mu, n.sigma, n.s, n.core_gain, n.ring_gain, n.canny_low, n.canny_high};
}

ms_status ms_attack_marksweep(const ms_image* x_w, const ms_model* model, const ms_noise_params* p, int sharpen,
                              uint64_t seed, ms_image** out, double* seconds) {
  return guard([&] {
    need(x_w, "image");
    need(model, "model");
    need(out, "out");
    NoiseParams n = to_noise(p);
    n.validate();
    MarkSweepResult r = attack_marksweep(x_w->img, model->params, n, sharpen != 0, seed);
    if (seconds) *seconds = r.seconds;
    *out = wrap(std::move(r.image));
  });
}

ms_status ms_attack_jpeg(const ms_image* img, int quality, ms_image** out) {
  return guard([&] {
    need(img, "image");
    need(out, "out");
    *out = wrap(attack_jpeg(img->img, quality));
  });
}

ms_status ms_attack_blur(const ms_image* img, int ksize, ms_image** out, int* promoted) {
  return guard([&] {
    need(img, "image");
    need(out, "out");
    bool pr = false;
    *out = wrap(attack_blur(img->img, ksize, &pr));
    if (promoted) *promoted = pr ? 1 : 0;
  });
}

ms_status ms_attack_noise(const ms_image* img, double mu, double sigma, uint64_t seed, ms_image** out) {
  return guard([&] {
    need(img, "image");
    need(out, "out");
    *out = wrap(attack_noise(img->img, mu, sigma, seed));
  });
}

ms_status ms_attack_crop(const ms_image* img, double ratio, ms_image** out) {
  return guard([&] {
    need(img, "image");
    need(out, "out");
    *out = wrap(attack_crop(img->img, ratio));
  });
}

ms_status ms_unsharp(const ms_image* img, double amount, double radius, ms_image** out) {
  return guard([&] {
    need(img, "image");
    need(out, "out");
    *out = wrap(unsharp_mask(img->img, amount, radius));
  });
}

ms_status ms_config_resolve(const char* config_path, char** resolved_json) {
  return guard([&] {
    need(config_path, "config path");
    need(resolved_json, "resolved_json");
    *resolved_json = dup(RunConfig::load(config_path).to_json().dump(2));
  });
}

ms_status ms_train(const char* config_path, int threads, char** summary_json) {
  return guard([&] {
    RunConfig cfg = load_run(config_path, threads);
    // Without an explicit destination the checkpoint lands next to the log.
    if (cfg.paths.checkpoint.empty()) cfg.paths.checkpoint = (fs::path(cfg.paths.output_dir) / "model.ckpt").string();
    TrainOutputs out;
    out.checkpoint_path = cfg.paths.checkpoint;
    out.log_csv_path = (fs::path(cfg.paths.output_dir) / "train_log.csv").string();
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult r = train(cfg.train, out);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    nlohmann::json s = {{"checkpoint", cfg.paths.checkpoint},
                        {"seconds", seconds},
                        {"sha256", file_sha256(cfg.paths.checkpoint)},
                        {"steps", r.checkpoint.step},
                        {"initial_val_total", r.initial.total},
                        {"initial_val_psnr", r.initial.psnr},
                        {"final_val_total", r.final.total},
                        {"final_val_psnr", r.final.psnr}};
    write_text(fs::path(cfg.paths.output_dir) / "train_summary.json", s.dump(2) + "\n");
    if (summary_json) *summary_json = dup(s.dump(2));
  });
}

ms_status ms_eval(const char* config_path, int threads, char** summary_text) {
  return guard([&] {
    RunConfig cfg = load_run(config_path, threads);
    require(!cfg.paths.dataset.empty(), ErrorCode::kConfig, "config key 'paths.dataset' is required");
    AttackReport rep = evaluate_directory(cfg.paths.dataset, cfg.watermark.key, cfg.watermark.bits, cfg.attacks, cfg.eval);
    const fs::path dir(cfg.paths.output_dir);
    write_text(dir / "report.csv", report_csv(rep));
    nlohmann::json j = report_json(rep);
    j["config"] = cfg.to_json();
    j["code_version"] = code_version();
    write_text(dir / "report.json", j.dump(2) + "\n");
    bool any_ok = false;
    for (const auto& row : rep.rows) any_ok |= row.error.empty();
    require(any_ok, ErrorCode::kNumeric, "every evaluation row failed; first error: " + rep.rows.front().error);
    if (summary_text) *summary_text = dup(report_summary(rep));
  });
}

ms_status ms_dpi(const char* config_path, int threads, char** result_json) {
  return guard([&] {
    RunConfig cfg = load_run(config_path, threads);
    NetParams<float> model = cfg.paths.checkpoint.empty() ? init_params<float>(cfg.seed)
                                                         : load_checkpoint(cfg.paths.checkpoint).params;
    DpiResult r = dpi_experiment(model, cfg.watermark.key, cfg.watermark.bits, cfg.intensify, cfg.dpi);
    nlohmann::json j = r.to_json();
    j["code_version"] = code_version();
    write_text(fs::path(cfg.paths.output_dir) / "dpi.json", j.dump(2) + "\n");
    if (result_json) *result_json = dup(j.dump(2));
  });
}

ms_status ms_synth_dataset(const char* dir, int count, uint64_t seed, int height, int width) {
  return guard([&] {
    need(dir, "dir");
    write_texture_dataset(dir, count, seed, height, width);
  });
}

ms_status ms_file_sha256(const char* path, char** hex) {
  return guard([&] {
    need(path, "path");
    need(hex, "hex");
    *hex = dup(file_sha256(path));
  });
}

}  // extern "C"
