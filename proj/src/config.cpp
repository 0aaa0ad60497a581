#include "marksweep/config.hpp"

#include <filesystem>
#include <fstream>

#ifndef MARKSWEEP_VERSION
#define MARKSWEEP_VERSION "0.0.0"
#endif

namespace marksweep {

nlohmann::json to_json(const NoiseParams& p) {
  return {{"mu", p.mu},
          {"sigma", p.sigma},
          {"s", p.s},
          {"core_gain", p.core_gain},
          {"ring_gain", p.ring_gain},
          {"canny_low", p.canny_low},
          {"canny_high", p.canny_high}};
}

NoiseParams noise_params_from_json(const nlohmann::json& j, const std::string& path, const NoiseParams& base) {
  NoiseParams p = base;
  JsonSection s(j, path);
  s.get("mu", p.mu);
  s.get("sigma", p.sigma);
  s.get("s", p.s);
  s.get("core_gain", p.core_gain);
  s.get("ring_gain", p.ring_gain);
  s.get("canny_low", p.canny_low);
  s.get("canny_high", p.canny_high);
  s.finish();
  return p;
}

nlohmann::json to_json(const WatermarkKey& k) {
  return {{"seed", k.seed}, {"alpha", k.alpha}, {"coeffs_per_bit", k.coeffs_per_bit}, {"midband", k.midband}};
}

nlohmann::json to_json(const AttackSpec& a) {
  nlohmann::json j = {{"kind", attack_kind_name(a.kind)}};
  switch (a.kind) {
    case AttackKind::kJpeg: j["quality"] = a.quality; break;
    case AttackKind::kBlur: j["ksize"] = a.ksize; break;
    case AttackKind::kNoise:
      j["mu"] = a.noise_mu;
      j["sigma"] = a.noise_sigma;
      break;
    case AttackKind::kCrop: j["ratio"] = a.crop_ratio; break;
    case AttackKind::kMarkSweep:
      j["checkpoint"] = a.checkpoint;
      j["intensify"] = to_json(a.intensify);
      j["sharpen"] = a.sharpen;
      j["sharpen_amount"] = a.sharpen_amount;
      j["sharpen_radius"] = a.sharpen_radius;
      break;
  }
  return j;
}

AttackSpec attack_spec_from_json(const nlohmann::json& j, const std::string& path, const NoiseParams& base) {
  JsonSection s(j, path);
  std::string kind;
  if (!s.get("kind", kind)) fail(ErrorCode::kConfig, "config key '" + s.qualified("kind") + "' is required");
  AttackSpec a;
  a.kind = attack_kind_from_name(kind);
  switch (a.kind) {
    case AttackKind::kJpeg: s.get("quality", a.quality); break;
    case AttackKind::kBlur: s.get("ksize", a.ksize); break;
    case AttackKind::kNoise:
      s.get("mu", a.noise_mu);
      s.get("sigma", a.noise_sigma);
      break;
    case AttackKind::kCrop: s.get("ratio", a.crop_ratio); break;
    case AttackKind::kMarkSweep: {
      s.get("checkpoint", a.checkpoint);
      nlohmann::json in = s.child("intensify");
      a.intensify = noise_params_from_json(in, s.qualified("intensify"), base);
      s.get("sharpen", a.sharpen);
      s.get("sharpen_amount", a.sharpen_amount);
      s.get("sharpen_radius", a.sharpen_radius);
      break;
    }
  }
  s.finish();
  return a;
}

void RunConfig::propagate() {
  train.seed = seed;
  train.threads = threads;
  train.noise = intensify;
  if (!paths.dataset.empty() && train.dataset_dirs.empty()) train.dataset_dirs = {paths.dataset};
  eval.seed = seed;
  eval.threads = threads;
  dpi.seed = seed;
  dpi.threads = threads;
  for (auto& a : attacks)
    if (a.kind == AttackKind::kMarkSweep && a.checkpoint.empty()) a.checkpoint = paths.checkpoint;
}

void RunConfig::validate() const {
  require(threads >= 1, ErrorCode::kConfig, "threads must be >= 1");
  require(watermark.bits >= Payload::kMinBits, ErrorCode::kConfig, "watermark.bits must be >= 8");
  try {
    watermark.key.validate();
    intensify.validate();
    train.validate();
    for (const auto& a : attacks) a.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, e.what());
  }
  eval.validate();
  dpi.validate();
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json wm = marksweep::to_json(watermark.key);
  wm["bits"] = watermark.bits;
  nlohmann::json tr = train.to_json();
  tr.erase("seed");
  tr.erase("noise");
  nlohmann::json attack_list = nlohmann::json::array();
  for (const auto& a : attacks) attack_list.push_back(marksweep::to_json(a));
  return {{"seed", seed},
          {"threads", threads},
          {"paths", {{"dataset", paths.dataset}, {"checkpoint", paths.checkpoint}, {"output_dir", paths.output_dir}}},
          {"watermark", wm},
          {"intensify", marksweep::to_json(intensify)},
          {"train", tr},
          {"attack", {{"list", attack_list}}},
          {"eval",
           {{"max_images", eval.max_images},
            {"tau_fpr", eval.tau_fpr},
            {"tau_fraction", eval.tau_fraction},
            {"record_timing", eval.record_timing},
            {"quantize", eval.quantize}}},
          {"dpi",
           {{"n_trials", dpi.n_trials},
            {"bootstrap", dpi.bootstrap},
            {"image_size", dpi.image_size},
            {"fano_tolerance", dpi.fano_tolerance},
            {"force_sigma_zero", dpi.force_sigma_zero}}}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  JsonSection root(j, "");
  root.get("seed", c.seed);
  root.get("threads", c.threads);

  nlohmann::json paths = root.child("paths");
  JsonSection p(paths, "paths");
  p.get("dataset", c.paths.dataset);
  p.get("checkpoint", c.paths.checkpoint);
  p.get("output_dir", c.paths.output_dir);
  p.finish();

  nlohmann::json wm = root.child("watermark");
  JsonSection w(wm, "watermark");
  w.get("seed", c.watermark.key.seed);
  w.get("alpha", c.watermark.key.alpha);
  w.get("coeffs_per_bit", c.watermark.key.coeffs_per_bit);
  w.get("midband", c.watermark.key.midband);
  w.get("bits", c.watermark.bits);
  w.finish();

  c.intensify = noise_params_from_json(root.child("intensify"), "intensify");

  nlohmann::json tr = root.child("train");
  if (tr.contains("seed") || tr.contains("noise"))
    fail(ErrorCode::kConfig, "unknown config key 'train." + std::string(tr.contains("seed") ? "seed" : "noise") +
                                 "' (use the top-level seed and intensify sections)");
  c.train = TrainConfig::from_json(tr, "train");

  nlohmann::json at = root.child("attack");
  JsonSection a(at, "attack");
  nlohmann::json list = nlohmann::json::array();
  a.get("list", list);
  a.finish();
  require(list.is_array(), ErrorCode::kConfig, "config key 'attack.list' must be an array");
  for (std::size_t i = 0; i < list.size(); ++i)
    c.attacks.push_back(attack_spec_from_json(list[i], "attack.list[" + std::to_string(i) + "]", c.intensify));

  nlohmann::json ev = root.child("eval");
  JsonSection e(ev, "eval");
  e.get("max_images", c.eval.max_images);
  e.get("tau_fpr", c.eval.tau_fpr);
  e.get("tau_fraction", c.eval.tau_fraction);
  e.get("record_timing", c.eval.record_timing);
  e.get("quantize", c.eval.quantize);
  e.finish();

  nlohmann::json dp = root.child("dpi");
  JsonSection d(dp, "dpi");
  d.get("n_trials", c.dpi.n_trials);
  d.get("bootstrap", c.dpi.bootstrap);
  d.get("image_size", c.dpi.image_size);
  d.get("fano_tolerance", c.dpi.fano_tolerance);
  d.get("force_sigma_zero", c.dpi.force_sigma_zero);
  d.finish();

  root.finish();
  c.propagate();
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kFileNotFound, "config not found: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, "config " + path + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

std::string code_version() { return std::string("marksweep ") + MARKSWEEP_VERSION; }

void write_resolved_config(const RunConfig& cfg, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create output directory " + dir);
  {
    std::ofstream out(std::filesystem::path(dir) / "resolved_config.json", std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot write resolved config into " + dir);
    out << cfg.to_json().dump(2) << '\n';
  }
  std::ofstream v(std::filesystem::path(dir) / "VERSION", std::ios::trunc);
  require(static_cast<bool>(v), ErrorCode::kIo, "cannot write VERSION into " + dir);
  v << code_version() << '\n';
}

}  // namespace marksweep
