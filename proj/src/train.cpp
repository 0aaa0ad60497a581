#include "marksweep/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "marksweep/image_io.hpp"
#include "marksweep/json_section.hpp"
#include "marksweep/metrics.hpp"
#include "marksweep/parallel.hpp"
#include "marksweep/rng.hpp"
#include "marksweep/textures.hpp"

namespace marksweep {

namespace {

constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kValStream = 3;

ImageTensor as_rgb(const ImageTensor& img) {
  if (img.channels() == 3) return img;
  ImageTensor out(img.height(), img.width(), 3);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) out(y, x, c) = img(y, x, 0);
  return out;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  require(schedule.base_lr > 0 && std::isfinite(schedule.base_lr), ErrorCode::kConfig, "train.base_lr must be > 0");
  require(schedule.total_steps >= 1, ErrorCode::kConfig, "train.total_steps must be >= 1");
  require(schedule.warmup_steps >= 0 && schedule.warmup_steps < schedule.total_steps, ErrorCode::kConfig,
          "train.warmup_steps must be < train.total_steps");
  require(batch_size >= 1, ErrorCode::kConfig, "train.batch_size must be >= 1");
  require(patch_size >= 16 && patch_size % arch.multiple() == 0, ErrorCode::kConfig,
          "train.patch_size must be a multiple of 16 and >= 16");
  require(val_fraction >= 0 && val_fraction < 1, ErrorCode::kConfig, "train.val_fraction must lie in [0,1)");
  require(val_every >= 1 && val_patches >= 1, ErrorCode::kConfig, "train.val_every and val_patches must be >= 1");
  require(checkpoint_every >= 0, ErrorCode::kConfig, "train.checkpoint_every must be >= 0");
  require(synthetic_images >= 0, ErrorCode::kConfig, "train.synthetic_images must be >= 0");
  require(synthetic_images == 0 || synthetic_size >= patch_size, ErrorCode::kConfig,
          "train.synthetic_size must be >= patch_size");
  require(threads >= 1, ErrorCode::kConfig, "threads must be >= 1");
  require(synthetic_images > 0 || !dataset_dirs.empty(), ErrorCode::kConfig,
          "training needs dataset directories or synthetic images");
  noise.validate();
  weights.validate();
  arch.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"base_lr", schedule.base_lr},
          {"warmup_steps", schedule.warmup_steps},
          {"total_steps", schedule.total_steps},
          {"batch_size", batch_size},
          {"patch_size", patch_size},
          {"seed", seed},
          {"loss_weights",
           {{"perceptual", weights.perceptual}, {"mse", weights.mse}, {"fft", weights.fft}, {"noise", weights.noise}}},
          {"arch", arch.to_json()},
          {"noise",
           {{"mu", noise.mu},
            {"sigma", noise.sigma},
            {"s", noise.s},
            {"core_gain", noise.core_gain},
            {"ring_gain", noise.ring_gain},
            {"canny_low", noise.canny_low},
            {"canny_high", noise.canny_high}}},
          {"dataset_dirs", dataset_dirs},
          {"synthetic_images", synthetic_images},
          {"synthetic_size", synthetic_size},
          {"val_fraction", val_fraction},
          {"val_every", val_every},
          {"val_patches", val_patches},
          {"checkpoint_every", checkpoint_every},
          {"hflip", hflip}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const std::string& path) {
  TrainConfig c;
  JsonSection s(j, path);
  s.get("base_lr", c.schedule.base_lr);
  s.get("warmup_steps", c.schedule.warmup_steps);
  s.get("total_steps", c.schedule.total_steps);
  s.get("batch_size", c.batch_size);
  s.get("patch_size", c.patch_size);
  s.get("seed", c.seed);
  s.get("dataset_dirs", c.dataset_dirs);
  s.get("synthetic_images", c.synthetic_images);
  s.get("synthetic_size", c.synthetic_size);
  s.get("val_fraction", c.val_fraction);
  s.get("val_every", c.val_every);
  s.get("val_patches", c.val_patches);
  s.get("checkpoint_every", c.checkpoint_every);
  s.get("hflip", c.hflip);
  nlohmann::json lw = s.child("loss_weights");
  JsonSection w(lw, s.qualified("loss_weights"));
  w.get("perceptual", c.weights.perceptual);
  w.get("mse", c.weights.mse);
  w.get("fft", c.weights.fft);
  w.get("noise", c.weights.noise);
  w.finish();
  nlohmann::json arch = s.child("arch");
  if (!arch.empty()) {
    try {
      c.arch = Architecture::from_json(arch);
    } catch (const Error& e) {
      fail(ErrorCode::kConfig, s.qualified("arch") + ": " + e.what());
    }
  }
  nlohmann::json noise = s.child("noise");
  JsonSection n(noise, s.qualified("noise"));
  n.get("mu", c.noise.mu);
  n.get("sigma", c.noise.sigma);
  n.get("s", c.noise.s);
  n.get("core_gain", c.noise.core_gain);
  n.get("ring_gain", c.noise.ring_gain);
  n.get("canny_low", c.noise.canny_low);
  n.get("canny_high", c.noise.canny_high);
  n.finish();
  s.finish();
  return c;
}

TrainData load_train_data(const TrainConfig& cfg) {
  std::vector<ImageTensor> all;
  for (const auto& dir : cfg.dataset_dirs)
    for (const auto& p : list_pngs(dir)) {
      ImageTensor img = as_rgb(load_image(p.string()));
      require(img.height() >= cfg.patch_size && img.width() >= cfg.patch_size, ErrorCode::kGeometry,
              p.string() + " is smaller than the " + std::to_string(cfg.patch_size) + "px training patch");
      all.push_back(std::move(img));
    }
  for (int i = 0; i < cfg.synthetic_images; ++i)
    all.push_back(synth_texture(derive_seed(cfg.seed, {0x73796e74, static_cast<std::uint64_t>(i)}),
                                cfg.synthetic_size, cfg.synthetic_size));
  require(!all.empty(), ErrorCode::kInvalidArgument, "training dataset is empty");

  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg.seed, {0x73706c74}));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  std::size_t n_val = 0;
  if (all.size() >= 2 && cfg.val_fraction > 0)
    n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(cfg.val_fraction * all.size())), 1,
                                    all.size() - 1);
  TrainData d;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_val ? d.val : d.train).push_back(std::move(all[order[i]]));
  return d;
}

Sample make_sample(const std::vector<ImageTensor>& pool, const TrainConfig& cfg, std::uint64_t stream,
                   std::uint64_t index) {
  require(!pool.empty(), ErrorCode::kInvalidArgument, "empty image pool");
  Rng rng(derive_seed(cfg.seed, {stream, index}));
  const ImageTensor& img = pool[uniform_index(rng, pool.size())];
  const int p = cfg.patch_size;
  const int y0 = static_cast<int>(uniform_index(rng, img.height() - p + 1));
  const int x0 = static_cast<int>(uniform_index(rng, img.width() - p + 1));
  const bool flip = cfg.hflip && (rng() >> 63);
  ImageTensor x = crop(img, y0, x0, p, p);
  if (flip)
    for (int y = 0; y < p; ++y)
      for (int xx = 0; xx < p / 2; ++xx)
        for (int c = 0; c < x.channels(); ++c) std::swap(x(y, xx, c), x(y, p - 1 - xx, c));
  Intensified in = intensify(x, cfg.noise, derive_seed(cfg.seed, {stream, index, 0x6e6f6973}));
  return Sample{std::move(x), std::move(in.x_n), std::move(in.noise)};
}

LossTerms sample_gradient(const NetParams<float>& params, const Sample& s, const LossWeights& w,
                          std::vector<float>& grads) {
  ForwardResult<float> fwd = net_forward(s.x_n, params, true);
  TotalLoss loss = total_loss(fwd.x_hat, s.x, s.x_n, s.noise, w, true);
  std::vector<float> g = net_backward(fwd, loss.grad);
  if (grads.empty()) grads.assign(g.size(), 0.0f);
  for (std::size_t i = 0; i < g.size(); ++i) grads[i] += g[i];
  return loss.terms;
}

ValidationResult validate_model(const NetParams<float>& params, const TrainData& data, const TrainConfig& cfg) {
  const std::vector<ImageTensor>& pool = data.val.empty() ? data.train : data.val;
  std::vector<ValidationResult> rows(cfg.val_patches);
  parallel_for(cfg.val_patches, cfg.threads, [&](int i) {
    Sample s = make_sample(pool, cfg, kValStream, static_cast<std::uint64_t>(i));
    ForwardResult<float> fwd = net_forward(s.x_n, params, false);
    rows[i].total = total_loss(fwd.x_hat, s.x, s.x_n, s.noise, cfg.weights, false).terms.total;
    rows[i].psnr = psnr(fwd.x_hat, s.x);
  });
  ValidationResult r;
  for (const auto& v : rows) {
    r.total += v.total;
    r.psnr += v.psnr;
  }
  r.total /= rows.size();
  r.psnr /= rows.size();
  return r;
}

TrainResult train(const TrainConfig& cfg, const TrainOutputs& out) {
  cfg.validate();
  require(!out.checkpoint_path.empty(), ErrorCode::kInvalidArgument, "train needs a checkpoint path");
  TrainData data = load_train_data(cfg);
  require(!data.train.empty(), ErrorCode::kInvalidArgument, "training split is empty");

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  ck.params = init_params<float>(cfg.seed, cfg.arch);
  ck.optim = OptimState(ck.params.values.size());
  ck.config = cfg.to_json();

  std::ofstream log;
  if (!out.log_csv_path.empty()) {
    log.open(out.log_csv_path, std::ios::trunc);
    require(static_cast<bool>(log), ErrorCode::kIo, "cannot write training log " + out.log_csv_path);
    log << "step,lr,perceptual,mse,fft,noise,total,val_psnr,val_total\n";
  }

  auto save = [&](std::int64_t step, const ValidationResult* val) {
    ck.step = step;
    ck.metrics = {{"initial_val_total", result.initial.total}, {"initial_val_psnr", result.initial.psnr}};
    if (val) {
      ck.metrics["val_total"] = val->total;
      ck.metrics["val_psnr"] = val->psnr;
    }
    save_checkpoint(ck, out.checkpoint_path);
  };

  result.initial = validate_model(ck.params, data, cfg);
  ValidationResult last_val = result.initial;
  const int B = cfg.batch_size;
  std::vector<std::vector<float>> per_sample(B);
  std::vector<LossTerms> terms(B);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (int step = 1; step <= cfg.schedule.total_steps; ++step) {
    parallel_for(B, cfg.threads, [&](int b) {
      const std::uint64_t index = static_cast<std::uint64_t>(step - 1) * B + b;
      Sample s = make_sample(data.train, cfg, kTrainStream, index);
      per_sample[b].assign(ck.params.values.size(), 0.0f);
      terms[b] = sample_gradient(ck.params, s, cfg.weights, per_sample[b]);
    });
    std::vector<float> grads(ck.params.values.size(), 0.0f);
    TrainLogRow row;
    row.step = step;
    for (int b = 0; b < B; ++b) {
      for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += per_sample[b][i];
      row.terms.perceptual += terms[b].perceptual / B;
      row.terms.mse += terms[b].mse / B;
      row.terms.fft += terms[b].fft / B;
      row.terms.noise += terms[b].noise / B;
      row.terms.total += terms[b].total / B;
    }
    const float inv = 1.0f / static_cast<float>(B);
    for (float& g : grads) g *= inv;
    row.lr = lr_at(step, cfg.schedule);
    if (!std::isfinite(row.terms.total) || !adam_step(ck.params.values, grads, ck.optim, row.lr)) {
      save(step - 1, &last_val);
      fail(ErrorCode::kNumeric, "non-finite loss or gradient at step " + std::to_string(step) +
                                    "; last good state saved to " + out.checkpoint_path);
    }
    row.val_psnr = row.val_total = nan;
    if (step % cfg.val_every == 0 || step == cfg.schedule.total_steps) {
      last_val = validate_model(ck.params, data, cfg);
      row.val_psnr = last_val.psnr;
      row.val_total = last_val.total;
    }
    if (log) {
      log << step << ',' << fmt(row.lr) << ',' << fmt(row.terms.perceptual) << ',' << fmt(row.terms.mse) << ','
          << fmt(row.terms.fft) << ',' << fmt(row.terms.noise) << ',' << fmt(row.terms.total) << ','
          << fmt(row.val_psnr) << ',' << fmt(row.val_total) << '\n';
      log.flush();
    }
    result.log.push_back(row);
    if (out.on_step) out.on_step(row);
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.schedule.total_steps)
      save(step, &last_val);
  }
  result.final = last_val;
  save(cfg.schedule.total_steps, &last_val);
  return result;
}

}  // namespace marksweep
