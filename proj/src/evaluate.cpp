#include "marksweep/evaluate.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "marksweep/checkpoint.hpp"
#include "marksweep/image_io.hpp"
#include "marksweep/metrics.hpp"
#include "marksweep/parallel.hpp"
#include "marksweep/rng.hpp"
#include "marksweep/textures.hpp"

namespace marksweep {

namespace {

double round6(double v) { return std::isfinite(v) ? std::stod(format_float(v)) : v; }

nlohmann::json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return round6(v);
}

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = sd = 0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= v.size();
  for (double x : v) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / v.size());
}

}  // namespace

void EvalConfig::validate() const {
  require(max_images >= 0, ErrorCode::kConfig, "eval.max_images must be >= 0");
  require(tau_fpr > 0 && tau_fpr <= 1, ErrorCode::kConfig, "eval.tau_fpr must lie in (0,1]");
  require(tau_fraction < 0 || (tau_fraction > 0 && tau_fraction <= 1), ErrorCode::kConfig,
          "eval.tau_fraction must lie in (0,1] (or be negative to derive it from tau_fpr)");
  require(threads >= 1, ErrorCode::kConfig, "threads must be >= 1");
}

std::string format_float(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<AttackAggregate> aggregate_rows(const std::vector<ReportRow>& rows,
                                            const std::vector<std::string>& attacks) {
  std::vector<AttackAggregate> out;
  for (const auto& a : attacks) {
    AttackAggregate g;
    g.attack = a;
    std::vector<double> ba, ps, ss, sec;
    int below = 0;
    for (const auto& r : rows) {
      if (r.attack != a) continue;
      ++g.rows;
      if (!r.error.empty()) {
        ++g.errors;
        continue;
      }
      ba.push_back(r.ba);
      ps.push_back(r.psnr_db);
      ss.push_back(r.ssim);
      sec.push_back(r.seconds);
      below += r.below_tau;
    }
    mean_std(ba, g.mean_ba, g.std_ba);
    mean_std(ps, g.mean_psnr, g.std_psnr);
    mean_std(ss, g.mean_ssim, g.std_ssim);
    mean_std(sec, g.mean_seconds, g.std_seconds);
    g.fraction_below_tau = ba.empty() ? 0.0 : static_cast<double>(below) / ba.size();
    out.push_back(g);
  }
  return out;
}

AttackReport evaluate(const std::vector<std::pair<std::string, ImageTensor>>& images, const WatermarkKey& key,
                      int bits, const std::vector<AttackSpec>& attacks,
                      const std::map<std::string, NetParams<float>>& models, const EvalConfig& cfg) {
  cfg.validate();
  key.validate();
  require(!images.empty(), ErrorCode::kInvalidArgument, "evaluation needs at least one image");
  for (const auto& a : attacks) {
    a.validate();
    if (a.kind == AttackKind::kMarkSweep)
      require(models.count(a.checkpoint) == 1, ErrorCode::kCheckpoint, "no model loaded for " + a.checkpoint);
  }
  AttackReport rep;
  rep.tau = cfg.tau_fraction > 0 ? threshold_from_fraction(bits, cfg.tau_fraction) : detection_threshold(bits, cfg.tau_fpr);
  rep.attacks.push_back("none");
  for (const auto& a : attacks) {
    rep.attacks.push_back(a.label());
    if (a.kind == AttackKind::kBlur && a.ksize % 2 == 0)
      rep.notes.push_back("blur ksize " + std::to_string(a.ksize) + " promoted to " + std::to_string(a.ksize + 1));
  }

  const std::size_t per_image = attacks.size() + 1;
  std::vector<ReportRow> rows(images.size() * per_image);
  parallel_for(static_cast<int>(images.size()), cfg.threads, [&](int i) {
    const auto& [id, x] = images[i];
    ReportRow* out = &rows[static_cast<std::size_t>(i) * per_image];
    for (std::size_t k = 0; k < per_image; ++k) {
      out[k].image_id = id;
      out[k].attack = rep.attacks[k];
    }
    ImageTensor x_w;
    Payload w = Payload::zeros(bits);
    try {
      w = Payload::random(bits, derive_seed(cfg.seed, {0x7061796c, static_cast<std::uint64_t>(i)}));
      x_w = embed(x, w, key);
      if (cfg.quantize) x_w = quantize8(x_w);
    } catch (const std::exception& e) {
      for (std::size_t k = 0; k < per_image; ++k) out[k].error = e.what();
      return;
    }
    for (std::size_t k = 0; k < per_image; ++k) {
      ReportRow& row = out[k];
      try {
        const auto t0 = std::chrono::steady_clock::now();
        ImageTensor y = x_w;
        if (k > 0) {
          const AttackSpec& spec = attacks[k - 1];
          const NetParams<float>* model = spec.kind == AttackKind::kMarkSweep ? &models.at(spec.checkpoint) : nullptr;
          y = apply_attack(x_w, spec, derive_seed(cfg.seed, {0x61747463, static_cast<std::uint64_t>(i), k}), model);
          if (cfg.quantize) y = quantize8(y);
        }
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        row.seconds = cfg.record_timing ? sec : 0.0;
        row.ba = bit_accuracy(w, decode(y, key, bits));
        row.psnr_db = psnr(y, x_w);
        row.ssim = ssim(y, x_w);
        row.psnr_clean = psnr(y, x);
        row.ssim_clean = ssim(y, x);
        row.below_tau = row.ba < rep.tau.tau_fraction;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
    }
  });
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ReportRow& a, const ReportRow& b) { return a.image_id < b.image_id; });
  rep.rows = std::move(rows);
  rep.aggregates = aggregate_rows(rep.rows, rep.attacks);
  return rep;
}

AttackReport evaluate_directory(const std::string& dataset_dir, const WatermarkKey& key, int bits,
                                const std::vector<AttackSpec>& attacks, const EvalConfig& cfg) {
  cfg.validate();
  auto paths = list_pngs(dataset_dir);
  require(!paths.empty(), ErrorCode::kInvalidArgument, "no PNG images in " + dataset_dir);
  if (cfg.max_images > 0 && static_cast<int>(paths.size()) > cfg.max_images) paths.resize(cfg.max_images);
  std::vector<std::pair<std::string, ImageTensor>> images;
  for (const auto& p : paths) images.emplace_back(p.stem().string(), load_image(p.string()));
  std::map<std::string, NetParams<float>> models;
  for (const auto& a : attacks)
    if (a.kind == AttackKind::kMarkSweep && !models.count(a.checkpoint))
      models.emplace(a.checkpoint, load_checkpoint(a.checkpoint).params);
  return evaluate(images, key, bits, attacks, models, cfg);
}

std::string report_csv(const AttackReport& r) {
  std::ostringstream os;
  os << "image_id,attack,ba,psnr_db,ssim,seconds,below_tau\n";
  for (const auto& row : r.rows) {
    const bool ok = row.error.empty();
    const double nan = std::nan("");
    os << row.image_id << ',' << row.attack << ',' << format_float(ok ? row.ba : nan) << ','
       << format_float(ok ? row.psnr_db : nan) << ',' << format_float(ok ? row.ssim : nan) << ','
       << format_float(ok ? row.seconds : nan) << ',' << (ok ? (row.below_tau ? "1" : "0") : "") << '\n';
  }
  return os.str();
}

nlohmann::json report_json(const AttackReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j = {{"image_id", row.image_id}, {"attack", row.attack}};
    if (row.error.empty()) {
      j["ba"] = num(row.ba);
      j["psnr_db"] = num(row.psnr_db);
      j["ssim"] = num(row.ssim);
      j["psnr_db_vs_clean"] = num(row.psnr_clean);
      j["ssim_vs_clean"] = num(row.ssim_clean);
      j["seconds"] = num(row.seconds);
      j["below_tau"] = row.below_tau;
    } else {
      j["error"] = row.error;
    }
    rows.push_back(j);
  }
  nlohmann::json aggs = nlohmann::json::array();
  for (const auto& a : r.aggregates)
    aggs.push_back({{"attack", a.attack},
                    {"rows", a.rows},
                    {"errors", a.errors},
                    {"mean_ba", num(a.mean_ba)},
                    {"std_ba", num(a.std_ba)},
                    {"mean_psnr_db", num(a.mean_psnr)},
                    {"std_psnr_db", num(a.std_psnr)},
                    {"mean_ssim", num(a.mean_ssim)},
                    {"std_ssim", num(a.std_ssim)},
                    {"mean_seconds", num(a.mean_seconds)},
                    {"std_seconds", num(a.std_seconds)},
                    {"fraction_below_tau", num(a.fraction_below_tau)}});
  return {{"tau",
           {{"bits", r.tau.m},
            {"tau_bits", r.tau.tau_bits},
            {"tau_fraction", num(r.tau.tau_fraction)},
            {"fpr_target", num(r.tau.fpr_target)},
            {"achieved_fpr", num(r.tau.achieved_fpr)}}},
          {"attacks", r.attacks},
          {"notes", r.notes},
          {"rows", rows},
          {"aggregates", aggs}};
}

std::string report_summary(const AttackReport& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-20s %6s %8s %9s %8s %9s %7s\n", "attack", "rows", "mean_ba", "psnr_db", "ssim",
                "seconds", "<tau");
  os << line;
  for (const auto& a : r.aggregates) {
    std::snprintf(line, sizeof line, "%-20s %6d %8.4f %9.2f %8.4f %9.3f %7.2f\n", a.attack.c_str(), a.rows,
                  a.mean_ba, a.mean_psnr, a.mean_ssim, a.mean_seconds, a.fraction_below_tau);
    os << line;
  }
  std::snprintf(line, sizeof line, "tau = %d/%d bits (%.3f)\n", r.tau.tau_bits, r.tau.m, r.tau.tau_fraction);
  os << line;
  for (const auto& n : r.notes) os << "note: " << n << '\n';
  return os.str();
}

}  // namespace marksweep
