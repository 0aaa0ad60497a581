#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "marksweep/attacks.hpp"
#include "marksweep/watermark.hpp"

namespace marksweep {

struct EvalConfig {
  /// Maximum number of images taken (sorted by name); 0 means all.
  int max_images = 0;
  double tau_fpr = 1e-6;
  /// When in (0,1] this fraction replaces the FPR-derived threshold.
  double tau_fraction = -1.0;
  /// false writes seconds = 0 so repeated runs give byte-identical reports.
  bool record_timing = true;
  /// Round x_w and every attacked image to 8 bits, as a PNG round trip would.
  bool quantize = true;
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

struct ReportRow {
  std::string image_id;
  std::string attack;  ///< "none" for the unattacked row
  double ba = 0;
  double psnr_db = 0;  ///< against x_w
  double ssim = 0;     ///< against x_w
  double psnr_clean = 0;
  double ssim_clean = 0;
  double seconds = 0;
  bool below_tau = false;
  std::string error;  ///< empty when the row succeeded
};

struct AttackAggregate {
  std::string attack;
  int rows = 0;
  int errors = 0;
  double mean_ba = 0, std_ba = 0;
  double mean_psnr = 0, std_psnr = 0;
  double mean_ssim = 0, std_ssim = 0;
  double mean_seconds = 0, std_seconds = 0;
  double fraction_below_tau = 0;
};

struct AttackReport {
  DetectionThreshold tau;
  std::vector<std::string> attacks;  ///< labels in column order, "none" first
  std::vector<ReportRow> rows;       ///< sorted by image id, then attack order
  std::vector<AttackAggregate> aggregates;
  std::vector<std::string> notes;
};

/// Means/stds over the successful rows of each attack.
std::vector<AttackAggregate> aggregate_rows(const std::vector<ReportRow>& rows,
                                            const std::vector<std::string>& attacks);

/// Embeds a fresh seeded payload into each image, applies every attack and decodes.
/// Models for marksweep specs are looked up by checkpoint path.
AttackReport evaluate(const std::vector<std::pair<std::string, ImageTensor>>& images, const WatermarkKey& key,
                      int bits, const std::vector<AttackSpec>& attacks,
                      const std::map<std::string, NetParams<float>>& models, const EvalConfig& cfg);

/// Loads the dataset directory and every checkpoint named by the specs, then evaluates.
AttackReport evaluate_directory(const std::string& dataset_dir, const WatermarkKey& key, int bits,
                                const std::vector<AttackSpec>& attacks, const EvalConfig& cfg);

/// Six significant digits, matching the CSV/JSON serialisation.
std::string format_float(double v);

std::string report_csv(const AttackReport& r);
nlohmann::json report_json(const AttackReport& r);
/// Human-readable per-attack summary table.
std::string report_summary(const AttackReport& r);

}  // namespace marksweep
