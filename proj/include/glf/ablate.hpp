#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "glf/manifest.hpp"
#include "glf/trainer.hpp"

namespace glf {

/// Per-entry PSNR of the reconstruction and of the filtered output against
/// the original, plus the mean gain.
struct EvalSummary {
  struct Entry {
    std::string name;
    double psnr_before = 0.0;
    double psnr_after = 0.0;
  };
  std::vector<Entry> entries;
  double mean_before = 0.0;
  double mean_after = 0.0;
  double mean_gain = 0.0;
};

EvalSummary evaluate_filter(Network<float>& net, const PairSet& pairs);

struct AblationRow {
  std::string label;
  double final_loss = 0.0;
  double psnr_before = 0.0;
  double psnr_after = 0.0;
  double gain_db = 0.0;
  std::int64_t parameter_count = 0;
};

struct AblationTable {
  std::string axis;
  std::vector<AblationRow> rows;
};

/// Trains one configuration per value of each requested axis (identical
/// seed and budget), evaluating each on the held-out split of `manifest`
/// (every 5th entry). Axes: variant, fusion_mode, attention_activation,
/// mixed_scale, patch_size. A training abort is rethrown with the row
/// identified. Checkpoints/loss logs land in `out_dir` when non-empty.
std::vector<AblationTable> run_ablation(const Manifest& manifest,
                                        const TrainConfig& budget,
                                        const std::vector<std::string>& axes,
                                        const std::string& out_dir,
                                        std::ostream* log = nullptr);

std::string format_table(const AblationTable& table);

}  // namespace glf
