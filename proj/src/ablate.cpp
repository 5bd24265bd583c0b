#include "glf/ablate.hpp"

#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "glf/metrics.hpp"

namespace glf {

EvalSummary evaluate_filter(Network<float>& net, const PairSet& pairs) {
  EvalSummary summary;
  if (pairs.items.empty()) throw ConfigError("evaluate_filter: empty pair set");
  double sum_before = 0.0, sum_after = 0.0;
  for (const auto& item : pairs.items) {
    EvalSummary::Entry e;
    e.name = item.name;
    e.psnr_before = psnr(item.original, item.recon);
    const Frame filtered = filter_frame(net, item.recon);
    e.psnr_after = psnr(item.original, filtered);
    sum_before += e.psnr_before;
    sum_after += e.psnr_after;
    summary.entries.push_back(std::move(e));
  }
  const double n = double(summary.entries.size());
  summary.mean_before = sum_before / n;
  summary.mean_after = sum_after / n;
  summary.mean_gain = summary.mean_after - summary.mean_before;
  return summary;
}

namespace {

struct RowSpec {
  std::string label;
  TrainConfig config;
};

std::vector<RowSpec> rows_for_axis(const std::string& axis, const TrainConfig& budget) {
  std::vector<RowSpec> rows;
  auto push = [&](const std::string& label, auto&& tweak) {
    RowSpec spec{label, budget};
    tweak(spec.config);
    rows.push_back(std::move(spec));
  };
  if (axis == "variant") {
    for (Variant v : {Variant::hgf, Variant::hlf, Variant::hgf_llf, Variant::full})
      push(to_string(v), [v](TrainConfig& c) { c.network.variant = v; });
  } else if (axis == "fusion_mode") {
    for (FusionMode m :
         {FusionMode::add, FusionMode::concat, FusionMode::se, FusionMode::csaf})
      push(to_string(m), [m](TrainConfig& c) {
        c.network.variant = Variant::full;
        c.network.fusion_mode = m;
      });
  } else if (axis == "attention_activation") {
    for (AttnAct a : {AttnAct::sigmoid, AttnAct::tanh})
      push(to_string(a), [a](TrainConfig& c) {
        c.network.variant = Variant::full;
        c.network.fusion_mode = FusionMode::csaf;
        c.network.attention_activation = a;
      });
  } else if (axis == "mixed_scale") {
    for (bool on : {false, true})
      push(on ? "mixed_scale" : "plain_residual", [on](TrainConfig& c) {
        c.network.mixed_scale = on;
      });
  } else if (axis == "patch_size") {
    for (int p : {64, 96, 128})
      push("patch" + std::to_string(p), [p](TrainConfig& c) { c.patch = p; });
  } else {
    throw ConfigError("unknown ablation axis '" + axis +
                      "' (expected variant, fusion_mode, attention_activation, "
                      "mixed_scale, or patch_size)");
  }
  return rows;
}

}  // namespace

std::vector<AblationTable> run_ablation(const Manifest& manifest,
                                        const TrainConfig& budget,
                                        const std::vector<std::string>& axes,
                                        const std::string& out_dir, std::ostream* log) {
  auto [train_split, val_split] = split_holdout(manifest, 5);
  const PairSet train_pairs = load_pairs(train_split, budget.qp);
  const PairSet val_pairs = load_pairs(val_split, budget.qp);
  if (train_pairs.items.empty() || val_pairs.items.empty())
    throw ConfigError("run_ablation: manifest has too few entries at qp " +
                      std::to_string(budget.qp));

  std::vector<AblationTable> tables;
  for (const std::string& axis : axes) {
    AblationTable table;
    table.axis = axis;
    for (const RowSpec& spec : rows_for_axis(axis, budget)) {
      TrainConfig cfg = spec.config;
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const std::string stem = out_dir + "/" + axis + "_" + spec.label;
        cfg.checkpoint_path = stem + ".glfc";
        cfg.loss_csv_path = stem + ".loss.csv";
      }
      if (log)
        *log << "[ablate] axis " << axis << ", row " << spec.label << ": training "
             << cfg.steps << " steps\n";
      Network<float> net(cfg.network);
      TrainResult result = train(net, cfg, train_pairs);
      if (result.aborted)
        throw std::runtime_error("ablation row '" + axis + "/" + spec.label +
                                 "' aborted: " + result.abort_reason);
      const EvalSummary eval = evaluate_filter(net, val_pairs);
      AblationRow row;
      row.label = spec.label;
      row.final_loss = result.losses.empty() ? 0.0 : result.losses.back();
      row.psnr_before = eval.mean_before;
      row.psnr_after = eval.mean_after;
      row.gain_db = eval.mean_gain;
      row.parameter_count = net.parameter_count();
      table.rows.push_back(std::move(row));
      if (log)
        *log << "[ablate]   " << spec.label << ": gain "
             << table.rows.back().gain_db << " dB\n";
    }
    tables.push_back(std::move(table));
  }
  return tables;
}

std::string format_table(const AblationTable& table) {
  std::ostringstream out;
  out << "axis: " << table.axis << "\n";
  out << std::left << std::setw(18) << "config" << std::right << std::setw(12)
      << "params" << std::setw(14) << "final_loss" << std::setw(12) << "psnr_in"
      << std::setw(12) << "psnr_out" << std::setw(12) << "gain_db" << "\n";
  for (const AblationRow& r : table.rows) {
    out << std::left << std::setw(18) << r.label << std::right << std::setw(12)
        << r.parameter_count << std::setw(14) << std::fixed << std::setprecision(6)
        << r.final_loss << std::setw(12) << std::setprecision(4) << r.psnr_before
        << std::setw(12) << r.psnr_after << std::setw(12) << r.gain_db << "\n";
    out.unsetf(std::ios::fixed);
  }
  return out.str();
}

}  // namespace glf
