// glf: one binary for the whole pipeline — synthetic coding of a PGM corpus,
// per-QP training, whole-frame filtering, evaluation, gradient checking,
// ablation runs, stream-comparison maps, and BD-rate between RD curves.
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "glf/ablate.hpp"
#include "glf/codec.hpp"
#include "glf/data.hpp"
#include "glf/metrics.hpp"
#include "glf/netcheck.hpp"
#include "glf/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> list_pgms(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".pgm")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  return files;
}

int run_prepare(const std::string& input_dir, const std::string& out_dir, int qp,
                int block, const std::string& split) {
  const auto files = list_pgms(input_dir);
  if (files.empty())
    throw std::runtime_error("no .pgm files in " + input_dir);
  fs::create_directories(out_dir);

  glf::Manifest manifest;
  manifest.split = split;
  std::ofstream rates(out_dir + "/rates.csv", std::ios::trunc);
  rates << "name,qp,rate_bpp,psnr_db\n";
  rates.precision(10);
  glf::CodecConfig cfg;
  cfg.block_size = block;
  cfg.qp = qp;
  for (const std::string& path : files) {
    const glf::Frame original = glf::load_pgm(path);
    const glf::CodedFrame coded = glf::encode_frame(original, cfg);
    const std::string name = fs::path(path).stem().string();
    const std::string recon_path =
        out_dir + "/" + name + "_qp" + std::to_string(qp) + ".pgm";
    glf::save_pgm(coded.reconstructed, recon_path);
    manifest.entries.push_back({fs::absolute(path).string(),
                                fs::absolute(recon_path).string(), qp});
    rates << name << "," << qp << ","
          << coded.rate_bits / double(original.pixel_count()) << ","
          << glf::psnr(original, coded.reconstructed) << "\n";
  }
  glf::save_manifest(manifest, out_dir + "/manifest.json");
  std::cout << "prepared " << manifest.entries.size() << " frames at qp " << qp
            << " -> " << out_dir << "\n";
  return 0;
}

int run_train(const glf::TrainConfig& cfg, const std::string& manifest_path) {
  const glf::Manifest manifest = glf::load_manifest(manifest_path);
  const glf::PairSet pairs = glf::load_pairs(manifest, cfg.qp);
  if (pairs.items.empty())
    throw std::runtime_error("manifest has no entries at qp " + std::to_string(cfg.qp));
  glf::Network<float> net(cfg.network);
  std::cout << "training " << glf::to_string(cfg.network.variant) << " network ("
            << net.parameter_count() << " parameters) for " << cfg.steps << " steps\n";
  const glf::TrainResult result = glf::train(net, cfg, pairs);
  if (result.aborted) {
    std::cerr << "training aborted: " << result.abort_reason
              << "; last-good checkpoint: " << result.last_good_checkpoint << "\n";
    return 2;
  }
  if (!result.losses.empty())
    std::cout << "final loss " << result.losses.back() << " (initial "
              << result.losses.front() << ")\n";
  std::cout << "checkpoint written to " << cfg.checkpoint_path << "\n";
  return 0;
}

int run_filter(const std::string& model, const std::string& in_path,
               const std::string& out_path) {
  glf::Network<float> net = glf::load_checkpoint<float>(model);
  const glf::Frame input = glf::load_pgm(in_path);
  glf::save_pgm(glf::filter_frame(net, input), out_path);
  std::cout << "filtered " << in_path << " -> " << out_path << "\n";
  return 0;
}

int run_eval(const std::string& model, const std::string& manifest_path, int qp,
             bool timing) {
  glf::Network<float> net = glf::load_checkpoint<float>(model);
  const glf::Manifest manifest = glf::load_manifest(manifest_path);
  const glf::PairSet pairs = glf::load_pairs(manifest, qp);
  if (pairs.items.empty()) throw std::runtime_error("no manifest entries to evaluate");
  const glf::EvalSummary summary = glf::evaluate_filter(net, pairs);
  std::cout << "entry,psnr_before,psnr_after,gain_db\n";
  for (const auto& e : summary.entries)
    std::cout << fs::path(e.name).filename().string() << "," << e.psnr_before << ","
              << e.psnr_after << "," << e.psnr_after - e.psnr_before << "\n";
  std::cout << "mean gain: " << summary.mean_gain << " dB (before "
            << summary.mean_before << ", after " << summary.mean_after << ")\n";
  if (timing) {
    std::vector<glf::Frame> frames;
    for (const auto& item : pairs.items) frames.push_back(item.recon);
    const glf::TimingReport rep = glf::time_runs(
        frames, [&](const glf::Frame& f) { glf::filter_frame(net, f); }, 3);
    std::cout << "timing: mean " << rep.mean_ms << " ms/frame (min " << rep.min_ms
              << ", max " << rep.max_ms << ", cov " << rep.coeff_of_variation << ")\n";
  }
  return 0;
}

int run_gradcheck(const std::string& op) {
  bool all_pass = true;
  int ran = 0;
  for (const auto& [name, report] : glf::run_op_gradcheck_suite()) {
    if (op != "all" && name.rfind(op, 0) != 0) continue;
    ++ran;
    all_pass &= report.pass;
    std::cout << (report.pass ? "PASS " : "FAIL ") << name << " max_rel_err "
              << report.max_rel_err;
    if (!report.diagnostic.empty()) std::cout << " (" << report.diagnostic << ")";
    std::cout << "\n";
  }
  if (op == "all" || op == "network") {
    ++ran;
    const glf::GradCheckReport report =
        glf::network_loss_gradcheck(glf::tiny_check_config(), 1);
    all_pass &= report.pass;
    std::cout << (report.pass ? "PASS " : "FAIL ")
              << "network/mse_loss max_rel_err " << report.max_rel_err << "\n";
  }
  if (ran == 0) throw std::runtime_error("no gradcheck matches op '" + op + "'");
  std::cout << (all_pass ? "all checks passed" : "GRADCHECK FAILURES") << "\n";
  return all_pass ? 0 : 2;
}

int run_ablate_cmd(const std::string& manifest_path, const std::string& axes_arg,
                   const std::string& out_dir, const glf::TrainConfig& budget) {
  std::vector<std::string> axes;
  std::string token;
  for (char c : axes_arg + ",") {
    if (c == ',') {
      if (!token.empty()) axes.push_back(token);
      token.clear();
    } else {
      token += c;
    }
  }
  if (axes.empty()) throw std::runtime_error("--axes is empty");
  const glf::Manifest manifest = glf::load_manifest(manifest_path);
  const auto tables = glf::run_ablation(manifest, budget, axes, out_dir, &std::cerr);

  json report = json::array();
  for (const auto& table : tables) {
    const std::string text = glf::format_table(table);
    std::cout << text << "\n";
    std::ofstream txt(out_dir + "/table_" + table.axis + ".txt", std::ios::trunc);
    txt << text;
    json jt{{"axis", table.axis}, {"rows", json::array()}};
    for (const auto& r : table.rows)
      jt["rows"].push_back({{"config", r.label},
                            {"parameters", r.parameter_count},
                            {"final_loss", r.final_loss},
                            {"psnr_before", r.psnr_before},
                            {"psnr_after", r.psnr_after},
                            {"gain_db", r.gain_db}});
    report.push_back(jt);
  }
  std::ofstream jf(out_dir + "/report.json", std::ios::trunc);
  jf << report.dump(2) << "\n";
  std::cout << "wrote " << out_dir << "/report.json\n";
  return 0;
}

int run_diffmap(const std::string& model_global, const std::string& model_local,
                const std::string& manifest_path, const std::string& out_dir, int qp) {
  glf::Network<float> net_g = glf::load_checkpoint<float>(model_global);
  glf::Network<float> net_l = glf::load_checkpoint<float>(model_local);
  const glf::Manifest manifest = glf::load_manifest(manifest_path);
  const glf::PairSet pairs = glf::load_pairs(manifest, qp);
  if (pairs.items.empty()) throw std::runtime_error("no manifest entries");
  fs::create_directories(out_dir);

  json entries = json::array();
  std::int64_t g_total = 0, l_total = 0, t_total = 0, px_total = 0;
  for (std::size_t i = 0; i < pairs.items.size(); ++i) {
    const auto& item = pairs.items[i];
    const glf::Frame y_g = glf::filter_frame(net_g, item.recon);
    const glf::Frame y_l = glf::filter_frame(net_l, item.recon);
    const glf::DiffReport rep = glf::diff_map(y_g, y_l, item.original);
    g_total += rep.global_count;
    l_total += rep.local_count;
    t_total += rep.tie_count;
    px_total += rep.pixels;
    glf::Frame err_g, err_l;
    glf::render_error_maps(y_g, y_l, item.original, err_g, err_l);
    char suffix[32];
    std::snprintf(suffix, sizeof suffix, "%02zu.pgm", i + 1);
    glf::save_pgm(err_g, out_dir + "/err_global_" + suffix);
    glf::save_pgm(err_l, out_dir + "/err_local_" + suffix);
    entries.push_back({{"entry", fs::path(item.name).filename().string()},
                       {"global_better_pct", rep.global_better_pct},
                       {"local_better_pct", rep.local_better_pct},
                       {"tie_pct", rep.tie_pct}});
  }
  const double total = double(px_total);
  json report{{"entries", entries},
              {"aggregate",
               {{"global_better_pct", 100.0 * double(g_total) / total},
                {"local_better_pct", 100.0 * double(l_total) / total},
                {"tie_pct", 100.0 * double(t_total) / total},
                {"pixels", px_total}}}};
  std::ofstream jf(out_dir + "/report.json", std::ios::trunc);
  jf << report.dump(2) << "\n";
  std::cout << "global-better " << 100.0 * double(g_total) / total << "%, local-better "
            << 100.0 * double(l_total) / total << "%, tie "
            << 100.0 * double(t_total) / total << "% over " << px_total << " pixels\n";
  return 0;
}

int run_bdrate(const std::string& anchor_path, const std::string& test_path) {
  const glf::RDCurve anchor = glf::load_rd_csv(anchor_path);
  const glf::RDCurve test = glf::load_rd_csv(test_path);
  std::string warn;
  const double bd = glf::bd_rate(anchor, test, &warn);
  if (!warn.empty()) std::cerr << "warning: " << warn << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", bd);
  std::cout << buf << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"in-loop filtering network pipeline (synthetic block codec, per-QP "
               "training, filtering, metrics)"};
  app.require_subcommand(1);
  std::function<int()> action;

  // prepare
  auto* prepare = app.add_subcommand(
      "prepare", "encode a PGM directory at one QP and write manifest + RD data");
  {
    auto opts = std::make_shared<std::tuple<std::string, std::string, int, int,
                                            std::string>>("", "", 37, 8, "train");
    prepare->add_option("--input-dir", std::get<0>(*opts), "directory of input PGMs")
        ->required()
        ->check(CLI::ExistingDirectory);
    prepare->add_option("--out-dir", std::get<1>(*opts), "output directory")->required();
    prepare->add_option("--qp", std::get<2>(*opts), "quantization parameter")
        ->required()
        ->check(CLI::Range(0, 51));
    prepare->add_option("--block", std::get<3>(*opts), "codec block size")
        ->check(CLI::Range(2, 64));
    prepare->add_option("--split", std::get<4>(*opts), "manifest split tag")
        ->check(CLI::IsMember({"train", "val"}));
    prepare->callback([opts, &action] {
      action = [opts] {
        return run_prepare(std::get<0>(*opts), std::get<1>(*opts), std::get<2>(*opts),
                           std::get<3>(*opts), std::get<4>(*opts));
      };
    });
  }

  // train
  auto* train_cmd =
      app.add_subcommand("train", "train one per-QP model from a manifest");
  {
    struct TrainArgs {
      std::string manifest, out, loss_out;
      glf::TrainConfig cfg;
      std::string variant = "full", fusion = "csaf", attn_act = "tanh";
      bool progress = false;
    };
    auto args = std::make_shared<TrainArgs>();
    train_cmd->add_option("--manifest", args->manifest)->required()
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--qp", args->cfg.qp)->required()->check(CLI::Range(0, 51));
    train_cmd->add_option("--steps", args->cfg.steps)->required()
        ->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--patch", args->cfg.patch)->check(CLI::Range(16, 512));
    train_cmd->add_option("--batch", args->cfg.batch)->check(CLI::Range(1, 256));
    train_cmd->add_option("--lr", args->cfg.lr)->check(CLI::PositiveNumber);
    train_cmd->add_option("--width-mult", args->cfg.network.width_mult)
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--base-width", args->cfg.network.base_width)
        ->check(CLI::Range(1, 1024));
    train_cmd->add_option("--variant", args->variant)
        ->check(CLI::IsMember({"full", "hgf", "hlf", "hgf_llf"}));
    train_cmd->add_option("--fusion", args->fusion)
        ->check(CLI::IsMember({"csaf", "add", "concat", "se"}));
    train_cmd->add_option("--attn-act", args->attn_act)
        ->check(CLI::IsMember({"tanh", "sigmoid"}));
    train_cmd->add_option("--seed", args->cfg.seed);
    train_cmd->add_option("--lr-decay-every", args->cfg.schedule.every);
    train_cmd->add_option("--lr-decay-factor", args->cfg.schedule.factor);
    train_cmd->add_option("--checkpoint-every", args->cfg.checkpoint_every);
    train_cmd->add_option("--out", args->out, "checkpoint path")->required();
    train_cmd->add_option("--loss-out", args->loss_out, "loss CSV path");
    train_cmd->add_flag("--progress", args->progress, "log every 100 steps");
    train_cmd->callback([args, &action] {
      action = [args] {
        glf::TrainConfig cfg = args->cfg;
        cfg.network.variant = glf::variant_from_string(args->variant);
        cfg.network.fusion_mode = glf::fusion_mode_from_string(args->fusion);
        cfg.network.attention_activation = glf::attn_act_from_string(args->attn_act);
        cfg.schedule.step_decay = cfg.schedule.every > 0;
        cfg.checkpoint_path = args->out;
        cfg.loss_csv_path =
            args->loss_out.empty() ? args->out + ".loss.csv" : args->loss_out;
        cfg.log_progress = args->progress;
        return run_train(cfg, args->manifest);
      };
    });
  }

  // filter
  auto* filter_cmd = app.add_subcommand("filter", "filter one PGM frame with a model");
  {
    auto opts = std::make_shared<std::array<std::string, 3>>();
    filter_cmd->add_option("--model", (*opts)[0])->required()->check(CLI::ExistingFile);
    filter_cmd->add_option("--in", (*opts)[1])->required()->check(CLI::ExistingFile);
    filter_cmd->add_option("--out", (*opts)[2])->required();
    filter_cmd->callback([opts, &action] {
      action = [opts] { return run_filter((*opts)[0], (*opts)[1], (*opts)[2]); };
    });
  }

  // eval
  auto* eval_cmd =
      app.add_subcommand("eval", "per-entry PSNR before/after filtering + mean gain");
  {
    struct EvalArgs {
      std::string model, manifest;
      int qp = -1;
      bool timing = false;
    };
    auto args = std::make_shared<EvalArgs>();
    eval_cmd->add_option("--model", args->model)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--manifest", args->manifest)->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--qp", args->qp, "restrict to one QP (-1 = all)");
    eval_cmd->add_flag("--timing", args->timing, "also report per-frame wall time");
    eval_cmd->callback([args, &action] {
      action = [args] {
        return run_eval(args->model, args->manifest, args->qp, args->timing);
      };
    });
  }

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of all operators");
  {
    auto op = std::make_shared<std::string>("all");
    gc->add_option("--op", *op, "operator name prefix, 'network', or 'all'");
    gc->callback([op, &action] { action = [op] { return run_gradcheck(*op); }; });
  }

  // ablate
  auto* ablate_cmd = app.add_subcommand(
      "ablate", "train each configuration along the given axes and tabulate gains");
  {
    struct AblateArgs {
      std::string manifest, axes, out;
      glf::TrainConfig budget;
    };
    auto args = std::make_shared<AblateArgs>();
    args->budget.steps = 300;
    args->budget.batch = 8;
    args->budget.patch = 64;
    args->budget.lr = 1e-3;
    args->budget.network.width_mult = 0.125;
    ablate_cmd->add_option("--manifest", args->manifest)->required()
        ->check(CLI::ExistingFile);
    ablate_cmd
        ->add_option("--axes", args->axes,
                     "comma list of: variant,fusion_mode,attention_activation,"
                     "mixed_scale,patch_size")
        ->required();
    ablate_cmd->add_option("--out", args->out, "output directory")->required();
    ablate_cmd->add_option("--qp", args->budget.qp)->check(CLI::Range(0, 51));
    ablate_cmd->add_option("--steps", args->budget.steps)
        ->check(CLI::PositiveNumber);
    ablate_cmd->add_option("--batch", args->budget.batch)->check(CLI::Range(1, 256));
    ablate_cmd->add_option("--patch", args->budget.patch)->check(CLI::Range(16, 512));
    ablate_cmd->add_option("--lr", args->budget.lr)->check(CLI::PositiveNumber);
    ablate_cmd->add_option("--width-mult", args->budget.network.width_mult)
        ->check(CLI::PositiveNumber);
    ablate_cmd->add_option("--seed", args->budget.seed);
    ablate_cmd->callback([args, &action] {
      action = [args] {
        std::filesystem::create_directories(args->out);
        return run_ablate_cmd(args->manifest, args->axes, args->out, args->budget);
      };
    });
  }

  // diffmap
  auto* dm = app.add_subcommand(
      "diffmap", "per-pixel comparison of a global-stream vs local-stream model");
  {
    struct DiffArgs {
      std::string model_global, model_local, manifest, out;
      int qp = -1;
    };
    auto args = std::make_shared<DiffArgs>();
    dm->add_option("--model-global", args->model_global)->required()
        ->check(CLI::ExistingFile);
    dm->add_option("--model-local", args->model_local)->required()
        ->check(CLI::ExistingFile);
    dm->add_option("--manifest", args->manifest)->required()->check(CLI::ExistingFile);
    dm->add_option("--out", args->out)->required();
    dm->add_option("--qp", args->qp, "restrict to one QP (-1 = all)");
    dm->callback([args, &action] {
      action = [args] {
        return run_diffmap(args->model_global, args->model_local, args->manifest,
                           args->out, args->qp);
      };
    });
  }

  // bdrate
  auto* bd = app.add_subcommand("bdrate",
                                "signed percent rate difference between two RD CSVs");
  {
    auto opts = std::make_shared<std::array<std::string, 2>>();
    bd->add_option("--anchor", (*opts)[0])->required()->check(CLI::ExistingFile);
    bd->add_option("--test", (*opts)[1])->required()->check(CLI::ExistingFile);
    bd->callback([opts, &action] {
      action = [opts] { return run_bdrate((*opts)[0], (*opts)[1]); };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    return action ? action() : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
