#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "glf/data.hpp"
#include "glf/network.hpp"

namespace glf {

/// Adam with bias correction; beta1 0.9, beta2 0.999, eps 1e-8.
template <typename S>
class Adam {
 public:
  Adam(std::vector<Parameter<S>*> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    slots_.reserve(params_.size());
    for (Parameter<S>* p : params_)
      slots_.push_back({Tensor<S>(p->value.dims()), Tensor<S>(p->value.dims())});
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  std::int64_t step_count() const { return t_; }
  const Tensor<S>& second_moment(std::size_t i) const { return slots_[i].v; }

  /// One update over all parameters. Throws before touching anything if any
  /// gradient is non-finite, naming the offending parameter.
  void step() {
    for (Parameter<S>* p : params_)
      if (!p->grad.all_finite())
        throw std::runtime_error("adam: non-finite gradient in parameter '" + p->name +
                                 "'");
    ++t_;
    const S bc1 = S(1) - S(std::pow(b1_, double(t_)));
    const S bc2 = S(1) - S(std::pow(b2_, double(t_)));
    const S lr = S(lr_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter<S>& p = *params_[i];
      auto& m = slots_[i].m.array();
      auto& v = slots_[i].v.array();
      const auto& g = p.grad.array();
      m = S(b1_) * m + (S(1) - S(b1_)) * g;
      v = S(b2_) * v + (S(1) - S(b2_)) * g.square();
      p.value.array() -= lr * (m / bc1) / ((v / bc2).sqrt() + S(eps_));
    }
  }

 private:
  struct Slot {
    Tensor<S> m, v;
  };
  std::vector<Parameter<S>*> params_;
  std::vector<Slot> slots_;
  double lr_, b1_, b2_, eps_;
  std::int64_t t_ = 0;
};

/// The synthetic unit-variance batch the initializer rescales against.
template <typename S>
Tensor<S> unit_calibration_batch(const NetworkConfig& cfg, std::uint64_t seed) {
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const std::int64_t side = std::max<std::int64_t>(32, cfg.required_multiple());
  Tensor<S> calib({4, cfg.input_channels, side, side});
  for (std::int64_t i = 0; i < calib.size(); ++i) calib.data()[i] = S(rng.normal());
  return calib;
}

/// Fan-in Gaussian init followed by a data-driven per-layer rescale on a
/// synthetic unit-variance calibration batch, so every conv/FC output starts
/// near unit standard deviation. Biases zero, BN affine reset to identity.
template <typename S>
void init_params(Network<S>& net, std::uint64_t seed) {
  Rng rng(seed);
  for (Parameter<S>* p : net.parameters()) {
    const Dims4 d = p->value.dims();
    if (p->name.ends_with(".weight")) {
      const double fan_in = double(d.c * d.h * d.w);
      const double stddev = std::sqrt(1.0 / fan_in);
      for (std::int64_t i = 0; i < p->value.size(); ++i)
        p->value.data()[i] = S(rng.normal(0.0, stddev));
    } else if (p->name.ends_with(".bias") || p->name.ends_with(".beta")) {
      p->value.set_zero();
    } else if (p->name.ends_with(".gamma")) {
      p->value.array().setOnes();
    }
  }
  for (BatchNorm<S>* bn : net.batchnorms()) {
    bn->running_mean.set_zero();
    bn->running_var.array().setOnes();
  }

  const Tensor<S> calib = unit_calibration_batch<S>(net.config(), seed);

  const Mode saved = net.mode();
  net.set_mode(Mode::train);
  // Three passes: BN absorbs upstream scale changes immediately, the few
  // normalization-free chains (attention MLPs, spatial-attention convs, the
  // head) need the iteration to settle.
  for (int pass = 0; pass < 3; ++pass) {
    ForwardTrace<S> trace;
    net.forward(calib, &trace);
    std::vector<std::string> seen;
    for (const auto& [wname, out] : trace.layer_outputs) {
      if (std::find(seen.begin(), seen.end(), wname) != seen.end()) continue;
      seen.push_back(wname);
      const S s = std_of(out.value());
      if (s > S(1e-8)) {
        Parameter<S>* w = net.find_parameter(wname);
        w->value.array() /= s;
      }
    }
  }
  net.set_mode(saved);
}

/// Matches the head-output distribution to the groundtruth distortion on a
/// calibration batch: weights scaled by std(T)/std(R0), bias set to mean(T).
template <typename S>
void calibrate_head(Network<S>& net, const Tensor<S>& x, const Tensor<S>& t) {
  const Mode saved = net.mode();
  net.set_mode(Mode::train);
  auto out = net.forward(x);
  net.set_mode(saved);
  const S s_t = std_of(t);
  const S s_r = std_of(out.r.value());
  if (s_r < S(1e-12)) {
    std::cerr << "warning: calibrate_head: head output is constant (std " << s_r
              << "); leaving scale unchanged\n";
  } else {
    net.head_weight().value.array() *= s_t / s_r;
  }
  net.head_bias().value.data()[0] = mean_of(t);
}

// --- checkpoint file ("GLFC", version 1) ----------------------------------

namespace ckpt {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                         char((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

inline void put_f32(std::ostream& out, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
}

struct Reader {
  std::ifstream in;
  std::string path;
  std::uint64_t offset = 0;

  explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw IoError(p + ": cannot open");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw IoError(path + ": " + what + " (byte offset " + std::to_string(offset) + ")");
  }

  void bytes(char* dst, std::size_t n) {
    in.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) fail("truncated checkpoint");
    offset += n;
  }

  std::uint32_t u32() {
    char b[4];
    bytes(b, 4);
    return std::uint32_t(std::uint8_t(b[0])) | std::uint32_t(std::uint8_t(b[1])) << 8 |
           std::uint32_t(std::uint8_t(b[2])) << 16 |
           std::uint32_t(std::uint8_t(b[3])) << 24;
  }

  float f32() {
    const std::uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
};

}  // namespace ckpt

/// Serializes config plus every named tensor (parameters and BN running
/// statistics) as 32-bit little-endian floats.
template <typename S>
void save_checkpoint(Network<S>& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out.write("GLFC", 4);
  ckpt::put_u32(out, 1);
  nlohmann::json j = net.config();
  const std::string cfg = j.dump();
  ckpt::put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  auto tensors = net.named_tensors();
  ckpt::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    ckpt::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Dims4 d = tensor->dims();
    ckpt::put_u32(out, 4);
    for (std::int64_t v : {d.n, d.c, d.h, d.w})
      ckpt::put_u32(out, static_cast<std::uint32_t>(v));
    for (std::int64_t i = 0; i < tensor->size(); ++i)
      ckpt::put_f32(out, static_cast<float>(tensor->data()[i]));
  }
  if (!out) throw IoError(path + ": write failed");
}

template <typename S>
Network<S> load_checkpoint(const std::string& path) {
  ckpt::Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "GLFC", 4) != 0) r.fail("bad magic (expected \"GLFC\")");
  const std::uint32_t version = r.u32();
  if (version != 1) r.fail("unsupported version " + std::to_string(version));
  const std::uint32_t cfg_len = r.u32();
  std::string cfg_json(cfg_len, '\0');
  r.bytes(cfg_json.data(), cfg_len);
  NetworkConfig cfg;
  try {
    cfg = nlohmann::json::parse(cfg_json).get<NetworkConfig>();
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("invalid config JSON: ") + e.what());
  }

  Network<S> net(cfg);
  std::unordered_map<std::string, Tensor<S>*> by_name;
  for (auto& [name, tensor] : net.named_tensors()) by_name[name] = tensor;
  std::unordered_map<std::string, bool> filled;

  const std::uint32_t count = r.u32();
  if (count != by_name.size())
    r.fail("tensor count " + std::to_string(count) + " does not match architecture (" +
           std::to_string(by_name.size()) + " expected)");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len);
    const std::uint32_t ndim = r.u32();
    if (ndim != 4) r.fail("tensor '" + name + "' has ndim " + std::to_string(ndim));
    Dims4 d;
    d.n = r.u32();
    d.c = r.u32();
    d.h = r.u32();
    d.w = r.u32();
    auto it = by_name.find(name);
    if (it == by_name.end()) r.fail("unknown tensor name '" + name + "'");
    if (it->second->dims() != d)
      r.fail("tensor '" + name + "' dims " + d.str() + " do not match architecture " +
             it->second->dims().str());
    if (filled[name]) r.fail("duplicate tensor '" + name + "'");
    filled[name] = true;
    for (std::int64_t k = 0; k < it->second->size(); ++k)
      it->second->data()[k] = static_cast<S>(r.f32());
  }
  for (const auto& [name, tensor] : by_name)
    if (!filled[name]) r.fail("missing tensor '" + name + "'");
  return net;
}

// --- training loop ---------------------------------------------------------

struct LrSchedule {
  bool step_decay = false;
  double factor = 0.5;
  std::int64_t every = 0;  // decay period in steps, 0 disables
};

struct TrainConfig {
  NetworkConfig network;
  int qp = 37;
  std::int64_t steps = 0;
  int batch = 32;
  int patch = 128;
  double lr = 2e-3;
  std::uint64_t seed = 0;
  LrSchedule schedule;
  std::int64_t checkpoint_every = 0;  // 0 = only at the end
  std::string checkpoint_path;        // empty = keep in memory only
  std::string loss_csv_path;          // empty = no loss log file
  bool log_progress = false;
};

struct TrainResult {
  std::vector<double> losses;
  bool aborted = false;
  std::string abort_reason;
  std::string last_good_checkpoint;
};

template <typename S>
std::vector<Tensor<S>> snapshot_state(Network<S>& net) {
  std::vector<Tensor<S>> snap;
  for (auto& [name, tensor] : net.named_tensors()) snap.push_back(*tensor);
  return snap;
}

template <typename S>
void restore_state(Network<S>& net, const std::vector<Tensor<S>>& snap) {
  auto tensors = net.named_tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) *tensors[i].second = snap[i];
}

inline void write_loss_csv(const std::vector<double>& losses, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << "step,loss\n";
  out.precision(10);
  for (std::size_t i = 0; i < losses.size(); ++i) out << i + 1 << "," << losses[i] << "\n";
}

/// Initializes, calibrates, and trains `net` on patches sampled from
/// `pairs`. On a non-finite loss or gradient the loop stops and the most
/// recent finite-loss state is written as the last-good checkpoint.
template <typename S>
TrainResult train(Network<S>& net, const TrainConfig& cfg, const PairSet& pairs) {
  TrainResult result;
  if (pairs.items.empty()) throw ConfigError("train: empty pair set");

  init_params(net, cfg.seed);
  Rng data_rng(cfg.seed * 2 + 1);
  PatchBatch<S> calib = sample_patches<S>(pairs, cfg.patch, cfg.batch, data_rng);
  calibrate_head(net, calib.x, calib.t);

  Adam<S> opt(net.parameters(), cfg.lr);
  std::vector<Tensor<S>> last_good = snapshot_state(net);
  net.set_mode(Mode::train);

  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    if (cfg.schedule.step_decay && cfg.schedule.every > 0)
      opt.set_lr(cfg.lr *
                 std::pow(cfg.schedule.factor, double(step / cfg.schedule.every)));

    PatchBatch<S> batch = sample_patches<S>(pairs, cfg.patch, cfg.batch, data_rng);
    auto out = net.forward(batch.x);
    Var<S> loss = mse_loss(out.r, batch.t);
    const double loss_value = double(loss.value().data()[0]);

    if (!std::isfinite(loss_value)) {
      result.aborted = true;
      result.abort_reason = "non-finite loss at step " + std::to_string(step + 1);
      break;
    }
    result.losses.push_back(loss_value);

    net.zero_grads();
    backward(loss);
    try {
      opt.step();
    } catch (const std::runtime_error& e) {
      result.aborted = true;
      result.abort_reason = std::string(e.what()) + " at step " + std::to_string(step + 1);
      break;
    }
    last_good = snapshot_state(net);

    if (cfg.log_progress && (step + 1) % 100 == 0)
      std::cerr << "step " << step + 1 << "/" << cfg.steps << " loss " << loss_value
                << "\n";
    if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
        (step + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(net, cfg.checkpoint_path);
  }

  if (result.aborted) restore_state(net, last_good);
  if (!cfg.checkpoint_path.empty()) {
    save_checkpoint(net, cfg.checkpoint_path);
    if (result.aborted) result.last_good_checkpoint = cfg.checkpoint_path;
  }
  if (!cfg.loss_csv_path.empty()) write_loss_csv(result.losses, cfg.loss_csv_path);
  return result;
}

}  // namespace glf
