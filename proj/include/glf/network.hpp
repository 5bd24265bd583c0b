#pragma once

#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "glf/ops.hpp"

namespace glf {

enum class FusionMode { csaf, add, concat, se };
enum class AttnAct { tanh, sigmoid };
enum class Variant { full, hgf, hlf, hgf_llf };

std::string to_string(FusionMode m);
std::string to_string(AttnAct a);
std::string to_string(Variant v);
FusionMode fusion_mode_from_string(const std::string& s);
AttnAct attn_act_from_string(const std::string& s);
Variant variant_from_string(const std::string& s);

/// Structural hyperparameters of the three-stream fusion network.
struct NetworkConfig {
  int base_width = 64;
  double width_mult = 1.0;
  int llf_depth = 6;
  int hgf_scales = 4;
  int hlf_blocks = 5;
  FusionMode fusion_mode = FusionMode::csaf;
  AttnAct attention_activation = AttnAct::tanh;
  int channel_attention_reduction = 16;
  int spatial_attention_kernel = 7;
  Variant variant = Variant::full;
  int shared_stem_layers = 2;
  int input_channels = 1;
  bool mixed_scale = true;

  std::int64_t required_multiple() const { return std::int64_t(1) << hgf_scales; }

  /// Nominal channel count scaled by width_mult; rejects widths below 1.
  std::int64_t scaled(std::int64_t nominal) const {
    const auto w = std::llround(double(nominal) * width_mult);
    if (w < 1)
      throw ConfigError("width " + std::to_string(nominal) + " * width_mult " +
                        std::to_string(width_mult) + " collapses below 1 channel");
    return w;
  }

  void validate() const;
};

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);

inline std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::csaf: return "csaf";
    case FusionMode::add: return "add";
    case FusionMode::concat: return "concat";
    case FusionMode::se: return "se";
  }
  return "?";
}
inline std::string to_string(AttnAct a) {
  return a == AttnAct::tanh ? "tanh" : "sigmoid";
}
inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::hgf: return "hgf";
    case Variant::hlf: return "hlf";
    case Variant::hgf_llf: return "hgf_llf";
  }
  return "?";
}
inline FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "csaf") return FusionMode::csaf;
  if (s == "add") return FusionMode::add;
  if (s == "concat") return FusionMode::concat;
  if (s == "se") return FusionMode::se;
  throw ConfigError("unknown fusion mode '" + s + "'");
}
inline AttnAct attn_act_from_string(const std::string& s) {
  if (s == "tanh") return AttnAct::tanh;
  if (s == "sigmoid") return AttnAct::sigmoid;
  throw ConfigError("unknown attention activation '" + s + "'");
}
inline Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "hgf") return Variant::hgf;
  if (s == "hlf") return Variant::hlf;
  if (s == "hgf_llf") return Variant::hgf_llf;
  throw ConfigError("unknown variant '" + s + "'");
}

inline void NetworkConfig::validate() const {
  if (base_width < 1) throw ConfigError("base_width must be >= 1");
  if (width_mult <= 0) throw ConfigError("width_mult must be positive");
  if (shared_stem_layers < 0) throw ConfigError("shared_stem_layers must be >= 0");
  if (llf_depth < shared_stem_layers)
    throw ConfigError("llf_depth must be >= shared_stem_layers");
  if (hgf_scales < 1 || hgf_scales > 8)
    throw ConfigError("hgf_scales must be in [1,8]");
  if (hlf_blocks < 1) throw ConfigError("hlf_blocks must be >= 1");
  if (channel_attention_reduction < 1)
    throw ConfigError("channel_attention_reduction must be >= 1");
  if (spatial_attention_kernel < 1 || spatial_attention_kernel % 2 == 0)
    throw ConfigError("spatial_attention_kernel must be odd");
  if (input_channels < 1) throw ConfigError("input_channels must be >= 1");
  scaled(base_width);
  scaled(std::int64_t(base_width) << (hgf_scales - 1));
}

inline void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = nlohmann::json{{"base_width", c.base_width},
                     {"width_mult", c.width_mult},
                     {"llf_depth", c.llf_depth},
                     {"hgf_scales", c.hgf_scales},
                     {"hlf_blocks", c.hlf_blocks},
                     {"fusion_mode", to_string(c.fusion_mode)},
                     {"attention_activation", to_string(c.attention_activation)},
                     {"channel_attention_reduction", c.channel_attention_reduction},
                     {"spatial_attention_kernel", c.spatial_attention_kernel},
                     {"variant", to_string(c.variant)},
                     {"shared_stem_layers", c.shared_stem_layers},
                     {"input_channels", c.input_channels},
                     {"mixed_scale", c.mixed_scale}};
}

inline void from_json(const nlohmann::json& j, NetworkConfig& c) {
  j.at("base_width").get_to(c.base_width);
  j.at("width_mult").get_to(c.width_mult);
  j.at("llf_depth").get_to(c.llf_depth);
  j.at("hgf_scales").get_to(c.hgf_scales);
  j.at("hlf_blocks").get_to(c.hlf_blocks);
  c.fusion_mode = fusion_mode_from_string(j.at("fusion_mode").get<std::string>());
  c.attention_activation =
      attn_act_from_string(j.at("attention_activation").get<std::string>());
  j.at("channel_attention_reduction").get_to(c.channel_attention_reduction);
  j.at("spatial_attention_kernel").get_to(c.spatial_attention_kernel);
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  j.at("shared_stem_layers").get_to(c.shared_stem_layers);
  j.at("input_channels").get_to(c.input_channels);
  j.at("mixed_scale").get_to(c.mixed_scale);
}

/// Intermediate values recorded during a forward pass: per-layer
/// pre-normalization outputs (keyed by weight name), the named feature
/// streams, and the attention maps.
template <typename S>
struct ForwardTrace {
  std::vector<std::pair<std::string, Var<S>>> layer_outputs;
  std::map<std::string, Var<S>> streams;
  std::vector<std::pair<std::string, Var<S>>> attention_maps;
};

template <typename S>
struct ConvParams {
  Parameter<S>* w = nullptr;
  Parameter<S>* b = nullptr;
  int k = 3;
};

template <typename S>
Var<S> conv_traced(const ConvParams<S>& c, const Var<S>& x, ForwardTrace<S>* tr) {
  Var<S> y = conv2d(x, *c.w, *c.b, c.k);
  if (tr) tr->layer_outputs.push_back({c.w->name, y});
  return y;
}

template <typename S>
Var<S> fc_traced(Parameter<S>& w, Parameter<S>& b, const Var<S>& x,
                 ForwardTrace<S>* tr) {
  Var<S> y = fully_connected(x, w, b);
  if (tr) tr->layer_outputs.push_back({w.name, y});
  return y;
}

/// Channel-and-spatial attention parameters: a shared two-layer MLP for the
/// channel stage and one small conv for the spatial stage.
template <typename S>
struct CsafParams {
  Parameter<S>* fc1_w = nullptr;
  Parameter<S>* fc1_b = nullptr;
  Parameter<S>* fc2_w = nullptr;
  Parameter<S>* fc2_b = nullptr;
  ConvParams<S> spatial;
};

/// Channel stage: act(MLP(avgpool) + MLP(maxpool)) gates f with a residual;
/// spatial stage: act(conv(concat(channel-avg, channel-max))) gates again.
/// With tanh both stages can suppress as well as emphasise; with all
/// parameters zero and tanh the block is the identity.
template <typename S>
Var<S> csaf_forward(const Var<S>& f, const CsafParams<S>& p, AttnAct act,
                    ForwardTrace<S>* tr = nullptr, const std::string& label = "csaf") {
  auto activate = [act](const Var<S>& v) {
    return act == AttnAct::tanh ? tanh(v) : sigmoid(v);
  };
  auto mlp = [&](const Var<S>& v) {
    return fc_traced(*p.fc2_w, *p.fc2_b, relu(fc_traced(*p.fc1_w, *p.fc1_b, v, tr)), tr);
  };
  Var<S> a_c = activate(add(mlp(global_pool_spatial(f, PoolKind::avg)),
                            mlp(global_pool_spatial(f, PoolKind::max))));
  if (tr) tr->attention_maps.push_back({label + ".channel", a_c});
  Var<S> f1 = add(f, mul_broadcast(f, a_c));
  Var<S> a_s = activate(conv_traced(
      p.spatial,
      concat_channels(pool_over_channels(f1, PoolKind::avg),
                      pool_over_channels(f1, PoolKind::max)),
      tr));
  if (tr) tr->attention_maps.push_back({label + ".spatial", a_s});
  return add(f1, mul_broadcast(f1, a_s));
}

/// The three-stream in-loop filtering network: shared stem, a constant
/// resolution low-level stream, an encoder-decoder global stream, a stack
/// of mixed-scale residual blocks, attention-based fusion, and a linear
/// head whose output is added back onto the input frame.
template <typename S>
class Network {
 public:
  explicit Network(NetworkConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    build();
  }

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  const NetworkConfig& config() const { return cfg_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }

  struct Forward {
    Var<S> y;  // filtered frame, same dims as the input
    Var<S> r;  // predicted distortion (head output)
  };

  Forward forward(const Var<S>& x, ForwardTrace<S>* trace = nullptr) {
    const Dims4 xd = x.dims();
    if (xd.c != cfg_.input_channels)
      throw ShapeError("forward: expected " + std::to_string(cfg_.input_channels) +
                       " input channels, got " + std::to_string(xd.c));
    const std::int64_t mult = cfg_.required_multiple();
    if (xd.h % mult != 0 || xd.w % mult != 0)
      throw ShapeError("forward: input " + std::to_string(xd.h) + "x" +
                       std::to_string(xd.w) + " must be a multiple of " +
                       std::to_string(mult) + " (pad first)");

    Var<S> s = x;
    for (const Cbr& l : stem_) s = apply_cbr(l, s, trace);

    Var<S> f_ll, f_hg, f_hl;
    if (use_llf_) {
      f_ll = s;
      for (const Cbr& l : llf_) f_ll = apply_cbr(l, f_ll, trace);
      if (trace) trace->streams["f_ll"] = f_ll;
    }
    if (use_hgf_) {
      Var<S> d = s;
      std::vector<Var<S>> skips;
      for (const EncStage& st : enc_) {
        d = apply_cbr(st.c2, apply_cbr(st.c1, d, trace), trace);
        skips.push_back(d);
        d = maxpool2x2(d);
      }
      for (std::size_t j = 0; j < dec_.size(); ++j) {
        d = upsample_nearest2x(d);
        d = concat_channels(d, skips[skips.size() - 1 - j]);
        d = apply_cbr(dec_[j].c2, apply_cbr(dec_[j].c1, d, trace), trace);
      }
      f_hg = d;
      if (trace) trace->streams["f_hg"] = f_hg;
    }
    if (use_hlf_) {
      f_hl = s;
      for (const MsBlock& blk : hlf_) f_hl = apply_msblock(blk, f_hl, trace);
      if (trace) trace->streams["f_hl"] = f_hl;
    }

    Var<S> fused;
    if (cfg_.variant == Variant::hgf) {
      fused = f_hg;
    } else if (cfg_.variant == Variant::hlf) {
      fused = f_hl;
    } else {
      Var<S> f_hg_prime =
          apply_cbr(*eq7_, concat_channels(f_hg, f_ll), trace);
      if (trace) trace->streams["f_hg_prime"] = f_hg_prime;
      if (cfg_.variant == Variant::hgf_llf) {
        fused = f_hg_prime;
      } else {
        switch (cfg_.fusion_mode) {
          case FusionMode::csaf: {
            Var<S> a = apply_csaf(csaf_[0], f_hg_prime, trace, "csaf0");
            Var<S> b = apply_csaf(csaf_[1], f_hl, trace, "csaf1");
            fused = apply_csaf(csaf_[2], concat_channels(a, b), trace, "csaf2");
            break;
          }
          case FusionMode::add:
            fused = add(f_hg_prime, apply_conv(*add_proj_, f_hl, trace));
            break;
          case FusionMode::concat:
            fused = concat_channels(f_hg_prime, f_hl);
            break;
          case FusionMode::se: {
            Var<S> cat = concat_channels(f_hg_prime, f_hl);
            Var<S> z = global_pool_spatial(cat, PoolKind::avg);
            Var<S> gate = sigmoid(fc_traced(
                *se_fc2_w_, *se_fc2_b_,
                relu(fc_traced(*se_fc1_w_, *se_fc1_b_, z, trace)), trace));
            if (trace) trace->attention_maps.push_back({"se.gate", gate});
            fused = mul_broadcast(cat, gate);
            break;
          }
        }
      }
    }
    if (trace) trace->streams["fused"] = fused;

    Var<S> r = apply_conv(head_, fused, trace);
    if (trace) trace->streams["r"] = r;
    return Forward{add(x, r), r};
  }

  Forward forward(const Tensor<S>& x, ForwardTrace<S>* trace = nullptr) {
    return forward(Var<S>(x), trace);
  }

  const std::vector<Parameter<S>*>& parameters() { return param_list_; }
  const std::vector<BatchNorm<S>*>& batchnorms() { return bn_list_; }

  Parameter<S>* find_parameter(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }

  Parameter<S>& head_weight() { return *head_.w; }
  Parameter<S>& head_bias() { return *head_.b; }

  void zero_grads() {
    for (Parameter<S>* p : param_list_) p->zero_grad();
  }

  std::int64_t parameter_count() const {
    std::int64_t total = 0;
    for (const Parameter<S>* p : param_list_) total += p->size();
    return total;
  }

  /// All persistent tensors in registration order: parameters followed by
  /// each normalization layer's running statistics.
  std::vector<std::pair<std::string, Tensor<S>*>> named_tensors() {
    std::vector<std::pair<std::string, Tensor<S>*>> out;
    for (Parameter<S>* p : param_list_) out.push_back({p->name, &p->value});
    for (BatchNorm<S>* bn : bn_list_) {
      out.push_back({bn->name + ".running_mean", &bn->running_mean});
      out.push_back({bn->name + ".running_var", &bn->running_var});
    }
    return out;
  }

 private:
  struct Cbr {
    ConvParams<S> conv;
    BatchNorm<S>* bn = nullptr;
  };
  struct EncStage {
    Cbr c1, c2;
  };
  struct DecStage {
    Cbr c1, c2;
  };
  struct MsBlock {
    Cbr trunk, encdec, merge, extra;
  };

  Parameter<S>* make_param(const std::string& name, Dims4 dims) {
    params_.emplace_back(name, dims);
    Parameter<S>* p = &params_.back();
    param_list_.push_back(p);
    by_name_[name] = p;
    return p;
  }

  BatchNorm<S>* make_bn(const std::string& name, std::int64_t channels) {
    bns_.emplace_back(name, channels);
    BatchNorm<S>* bn = &bns_.back();
    bn_list_.push_back(bn);
    param_list_.push_back(&bn->gamma);
    by_name_[bn->gamma.name] = &bn->gamma;
    param_list_.push_back(&bn->beta);
    by_name_[bn->beta.name] = &bn->beta;
    return bn;
  }

  ConvParams<S> make_conv(const std::string& prefix, std::int64_t cin,
                          std::int64_t cout, int k) {
    return ConvParams<S>{make_param(prefix + ".weight", {cout, cin, k, k}),
                         make_param(prefix + ".bias", {1, cout, 1, 1}), k};
  }

  Cbr make_cbr(const std::string& prefix, std::int64_t cin, std::int64_t cout,
               int k = 3) {
    return Cbr{make_conv(prefix + ".conv", cin, cout, k), make_bn(prefix + ".bn", cout)};
  }

  CsafParams<S> make_csaf(const std::string& prefix, std::int64_t channels) {
    const std::int64_t hidden =
        std::max<std::int64_t>(4, channels / cfg_.channel_attention_reduction);
    CsafParams<S> m;
    m.fc1_w = make_param(prefix + ".mlp1.weight", {hidden, channels, 1, 1});
    m.fc1_b = make_param(prefix + ".mlp1.bias", {1, hidden, 1, 1});
    m.fc2_w = make_param(prefix + ".mlp2.weight", {channels, hidden, 1, 1});
    m.fc2_b = make_param(prefix + ".mlp2.bias", {1, channels, 1, 1});
    m.spatial = make_conv(prefix + ".spatial", 2, 1, cfg_.spatial_attention_kernel);
    return m;
  }

  Var<S> apply_conv(const ConvParams<S>& cl, const Var<S>& x, ForwardTrace<S>* tr) {
    return conv_traced(cl, x, tr);
  }

  Var<S> apply_cbr(const Cbr& m, const Var<S>& x, ForwardTrace<S>* tr) {
    return relu(batchnorm(conv_traced(m.conv, x, tr), *m.bn, mode_));
  }

  Var<S> apply_msblock(const MsBlock& blk, const Var<S>& x_m, ForwardTrace<S>* tr) {
    Var<S> x_t = apply_cbr(blk.trunk, x_m, tr);
    Var<S> merged;
    if (cfg_.mixed_scale) {
      Var<S> x_e =
          upsample_nearest2x(apply_cbr(blk.encdec, maxpool2x2(x_m), tr));
      merged = apply_cbr(blk.merge, concat_channels(x_t, x_e), tr);
    } else {
      merged = apply_cbr(blk.merge, x_t, tr);
    }
    return add(x_m, apply_cbr(blk.extra, merged, tr));
  }

  Var<S> apply_csaf(const CsafParams<S>& m, const Var<S>& f, ForwardTrace<S>* tr,
                    const std::string& label) {
    return csaf_forward(f, m, cfg_.attention_activation, tr, label);
  }

  void build() {
    use_llf_ = cfg_.variant == Variant::full || cfg_.variant == Variant::hgf_llf;
    use_hgf_ = cfg_.variant != Variant::hlf;
    use_hlf_ = cfg_.variant == Variant::full || cfg_.variant == Variant::hlf;

    const std::int64_t w = cfg_.scaled(cfg_.base_width);
    std::int64_t stream_in = cfg_.input_channels;
    for (int i = 0; i < cfg_.shared_stem_layers; ++i) {
      stem_.push_back(make_cbr("stem." + std::to_string(i),
                               i == 0 ? cfg_.input_channels : w, w));
      stream_in = w;
    }

    if (use_llf_) {
      std::int64_t cin = stream_in;
      for (int i = 0; i < cfg_.llf_depth - cfg_.shared_stem_layers; ++i) {
        llf_.push_back(make_cbr("llf." + std::to_string(i), cin, w));
        cin = w;
      }
    }

    if (use_hgf_) {
      std::int64_t prev = stream_in;
      std::vector<std::int64_t> enc_widths;
      for (int i = 0; i < cfg_.hgf_scales; ++i) {
        const std::int64_t wi = cfg_.scaled(std::int64_t(cfg_.base_width) << i);
        enc_widths.push_back(wi);
        const std::string p = "hgf.enc" + std::to_string(i);
        enc_.push_back({make_cbr(p + ".0", prev, wi), make_cbr(p + ".1", wi, wi)});
        prev = wi;
      }
      for (int j = 0; j < cfg_.hgf_scales; ++j) {
        const std::int64_t skip_w = enc_widths[enc_widths.size() - 1 - j];
        const std::string p = "hgf.dec" + std::to_string(j);
        dec_.push_back({make_cbr(p + ".0", prev + skip_w, skip_w),
                        make_cbr(p + ".1", skip_w, skip_w)});
        prev = skip_w;
      }
      hgf_out_width_ = prev;
    }

    if (use_hlf_) {
      const std::int64_t wh = cfg_.shared_stem_layers > 0 ? w : stream_in;
      hlf_width_ = wh;
      for (int i = 0; i < cfg_.hlf_blocks; ++i) {
        const std::string p = "hlf.block" + std::to_string(i);
        hlf_.push_back(MsBlock{
            make_cbr(p + ".trunk", wh, wh), make_cbr(p + ".down", wh, wh),
            make_cbr(p + ".merge", cfg_.mixed_scale ? 2 * wh : wh, wh),
            make_cbr(p + ".out", wh, wh)});
      }
    }

    std::int64_t head_in = 0;
    if (cfg_.variant == Variant::hgf) {
      head_in = hgf_out_width_;
    } else if (cfg_.variant == Variant::hlf) {
      head_in = hlf_width_;
    } else {
      eq7_ = make_cbr("fuse.hires", hgf_out_width_ + w, w);
      if (cfg_.variant == Variant::hgf_llf) {
        head_in = w;
      } else {
        switch (cfg_.fusion_mode) {
          case FusionMode::csaf:
            csaf_.push_back(make_csaf("fuse.csaf0", w));
            csaf_.push_back(make_csaf("fuse.csaf1", hlf_width_));
            csaf_.push_back(make_csaf("fuse.csaf2", w + hlf_width_));
            head_in = w + hlf_width_;
            break;
          case FusionMode::add:
            add_proj_ = make_conv("fuse.proj", hlf_width_, w, 1);
            head_in = w;
            break;
          case FusionMode::concat:
            head_in = w + hlf_width_;
            break;
          case FusionMode::se: {
            const std::int64_t c = w + hlf_width_;
            const std::int64_t hidden =
                std::max<std::int64_t>(4, c / cfg_.channel_attention_reduction);
            se_fc1_w_ = make_param("fuse.se.fc1.weight", {hidden, c, 1, 1});
            se_fc1_b_ = make_param("fuse.se.fc1.bias", {1, hidden, 1, 1});
            se_fc2_w_ = make_param("fuse.se.fc2.weight", {c, hidden, 1, 1});
            se_fc2_b_ = make_param("fuse.se.fc2.bias", {1, c, 1, 1});
            head_in = c;
            break;
          }
        }
      }
    }
    head_ = make_conv("head", head_in, 1, 3);
  }

  NetworkConfig cfg_;
  Mode mode_ = Mode::train;

  std::deque<Parameter<S>> params_;
  std::deque<BatchNorm<S>> bns_;
  std::vector<Parameter<S>*> param_list_;
  std::vector<BatchNorm<S>*> bn_list_;
  std::unordered_map<std::string, Parameter<S>*> by_name_;

  bool use_llf_ = false, use_hgf_ = false, use_hlf_ = false;
  std::int64_t hgf_out_width_ = 0, hlf_width_ = 0;

  std::vector<Cbr> stem_, llf_;
  std::vector<EncStage> enc_;
  std::vector<DecStage> dec_;
  std::vector<MsBlock> hlf_;
  std::optional<Cbr> eq7_;
  std::vector<CsafParams<S>> csaf_;
  std::optional<ConvParams<S>> add_proj_;
  Parameter<S>*se_fc1_w_ = nullptr, *se_fc1_b_ = nullptr;
  Parameter<S>*se_fc2_w_ = nullptr, *se_fc2_b_ = nullptr;
  ConvParams<S> head_;
};

/// Parameter count implied by a config, written as closed-form sums over
/// the architecture rather than by walking a built network.
inline std::int64_t expected_parameter_count(const NetworkConfig& cfg) {
  cfg.validate();
  auto conv = [](std::int64_t cin, std::int64_t cout, std::int64_t k) {
    return cout * cin * k * k + cout;
  };
  auto cbr = [&](std::int64_t cin, std::int64_t cout) {
    return conv(cin, cout, 3) + 2 * cout;
  };
  auto csaf = [&](std::int64_t c) {
    const std::int64_t hidden =
        std::max<std::int64_t>(4, c / cfg.channel_attention_reduction);
    return hidden * c + hidden + c * hidden + c +
           conv(2, 1, cfg.spatial_attention_kernel);
  };

  const bool use_llf = cfg.variant == Variant::full || cfg.variant == Variant::hgf_llf;
  const bool use_hgf = cfg.variant != Variant::hlf;
  const bool use_hlf = cfg.variant == Variant::full || cfg.variant == Variant::hlf;

  const std::int64_t w = cfg.scaled(cfg.base_width);
  std::int64_t total = 0;
  std::int64_t stream_in = cfg.input_channels;
  for (int i = 0; i < cfg.shared_stem_layers; ++i) {
    total += cbr(i == 0 ? cfg.input_channels : w, w);
    stream_in = w;
  }
  if (use_llf) {
    std::int64_t cin = stream_in;
    for (int i = 0; i < cfg.llf_depth - cfg.shared_stem_layers; ++i) {
      total += cbr(cin, w);
      cin = w;
    }
  }
  if (use_hgf) {
    std::int64_t prev = stream_in;
    std::vector<std::int64_t> widths;
    for (int i = 0; i < cfg.hgf_scales; ++i) {
      const std::int64_t wi = cfg.scaled(std::int64_t(cfg.base_width) << i);
      widths.push_back(wi);
      total += cbr(prev, wi) + cbr(wi, wi);
      prev = wi;
    }
    for (int j = 0; j < cfg.hgf_scales; ++j) {
      const std::int64_t skip_w = widths[widths.size() - 1 - j];
      total += cbr(prev + skip_w, skip_w) + cbr(skip_w, skip_w);
      prev = skip_w;
    }
  }
  const std::int64_t wh = cfg.shared_stem_layers > 0 ? w : stream_in;
  if (use_hlf)
    total += cfg.hlf_blocks *
             (cbr(wh, wh) + cbr(wh, wh) + cbr(cfg.mixed_scale ? 2 * wh : wh, wh) +
              cbr(wh, wh));

  std::int64_t head_in = 0;
  if (cfg.variant == Variant::hgf) {
    head_in = w;
  } else if (cfg.variant == Variant::hlf) {
    head_in = wh;
  } else {
    total += cbr(w + w, w);
    if (cfg.variant == Variant::hgf_llf) {
      head_in = w;
    } else {
      switch (cfg.fusion_mode) {
        case FusionMode::csaf:
          total += csaf(w) + csaf(wh) + csaf(w + wh);
          head_in = w + wh;
          break;
        case FusionMode::add:
          total += conv(wh, w, 1);
          head_in = w;
          break;
        case FusionMode::concat:
          head_in = w + wh;
          break;
        case FusionMode::se: {
          const std::int64_t c = w + wh;
          const std::int64_t hidden =
              std::max<std::int64_t>(4, c / cfg.channel_attention_reduction);
          total += hidden * c + hidden + c * hidden + c;
          head_in = c;
          break;
        }
      }
    }
  }
  total += conv(head_in, 1, 3);
  return total;
}

}  // namespace glf
