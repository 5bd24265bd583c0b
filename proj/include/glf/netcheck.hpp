#pragma once

#include "glf/gradcheck.hpp"
#include "glf/network.hpp"

namespace glf {

/// Tiny double-precision config for whole-network gradient checking.
inline NetworkConfig tiny_check_config() {
  NetworkConfig cfg;
  cfg.width_mult = 0.0625;  // 4 channels at the stem
  cfg.llf_depth = 3;
  cfg.hlf_blocks = 2;
  cfg.shared_stem_layers = 1;
  return cfg;
}

/// Finite-difference check of d(MSE loss)/d(parameters) on a full network:
/// every parameter tensor is a target, `samples_per_param` elements sampled
/// from each. The input is a target too (leaf gradient).
inline GradCheckReport network_loss_gradcheck(const NetworkConfig& cfg,
                                              std::uint64_t seed,
                                              std::int64_t samples_per_param = 2,
                                              double tol = 1e-4) {
  Network<double> net(cfg);
  Rng rng(seed);
  for (Parameter<double>* p : net.parameters()) {
    const Dims4 d = p->value.dims();
    if (p->name.ends_with(".weight")) {
      const double stddev = std::sqrt(1.0 / double(d.c * d.h * d.w));
      for (std::int64_t i = 0; i < p->value.size(); ++i)
        p->value.data()[i] = rng.normal(0.0, stddev);
    } else if (p->name.ends_with(".gamma")) {
      for (std::int64_t i = 0; i < p->value.size(); ++i)
        p->value.data()[i] = rng.uniform(0.8, 1.2);
    } else {
      for (std::int64_t i = 0; i < p->value.size(); ++i)
        p->value.data()[i] = rng.normal(0.0, 0.05);
    }
  }

  const std::int64_t side = std::max<std::int64_t>(16, net.config().required_multiple());
  Tensor<double> x({2, cfg.input_channels, side, side});
  for (std::int64_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(0.0, 1.0);
  Tensor<double> target({2, 1, side, side});
  for (std::int64_t i = 0; i < target.size(); ++i)
    target.data()[i] = rng.normal(0.0, 0.05);

  net.set_mode(Mode::train);
  GradCheckOptions opts;
  opts.tol = tol;
  opts.max_elements_per_target = samples_per_param;
  opts.sample_seed = seed;
  return check_gradients(
      [&](std::vector<Var<double>>& leaves) {
        auto out = net.forward(leaves[0]);
        return mse_loss(out.r, target);
      },
      {&x}, net.parameters(), opts);
}

}  // namespace glf
