#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "glf/ops.hpp"
#include "glf/rng.hpp"

namespace glf {

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-5;
  /// Check at most this many elements per target (-1 = all), sampled
  /// deterministically; keeps whole-network checks affordable.
  std::int64_t max_elements_per_target = -1;
  std::uint64_t sample_seed = 0;
  /// Multiplies the fetched analytic gradient; a value != 1 turns the
  /// checker on itself (mutation test).
  double analytic_scale = 1.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::string worst;       // "target[idx]" of the largest error
  std::string diagnostic;  // set when a non-finite value was seen
};

/// Builds a graph from fresh leaf nodes wrapping the harness-owned input
/// tensors; the harness sums the returned Var into the checked scalar.
using GradBuildFn = std::function<Var<double>(std::vector<Var<double>>& leaves)>;

/// Central-difference check of every analytic gradient the build function
/// exposes: leaf inputs and parameters alike. Relative error per element is
/// |a - n| / max(1, |a|, |n|).
inline GradCheckReport check_gradients(const GradBuildFn& build,
                                       std::vector<Tensor<double>*> inputs,
                                       std::vector<Parameter<double>*> params,
                                       const GradCheckOptions& opts = {}) {
  GradCheckReport report;

  auto eval_loss = [&]() {
    std::vector<Var<double>> leaves;
    leaves.reserve(inputs.size());
    for (Tensor<double>* t : inputs) leaves.emplace_back(*t);
    Var<double> out = build(leaves);
    return sum_all(out).value().data()[0];
  };

  // Analytic pass.
  for (Parameter<double>* p : params) p->zero_grad();
  std::vector<Var<double>> leaves;
  leaves.reserve(inputs.size());
  for (Tensor<double>* t : inputs) leaves.emplace_back(*t);
  Var<double> out = build(leaves);
  Var<double> loss = sum_all(out);
  backward(loss);

  struct Target {
    std::string name;
    Tensor<double>* value;
    Tensor<double> analytic;
  };
  std::vector<Target> targets;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor<double> g = leaves[i].grad();
    if (g.size() != inputs[i]->size()) g = Tensor<double>(inputs[i]->dims());
    targets.push_back({"input" + std::to_string(i), inputs[i], std::move(g)});
  }
  for (Parameter<double>* p : params) targets.push_back({p->name, &p->value, p->grad});

  for (auto& t : targets) {
    t.analytic.array() *= opts.analytic_scale;
    if (!t.analytic.all_finite()) {
      report.diagnostic = "non-finite analytic gradient in " + t.name;
      return report;
    }
  }

  Rng sampler(opts.sample_seed);
  for (auto& t : targets) {
    const std::int64_t count = t.value->size();
    std::vector<std::int64_t> indices;
    if (opts.max_elements_per_target >= 0 && count > opts.max_elements_per_target) {
      for (std::int64_t i = 0; i < opts.max_elements_per_target; ++i)
        indices.push_back(sampler.below(count));
    } else {
      indices.resize(static_cast<std::size_t>(count));
      for (std::int64_t i = 0; i < count; ++i) indices[static_cast<std::size_t>(i)] = i;
    }
    for (std::int64_t idx : indices) {
      double* slot = t.value->data() + idx;
      const double saved = *slot;
      *slot = saved + opts.h;
      const double fp = eval_loss();
      *slot = saved - opts.h;
      const double fm = eval_loss();
      *slot = saved;
      const double numeric = (fp - fm) / (2.0 * opts.h);
      if (!std::isfinite(numeric)) {
        report.diagnostic = "non-finite numeric gradient in " + t.name;
        return report;
      }
      const double analytic = t.analytic.data()[idx];
      const double rel = std::abs(analytic - numeric) /
                         std::max({1.0, std::abs(analytic), std::abs(numeric)});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = t.name + "[" + std::to_string(idx) + "]";
      }
    }
  }
  report.pass = report.max_rel_err < opts.tol;
  return report;
}

// --- random test tensors -------------------------------------------------

inline Tensor<double> random_normal(Dims4 dims, Rng& rng, double stddev = 1.0) {
  Tensor<double> t(dims);
  for (std::int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal(0.0, stddev);
  return t;
}

/// Uniform magnitudes in [0.2, 1] with random signs: every element is at
/// least 0.2 away from the ReLU kink.
inline Tensor<double> random_kink_free(Dims4 dims, Rng& rng) {
  Tensor<double> t(dims);
  for (std::int64_t i = 0; i < t.size(); ++i) {
    const double mag = rng.uniform(0.2, 1.0);
    t.data()[i] = (rng.next_u64() & 1) ? mag : -mag;
  }
  return t;
}

/// Random tensor whose 2x2 pooling windows all have pairwise gaps > 1e-3,
/// so +-h perturbations cannot flip an argmax.
inline Tensor<double> random_pool_safe(Dims4 dims, Rng& rng) {
  Tensor<double> t(dims);
  for (std::int64_t n = 0; n < dims.n; ++n)
    for (std::int64_t c = 0; c < dims.c; ++c)
      for (std::int64_t y = 0; y + 1 < dims.h; y += 2)
        for (std::int64_t x = 0; x + 1 < dims.w; x += 2) {
          double v[4];
          for (int tries = 0;; ++tries) {
            for (double& e : v) e = rng.uniform(-1.0, 1.0);
            bool ok = true;
            for (int i = 0; i < 4 && ok; ++i)
              for (int j = i + 1; j < 4; ++j)
                if (std::abs(v[i] - v[j]) < 1e-3) {
                  ok = false;
                  break;
                }
            if (ok || tries > 200) break;
          }
          t(n, c, y, x) = v[0];
          t(n, c, y, x + 1) = v[1];
          t(n, c, y + 1, x) = v[2];
          t(n, c, y + 1, x + 1) = v[3];
        }
  return t;
}

/// Random tensor where, per (n,c) plane, the top two values are > 1e-3
/// apart (safe for global max pooling) and, per (n,h,w) position, the top
/// two channels are > 1e-3 apart (safe for channel max pooling).
inline Tensor<double> random_argmax_safe(Dims4 dims, Rng& rng) {
  for (int tries = 0; tries < 200; ++tries) {
    Tensor<double> t(dims);
    for (std::int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-1.0, 1.0);
    bool ok = true;
    const std::int64_t P = dims.h * dims.w;
    for (std::int64_t n = 0; n < dims.n && ok; ++n) {
      for (std::int64_t c = 0; c < dims.c && ok; ++c) {
        double best = -2, second = -2;
        for (std::int64_t i = 0; i < P; ++i) {
          const double v = t.plane(n, c)[i];
          if (v > best) {
            second = best;
            best = v;
          } else if (v > second) {
            second = v;
          }
        }
        if (P > 1 && best - second < 1e-3) ok = false;
      }
      for (std::int64_t i = 0; i < P && ok; ++i) {
        double best = -2, second = -2;
        for (std::int64_t c = 0; c < dims.c; ++c) {
          const double v = t.plane(n, c)[i];
          if (v > best) {
            second = best;
            best = v;
          } else if (v > second) {
            second = v;
          }
        }
        if (dims.c > 1 && best - second < 1e-3) ok = false;
      }
    }
    if (ok) return t;
  }
  throw std::runtime_error("random_argmax_safe: could not satisfy gap constraint");
}

// --- standard operator suite ---------------------------------------------

struct NamedReport {
  std::string name;
  GradCheckReport report;
};

/// Gradcheck battery covering every differentiable operator, three seeds and
/// two shapes each. Used by the test suite and the `gradcheck` CLI command.
inline std::vector<NamedReport> run_op_gradcheck_suite() {
  std::vector<NamedReport> results;
  const std::uint64_t seeds[3] = {0, 1, 2};

  auto run = [&](const std::string& name, const GradBuildFn& build,
                 std::vector<Tensor<double>*> inputs,
                 std::vector<Parameter<double>*> params) {
    results.push_back({name, check_gradients(build, std::move(inputs), std::move(params))});
  };

  for (std::uint64_t seed : seeds) {
    Rng rng(seed * 7919 + 13);
    const std::string tag = "/seed" + std::to_string(seed);
    const Dims4 shapes[2] = {{1, 2, 4, 4}, {2, 3, 6, 6}};
    for (int si = 0; si < 2; ++si) {
      const Dims4 d = shapes[si];
      const std::string id = tag + "/shape" + std::to_string(si);

      {  // conv2d, kernel per shape: 3 then 7 (k=1 exercised separately)
        const int k = si == 0 ? 3 : 7;
        const std::int64_t co = 3;
        Parameter<double> w("w", {co, d.c, k, k});
        Parameter<double> b("b", {1, co, 1, 1});
        w.value = random_normal(w.value.dims(), rng, 1.0 / std::sqrt(double(d.c * k * k)));
        b.value = random_normal(b.value.dims(), rng, 0.1);
        Tensor<double> x = random_normal(d, rng);
        run("conv2d/k" + std::to_string(k) + id,
            [&w, &b, k](std::vector<Var<double>>& leaves) {
              return conv2d(leaves[0], w, b, k);
            },
            {&x}, {&w, &b});
      }
      {  // conv2d k=1
        Parameter<double> w("w", {2, d.c, 1, 1});
        Parameter<double> b("b", {1, 2, 1, 1});
        w.value = random_normal(w.value.dims(), rng, 0.5);
        b.value = random_normal(b.value.dims(), rng, 0.1);
        Tensor<double> x = random_normal(d, rng);
        run("conv2d/k1" + id,
            [&w, &b](std::vector<Var<double>>& leaves) { return conv2d(leaves[0], w, b, 1); },
            {&x}, {&w, &b});
      }
      for (Mode mode : {Mode::train, Mode::eval}) {  // batchnorm
        BatchNorm<double> bn("bn", d.c);
        for (std::int64_t i = 0; i < d.c; ++i) {
          bn.gamma.value.data()[i] = rng.uniform(0.5, 1.5);
          bn.beta.value.data()[i] = rng.normal(0.0, 0.2);
          bn.running_mean.data()[i] = rng.normal(0.0, 0.3);
          bn.running_var.data()[i] = rng.uniform(0.5, 1.5);
        }
        Tensor<double> x = random_normal(d, rng);
        run(std::string("batchnorm/") + (mode == Mode::train ? "train" : "eval") + id,
            [&bn, mode](std::vector<Var<double>>& leaves) {
              return batchnorm(leaves[0], bn, mode);
            },
            {&x}, {&bn.gamma, &bn.beta});
      }
      {  // relu (kink-free inputs)
        Tensor<double> x = random_kink_free(d, rng);
        run("relu" + id,
            [](std::vector<Var<double>>& leaves) { return relu(leaves[0]); }, {&x}, {});
      }
      {
        Tensor<double> x = random_normal(d, rng);
        run("tanh" + id,
            [](std::vector<Var<double>>& leaves) { return tanh(leaves[0]); }, {&x}, {});
      }
      {
        Tensor<double> x = random_normal(d, rng);
        run("sigmoid" + id,
            [](std::vector<Var<double>>& leaves) { return sigmoid(leaves[0]); }, {&x}, {});
      }
      {
        Tensor<double> x = random_pool_safe(d, rng);
        run("maxpool2x2" + id,
            [](std::vector<Var<double>>& leaves) { return maxpool2x2(leaves[0]); }, {&x},
            {});
      }
      {
        Tensor<double> x = random_normal(d, rng);
        run("upsample_nearest2x" + id,
            [](std::vector<Var<double>>& leaves) { return upsample_nearest2x(leaves[0]); },
            {&x}, {});
      }
      {
        Tensor<double> a = random_normal(d, rng);
        Tensor<double> b = random_normal({d.n, d.c + 2, d.h, d.w}, rng);
        run("concat_channels" + id,
            [](std::vector<Var<double>>& leaves) {
              return concat_channels(leaves[0], leaves[1]);
            },
            {&a, &b}, {});
      }
      {
        Tensor<double> a = random_normal(d, rng);
        Tensor<double> b = random_normal(d, rng);
        run("add" + id,
            [](std::vector<Var<double>>& leaves) { return add(leaves[0], leaves[1]); },
            {&a, &b}, {});
      }
      {
        Tensor<double> a = random_normal(d, rng);
        Tensor<double> s = random_normal({d.n, d.c, 1, 1}, rng);
        run("mul_broadcast/per_channel" + id,
            [](std::vector<Var<double>>& leaves) {
              return mul_broadcast(leaves[0], leaves[1]);
            },
            {&a, &s}, {});
      }
      {
        Tensor<double> a = random_normal(d, rng);
        Tensor<double> s = random_normal({d.n, 1, d.h, d.w}, rng);
        run("mul_broadcast/per_position" + id,
            [](std::vector<Var<double>>& leaves) {
              return mul_broadcast(leaves[0], leaves[1]);
            },
            {&a, &s}, {});
      }
      {
        Tensor<double> a = random_normal(d, rng);
        Tensor<double> b = random_normal(d, rng);
        run("mul_broadcast/same" + id,
            [](std::vector<Var<double>>& leaves) {
              return mul_broadcast(leaves[0], leaves[1]);
            },
            {&a, &b}, {});
      }
      {
        Tensor<double> x = random_normal(d, rng);
        run("global_pool_spatial/avg" + id,
            [](std::vector<Var<double>>& leaves) {
              return global_pool_spatial(leaves[0], PoolKind::avg);
            },
            {&x}, {});
      }
      {
        Tensor<double> x = random_argmax_safe(d, rng);
        run("global_pool_spatial/max" + id,
            [](std::vector<Var<double>>& leaves) {
              return global_pool_spatial(leaves[0], PoolKind::max);
            },
            {&x}, {});
      }
      {
        Tensor<double> x = random_normal(d, rng);
        run("pool_over_channels/avg" + id,
            [](std::vector<Var<double>>& leaves) {
              return pool_over_channels(leaves[0], PoolKind::avg);
            },
            {&x}, {});
      }
      {
        Tensor<double> x = random_argmax_safe(d, rng);
        run("pool_over_channels/max" + id,
            [](std::vector<Var<double>>& leaves) {
              return pool_over_channels(leaves[0], PoolKind::max);
            },
            {&x}, {});
      }
      {  // fully_connected on (N,C,1,1)
        const std::int64_t cin = d.c * 2, cout = 3;
        Parameter<double> w("w", {cout, cin, 1, 1});
        Parameter<double> b("b", {1, cout, 1, 1});
        w.value = random_normal(w.value.dims(), rng, 0.5);
        b.value = random_normal(b.value.dims(), rng, 0.1);
        Tensor<double> x = random_normal({d.n, cin, 1, 1}, rng);
        run("fully_connected" + id,
            [&w, &b](std::vector<Var<double>>& leaves) {
              return fully_connected(leaves[0], w, b);
            },
            {&x}, {&w, &b});
      }
      {
        Tensor<double> p = random_normal(d, rng);
        Tensor<double> t = random_normal(d, rng);
        run("mse_loss" + id,
            [&t](std::vector<Var<double>>& leaves) { return mse_loss(leaves[0], t); },
            {&p}, {});
      }
    }
  }
  return results;
}

}  // namespace glf
