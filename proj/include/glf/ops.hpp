#pragma once

#include <algorithm>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "glf/autograd.hpp"
#include "glf/tensor.hpp"

namespace glf {

enum class Mode { train, eval };
enum class PoolKind { avg, max };

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapRM = Eigen::Map<MatRM<S>>;
template <typename S>
using CMapRM = Eigen::Map<const MatRM<S>>;

namespace detail {

/// Unfold one (C,H,W) plane into a (C*k*k) x (H*W) row-major patch matrix,
/// zero padding by (k-1)/2 so the output grid matches the input grid.
template <typename S>
void im2col(const S* x, std::int64_t C, std::int64_t H, std::int64_t W, int k, S* col) {
  const int pad = (k - 1) / 2;
  const std::int64_t P = H * W;
  for (std::int64_t c = 0; c < C; ++c) {
    const S* plane = x + c * P;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        S* row = col + (((c * k) + ki) * k + kj) * P;
        const std::int64_t dy = ki - pad, dx = kj - pad;
        for (std::int64_t y = 0; y < H; ++y) {
          S* out = row + y * W;
          const std::int64_t iy = y + dy;
          if (iy < 0 || iy >= H) {
            std::fill(out, out + W, S(0));
            continue;
          }
          const std::int64_t x0 = std::max<std::int64_t>(0, -dx);
          const std::int64_t x1 = std::min<std::int64_t>(W, W - dx);
          std::fill(out, out + x0, S(0));
          std::memcpy(out + x0, plane + iy * W + x0 + dx,
                      static_cast<std::size_t>(x1 - x0) * sizeof(S));
          std::fill(out + x1, out + W, S(0));
        }
      }
    }
  }
}

/// Fold a patch-matrix gradient back onto the (C,H,W) plane, accumulating
/// overlapping contributions.
template <typename S>
void col2im_acc(const S* col, std::int64_t C, std::int64_t H, std::int64_t W, int k, S* dx) {
  const int pad = (k - 1) / 2;
  const std::int64_t P = H * W;
  for (std::int64_t c = 0; c < C; ++c) {
    S* plane = dx + c * P;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const S* row = col + (((c * k) + ki) * k + kj) * P;
        const std::int64_t dy = ki - pad, dx_off = kj - pad;
        for (std::int64_t y = 0; y < H; ++y) {
          const std::int64_t iy = y + dy;
          if (iy < 0 || iy >= H) continue;
          const std::int64_t x0 = std::max<std::int64_t>(0, -dx_off);
          const std::int64_t x1 = std::min<std::int64_t>(W, W - dx_off);
          const S* src = row + y * W;
          S* dst = plane + iy * W + dx_off;
          for (std::int64_t x = x0; x < x1; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

}  // namespace detail

/// Same-size 2-D cross-correlation, stride 1, zero padding (k-1)/2.
/// weight is (C_out, C_in, k, k); bias is (1, C_out, 1, 1).
template <typename S>
Var<S> conv2d(const Var<S>& x, Parameter<S>& weight, Parameter<S>& bias, int k) {
  if (k < 1 || k % 2 == 0)
    throw ConfigError("conv2d: kernel size must be odd, got " + std::to_string(k));
  const Dims4 xd = x.dims();
  const Dims4 wd = weight.value.dims();
  if (wd.h != k || wd.w != k)
    throw ConfigError("conv2d: weight dims " + wd.str() + " do not match kernel " +
                      std::to_string(k));
  if (wd.c != xd.c)
    throw ConfigError("conv2d: weight expects " + std::to_string(wd.c) +
                      " input channels, input has " + std::to_string(xd.c));
  const std::int64_t C_out = wd.n;
  if (bias.value.dims() != Dims4{1, C_out, 1, 1})
    throw ConfigError("conv2d: bias dims " + bias.value.dims().str());

  const std::int64_t C = xd.c, H = xd.h, W = xd.w, P = H * W;
  const std::int64_t R = C * k * k;
  Tensor<S> out({xd.n, C_out, H, W});
  CMapRM<S> w_map(weight.value.data(), C_out, R);
  MatRM<S> col;
  if (k > 1) col.resize(R, P);
  for (std::int64_t n = 0; n < xd.n; ++n) {
    MapRM<S> out_n(out.plane(n, 0), C_out, P);
    if (k == 1) {
      CMapRM<S> x_n(x.value().plane(n, 0), C, P);
      out_n.noalias() = w_map * x_n;
    } else {
      detail::im2col(x.value().plane(n, 0), C, H, W, k, col.data());
      out_n.noalias() = w_map * col;
    }
    for (std::int64_t c = 0; c < C_out; ++c)
      out_n.row(c).array() += bias.value.data()[c];
  }

  Parameter<S>* wp = &weight;
  Parameter<S>* bp = &bias;
  auto backward = [wp, bp, k, C, H, W, P, R, C_out](Node<S>& node) {
    Node<S>& xn = *node.inputs[0];
    xn.ensure_grad();
    CMapRM<S> w_map(wp->value.data(), C_out, R);
    MapRM<S> dw_map(wp->grad.data(), C_out, R);
    MatRM<S> col, colgrad;
    if (k > 1) {
      col.resize(R, P);
      colgrad.resize(R, P);
    }
    for (std::int64_t n = 0; n < node.value.dims().n; ++n) {
      CMapRM<S> dy_n(node.grad.plane(n, 0), C_out, P);
      for (std::int64_t c = 0; c < C_out; ++c)
        bp->grad.data()[c] += dy_n.row(c).sum();
      if (k == 1) {
        CMapRM<S> x_n(xn.value.plane(n, 0), C, P);
        dw_map.noalias() += dy_n * x_n.transpose();
        MapRM<S> dx_n(xn.grad.plane(n, 0), C, P);
        dx_n.noalias() += w_map.transpose() * dy_n;
      } else {
        detail::im2col(xn.value.plane(n, 0), C, H, W, k, col.data());
        dw_map.noalias() += dy_n * col.transpose();
        colgrad.noalias() = w_map.transpose() * dy_n;
        detail::col2im_acc(colgrad.data(), C, H, W, k, xn.grad.plane(n, 0));
      }
    }
  };
  return make_op_node<S>(OpKind::conv2d, std::move(out), {x.node()}, std::move(backward));
}

/// Per-channel normalization state: affine parameters plus running moments.
template <typename S>
struct BatchNorm {
  Parameter<S> gamma, beta;
  Tensor<S> running_mean, running_var;
  S momentum = S(0.1);
  S eps = S(1e-5);
  std::string name;

  BatchNorm(std::string n, std::int64_t channels)
      : gamma(n + ".gamma", {1, channels, 1, 1}),
        beta(n + ".beta", {1, channels, 1, 1}),
        running_mean({1, channels, 1, 1}),
        running_var({1, channels, 1, 1}),
        name(std::move(n)) {
    gamma.value.array().setOnes();
    running_var.array().setOnes();
  }

  std::int64_t channels() const { return gamma.value.dims().c; }
};

template <typename S>
Var<S> batchnorm(const Var<S>& x, BatchNorm<S>& bn, Mode mode) {
  const Dims4 xd = x.dims();
  const std::int64_t C = xd.c;
  if (C != bn.channels())
    throw ConfigError("batchnorm: " + std::to_string(bn.channels()) +
                      "-channel instance applied to " + std::to_string(C) + " channels");
  const std::int64_t P = xd.h * xd.w;
  const std::int64_t m = xd.n * P;

  auto mean_var = std::make_shared<std::vector<S>>();  // invstd per channel
  auto xhat = std::make_shared<Tensor<S>>(xd);
  Tensor<S> out(xd);

  if (mode == Mode::train && m < 2)
    throw ShapeError("batchnorm: train mode needs N*H*W >= 2 per channel, got " +
                     std::to_string(m));

  mean_var->resize(static_cast<std::size_t>(C));
  for (std::int64_t c = 0; c < C; ++c) {
    S mu, var;
    if (mode == Mode::train) {
      S sum = 0;
      for (std::int64_t n = 0; n < xd.n; ++n) {
        Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> p(x.value().plane(n, c), P);
        sum += p.sum();
      }
      mu = sum / S(m);
      S sq = 0;
      for (std::int64_t n = 0; n < xd.n; ++n) {
        Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> p(x.value().plane(n, c), P);
        sq += (p - mu).square().sum();
      }
      var = sq / S(m);
      bn.running_mean.data()[c] =
          (S(1) - bn.momentum) * bn.running_mean.data()[c] + bn.momentum * mu;
      const S unbiased = m > 1 ? var * S(m) / S(m - 1) : var;
      bn.running_var.data()[c] =
          (S(1) - bn.momentum) * bn.running_var.data()[c] + bn.momentum * unbiased;
    } else {
      mu = bn.running_mean.data()[c];
      var = bn.running_var.data()[c];
    }
    const S invstd = S(1) / std::sqrt(var + bn.eps);
    (*mean_var)[static_cast<std::size_t>(c)] = invstd;
    const S g = bn.gamma.value.data()[c];
    const S b = bn.beta.value.data()[c];
    for (std::int64_t n = 0; n < xd.n; ++n) {
      Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> p(x.value().plane(n, c), P);
      Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> xh(xhat->plane(n, c), P);
      Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> o(out.plane(n, c), P);
      xh = (p - mu) * invstd;
      o = g * xh + b;
    }
  }

  BatchNorm<S>* bnp = &bn;
  auto backward = [bnp, mode, C, P, m, mean_var, xhat](Node<S>& node) {
    Node<S>& xn = *node.inputs[0];
    xn.ensure_grad();
    const Dims4 xd = node.value.dims();
    for (std::int64_t c = 0; c < C; ++c) {
      const S invstd = (*mean_var)[static_cast<std::size_t>(c)];
      const S g = bnp->gamma.value.data()[c];
      S sum_dy = 0, sum_dy_xhat = 0;
      for (std::int64_t n = 0; n < xd.n; ++n) {
        Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> dy(node.grad.plane(n, c), P);
        Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> xh(xhat->plane(n, c), P);
        sum_dy += dy.sum();
        sum_dy_xhat += (dy * xh).sum();
      }
      bnp->beta.grad.data()[c] += sum_dy;
      bnp->gamma.grad.data()[c] += sum_dy_xhat;
      for (std::int64_t n = 0; n < xd.n; ++n) {
        Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> dy(node.grad.plane(n, c), P);
        Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> xh(xhat->plane(n, c), P);
        Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> dx(xn.grad.plane(n, c), P);
        if (mode == Mode::train) {
          dx += (g * invstd / S(m)) * (S(m) * dy - sum_dy - xh * sum_dy_xhat);
        } else {
          dx += g * invstd * dy;
        }
      }
    }
  };
  return make_op_node<S>(OpKind::batchnorm, std::move(out), {x.node()}, std::move(backward));
}

template <typename S>
Var<S> relu(const Var<S>& x) {
  Tensor<S> out(x.dims());
  out.array() = x.value().array().max(S(0));
  auto backward = [](Node<S>& node) {
    Node<S>& xn = *node.inputs[0];
    xn.ensure_grad();
    xn.grad.array() +=
        node.grad.array() * (xn.value.array() > S(0)).template cast<S>();
  };
  return make_op_node<S>(OpKind::relu, std::move(out), {x.node()}, backward);
}

template <typename S>
Var<S> tanh(const Var<S>& x) {
  Tensor<S> out(x.dims());
  out.array() = x.value().array().tanh();
  auto backward = [](Node<S>& node) {
    Node<S>& xn = *node.inputs[0];
    xn.ensure_grad();
    xn.grad.array() += node.grad.array() * (S(1) - node.value.array().square());
  };
  return make_op_node<S>(OpKind::tanh_fn, std::move(out), {x.node()}, backward);
}

template <typename S>
Var<S> sigmoid(const Var<S>& x) {
  Tensor<S> out(x.dims());
  out.array() = S(1) / (S(1) + (-x.value().array()).exp());
  auto backward = [](Node<S>& node) {
    Node<S>& xn = *node.inputs[0];
    xn.ensure_grad();
    xn.grad.array() +=
        node.grad.array() * node.value.array() * (S(1) - node.value.array());
  };
  return make_op_node<S>(OpKind::sigmoid_fn, std::move(out), {x.node()}, backward);
}

/// 2x2 max pooling, stride 2. Ties go to the first window position in
/// row-major order so the backward routing is deterministic.
template <typename S>
Var<S> maxpool2x2(const Var<S>& x) {
  const Dims4 xd = x.dims();
  if (xd.h % 2 != 0 || xd.w % 2 != 0)
    throw ShapeError("maxpool2x2: input H and W must be even, got " + xd.str());
  const Dims4 od{xd.n, xd.c, xd.h / 2, xd.w / 2};
  Tensor<S> out(od);
  auto argmax = std::make_shared<std::vector<std::uint8_t>>(
      static_cast<std::size_t>(od.count()));
  std::int64_t oi = 0;
  for (std::int64_t n = 0; n < xd.n; ++n)
    for (std::int64_t c = 0; c < xd.c; ++c) {
      const S* plane = x.value().plane(n, c);
      for (std::int64_t y = 0; y < od.h; ++y)
        for (std::int64_t xo = 0; xo < od.w; ++xo, ++oi) {
          const S* w0 = plane + (2 * y) * xd.w + 2 * xo;
          const S cand[4] = {w0[0], w0[1], w0[xd.w], w0[xd.w + 1]};
          int best = 0;
          for (int i = 1; i < 4; ++i)
            if (cand[i] > cand[best]) best = i;
          out.data()[oi] = cand[best];
          (*argmax)[static_cast<std::size_t>(oi)] = static_cast<std::uint8_t>(best);
        }
    }
  auto backward = [argmax](Node<S>& node) {
    Node<S>& xn = *node.inputs[0];
    xn.ensure_grad();
    const Dims4 od = node.value.dims();
    const Dims4 xd = xn.value.dims();
    std::int64_t oi = 0;
    for (std::int64_t n = 0; n < od.n; ++n)
      for (std::int64_t c = 0; c < od.c; ++c) {
        S* dplane = xn.grad.plane(n, c);
        for (std::int64_t y = 0; y < od.h; ++y)
          for (std::int64_t xo = 0; xo < od.w; ++xo, ++oi) {
            const int best = (*argmax)[static_cast<std::size_t>(oi)];
            const std::int64_t iy = 2 * y + best / 2;
            const std::int64_t ix = 2 * xo + best % 2;
            dplane[iy * xd.w + ix] += node.grad.data()[oi];
          }
      }
  };
  return make_op_node<S>(OpKind::maxpool2x2, std::move(out), {x.node()},
                         std::move(backward));
}

/// Nearest-neighbour 2x upsampling; backward is 2x2 sum pooling.
template <typename S>
Var<S> upsample_nearest2x(const Var<S>& x) {
  const Dims4 xd = x.dims();
  const Dims4 od{xd.n, xd.c, xd.h * 2, xd.w * 2};
  Tensor<S> out(od);
  for (std::int64_t n = 0; n < xd.n; ++n)
    for (std::int64_t c = 0; c < xd.c; ++c) {
      const S* src = x.value().plane(n, c);
      S* dst = out.plane(n, c);
      for (std::int64_t y = 0; y < xd.h; ++y)
        for (std::int64_t xi = 0; xi < xd.w; ++xi) {
          const S v = src[y * xd.w + xi];
          S* d = dst + (2 * y) * od.w + 2 * xi;
          d[0] = v;
          d[1] = v;
          d[od.w] = v;
          d[od.w + 1] = v;
        }
    }
  auto backward = [](Node<S>& node) {
    Node<S>& xn = *node.inputs[0];
    xn.ensure_grad();
    const Dims4 xd = xn.value.dims();
    const Dims4 od = node.value.dims();
    for (std::int64_t n = 0; n < xd.n; ++n)
      for (std::int64_t c = 0; c < xd.c; ++c) {
        const S* g = node.grad.plane(n, c);
        S* dx = xn.grad.plane(n, c);
        for (std::int64_t y = 0; y < xd.h; ++y)
          for (std::int64_t xi = 0; xi < xd.w; ++xi) {
            const S* gw = g + (2 * y) * od.w + 2 * xi;
            dx[y * xd.w + xi] += gw[0] + gw[1] + gw[od.w] + gw[od.w + 1];
          }
      }
  };
  return make_op_node<S>(OpKind::upsample2x, std::move(out), {x.node()}, backward);
}

template <typename S>
Var<S> concat_channels(const Var<S>& a, const Var<S>& b) {
  const Dims4 ad = a.dims(), bd = b.dims();
  if (ad.n != bd.n || ad.h != bd.h || ad.w != bd.w)
    throw ShapeError("concat_channels: mismatched dims " + ad.str() + " vs " + bd.str());
  const Dims4 od{ad.n, ad.c + bd.c, ad.h, ad.w};
  Tensor<S> out(od);
  const std::int64_t P = ad.h * ad.w;
  for (std::int64_t n = 0; n < ad.n; ++n) {
    std::memcpy(out.plane(n, 0), a.value().plane(n, 0),
                static_cast<std::size_t>(ad.c * P) * sizeof(S));
    std::memcpy(out.plane(n, ad.c), b.value().plane(n, 0),
                static_cast<std::size_t>(bd.c * P) * sizeof(S));
  }
  auto backward = [P](Node<S>& node) {
    Node<S>& an = *node.inputs[0];
    Node<S>& bn = *node.inputs[1];
    an.ensure_grad();
    bn.ensure_grad();
    const std::int64_t ca = an.value.dims().c, cb = bn.value.dims().c;
    for (std::int64_t n = 0; n < node.value.dims().n; ++n) {
      Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(an.grad.plane(n, 0), ca * P) +=
          Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(node.grad.plane(n, 0),
                                                               ca * P);
      Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(bn.grad.plane(n, 0), cb * P) +=
          Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(node.grad.plane(n, ca),
                                                               cb * P);
    }
  };
  return make_op_node<S>(OpKind::concat, std::move(out), {a.node(), b.node()}, backward);
}

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  if (a.dims() != b.dims())
    throw ShapeError("add: mismatched dims " + a.dims().str() + " vs " + b.dims().str());
  Tensor<S> out(a.dims());
  out.array() = a.value().array() + b.value().array();
  auto backward = [](Node<S>& node) {
    for (auto& in : node.inputs) {
      in->ensure_grad();
      in->grad.array() += node.grad.array();
    }
  };
  return make_op_node<S>(OpKind::add, std::move(out), {a.node(), b.node()}, backward);
}

/// Elementwise product where b may be a per-channel (N,C,1,1) or
/// per-position (N,1,H,W) scale, or share a's dims exactly.
template <typename S>
Var<S> mul_broadcast(const Var<S>& a, const Var<S>& b) {
  const Dims4 ad = a.dims(), bd = b.dims();
  enum class Kind { same, per_channel, per_position } kind;
  if (bd == ad)
    kind = Kind::same;
  else if (bd == Dims4{ad.n, ad.c, 1, 1})
    kind = Kind::per_channel;
  else if (bd == Dims4{ad.n, 1, ad.h, ad.w})
    kind = Kind::per_position;
  else
    throw ShapeError("mul_broadcast: incompatible dims " + ad.str() + " vs " + bd.str());

  const std::int64_t P = ad.h * ad.w;
  Tensor<S> out(ad);
  for (std::int64_t n = 0; n < ad.n; ++n)
    for (std::int64_t c = 0; c < ad.c; ++c) {
      Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> ap(a.value().plane(n, c), P);
      Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> op(out.plane(n, c), P);
      switch (kind) {
        case Kind::same: {
          Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> bp(b.value().plane(n, c), P);
          op = ap * bp;
          break;
        }
        case Kind::per_channel:
          op = ap * b.value()(n, c, 0, 0);
          break;
        case Kind::per_position: {
          Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> bp(b.value().plane(n, 0), P);
          op = ap * bp;
          break;
        }
      }
    }
  auto backward = [kind, P](Node<S>& node) {
    Node<S>& an = *node.inputs[0];
    Node<S>& bn = *node.inputs[1];
    an.ensure_grad();
    bn.ensure_grad();
    const Dims4 ad = an.value.dims();
    for (std::int64_t n = 0; n < ad.n; ++n)
      for (std::int64_t c = 0; c < ad.c; ++c) {
        Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> g(node.grad.plane(n, c), P);
        Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> ap(an.value.plane(n, c), P);
        Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> da(an.grad.plane(n, c), P);
        switch (kind) {
          case Kind::same: {
            Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> bp(bn.value.plane(n, c), P);
            Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> db(bn.grad.plane(n, c), P);
            da += g * bp;
            db += g * ap;
            break;
          }
          case Kind::per_channel:
            da += g * bn.value(n, c, 0, 0);
            bn.grad(n, c, 0, 0) += (g * ap).sum();
            break;
          case Kind::per_position: {
            Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> bp(bn.value.plane(n, 0), P);
            Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> db(bn.grad.plane(n, 0), P);
            da += g * bp;
            db += g * ap;
            break;
          }
        }
      }
  };
  return make_op_node<S>(OpKind::mul_broadcast, std::move(out), {a.node(), b.node()},
                         std::move(backward));
}

/// Per-channel average or maximum over all spatial positions -> (N,C,1,1).
template <typename S>
Var<S> global_pool_spatial(const Var<S>& x, PoolKind kind) {
  const Dims4 xd = x.dims();
  const std::int64_t P = xd.h * xd.w;
  Tensor<S> out({xd.n, xd.c, 1, 1});
  auto argmax = std::make_shared<std::vector<std::int64_t>>();
  if (kind == PoolKind::max) argmax->resize(static_cast<std::size_t>(xd.n * xd.c));
  for (std::int64_t n = 0; n < xd.n; ++n)
    for (std::int64_t c = 0; c < xd.c; ++c) {
      Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> p(x.value().plane(n, c), P);
      if (kind == PoolKind::avg) {
        out(n, c, 0, 0) = p.mean();
      } else {
        Eigen::Index idx = 0;
        out(n, c, 0, 0) = p.maxCoeff(&idx);
        (*argmax)[static_cast<std::size_t>(n * xd.c + c)] = idx;
      }
    }
  auto backward = [kind, argmax, P](Node<S>& node) {
    Node<S>& xn = *node.inputs[0];
    xn.ensure_grad();
    const Dims4 xd = xn.value.dims();
    for (std::int64_t n = 0; n < xd.n; ++n)
      for (std::int64_t c = 0; c < xd.c; ++c) {
        const S g = node.grad(n, c, 0, 0);
        S* dx = xn.grad.plane(n, c);
        if (kind == PoolKind::avg) {
          Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(dx, P) += g / S(P);
        } else {
          dx[(*argmax)[static_cast<std::size_t>(n * xd.c + c)]] += g;
        }
      }
  };
  return make_op_node<S>(OpKind::global_pool, std::move(out), {x.node()},
                         std::move(backward));
}

/// Per-position average or maximum across channels -> (N,1,H,W).
template <typename S>
Var<S> pool_over_channels(const Var<S>& x, PoolKind kind) {
  const Dims4 xd = x.dims();
  const std::int64_t P = xd.h * xd.w;
  Tensor<S> out({xd.n, 1, xd.h, xd.w});
  auto argmax = std::make_shared<std::vector<std::int32_t>>();
  if (kind == PoolKind::max) argmax->resize(static_cast<std::size_t>(xd.n * P));
  for (std::int64_t n = 0; n < xd.n; ++n) {
    S* o = out.plane(n, 0);
    if (kind == PoolKind::avg) {
      Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> om(o, P);
      om.setZero();
      for (std::int64_t c = 0; c < xd.c; ++c)
        om += Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(x.value().plane(n, c), P);
      om /= S(xd.c);
    } else {
      for (std::int64_t i = 0; i < P; ++i) {
        S best = x.value().plane(n, 0)[i];
        std::int32_t bc = 0;
        for (std::int64_t c = 1; c < xd.c; ++c) {
          const S v = x.value().plane(n, c)[i];
          if (v > best) {
            best = v;
            bc = static_cast<std::int32_t>(c);
          }
        }
        o[i] = best;
        (*argmax)[static_cast<std::size_t>(n * P + i)] = bc;
      }
    }
  }
  auto backward = [kind, argmax, P](Node<S>& node) {
    Node<S>& xn = *node.inputs[0];
    xn.ensure_grad();
    const Dims4 xd = xn.value.dims();
    for (std::int64_t n = 0; n < xd.n; ++n) {
      Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> g(node.grad.plane(n, 0), P);
      if (kind == PoolKind::avg) {
        for (std::int64_t c = 0; c < xd.c; ++c)
          Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(xn.grad.plane(n, c), P) +=
              g / S(xd.c);
      } else {
        for (std::int64_t i = 0; i < P; ++i)
          xn.grad.plane(n, (*argmax)[static_cast<std::size_t>(n * P + i)])[i] += g[i];
      }
    }
  };
  return make_op_node<S>(OpKind::channel_pool, std::move(out), {x.node()},
                         std::move(backward));
}

/// Dense affine map on (N,C,1,1) vectors. weight is (C_out, C_in, 1, 1).
template <typename S>
Var<S> fully_connected(const Var<S>& x, Parameter<S>& weight, Parameter<S>& bias) {
  const Dims4 xd = x.dims();
  if (xd.h != 1 || xd.w != 1)
    throw ShapeError("fully_connected: input must be (N,C,1,1), got " + xd.str());
  const Dims4 wd = weight.value.dims();
  if (wd.c != xd.c)
    throw ShapeError("fully_connected: weight expects " + std::to_string(wd.c) +
                     " inputs, got " + std::to_string(xd.c));
  const std::int64_t C_in = xd.c, C_out = wd.n;
  Tensor<S> out({xd.n, C_out, 1, 1});
  CMapRM<S> X(x.value().data(), xd.n, C_in);
  CMapRM<S> W(weight.value.data(), C_out, C_in);
  MapRM<S> Y(out.data(), xd.n, C_out);
  Y.noalias() = X * W.transpose();
  for (std::int64_t c = 0; c < C_out; ++c) Y.col(c).array() += bias.value.data()[c];

  Parameter<S>* wp = &weight;
  Parameter<S>* bp = &bias;
  auto backward = [wp, bp, C_in, C_out](Node<S>& node) {
    Node<S>& xn = *node.inputs[0];
    xn.ensure_grad();
    const std::int64_t N = node.value.dims().n;
    CMapRM<S> dY(node.grad.data(), N, C_out);
    CMapRM<S> X(xn.value.data(), N, C_in);
    CMapRM<S> W(wp->value.data(), C_out, C_in);
    MapRM<S> dX(xn.grad.data(), N, C_in);
    MapRM<S> dW(wp->grad.data(), C_out, C_in);
    dX.noalias() += dY * W;
    dW.noalias() += dY.transpose() * X;
    for (std::int64_t c = 0; c < C_out; ++c) bp->grad.data()[c] += dY.col(c).sum();
  };
  return make_op_node<S>(OpKind::fully_connected, std::move(out), {x.node()},
                         std::move(backward));
}

/// Mean over all elements of the squared difference; scalar (1,1,1,1) output.
template <typename S>
Var<S> mse_loss(const Var<S>& pred, const Tensor<S>& target) {
  if (pred.dims() != target.dims())
    throw ShapeError("mse_loss: mismatched dims " + pred.dims().str() + " vs " +
                     target.dims().str());
  Tensor<S> out({1, 1, 1, 1});
  out.data()[0] = (pred.value().array() - target.array()).square().mean();
  auto tgt = std::make_shared<Tensor<S>>(target);
  auto backward = [tgt](Node<S>& node) {
    Node<S>& pn = *node.inputs[0];
    pn.ensure_grad();
    const S g = node.grad.data()[0];
    const S scale = S(2) / S(pn.value.size());
    pn.grad.array() += g * scale * (pn.value.array() - tgt->array());
  };
  return make_op_node<S>(OpKind::mse, std::move(out), {pred.node()}, std::move(backward));
}

/// Sum of all elements; used to scalarize outputs for gradient checking.
template <typename S>
Var<S> sum_all(const Var<S>& x) {
  Tensor<S> out({1, 1, 1, 1});
  out.data()[0] = x.value().array().sum();
  auto backward = [](Node<S>& node) {
    Node<S>& xn = *node.inputs[0];
    xn.ensure_grad();
    xn.grad.array() += node.grad.data()[0];
  };
  return make_op_node<S>(OpKind::sum, std::move(out), {x.node()}, backward);
}

}  // namespace glf
