#pragma once

#include <iostream>
#include <string>
#include <vector>

#include "glf/frame.hpp"
#include "glf/manifest.hpp"
#include "glf/network.hpp"
#include "glf/rng.hpp"
#include "glf/tensor.hpp"

namespace glf {

/// A sampled training batch: X holds reconstructed patches scaled to [0,1],
/// T the signed distortion (original - reconstructed) / 255 at the same
/// coordinates.
template <typename S>
struct PatchBatch {
  Tensor<S> x;
  Tensor<S> t;
};

/// Frame pairs preloaded into memory; sampling never touches the disk.
struct PairSet {
  struct Item {
    Frame original;
    Frame recon;
    int qp = 0;
    std::string name;
  };
  std::vector<Item> items;
};

/// Loads every manifest entry (optionally restricted to one QP), checking
/// that both frames parse and agree on dimensions.
inline PairSet load_pairs(const Manifest& m, int qp = -1) {
  PairSet set;
  for (const ManifestEntry& e : m.entries) {
    if (qp >= 0 && e.qp != qp) continue;
    PairSet::Item item;
    item.original = load_pgm(e.original);
    item.recon = load_pgm(e.recon);
    item.qp = e.qp;
    item.name = e.original;
    if (item.original.width != item.recon.width ||
        item.original.height != item.recon.height)
      throw IoError("pair dims differ: " + e.original + " vs " + e.recon);
    set.items.push_back(std::move(item));
  }
  return set;
}

/// Uniformly samples `batch` patches: first an eligible pair, then a random
/// top-left corner. Pairs smaller than the patch are skipped with a warning.
template <typename S>
PatchBatch<S> sample_patches(const PairSet& pairs, int patch, int batch, Rng& rng) {
  std::vector<const PairSet::Item*> eligible;
  for (const auto& item : pairs.items) {
    if (item.original.width >= patch && item.original.height >= patch) {
      eligible.push_back(&item);
    } else {
      std::cerr << "warning: " << item.name << " (" << item.original.width << "x"
                << item.original.height << ") smaller than patch " << patch
                << ", skipping\n";
    }
  }
  if (eligible.empty())
    throw ConfigError("sample_patches: no frame is at least " + std::to_string(patch) +
                      "x" + std::to_string(patch));

  PatchBatch<S> out;
  out.x = Tensor<S>({batch, 1, patch, patch});
  out.t = Tensor<S>({batch, 1, patch, patch});
  const S inv = S(1) / S(255);
  for (int b = 0; b < batch; ++b) {
    const PairSet::Item& item = *eligible[static_cast<std::size_t>(
        rng.below(static_cast<std::int64_t>(eligible.size())))];
    const int x0 = static_cast<int>(rng.below(item.original.width - patch + 1));
    const int y0 = static_cast<int>(rng.below(item.original.height - patch + 1));
    for (int y = 0; y < patch; ++y)
      for (int x = 0; x < patch; ++x) {
        const S rec = S(item.recon.at(x0 + x, y0 + y));
        const S org = S(item.original.at(x0 + x, y0 + y));
        out.x(b, 0, y, x) = rec * inv;
        out.t(b, 0, y, x) = (org - rec) * inv;
      }
  }
  return out;
}

/// Frame -> (1,1,H,W) tensor scaled to [0,1].
template <typename S>
Tensor<S> frame_to_tensor(const Frame& f) {
  Tensor<S> t({1, 1, f.height, f.width});
  const S inv = S(1) / S(255);
  for (std::int64_t i = 0; i < t.size(); ++i)
    t.data()[i] = S(f.pixels[static_cast<std::size_t>(i)]) * inv;
  return t;
}

/// (1,1,H,W) tensor in [0,1] -> frame, rounding and clamping to 8 bits.
template <typename S>
Frame tensor_to_frame(const Tensor<S>& t) {
  const Dims4 d = t.dims();
  if (d.n != 1 || d.c != 1)
    throw ShapeError("tensor_to_frame: expected (1,1,H,W), got " + d.str());
  Frame f(static_cast<int>(d.w), static_cast<int>(d.h));
  for (std::int64_t i = 0; i < t.size(); ++i) {
    const double v = std::lround(double(t.data()[i]) * 255.0);
    f.pixels[static_cast<std::size_t>(i)] =
        static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return f;
}

/// Mirror (symmetric) padding on the right/bottom up to a multiple of
/// `multiple`. Works for any pad size via periodic reflection.
template <typename S>
Tensor<S> pad_to_multiple(const Tensor<S>& x, std::int64_t multiple) {
  const Dims4 d = x.dims();
  const std::int64_t ph = (d.h + multiple - 1) / multiple * multiple;
  const std::int64_t pw = (d.w + multiple - 1) / multiple * multiple;
  if (ph == d.h && pw == d.w) return x;
  auto mirror = [](std::int64_t i, std::int64_t n) {
    const std::int64_t period = 2 * n;
    std::int64_t j = i % period;
    if (j < 0) j += period;
    return j < n ? j : period - 1 - j;
  };
  Tensor<S> out({d.n, d.c, ph, pw});
  for (std::int64_t n = 0; n < d.n; ++n)
    for (std::int64_t c = 0; c < d.c; ++c) {
      const S* src = x.plane(n, c);
      S* dst = out.plane(n, c);
      for (std::int64_t y = 0; y < ph; ++y) {
        const std::int64_t sy = mirror(y, d.h);
        for (std::int64_t xx = 0; xx < pw; ++xx)
          dst[y * pw + xx] = src[sy * d.w + mirror(xx, d.w)];
      }
    }
  return out;
}

template <typename S>
Tensor<S> crop_to(const Tensor<S>& x, std::int64_t h, std::int64_t w) {
  const Dims4 d = x.dims();
  if (h > d.h || w > d.w) throw ShapeError("crop_to: target larger than input");
  if (h == d.h && w == d.w) return x;
  Tensor<S> out({d.n, d.c, h, w});
  for (std::int64_t n = 0; n < d.n; ++n)
    for (std::int64_t c = 0; c < d.c; ++c)
      for (std::int64_t y = 0; y < h; ++y)
        std::copy_n(x.plane(n, c) + y * d.w, w, out.plane(n, c) + y * w);
  return out;
}

/// Whole-frame inference: mirror-pad to the network's required multiple,
/// run an eval-mode forward, crop back, and quantize to 8 bits.
template <typename S>
Frame filter_frame(Network<S>& net, const Frame& input) {
  const Mode saved = net.mode();
  net.set_mode(Mode::eval);
  Tensor<S> x = frame_to_tensor<S>(input);
  Tensor<S> padded = pad_to_multiple(x, net.config().required_multiple());
  auto out = net.forward(padded);
  net.set_mode(saved);
  Tensor<S> y = crop_to(out.y.value(), input.height, input.width);
  return tensor_to_frame(y);
}

}  // namespace glf
