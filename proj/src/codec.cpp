#include "glf/codec.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "glf/metrics.hpp"
#include "glf/tensor.hpp"

namespace glf {

double qstep(int qp) {
  if (qp < 0 || qp > 51)
    throw ConfigError("qp " + std::to_string(qp) + " outside [0,51]");
  return std::pow(2.0, (qp - 4) / 6.0);
}

namespace {

// Orthonormal type-II DCT basis, row u: a(u) * cos(pi*(2n+1)*u / (2N)).
Eigen::MatrixXd dct_basis(int n) {
  Eigen::MatrixXd c(n, n);
  const double pi = 3.14159265358979323846;
  for (int u = 0; u < n; ++u) {
    const double a = u == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int i = 0; i < n; ++i)
      c(u, i) = a * std::cos(pi * (2 * i + 1) * u / (2.0 * n));
  }
  return c;
}

const Eigen::MatrixXd& cached_basis(int n) {
  static std::map<int, Eigen::MatrixXd> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, dct_basis(n)).first;
  return it->second;
}

using BlockMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                Eigen::RowMajor>>;
using BlockMapMut =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace

void dct2d(const double* block, double* coefs, int n) {
  const Eigen::MatrixXd& c = cached_basis(n);
  BlockMap x(block, n, n);
  BlockMapMut y(coefs, n, n);
  y = c * x * c.transpose();
}

void idct2d(const double* coefs, double* block, int n) {
  const Eigen::MatrixXd& c = cached_basis(n);
  BlockMap y(coefs, n, n);
  BlockMapMut x(block, n, n);
  x = c.transpose() * y * c;
}

std::vector<int> quantize(const std::vector<double>& coefs, int qp) {
  const double q = qstep(qp);
  std::vector<int> levels(coefs.size());
  for (std::size_t i = 0; i < coefs.size(); ++i)
    levels[i] = static_cast<int>(std::lround(coefs[i] / q));
  return levels;
}

std::vector<double> dequantize(const std::vector<int>& levels, int qp) {
  const double q = qstep(qp);
  std::vector<double> coefs(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) coefs[i] = levels[i] * q;
  return coefs;
}

CodedFrame encode_frame(const Frame& original, const CodecConfig& config) {
  if (original.width <= 0 || original.height <= 0)
    throw ConfigError("encode_frame: empty frame");
  const int bs = config.block_size;
  if (bs < 2) throw ConfigError("encode_frame: block_size must be >= 2");
  const double q = qstep(config.qp);

  // Pad to a block multiple by edge replication; cropped again after decode.
  const int pw = (original.width + bs - 1) / bs * bs;
  const int ph = (original.height + bs - 1) / bs * bs;
  std::vector<double> src(std::size_t(pw) * ph);
  for (int y = 0; y < ph; ++y) {
    const int sy = std::min(y, original.height - 1);
    for (int x = 0; x < pw; ++x)
      src[std::size_t(y) * pw + x] = original.at(std::min(x, original.width - 1), sy);
  }

  std::vector<std::uint8_t> recon(std::size_t(pw) * ph, 0);
  std::vector<double> block(std::size_t(bs) * bs), coef(std::size_t(bs) * bs);
  std::vector<int> all_levels;
  if (config.rate_model) all_levels.reserve(src.size());

  for (int by = 0; by < ph; by += bs) {
    for (int bx = 0; bx < pw; bx += bs) {
      // DC prediction: mean of the reconstructed pixels bordering the block
      // on the top and left; 128 when no neighbours exist.
      double acc = 0.0;
      int cnt = 0;
      if (by > 0)
        for (int x = bx; x < bx + bs; ++x) {
          acc += recon[std::size_t(by - 1) * pw + x];
          ++cnt;
        }
      if (bx > 0)
        for (int y = by; y < by + bs; ++y) {
          acc += recon[std::size_t(y) * pw + bx - 1];
          ++cnt;
        }
      const double pred = cnt > 0 ? acc / cnt : 128.0;

      for (int y = 0; y < bs; ++y)
        for (int x = 0; x < bs; ++x)
          block[std::size_t(y) * bs + x] = src[std::size_t(by + y) * pw + bx + x] - pred;
      dct2d(block.data(), coef.data(), bs);
      for (auto& c : coef) {
        const int level = static_cast<int>(std::lround(c / q));
        if (config.rate_model) all_levels.push_back(level);
        c = level * q;
      }
      idct2d(coef.data(), block.data(), bs);
      for (int y = 0; y < bs; ++y)
        for (int x = 0; x < bs; ++x) {
          const double v = std::lround(pred + block[std::size_t(y) * bs + x]);
          recon[std::size_t(by + y) * pw + bx + x] =
              static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
    }
  }

  CodedFrame out;
  out.qp = config.qp;
  out.reconstructed = Frame(original.width, original.height);
  double sq = 0.0;
  for (int y = 0; y < original.height; ++y)
    for (int x = 0; x < original.width; ++x) {
      const std::uint8_t r = recon[std::size_t(y) * pw + x];
      out.reconstructed.at(x, y) = r;
      const double d = double(r) - double(original.at(x, y));
      sq += d * d;
    }
  out.mse_vs_original = sq / double(original.pixel_count());

  if (config.rate_model && !all_levels.empty()) {
    // Zero-order entropy of the level stream, in bits.
    std::map<int, std::int64_t> hist;
    for (int l : all_levels) ++hist[l];
    const double total = static_cast<double>(all_levels.size());
    double bits = 0.0;
    for (const auto& [level, count] : hist) {
      const double p = count / total;
      bits += -double(count) * std::log2(p);
    }
    out.rate_bits = bits;
  }
  return out;
}

BoundaryStats block_boundary_stats(const Frame& frame, int block_size) {
  const int bs = block_size;
  if (bs < 6) throw ConfigError("block_boundary_stats: block_size too small");
  double b_sum = 0.0, i_sum = 0.0;
  std::int64_t b_cnt = 0, i_cnt = 0;
  auto tally = [&](int phase, double d2) {
    if (phase == 0 || phase == bs - 1) {
      b_sum += std::abs(d2);
      ++b_cnt;
    } else if (phase >= 2 && phase <= bs - 3) {
      i_sum += std::abs(d2);
      ++i_cnt;
    }
  };
  for (int y = 0; y < frame.height; ++y)
    for (int x = 1; x + 1 < frame.width; ++x)
      tally(x % bs, double(frame.at(x - 1, y)) - 2.0 * frame.at(x, y) + frame.at(x + 1, y));
  for (int x = 0; x < frame.width; ++x)
    for (int y = 1; y + 1 < frame.height; ++y)
      tally(y % bs, double(frame.at(x, y - 1)) - 2.0 * frame.at(x, y) + frame.at(x, y + 1));
  BoundaryStats stats;
  if (b_cnt > 0) stats.boundary = b_sum / double(b_cnt);
  if (i_cnt > 0) stats.interior = i_sum / double(i_cnt);
  return stats;
}

RDCurve make_rd_curve(const Frame& original, const std::vector<int>& qps,
                      const CodecConfig& base) {
  if (qps.size() < 2)
    throw ConfigError("make_rd_curve: need at least 2 QPs, got " +
                      std::to_string(qps.size()));
  if (std::set<int>(qps.begin(), qps.end()).size() != qps.size())
    throw ConfigError("make_rd_curve: duplicate QPs");

  RDCurve curve;
  for (int qp : qps) {
    CodecConfig cfg = base;
    cfg.qp = qp;
    const CodedFrame coded = encode_frame(original, cfg);
    RDPoint p;
    p.rate_bpp = coded.rate_bits / double(original.pixel_count());
    p.psnr_db = psnr(original, coded.reconstructed);
    if (std::isinf(p.psnr_db)) curve.degenerate = true;
    curve.points.push_back(p);
  }
  std::sort(curve.points.begin(), curve.points.end(),
            [](const RDPoint& a, const RDPoint& b) { return a.rate_bpp < b.rate_bpp; });
  return curve;
}

}  // namespace glf
