#pragma once

#include <vector>

#include "glf/frame.hpp"

namespace glf {

/// Block-transform codec settings standing in for a real encoder: DC intra
/// prediction, block DCT, uniform quantization, no deblocking/SAO.
struct CodecConfig {
  int block_size = 8;
  int qp = 32;               // [0, 51]
  bool rate_model = true;    // estimate rate from the quantized level stream
};

struct CodedFrame {
  Frame reconstructed;
  double rate_bits = 0.0;
  int qp = 0;
  double mse_vs_original = 0.0;
};

/// Quantization step 2^((qp-4)/6).
double qstep(int qp);

/// Orthonormal separable type-II DCT on an n x n block (row-major), and its
/// inverse. A constant block v maps to a DC coefficient of v*n.
void dct2d(const double* block, double* coefs, int n);
void idct2d(const double* coefs, double* block, int n);

std::vector<int> quantize(const std::vector<double>& coefs, int qp);
std::vector<double> dequantize(const std::vector<int>& levels, int qp);

CodedFrame encode_frame(const Frame& original, const CodecConfig& config);

struct RDPoint {
  double rate_bpp = 0.0;
  double psnr_db = 0.0;
};

/// Rate-distortion points sorted by ascending rate. `degenerate` marks
/// curves containing infinite-PSNR (lossless) points.
struct RDCurve {
  std::vector<RDPoint> points;
  bool degenerate = false;
};

RDCurve make_rd_curve(const Frame& original, const std::vector<int>& qps,
                      const CodecConfig& base = {});

/// Mean absolute second difference centred on block boundaries vs. fully
/// inside blocks; coded frames show the boundary value pulling ahead.
struct BoundaryStats {
  double boundary = 0.0;
  double interior = 0.0;
};

BoundaryStats block_boundary_stats(const Frame& frame, int block_size);

}  // namespace glf
