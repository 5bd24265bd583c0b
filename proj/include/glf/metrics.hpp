#pragma once

#include <functional>
#include <string>
#include <vector>

#include "glf/codec.hpp"
#include "glf/frame.hpp"

namespace glf {

/// 10*log10(255^2 / MSE); +infinity when the frames are identical.
double psnr(const Frame& a, const Frame& b);

/// Average percent bitrate difference between two RD curves at equal
/// quality (cubic fit of log10-rate over PSNR, integrated over the common
/// PSNR interval). Negative values are bitrate savings of `test` over
/// `anchor`. Curves need >= 3 points (fit degree drops below 4 points) and
/// overlapping PSNR ranges; non-monotone PSNR emits a warning via `warn`.
double bd_rate(const RDCurve& anchor, const RDCurve& test, std::string* warn = nullptr);

void save_rd_csv(const RDCurve& curve, const std::string& path);
RDCurve load_rd_csv(const std::string& path);

/// Outcome of the per-pixel two-stream comparison |y_g - y_t| - |y_l - y_t|.
struct DiffReport {
  double global_better_pct = 0.0;
  double local_better_pct = 0.0;
  double tie_pct = 0.0;
  std::int64_t global_count = 0;
  std::int64_t local_count = 0;
  std::int64_t tie_count = 0;
  std::int64_t pixels = 0;
};

/// Classifies every pixel by which stream restored it better. When `map_out`
/// is given it receives one byte per pixel: 0 = global better, 1 = local
/// better, 2 = tie.
DiffReport diff_map(const Frame& y_g, const Frame& y_l, const Frame& y_t,
                    std::vector<std::uint8_t>* map_out = nullptr);

/// Per-stream absolute-error visualization, brighter = smaller error. Both
/// maps share one normalization so their brightness is comparable.
void render_error_maps(const Frame& y_g, const Frame& y_l, const Frame& y_t,
                       Frame& err_g, Frame& err_l);

struct TimingReport {
  std::vector<double> per_frame_ms;  // mean over repeats, one entry per frame
  double mean_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  double coeff_of_variation = 0.0;  // across repeated runs of the same frames
};

/// Wall-clock statistics for a callable run once per frame, `repeats` times.
TimingReport time_runs(const std::vector<Frame>& frames,
                       const std::function<void(const Frame&)>& run, int repeats = 3);

}  // namespace glf
