#include "glf/metrics.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "glf/tensor.hpp"

namespace glf {

double psnr(const Frame& a, const Frame& b) {
  if (a.width != b.width || a.height != b.height)
    throw ShapeError("psnr: frame dims differ (" + std::to_string(a.width) + "x" +
                     std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                     std::to_string(b.height) + ")");
  double sq = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = double(a.pixels[i]) - double(b.pixels[i]);
    sq += d * d;
  }
  if (sq == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sq / double(a.pixels.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

namespace {

// Least-squares polynomial fit of y over (x - x0), lowest order first.
Eigen::VectorXd polyfit(const std::vector<double>& x, const std::vector<double>& y,
                        int degree, double x0) {
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd design(n, degree + 1);
  Eigen::VectorXd rhs(n);
  for (int i = 0; i < n; ++i) {
    double t = 1.0;
    for (int d = 0; d <= degree; ++d) {
      design(i, d) = t;
      t *= x[i] - x0;
    }
    rhs(i) = y[i];
  }
  return design.colPivHouseholderQr().solve(rhs);
}

double poly_integral(const Eigen::VectorXd& coeffs, double lo, double hi, double x0) {
  double acc = 0.0;
  for (int d = 0; d < coeffs.size(); ++d) {
    const double a = lo - x0, b = hi - x0;
    acc += coeffs(d) / double(d + 1) * (std::pow(b, d + 1) - std::pow(a, d + 1));
  }
  return acc;
}

void validate_curve(const RDCurve& c, const char* label) {
  if (c.points.size() < 3)
    throw ConfigError(std::string("bd_rate: ") + label + " needs >= 3 points, has " +
                      std::to_string(c.points.size()));
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    const RDPoint& p = c.points[i];
    if (!(p.rate_bpp > 0.0))
      throw ConfigError(std::string("bd_rate: ") + label + " has non-positive rate");
    if (!std::isfinite(p.psnr_db))
      throw ConfigError(std::string("bd_rate: ") + label +
                        " has a non-finite PSNR point (lossless points are rejected)");
    if (i > 0 && !(p.rate_bpp > c.points[i - 1].rate_bpp))
      throw ConfigError(std::string("bd_rate: ") + label +
                        " rates must be strictly increasing");
  }
}

}  // namespace

double bd_rate(const RDCurve& anchor, const RDCurve& test, std::string* warn) {
  validate_curve(anchor, "anchor");
  validate_curve(test, "test");

  auto extract = [](const RDCurve& c, std::vector<double>& p, std::vector<double>& lr) {
    for (const RDPoint& pt : c.points) {
      p.push_back(pt.psnr_db);
      lr.push_back(std::log10(pt.rate_bpp));
    }
  };
  std::vector<double> pa, la, pt, lt;
  extract(anchor, pa, la);
  extract(test, pt, lt);

  auto monotone = [](const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
      if (v[i] <= v[i - 1]) return false;
    return true;
  };
  if (!monotone(pa) || !monotone(pt)) {
    if (warn) *warn = "non-monotone PSNR values; fitting curve as-is";
  }

  const double lo = std::max(*std::min_element(pa.begin(), pa.end()),
                             *std::min_element(pt.begin(), pt.end()));
  const double hi = std::min(*std::max_element(pa.begin(), pa.end()),
                             *std::max_element(pt.begin(), pt.end()));
  if (!(hi > lo))
    throw ConfigError("bd_rate: PSNR ranges do not overlap");

  const int degree =
      static_cast<int>(std::min<std::size_t>(3, std::min(pa.size(), pt.size()) - 1));
  const double x0 = (lo + hi) / 2.0;
  const Eigen::VectorXd ca = polyfit(pa, la, degree, x0);
  const Eigen::VectorXd ct = polyfit(pt, lt, degree, x0);

  const double avg_diff =
      (poly_integral(ct, lo, hi, x0) - poly_integral(ca, lo, hi, x0)) / (hi - lo);
  return (std::pow(10.0, avg_diff) - 1.0) * 100.0;
}

void save_rd_csv(const RDCurve& curve, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << "rate_bpp,psnr_db\n";
  out.precision(12);
  for (const RDPoint& p : curve.points) out << p.rate_bpp << "," << p.psnr_db << "\n";
}

RDCurve load_rd_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line) || line.rfind("rate_bpp,psnr_db", 0) != 0)
    throw IoError(path + ": missing rate_bpp,psnr_db header");
  RDCurve curve;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    RDPoint p;
    char comma = 0;
    if (!(ss >> p.rate_bpp >> comma >> p.psnr_db) || comma != ',')
      throw IoError(path + ": malformed point at line " + std::to_string(lineno));
    if (std::isinf(p.psnr_db)) curve.degenerate = true;
    curve.points.push_back(p);
  }
  return curve;
}

DiffReport diff_map(const Frame& y_g, const Frame& y_l, const Frame& y_t,
                    std::vector<std::uint8_t>* map_out) {
  if (y_g.width != y_t.width || y_g.height != y_t.height || y_l.width != y_t.width ||
      y_l.height != y_t.height)
    throw ShapeError("diff_map: frame dims differ");
  DiffReport rep;
  rep.pixels = static_cast<std::int64_t>(y_t.pixels.size());
  if (map_out) map_out->assign(y_t.pixels.size(), 2);
  std::int64_t global = 0, local = 0, tie = 0;
  for (std::size_t i = 0; i < y_t.pixels.size(); ++i) {
    const int eg = std::abs(int(y_g.pixels[i]) - int(y_t.pixels[i]));
    const int el = std::abs(int(y_l.pixels[i]) - int(y_t.pixels[i]));
    const int diff = eg - el;
    if (diff < 0) {
      ++global;
      if (map_out) (*map_out)[i] = 0;
    } else if (diff > 0) {
      ++local;
      if (map_out) (*map_out)[i] = 1;
    } else {
      ++tie;
    }
  }
  rep.global_count = global;
  rep.local_count = local;
  rep.tie_count = tie;
  const double total = static_cast<double>(rep.pixels);
  rep.global_better_pct = 100.0 * double(global) / total;
  rep.local_better_pct = 100.0 * double(local) / total;
  rep.tie_pct = 100.0 * double(tie) / total;
  return rep;
}

void render_error_maps(const Frame& y_g, const Frame& y_l, const Frame& y_t,
                       Frame& err_g, Frame& err_l) {
  if (y_g.width != y_t.width || y_g.height != y_t.height || y_l.width != y_t.width ||
      y_l.height != y_t.height)
    throw ShapeError("render_error_maps: frame dims differ");
  int max_err = 1;
  for (std::size_t i = 0; i < y_t.pixels.size(); ++i) {
    max_err = std::max(max_err, std::abs(int(y_g.pixels[i]) - int(y_t.pixels[i])));
    max_err = std::max(max_err, std::abs(int(y_l.pixels[i]) - int(y_t.pixels[i])));
  }
  err_g = Frame(y_t.width, y_t.height);
  err_l = Frame(y_t.width, y_t.height);
  for (std::size_t i = 0; i < y_t.pixels.size(); ++i) {
    const int eg = std::abs(int(y_g.pixels[i]) - int(y_t.pixels[i]));
    const int el = std::abs(int(y_l.pixels[i]) - int(y_t.pixels[i]));
    err_g.pixels[i] = static_cast<std::uint8_t>(255 - (255 * eg) / max_err);
    err_l.pixels[i] = static_cast<std::uint8_t>(255 - (255 * el) / max_err);
  }
}

TimingReport time_runs(const std::vector<Frame>& frames,
                       const std::function<void(const Frame&)>& run, int repeats) {
  using clock = std::chrono::steady_clock;
  TimingReport rep;
  if (frames.empty() || repeats < 1) return rep;
  std::vector<double> totals(frames.size(), 0.0);
  std::vector<double> run_totals(static_cast<std::size_t>(repeats), 0.0);
  for (int r = 0; r < repeats; ++r) {
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto t0 = clock::now();
      run(frames[i]);
      const auto t1 = clock::now();
      const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      totals[i] += ms;
      run_totals[static_cast<std::size_t>(r)] += ms;
    }
  }
  rep.per_frame_ms.resize(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i)
    rep.per_frame_ms[i] = totals[i] / repeats;
  rep.min_ms = *std::min_element(rep.per_frame_ms.begin(), rep.per_frame_ms.end());
  rep.max_ms = *std::max_element(rep.per_frame_ms.begin(), rep.per_frame_ms.end());
  double sum = 0.0;
  for (double v : rep.per_frame_ms) sum += v;
  rep.mean_ms = sum / double(rep.per_frame_ms.size());
  double rt_mean = 0.0;
  for (double v : run_totals) rt_mean += v;
  rt_mean /= double(repeats);
  double var = 0.0;
  for (double v : run_totals) var += (v - rt_mean) * (v - rt_mean);
  var /= double(repeats);
  rep.coeff_of_variation = rt_mean > 0 ? std::sqrt(var) / rt_mean : 0.0;
  return rep;
}

}  // namespace glf
