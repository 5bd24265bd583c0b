// Regenerates the bundled mini corpus (data/corpus): 20 deterministic
// 176x144 luma images mixing smooth textures, gratings, blocks, and shapes.
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <vector>

#include "glf/frame.hpp"
#include "glf/rng.hpp"

using glf::Frame;
using glf::Rng;

namespace {

constexpr int kW = 176;
constexpr int kH = 144;

struct Field {
  std::vector<double> v;
  Field() : v(std::size_t(kW) * kH, 0.0) {}
  double& at(int x, int y) { return v[std::size_t(y) * kW + x]; }
  double at(int x, int y) const { return v[std::size_t(y) * kW + x]; }
};

// Bilinear value noise at one grid spacing.
Field noise_octave(Rng& rng, int spacing, double amplitude) {
  const int gw = kW / spacing + 2, gh = kH / spacing + 2;
  std::vector<double> grid(std::size_t(gw) * gh);
  for (auto& g : grid) g = rng.uniform(-1.0, 1.0);
  Field f;
  for (int y = 0; y < kH; ++y)
    for (int x = 0; x < kW; ++x) {
      const double fx = double(x) / spacing, fy = double(y) / spacing;
      const int x0 = int(fx), y0 = int(fy);
      const double tx = fx - x0, ty = fy - y0;
      auto g = [&](int gx, int gy) { return grid[std::size_t(gy) * gw + gx]; };
      const double a = g(x0, y0) * (1 - tx) + g(x0 + 1, y0) * tx;
      const double b = g(x0, y0 + 1) * (1 - tx) + g(x0 + 1, y0 + 1) * tx;
      f.at(x, y) = amplitude * (a * (1 - ty) + b * ty);
    }
  return f;
}

Field multi_octave(Rng& rng, std::initializer_list<std::pair<int, double>> octaves) {
  Field f;
  for (auto [spacing, amp] : octaves) {
    Field o = noise_octave(rng, spacing, amp);
    for (std::size_t i = 0; i < f.v.size(); ++i) f.v[i] += o.v[i];
  }
  return f;
}

void add(Field& f, const Field& g, double w = 1.0) {
  for (std::size_t i = 0; i < f.v.size(); ++i) f.v[i] += w * g.v[i];
}

// Scales the field into [16, 240] using its own min/max.
Frame to_frame(const Field& f) {
  double lo = f.v[0], hi = f.v[0];
  for (double v : f.v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  Frame frame(kW, kH);
  for (std::size_t i = 0; i < f.v.size(); ++i) {
    const double t = (f.v[i] - lo) / span;
    frame.pixels[i] = static_cast<std::uint8_t>(std::lround(16.0 + 224.0 * t));
  }
  return frame;
}

Field gradient(double gx, double gy) {
  Field f;
  for (int y = 0; y < kH; ++y)
    for (int x = 0; x < kW; ++x) f.at(x, y) = gx * x / kW + gy * y / kH;
  return f;
}

Field radial(double cx, double cy, double scale) {
  Field f;
  for (int y = 0; y < kH; ++y)
    for (int x = 0; x < kW; ++x) {
      const double dx = x - cx, dy = y - cy;
      f.at(x, y) = std::sqrt(dx * dx + dy * dy) / scale;
    }
  return f;
}

Field grating(double fx, double fy, double phase) {
  Field f;
  for (int y = 0; y < kH; ++y)
    for (int x = 0; x < kW; ++x) f.at(x, y) = std::sin(fx * x + fy * y + phase);
  return f;
}

Field checker(int period) {
  Field f;
  for (int y = 0; y < kH; ++y)
    for (int x = 0; x < kW; ++x)
      f.at(x, y) = ((x / period) + (y / period)) % 2 == 0 ? 1.0 : -1.0;
  return f;
}

Field bars(int period) {
  Field f;
  for (int y = 0; y < kH; ++y)
    for (int x = 0; x < kW; ++x) f.at(x, y) = double((y / period) % 5) / 4.0;
  return f;
}

Field rings(double cx, double cy, double freq) {
  Field f;
  for (int y = 0; y < kH; ++y)
    for (int x = 0; x < kW; ++x) {
      const double dx = x - cx, dy = y - cy;
      f.at(x, y) = std::sin(std::sqrt(dx * dx + dy * dy) * freq);
    }
  return f;
}

void stamp_disc(Field& f, double cx, double cy, double r, double value) {
  for (int y = 0; y < kH; ++y)
    for (int x = 0; x < kW; ++x) {
      const double d = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy));
      const double cov = std::clamp(r + 0.5 - d, 0.0, 1.0);  // soft 1px edge
      f.at(x, y) = f.at(x, y) * (1 - cov) + value * cov;
    }
}

void stamp_rect(Field& f, int x0, int y0, int w, int h, double value) {
  for (int y = std::max(0, y0); y < std::min(kH, y0 + h); ++y)
    for (int x = std::max(0, x0); x < std::min(kW, x0 + w); ++x) f.at(x, y) = value;
}

void stamp_line(Field& f, double x0, double y0, double x1, double y1, double value) {
  const int steps = int(std::hypot(x1 - x0, y1 - y0)) * 2 + 1;
  for (int i = 0; i <= steps; ++i) {
    const double t = double(i) / steps;
    const int x = int(std::lround(x0 + t * (x1 - x0)));
    const int y = int(std::lround(y0 + t * (y1 - y0)));
    if (x >= 0 && x < kW && y >= 0 && y < kH) f.at(x, y) = value;
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::string out_dir = argc > 1 ? argv[1] : "data/corpus";
  std::filesystem::create_directories(out_dir);

  std::vector<Frame> images;
  for (int i = 0; i < 4; ++i) {  // img 1-4: layered smooth textures
    Rng rng(100 + i);
    images.push_back(to_frame(
        multi_octave(rng, {{48, 1.0}, {16, 0.5}, {6, 0.25}, {2, 0.08 + 0.03 * i}})));
  }
  {
    Rng rng(200);
    Field f = gradient(1.6, 0.4);
    add(f, multi_octave(rng, {{24, 0.3}, {5, 0.1}}));
    images.push_back(to_frame(f));
  }
  {
    Rng rng(201);
    Field f = radial(kW * 0.4, kH * 0.55, 90.0);
    add(f, multi_octave(rng, {{20, 0.25}, {7, 0.1}}));
    images.push_back(to_frame(f));
  }
  {
    Rng rng(300);
    Field f = grating(0.21, 0.06, 0.7);
    add(f, multi_octave(rng, {{30, 0.4}, {9, 0.15}}));
    images.push_back(to_frame(f));
  }
  {
    Rng rng(301);
    Field f = grating(0.05, 0.33, 2.1);
    add(f, grating(0.4, -0.12, 0.0), 0.4);
    add(f, multi_octave(rng, {{14, 0.25}}));
    images.push_back(to_frame(f));
  }
  {
    Rng rng(400);
    Field f = checker(12);
    add(f, gradient(0.8, 0.8), 0.6);
    add(f, multi_octave(rng, {{18, 0.3}}));
    images.push_back(to_frame(f));
  }
  {
    Rng rng(401);
    Field f = checker(20);
    add(f, multi_octave(rng, {{40, 0.7}, {11, 0.2}}));
    images.push_back(to_frame(f));
  }
  for (int i = 0; i < 2; ++i) {  // img 11-12: discs over texture
    Rng rng(500 + i);
    Field f = multi_octave(rng, {{36, 0.8}, {10, 0.25}});
    for (int d = 0; d < 7; ++d)
      stamp_disc(f, rng.uniform(15, kW - 15), rng.uniform(15, kH - 15),
                 rng.uniform(6, 26), rng.uniform(-1.2, 1.2));
    images.push_back(to_frame(f));
  }
  {
    Rng rng(600);
    Field f = multi_octave(rng, {{50, 0.5}});
    for (int i = 0; i < 28; ++i)
      stamp_line(f, rng.uniform(0, kW), rng.uniform(0, kH), rng.uniform(0, kW),
                 rng.uniform(0, kH), rng.uniform(-1.0, 1.0));
    images.push_back(to_frame(f));
  }
  {
    Rng rng(601);
    Field f = multi_octave(rng, {{60, 0.4}});
    for (int i = 0; i < 90; ++i)
      stamp_rect(f, int(rng.below(kW - 10)), int(rng.below(kH - 6)),
                 2 + int(rng.below(9)), 2 + int(rng.below(4)), rng.uniform(-1.0, 1.0));
    images.push_back(to_frame(f));
  }
  for (int i = 0; i < 2; ++i) {  // img 15-16: shapes blended into texture
    Rng rng(700 + i);
    Field f = multi_octave(rng, {{44, 0.9}, {13, 0.3}, {4, 0.08}});
    for (int d = 0; d < 4; ++d)
      stamp_disc(f, rng.uniform(20, kW - 20), rng.uniform(20, kH - 20),
                 rng.uniform(10, 32), rng.uniform(-0.9, 0.9));
    stamp_rect(f, int(rng.below(kW / 2)), int(rng.below(kH / 2)), 30 + int(rng.below(40)),
               20 + int(rng.below(30)), rng.uniform(-0.8, 0.8));
    images.push_back(to_frame(f));
  }
  {
    Rng rng(800);
    Field f = bars(18);
    add(f, multi_octave(rng, {{22, 0.2}, {6, 0.08}}));
    images.push_back(to_frame(f));
  }
  {
    Rng rng(801);
    Field f = rings(kW * 0.5, kH * 0.5, 0.22);
    add(f, multi_octave(rng, {{26, 0.3}}));
    images.push_back(to_frame(f));
  }
  {
    Rng rng(900);
    Field f = grating(0.12, 0.05, 0.0);
    add(f, grating(-0.03, 0.19, 1.2));
    add(f, grating(0.07, -0.09, 2.6));
    add(f, multi_octave(rng, {{16, 0.25}}));
    images.push_back(to_frame(f));
  }
  {
    Rng rng(901);  // collage of quadrant styles
    Field f = multi_octave(rng, {{40, 0.8}, {12, 0.3}});
    Field g = checker(10);
    Field r = rings(kW * 0.75, kH * 0.3, 0.3);
    for (int y = 0; y < kH; ++y)
      for (int x = 0; x < kW; ++x) {
        if (x >= kW / 2 && y < kH / 2) f.at(x, y) = 0.7 * g.at(x, y) + 0.3 * f.at(x, y);
        if (x < kW / 2 && y >= kH / 2) f.at(x, y) = 0.6 * r.at(x, y) + 0.4 * f.at(x, y);
      }
    stamp_disc(f, kW * 0.72, kH * 0.72, 22, 1.1);
    images.push_back(to_frame(f));
  }

  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img%02zu.pgm", i + 1);
    glf::save_pgm(images[i], out_dir + "/" + name);
  }
  std::cout << "wrote " << images.size() << " images to " << out_dir << "\n";
  return 0;
}
