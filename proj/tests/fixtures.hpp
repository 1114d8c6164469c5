// Deterministic procedural fixtures and temp-file helpers for the tests.
#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <string>

#include "inkwash/tensor.hpp"

namespace fixtures {

inline std::string make_temp_dir() {
  char tmpl[] = "/tmp/inkwash_test_XXXXXX";
  char* dir = mkdtemp(tmpl);
  if (!dir) throw std::runtime_error("mkdtemp failed");
  return std::string(dir);
}

/// Structured test image standing in for a photograph at desk scale: smooth
/// Gaussian blobs over a ramp, plus dark pen strokes and a textured band so
/// the edge filters see line content with strong responses.
template <typename T>
inkwash::ImageTensor<T> natural_image(int h, int w, int channels, std::uint32_t seed) {
  std::mt19937 gen(seed);
  auto unit = [&gen] { return gen() * (1.0 / 4294967296.0); };
  inkwash::ImageTensor<double> img(h, w, channels);

  const double gx = unit() - 0.5, gy = unit() - 0.5;
  struct Blob {
    double cy, cx, r, amp;
    double color[3];
  };
  std::vector<Blob> blobs(8);
  for (auto& b : blobs) {
    b.cy = unit() * h;
    b.cx = unit() * w;
    b.r = (0.05 + 0.25 * unit()) * std::max(h, w);
    b.amp = 0.4 + 0.8 * unit();
    for (double& c : b.color) c = unit();
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        double v = 0.5 + gx * (static_cast<double>(x) / w - 0.5) +
                   gy * (static_cast<double>(y) / h - 0.5);
        for (const auto& b : blobs) {
          const double d2 = (y - b.cy) * (y - b.cy) + (x - b.cx) * (x - b.cx);
          v += b.amp * (b.color[c % 3] - 0.5) * std::exp(-d2 / (2.0 * b.r * b.r));
        }
        img.at(y, x, c) = v;
      }
  double lo = img.data[0], hi = img.data[0];
  for (double v : img.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  for (double& v : img.data) v = 0.45 + 0.5 * (v - lo) / span;

  // wandering near-black pen strokes, mostly two pixels thick
  const int strokes = 5 + static_cast<int>(unit() * 5);
  for (int s = 0; s < strokes; ++s) {
    double y = unit() * h, x = unit() * w;
    double dir = unit() * 6.283185307179586;
    const double ink = 0.02 + 0.08 * unit();
    const bool wide = unit() < 0.7;
    const int len = 8 + static_cast<int>(unit() * (h + w) / 3);
    for (int step = 0; step < len; ++step) {
      const int iy = static_cast<int>(y), ix = static_cast<int>(x);
      for (int dy = 0; dy <= (wide ? 1 : 0); ++dy)
        if (iy + dy >= 0 && iy + dy < h && ix >= 0 && ix < w)
          for (int c = 0; c < channels; ++c)
            img.at(iy + dy, ix, c) = std::min(img.at(iy + dy, ix, c), ink);
      y += std::sin(dir);
      x += std::cos(dir);
      dir += 0.3 * (unit() - 0.5);
    }
  }

  // one striped band of texture near the DoG passband peak
  const int band_top = static_cast<int>(unit() * h / 2);
  const int band_h = 5 + static_cast<int>(unit() * (h / 3));
  for (int y = band_top; y < std::min(h, band_top + band_h); ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(y, x, c) -= 0.55 * (0.5 + 0.5 * std::sin(1.05 * x + 0.5 * c));

  inkwash::ImageTensor<T> out(h, w, channels);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    out.data[i] = static_cast<T>(std::clamp(img.data[i], 0.0, 1.0));
  return out;
}

/// Binary image with mixed structure: thresholded blobs plus salt-and-pepper
/// flips, so components of many sizes appear.
template <typename T>
inkwash::ImageTensor<T> random_binary_image(int h, int w, int channels, std::uint32_t seed) {
  std::mt19937 gen(seed);
  auto unit = [&gen] { return gen() * (1.0 / 4294967296.0); };
  auto base = natural_image<double>(h, w, channels, seed ^ 0x5f5f5f5fu);
  inkwash::ImageTensor<T> out(h, w, channels);
  const double thresh = 0.3 + 0.4 * unit();
  for (std::size_t i = 0; i < base.data.size(); ++i)
    out.data[i] = base.data[i] > thresh ? T(1) : T(0);
  const double flip_rate = 0.02 + 0.08 * unit();
  for (std::size_t i = 0; i < out.data.size(); ++i)
    if (unit() < flip_rate) out.data[i] = out.data[i] == T(0) ? T(1) : T(0);
  return out;
}

}  // namespace fixtures
