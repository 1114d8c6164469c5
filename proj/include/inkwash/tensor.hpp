#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "inkwash/error.hpp"

namespace inkwash {

/// H x W x C raster, row-major with interleaved channels.
/// Pixel images live in [0,1]; intermediate filter maps are unbounded.
template <typename T>
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<T> data;

  ImageTensor() = default;

  ImageTensor(int h, int w, int c, T fill = T(0))
      : height(h), width(w), channels(c) {
    if (h < 1 || w < 1) throw ValueError("ImageTensor: height and width must be >= 1");
    if (c != 1 && c != 3) throw ValueError("ImageTensor: channels must be 1 or 3");
    data.assign(static_cast<std::size_t>(h) * w * c, fill);
  }

  T& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  const T& at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height) * width;
  }
  std::size_t size() const { return data.size(); }

  bool same_shape(const ImageTensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

template <typename To, typename From>
ImageTensor<To> convert(const ImageTensor<From>& img) {
  ImageTensor<To> out(img.height, img.width, img.channels);
  for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = static_cast<To>(img.data[i]);
  return out;
}

template <typename T>
void clamp01_inplace(ImageTensor<T>& img) {
  for (T& v : img.data) v = std::clamp(v, T(0), T(1));
}

/// Grayscale image replicated across three channels; 3-channel input passes through.
template <typename T>
ImageTensor<T> replicate_to_rgb(const ImageTensor<T>& img) {
  if (img.channels == 3) return img;
  ImageTensor<T> out(img.height, img.width, 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const T v = img.at(y, x, 0);
      out.at(y, x, 0) = v;
      out.at(y, x, 1) = v;
      out.at(y, x, 2) = v;
    }
  return out;
}

/// Bilinear resample to an exact output size, half-pixel-centered coordinates.
template <typename T>
ImageTensor<T> resize_bilinear(const ImageTensor<T>& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ValueError("resize_bilinear: output size must be >= 1");
  if (out_h == img.height && out_w == img.width) return img;
  ImageTensor<T> out(out_h, out_w, img.channels);
  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y1 = std::min(y0 + 1, img.height - 1);
    y0 = std::clamp(y0, 0, img.height - 1);
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x1 = std::min(x0 + 1, img.width - 1);
      x0 = std::clamp(x0, 0, img.width - 1);
      for (int c = 0; c < img.channels; ++c) {
        const double v00 = img.at(y0, x0, c);
        const double v01 = img.at(y0, x1, c);
        const double v10 = img.at(y1, x0, c);
        const double v11 = img.at(y1, x1, c);
        const double v = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                         wy * ((1.0 - wx) * v10 + wx * v11);
        out.at(y, x, c) = static_cast<T>(v);
      }
    }
  }
  return out;
}

/// Output dimensions with the longer edge forced to `edge`, aspect kept to the
/// nearest pixel.
inline std::pair<int, int> dims_for_longest_edge(int h, int w, int edge) {
  if (h >= w) {
    int w2 = static_cast<int>(std::llround(static_cast<double>(w) * edge / h));
    return {edge, std::max(1, w2)};
  }
  int h2 = static_cast<int>(std::llround(static_cast<double>(h) * edge / w));
  return {std::max(1, h2), edge};
}

/// Downscale so max(H,W) == max_edge; images already at or below the limit are
/// returned unchanged.
template <typename T>
ImageTensor<T> resize_longest_edge(const ImageTensor<T>& img, int max_edge) {
  if (max_edge < 1) throw ValueError("resize_longest_edge: max_edge must be >= 1");
  if (std::max(img.height, img.width) <= max_edge) return img;
  auto [h2, w2] = dims_for_longest_edge(img.height, img.width, max_edge);
  return resize_bilinear(img, h2, w2);
}

}  // namespace inkwash
