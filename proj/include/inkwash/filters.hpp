#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "inkwash/error.hpp"
#include "inkwash/tensor.hpp"

namespace inkwash {

/// Parameter bundle for the abstraction pipeline: Gaussian scale sigma, scale
/// ratio k, DoG control tau, ramp steepness phi, ramp threshold epsilon, and
/// the minimum connected-component area kept by the morphology pass.
struct MxdogParams {
  double sigma = 1.0;
  double k = 1.6;
  double tau = 0.94;
  double phi = 50.0;
  double epsilon = -0.1;
  int a_min = 10;

  void validate() const {
    if (!(sigma > 0)) throw ValueError("MxdogParams: sigma must be > 0");
    if (!(k > 1)) throw ValueError("MxdogParams: k must be > 1");
    if (!(tau > 0 && tau <= 1)) throw ValueError("MxdogParams: tau must be in (0, 1]");
    if (a_min < 1) throw ValueError("MxdogParams: a_min must be >= 1");
  }
};

namespace detail {

/// Normalized 1-D Gaussian taps over [-r, r], r = ceil(3*sigma).
template <typename T>
std::vector<T> gaussian_kernel(double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> w(2 * r + 1);
  for (int i = -r; i <= r; ++i) w[i + r] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<T> g(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) g[i] = static_cast<T>(w[i] / sum);
  return g;
}

/// Half-sample symmetric reflection of index i into [0, n).
inline int mirror_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

enum class Axis { Horizontal, Vertical };

template <typename T>
ImageTensor<T> blur_pass(const ImageTensor<T>& in, const std::vector<T>& g, Axis axis) {
  const int r = static_cast<int>(g.size() / 2);
  ImageTensor<T> out(in.height, in.width, in.channels);
  const int n = axis == Axis::Horizontal ? in.width : in.height;
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int c = 0; c < in.channels; ++c) {
        T acc = T(0);
        for (int d = -r; d <= r; ++d) {
          const int m = mirror_index((axis == Axis::Horizontal ? x : y) + d, n);
          const T v = axis == Axis::Horizontal ? in.at(y, m, c) : in.at(m, x, c);
          acc += g[d + r] * v;
        }
        out.at(y, x, c) = acc;
      }
  return out;
}

/// Adjoint of blur_pass under the same reflected boundary: scatter instead of
/// gather. Needed because reflection makes the operator non-symmetric at the
/// borders.
template <typename T>
ImageTensor<T> blur_pass_adjoint(const ImageTensor<T>& in, const std::vector<T>& g, Axis axis) {
  const int r = static_cast<int>(g.size() / 2);
  ImageTensor<T> out(in.height, in.width, in.channels);
  const int n = axis == Axis::Horizontal ? in.width : in.height;
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int c = 0; c < in.channels; ++c) {
        const T v = in.at(y, x, c);
        for (int d = -r; d <= r; ++d) {
          const int m = mirror_index((axis == Axis::Horizontal ? x : y) + d, n);
          if (axis == Axis::Horizontal)
            out.at(y, m, c) += g[d + r] * v;
          else
            out.at(m, x, c) += g[d + r] * v;
        }
      }
  return out;
}

/// Fixed-order per-channel mean, accumulated in double after shifting by the
/// channel minimum. The shift makes the mean of a constant channel exactly
/// that constant, which the tie rule "value <= mean maps to 0" relies on.
template <typename T>
std::vector<double> channel_means(const ImageTensor<T>& img) {
  std::vector<double> lo(img.channels);
  for (int c = 0; c < img.channels; ++c) lo[c] = static_cast<double>(img.at(0, 0, c));
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        lo[c] = std::min(lo[c], static_cast<double>(img.at(y, x, c)));
  std::vector<double> mu(img.channels, 0.0);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        mu[c] += static_cast<double>(img.at(y, x, c)) - lo[c];
  const double inv = 1.0 / static_cast<double>(img.pixel_count());
  for (int c = 0; c < img.channels; ++c) mu[c] = lo[c] + mu[c] * inv;
  return mu;
}

/// Flip connected components of `value` whose 8-connected area is strictly
/// below a_min. Plane values are exactly 0 or 1. Union-find labeling.
template <typename T>
void morph_flip_small(std::vector<T>& plane, int h, int w, T value, int a_min) {
  const int n = h * w;
  std::vector<std::int32_t> parent(n, -1);
  auto find = [&](std::int32_t i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  };
  auto unite = [&](std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[b] = a;
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int i = y * w + x;
      if (plane[i] != value) continue;
      parent[i] = i;
      // connect to already-visited neighbors: W, NW, N, NE
      if (x > 0 && plane[i - 1] == value) unite(i - 1, i);
      if (y > 0) {
        if (x > 0 && plane[i - w - 1] == value) unite(i - w - 1, i);
        if (plane[i - w] == value) unite(i - w, i);
        if (x + 1 < w && plane[i - w + 1] == value) unite(i - w + 1, i);
      }
    }
  std::vector<std::int32_t> area(n, 0);
  for (int i = 0; i < n; ++i)
    if (parent[i] >= 0) ++area[find(i)];
  const T flipped = value == T(0) ? T(1) : T(0);
  for (int i = 0; i < n; ++i)
    if (parent[i] >= 0 && area[find(i)] < a_min) plane[i] = flipped;
}

}  // namespace detail

/// Separable Gaussian blur with reflected boundaries; the discrete kernel is
/// truncated at ceil(3*sigma) and renormalized to unit sum, so constants are
/// preserved.
template <typename T>
ImageTensor<T> gaussian_blur(const ImageTensor<T>& img, double sigma) {
  if (!(sigma > 0)) throw ValueError("gaussian_blur: sigma must be > 0");
  const auto g = detail::gaussian_kernel<T>(sigma);
  return detail::blur_pass(detail::blur_pass(img, g, detail::Axis::Horizontal), g,
                           detail::Axis::Vertical);
}

/// Adjoint of gaussian_blur as a linear operator (exact w.r.t. the reflected
/// boundary handling).
template <typename T>
ImageTensor<T> gaussian_blur_adjoint(const ImageTensor<T>& grad, double sigma) {
  if (!(sigma > 0)) throw ValueError("gaussian_blur_adjoint: sigma must be > 0");
  const auto g = detail::gaussian_kernel<T>(sigma);
  return detail::blur_pass_adjoint(
      detail::blur_pass_adjoint(grad, g, detail::Axis::Vertical), g, detail::Axis::Horizontal);
}

/// DoG variant: blur at sigma minus tau times blur at k*sigma, per channel.
template <typename T>
ImageTensor<T> dog(const ImageTensor<T>& img, const MxdogParams& p) {
  p.validate();
  ImageTensor<T> fine = gaussian_blur(img, p.sigma);
  ImageTensor<T> coarse = gaussian_blur(img, p.k * p.sigma);
  const T tau = static_cast<T>(p.tau);
  for (std::size_t i = 0; i < fine.data.size(); ++i) fine.data[i] -= tau * coarse.data[i];
  return fine;
}

template <typename T>
ImageTensor<T> dog_adjoint(const ImageTensor<T>& grad, const MxdogParams& p) {
  p.validate();
  ImageTensor<T> fine = gaussian_blur_adjoint(grad, p.sigma);
  ImageTensor<T> coarse = gaussian_blur_adjoint(grad, p.k * p.sigma);
  const T tau = static_cast<T>(p.tau);
  for (std::size_t i = 0; i < fine.data.size(); ++i) fine.data[i] -= tau * coarse.data[i];
  return fine;
}

/// Thresholding ramp: 1 at or above epsilon, 1 + tanh(phi*(u - epsilon))
/// below. Continuous at epsilon; range (0, 1] for finite input.
template <typename T>
T xdog_ramp(T u, double phi, double epsilon) {
  if (static_cast<double>(u) >= epsilon) return T(1);
  return T(1) + std::tanh(static_cast<T>(phi) * (u - static_cast<T>(epsilon)));
}

/// Derivative of xdog_ramp w.r.t. u (zero on the saturated branch).
template <typename T>
T xdog_ramp_derivative(T u, double phi, double epsilon) {
  if (static_cast<double>(u) >= epsilon) return T(0);
  const T t = std::tanh(static_cast<T>(phi) * (u - static_cast<T>(epsilon)));
  return static_cast<T>(phi) * (T(1) - t * t);
}

template <typename T>
ImageTensor<T> xdog(const ImageTensor<T>& img, const MxdogParams& p) {
  ImageTensor<T> u = dog(img, p);
  for (T& v : u.data) v = xdog_ramp(v, p.phi, p.epsilon);
  return u;
}

/// Per-channel mean binarization: 0 where the value is at or below the
/// channel mean, 1 above.
template <typename T>
ImageTensor<T> threshold_xdog(const ImageTensor<T>& xd) {
  const auto mu = detail::channel_means(xd);
  ImageTensor<T> out(xd.height, xd.width, xd.channels);
  for (int y = 0; y < xd.height; ++y)
    for (int x = 0; x < xd.width; ++x)
      for (int c = 0; c < xd.channels; ++c)
        out.at(y, x, c) = static_cast<double>(xd.at(y, x, c)) <= mu[c] ? T(0) : T(1);
  return out;
}

/// Remove small 8-connected components, per channel: first every 1-component
/// with area < a_min is flipped to 0, then every 0-component of the result
/// with area < a_min is flipped to 1.
template <typename T>
ImageTensor<T> morph_filter(const ImageTensor<T>& binary, int a_min) {
  if (a_min < 1) throw ValueError("morph_filter: a_min must be >= 1");
  for (const T& v : binary.data)
    if (v != T(0) && v != T(1)) throw ValueError("morph_filter: input must be binary {0,1}");
  ImageTensor<T> out = binary;
  std::vector<T> plane(binary.pixel_count());
  for (int c = 0; c < binary.channels; ++c) {
    for (std::size_t p = 0; p < plane.size(); ++p) plane[p] = binary.data[p * binary.channels + c];
    detail::morph_flip_small(plane, binary.height, binary.width, T(1), a_min);
    detail::morph_flip_small(plane, binary.height, binary.width, T(0), a_min);
    for (std::size_t p = 0; p < plane.size(); ++p) out.data[p * binary.channels + c] = plane[p];
  }
  return out;
}

/// Full abstraction pipeline, each channel independently:
/// morph_filter(threshold_xdog(xdog(img))).
template <typename T>
ImageTensor<T> mxdog(const ImageTensor<T>& img, const MxdogParams& p) {
  return morph_filter(threshold_xdog(xdog(img, p)), p.a_min);
}

/// Intermediates of the smooth surrogate, kept for the backward pass.
template <typename T>
struct SoftMxdogTrace {
  ImageTensor<T> dog_out;      // u
  ImageTensor<T> ramp_out;     // v = ramp(u)
  std::vector<double> means;   // per-channel mean of v
  ImageTensor<T> tanh_out;     // t = tanh(rho*(v - mean))
  ImageTensor<T> soft_out;     // s = (1 + t) / 2

  const ImageTensor<T>& output() const { return soft_out; }
};

/// Differentiable surrogate for the binarization step: the hard mean
/// threshold is replaced by s = (1 + tanh(rho*(v - mean))) / 2 on the ramp
/// output v; no morphology is applied, keeping the map smooth.
template <typename T>
SoftMxdogTrace<T> soft_mxdog_trace(const ImageTensor<T>& img, const MxdogParams& p, double rho) {
  if (!(rho > 0)) throw ValueError("soft_mxdog: rho must be > 0");
  SoftMxdogTrace<T> tr;
  tr.dog_out = dog(img, p);
  tr.ramp_out = tr.dog_out;
  for (T& v : tr.ramp_out.data) v = xdog_ramp(v, p.phi, p.epsilon);
  tr.means = detail::channel_means(tr.ramp_out);
  tr.tanh_out = ImageTensor<T>(img.height, img.width, img.channels);
  tr.soft_out = ImageTensor<T>(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        const T t = std::tanh(static_cast<T>(rho) *
                              (tr.ramp_out.at(y, x, c) - static_cast<T>(tr.means[c])));
        tr.tanh_out.at(y, x, c) = t;
        tr.soft_out.at(y, x, c) = (T(1) + t) / T(2);
      }
  return tr;
}

template <typename T>
ImageTensor<T> soft_mxdog(const ImageTensor<T>& img, const MxdogParams& p, double rho) {
  return soft_mxdog_trace(img, p, rho).soft_out;
}

/// Pull a gradient w.r.t. the surrogate output back to the input image. The
/// channel mean is differentiated too, so the map matches finite differences
/// of the forward evaluation everywhere off the ramp kink.
template <typename T>
ImageTensor<T> soft_mxdog_backward(const SoftMxdogTrace<T>& tr, const ImageTensor<T>& grad_soft,
                                   const MxdogParams& p, double rho) {
  if (!grad_soft.same_shape(tr.soft_out))
    throw ValueError("soft_mxdog_backward: gradient shape mismatch");
  const int h = tr.soft_out.height, w = tr.soft_out.width, ch = tr.soft_out.channels;
  ImageTensor<T> gv(h, w, ch);
  // d s / d v = rho/2 * (1 - t^2), with the mean's contribution redistributed
  // uniformly over the channel.
  std::vector<double> wsum(ch, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        const T t = tr.tanh_out.at(y, x, c);
        const T wgt = grad_soft.at(y, x, c) * static_cast<T>(rho) / T(2) * (T(1) - t * t);
        gv.at(y, x, c) = wgt;
        wsum[c] += static_cast<double>(wgt);
      }
  const double inv_m = 1.0 / static_cast<double>(tr.soft_out.pixel_count());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        T g = gv.at(y, x, c) - static_cast<T>(wsum[c] * inv_m);
        gv.at(y, x, c) = g * xdog_ramp_derivative(tr.dog_out.at(y, x, c), p.phi, p.epsilon);
      }
  return dog_adjoint(gv, p);
}

}  // namespace inkwash
