#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "inkwash/error.hpp"
#include "inkwash/losses.hpp"
#include "inkwash/tensor.hpp"

namespace inkwash {

/// Adam moment estimates for one optimized image.
template <typename T>
struct AdamState {
  std::int64_t t = 0;
  ImageTensor<T> m;
  ImageTensor<T> v;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double learning_rate = 1e-2;
  double delta = 1e-8;

  static AdamState fresh(int h, int w, int c, double lr) {
    AdamState s;
    s.m = ImageTensor<T>(h, w, c);
    s.v = ImageTensor<T>(h, w, c);
    s.learning_rate = lr;
    return s;
  }
};

/// One bias-corrected Adam update; per-element math in double for a
/// deterministic, precision-independent trajectory shape.
template <typename T>
ImageTensor<T> adam_step(const ImageTensor<T>& img, const ImageTensor<T>& grad,
                         AdamState<T>& state) {
  if (!img.same_shape(grad) || !img.same_shape(state.m) || !img.same_shape(state.v))
    throw ValueError("adam_step: shape mismatch");
  for (const T& g : grad.data)
    if (!std::isfinite(static_cast<double>(g))) throw NumericError("adam_step: non-finite gradient");
  state.t += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  ImageTensor<T> out = img;
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double g = static_cast<double>(grad.data[i]);
    const double m = state.beta1 * static_cast<double>(state.m.data[i]) + (1.0 - state.beta1) * g;
    const double v = state.beta2 * static_cast<double>(state.v.data[i]) + (1.0 - state.beta2) * g * g;
    state.m.data[i] = static_cast<T>(m);
    state.v.data[i] = static_cast<T>(v);
    const double update = state.learning_rate * (m / c1) / (std::sqrt(v / c2) + state.delta);
    out.data[i] = static_cast<T>(static_cast<double>(img.data[i]) - update);
  }
  return out;
}

/// Configuration of one stylization run.
struct StylizeConfig {
  enum class Init { Content, Noise };

  int iterations = 500;
  double learning_rate = 1e-2;
  LossWeights weights;
  MxdogParams params;
  double rho = 50.0;
  std::uint32_t seed = 0;
  Init init = Init::Content;
  int max_edge = 768;
  int log_interval = 10;

  void validate() const {
    if (iterations < 1) throw ValueError("StylizeConfig: iterations must be >= 1");
    if (!(learning_rate > 0)) throw ValueError("StylizeConfig: learning rate must be > 0");
    if (!(rho > 0)) throw ValueError("StylizeConfig: rho must be > 0");
    if (max_edge < 1) throw ValueError("StylizeConfig: max_edge must be >= 1");
    if (log_interval < 1) throw ValueError("StylizeConfig: log_interval must be >= 1");
    weights.validate();
    params.validate();
  }
};

/// One loss record per log interval; iteration 0 is the initialization, the
/// last entry the final image.
struct LossRecord {
  int iteration = 0;
  LossBreakdown losses;
};

template <typename T>
struct StylizeResult {
  ImageTensor<T> image;
  std::vector<LossRecord> history;
};

namespace detail {

template <typename T>
ImageTensor<T> noise_image(int h, int w, int c, std::uint32_t seed) {
  std::mt19937 gen(seed);
  ImageTensor<T> img(h, w, c);
  for (T& v : img.data)
    v = static_cast<T>(0.4 + 0.2 * (gen() * (1.0 / 4294967296.0)));
  return img;
}

}  // namespace detail

/// Pixel-space stylization: resize, precompute targets, then minimize the
/// total objective with Adam, clamping to [0,1] after every step.
template <typename T>
StylizeResult<T> stylize(const ImageTensor<T>& content, const ImageTensor<T>& style,
                         const FeatureNet<T>& net, const StylizeConfig& cfg) {
  cfg.validate();
  const ImageTensor<T> c = resize_longest_edge(content, cfg.max_edge);
  const int target_edge = std::max(c.height, c.width);
  ImageTensor<T> s = style;
  if (std::max(s.height, s.width) != target_edge) {
    auto [h2, w2] = dims_for_longest_edge(s.height, s.width, target_edge);
    s = resize_bilinear(s, h2, w2);
  }
  const StyleTargets<T> targets = precompute_targets(c, s, net, cfg.params, cfg.weights);

  ImageTensor<T> img = cfg.init == StylizeConfig::Init::Content
                           ? c
                           : detail::noise_image<T>(c.height, c.width, c.channels, cfg.seed);
  clamp01_inplace(img);

  AdamState<T> state = AdamState<T>::fresh(c.height, c.width, c.channels, cfg.learning_rate);
  StylizeResult<T> result;
  for (int it = 0; it < cfg.iterations; ++it) {
    auto [bd, grad] =
        total_loss_and_grad(img, targets, net, cfg.params, cfg.weights, cfg.rho,
                            /*hard_diagnostics=*/it % cfg.log_interval == 0);
    if (it % cfg.log_interval == 0) result.history.push_back({it, bd});
    img = adam_step(img, grad, state);
    clamp01_inplace(img);
  }
  result.history.push_back(
      {cfg.iterations,
       total_loss(img, targets, net, cfg.params, cfg.weights, cfg.rho, /*hard_diagnostics=*/true)});
  result.image = std::move(img);
  return result;
}

/// Result of one finite-difference comparison for a named weight
/// configuration. `excluded` counts coordinates whose central difference was
/// not self-consistent across step sizes (a relu/pool/ramp kink inside the
/// probe window); they are replaced by further samples.
struct GradcheckConfigResult {
  std::string name;
  double max_rel_err = 0.0;
  int samples = 0;
  int excluded = 0;
  bool pass = false;
};

struct GradcheckReport {
  int size = 0;
  std::uint32_t seed = 0;
  int precision = 64;
  double threshold = 0.0;
  std::vector<GradcheckConfigResult> configs;
  bool pass = false;
};

namespace detail {

/// Deterministic probe image with photograph-like statistics at desk scale:
/// a smooth base plus dark strokes and a grating patch. The line content
/// drives the DoG response past the ramp threshold, so the abstraction
/// pipeline (and its gradient path) is actually exercised.
template <typename T>
ImageTensor<T> textured_test_image(int h, int w, std::uint32_t seed) {
  std::mt19937 gen(seed);
  auto unit = [&gen] { return gen() * (1.0 / 4294967296.0); };
  ImageTensor<double> img(h, w, 3);

  const double gx = unit() - 0.5, gy = unit() - 0.5;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = 0.72 + 0.2 * (gx * (2.0 * x / w - 1.0) + gy * (2.0 * y / h - 1.0)) +
                          0.05 * std::sin(0.37 * (c + 1) * (x + 2.0 * y));

  // near-black strokes, mostly two pixels thick: a stroke of depth d against
  // this base drives the DoG trough to roughly -0.2 d, past the ramp
  // threshold
  const int strokes = 4 + static_cast<int>(unit() * 4);
  for (int s = 0; s < strokes; ++s) {
    double y = unit() * h, x = unit() * w;
    double dir = unit() * 6.283185307179586;
    const double ink = 0.02 + 0.08 * unit();
    const bool wide = unit() < 0.7;
    const int len = 8 + static_cast<int>(unit() * 2 * std::max(h, w) / 3);
    for (int step = 0; step < len; ++step) {
      const int iy = static_cast<int>(y), ix = static_cast<int>(x);
      for (int dy = 0; dy <= (wide ? 1 : 0); ++dy)
        if (iy + dy >= 0 && iy + dy < h && ix >= 0 && ix < w)
          for (int c = 0; c < 3; ++c)
            img.at(iy + dy, ix, c) = std::min(img.at(iy + dy, ix, c), ink);
      y += std::sin(dir);
      x += std::cos(dir);
      dir += 0.35 * (unit() - 0.5);
    }
  }

  // a grating near the DoG passband peak (~1.05 rad/px) keeps part of the
  // ramp on its slope
  const int py = static_cast<int>(unit() * h / 2), px = static_cast<int>(unit() * w / 2);
  for (int y = py; y < std::min(h, py + h / 2); ++y)
    for (int x = px; x < std::min(w, px + w / 2); ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) -= 0.6 * (0.5 + 0.5 * std::sin(1.05 * x + 0.2 * y + c));

  ImageTensor<T> out(h, w, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    out.data[i] = static_cast<T>(std::clamp(img.data[i], 0.02, 0.97));
  return out;
}

inline std::vector<std::pair<std::string, LossWeights>> gradcheck_configs() {
  auto with = [](double l1, double l2, double l3, double l4, double l5) {
    LossWeights w;
    w.lambda1 = l1;
    w.lambda2 = l2;
    w.lambda3 = l3;
    w.lambda4 = l4;
    w.lambda5 = l5;
    return w;
  };
  return {
      {"content", with(1, 0, 0, 0, 0)},
      {"style", with(0, 0, 1, 0, 0)},
      {"mxdog-content", with(0, 1, 0, 0, 0)},
      {"mxdog-content-cns", with(0, 0, 0, 1, 0)},
      {"mxdog-style-cns", with(0, 0, 0, 0, 1)},
      {"defaults", LossWeights{}},
  };
}

}  // namespace detail

/// Compare the analytic gradient of the full objective against central finite
/// differences at `n_samples` coordinates for each weight configuration.
template <typename T>
GradcheckReport run_gradcheck(int size, std::uint32_t seed, double threshold,
                              int n_samples = 50) {
  if (size < 16) throw ValueError("gradcheck: size must be >= 16");
  GradcheckReport report;
  report.size = size;
  report.seed = seed;
  report.precision = sizeof(T) == 8 ? 64 : 32;
  report.threshold = threshold;

  const FeatureNet<T> net = make_test_net<T>(seed, 8);
  const MxdogParams params;
  const double rho = 50.0;
  const ImageTensor<T> content = detail::textured_test_image<T>(size, size, seed * 7919u + 1u);
  const ImageTensor<T> style = detail::textured_test_image<T>(size, size, seed * 7919u + 2u);
  const ImageTensor<T> probe = detail::textured_test_image<T>(size, size, seed * 7919u + 3u);

  const double h = 1e-3;
  bool all_pass = true;
  int config_index = 0;
  for (const auto& [name, weights] : detail::gradcheck_configs()) {
    const StyleTargets<T> targets = precompute_targets(content, style, net, params, weights);
    auto [bd, grad] = total_loss_and_grad(probe, targets, net, params, weights, rho);

    std::mt19937 gen(seed ^ (0x9e3779b9u + static_cast<std::uint32_t>(config_index++)));
    std::vector<std::size_t> coords(probe.data.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    std::shuffle(coords.begin(), coords.end(), gen);

    GradcheckConfigResult res;
    res.name = name;
    auto central_diff = [&](std::size_t idx, double step) {
      ImageTensor<T> perturbed = probe;
      perturbed.data[idx] = static_cast<T>(static_cast<double>(probe.data[idx]) + step);
      const double lp = total_loss(perturbed, targets, net, params, weights, rho).total;
      perturbed.data[idx] = static_cast<T>(static_cast<double>(probe.data[idx]) - step);
      const double lm = total_loss(perturbed, targets, net, params, weights, rho).total;
      return (lp - lm) / (2.0 * step);
    };
    for (std::size_t i = 0; i < coords.size() && res.samples < n_samples; ++i) {
      const std::size_t idx = coords[i];
      const double fd = central_diff(idx, h);
      // Skip coordinates whose difference quotient is not trustworthy at the
      // pass threshold: a kink inside the probe window, or truncation beyond
      // it, shows up as disagreement under step refinement.
      const double fd_fine = central_diff(idx, h / 16.0);
      if (std::abs(fd - fd_fine) >
          0.2 * threshold * std::max({std::abs(fd), std::abs(fd_fine), 1e-8})) {
        ++res.excluded;
        continue;
      }
      ++res.samples;
      const double an = static_cast<double>(grad.data[idx]);
      const double denom = std::max({std::abs(an), std::abs(fd), 1e-8});
      res.max_rel_err = std::max(res.max_rel_err, std::abs(an - fd) / denom);
    }
    res.pass = res.max_rel_err <= threshold && res.samples >= std::min(n_samples, 50);
    all_pass = all_pass && res.pass;
    report.configs.push_back(std::move(res));
  }
  report.pass = all_pass;
  return report;
}

/// Precision-dispatching wrapper. The 1e-4 pass threshold is meaningful in
/// 64-bit mode; the 32-bit path uses a loose threshold and exists to expose
/// float-level noise, not to gate correctness.
inline GradcheckReport gradcheck(int size, std::uint32_t seed, int precision) {
  if (precision == 64) return run_gradcheck<double>(size, seed, 1e-4);
  if (precision == 32) return run_gradcheck<float>(size, seed, 5e-2);
  throw ValueError("gradcheck: precision must be 32 or 64");
}

}  // namespace inkwash
