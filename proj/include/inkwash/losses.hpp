#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "inkwash/error.hpp"
#include "inkwash/feature_net.hpp"
#include "inkwash/filters.hpp"
#include "inkwash/tensor.hpp"

namespace inkwash {

/// Per-layer feature correlation matrix G_ij = (1/M) sum_k F_ik F_jk.
/// Symmetric by construction: the upper triangle is computed and mirrored.
template <typename T>
struct GramMatrix {
  std::string layer_name;
  int n = 0;
  std::vector<T> data;  // n x n

  T& at(int i, int j) { return data[static_cast<std::size_t>(i) * n + j]; }
  const T& at(int i, int j) const { return data[static_cast<std::size_t>(i) * n + j]; }
};

template <typename T>
GramMatrix<T> gram(const FeatureMap<T>& f) {
  GramMatrix<T> g;
  g.layer_name = f.layer_name;
  g.n = f.channels;
  g.data.assign(static_cast<std::size_t>(g.n) * g.n, T(0));
  const std::size_t m = f.spatial_size();
  const double inv_m = 1.0 / static_cast<double>(m);
  for (int i = 0; i < g.n; ++i) {
    const T* fi = f.data.data() + static_cast<std::size_t>(i) * m;
    for (int j = i; j < g.n; ++j) {
      const T* fj = f.data.data() + static_cast<std::size_t>(j) * m;
      double acc = 0.0;
      for (std::size_t k = 0; k < m; ++k) acc += static_cast<double>(fi[k]) * fj[k];
      const T v = static_cast<T>(acc * inv_m);
      g.at(i, j) = v;
      g.at(j, i) = v;
    }
  }
  return g;
}

/// Mean-squared feature distance (1/(N*M)) sum (F - target)^2, normalized by
/// the target's spatial size.
template <typename T>
T content_loss(const FeatureMap<T>& f, const FeatureMap<T>& target) {
  if (!f.same_shape(target)) throw ValueError("content_loss: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < f.data.size(); ++i) {
    const double d = static_cast<double>(f.data[i]) - static_cast<double>(target.data[i]);
    acc += d * d;
  }
  return static_cast<T>(acc / (static_cast<double>(target.channels) * target.spatial_size()));
}

namespace detail {

/// One layer's style term: (1/N^2) sum_ij (G(f) - G_target)^2.
template <typename T>
double style_layer_loss(const FeatureMap<T>& f, const GramMatrix<T>& gt) {
  const GramMatrix<T> g = gram(f);
  if (g.n != gt.n) throw ValueError("style_loss: Gram size mismatch at layer '" + f.layer_name + "'");
  double acc = 0.0;
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    const double d = static_cast<double>(g.data[i]) - static_cast<double>(gt.data[i]);
    acc += d * d;
  }
  return acc / (static_cast<double>(g.n) * g.n);
}

}  // namespace detail

/// Summed per-layer Gram distance: sum_l (1/N_l^2) sum_ij (G - G_target)^2.
template <typename T>
T style_loss(const std::map<std::string, FeatureMap<T>>& features,
             const std::map<std::string, GramMatrix<T>>& targets) {
  if (features.size() != targets.size()) throw ValueError("style_loss: layer-set mismatch");
  double total = 0.0;
  for (const auto& [name, f] : features) {
    auto it = targets.find(name);
    if (it == targets.end()) throw ValueError("style_loss: no target for layer '" + name + "'");
    total += detail::style_layer_loss(f, it->second);
  }
  return static_cast<T>(total);
}

/// Weighting factors for the five loss terms plus the tap configuration.
struct LossWeights {
  double lambda1 = 1.0;    // content
  double lambda2 = 0.2;    // abstract content
  double lambda3 = 5.0;    // style
  double lambda4 = 2e2;    // abstract content constraint
  double lambda5 = 1e3;    // abstract style constraint
  std::string content_layer = "relu3_3";
  std::vector<std::string> style_layers = {"relu1_2", "relu2_1", "relu2_2", "relu3_1",
                                           "relu3_3", "relu4_1", "relu4_3"};

  void validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0 || lambda5 < 0)
      throw ValueError("LossWeights: weights must be nonnegative");
    if (content_layer.empty() || style_layers.empty())
      throw ValueError("LossWeights: layer names must be set");
  }
};

/// The five raw term values; total is the weighted sum, composed exactly as
/// lambda1*l_content + ... + lambda5*l_mxdog_style_cns. The two optional
/// *_hard values re-evaluate the constraint terms through the exact (hard)
/// pipeline for diagnostics; they are not part of total.
struct LossBreakdown {
  double l_content = 0.0;
  double l_mxdog_content = 0.0;
  double l_style = 0.0;
  double l_mxdog_content_cns = 0.0;
  double l_mxdog_style_cns = 0.0;
  double total = 0.0;
  bool has_hard_diagnostics = false;
  double l_mxdog_content_cns_hard = 0.0;
  double l_mxdog_style_cns_hard = 0.0;
};

/// Fixed optimization targets, all computed once with the exact (hard)
/// abstraction pipeline.
template <typename T>
struct StyleTargets {
  FeatureMap<T> content_features;                      // F(content) at content_layer
  FeatureMap<T> mxdog_content_features;                // F(mxdog(content)) at content_layer
  std::map<std::string, GramMatrix<T>> style_grams;        // G(style) at style layers
  std::map<std::string, GramMatrix<T>> mxdog_style_grams;  // G(mxdog(style)) at style layers
  ImageTensor<T> content_mxdog;
  ImageTensor<T> style_mxdog;
  int content_height = 0;
  int content_width = 0;
  int content_channels = 0;
};

template <typename T>
StyleTargets<T> precompute_targets(const ImageTensor<T>& content, const ImageTensor<T>& style,
                                   const FeatureNet<T>& net, const MxdogParams& params,
                                   const LossWeights& w) {
  w.validate();
  params.validate();
  if (content.height < 16 || content.width < 16 || style.height < 16 || style.width < 16)
    throw ValueError("precompute_targets: images must be at least 16x16");
  StyleTargets<T> t;
  t.content_height = content.height;
  t.content_width = content.width;
  t.content_channels = content.channels;
  t.content_mxdog = mxdog(content, params);
  t.style_mxdog = mxdog(style, params);

  const std::set<std::string> style_taps(w.style_layers.begin(), w.style_layers.end());
  t.content_features = std::move(forward(net, content, {w.content_layer}).at(w.content_layer));
  t.mxdog_content_features =
      std::move(forward(net, t.content_mxdog, {w.content_layer}).at(w.content_layer));
  for (auto& [name, f] : forward(net, style, style_taps)) t.style_grams.emplace(name, gram(f));
  for (auto& [name, f] : forward(net, t.style_mxdog, style_taps))
    t.mxdog_style_grams.emplace(name, gram(f));
  return t;
}

namespace detail {

template <typename T>
std::map<std::string, const FeatureMap<T>*> taps_from_trace(const FeatureNet<T>& net,
                                                            const ForwardTrace<T>& trace,
                                                            const std::set<std::string>& taps) {
  std::map<std::string, const FeatureMap<T>*> out;
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    if (taps.count(net.layers[i].name)) out.emplace(net.layers[i].name, &trace.activations[i + 1]);
  if (out.size() != taps.size()) throw ValueError("unknown tap name in loss configuration");
  return out;
}

/// d(content_loss)/dF scaled by `weight`, accumulated into grad.
template <typename T>
void add_content_grad(const FeatureMap<T>& f, const FeatureMap<T>& target, double weight,
                      FeatureMap<T>& grad) {
  const double scale =
      2.0 * weight / (static_cast<double>(target.channels) * target.spatial_size());
  for (std::size_t i = 0; i < f.data.size(); ++i)
    grad.data[i] += static_cast<T>(scale * (static_cast<double>(f.data[i]) - target.data[i]));
}

/// d(per-layer style term)/dF scaled by `weight`, accumulated into grad:
/// dL/dG = 2(G - G_t)/N^2, then dL/dF = (2/M) (dL/dG) F.
template <typename T>
void add_style_grad(const FeatureMap<T>& f, const GramMatrix<T>& gt, double weight,
                    FeatureMap<T>& grad) {
  const GramMatrix<T> g = gram(f);
  if (g.n != gt.n) throw ValueError("style gradient: Gram size mismatch");
  const int n = g.n;
  const std::size_t m = f.spatial_size();
  std::vector<double> dldg(static_cast<std::size_t>(n) * n);
  const double gscale = 2.0 * weight / (static_cast<double>(n) * n);
  for (std::size_t i = 0; i < dldg.size(); ++i)
    dldg[i] = gscale * (static_cast<double>(g.data[i]) - gt.data[i]);
  const double fscale = 2.0 / static_cast<double>(m);
  for (int i = 0; i < n; ++i) {
    T* gi = grad.data.data() + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < n; ++j) {
      const double c = fscale * dldg[static_cast<std::size_t>(i) * n + j];
      if (c == 0.0) continue;
      const T* fj = f.data.data() + static_cast<std::size_t>(j) * m;
      for (std::size_t k = 0; k < m; ++k) gi[k] += static_cast<T>(c * fj[k]);
    }
  }
}

template <typename T>
LossBreakdown evaluate_total_loss(const ImageTensor<T>& img, const StyleTargets<T>& targets,
                                  const FeatureNet<T>& net, const MxdogParams& params,
                                  const LossWeights& w, double rho, ImageTensor<T>* grad_out,
                                  bool hard_diagnostics) {
  w.validate();
  params.validate();
  if (img.height != targets.content_height || img.width != targets.content_width ||
      img.channels != targets.content_channels)
    throw ValueError("total_loss: image does not match the content-image dimensions");

  LossBreakdown bd;
  if (grad_out) *grad_out = ImageTensor<T>(img.height, img.width, img.channels);

  const std::set<std::string> style_taps(w.style_layers.begin(), w.style_layers.end());

  // Terms evaluated on features of the image itself.
  if (w.lambda1 > 0 || w.lambda2 > 0 || w.lambda3 > 0) {
    std::set<std::string> taps;
    if (w.lambda1 > 0 || w.lambda2 > 0) taps.insert(w.content_layer);
    if (w.lambda3 > 0) taps.insert(style_taps.begin(), style_taps.end());

    std::optional<ForwardTrace<T>> trace;
    std::map<std::string, FeatureMap<T>> owned;
    std::map<std::string, const FeatureMap<T>*> feats;
    if (grad_out) {
      trace = forward_trace(net, img);
      feats = taps_from_trace(net, *trace, taps);
    } else {
      owned = forward(net, img, taps);
      for (const auto& [name, f] : owned) feats.emplace(name, &f);
    }

    std::map<std::string, FeatureMap<T>> tap_grads;
    auto grad_at = [&](const std::string& name) -> FeatureMap<T>& {
      auto it = tap_grads.find(name);
      if (it == tap_grads.end()) {
        const FeatureMap<T>* f = feats.at(name);
        it = tap_grads.emplace(name, FeatureMap<T>(name, f->channels, f->height, f->width)).first;
      }
      return it->second;
    };

    if (w.lambda1 > 0) {
      bd.l_content = content_loss(*feats.at(w.content_layer), targets.content_features);
      if (grad_out)
        add_content_grad(*feats.at(w.content_layer), targets.content_features, w.lambda1,
                         grad_at(w.content_layer));
    }
    if (w.lambda2 > 0) {
      bd.l_mxdog_content = content_loss(*feats.at(w.content_layer), targets.mxdog_content_features);
      if (grad_out)
        add_content_grad(*feats.at(w.content_layer), targets.mxdog_content_features, w.lambda2,
                         grad_at(w.content_layer));
    }
    if (w.lambda3 > 0) {
      double acc = 0.0;
      for (const auto& name : w.style_layers) {
        const FeatureMap<T>& f = *feats.at(name);
        const GramMatrix<T>& gt = targets.style_grams.at(name);
        acc += style_layer_loss(f, gt);
        if (grad_out) add_style_grad(f, gt, w.lambda3, grad_at(name));
      }
      bd.l_style = acc;
    }
    if (grad_out && !tap_grads.empty()) {
      ImageTensor<T> g = backward_from_trace(net, *trace, img, tap_grads);
      for (std::size_t i = 0; i < grad_out->data.size(); ++i) grad_out->data[i] += g.data[i];
    }
  }

  // Constraint terms evaluated on the smooth surrogate of the abstraction.
  if (w.lambda4 > 0 || w.lambda5 > 0) {
    SoftMxdogTrace<T> strace = soft_mxdog_trace(img, params, rho);
    const ImageTensor<T>& soft = strace.soft_out;

    std::set<std::string> taps;
    if (w.lambda4 > 0) taps.insert(w.content_layer);
    if (w.lambda5 > 0) taps.insert(style_taps.begin(), style_taps.end());

    std::optional<ForwardTrace<T>> trace;
    std::map<std::string, FeatureMap<T>> owned;
    std::map<std::string, const FeatureMap<T>*> feats;
    if (grad_out) {
      trace = forward_trace(net, soft);
      feats = taps_from_trace(net, *trace, taps);
    } else {
      owned = forward(net, soft, taps);
      for (const auto& [name, f] : owned) feats.emplace(name, &f);
    }

    std::map<std::string, FeatureMap<T>> tap_grads;
    auto grad_at = [&](const std::string& name) -> FeatureMap<T>& {
      auto it = tap_grads.find(name);
      if (it == tap_grads.end()) {
        const FeatureMap<T>* f = feats.at(name);
        it = tap_grads.emplace(name, FeatureMap<T>(name, f->channels, f->height, f->width)).first;
      }
      return it->second;
    };

    if (w.lambda4 > 0) {
      bd.l_mxdog_content_cns =
          content_loss(*feats.at(w.content_layer), targets.mxdog_content_features);
      if (grad_out)
        add_content_grad(*feats.at(w.content_layer), targets.mxdog_content_features, w.lambda4,
                         grad_at(w.content_layer));
    }
    if (w.lambda5 > 0) {
      double acc = 0.0;
      for (const auto& name : w.style_layers) {
        const FeatureMap<T>& f = *feats.at(name);
        const GramMatrix<T>& gt = targets.mxdog_style_grams.at(name);
        acc += style_layer_loss(f, gt);
        if (grad_out) add_style_grad(f, gt, w.lambda5, grad_at(name));
      }
      bd.l_mxdog_style_cns = acc;
    }
    if (grad_out && !tap_grads.empty()) {
      ImageTensor<T> g_soft = backward_from_trace(net, *trace, soft, tap_grads);
      ImageTensor<T> g_img = soft_mxdog_backward(strace, g_soft, params, rho);
      for (std::size_t i = 0; i < grad_out->data.size(); ++i) grad_out->data[i] += g_img.data[i];
    }

    if (hard_diagnostics) {
      const ImageTensor<T> hard = mxdog(img, params);
      auto hard_feats = forward(net, hard, taps);
      if (w.lambda4 > 0)
        bd.l_mxdog_content_cns_hard =
            content_loss(hard_feats.at(w.content_layer), targets.mxdog_content_features);
      if (w.lambda5 > 0) {
        std::map<std::string, FeatureMap<T>> style_feats;
        for (const auto& name : w.style_layers)
          style_feats.emplace(name, std::move(hard_feats.at(name)));
        bd.l_mxdog_style_cns_hard = style_loss(style_feats, targets.mxdog_style_grams);
      }
      bd.has_hard_diagnostics = true;
    }
  }

  bd.total = w.lambda1 * bd.l_content + w.lambda2 * bd.l_mxdog_content + w.lambda3 * bd.l_style +
             w.lambda4 * bd.l_mxdog_content_cns + w.lambda5 * bd.l_mxdog_style_cns;
  if (!std::isfinite(bd.total))
    throw NumericError("total_loss: non-finite loss (diverged optimization)");
  return bd;
}

}  // namespace detail

/// Evaluate the full objective and its gradient w.r.t. the image. Terms with
/// zero weight are skipped entirely. The constraint terms differentiate
/// through the smooth surrogate; with hard_diagnostics they are additionally
/// reported through the exact pipeline.
template <typename T>
std::pair<LossBreakdown, ImageTensor<T>> total_loss_and_grad(
    const ImageTensor<T>& img, const StyleTargets<T>& targets, const FeatureNet<T>& net,
    const MxdogParams& params, const LossWeights& w, double rho, bool hard_diagnostics = false) {
  ImageTensor<T> grad;
  LossBreakdown bd =
      detail::evaluate_total_loss(img, targets, net, params, w, rho, &grad, hard_diagnostics);
  return {bd, std::move(grad)};
}

/// Loss values only (no gradient); used by finite-difference probes and
/// logging.
template <typename T>
LossBreakdown total_loss(const ImageTensor<T>& img, const StyleTargets<T>& targets,
                         const FeatureNet<T>& net, const MxdogParams& params, const LossWeights& w,
                         double rho, bool hard_diagnostics = false) {
  return detail::evaluate_total_loss(img, targets, net, params, w, rho,
                                     static_cast<ImageTensor<T>*>(nullptr), hard_diagnostics);
}

}  // namespace inkwash
