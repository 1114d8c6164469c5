#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "inkwash/error.hpp"
#include "inkwash/tensor.hpp"
#include "inkwash/weights.hpp"

namespace inkwash {

/// One layer's activation: planar C x H x W.
template <typename T>
struct FeatureMap {
  std::string layer_name;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  FeatureMap() = default;
  FeatureMap(std::string name, int c, int h, int w, T fill = T(0))
      : layer_name(std::move(name)), channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, fill) {}

  T& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  const T& at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::size_t spatial_size() const { return static_cast<std::size_t>(height) * width; }
  bool same_shape(const FeatureMap& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

enum class LayerKind { Conv, Relu, MaxPool };

/// Conv layers carry parameters; relu and 2x2 maxpool are parameter-free.
template <typename T>
struct Layer {
  LayerKind kind = LayerKind::Relu;
  std::string name;
  int out_channels = 0, in_channels = 0, kernel_h = 0, kernel_w = 0;
  std::vector<T> kernel;  // out x in x kh x kw
  std::vector<T> bias;
};

/// Fixed feature extractor: named conv/relu/pool sequence plus the
/// per-channel means subtracted from the input. Immutable after construction.
template <typename T>
struct FeatureNet {
  std::array<T, 3> input_means{T(0.485), T(0.456), T(0.406)};
  std::vector<Layer<T>> layers;

  bool has_layer(const std::string& name) const {
    for (const auto& l : layers)
      if (l.name == name) return true;
    return false;
  }
};

/// Channel mean subtraction (grayscale inputs are replicated to three
/// channels first). No scaling.
template <typename T>
ImageTensor<T> preprocess(const ImageTensor<T>& img, const std::array<T, 3>& means) {
  ImageTensor<T> out = replicate_to_rgb(img);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) -= means[c];
  return out;
}

namespace detail {

template <typename T>
FeatureMap<T> image_to_feature(const ImageTensor<T>& img) {
  FeatureMap<T> f("input", img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) f.at(c, y, x) = img.at(y, x, c);
  return f;
}

/// Cross-correlation, stride 1, zero padding of half the (odd) kernel size.
template <typename T>
FeatureMap<T> conv_forward(const Layer<T>& L, const FeatureMap<T>& in) {
  const int ph = L.kernel_h / 2, pw = L.kernel_w / 2;
  FeatureMap<T> out(L.name, L.out_channels, in.height, in.width);
  for (int oc = 0; oc < L.out_channels; ++oc) {
    const T b = L.bias[oc];
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) {
        T acc = b;
        for (int ic = 0; ic < L.in_channels; ++ic) {
          const std::size_t kbase =
              (static_cast<std::size_t>(oc) * L.in_channels + ic) * L.kernel_h * L.kernel_w;
          for (int ky = 0; ky < L.kernel_h; ++ky) {
            const int iy = y + ky - ph;
            if (iy < 0 || iy >= in.height) continue;
            for (int kx = 0; kx < L.kernel_w; ++kx) {
              const int ix = x + kx - pw;
              if (ix < 0 || ix >= in.width) continue;
              acc += L.kernel[kbase + static_cast<std::size_t>(ky) * L.kernel_w + kx] *
                     in.at(ic, iy, ix);
            }
          }
        }
        out.at(oc, y, x) = acc;
      }
  }
  return out;
}

template <typename T>
FeatureMap<T> conv_backward_input(const Layer<T>& L, const FeatureMap<T>& in,
                                  const FeatureMap<T>& grad_out) {
  const int ph = L.kernel_h / 2, pw = L.kernel_w / 2;
  FeatureMap<T> grad_in(in.layer_name, in.channels, in.height, in.width);
  for (int oc = 0; oc < L.out_channels; ++oc)
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) {
        const T g = grad_out.at(oc, y, x);
        if (g == T(0)) continue;
        for (int ic = 0; ic < L.in_channels; ++ic) {
          const std::size_t kbase =
              (static_cast<std::size_t>(oc) * L.in_channels + ic) * L.kernel_h * L.kernel_w;
          for (int ky = 0; ky < L.kernel_h; ++ky) {
            const int iy = y + ky - ph;
            if (iy < 0 || iy >= in.height) continue;
            for (int kx = 0; kx < L.kernel_w; ++kx) {
              const int ix = x + kx - pw;
              if (ix < 0 || ix >= in.width) continue;
              grad_in.at(ic, iy, ix) +=
                  L.kernel[kbase + static_cast<std::size_t>(ky) * L.kernel_w + kx] * g;
            }
          }
        }
      }
  return grad_in;
}

template <typename T>
FeatureMap<T> relu_forward(const Layer<T>& L, const FeatureMap<T>& in) {
  FeatureMap<T> out(L.name, in.channels, in.height, in.width);
  for (std::size_t i = 0; i < in.data.size(); ++i)
    out.data[i] = in.data[i] > T(0) ? in.data[i] : T(0);
  return out;
}

template <typename T>
FeatureMap<T> relu_backward(const FeatureMap<T>& in, const FeatureMap<T>& grad_out) {
  FeatureMap<T> grad_in(in.layer_name, in.channels, in.height, in.width);
  for (std::size_t i = 0; i < in.data.size(); ++i)
    grad_in.data[i] = in.data[i] > T(0) ? grad_out.data[i] : T(0);
  return grad_in;
}

template <typename T>
FeatureMap<T> maxpool_forward(const Layer<T>& L, const FeatureMap<T>& in) {
  const int h2 = in.height / 2, w2 = in.width / 2;
  if (h2 < 1 || w2 < 1) throw ValueError("forward: image too small (empty pooled map)");
  FeatureMap<T> out(L.name, in.channels, h2, w2);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < h2; ++y)
      for (int x = 0; x < w2; ++x) {
        T best = in.at(c, 2 * y, 2 * x);
        if (in.at(c, 2 * y, 2 * x + 1) > best) best = in.at(c, 2 * y, 2 * x + 1);
        if (in.at(c, 2 * y + 1, 2 * x) > best) best = in.at(c, 2 * y + 1, 2 * x);
        if (in.at(c, 2 * y + 1, 2 * x + 1) > best) best = in.at(c, 2 * y + 1, 2 * x + 1);
        out.at(c, y, x) = best;
      }
  return out;
}

/// Gradient routed to the argmax element; ties go to the first element in
/// row-major order of the 2x2 block.
template <typename T>
FeatureMap<T> maxpool_backward(const FeatureMap<T>& in, const FeatureMap<T>& grad_out) {
  FeatureMap<T> grad_in(in.layer_name, in.channels, in.height, in.width);
  for (int c = 0; c < grad_out.channels; ++c)
    for (int y = 0; y < grad_out.height; ++y)
      for (int x = 0; x < grad_out.width; ++x) {
        int ay = 0, ax = 0;
        T best = in.at(c, 2 * y, 2 * x);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            if (in.at(c, 2 * y + dy, 2 * x + dx) > best) {
              best = in.at(c, 2 * y + dy, 2 * x + dx);
              ay = dy;
              ax = dx;
            }
        grad_in.at(c, 2 * y + ay, 2 * x + ax) += grad_out.at(c, y, x);
      }
  return grad_in;
}

template <typename T>
FeatureMap<T> apply_layer(const Layer<T>& L, const FeatureMap<T>& in) {
  switch (L.kind) {
    case LayerKind::Conv: return conv_forward(L, in);
    case LayerKind::Relu: return relu_forward(L, in);
    case LayerKind::MaxPool: return maxpool_forward(L, in);
  }
  throw ValueError("apply_layer: unknown layer kind");
}

inline std::string relu_name_for(const std::string& conv_name) {
  if (conv_name.rfind("conv", 0) == 0) return "relu" + conv_name.substr(4);
  return conv_name + "_relu";
}

}  // namespace detail

/// Build a conv/relu net from an ordered layer list, inserting a 2x2 maxpool
/// after each relu named in pool_after. Channel chaining is validated.
template <typename T>
FeatureNet<T> make_conv_net(const std::vector<ConvWeights>& convs,
                            const std::set<std::string>& pool_after,
                            std::array<T, 3> means = {T(0.485), T(0.456), T(0.406)}) {
  if (convs.empty()) throw ValueError("make_conv_net: no layers");
  FeatureNet<T> net;
  net.input_means = means;
  int cur_channels = static_cast<int>(convs.front().in_channels);
  int pool_index = 0;
  for (const auto& cw : convs) {
    if (cw.kernel_h % 2 == 0 || cw.kernel_w % 2 == 0)
      throw ValueError("make_conv_net: kernel dims must be odd in layer '" + cw.name + "'");
    if (static_cast<int>(cw.in_channels) != cur_channels)
      throw ValueError("make_conv_net: channel mismatch at layer '" + cw.name + "'");
    if (cw.kernel.size() != cw.kernel_count() || cw.bias.size() != cw.out_channels)
      throw ValueError("make_conv_net: parameter count mismatch in layer '" + cw.name + "'");
    Layer<T> conv;
    conv.kind = LayerKind::Conv;
    conv.name = cw.name;
    conv.out_channels = static_cast<int>(cw.out_channels);
    conv.in_channels = static_cast<int>(cw.in_channels);
    conv.kernel_h = static_cast<int>(cw.kernel_h);
    conv.kernel_w = static_cast<int>(cw.kernel_w);
    conv.kernel.assign(cw.kernel.begin(), cw.kernel.end());
    conv.bias.assign(cw.bias.begin(), cw.bias.end());
    net.layers.push_back(std::move(conv));

    Layer<T> relu;
    relu.kind = LayerKind::Relu;
    relu.name = detail::relu_name_for(cw.name);
    net.layers.push_back(std::move(relu));

    if (pool_after.count(net.layers.back().name)) {
      Layer<T> pool;
      pool.kind = LayerKind::MaxPool;
      pool.name = "pool" + std::to_string(++pool_index);
      net.layers.push_back(std::move(pool));
    }
    cur_channels = static_cast<int>(cw.out_channels);
  }
  return net;
}

inline const std::vector<std::string>& vgg16_conv_names() {
  static const std::vector<std::string> names = {
      "conv1_1", "conv1_2", "conv2_1", "conv2_2", "conv3_1",
      "conv3_2", "conv3_3", "conv4_1", "conv4_2", "conv4_3"};
  return names;
}

inline const std::vector<int>& vgg16_channel_counts() {
  static const std::vector<int> counts = {64, 64, 128, 128, 256, 256, 256, 512, 512, 512};
  return counts;
}

/// VGG-16 topology through relu4_3: 3x3 convs named conv1_1..conv4_3 with
/// pools after relu1_2, relu2_2 and relu3_3. Channel counts come from the
/// provided weights (the full net or a uniformly scaled test variant).
template <typename T>
FeatureNet<T> make_vgg16_net(const std::vector<ConvWeights>& convs,
                             std::array<T, 3> means = {T(0.485), T(0.456), T(0.406)}) {
  const auto& names = vgg16_conv_names();
  if (convs.size() != names.size())
    throw ValueError("make_vgg16_net: expected " + std::to_string(names.size()) + " conv layers, got " +
                     std::to_string(convs.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (convs[i].name != names[i])
      throw ValueError("make_vgg16_net: layer " + std::to_string(i) + " must be '" + names[i] +
                       "', got '" + convs[i].name + "'");
    if (convs[i].kernel_h != 3 || convs[i].kernel_w != 3)
      throw ValueError("make_vgg16_net: '" + convs[i].name + "' must use a 3x3 kernel");
  }
  if (convs.front().in_channels != 3)
    throw ValueError("make_vgg16_net: conv1_1 must take 3 input channels");
  return make_conv_net<T>(convs, {"relu1_2", "relu2_2", "relu3_3"}, means);
}

/// Deterministic VGG-16-shaped test weights: channel counts divided by
/// `scale`, kernels uniform in +-sqrt(3/fan_in), small positive biases.
inline std::vector<ConvWeights> make_test_net_weights(std::uint32_t seed, int scale) {
  if (scale < 1 || 64 % scale != 0)
    throw ValueError("make_test_net: scale must divide 64");
  std::mt19937 gen(seed);
  auto next_unit = [&gen] { return gen() * (1.0 / 4294967296.0); };  // [0,1)
  const auto& names = vgg16_conv_names();
  const auto& counts = vgg16_channel_counts();
  std::vector<ConvWeights> convs;
  convs.reserve(names.size());
  int in_ch = 3;
  for (std::size_t i = 0; i < names.size(); ++i) {
    ConvWeights cw;
    cw.name = names[i];
    cw.out_channels = static_cast<std::uint32_t>(counts[i] / scale);
    cw.in_channels = static_cast<std::uint32_t>(in_ch);
    cw.kernel_h = 3;
    cw.kernel_w = 3;
    const double fan_in = static_cast<double>(cw.in_channels) * 9.0;
    const double bound = std::sqrt(3.0 / fan_in);
    cw.kernel.resize(cw.kernel_count());
    for (float& v : cw.kernel) v = static_cast<float>((2.0 * next_unit() - 1.0) * bound);
    cw.bias.resize(cw.out_channels);
    for (float& v : cw.bias) v = static_cast<float>(next_unit() * 0.05);
    in_ch = static_cast<int>(cw.out_channels);
    convs.push_back(std::move(cw));
  }
  return convs;
}

template <typename T>
FeatureNet<T> make_test_net(std::uint32_t seed, int scale) {
  return make_vgg16_net<T>(make_test_net_weights(seed, scale));
}

/// All intermediate activations of one forward run;
/// activations[0] is the preprocessed input, activations[i+1] the output of
/// layers[i].
template <typename T>
struct ForwardTrace {
  std::vector<FeatureMap<T>> activations;
};

template <typename T>
ForwardTrace<T> forward_trace(const FeatureNet<T>& net, const ImageTensor<T>& img) {
  ForwardTrace<T> tr;
  tr.activations.reserve(net.layers.size() + 1);
  tr.activations.push_back(detail::image_to_feature(preprocess(img, net.input_means)));
  for (const auto& layer : net.layers)
    tr.activations.push_back(detail::apply_layer(layer, tr.activations.back()));
  return tr;
}

/// Run the net and return the requested tap activations (layer outputs).
template <typename T>
std::map<std::string, FeatureMap<T>> forward(const FeatureNet<T>& net, const ImageTensor<T>& img,
                                             const std::set<std::string>& taps) {
  for (const auto& t : taps)
    if (!net.has_layer(t)) throw ValueError("forward: unknown tap name '" + t + "'");
  std::map<std::string, FeatureMap<T>> out;
  FeatureMap<T> cur = detail::image_to_feature(preprocess(img, net.input_means));
  for (const auto& layer : net.layers) {
    cur = detail::apply_layer(layer, cur);
    if (taps.count(layer.name)) out.emplace(layer.name, cur);
    if (out.size() == taps.size()) break;
  }
  return out;
}

/// Reverse-mode accumulation of dL/d(img) for L = sum over taps of
/// <tap_grad, tap_output>, reusing the activations of a forward_trace run.
template <typename T>
ImageTensor<T> backward_from_trace(const FeatureNet<T>& net, const ForwardTrace<T>& trace,
                                   const ImageTensor<T>& img,
                                   const std::map<std::string, FeatureMap<T>>& tap_grads) {
  for (const auto& [name, g] : tap_grads) {
    bool found = false;
    for (std::size_t i = 0; i < net.layers.size(); ++i)
      if (net.layers[i].name == name) {
        if (!g.same_shape(trace.activations[i + 1]))
          throw ValueError("backward: tap gradient shape mismatch at '" + name + "'");
        found = true;
        break;
      }
    if (!found) throw ValueError("backward: unknown tap name '" + name + "'");
  }

  const std::size_t n = net.layers.size();
  FeatureMap<T> grad(trace.activations[n].layer_name, trace.activations[n].channels,
                     trace.activations[n].height, trace.activations[n].width);
  if (auto it = tap_grads.find(net.layers[n - 1].name); it != tap_grads.end())
    grad.data = it->second.data;

  for (std::size_t i = n; i-- > 0;) {
    const auto& layer = net.layers[i];
    const auto& in = trace.activations[i];
    switch (layer.kind) {
      case LayerKind::Conv: grad = detail::conv_backward_input(layer, in, grad); break;
      case LayerKind::Relu: grad = detail::relu_backward(in, grad); break;
      case LayerKind::MaxPool: grad = detail::maxpool_backward(in, grad); break;
    }
    if (i > 0) {
      if (auto it = tap_grads.find(net.layers[i - 1].name); it != tap_grads.end())
        for (std::size_t j = 0; j < grad.data.size(); ++j) grad.data[j] += it->second.data[j];
    }
  }

  // preprocess is mean subtraction: identity gradient; grayscale replication
  // sums the three channel gradients.
  ImageTensor<T> out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      if (img.channels == 3) {
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = grad.at(c, y, x);
      } else {
        out.at(y, x, 0) = grad.at(0, y, x) + grad.at(1, y, x) + grad.at(2, y, x);
      }
    }
  return out;
}

template <typename T>
ImageTensor<T> backward(const FeatureNet<T>& net, const ImageTensor<T>& img,
                        const std::map<std::string, FeatureMap<T>>& tap_grads) {
  const ForwardTrace<T> trace = forward_trace(net, img);
  return backward_from_trace(net, trace, img, tap_grads);
}

}  // namespace inkwash
