// inkwash: image abstraction filters and abstract style transfer by direct
// pixel-space optimization.

#include <CLI11.hpp>
#include <json.hpp>

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include "inkwash/inkwash.hpp"

namespace {

using json = nlohmann::json;

// Flag precedence: command line > config file > built-in defaults. Each
// subcommand accepts --config JSON whose flat keys mirror its flag names.
struct ConfigBinder {
  CLI::App* cmd = nullptr;
  std::map<std::string, std::function<void(const json&)>> setters;

  template <typename V>
  void bind(const std::string& key, V& var) {
    setters[key] = [&var, key](const json& j) {
      try {
        var = j.get<V>();
      } catch (const json::exception&) {
        throw inkwash::ValueError("config: bad value type for key '" + key + "'");
      }
    };
  }

  void apply(const std::string& path) {
    if (path.empty()) return;
    std::ifstream f(path);
    if (!f) throw inkwash::IoError("cannot open config file: " + path);
    json j;
    try {
      j = json::parse(f);
    } catch (const json::exception& e) {
      throw inkwash::ValueError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw inkwash::ValueError("config: top-level JSON object required");
    for (const auto& [key, val] : j.items()) {
      auto it = setters.find(key);
      if (it == setters.end()) throw inkwash::ValueError("config: unknown key '" + key + "'");
      if (cmd->count("--" + key) == 0) it->second(val);
    }
  }
};

std::uint64_t fnv1a64(const unsigned char* bytes, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t layer_checksum(const inkwash::ConvWeights& cw) {
  std::uint64_t h = fnv1a64(reinterpret_cast<const unsigned char*>(cw.name.data()), cw.name.size());
  const std::uint32_t dims[4] = {cw.out_channels, cw.in_channels, cw.kernel_h, cw.kernel_w};
  h = fnv1a64(reinterpret_cast<const unsigned char*>(dims), sizeof(dims), h);
  h = fnv1a64(reinterpret_cast<const unsigned char*>(cw.kernel.data()),
              cw.kernel.size() * sizeof(float), h);
  h = fnv1a64(reinterpret_cast<const unsigned char*>(cw.bias.data()),
              cw.bias.size() * sizeof(float), h);
  return h;
}

struct FilterArgs {
  std::string mode = "mxdog";
  std::string input, output, config;
  inkwash::MxdogParams params;
};

int cmd_filter(const FilterArgs& a) {
  if (a.mode != "gaussian" && a.mode != "dog" && a.mode != "xdog" && a.mode != "txdog" &&
      a.mode != "mxdog")
    throw inkwash::ValueError("filter: unknown mode '" + a.mode + "'");
  a.params.validate();
  const auto img = inkwash::load_image<float>(a.input);
  inkwash::ImageTensor<float> out;
  if (a.mode == "gaussian")
    out = inkwash::gaussian_blur(img, a.params.sigma);
  else if (a.mode == "dog")
    out = inkwash::dog(img, a.params);
  else if (a.mode == "xdog")
    out = inkwash::xdog(img, a.params);
  else if (a.mode == "txdog")
    out = inkwash::threshold_xdog(inkwash::xdog(img, a.params));
  else
    out = inkwash::mxdog(img, a.params);
  inkwash::save_image(out, a.output);
  return 0;
}

struct StylizeArgs {
  std::string content, style, output, weights, log, init = "content", config;
  int iters = 500;
  double lr = 1e-2;
  double lambda1 = 1.0, lambda2 = 0.2, lambda3 = 5.0, lambda4 = 2e2, lambda5 = 1e3;
  double rho = 50.0;
  int max_edge = 768;
  std::uint32_t seed = 0;
  int log_interval = 10;
};

int cmd_stylize(const StylizeArgs& a) {
  if (a.init != "content" && a.init != "noise")
    throw inkwash::ValueError("stylize: --init must be 'content' or 'noise'");

  inkwash::StylizeConfig cfg;
  cfg.iterations = a.iters;
  cfg.learning_rate = a.lr;
  cfg.weights.lambda1 = a.lambda1;
  cfg.weights.lambda2 = a.lambda2;
  cfg.weights.lambda3 = a.lambda3;
  cfg.weights.lambda4 = a.lambda4;
  cfg.weights.lambda5 = a.lambda5;
  cfg.rho = a.rho;
  cfg.seed = a.seed;
  cfg.init = a.init == "content" ? inkwash::StylizeConfig::Init::Content
                                 : inkwash::StylizeConfig::Init::Noise;
  cfg.max_edge = a.max_edge;
  cfg.log_interval = a.log_interval;
  cfg.validate();

  const auto content = inkwash::load_image<float>(a.content);
  const auto style = inkwash::load_image<float>(a.style);

  inkwash::FeatureNet<float> net;
  if (!a.weights.empty()) {
    net = inkwash::make_vgg16_net<float>(inkwash::read_weight_file(a.weights));
  } else {
    std::fprintf(stderr,
                 "NOTE: no --weights supplied; using a seeded random feature net "
                 "(unverified aesthetics: random test weights).\n");
    net = inkwash::make_test_net<float>(cfg.seed, 8);
  }

  const auto result = inkwash::stylize(content, style, net, cfg);
  inkwash::save_image(result.image, a.output);

  if (!a.log.empty()) {
    std::ofstream f(a.log, std::ios::binary);
    if (!f) throw inkwash::IoError("cannot open loss log for writing: " + a.log);
    f << "# iteration l_content l_mxdog_content l_style l_mxdog_content_cns l_mxdog_style_cns "
         "total\n";
    char line[512];
    for (const auto& rec : result.history) {
      std::snprintf(line, sizeof(line), "%d %.9g %.9g %.9g %.9g %.9g %.9g\n", rec.iteration,
                    rec.losses.l_content, rec.losses.l_mxdog_content, rec.losses.l_style,
                    rec.losses.l_mxdog_content_cns, rec.losses.l_mxdog_style_cns,
                    rec.losses.total);
      f << line;
    }
    if (!f) throw inkwash::IoError("cannot write loss log: " + a.log);
  }

  const auto& last = result.history.back().losses;
  std::printf("final losses: content=%.6g mxdog_content=%.6g style=%.6g mxdog_content_cns=%.6g "
              "mxdog_style_cns=%.6g total=%.6g\n",
              last.l_content, last.l_mxdog_content, last.l_style, last.l_mxdog_content_cns,
              last.l_mxdog_style_cns, last.total);
  if (last.has_hard_diagnostics)
    std::printf("hard-path constraint losses (surrogate gap): content_cns=%.6g style_cns=%.6g\n",
                last.l_mxdog_content_cns_hard, last.l_mxdog_style_cns_hard);
  return 0;
}

struct GradcheckArgs {
  int size = 16;
  std::uint32_t seed = 0;
  int precision = 64;
  std::string config;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  if (a.precision != 32 && a.precision != 64)
    throw inkwash::ValueError("gradcheck: --precision must be 32 or 64");
  const auto report = inkwash::gradcheck(a.size, a.seed, a.precision);
  std::printf("gradcheck size=%d seed=%u precision=%d threshold=%g\n", report.size, report.seed,
              report.precision, report.threshold);
  for (const auto& c : report.configs)
    std::printf("  %-18s max_rel_err=%.6g samples=%d %s\n", c.name.c_str(), c.max_rel_err,
                c.samples, c.pass ? "PASS" : "FAIL");
  std::printf("overall: %s\n", report.pass ? "PASS" : "FAIL");
  return report.pass ? 0 : 1;
}

int cmd_inspect_weights(const std::string& path) {
  const auto layers = inkwash::read_weight_file(path);
  std::printf("%-12s %-18s %12s %18s\n", "layer", "shape", "params", "checksum");
  std::size_t total = 0;
  for (const auto& cw : layers) {
    char shape[64];
    std::snprintf(shape, sizeof(shape), "%ux%ux%ux%u", cw.out_channels, cw.in_channels,
                  cw.kernel_h, cw.kernel_w);
    std::printf("%-12s %-18s %12zu %18" PRIx64 "\n", cw.name.c_str(), shape, cw.parameter_count(),
                layer_checksum(cw));
    total += cw.parameter_count();
  }
  std::printf("%zu layers, %zu parameters\n", layers.size(), total);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"inkwash: image abstraction filters and abstract style transfer"};
  app.require_subcommand(1);

  FilterArgs fa;
  ConfigBinder fb;
  auto* filter = app.add_subcommand("filter", "apply an abstraction filter stage to an image");
  fb.cmd = filter;
  filter->add_option("--mode", fa.mode, "gaussian|dog|xdog|txdog|mxdog")->capture_default_str();
  filter->add_option("--input", fa.input, "input image (PNG/PPM/PGM)")->required();
  filter->add_option("--output", fa.output, "output image path")->required();
  filter->add_option("--sigma", fa.params.sigma, "Gaussian std-dev in pixels")->capture_default_str();
  filter->add_option("--k", fa.params.k, "coarse-scale ratio")->capture_default_str();
  filter->add_option("--tau", fa.params.tau, "DoG control parameter")->capture_default_str();
  filter->add_option("--phi", fa.params.phi, "ramp steepness")->capture_default_str();
  filter->add_option("--epsilon", fa.params.epsilon, "ramp threshold")->capture_default_str();
  filter->add_option("--amin", fa.params.a_min, "minimum kept component area")->capture_default_str();
  filter->add_option("--config", fa.config, "JSON config file (keys mirror flags)");
  fb.bind("mode", fa.mode);
  fb.bind("input", fa.input);
  fb.bind("output", fa.output);
  fb.bind("sigma", fa.params.sigma);
  fb.bind("k", fa.params.k);
  fb.bind("tau", fa.params.tau);
  fb.bind("phi", fa.params.phi);
  fb.bind("epsilon", fa.params.epsilon);
  fb.bind("amin", fa.params.a_min);

  StylizeArgs sa;
  ConfigBinder sb;
  auto* stylize = app.add_subcommand("stylize", "transfer a style onto a content image");
  sb.cmd = stylize;
  stylize->add_option("--content", sa.content, "content image")->required();
  stylize->add_option("--style", sa.style, "style image")->required();
  stylize->add_option("--output", sa.output, "output image path")->required();
  stylize->add_option("--weights", sa.weights, "feature-net weight file (random test net if absent)");
  stylize->add_option("--iters", sa.iters, "optimization steps")->capture_default_str();
  stylize->add_option("--lr", sa.lr, "Adam learning rate")->capture_default_str();
  stylize->add_option("--lambda1", sa.lambda1, "content weight")->capture_default_str();
  stylize->add_option("--lambda2", sa.lambda2, "abstract-content weight")->capture_default_str();
  stylize->add_option("--lambda3", sa.lambda3, "style weight")->capture_default_str();
  stylize->add_option("--lambda4", sa.lambda4, "abstract content constraint weight")->capture_default_str();
  stylize->add_option("--lambda5", sa.lambda5, "abstract style constraint weight")->capture_default_str();
  stylize->add_option("--rho", sa.rho, "surrogate threshold steepness")->capture_default_str();
  stylize->add_option("--max-edge", sa.max_edge, "resize longer edge to this")->capture_default_str();
  stylize->add_option("--seed", sa.seed, "RNG seed (noise init / test net)")->capture_default_str();
  stylize->add_option("--init", sa.init, "content|noise")->capture_default_str();
  stylize->add_option("--log", sa.log, "loss-history log path");
  stylize->add_option("--log-interval", sa.log_interval, "iterations between log records")->capture_default_str();
  stylize->add_option("--config", sa.config, "JSON config file (keys mirror flags)");
  sb.bind("content", sa.content);
  sb.bind("style", sa.style);
  sb.bind("output", sa.output);
  sb.bind("weights", sa.weights);
  sb.bind("iters", sa.iters);
  sb.bind("lr", sa.lr);
  sb.bind("lambda1", sa.lambda1);
  sb.bind("lambda2", sa.lambda2);
  sb.bind("lambda3", sa.lambda3);
  sb.bind("lambda4", sa.lambda4);
  sb.bind("lambda5", sa.lambda5);
  sb.bind("rho", sa.rho);
  sb.bind("max-edge", sa.max_edge);
  sb.bind("seed", sa.seed);
  sb.bind("init", sa.init);
  sb.bind("log", sa.log);
  sb.bind("log-interval", sa.log_interval);

  GradcheckArgs ga;
  ConfigBinder gb;
  auto* grad = app.add_subcommand("gradcheck", "verify analytic gradients against finite differences");
  gb.cmd = grad;
  grad->add_option("--size", ga.size, "test image size (>= 16)")->capture_default_str();
  grad->add_option("--seed", ga.seed, "RNG seed")->capture_default_str();
  grad->add_option("--precision", ga.precision, "32 or 64")->capture_default_str();
  grad->add_option("--config", ga.config, "JSON config file (keys mirror flags)");
  gb.bind("size", ga.size);
  gb.bind("seed", ga.seed);
  gb.bind("precision", ga.precision);

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect-weights", "print a weight file's layer table");
  inspect->add_option("file", inspect_path, "weight file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (filter->parsed()) {
      fb.apply(fa.config);
      return cmd_filter(fa);
    }
    if (stylize->parsed()) {
      sb.apply(sa.config);
      return cmd_stylize(sa);
    }
    if (grad->parsed()) {
      gb.apply(ga.config);
      return cmd_gradcheck(ga);
    }
    if (inspect->parsed()) return cmd_inspect_weights(inspect_path);
  } catch (const inkwash::ValueError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const inkwash::NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const inkwash::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
