#include "tsae/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "tsae/errors.hpp"

namespace tsae {

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "identity"; }

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "' (expected tanh or identity)");
}

std::size_t ConvLayerSpec::output_length(std::size_t input_length) const {
  if (stride == 0) throw ConfigError("conv layer stride must be >= 1");
  if (kernel_length == 0) throw ConfigError("conv layer kernel length must be >= 1");
  if (kernel_length > input_length) {
    throw ShapeError("conv kernel length " + std::to_string(kernel_length) + " exceeds input length " +
                     std::to_string(input_length));
  }
  return (input_length - kernel_length) / stride + 1;
}

EncoderConfig EncoderConfig::default_schedule(std::size_t n_a, std::size_t n_xs, std::size_t input_channels) {
  EncoderConfig cfg;
  cfg.n_a = n_a;
  cfg.n_xs = n_xs;
  cfg.input_channels = input_channels;
  if (n_a >= 256) {
    cfg.layers = {
        {input_channels, 8, 16, 4, Activation::tanh},
        {8, 16, 8, 4, Activation::tanh},
        {16, 16, 4, 2, Activation::tanh},
    };
  } else {
    const std::size_t k1 = std::min(std::max<std::size_t>(2, n_a / 8), n_a);
    const std::size_t len1 = n_a >= k1 ? (n_a - k1) / 2 + 1 : 1;
    const std::size_t k2 = std::min<std::size_t>(4, len1);
    cfg.layers = {
        {input_channels, 8, k1, 2, Activation::tanh},
        {8, 8, k2, 2, Activation::tanh},
    };
  }
  return cfg;
}

std::vector<std::size_t> EncoderConfig::sequence_lengths() const {
  std::vector<std::size_t> lengths{n_a};
  for (const auto& layer : layers) lengths.push_back(layer.output_length(lengths.back()));
  return lengths;
}

std::size_t EncoderConfig::flattened_size() const {
  const std::size_t channels = layers.empty() ? input_channels : layers.back().out_channels;
  return channels * sequence_lengths().back();
}

void EncoderConfig::validate() const {
  if (n_a == 0) throw ConfigError("encoder: n_a must be >= 1");
  if (n_xs == 0) throw ConfigError("encoder: n_xs must be >= 1");
  if (input_channels == 0) throw ConfigError("encoder: input_channels must be >= 1");
  std::size_t channels = input_channels;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].in_channels != channels) {
      throw ShapeError("encoder layer " + std::to_string(l) + " expects " + std::to_string(layers[l].in_channels) +
                       " input channels but receives " + std::to_string(channels));
    }
    if (layers[l].out_channels == 0) throw ConfigError("encoder layer " + std::to_string(l) + ": zero out_channels");
    channels = layers[l].out_channels;
  }
  sequence_lengths();
}

namespace {

inline double activate(Activation a, double x) { return a == Activation::tanh ? std::tanh(x) : x; }

}  // namespace

RealMatrix conv1d_forward(const RealMatrix& input, const ConvLayerSpec& layer, const RealMatrix& kernels,
                          const RealMatrix& bias) {
  if (input.rows() != layer.in_channels) {
    throw ShapeError("conv1d: input has " + std::to_string(input.rows()) + " channels, layer expects " +
                     std::to_string(layer.in_channels));
  }
  const std::size_t L = layer.kernel_length;
  const std::size_t n_out = layer.output_length(input.cols());
  if (kernels.rows() != layer.out_channels || kernels.cols() != layer.in_channels * L) {
    throw ShapeError("conv1d: kernel matrix is " + kernels.shape_string() + ", expected " +
                     std::to_string(layer.out_channels) + "x" + std::to_string(layer.in_channels * L));
  }
  if (bias.size() != layer.out_channels) throw ShapeError("conv1d: bias length mismatch");

  RealMatrix out(layer.out_channels, n_out);
  for (std::size_t j = 0; j < layer.out_channels; ++j) {
    const auto w = kernels.row(j);
    auto q = out.row(j);
    for (std::size_t k = 0; k < n_out; ++k) {
      const std::size_t start = k * layer.stride;
      double acc = bias[j];
      for (std::size_t i = 0; i < layer.in_channels; ++i) {
        const double* x = input.row(i).data() + start;
        const double* wi = w.data() + i * L;
        for (std::size_t r = 0; r < L; ++r) acc += x[r] * wi[r];
      }
      q[k] = activate(layer.activation, acc);
    }
  }
  return out;
}

void conv1d_backward(const RealMatrix& input, const RealMatrix& output, const ConvLayerSpec& layer,
                     const RealMatrix& kernels, const RealMatrix& upstream, RealMatrix& grad_kernels,
                     RealMatrix& grad_bias, RealMatrix* grad_input) {
  if (!upstream.same_shape(output)) throw ShapeError("conv1d_backward: upstream shape mismatch");
  const std::size_t L = layer.kernel_length;
  const std::size_t n_out = output.cols();
  for (std::size_t j = 0; j < layer.out_channels; ++j) {
    const auto w = kernels.row(j);
    auto gw = grad_kernels.row(j);
    for (std::size_t k = 0; k < n_out; ++k) {
      double d = upstream(j, k);
      if (layer.activation == Activation::tanh) {
        const double y = output(j, k);
        d *= 1.0 - y * y;
      }
      if (d == 0.0) continue;
      grad_bias[j] += d;
      const std::size_t start = k * layer.stride;
      for (std::size_t i = 0; i < layer.in_channels; ++i) {
        const double* x = input.row(i).data() + start;
        double* gwi = gw.data() + i * L;
        for (std::size_t r = 0; r < L; ++r) gwi[r] += d * x[r];
        if (grad_input != nullptr) {
          double* gx = grad_input->row(i).data() + start;
          const double* wi = w.data() + i * L;
          for (std::size_t r = 0; r < L; ++r) gx[r] += d * wi[r];
        }
      }
    }
  }
}

Encoder::Encoder(EncoderConfig config) : config_(std::move(config)) {
  config_.validate();
  lengths_ = config_.sequence_lengths();
}

std::string Encoder::kernel_name(std::size_t layer) { return "encoder.conv" + std::to_string(layer) + ".kernel"; }
std::string Encoder::bias_name(std::size_t layer) { return "encoder.conv" + std::to_string(layer) + ".bias"; }

void Encoder::init_params(ParamStore& params, std::uint64_t seed) const {
  const Rng root(seed);
  for (std::size_t l = 0; l < config_.layers.size(); ++l) {
    const auto& layer = config_.layers[l];
    const std::size_t fan = layer.in_channels * layer.kernel_length;
    params.add(kernel_name(l), glorot_init(layer.out_channels, fan, root.split(2 * l).seed()));
    params.add(bias_name(l), RealMatrix(layer.out_channels, 1));
  }
  params.add(head_weight_name, glorot_init(config_.n_xs, config_.flattened_size(), root.split(1000).seed()));
  params.add(head_bias_name, RealMatrix(config_.n_xs, 1));
}

LatentState Encoder::forward(const RealMatrix& window, const ParamStore& params, EncoderCache* cache) const {
  if (window.rows() != config_.n_a || window.cols() != config_.input_channels) {
    throw ShapeError("encoder: window is " + window.shape_string() + ", expected n_a=" + std::to_string(config_.n_a) +
                     " rows x " + std::to_string(config_.input_channels) + " channels");
  }
  EncoderCache local;
  EncoderCache& c = cache != nullptr ? *cache : local;
  c.activations.clear();
  c.activations.push_back(window.transposed());
  for (std::size_t l = 0; l < config_.layers.size(); ++l) {
    c.activations.push_back(conv1d_forward(c.activations.back(), config_.layers[l], params.value(kernel_name(l)),
                                           params.value(bias_name(l))));
  }

  const RealMatrix& head_w = params.value(head_weight_name);
  const RealMatrix& head_b = params.value(head_bias_name);
  const auto features = c.activations.back().values();
  if (head_w.rows() != config_.n_xs || head_w.cols() != features.size()) {
    throw ShapeError("encoder: head weight is " + head_w.shape_string() + ", expected " +
                     std::to_string(config_.n_xs) + "x" + std::to_string(features.size()));
  }
  LatentState latent;
  latent.values.resize(config_.n_xs);
  for (std::size_t o = 0; o < config_.n_xs; ++o) {
    const auto w = head_w.row(o);
    double acc = head_b[o];
    for (std::size_t f = 0; f < features.size(); ++f) acc += w[f] * features[f];
    latent.values[o] = acc;
  }
  return latent;
}

RealMatrix Encoder::backward(const EncoderCache& cache, ParamStore& params, std::span<const double> upstream) const {
  if (!cache.valid() || cache.activations.size() != config_.layers.size() + 1) {
    throw Error("encoder backward: missing forward cache");
  }
  if (upstream.size() != config_.n_xs) throw ShapeError("encoder backward: upstream length must equal n_xs");

  // Latent head.
  const RealMatrix& features = cache.activations.back();
  const RealMatrix& head_w = params.value(head_weight_name);
  RealMatrix& g_head_w = params.grad(head_weight_name);
  RealMatrix& g_head_b = params.grad(head_bias_name);
  RealMatrix grad(features.rows(), features.cols());
  const std::size_t flat = features.size();
  for (std::size_t o = 0; o < config_.n_xs; ++o) {
    const double u = upstream[o];
    if (u == 0.0) continue;
    g_head_b[o] += u;
    const auto w = head_w.row(o);
    auto gw = g_head_w.row(o);
    for (std::size_t f = 0; f < flat; ++f) {
      gw[f] += u * features[f];
      grad[f] += u * w[f];
    }
  }

  for (std::size_t l = config_.layers.size(); l-- > 0;) {
    const RealMatrix& input = cache.activations[l];
    RealMatrix grad_input(input.rows(), input.cols());
    const std::size_t k = params.index_of(kernel_name(l));
    const std::size_t b = params.index_of(bias_name(l));
    conv1d_backward(input, cache.activations[l + 1], config_.layers[l], params[k].value, grad, params[k].grad,
                    params[b].grad, &grad_input);
    grad = std::move(grad_input);
  }
  return grad.transposed();
}

LatentState encoder_forward(const RealMatrix& window, const EncoderConfig& config, const ParamStore& params) {
  return Encoder(config).forward(window, params);
}

}  // namespace tsae
