#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tsae/numerics.hpp"

namespace tsae {

enum class Activation { tanh, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// One valid (unpadded) 1-D convolution layer.
struct ConvLayerSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_length = 1;
  std::size_t stride = 1;
  Activation activation = Activation::tanh;

  /// floor((input_length - kernel_length) / stride) + 1; throws if the kernel does not fit.
  std::size_t output_length(std::size_t input_length) const;

  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

struct EncoderConfig {
  std::size_t n_a = 500;
  std::size_t input_channels = 2;  // current, voltage
  std::vector<ConvLayerSpec> layers;
  std::size_t n_xs = 3;

  /// Three tanh layers (2->8->16->16, kernels 16/8/4, strides 4/4/2) when the
  /// history is long enough for them, otherwise two lighter layers
  /// (2->8->8, kernel max(2, n_a/8) stride 2, then kernel min(4, .) stride 2).
  static EncoderConfig default_schedule(std::size_t n_a, std::size_t n_xs, std::size_t input_channels = 2);

  /// Sequence length entering each layer, plus the final output length.
  std::vector<std::size_t> sequence_lengths() const;
  std::size_t flattened_size() const;
  void validate() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Slow-state latent vector produced by the encoder. The slow-state
/// transition between consecutive samples is taken as the identity, so the
/// same vector seeds the decoder for the next step.
struct LatentState {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const noexcept { return values[i]; }
  friend bool operator==(const LatentState&, const LatentState&) = default;
};

/// q_j[k] = act( sum_i sum_r input(i, k*stride + r) * kernels(j, i*L + r) + bias_j )
///
/// `input` is channel-major `[n x a]`, `kernels` is `[m x (n*L)]`, `bias` is `[m x 1]`.
/// Returns `[m x n_out]`.
RealMatrix conv1d_forward(const RealMatrix& input, const ConvLayerSpec& layer, const RealMatrix& kernels,
                          const RealMatrix& bias);

/// Reverse pass of conv1d_forward. `output` is the post-activation forward
/// result and `upstream` its gradient. Kernel and bias gradients accumulate;
/// the input gradient is accumulated when `grad_input` is non-null.
void conv1d_backward(const RealMatrix& input, const RealMatrix& output, const ConvLayerSpec& layer,
                     const RealMatrix& kernels, const RealMatrix& upstream, RealMatrix& grad_kernels,
                     RealMatrix& grad_bias, RealMatrix* grad_input);

/// Activations recorded by a forward pass: entry 0 is the channel-major
/// input, entry l + 1 the output of conv layer l.
struct EncoderCache {
  std::vector<RealMatrix> activations;
  bool valid() const noexcept { return !activations.empty(); }
};

class Encoder {
 public:
  explicit Encoder(EncoderConfig config);

  const EncoderConfig& config() const noexcept { return config_; }

  /// Registers conv kernels/biases and the latent head in `params`.
  void init_params(ParamStore& params, std::uint64_t seed) const;

  /// `window` is time-major `[n_a x input_channels]`.
  LatentState forward(const RealMatrix& window, const ParamStore& params, EncoderCache* cache = nullptr) const;

  /// Accumulates parameter gradients for the upstream latent gradient and
  /// returns the gradient with respect to the (time-major) window.
  RealMatrix backward(const EncoderCache& cache, ParamStore& params, std::span<const double> upstream) const;

  static std::string kernel_name(std::size_t layer);
  static std::string bias_name(std::size_t layer);
  static constexpr const char* head_weight_name = "encoder.head.weight";
  static constexpr const char* head_bias_name = "encoder.head.bias";

 private:
  EncoderConfig config_;
  std::vector<std::size_t> lengths_;
};

LatentState encoder_forward(const RealMatrix& window, const EncoderConfig& config, const ParamStore& params);

}  // namespace tsae
