#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tsae/encoder.hpp"
#include "tsae/numerics.hpp"

namespace tsae {

struct DecoderConfig {
  std::size_t n_b = 200;  // prediction horizon
  std::size_t n_x = 3;    // hidden size; equals n_xs because the latent seeds the state
  std::size_t n_u = 1;    // exogenous inputs (current)

  void validate() const;
  friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

/// GRU weights grouped by functional role plus the single-neuron output head.
///   update gate     z = sigmoid(update_w u + update_u X + update_b)
///   reset gate      r = sigmoid(reset_w u + reset_u X + reset_b)
///   candidate       c = tanh(cand_w u + cand_u (r * X) + cand_b)
///   next state      X' = z * c + (1 - z) * X
///   output          y = tanh(out_w X' + out_b)
/// The same struct doubles as a gradient accumulator.
struct GruParams {
  RealMatrix update_w, update_u, update_b;
  RealMatrix reset_w, reset_u, reset_b;
  RealMatrix cand_w, cand_u, cand_b;
  RealMatrix out_w, out_b;

  static GruParams zeros(std::size_t n_x, std::size_t n_u);
  std::size_t hidden_size() const noexcept { return update_u.rows(); }
  std::size_t input_size() const noexcept { return update_w.cols(); }
  void check_shapes() const;
};

std::vector<double> gru_step(std::span<const double> state, std::span<const double> input, const GruParams& p);

double output_head(std::span<const double> state, const GruParams& p);

/// Per-step tensors recorded during a rollout; `states` holds n_b + 1 rows
/// with row 0 the seed.
struct DecoderCache {
  RealMatrix states;
  RealMatrix update;
  RealMatrix reset;
  RealMatrix candidate;
  RealMatrix inputs;
  std::vector<double> outputs;
  bool valid() const noexcept { return !outputs.empty(); }
};

/// Seeds the hidden state with the latent, then for each future input applies
/// one GRU step and emits the output head. `u_future` is step-major
/// (n_b * n_u values).
std::vector<double> decoder_rollout(const LatentState& latent, std::span<const double> u_future, const GruParams& p,
                                    const DecoderConfig& config, DecoderCache* cache = nullptr);

/// Backpropagation through time. Parameter gradients accumulate into `grads`;
/// returns the gradient with respect to the seed latent.
std::vector<double> decoder_backward(const DecoderCache& cache, const GruParams& p, std::span<const double> upstream,
                                     GruParams& grads);

/// ParamStore-backed wrapper that owns the parameter naming.
class Decoder {
 public:
  explicit Decoder(DecoderConfig config);

  const DecoderConfig& config() const noexcept { return config_; }
  void init_params(ParamStore& params, std::uint64_t seed) const;
  GruParams extract(const ParamStore& params) const;
  /// Adds `grads` into the matching gradient buffers of `params`.
  void accumulate(const GruParams& grads, ParamStore& params) const;

  static const std::vector<std::string>& param_names();

 private:
  DecoderConfig config_;
};

}  // namespace tsae
