#include "tsae/decoder.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "tsae/errors.hpp"

namespace tsae {

void DecoderConfig::validate() const {
  if (n_b == 0) throw ConfigError("decoder: prediction horizon n_b must be >= 1");
  if (n_x == 0) throw ConfigError("decoder: hidden size must be >= 1");
  if (n_u == 0) throw ConfigError("decoder: input size must be >= 1");
}

GruParams GruParams::zeros(std::size_t n_x, std::size_t n_u) {
  GruParams p;
  for (RealMatrix* w : {&p.update_w, &p.reset_w, &p.cand_w}) *w = RealMatrix(n_x, n_u);
  for (RealMatrix* u : {&p.update_u, &p.reset_u, &p.cand_u}) *u = RealMatrix(n_x, n_x);
  for (RealMatrix* b : {&p.update_b, &p.reset_b, &p.cand_b}) *b = RealMatrix(n_x, 1);
  p.out_w = RealMatrix(1, n_x);
  p.out_b = RealMatrix(1, 1);
  return p;
}

void GruParams::check_shapes() const {
  const std::size_t n_x = hidden_size();
  const std::size_t n_u = input_size();
  auto expect = [](const RealMatrix& m, std::size_t r, std::size_t c, const char* what) {
    if (m.rows() != r || m.cols() != c) {
      throw ShapeError(std::string("GRU ") + what + " is " + m.shape_string() + ", expected " + std::to_string(r) +
                       "x" + std::to_string(c));
    }
  };
  expect(update_w, n_x, n_u, "update_w");
  expect(reset_w, n_x, n_u, "reset_w");
  expect(cand_w, n_x, n_u, "cand_w");
  expect(update_u, n_x, n_x, "update_u");
  expect(reset_u, n_x, n_x, "reset_u");
  expect(cand_u, n_x, n_x, "cand_u");
  expect(update_b, n_x, 1, "update_b");
  expect(reset_b, n_x, 1, "reset_b");
  expect(cand_b, n_x, 1, "cand_b");
  expect(out_w, 1, n_x, "out_w");
  expect(out_b, 1, 1, "out_b");
}

namespace {

// W u + U v + b for one row
inline double affine(const RealMatrix& w, const RealMatrix& u, const RealMatrix& b, std::size_t row,
                     std::span<const double> input, const double* v) {
  double acc = b[row];
  const auto wr = w.row(row);
  for (std::size_t k = 0; k < input.size(); ++k) acc += wr[k] * input[k];
  const auto ur = u.row(row);
  for (std::size_t k = 0; k < ur.size(); ++k) acc += ur[k] * v[k];
  return acc;
}

// Writes gates and next state; `rh` is scratch of size n_x.
void step_into(std::span<const double> h, std::span<const double> input, const GruParams& p, double* z, double* r,
               double* c, double* rh, double* next) {
  const std::size_t n_x = h.size();
  for (std::size_t i = 0; i < n_x; ++i) {
    z[i] = sigmoid(affine(p.update_w, p.update_u, p.update_b, i, input, h.data()));
    r[i] = sigmoid(affine(p.reset_w, p.reset_u, p.reset_b, i, input, h.data()));
  }
  for (std::size_t i = 0; i < n_x; ++i) rh[i] = r[i] * h[i];
  for (std::size_t i = 0; i < n_x; ++i) {
    c[i] = std::tanh(affine(p.cand_w, p.cand_u, p.cand_b, i, input, rh));
    next[i] = z[i] * c[i] + (1.0 - z[i]) * h[i];
  }
}

}  // namespace

std::vector<double> gru_step(std::span<const double> state, std::span<const double> input, const GruParams& p) {
  p.check_shapes();
  if (state.size() != p.hidden_size()) throw ShapeError("gru_step: state length does not match hidden size");
  if (input.size() != p.input_size()) throw ShapeError("gru_step: input length does not match input size");
  const std::size_t n_x = state.size();
  std::vector<double> scratch(4 * n_x);
  std::vector<double> next(n_x);
  step_into(state, input, p, scratch.data(), scratch.data() + n_x, scratch.data() + 2 * n_x,
            scratch.data() + 3 * n_x, next.data());
  return next;
}

double output_head(std::span<const double> state, const GruParams& p) {
  if (state.size() != p.out_w.cols()) throw ShapeError("output_head: state length does not match head");
  double acc = p.out_b[0];
  for (std::size_t i = 0; i < state.size(); ++i) acc += p.out_w[i] * state[i];
  return std::tanh(acc);
}

std::vector<double> decoder_rollout(const LatentState& latent, std::span<const double> u_future, const GruParams& p,
                                    const DecoderConfig& config, DecoderCache* cache) {
  config.validate();
  p.check_shapes();
  const std::size_t n_x = p.hidden_size();
  const std::size_t n_u = p.input_size();
  if (latent.size() != n_x || config.n_x != n_x) {
    throw ShapeError("decoder: latent has " + std::to_string(latent.size()) + " entries but hidden size is " +
                     std::to_string(n_x));
  }
  if (n_u != config.n_u) throw ShapeError("decoder: GRU input size does not match config n_u");
  if (u_future.size() != config.n_b * n_u) {
    throw ShapeError("decoder: expected " + std::to_string(config.n_b * n_u) + " future inputs, got " +
                     std::to_string(u_future.size()));
  }

  DecoderCache local;
  DecoderCache& c = cache != nullptr ? *cache : local;
  c.states.resize(config.n_b + 1, n_x);
  c.update.resize(config.n_b, n_x);
  c.reset.resize(config.n_b, n_x);
  c.candidate.resize(config.n_b, n_x);
  c.inputs = RealMatrix(config.n_b, n_u, std::vector<double>(u_future.begin(), u_future.end()));
  c.outputs.assign(config.n_b, 0.0);

  std::copy(latent.values.begin(), latent.values.end(), c.states.row(0).begin());
  std::vector<double> rh(n_x);
  for (std::size_t k = 0; k < config.n_b; ++k) {
    step_into(c.states.row(k), c.inputs.row(k), p, c.update.row(k).data(), c.reset.row(k).data(),
              c.candidate.row(k).data(), rh.data(), c.states.row(k + 1).data());
    c.outputs[k] = output_head(c.states.row(k + 1), p);
  }
  return c.outputs;
}

std::vector<double> decoder_backward(const DecoderCache& cache, const GruParams& p, std::span<const double> upstream,
                                     GruParams& grads) {
  if (!cache.valid()) throw Error("decoder backward: missing rollout cache");
  const std::size_t n_b = cache.outputs.size();
  const std::size_t n_x = p.hidden_size();
  const std::size_t n_u = p.input_size();
  if (upstream.size() != n_b) throw ShapeError("decoder backward: upstream length must equal n_b");

  std::vector<double> dh(n_x, 0.0);   // gradient w.r.t. state after step k
  std::vector<double> dprev(n_x);     // gradient w.r.t. state before step k
  std::vector<double> da_z(n_x), da_r(n_x), da_c(n_x), drh(n_x), rh(n_x);

  for (std::size_t k = n_b; k-- > 0;) {
    const auto h = cache.states.row(k);
    const auto next = cache.states.row(k + 1);
    const auto z = cache.update.row(k);
    const auto r = cache.reset.row(k);
    const auto c = cache.candidate.row(k);
    const auto u = cache.inputs.row(k);

    const double y = cache.outputs[k];
    const double dy = upstream[k] * (1.0 - y * y);
    if (dy != 0.0) {
      grads.out_b[0] += dy;
      for (std::size_t i = 0; i < n_x; ++i) {
        grads.out_w[i] += dy * next[i];
        dh[i] += dy * p.out_w[i];
      }
    }

    for (std::size_t i = 0; i < n_x; ++i) {
      rh[i] = r[i] * h[i];
      da_z[i] = dh[i] * (c[i] - h[i]) * z[i] * (1.0 - z[i]);
      da_c[i] = dh[i] * z[i] * (1.0 - c[i] * c[i]);
      dprev[i] = dh[i] * (1.0 - z[i]);
    }

    std::fill(drh.begin(), drh.end(), 0.0);
    for (std::size_t i = 0; i < n_x; ++i) {
      grads.cand_b[i] += da_c[i];
      for (std::size_t q = 0; q < n_u; ++q) grads.cand_w(i, q) += da_c[i] * u[q];
      for (std::size_t j = 0; j < n_x; ++j) {
        grads.cand_u(i, j) += da_c[i] * rh[j];
        drh[j] += p.cand_u(i, j) * da_c[i];
      }
    }
    for (std::size_t i = 0; i < n_x; ++i) {
      dprev[i] += drh[i] * r[i];
      da_r[i] = drh[i] * h[i] * r[i] * (1.0 - r[i]);
    }

    for (std::size_t i = 0; i < n_x; ++i) {
      grads.reset_b[i] += da_r[i];
      grads.update_b[i] += da_z[i];
      for (std::size_t q = 0; q < n_u; ++q) {
        grads.reset_w(i, q) += da_r[i] * u[q];
        grads.update_w(i, q) += da_z[i] * u[q];
      }
      for (std::size_t j = 0; j < n_x; ++j) {
        grads.reset_u(i, j) += da_r[i] * h[j];
        grads.update_u(i, j) += da_z[i] * h[j];
        dprev[j] += p.reset_u(i, j) * da_r[i] + p.update_u(i, j) * da_z[i];
      }
    }
    dh.swap(dprev);
  }
  return dh;
}

// Decoder

namespace {

constexpr std::array<const char*, 11> kNames = {
    "decoder.update.W", "decoder.update.U", "decoder.update.b", "decoder.reset.W", "decoder.reset.U",
    "decoder.reset.b",  "decoder.cand.W",   "decoder.cand.U",   "decoder.cand.b",  "decoder.out.W",
    "decoder.out.b"};

std::array<RealMatrix*, 11> members(GruParams& p) {
  return {&p.update_w, &p.update_u, &p.update_b, &p.reset_w, &p.reset_u, &p.reset_b,
          &p.cand_w,   &p.cand_u,   &p.cand_b,   &p.out_w,   &p.out_b};
}

std::array<const RealMatrix*, 11> members(const GruParams& p) {
  return {&p.update_w, &p.update_u, &p.update_b, &p.reset_w, &p.reset_u, &p.reset_b,
          &p.cand_w,   &p.cand_u,   &p.cand_b,   &p.out_w,   &p.out_b};
}

}  // namespace

Decoder::Decoder(DecoderConfig config) : config_(config) { config_.validate(); }

const std::vector<std::string>& Decoder::param_names() {
  static const std::vector<std::string> names(kNames.begin(), kNames.end());
  return names;
}

void Decoder::init_params(ParamStore& params, std::uint64_t seed) const {
  const Rng root(seed);
  GruParams p = GruParams::zeros(config_.n_x, config_.n_u);
  p.update_w = glorot_init(config_.n_x, config_.n_u, root.split(1).seed());
  p.update_u = glorot_init(config_.n_x, config_.n_x, root.split(2).seed());
  p.reset_w = glorot_init(config_.n_x, config_.n_u, root.split(3).seed());
  p.reset_u = glorot_init(config_.n_x, config_.n_x, root.split(4).seed());
  p.cand_w = glorot_init(config_.n_x, config_.n_u, root.split(5).seed());
  p.cand_u = glorot_init(config_.n_x, config_.n_x, root.split(6).seed());
  p.out_w = glorot_init(1, config_.n_x, root.split(7).seed());
  auto m = members(p);
  for (std::size_t i = 0; i < kNames.size(); ++i) params.add(kNames[i], std::move(*m[i]));
}

GruParams Decoder::extract(const ParamStore& params) const {
  GruParams p;
  auto m = members(p);
  for (std::size_t i = 0; i < kNames.size(); ++i) *m[i] = params.value(kNames[i]);
  p.check_shapes();
  if (p.hidden_size() != config_.n_x || p.input_size() != config_.n_u) {
    throw ShapeError("decoder parameters do not match config (n_x=" + std::to_string(config_.n_x) +
                     ", n_u=" + std::to_string(config_.n_u) + ")");
  }
  return p;
}

void Decoder::accumulate(const GruParams& grads, ParamStore& params) const {
  const auto m = members(grads);
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    RealMatrix& dst = params.grad(kNames[i]);
    if (!dst.same_shape(*m[i])) throw ShapeError(std::string("decoder gradient shape mismatch for ") + kNames[i]);
    auto d = dst.values();
    auto s = m[i]->values();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] += s[k];
  }
}

}  // namespace tsae
