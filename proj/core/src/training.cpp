#include "tsae/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

#include "tsae/errors.hpp"

namespace tsae {

EncoderConfig TrainConfig::encoder_config() const {
  if (encoder_layers.empty()) return EncoderConfig::default_schedule(n_a, n_xs);
  EncoderConfig cfg;
  cfg.n_a = n_a;
  cfg.n_xs = n_xs;
  cfg.input_channels = 2;
  cfg.layers = encoder_layers;
  return cfg;
}

DecoderConfig TrainConfig::decoder_config() const { return {n_b, n_xs, 1}; }

void TrainConfig::validate() const {
  if (n_a == 0 || n_b == 0 || n_xs == 0) throw ConfigError("train: n_a, n_b and n_xs must be >= 1");
  if (lambda < 0.0) throw ConfigError("train: lambda must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
  if (batch_groups == 0) throw ConfigError("train: batch_groups must be >= 1");
  if (run_length < 3) throw ConfigError("train: run_length must be >= 3 for lag-1 correlation");
  if (max_epochs == 0) throw ConfigError("train: max_epochs must be >= 1");
  if (threads == 0) throw ConfigError("train: threads must be >= 1");
  encoder_config().validate();
  decoder_config().validate();
}

// Model

Model::Model(EncoderConfig encoder, DecoderConfig decoder) : encoder_(std::move(encoder)), decoder_(decoder) {
  if (encoder_.config().n_xs != decoder_.config().n_x) {
    throw ShapeError("decoder hidden size " + std::to_string(decoder_.config().n_x) + " must equal n_xs " +
                     std::to_string(encoder_.config().n_xs));
  }
}

Model Model::create(const TrainConfig& cfg) {
  cfg.validate();
  return Model(cfg.encoder_config(), cfg.decoder_config());
}

void Model::init_params(std::uint64_t seed) {
  ParamStore params;
  const Rng root(seed);
  encoder_.init_params(params, root.split(1).seed());
  decoder_.init_params(params, root.split(2).seed());
  params_ = std::move(params);
}

void Model::set_params(ParamStore params) {
  ParamStore reference;
  encoder_.init_params(reference, 0);
  decoder_.init_params(reference, 0);
  if (params.size() != reference.size()) {
    throw ShapeError("model expects " + std::to_string(reference.size()) + " parameter arrays, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const auto& want = reference[i];
    if (!params.contains(want.name)) throw ShapeError("missing parameter '" + want.name + "'");
    const auto& got = params.value(want.name);
    if (!got.same_shape(want.value)) {
      throw ShapeError("parameter '" + want.name + "' has shape " + got.shape_string() + ", config implies " +
                       want.value.shape_string());
    }
  }
  // Canonical order regardless of the input order.
  ParamStore ordered;
  for (const auto& want : reference) ordered.add(want.name, params.value(want.name));
  params_ = std::move(ordered);
}

LatentState Model::encode(const RealMatrix& history) const { return encoder_.forward(history, params_); }

std::vector<double> Model::predict(const WindowSample& window) const {
  const LatentState latent = encoder_.forward(window.history, params_);
  return decoder_rollout(latent, window.future_inputs, decoder_.extract(params_), decoder_.config());
}

// Sampling

std::vector<Batch> batch_sampler(const WindowSet& windows, const TrainConfig& cfg, std::uint64_t epoch_seed) {
  if (cfg.run_length < 3) throw ConfigError("batch sampler: run_length must be >= 3");
  std::vector<Group> groups;
  const auto& refs = windows.refs();
  for (std::size_t b = 0; b < refs.size();) {
    std::size_t e = b + 1;
    while (e < refs.size() && refs[e].cycle == refs[b].cycle && refs[e].start == refs[e - 1].start + 1) ++e;
    for (std::size_t g = b; g + cfg.run_length <= e; g += cfg.run_length) {
      Group group{refs[b].cycle, {}};
      for (std::size_t w = g; w < g + cfg.run_length; ++w) group.windows.push_back(w);
      groups.push_back(std::move(group));
    }
    b = e;
  }
  if (groups.empty()) {
    throw ConfigError("batch sampler: no cycle provides " + std::to_string(cfg.run_length) +
                      " consecutive windows");
  }
  Rng rng(epoch_seed);
  std::shuffle(groups.begin(), groups.end(), rng.engine());
  if (cfg.groups_per_epoch > 0 && groups.size() > cfg.groups_per_epoch) groups.resize(cfg.groups_per_epoch);

  std::vector<Batch> batches;
  for (std::size_t g = 0; g < groups.size(); g += cfg.batch_groups) {
    const std::size_t end = std::min(groups.size(), g + cfg.batch_groups);
    batches.emplace_back(std::make_move_iterator(groups.begin() + static_cast<std::ptrdiff_t>(g)),
                         std::make_move_iterator(groups.begin() + static_cast<std::ptrdiff_t>(end)));
  }
  return batches;
}

namespace {

struct WindowWork {
  WindowSample sample;
  EncoderCache encoder;
  DecoderCache decoder;
  LatentState latent;
};

struct Forward {
  std::vector<std::vector<WindowWork>> groups;
  std::vector<LatentBatch> latents;
  double squared_error = 0.0;
  std::size_t predictions = 0;
};

Forward forward_batch(const Model& model, const ParamStore& params, const WindowSet& windows, const Batch& batch,
                      std::size_t threads) {
  const GruParams gru = model.decoder().extract(params);
  const DecoderConfig& dcfg = model.decoder().config();
  Forward fwd;
  fwd.groups.resize(batch.size());
  fwd.latents.resize(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t g) {
    auto& work = fwd.groups[g];
    work.resize(batch[g].windows.size());
    LatentBatch& lb = fwd.latents[g];
    for (std::size_t w = 0; w < work.size(); ++w) {
      WindowWork& ww = work[w];
      ww.sample = windows.sample(batch[g].windows[w]);
      ww.latent = model.encoder().forward(ww.sample.history, params, &ww.encoder);
      decoder_rollout(ww.latent, ww.sample.future_inputs, gru, dcfg, &ww.decoder);
      lb.latents.push_back(ww.latent);
    }
    if (!work.empty()) {
      lb.cell_id = work.front().sample.cell_id;
      lb.cycle_index = work.front().sample.cycle_index;
    }
  });
  // Serial, fixed-order loss reduction.
  for (const auto& work : fwd.groups) {
    for (const auto& ww : work) {
      for (std::size_t k = 0; k < ww.decoder.outputs.size(); ++k) {
        const double d = ww.decoder.outputs[k] - ww.sample.future_targets[k];
        fwd.squared_error += d * d;
      }
      fwd.predictions += ww.decoder.outputs.size();
    }
  }
  if (fwd.predictions == 0) throw ShapeError("batch contains no windows");
  return fwd;
}

}  // namespace

LossBreakdown batch_loss(const Model& model, const ParamStore& params, const WindowSet& windows, const Batch& batch,
                         double lambda) {
  const Forward fwd = forward_batch(model, params, windows, batch, 1);
  const double pred = fwd.squared_error / static_cast<double>(fwd.predictions);
  const double corr = correlation_loss(fwd.latents, model.encoder().config().n_xs);
  return total_loss(pred, corr, lambda);
}

LossBreakdown compute_batch_gradients(const Model& model, ParamStore& params, const WindowSet& windows,
                                      const Batch& batch, const BatchOptions& options) {
  Forward fwd = forward_batch(model, params, windows, batch, options.threads);
  const std::size_t n_xs = model.encoder().config().n_xs;
  const double pred = fwd.squared_error / static_cast<double>(fwd.predictions);
  const double corr = correlation_loss(fwd.latents, n_xs);
  const LossBreakdown loss = total_loss(pred, corr, options.lambda);

  const bool use_corr = options.include_correlation && options.lambda > 0.0;
  std::vector<RealMatrix> corr_grads;
  if (use_corr) corr_grads = correlation_loss_backward(fwd.latents, n_xs, options.lambda);

  const GruParams gru = model.decoder().extract(params);
  const double pred_scale = 2.0 / static_cast<double>(fwd.predictions);
  std::vector<ParamStore> buffers(batch.size());
  parallel_for(batch.size(), options.threads, [&](std::size_t g) {
    ParamStore& buf = buffers[g];
    buf = params;
    buf.zero_grad();
    GruParams gru_grads = GruParams::zeros(gru.hidden_size(), gru.input_size());
    std::vector<double> upstream;
    for (std::size_t w = 0; w < fwd.groups[g].size(); ++w) {
      const WindowWork& ww = fwd.groups[g][w];
      const auto& out = ww.decoder.outputs;
      upstream.resize(out.size());
      for (std::size_t k = 0; k < out.size(); ++k) upstream[k] = pred_scale * (out[k] - ww.sample.future_targets[k]);
      std::vector<double> d_latent = decoder_backward(ww.decoder, gru, upstream, gru_grads);
      if (use_corr) {
        for (std::size_t i = 0; i < n_xs; ++i) d_latent[i] += corr_grads[g](w, i);
      }
      model.encoder().backward(ww.encoder, buf, d_latent);
    }
    model.decoder().accumulate(gru_grads, buf);
  });
  for (const auto& buf : buffers) params.accumulate_grad(buf);
  return loss;
}

double prediction_loss(const Model& model, const WindowSet& windows, std::size_t max_windows) {
  if (windows.empty()) throw ShapeError("prediction_loss: no windows");
  const std::size_t n = windows.size();
  const std::size_t count = max_windows > 0 && n > max_windows ? max_windows : n;
  const GruParams gru = model.decoder().extract(model.params());
  double acc = 0.0;
  std::size_t terms = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = count == n ? k : k * n / count;
    const WindowSample w = windows.sample(i);
    const LatentState latent = model.encoder().forward(w.history, model.params());
    const auto pred = decoder_rollout(latent, w.future_inputs, gru, model.decoder().config());
    for (std::size_t s = 0; s < pred.size(); ++s) {
      const double d = pred[s] - w.future_targets[s];
      acc += d * d;
    }
    terms += pred.size();
  }
  return acc / static_cast<double>(terms);
}

namespace {

std::string diagnostics(std::size_t epoch, std::size_t batch, const LossBreakdown& loss, const ParamStore& params) {
  std::ostringstream os;
  os << "non-finite loss at epoch " << epoch << ", batch " << batch << " (pred=" << loss.pred << ", corr=" << loss.corr
     << ", total=" << loss.total << ")\nparameter norms:";
  for (const auto& e : params) {
    os << "\n  " << e.name << ": value " << std::sqrt(e.value.squared_norm()) << ", grad "
       << std::sqrt(e.grad.squared_norm());
  }
  return os.str();
}

}  // namespace

TrainResult train(const WindowSet& train_windows, const WindowSet& val_windows, const TrainConfig& cfg,
                  const TrainResult* resume, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_windows.empty()) throw ConfigError("train: training split is empty");
  if (val_windows.empty()) throw ConfigError("train: validation split is empty");
  for (const WindowSet* w : {&train_windows, &val_windows}) {
    if (w->n_a() != cfg.n_a || w->n_b() != cfg.n_b) {
      throw ShapeError("train: windows are n_a=" + std::to_string(w->n_a()) + ", n_b=" + std::to_string(w->n_b()) +
                       " but config expects n_a=" + std::to_string(cfg.n_a) + ", n_b=" + std::to_string(cfg.n_b));
    }
  }
  const auto started = std::chrono::steady_clock::now();

  Model model = Model::create(cfg);
  AdamState adam;
  TrainHistory history;
  double best_val = std::numeric_limits<double>::infinity();
  if (resume != nullptr) {
    model.set_params(resume->model.params());
    adam = resume->optimizer;
    if (adam.first_moment.size() != model.params().size()) adam = AdamState::for_params(model.params());
    history = resume->history;
    for (const auto& e : history.epochs) best_val = std::min(best_val, e.val_pred);
  } else {
    model.init_params(cfg.seed);
    adam = AdamState::for_params(model.params());
  }
  adam.config.learning_rate = cfg.learning_rate;
  ParamStore best_params = model.params();

  const BatchOptions options{cfg.lambda, true, cfg.threads};
  const Rng epoch_root(cfg.seed);
  std::size_t since_best = 0;
  for (std::size_t epoch = history.epochs.size() + 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto batches = batch_sampler(train_windows, cfg, epoch_root.split(epoch).seed());
    double pred_sum = 0.0;
    double corr_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      ParamStore& params = model.params();
      params.zero_grad();
      const LossBreakdown loss = compute_batch_gradients(model, params, train_windows, batches[b], options);
      if (!std::isfinite(loss.total) || !std::isfinite(params.grad_norm())) {
        throw NumericalError(diagnostics(epoch, b, loss, params));
      }
      if (cfg.clipping_active()) clip_grad_norm(params, cfg.clip_norm);
      adam_step(params, adam);
      pred_sum += loss.pred;
      corr_sum += loss.corr;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_pred = pred_sum / static_cast<double>(batches.size());
    rec.train_corr = corr_sum / static_cast<double>(batches.size());
    rec.val_pred = prediction_loss(model, val_windows, cfg.val_max_windows);
    if (!std::isfinite(rec.val_pred)) {
      throw NumericalError(diagnostics(epoch, batches.size(), {rec.val_pred, 0.0, 0.0, rec.val_pred}, model.params()));
    }
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_pred < best_val) {
      best_val = rec.val_pred;
      best_params = model.params();
      history.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= cfg.patience) break;
  }

  model.set_params(std::move(best_params));
  history.final_train_pred = prediction_loss(model, train_windows, cfg.val_max_windows);
  history.wall_time_s =
      (resume != nullptr ? resume->history.wall_time_s : 0.0) +
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(model), std::move(history), std::move(adam)};
}

Model ModelBundle::model() const {
  Model m = Model::create(config);
  m.set_params(params);
  return m;
}

}  // namespace tsae
