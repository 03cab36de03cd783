#include "tsae/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>

#include "tsae/errors.hpp"
#include "tsae/loss.hpp"
#include "tsae/stats.hpp"

namespace tsae {

namespace {

WindowSample window_at(const CycleSeries& c, std::size_t start, std::size_t n_a, std::size_t n_b) {
  WindowSample w;
  w.history = RealMatrix(n_a, 2);
  for (std::size_t t = 0; t < n_a; ++t) {
    w.history(t, 0) = c.current_a[start + t];
    w.history(t, 1) = c.voltage_v[start + t];
  }
  const auto f = static_cast<std::ptrdiff_t>(start + n_a);
  const auto e = f + static_cast<std::ptrdiff_t>(n_b);
  w.future_inputs.assign(c.current_a.begin() + f, c.current_a.begin() + e);
  w.future_targets.assign(c.voltage_v.begin() + f, c.voltage_v.begin() + e);
  w.cell_id = c.cell_id;
  w.cycle_index = c.cycle_index;
  w.start = start;
  return w;
}

const NormalizationStats& require_stats(const Dataset& normalized, const char* op) {
  if (!normalized.stats) throw ConfigError(std::string(op) + ": dataset is not normalized");
  return *normalized.stats;
}

struct CycleResult {
  CycleMetrics metrics;
  double squared = 0.0;
  double persistence_squared = 0.0;
  std::size_t terms = 0;
  std::vector<PredictionPoint> points;
  std::vector<double> errors;
};

LatentPoint make_point(const Model& model, const CycleSeries& c, std::size_t start, std::size_t n_a, double soc) {
  LatentPoint p;
  p.cell_id = c.cell_id;
  p.cycle_index = c.cycle_index;
  p.window_start = start;
  p.soc = soc;
  if (c.truth) {
    p.has_truth = true;
    p.theta_q = c.truth->theta_q;
  }
  RealMatrix history(n_a, 2);
  for (std::size_t t = 0; t < n_a; ++t) {
    history(t, 0) = c.current_a[start + t];
    history(t, 1) = c.voltage_v[start + t];
  }
  p.latent = model.encode(history).values;
  return p;
}

std::vector<double> column(std::span<const LatentPoint> points, std::size_t feature) {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.latent.at(feature));
  return out;
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("failed while writing '" + path.string() + "'");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Predictor model_predictor(const Model& model) {
  return [&model](const WindowSample& w) { return model.predict(w); };
}

PredictionReport rollout_metrics(const Predictor& predictor, const Dataset& normalized, std::size_t n_a,
                                 std::size_t n_b, std::size_t threads, std::size_t histogram_bins) {
  const NormalizationStats& stats = require_stats(normalized, "rollout_metrics");
  if (normalized.cycles.empty()) throw ShapeError("rollout_metrics: empty test set");
  if (n_a == 0 || n_b == 0) throw ConfigError("rollout_metrics: n_a and n_b must be >= 1");
  const std::size_t stride = n_a + n_b;

  std::vector<CycleResult> results(normalized.cycles.size());
  parallel_for(normalized.cycles.size(), threads, [&](std::size_t ci) {
    const CycleSeries& c = normalized.cycles[ci];
    CycleResult& r = results[ci];
    r.metrics.cell_id = c.cell_id;
    r.metrics.cycle_index = c.cycle_index;
    const std::size_t count = window_count(c.size(), n_a, n_b, stride);
    for (std::size_t w = 0; w < count; ++w) {
      const std::size_t start = w * stride;
      const WindowSample sample = window_at(c, start, n_a, n_b);
      const std::vector<double> pred = predictor(sample);
      if (pred.size() != n_b) {
        throw ShapeError("predictor returned " + std::to_string(pred.size()) + " values, expected " +
                         std::to_string(n_b));
      }
      const double last_v = stats.voltage.inverse(c.voltage_v[start + n_a - 1]);
      for (std::size_t k = 0; k < n_b; ++k) {
        const std::size_t idx = start + n_a + k;
        const double y = stats.voltage.inverse(c.voltage_v[idx]);
        const double yhat = stats.voltage.inverse(pred[k]);
        const double e = yhat - y;
        r.squared += e * e;
        r.persistence_squared += (last_v - y) * (last_v - y);
        r.metrics.maxabs_v = std::max(r.metrics.maxabs_v, std::abs(e));
        r.errors.push_back(e);
        r.points.push_back({c.cycle_index, idx, c.time_s[idx], y, yhat});
      }
      r.terms += n_b;
    }
    r.metrics.windows = count;
    if (r.terms > 0) {
      r.metrics.rmse_v = std::sqrt(r.squared / static_cast<double>(r.terms));
      r.metrics.persistence_rmse_v = std::sqrt(r.persistence_squared / static_cast<double>(r.terms));
    }
  });

  PredictionReport report;
  report.horizon = n_b;
  double weighted = 0.0;
  double weighted_persistence = 0.0;
  std::size_t windows = 0;
  std::vector<double> errors;
  for (auto& r : results) {
    if (r.metrics.windows == 0) continue;
    const double n = static_cast<double>(r.metrics.windows);
    weighted += n * r.squared / static_cast<double>(r.terms);
    weighted_persistence += n * r.persistence_squared / static_cast<double>(r.terms);
    windows += r.metrics.windows;
    report.maxabs_v = std::max(report.maxabs_v, r.metrics.maxabs_v);
    report.cycles.push_back(r.metrics);
    report.points.insert(report.points.end(), r.points.begin(), r.points.end());
    errors.insert(errors.end(), r.errors.begin(), r.errors.end());
  }
  if (windows == 0) {
    throw ShapeError("rollout_metrics: no cycle is long enough for one window (needs " + std::to_string(stride) +
                     " samples)");
  }
  report.rmse_v = std::sqrt(weighted / static_cast<double>(windows));
  report.persistence_rmse_v = std::sqrt(weighted_persistence / static_cast<double>(windows));

  const std::size_t bins = std::max<std::size_t>(histogram_bins, 1);
  const double half = report.maxabs_v > 0.0 ? report.maxabs_v : 1e-3;
  report.histogram.lo_v = -half;
  report.histogram.bin_width_v = 2.0 * half / static_cast<double>(bins);
  report.histogram.counts.assign(bins, 0);
  for (double e : errors) {
    auto b = static_cast<std::size_t>((e + half) / report.histogram.bin_width_v);
    report.histogram.counts[std::min(b, bins - 1)]++;
  }
  return report;
}

PredictionReport rollout_metrics(const ModelBundle& bundle, const Dataset& raw, std::size_t threads) {
  const Model model = bundle.model();
  const Dataset normalized = raw.stats ? raw : apply_normalization(raw, bundle.stats);
  return rollout_metrics(model_predictor(model), normalized, bundle.config.n_a, bundle.config.n_b, threads);
}

std::vector<double> soc_labels(const CycleSeries& cycle, const NormalizationStats* stats, const SocProxy& proxy) {
  if (cycle.truth && cycle.truth->soc.size() == cycle.size()) return cycle.truth->soc;
  if (!(proxy.q_nom_ah > 0.0)) throw ConfigError("soc proxy: nominal capacity must be positive");
  std::vector<double> soc(cycle.size());
  double charge_as = 0.0;  // ampere-seconds drawn so far
  for (std::size_t t = 0; t < cycle.size(); ++t) {
    soc[t] = proxy.soc_start - charge_as / (3600.0 * proxy.q_nom_ah);
    if (t + 1 < cycle.size()) {
      const double i = stats != nullptr ? stats->current.inverse(cycle.current_a[t]) : cycle.current_a[t];
      charge_as += i * (cycle.time_s[t + 1] - cycle.time_s[t]);
    }
  }
  return soc;
}

std::vector<LatentPoint> latent_at_fixed_soc(const Model& model, const Dataset& normalized, double soc_target,
                                             double tolerance, const SocProxy& proxy, std::size_t threads) {
  const NormalizationStats& stats = require_stats(normalized, "latent_at_fixed_soc");
  if (tolerance < 0.0) throw ConfigError("latent_at_fixed_soc: tolerance must be non-negative");
  const std::size_t n_a = model.encoder().config().n_a;
  const std::size_t n_b = model.decoder().config().n_b;

  std::vector<std::optional<LatentPoint>> found(normalized.cycles.size());
  parallel_for(normalized.cycles.size(), threads, [&](std::size_t ci) {
    const CycleSeries& c = normalized.cycles[ci];
    const std::size_t count = window_count(c.size(), n_a, n_b, 1);
    if (count == 0) return;
    const std::vector<double> soc = soc_labels(c, &stats, proxy);
    std::size_t best = 0;
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::size_t w = 0; w < count; ++w) {
      const double gap = std::abs(soc[w + n_a - 1] - soc_target);
      if (gap < best_gap) {
        best_gap = gap;
        best = w;
      }
    }
    if (best_gap <= tolerance) found[ci] = make_point(model, c, best, n_a, soc[best + n_a - 1]);
  });

  std::vector<LatentPoint> points;
  for (auto& f : found) {
    if (f) points.push_back(std::move(*f));
  }
  if (points.empty()) {
    throw ShapeError("latent_at_fixed_soc: no cycle has a window ending within " + format_double(tolerance) +
                     " of SOC " + format_double(soc_target));
  }
  return points;
}

std::vector<LatentPoint> latent_across_soc(const Model& model, const Dataset& normalized, std::size_t cycle_position,
                                           const SocProxy& proxy, std::size_t stride) {
  const NormalizationStats& stats = require_stats(normalized, "latent_across_soc");
  if (cycle_position >= normalized.cycles.size()) {
    throw ShapeError("latent_across_soc: cycle position " + std::to_string(cycle_position) + " out of range (" +
                     std::to_string(normalized.cycles.size()) + " cycles)");
  }
  const CycleSeries& c = normalized.cycles[cycle_position];
  const std::size_t n_a = model.encoder().config().n_a;
  const std::size_t n_b = model.decoder().config().n_b;
  const std::size_t count = window_count(c.size(), n_a, n_b, stride);
  if (count < 2) {
    throw ShapeError("latent_across_soc: cycle " + std::to_string(c.cycle_index) + " has " + std::to_string(c.size()) +
                     " samples, too short for two windows");
  }
  const std::vector<double> soc = soc_labels(c, &stats, proxy);
  std::vector<LatentPoint> out;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t start = w * stride;
    out.push_back(make_point(model, c, start, n_a, soc[start + n_a - 1]));
  }
  return out;
}

AlignmentReport latent_alignment(std::span<const LatentPoint> points) {
  if (points.empty()) throw ShapeError("latent_alignment: no points");
  const std::size_t dim = points.front().latent.size();
  std::vector<double> soc;
  std::vector<double> theta;
  for (const auto& p : points) {
    if (!p.has_truth) throw ConfigError("latent_alignment: points lack ground truth");
    if (p.latent.size() != dim) throw ShapeError("latent_alignment: inconsistent latent dimension");
    soc.push_back(p.soc);
    theta.push_back(p.theta_q);
  }
  AlignmentReport r;
  for (std::size_t i = 0; i < dim; ++i) {
    const auto x = column(points, i);
    r.pearson_soc.push_back(pearson(x, soc));
    r.spearman_soc.push_back(spearman(x, soc));
    r.pearson_theta_q.push_back(pearson(x, theta));
    r.spearman_theta_q.push_back(spearman(x, theta));
    r.best_abs_pearson_soc = std::max(r.best_abs_pearson_soc, std::abs(r.pearson_soc.back()));
    r.best_abs_pearson_theta_q = std::max(r.best_abs_pearson_theta_q, std::abs(r.pearson_theta_q.back()));
  }
  return r;
}

double within_cycle_soc_alignment(std::span<const std::vector<LatentPoint>> trajectories) {
  if (trajectories.empty()) throw ShapeError("within_cycle_soc_alignment: no trajectories");
  const std::size_t dim = trajectories.front().empty() ? 0 : trajectories.front().front().latent.size();
  std::vector<double> sums(dim, 0.0);
  for (const auto& t : trajectories) {
    std::vector<double> soc;
    for (const auto& p : t) soc.push_back(p.soc);
    for (std::size_t i = 0; i < dim; ++i) sums[i] += pearson(column(t, i), soc);
  }
  double best = 0.0;
  for (double s : sums) best = std::max(best, std::abs(s / static_cast<double>(trajectories.size())));
  return best;
}

double cycle_ordering_strength(std::span<const LatentPoint> points) {
  if (points.size() < 2) return 0.0;
  const std::size_t dim = points.front().latent.size();
  std::vector<double> index;
  std::vector<double> flat;
  for (const auto& p : points) {
    index.push_back(static_cast<double>(p.cycle_index));
    flat.insert(flat.end(), p.latent.begin(), p.latent.end());
  }
  double best = 0.0;
  for (std::size_t i = 0; i < dim; ++i) best = std::max(best, std::abs(spearman(column(points, i), index)));
  const std::vector<double> dir = principal_direction(flat, dim);
  std::vector<double> proj;
  for (const auto& p : points) {
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i) s += dir[i] * p.latent[i];
    proj.push_back(s);
  }
  return std::max(best, std::abs(spearman(proj, index)));
}

std::vector<double> trajectory_lag1(std::span<const LatentPoint> trajectory) {
  if (trajectory.empty()) return {};
  std::vector<double> out;
  for (std::size_t i = 0; i < trajectory.front().latent.size(); ++i) {
    out.push_back(lag1_autocorrelation(column(trajectory, i)));
  }
  return out;
}

std::vector<LatentPoint> evaluation_latents(const Model& model, const Dataset& normalized, const SocProxy& proxy) {
  const NormalizationStats& stats = require_stats(normalized, "evaluation_latents");
  const std::size_t n_a = model.encoder().config().n_a;
  const std::size_t n_b = model.decoder().config().n_b;
  std::vector<LatentPoint> out;
  for (const auto& c : normalized.cycles) {
    const std::size_t count = window_count(c.size(), n_a, n_b, n_a + n_b);
    if (count == 0) continue;
    const std::vector<double> soc = soc_labels(c, &stats, proxy);
    for (std::size_t w = 0; w < count; ++w) {
      const std::size_t start = w * (n_a + n_b);
      out.push_back(make_point(model, c, start, n_a, soc[start + n_a - 1]));
    }
  }
  return out;
}

void write_predictions_csv(const PredictionReport& report, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "cycle,step,t_s,y_true_v,y_pred_v\n";
  for (const auto& p : report.points) {
    out << p.cycle_index << ',' << p.step << ',' << format_double(p.t_s) << ',' << format_double(p.y_true_v) << ','
        << format_double(p.y_pred_v) << '\n';
  }
  finish(out, path);
}

void write_metrics_csv(const PredictionReport& report, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "cycle,rmse_v,maxabs_v\n";
  for (const auto& c : report.cycles) {
    out << c.cycle_index << ',' << format_double(c.rmse_v) << ',' << format_double(c.maxabs_v) << '\n';
  }
  finish(out, path);
}

void write_latents_csv(std::span<const LatentPoint> points, std::size_t n_xs, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "cycle,window_start,soc";
  for (std::size_t i = 1; i <= n_xs; ++i) out << ",x" << i;
  out << '\n';
  for (const auto& p : points) {
    if (p.latent.size() != n_xs) throw ShapeError("write_latents_csv: latent dimension differs from n_xs");
    out << p.cycle_index << ',' << p.window_start << ',' << format_double(p.soc);
    for (double v : p.latent) out << ',' << format_double(v);
    out << '\n';
  }
  finish(out, path);
}

void export_report(const PredictionReport& report, std::span<const LatentPoint> latents, std::size_t n_xs,
                   const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create report directory '" + dir.string() + "': " + ec.message());
  write_predictions_csv(report, dir / "predictions.csv");
  write_metrics_csv(report, dir / "metrics.csv");
  write_latents_csv(latents, n_xs, dir / "latents.csv");
}

}  // namespace tsae
