#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "test_util.hpp"
#include "tsae/errors.hpp"
#include "tsae/evaluation.hpp"
#include "tsae/stats.hpp"

namespace tsae {
namespace {

namespace fs = std::filesystem;

CycleSeries sine_cycle(std::size_t index, std::size_t n, double phase) {
  CycleSeries c;
  c.cell_id = "A";
  c.cycle_index = index;
  for (std::size_t t = 0; t < n; ++t) {
    const double x = 0.05 * static_cast<double>(t) + phase;
    c.time_s.push_back(0.1 * static_cast<double>(t));
    c.current_a.push_back(2.0 + std::cos(x));
    c.voltage_v.push_back(3.7 + 0.1 * std::sin(x));
  }
  return c;
}

Dataset normalized_cycles(std::vector<std::size_t> lengths) {
  Dataset d;
  for (std::size_t k = 0; k < lengths.size(); ++k) d.cycles.push_back(sine_cycle(k, lengths[k], 0.3 * k));
  return normalize(d).first;
}

Predictor oracle() {
  return [](const WindowSample& w) { return w.future_targets; };
}

Predictor biased(double normalized_bias) {
  return [normalized_bias](const WindowSample& w) {
    auto y = w.future_targets;
    for (double& v : y) v += normalized_bias;
    return y;
  };
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "tsae_evaluation_test" / name;
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

TEST(RolloutMetrics, OracleHasZeroError) {
  const Dataset d = normalized_cycles({100, 120});
  const PredictionReport r = rollout_metrics(oracle(), d, 10, 5);
  EXPECT_EQ(r.rmse_v, 0.0);
  EXPECT_EQ(r.maxabs_v, 0.0);
  EXPECT_GT(r.persistence_rmse_v, 0.0);
  EXPECT_EQ(r.horizon, 5u);
  ASSERT_EQ(r.cycles.size(), 2u);
  EXPECT_EQ(r.cycles[0].windows, 6u);
  EXPECT_EQ(r.cycles[1].windows, 8u);
  EXPECT_EQ(r.points.size(), (6u + 8u) * 5u);
}

TEST(RolloutMetrics, ConstantBiasInVolts) {
  const Dataset d = normalized_cycles({200});
  const double span_v = d.stats->voltage.max - d.stats->voltage.min;
  const double bias_v = 0.25 * span_v / (2.0 * kNormalizedHalfRange);
  const PredictionReport r = rollout_metrics(biased(0.25), d, 20, 10);
  EXPECT_NEAR(r.rmse_v, bias_v, 1e-12);
  EXPECT_NEAR(r.maxabs_v, bias_v, 1e-12);
  std::size_t total = 0;
  for (auto c : r.histogram.counts) total += c;
  EXPECT_EQ(total, r.points.size());
  EXPECT_EQ(r.histogram.counts.size(), 40u);
  EXPECT_EQ(r.histogram.counts.back(), total);  // every error sits at +maxabs
}

TEST(RolloutMetrics, AggregateWeightsCyclesByWindowCount) {
  // Cycle 0: one window with error e0, cycle 1: three windows with error e1.
  const Dataset d = normalized_cycles({15, 45});
  const double scale = (d.stats->voltage.max - d.stats->voltage.min) / (2.0 * kNormalizedHalfRange);
  const Predictor p = [](const WindowSample& w) {
    auto y = w.future_targets;
    for (double& v : y) v += w.cycle_index == 0 ? 0.1 : 0.2;
    return y;
  };
  const PredictionReport r = rollout_metrics(p, d, 10, 5);
  ASSERT_EQ(r.cycles[0].windows, 1u);
  ASSERT_EQ(r.cycles[1].windows, 3u);
  const double e0 = 0.1 * scale, e1 = 0.2 * scale;
  EXPECT_NEAR(r.cycles[0].rmse_v, e0, 1e-12);
  EXPECT_NEAR(r.cycles[1].rmse_v, e1, 1e-12);
  EXPECT_NEAR(r.rmse_v, std::sqrt((1 * e0 * e0 + 3 * e1 * e1) / 4.0), 1e-12);
}

TEST(RolloutMetrics, PersistenceBaselineByHand) {
  Dataset raw;
  CycleSeries c;
  c.cell_id = "A";
  for (std::size_t t = 0; t < 4; ++t) {
    c.time_s.push_back(0.1 * static_cast<double>(t));
    c.current_a.push_back(static_cast<double>(t));
    c.voltage_v.push_back(3.0 + static_cast<double>(t));  // 3, 4, 5, 6
  }
  raw.cycles.push_back(c);
  const Dataset d = normalize(raw).first;
  const PredictionReport r = rollout_metrics(oracle(), d, 2, 2);
  // Last history voltage 4 against targets 5 and 6.
  EXPECT_NEAR(r.persistence_rmse_v, std::sqrt((1.0 + 4.0) / 2.0), 1e-12);
}

TEST(RolloutMetrics, Errors) {
  Dataset raw;
  raw.cycles.push_back(sine_cycle(0, 50, 0.0));
  EXPECT_THROW(rollout_metrics(oracle(), raw, 10, 5), ConfigError);
  const Dataset d = normalize(raw).first;
  EXPECT_THROW(rollout_metrics(oracle(), d, 40, 20), ShapeError);
  const Predictor wrong = [](const WindowSample&) { return std::vector<double>{0.0}; };
  EXPECT_THROW(rollout_metrics(wrong, d, 10, 5), ShapeError);
  Dataset empty;
  empty.stats = d.stats;
  EXPECT_THROW(rollout_metrics(oracle(), empty, 10, 5), ShapeError);
}

TEST(RolloutMetrics, ThreadCountInvariant) {
  const Dataset d = normalized_cycles({300, 260, 410});
  const auto a = rollout_metrics(biased(0.01), d, 20, 10, 1);
  const auto b = rollout_metrics(biased(0.01), d, 20, 10, 3);
  EXPECT_EQ(a.rmse_v, b.rmse_v);
  EXPECT_EQ(a.histogram.counts, b.histogram.counts);
}

TEST(SocLabels, TruthOrCoulombCount) {
  CycleSeries c = sine_cycle(0, 5, 0.0);
  c.current_a.assign(5, 4.85 * 3600.0);  // 0.1 SOC per 0.1 s step
  const auto soc = soc_labels(c, nullptr, SocProxy{0.8, 4.85});
  EXPECT_DOUBLE_EQ(soc[0], 0.8);
  EXPECT_NEAR(soc[1], 0.7, 1e-12);
  EXPECT_NEAR(soc[4], 0.4, 1e-12);
  c.truth = SlowStateTruth{{0.5, 0.4, 0.3, 0.2, 0.1}, 1.0, 1.0};
  EXPECT_EQ(soc_labels(c, nullptr)[2], 0.3);
}

LatentPoint point(std::size_t cycle, double soc, double theta_q, std::vector<double> latent) {
  LatentPoint p;
  p.cycle_index = cycle;
  p.soc = soc;
  p.theta_q = theta_q;
  p.has_truth = true;
  p.latent = std::move(latent);
  return p;
}

TEST(LatentAlignment, CopyOfSocIsPerfect) {
  std::vector<LatentPoint> pts;
  for (int k = 0; k < 50; ++k) {
    const double soc = 0.2 + 0.01 * k;
    pts.push_back(point(k, soc, 1.0 - 0.002 * k, {soc, 0.0}));
  }
  const AlignmentReport r = latent_alignment(pts);
  EXPECT_NEAR(r.pearson_soc[0], 1.0, 1e-12);
  EXPECT_NEAR(r.spearman_soc[0], 1.0, 1e-12);
  EXPECT_NEAR(r.pearson_theta_q[0], -1.0, 1e-12);
  EXPECT_EQ(r.pearson_soc[1], 0.0);  // constant feature
  EXPECT_NEAR(r.best_abs_pearson_soc, 1.0, 1e-12);
}

TEST(LatentAlignment, NoiseIsUncorrelated) {
  Rng rng(71);
  std::vector<LatentPoint> pts;
  for (int k = 0; k < 200; ++k) pts.push_back(point(k, rng.uniform(0, 1), 1.0, {rng.normal(0, 1)}));
  EXPECT_LT(latent_alignment(pts).best_abs_pearson_soc, 0.2);
}

TEST(LatentAlignment, InvariantToAffineMaps) {
  Rng rng(3);
  std::vector<LatentPoint> a, b;
  for (int k = 0; k < 30; ++k) {
    const double soc = rng.uniform(0, 1);
    const double x = soc + rng.normal(0, 0.2);
    a.push_back(point(k, soc, 1.0, {x}));
    b.push_back(point(k, soc, 1.0, {-3.0 * x + 2.0}));
  }
  EXPECT_NEAR(latent_alignment(a).pearson_soc[0], -latent_alignment(b).pearson_soc[0], 1e-12);
  EXPECT_NEAR(latent_alignment(a).spearman_soc[0], -latent_alignment(b).spearman_soc[0], 1e-12);
}

TEST(LatentAlignment, RequiresTruth) {
  std::vector<LatentPoint> pts{point(0, 0.5, 1.0, {1.0})};
  pts[0].has_truth = false;
  EXPECT_THROW(latent_alignment(pts), ConfigError);
  EXPECT_THROW(latent_alignment(std::vector<LatentPoint>{}), ShapeError);
}

TEST(Stats, SpearmanTiesAndPrincipalDirection) {
  EXPECT_EQ(ranks(std::vector<double>{10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 8, 27, 64}), 1.0, 1e-12);
  const std::vector<double> pts{1, 1, 2, 2, -1, -1, -3, -3, 0.5, 0.5};
  const auto dir = principal_direction(pts, 2);
  EXPECT_NEAR(std::abs(dir[0]), std::sqrt(0.5), 1e-9);
  EXPECT_NEAR(std::abs(dir[1]), std::sqrt(0.5), 1e-9);
}

TEST(CycleOrdering, MonotoneFeatureScoresOne) {
  std::vector<LatentPoint> pts;
  Rng rng(8);
  for (int k = 0; k < 20; ++k) pts.push_back(point(k, 0.8, 1.0, {rng.normal(0, 1), -0.1 * k}));
  EXPECT_NEAR(cycle_ordering_strength(pts), 1.0, 1e-12);
}

TEST(TrajectoryLag1, SmoothTrajectory) {
  std::vector<LatentPoint> pts;
  for (int k = 0; k < 20; ++k) pts.push_back(point(0, 0.8 - 0.01 * k, 1.0, {0.01 * k}));
  EXPECT_NEAR(trajectory_lag1(pts)[0], 1.0, 1e-12);

  std::vector<std::vector<LatentPoint>> trajectories{pts};
  EXPECT_NEAR(within_cycle_soc_alignment(trajectories), 1.0, 1e-12);
}

TEST(Export, CsvHeadersAndReimport) {
  const Dataset d = normalized_cycles({90, 150});
  const PredictionReport r = rollout_metrics(biased(0.05), d, 10, 5);
  const fs::path dir = temp_dir("export");
  std::vector<LatentPoint> latents{point(0, 0.7, 1.0, {0.1, 0.2})};
  export_report(r, latents, 2, dir);

  const auto preds = read_lines(dir / "predictions.csv");
  EXPECT_EQ(preds.front(), "cycle,step,t_s,y_true_v,y_pred_v");
  EXPECT_EQ(preds.size(), r.points.size() + 1);
  EXPECT_EQ(read_lines(dir / "metrics.csv").front(), "cycle,rmse_v,maxabs_v");
  const auto lat = read_lines(dir / "latents.csv");
  EXPECT_EQ(lat.front(), "cycle,window_start,soc,x1,x2");
  EXPECT_EQ(lat[1], "0,0,0.7,0.1,0.2");

  // Per-cycle RMSE recomputed from the exported rows.
  std::map<std::size_t, std::pair<double, std::size_t>> acc;
  for (std::size_t i = 1; i < preds.size(); ++i) {
    std::stringstream row(preds[i]);
    std::string cycle, step, t, y, yhat;
    std::getline(row, cycle, ',');
    std::getline(row, step, ',');
    std::getline(row, t, ',');
    std::getline(row, y, ',');
    std::getline(row, yhat, ',');
    const double e = std::stod(yhat) - std::stod(y);
    auto& a = acc[std::stoul(cycle)];
    a.first += e * e;
    a.second += 1;
  }
  for (const auto& c : r.cycles) {
    const auto& a = acc.at(c.cycle_index);
    EXPECT_NEAR(std::sqrt(a.first / static_cast<double>(a.second)), c.rmse_v, 1e-9);
  }
}

TEST(Export, EmptyLatentsWriteHeaderOnly) {
  const fs::path p = temp_dir("empty") / "latents.csv";
  write_latents_csv({}, 3, p);
  EXPECT_EQ(read_lines(p), (std::vector<std::string>{"cycle,window_start,soc,x1,x2,x3"}));
}

TEST(Export, UnwritableDirectoryIsIoError) {
  const fs::path blocker = temp_dir("blocked") / "file";
  std::ofstream(blocker) << "x";
  const Dataset d = normalized_cycles({90});
  EXPECT_THROW(export_report(rollout_metrics(oracle(), d, 10, 5), {}, 1, blocker / "sub"), IoError);
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(3.0), "3");
  const double x = 0.1 + 0.2;
  EXPECT_EQ(std::stod(format_double(x)), x);
}

}  // namespace
}  // namespace tsae
