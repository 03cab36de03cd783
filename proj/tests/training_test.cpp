#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "tsae/errors.hpp"
#include "tsae/training.hpp"

namespace tsae {
namespace {

namespace fs = std::filesystem;

TrainConfig tiny_config() {
  TrainConfig c;
  c.n_a = 16;
  c.n_b = 4;
  c.n_xs = 2;
  c.run_length = 4;
  c.batch_groups = 2;
  c.max_epochs = 3;
  c.patience = 5;
  c.groups_per_epoch = 6;
  c.seed = 5;
  return c;
}

std::shared_ptr<const Dataset> tiny_dataset() {
  static const auto ds = [] {
    GenerateOptions g;
    g.cycles = 3;
    g.soc_start = 0.8;
    g.soc_end = 0.795;
    return std::make_shared<const Dataset>(normalize(generate_dataset(SimConfig{}, g)).first);
  }();
  return ds;
}

struct Splits {
  WindowSet train, val;
};

Splits tiny_splits(const TrainConfig& c) {
  SplitOptions opt;
  opt.n_a = c.n_a;
  opt.n_b = c.n_b;
  opt.block_windows = 32;
  const DatasetSplit s = split_dataset(tiny_dataset(), HoldoutSpec{}, opt);
  return {s.train, s.validation};
}

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "tsae_training_test";
  fs::create_directories(dir);
  return dir / name;
}

TEST(TrainConfig, Validation) {
  TrainConfig c = tiny_config();
  EXPECT_NO_THROW(c.validate());
  c.run_length = 2;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.lambda = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  EXPECT_FALSE(c.clipping_active());
  c.n_b = 33;
  EXPECT_TRUE(c.clipping_active());
}

TEST(BatchSampler, GroupsAreConsecutiveRunsWithinOneCycle) {
  const TrainConfig c = tiny_config();
  const Splits s = tiny_splits(c);
  TrainConfig all = c;
  all.groups_per_epoch = 0;
  const auto batches = batch_sampler(s.train, all, 1);
  std::set<std::size_t> seen;
  std::size_t groups = 0;
  for (const auto& b : batches) {
    EXPECT_LE(b.size(), c.batch_groups);
    for (const auto& g : b) {
      ++groups;
      ASSERT_EQ(g.windows.size(), c.run_length);
      for (std::size_t k = 0; k < g.windows.size(); ++k) {
        const WindowRef& r = s.train.ref(g.windows[k]);
        EXPECT_EQ(r.cycle, g.cycle);
        if (k > 0) EXPECT_EQ(r.start, s.train.ref(g.windows[k - 1]).start + 1);
        EXPECT_TRUE(seen.insert(g.windows[k]).second);
      }
    }
  }
  EXPECT_GT(groups, c.groups_per_epoch);
  EXPECT_EQ(batch_sampler(s.train, c, 1).size(), 3u);  // 6 groups, 2 per batch
}

TEST(BatchSampler, SeedControlsOrder) {
  const TrainConfig c = tiny_config();
  const Splits s = tiny_splits(c);
  const auto a = batch_sampler(s.train, c, 10);
  const auto b = batch_sampler(s.train, c, 10);
  const auto d = batch_sampler(s.train, c, 11);
  EXPECT_EQ(a[0][0].windows, b[0][0].windows);
  EXPECT_NE(a[0][0].windows, d[0][0].windows);
}

TEST(BatchSampler, TooShortRunsRejected) {
  TrainConfig c = tiny_config();
  c.run_length = 100000;
  EXPECT_THROW(batch_sampler(tiny_splits(tiny_config()).train, c, 1), ConfigError);
}

TEST(Model, ParameterOrderAndShapes) {
  const TrainConfig c = tiny_config();
  Model m = Model::create(c);
  m.init_params(1);
  EXPECT_EQ(m.params()[0].name, Encoder::kernel_name(0));
  EXPECT_EQ(m.params()[m.params().size() - 1].name, Decoder::param_names().back());

  ParamStore wrong;
  Model other = Model::create([&] {
    TrainConfig t = c;
    t.n_xs = 3;
    return t;
  }());
  other.init_params(1);
  EXPECT_THROW(m.set_params(other.params()), ShapeError);
}

TEST(BatchGradients, MatchFiniteDifferences) {
  TrainConfig c = tiny_config();
  const Splits s = tiny_splits(c);
  Model m = Model::create(c);
  m.init_params(3);
  const auto batches = batch_sampler(s.train, c, 2);
  for (double lambda : {0.0, 0.5}) {
    ParamStore p = m.params();
    p.zero_grad();
    compute_batch_gradients(m, p, s.train, batches[0], BatchOptions{lambda, true, 1});
    GradCheckOptions opt;
    opt.probe_count = 60;
    opt.seed = 9;
    const auto r = finite_diff_check(
        [&](const ParamStore& q) { return batch_loss(m, q, s.train, batches[0], lambda).total; }, p, opt);
    EXPECT_LT(r.max_relative_error, 1e-4) << "lambda " << lambda << " " << r.worst_name << "[" << r.worst_index << "]";
  }
}

TEST(BatchGradients, LambdaZeroMatchesPredictionOnly) {
  const TrainConfig c = tiny_config();
  const Splits s = tiny_splits(c);
  Model m = Model::create(c);
  m.init_params(3);
  const auto batch = batch_sampler(s.train, c, 2)[0];
  ParamStore a = m.params(), b = m.params();
  a.zero_grad();
  b.zero_grad();
  compute_batch_gradients(m, a, s.train, batch, BatchOptions{0.0, true, 1});
  compute_batch_gradients(m, b, s.train, batch, BatchOptions{0.0, false, 1});
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].grad, b[i].grad) << a[i].name;
}

TEST(BatchGradients, IndependentOfThreadCount) {
  const TrainConfig c = tiny_config();
  const Splits s = tiny_splits(c);
  Model m = Model::create(c);
  m.init_params(3);
  const auto batch = batch_sampler(s.train, c, 2)[0];
  ParamStore a = m.params(), b = m.params();
  a.zero_grad();
  b.zero_grad();
  const auto la = compute_batch_gradients(m, a, s.train, batch, BatchOptions{0.1, true, 1});
  const auto lb = compute_batch_gradients(m, b, s.train, batch, BatchOptions{0.1, true, 4});
  EXPECT_EQ(la.total, lb.total);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].grad, b[i].grad) << a[i].name;
}

TEST(PredictionLoss, SubsetIsDeterministic) {
  const TrainConfig c = tiny_config();
  const Splits s = tiny_splits(c);
  Model m = Model::create(c);
  m.init_params(3);
  const double full = prediction_loss(m, s.val);
  EXPECT_GT(full, 0.0);
  EXPECT_EQ(prediction_loss(m, s.val, 10), prediction_loss(m, s.val, 10));
  EXPECT_EQ(prediction_loss(m, s.val, s.val.size() + 5), full);
  EXPECT_THROW(prediction_loss(m, WindowSet()), ShapeError);
}

TEST(Train, BitIdenticalAcrossRuns) {
  const TrainConfig c = tiny_config();
  const Splits s = tiny_splits(c);
  const TrainResult a = train(s.train, s.val, c);
  const TrainResult b = train(s.train, s.val, c);
  ASSERT_EQ(a.history.epochs.size(), b.history.epochs.size());
  for (std::size_t e = 0; e < a.history.epochs.size(); ++e) {
    EXPECT_EQ(a.history.epochs[e].train_pred, b.history.epochs[e].train_pred);
    EXPECT_EQ(a.history.epochs[e].val_pred, b.history.epochs[e].val_pred);
  }
  for (std::size_t i = 0; i < a.model.params().size(); ++i) {
    EXPECT_EQ(a.model.params()[i].value, b.model.params()[i].value);
  }
}

TEST(Train, ThreadCountDoesNotChangeTheRun) {
  TrainConfig c = tiny_config();
  c.max_epochs = 2;
  const Splits s = tiny_splits(c);
  const TrainResult a = train(s.train, s.val, c);
  c.threads = 3;
  const TrainResult b = train(s.train, s.val, c);
  for (std::size_t i = 0; i < a.model.params().size(); ++i) {
    EXPECT_EQ(a.model.params()[i].value, b.model.params()[i].value);
  }
}

TEST(Train, PatienceZeroStopsAfterOneEpoch) {
  TrainConfig c = tiny_config();
  c.patience = 0;
  const Splits s = tiny_splits(c);
  std::size_t calls = 0;
  const TrainResult r = train(s.train, s.val, c, nullptr, [&](const EpochRecord&) { ++calls; });
  EXPECT_EQ(r.history.epochs.size(), 1u);
  EXPECT_EQ(calls, 1u);
  EXPECT_EQ(r.history.best_epoch, 1u);
}

TEST(Train, ReturnsBestValidationParameters) {
  TrainConfig c = tiny_config();
  c.max_epochs = 4;
  const Splits s = tiny_splits(c);
  const TrainResult r = train(s.train, s.val, c);
  const auto& best = r.history.epochs.at(r.history.best_epoch - 1);
  EXPECT_EQ(prediction_loss(r.model, s.val, c.val_max_windows), best.val_pred);
  for (const auto& e : r.history.epochs) EXPECT_GE(e.val_pred, best.val_pred);
  EXPECT_EQ(r.history.final_train_pred, prediction_loss(r.model, s.train, c.val_max_windows));
}

TEST(Train, ResumeContinuesHistory) {
  TrainConfig c = tiny_config();
  c.max_epochs = 2;
  const Splits s = tiny_splits(c);
  const TrainResult first = train(s.train, s.val, c);
  c.max_epochs = 3;
  const TrainResult resumed = train(s.train, s.val, c, &first);
  ASSERT_EQ(resumed.history.epochs.size(), 3u);
  EXPECT_EQ(resumed.history.epochs[0].val_pred, first.history.epochs[0].val_pred);
  EXPECT_EQ(resumed.history.epochs[2].epoch, 3u);
  EXPECT_GT(resumed.optimizer.step, first.optimizer.step);
}

TEST(Train, DivergenceRaisesNumericalError) {
  TrainConfig c = tiny_config();
  c.learning_rate = 1e300;
  const Splits s = tiny_splits(c);
  EXPECT_THROW(train(s.train, s.val, c), NumericalError);
}

TEST(Train, WindowShapeMismatch) {
  TrainConfig c = tiny_config();
  const Splits s = tiny_splits(c);
  c.n_b = 5;
  EXPECT_THROW(train(s.train, s.val, c), ShapeError);
}

ModelBundle tiny_bundle() {
  TrainConfig c = tiny_config();
  c.max_epochs = 1;
  const Splits s = tiny_splits(c);
  TrainResult r = train(s.train, s.val, c);
  return ModelBundle{c, *tiny_dataset()->stats, r.model.params(), r.optimizer, r.history};
}

TEST(Checkpoint, RoundTripIsExact) {
  const ModelBundle b = tiny_bundle();
  const fs::path p = temp_file("model.ckpt");
  save_checkpoint(b, p);
  const ModelBundle back = load_checkpoint(p);
  EXPECT_EQ(back.config, b.config);
  EXPECT_EQ(back.stats, b.stats);
  ASSERT_EQ(back.params.size(), b.params.size());
  for (std::size_t i = 0; i < b.params.size(); ++i) {
    EXPECT_EQ(back.params[i].name, b.params[i].name);
    EXPECT_EQ(back.params[i].value, b.params[i].value);
  }
  ASSERT_TRUE(back.optimizer.has_value());
  EXPECT_EQ(back.optimizer->step, b.optimizer->step);
  EXPECT_EQ(back.optimizer->second_moment, b.optimizer->second_moment);
  EXPECT_EQ(back.history.epochs.size(), b.history.epochs.size());

  const WindowSample w = tiny_splits(b.config).val.sample(0);
  EXPECT_EQ(back.model().predict(w), b.model().predict(w));
}

TEST(Checkpoint, TruncatedFileIsIoError) {
  const fs::path p = temp_file("trunc.ckpt");
  save_checkpoint(tiny_bundle(), p);
  fs::resize_file(p, fs::file_size(p) / 2);
  EXPECT_THROW(load_checkpoint(p), IoError);
  EXPECT_THROW(load_checkpoint(temp_file("missing.ckpt")), IoError);
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream out(p);
  out << j.dump();
}

TEST(Checkpoint, VersionAndShapeChecked) {
  const fs::path p = temp_file("tamper.ckpt");
  save_checkpoint(tiny_bundle(), p);
  const nlohmann::json good = read_json(p);

  nlohmann::json j = good;
  j["version"] = 2;
  write_json(p, j);
  EXPECT_THROW(load_checkpoint(p), ConfigError);

  j = good;
  j["config"]["n_xs"] = 3;
  write_json(p, j);
  EXPECT_THROW(load_checkpoint(p), ShapeError);

  j = good;
  j.erase("params");
  write_json(p, j);
  try {
    (void)load_checkpoint(p);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("params"), std::string::npos);
  }
}

}  // namespace
}  // namespace tsae
