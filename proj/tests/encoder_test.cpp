#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "tsae/encoder.hpp"
#include "tsae/errors.hpp"

namespace tsae {
namespace {

using testing::random_matrix;

RealMatrix naive_conv(const RealMatrix& h, const ConvLayerSpec& s, const RealMatrix& w, const RealMatrix& b) {
  const std::size_t a = h.cols();
  const std::size_t n_out = (a - s.kernel_length) / s.stride + 1;
  RealMatrix q(s.out_channels, n_out);
  for (std::size_t j = 0; j < s.out_channels; ++j) {
    for (std::size_t k = 0; k < n_out; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < s.in_channels; ++i) {
        for (std::size_t r = 0; r < s.kernel_length; ++r) {
          acc += h(i, k * s.stride + r) * w(j, i * s.kernel_length + r);
        }
      }
      acc += b[j];
      q(j, k) = s.activation == Activation::tanh ? std::tanh(acc) : acc;
    }
  }
  return q;
}

TEST(Conv1d, HandEvaluatedKernel) {
  const RealMatrix h(1, 4, std::vector<double>{1, 2, 3, 4});
  const ConvLayerSpec s{1, 1, 3, 1, Activation::identity};
  const RealMatrix w(1, 3, std::vector<double>{1, 0, -1});
  const RealMatrix out = conv1d_forward(h, s, w, RealMatrix(1, 1));
  EXPECT_EQ(out, RealMatrix(1, 2, std::vector<double>{-2, -2}));
}

TEST(Conv1d, UnitKernelIsIdentity) {
  const RealMatrix h(1, 5, std::vector<double>{0.5, -1, 2, 7, 3});
  const ConvLayerSpec s{1, 1, 1, 1, Activation::identity};
  EXPECT_EQ(conv1d_forward(h, s, RealMatrix(1, 1, 1.0), RealMatrix(1, 1)), h);
}

TEST(Conv1d, SumsOverChannels) {
  const RealMatrix h(2, 2, std::vector<double>{1, 1, 2, 2});
  const ConvLayerSpec s{2, 1, 1, 1, Activation::identity};
  const RealMatrix out = conv1d_forward(h, s, RealMatrix(1, 2, 1.0), RealMatrix(1, 1));
  EXPECT_EQ(out, RealMatrix(1, 2, std::vector<double>{3, 3}));
}

TEST(Conv1d, MatchesNaiveOracle) {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    ConvLayerSpec s;
    s.in_channels = 1 + rng.index(4);
    s.out_channels = 1 + rng.index(4);
    const std::size_t a = 1 + rng.index(32);
    s.kernel_length = 1 + rng.index(a);
    s.stride = 1 + rng.index(4);
    s.activation = rng.bernoulli(0.5) ? Activation::tanh : Activation::identity;
    const RealMatrix h = random_matrix(s.in_channels, a, rng, 2.0);
    const RealMatrix w = random_matrix(s.out_channels, s.in_channels * s.kernel_length, rng);
    const RealMatrix b = random_matrix(s.out_channels, 1, rng);
    const RealMatrix got = conv1d_forward(h, s, w, b);
    const RealMatrix want = naive_conv(h, s, w, b);
    ASSERT_TRUE(got.same_shape(want));
    EXPECT_EQ(got.cols(), (a - s.kernel_length) / s.stride + 1);
    for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-12);
  }
}

TEST(Conv1d, RejectsBadShapes) {
  const ConvLayerSpec s{1, 1, 5, 1, Activation::identity};
  EXPECT_THROW(conv1d_forward(RealMatrix(1, 4), s, RealMatrix(1, 5), RealMatrix(1, 1)), ShapeError);
  const ConvLayerSpec two{2, 1, 1, 1, Activation::identity};
  EXPECT_THROW(conv1d_forward(RealMatrix(1, 4), two, RealMatrix(1, 2), RealMatrix(1, 1)), ShapeError);
}

TEST(Conv1d, BackwardMatchesFiniteDifferences) {
  Rng rng(17);
  const ConvLayerSpec s{3, 2, 4, 2, Activation::tanh};
  const RealMatrix h = random_matrix(3, 13, rng);
  const RealMatrix w = random_matrix(2, 12, rng);
  const RealMatrix b = random_matrix(2, 1, rng);
  const RealMatrix out = conv1d_forward(h, s, w, b);
  const RealMatrix up = random_matrix(out.rows(), out.cols(), rng);

  RealMatrix gw(2, 12), gb(2, 1), gh(3, 13);
  conv1d_backward(h, out, s, w, up, gw, gb, &gh);

  auto dot = [&](const RealMatrix& q) {
    double acc = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) acc += q[k] * up[k];
    return acc;
  };
  auto f_w = [&](std::span<const double> v) {
    return dot(conv1d_forward(h, s, RealMatrix(2, 12, {v.begin(), v.end()}), b));
  };
  auto f_b = [&](std::span<const double> v) {
    return dot(conv1d_forward(h, s, w, RealMatrix(2, 1, {v.begin(), v.end()})));
  };
  auto f_h = [&](std::span<const double> v) {
    return dot(conv1d_forward(RealMatrix(3, 13, {v.begin(), v.end()}), s, w, b));
  };
  EXPECT_LT(finite_diff_check(f_w, w.values(), gw.values()).max_relative_error, 1e-4);
  EXPECT_LT(finite_diff_check(f_b, b.values(), gb.values()).max_relative_error, 1e-4);
  EXPECT_LT(finite_diff_check(f_h, h.values(), gh.values()).max_relative_error, 1e-4);
}

TEST(EncoderConfig, DefaultScheduleFor500) {
  const EncoderConfig cfg = EncoderConfig::default_schedule(500, 3);
  ASSERT_EQ(cfg.layers.size(), 3u);
  EXPECT_EQ(cfg.layers[0].out_channels, 8u);
  EXPECT_EQ(cfg.layers[1].out_channels, 16u);
  EXPECT_EQ(cfg.layers[2].out_channels, 16u);
  // 500 -> 122 -> 29 -> 13
  EXPECT_EQ(cfg.sequence_lengths(), (std::vector<std::size_t>{500, 122, 29, 13}));
  EXPECT_EQ(cfg.flattened_size(), 16u * 13u);
}

TEST(EncoderConfig, SmallHistorySchedules) {
  EXPECT_EQ(EncoderConfig::default_schedule(16, 2).sequence_lengths(), (std::vector<std::size_t>{16, 8, 3}));
  EXPECT_EQ(EncoderConfig::default_schedule(64, 2).sequence_lengths(), (std::vector<std::size_t>{64, 29, 13}));
  for (std::size_t n_a = 2; n_a < 256; ++n_a) {
    EXPECT_NO_THROW(EncoderConfig::default_schedule(n_a, 2).validate()) << n_a;
  }
}

TEST(EncoderConfig, OutputLengthFormula) {
  const EncoderConfig cfg = EncoderConfig::default_schedule(300, 3);
  const auto lengths = cfg.sequence_lengths();
  for (std::size_t l = 0; l < cfg.layers.size(); ++l) {
    EXPECT_EQ(lengths[l + 1], (lengths[l] - cfg.layers[l].kernel_length) / cfg.layers[l].stride + 1);
  }
}

TEST(EncoderConfig, ChannelMismatchRejected) {
  EncoderConfig cfg = EncoderConfig::default_schedule(64, 2);
  cfg.layers[1].in_channels = 5;
  EXPECT_THROW(cfg.validate(), ShapeError);
}

TEST(Encoder, DefaultLatentLength) {
  const Encoder enc(EncoderConfig::default_schedule(500, 3));
  ParamStore p;
  enc.init_params(p, 1);
  Rng rng(4);
  EXPECT_EQ(enc.forward(random_matrix(500, 2, rng), p).size(), 3u);
}

TEST(Encoder, ZeroParametersGiveZeroLatent) {
  const Encoder enc(EncoderConfig::default_schedule(16, 2));
  ParamStore p;
  enc.init_params(p, 1);
  for (auto& e : p) e.value.fill(0.0);
  Rng rng(4);
  const LatentState x = enc.forward(random_matrix(16, 2, rng), p);
  for (double v : x.values) EXPECT_EQ(v, 0.0);
}

TEST(Encoder, DeterministicAndBatchIndependent) {
  const Encoder enc(EncoderConfig::default_schedule(64, 3));
  ParamStore p;
  enc.init_params(p, 7);
  Rng rng(4);
  const RealMatrix w1 = random_matrix(64, 2, rng);
  const RealMatrix w2 = random_matrix(64, 2, rng);
  const LatentState a = enc.forward(w1, p);
  (void)enc.forward(w2, p);
  EXPECT_EQ(enc.forward(w1, p), a);
  EXPECT_EQ(encoder_forward(w1, enc.config(), p), a);
}

TEST(Encoder, WrongWindowLengthNamesExpectedLength) {
  const Encoder enc(EncoderConfig::default_schedule(16, 2));
  ParamStore p;
  enc.init_params(p, 1);
  try {
    (void)enc.forward(RealMatrix(15, 2), p);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("16"), std::string::npos);
  }
}

TEST(Encoder, BackwardWithoutCacheThrows) {
  const Encoder enc(EncoderConfig::default_schedule(16, 2));
  ParamStore p;
  enc.init_params(p, 1);
  const std::vector<double> up{1.0, 1.0};
  EXPECT_THROW(enc.backward(EncoderCache{}, p, up), Error);
}

TEST(Encoder, ZeroUpstreamGivesZeroGradients) {
  const Encoder enc(EncoderConfig::default_schedule(16, 2));
  ParamStore p;
  enc.init_params(p, 1);
  Rng rng(3);
  EncoderCache cache;
  (void)enc.forward(random_matrix(16, 2, rng), p, &cache);
  const std::vector<double> up{0.0, 0.0};
  const RealMatrix gin = enc.backward(cache, p, up);
  EXPECT_EQ(p.grad_norm(), 0.0);
  EXPECT_EQ(gin.squared_norm(), 0.0);
}

TEST(Encoder, BackwardAccumulates) {
  const Encoder enc(EncoderConfig::default_schedule(16, 2));
  ParamStore p;
  enc.init_params(p, 1);
  Rng rng(3);
  EncoderCache cache;
  (void)enc.forward(random_matrix(16, 2, rng), p, &cache);
  const std::vector<double> up{0.3, -1.2};
  enc.backward(cache, p, up);
  const ParamStore once = p;
  enc.backward(cache, p, up);
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t k = 0; k < p[i].grad.size(); ++k) {
      EXPECT_NEAR(p[i].grad[k], 2.0 * once[i].grad[k], 1e-12 * (1.0 + std::abs(once[i].grad[k])));
    }
  }
}

TEST(Encoder, GradientsPassFiniteDifferenceCheck) {
  for (std::size_t n_a : {16u, 40u}) {
    const Encoder enc(EncoderConfig::default_schedule(n_a, 3));
    ParamStore p;
    enc.init_params(p, 5);
    Rng rng(n_a);
    for (auto& e : p) {
      if (e.name.find("bias") != std::string::npos) e.value = random_matrix(e.value.rows(), e.value.cols(), rng, 0.3);
    }
    const RealMatrix window = random_matrix(n_a, 2, rng);
    const std::vector<double> up{0.7, -0.4, 1.1};
    auto loss = [&](const ParamStore& s) {
      const LatentState x = enc.forward(window, s);
      return up[0] * x[0] + up[1] * x[1] + up[2] * x[2];
    };
    EncoderCache cache;
    (void)enc.forward(window, p, &cache);
    const RealMatrix gin = enc.backward(cache, p, up);
    const GradCheckReport r = finite_diff_check(loss, p);
    EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_name << "[" << r.worst_index << "]";

    auto loss_in = [&](std::span<const double> v) {
      const LatentState x = enc.forward(RealMatrix(n_a, 2, {v.begin(), v.end()}), p);
      return up[0] * x[0] + up[1] * x[1] + up[2] * x[2];
    };
    EXPECT_LT(finite_diff_check(loss_in, window.values(), gin.values()).max_relative_error, 1e-4);
  }
}

}  // namespace
}  // namespace tsae
