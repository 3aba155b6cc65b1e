#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "edgefall/trainer.hpp"
#include "oracles.hpp"

using namespace edgefall;

namespace {

TrainConfig quick_config(std::size_t epochs = 5) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-2;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST(Bce, HandComputedValues) {
  EXPECT_NEAR(bce_loss(0.731058, 0), 1.3132595360111048, 1e-6);
  EXPECT_NEAR(bce_loss(0.5, 1), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_loss(0.5, 0), std::log(2.0), 1e-15);
  // Clamped at the boundaries.
  EXPECT_NEAR(bce_loss(0.0, 1), -std::log(1e-12), 1e-9);
  EXPECT_TRUE(std::isfinite(bce_loss(1.0, 0)));
  EXPECT_GE(bce_loss(0.3, 1), 0.0);
}

TEST(Backward, MatchesScalarOracleFiniteDifferences) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    const auto m = oracle::random_model(rng, 4, 4, 3);
    std::uniform_int_distribution<std::size_t> len(1, 5);
    const auto w = oracle::random_window(rng, m.topology.input_channels, len(rng));
    const int y = trial % 2;
    const auto [p, trace] = forward(m, w);
    const auto [loss, g] = backward(m, w, y, trace);
    EXPECT_NEAR(loss, oracle::bce(oracle::probability(m, w), y), 1e-12);
    const auto fd = oracle::finite_difference_gradients(m, w, y, 1e-5);
    const auto a = g.spans();
    const auto n = fd.spans();
    for (std::size_t k = 0; k < a.size(); ++k) {
      for (std::size_t i = 0; i < a[k].size(); ++i) {
        EXPECT_LT(relative_error(a[k][i], n[k][i]), 1e-4)
            << Parameters::kNames[k] << "[" << i << "] analytic " << a[k][i] << " numeric " << n[k][i];
      }
    }
  }
}

TEST(Backward, ZeroLogitGradientGivesZeroGradients) {
  std::mt19937_64 rng(3);
  const auto m = oracle::random_model(rng, 7, 4, 3);
  const auto w = oracle::random_window(rng, m.topology.input_channels, 6);
  const auto trace = forward(m, w).second;
  Gradients g = Parameters::zeros(m.topology);
  accumulate_backward(m, w, trace, 0.0, g);
  EXPECT_EQ(global_norm(g), 0.0);
}

TEST(Backward, TraceFromOtherWindowRejected) {
  std::mt19937_64 rng(3);
  const auto m = oracle::random_model(rng, 7, 4, 3);
  const auto w1 = oracle::random_window(rng, m.topology.input_channels, 6);
  const auto w2 = oracle::random_window(rng, m.topology.input_channels, 6);
  const auto trace = forward(m, w1).second;
  EXPECT_THROW(backward(m, w2, 1, trace), DataError);
}

TEST(Batch, DuplicatedBatchHasSameMeanGradient) {
  std::mt19937_64 rng(4);
  const auto m = oracle::random_model(rng, 3, 3, 2);
  std::vector<Matrix> windows;
  std::vector<int> labels;
  for (int i = 0; i < 5; ++i) {
    windows.push_back(oracle::random_window(rng, m.topology.input_channels, 4));
    labels.push_back(i % 2);
  }
  const std::vector<std::size_t> once = {0, 1, 2, 3, 4};
  const std::vector<std::size_t> twice = {0, 1, 2, 3, 4, 0, 1, 2, 3, 4};
  const auto loss = bce_logit_loss(labels);
  const auto a = batch_gradient(m, windows, labels, once, loss);
  const auto b = batch_gradient(m, windows, labels, twice, loss);
  EXPECT_NEAR(a.mean_loss, b.mean_loss, 1e-12);
  const auto ga = a.grad.spans();
  const auto gb = b.grad.spans();
  for (std::size_t k = 0; k < ga.size(); ++k) {
    for (std::size_t i = 0; i < ga[k].size(); ++i) EXPECT_NEAR(ga[k][i], gb[k][i], 1e-12);
  }
}

TEST(Batch, ThreadCountDoesNotChangeResult) {
  std::mt19937_64 rng(4);
  const auto m = oracle::random_model(rng, 7, 5, 3);
  std::vector<Matrix> windows;
  std::vector<int> labels;
  for (int i = 0; i < 13; ++i) {
    windows.push_back(oracle::random_window(rng, m.topology.input_channels, 5));
    labels.push_back(i % 2);
  }
  std::vector<std::size_t> idx(13);
  std::iota(idx.begin(), idx.end(), 0);
  const auto loss = bce_logit_loss(labels);
  const auto one = batch_gradient(m, windows, labels, idx, loss, 1);
  const auto four = batch_gradient(m, windows, labels, idx, loss, 4);
  EXPECT_EQ(one.grad, four.grad);
  EXPECT_EQ(one.mean_loss, four.mean_loss);
}

TEST(Clip, RescalesToMaxNorm) {
  Gradients g = Parameters::zeros(ModelTopology{1, 1, 1, 1});
  g.b_out[0] = 3.0;
  g.w_out(0, 0) = 4.0;
  EXPECT_DOUBLE_EQ(clip_gradients(g, 1.0), 5.0);
  EXPECT_NEAR(global_norm(g), 1.0, 1e-15);
  EXPECT_NEAR(g.b_out[0], 0.6, 1e-15);
  EXPECT_DOUBLE_EQ(clip_gradients(g, 10.0), global_norm(g));
  EXPECT_NEAR(g.b_out[0], 0.6, 1e-15);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  const ModelTopology t{1, 1, 1, 1};
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  AdamOptimizer adam(t, cfg);
  auto p = Parameters::zeros(t);
  Gradients g = Parameters::zeros(t);
  g.b_out[0] = 0.3;
  g.w_out(0, 0) = -2.0;
  adam.step(p, g);
  EXPECT_NEAR(p.b_out[0], -0.01, 1e-9);
  EXPECT_NEAR(p.w_out(0, 0), 0.01, 1e-9);
  EXPECT_EQ(p.b_dense[0], 0.0);
}

TEST(Fit, TinyLearningRateBarelyMovesParameters) {
  const auto data = normalize(synth_generate(10, 10, SensorSet::parse("A"), 1, 0.1));
  const auto m = init_params(ModelTopology{3, 4, 3, 1}, data.sensor_set(), 2);
  auto cfg = quick_config(1);
  cfg.learning_rate = 1e-12;
  const auto trained = train(m, data, data.subset({}), cfg).first;
  const auto a = m.params.spans();
  const auto b = trained.params.spans();
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < a[k].size(); ++i) EXPECT_NEAR(a[k][i], b[k][i], 1e-10);
  }
}

TEST(Fit, DeterministicForFixedSeed) {
  const auto data = normalize(synth_generate(20, 10, SensorSet::parse("AB"), 1, 0.3));
  const auto m = init_params(ModelTopology{4, 6, 4, 1}, data.sensor_set(), 2);
  const auto cfg = quick_config(3);
  const auto [a, log_a] = train(m, data, data, cfg);
  const auto [b, log_b] = train(m, data, data, cfg);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(log_a.to_csv(false), log_b.to_csv(false));
  auto threaded = cfg;
  threaded.threads = 3;
  EXPECT_EQ(train(m, data, data, threaded).first.params, a.params);
}

TEST(Fit, LossDecreasesOnSyntheticData) {
  const auto data = normalize(synth_generate(40, 20, SensorSet::all(), 3, 0.2));
  const auto m = init_params(ModelTopology{7, 8, 4, 1}, data.sensor_set(), 5);
  const auto log = train(m, data, data, quick_config(10)).second;
  ASSERT_EQ(log.epochs.size(), 10u);
  EXPECT_LT(log.epochs.back().loss, log.epochs.front().loss);
}

TEST(Fit, SeparableDataReachesFullTrainingAccuracy) {
  const auto data = normalize(synth_generate(60, 20, SensorSet::all(), 42, 0.0));
  const auto m = init_params(ModelTopology{7, 16, 8, 1}, data.sensor_set(), 42);
  const auto [trained, log] = train(m, data, data.subset({}), quick_config(25));
  EXPECT_EQ(accuracy(trained, data), 1.0);
}

TEST(Fit, RejectsEmptyAndMismatchedData) {
  const auto data = normalize(synth_generate(5, 10, SensorSet::parse("A"), 1, 0.1));
  const auto m = init_params(ModelTopology{3, 4, 3, 1}, data.sensor_set(), 2);
  EXPECT_THROW(train(m, data.subset({}), data, quick_config()), ConfigError);
  const auto other = init_params(ModelTopology{1, 4, 3, 1}, SensorSet::parse("B"), 2);
  EXPECT_THROW(train(other, data, data, quick_config()), ConfigError);
}

TEST(Fit, NonFiniteLossIsNumericalError) {
  const auto data = normalize(synth_generate(5, 10, SensorSet::parse("A"), 1, 0.1));
  auto m = init_params(ModelTopology{3, 4, 3, 1}, data.sensor_set(), 2);
  m.params.w_out(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    train(m, data, data, quick_config());
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
  }
}

TEST(Fit, LogCsvHasOneRowPerEpoch) {
  const auto data = normalize(synth_generate(5, 10, SensorSet::parse("A"), 1, 0.1));
  const auto m = init_params(ModelTopology{3, 4, 3, 1}, data.sensor_set(), 2);
  const auto log = train(m, data, data, quick_config(4)).second;
  const auto csv = log.to_csv(false);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_GE(log.best_epoch, 1u);
  EXPECT_LE(log.best_epoch, 4u);
}

TEST(GradCheck, PassesOnRandomTinyModels) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 10; ++i) {
    const auto m = oracle::random_model(rng, 4, 4, 3);
    const auto w = oracle::random_window(rng, m.topology.input_channels, 4);
    const auto r = grad_check(m, w, i % 2);
    EXPECT_TRUE(r.passed) << "max error " << r.max_rel_error << " in " << r.failing_tensor();
    EXPECT_EQ(r.tensors.size(), 7u);
  }
}

TEST(GradCheck, InjectedFaultNamesTensor) {
  std::mt19937_64 rng(17);
  const auto m = oracle::random_model(rng, 4, 4, 3);
  const auto w = oracle::random_window(rng, m.topology.input_channels, 4);
  const auto [p, trace] = forward(m, w);
  auto grads = backward(m, w, 1, trace).second;
  grads.w_out(0, 0) += 0.5;
  const auto r = compare_with_finite_differences(m, w, 1, grads, 1e-5, 1e-4);
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.failing_tensor(), "W_out");
}

TEST(GradCheck, ZeroModelGradientsAreFinite) {
  const ModelTopology t{3, 4, 3, 1};
  const LstmClassifier m{t, SensorSet::parse("A"), 0, Parameters::zeros(t), std::nullopt};
  std::mt19937_64 rng(2);
  const auto w = oracle::random_window(rng, 3, 5);
  const auto r = grad_check(m, w, 1);
  EXPECT_TRUE(std::isfinite(r.max_rel_error));
  EXPECT_TRUE(r.passed);
}
