#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "qcaa/data.hpp"
#include "qcaa/grad_check.hpp"
#include "qcaa/training.hpp"
#include "test_util.hpp"

using namespace qcaa;
using qcaa::testing::random_tensor;

namespace {

ModelConfig tiny_forecast() {
  ModelConfig cfg;
  cfg.seq_len = 24;
  cfg.pred_len = 4;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.n_qubits = 2;
  cfg.dropout = 0.0;
  return cfg;
}

WindowedDataset sine_windows(std::size_t length, std::uint64_t seed, const ModelConfig& cfg) {
  Rng rng(seed);
  const auto s = sine_mixture({length, 1, 2, 0.05}, rng);
  return make_windows(s, cfg.seq_len, cfg.pred_len, cfg.task);
}

}  // namespace

TEST(MseLoss, Examples) {
  Graph g;
  Rng rng(1);
  const Tensor p = random_tensor({2, 3, 2}, rng);
  EXPECT_EQ(mse_loss(g, p, p).item(), 0.0);
  Tensor shifted = p.clone();
  for (auto& v : shifted.data()) v += 1.0;
  EXPECT_NEAR(mse_loss(g, shifted, p).item(), 1.0, 1e-15);
  EXPECT_THROW(mse_loss(g, p, random_tensor({2, 3, 1}, rng)), DimensionError);
}

TEST(MseLoss, MatchesScalarLoop) {
  Graph g;
  Rng rng(2);
  const Tensor p = random_tensor({3, 5, 4}, rng);
  const Tensor t = random_tensor({3, 5, 4}, rng);
  // (1/M) sum over channels of the squared error, averaged over batch and time.
  double total = 0.0;
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t s = 0; s < 5; ++s) {
      double per_step = 0.0;
      for (std::size_t m = 0; m < 4; ++m) {
        const std::size_t k = (b * 5 + s) * 4 + m;
        per_step += std::pow(p.data()[k] - t.data()[k], 2);
      }
      total += per_step / 4.0;
    }
  }
  EXPECT_NEAR(mse_loss(g, p, t).item(), total / 15.0, 1e-12);
}

TEST(CrossEntropy, Examples) {
  Graph g;
  EXPECT_NEAR(cross_entropy_loss(g, Tensor({1, 2}, std::vector<double>{0.3, 0.3}), {1}).item(), std::log(2.0), 1e-15);
  EXPECT_LT(cross_entropy_loss(g, Tensor({1, 3}, std::vector<double>{0.0, 80.0, 0.0}), {1}).item(), 1e-30);
  EXPECT_NEAR(cross_entropy_loss(g, Tensor({1, 2}, std::vector<double>{1000.0, 0.0}), {1}).item(), 1000.0, 1e-9);
  EXPECT_THROW(cross_entropy_loss(g, Tensor::zeros({1, 2}), {2}), DataError);
  EXPECT_THROW(cross_entropy_loss(g, Tensor::zeros({1, 2}), {-1}), DataError);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  Tensor logits = random_tensor({4, 3}, rng, 2.0, true);
  const std::vector<int> labels{0, 2, 1, 2};
  EXPECT_LE(grad_check([&](Graph& g) { return cross_entropy_loss(g, logits, labels); }, {logits}), 1e-6);
}

TEST(Classify, ArgmaxWithLowTieBreak) {
  EXPECT_EQ(classify(Tensor({1, 2}, std::vector<double>{0.1, 0.9})), std::vector<int>{1});
  EXPECT_EQ(classify(Tensor({1, 2}, std::vector<double>{0.5, 0.5})), std::vector<int>{0});
  EXPECT_EQ(classify(Tensor({2, 3}, std::vector<double>{1, 3, 3, -1, -2, -1})), (std::vector<int>{1, 0}));
  Rng rng(4);
  Tensor z = random_tensor({20, 5}, rng);
  const auto base = classify(z);
  for (auto& v : z.data()) v = 3.0 * v - 17.0;
  EXPECT_EQ(classify(z), base);
}

TEST(AnomalyScores, Examples) {
  Rng rng(5);
  const Tensor x = random_tensor({2, 6, 3}, rng);
  for (double s : anomaly_scores(x, x)) EXPECT_EQ(s, 0.0);

  Tensor corrupted = x.clone();
  for (std::size_t m = 0; m < 3; ++m) corrupted.data()[(1 * 6 + 4) * 3 + m] += 5.0;
  const auto scores = anomaly_scores(x, corrupted);
  ASSERT_EQ(scores.size(), 12u);
  EXPECT_EQ(std::max_element(scores.begin(), scores.end()) - scores.begin(), 10);

  const Tensor r = random_tensor({2, 6, 3}, rng);
  const auto got = anomaly_scores(x, r);
  for (std::size_t t = 0; t < 12; ++t) {
    double acc = 0.0;
    for (std::size_t m = 0; m < 3; ++m) acc += std::pow(x.data()[t * 3 + m] - r.data()[t * 3 + m], 2);
    EXPECT_NEAR(got[t], acc / 3.0, 1e-12);
  }
  EXPECT_THROW(anomaly_scores(x, random_tensor({2, 6, 2}, rng)), DimensionError);
}

TEST(DetectAnomalies, MedianThreshold) {
  std::vector<double> scores(100);
  for (std::size_t i = 0; i < 100; ++i) scores[i] = static_cast<double>(i + 1);
  const auto flags = detect_anomalies({}, scores, 50.0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    n += flags[i];
    EXPECT_EQ(flags[i], i >= 50 ? 1 : 0) << i;
  }
  EXPECT_EQ(n, 50u);
  EXPECT_DOUBLE_EQ(percentile(scores, 50.0), 50.5);
}

TEST(DetectAnomalies, OnePercentOfUniformScores) {
  Rng rng(6);
  std::vector<double> scores(1000);
  for (auto& s : scores) s = rng.uniform();
  const auto flags = detect_anomalies({}, scores, 1.0);
  std::size_t n = 0;
  for (auto f : flags) n += f;
  EXPECT_GE(n, 8u);
  EXPECT_LE(n, 12u);
}

TEST(DetectAnomalies, CombinedPopulationAndDegenerateScores) {
  EXPECT_EQ(detect_anomalies({}, std::vector<double>(50, 2.0), 10.0), std::vector<std::uint8_t>(50, 0));
  // A quiet train population lowers the threshold for the test scores.
  const std::vector<double> train(900, 0.0);
  std::vector<double> test(100);
  for (std::size_t i = 0; i < 100; ++i) test[i] = static_cast<double>(i);
  std::size_t n = 0;
  for (auto f : detect_anomalies(train, test, 5.0)) n += f;
  EXPECT_EQ(n, 50u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor w({2}, std::vector<double>{1.0, -1.0}, true);
  w.mutable_grad()[0] = 0.3;
  w.mutable_grad()[1] = -7.0;
  Adam opt(0.1);
  opt.step({w});
  EXPECT_NEAR(w.data()[0], 0.9, 1e-7);
  EXPECT_NEAR(w.data()[1], -0.9, 1e-7);
}

TEST(ClipGradNorm, ScalesToMaximum) {
  Tensor w({2}, true);
  w.mutable_grad()[0] = 3.0;
  w.mutable_grad()[1] = 4.0;
  EXPECT_DOUBLE_EQ(clip_grad_norm({w}, 1.0), 5.0);
  EXPECT_NEAR(w.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(w.grad()[1], 0.8, 1e-15);
}

TEST(Train, EarlyStopsWhenValidationStalls) {
  const auto cfg = tiny_forecast();
  const auto train_set = sine_windows(120, 1, cfg);
  const auto val_set = sine_windows(60, 2, cfg);
  TrainConfig tcfg;
  tcfg.learning_rate = 1e-300;
  tcfg.patience = 1;
  tcfg.max_epochs = 10;
  tcfg.batch_size = 16;
  const auto result = train(cfg, init_params(cfg, 0), train_set, val_set, tcfg);
  EXPECT_EQ(result.history.stopped_epoch, 2u);
  EXPECT_EQ(result.history.best_epoch, 1u);
  EXPECT_TRUE(result.history.early_stopped);
  EXPECT_EQ(result.history.epochs.size(), 2u);
}

TEST(Train, DeterministicAndRestoresBest) {
  const auto cfg = tiny_forecast();
  const auto train_set = sine_windows(150, 3, cfg);
  const auto val_set = sine_windows(60, 4, cfg);
  TrainConfig tcfg;
  tcfg.learning_rate = 3e-3;
  tcfg.batch_size = 8;
  tcfg.max_epochs = 4;
  tcfg.seed = 11;
  const auto init = init_params(cfg, 1);
  const auto a = train(cfg, init, train_set, val_set, tcfg);
  const auto b = train(cfg, init, train_set, val_set, tcfg);
  ASSERT_EQ(a.history.epochs.size(), b.history.epochs.size());
  double best = 1e300;
  for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
    EXPECT_EQ(a.history.epochs[i].train_loss, b.history.epochs[i].train_loss);
    EXPECT_EQ(a.history.epochs[i].val_loss, b.history.epochs[i].val_loss);
    best = std::min(best, a.history.epochs[i].val_loss);
  }
  EXPECT_EQ(a.history.best_epoch, b.history.best_epoch);
  EXPECT_DOUBLE_EQ(evaluate_loss(cfg, a.params, val_set, 32), best);
  const auto pa = a.params.named_tensors();
  const auto pb = b.params.named_tensors();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(std::equal(pa[i].second.data().begin(), pa[i].second.data().end(), pb[i].second.data().begin()));
  }
  // The initial parameters are untouched.
  EXPECT_EQ(init.head.bias.data()[0], init_params(cfg, 1).head.bias.data()[0]);
}

TEST(Train, OverfitsOneBatch) {
  const auto cfg = tiny_forecast();
  auto ds = sine_windows(40, 5, cfg);
  ds.samples.resize(4);
  TrainConfig tcfg;
  tcfg.learning_rate = 3e-3;
  tcfg.batch_size = 4;
  tcfg.max_epochs = 500;
  tcfg.patience = 500;
  tcfg.max_steps = 500;
  const auto result = train(cfg, init_params(cfg, 2), ds, ds, tcfg);
  double best_train = 1e300;
  for (const auto& e : result.history.epochs) best_train = std::min(best_train, e.train_loss);
  EXPECT_LT(best_train, 1e-3);
  EXPECT_LE(result.history.steps, 500u);
}

TEST(Train, RejectsBadInputs) {
  const auto cfg = tiny_forecast();
  const auto ds = sine_windows(60, 6, cfg);
  TrainConfig tcfg;
  EXPECT_THROW(train(cfg, init_params(cfg, 0), WindowedDataset{}, ds, tcfg), DataError);
  EXPECT_THROW(train(cfg, init_params(cfg, 0), ds, WindowedDataset{}, tcfg), DataError);
  tcfg.learning_rate = 0.0;
  EXPECT_THROW(train(cfg, init_params(cfg, 0), ds, ds, tcfg), ConfigError);
  tcfg = TrainConfig{};
  tcfg.anomaly_ratio = 50.0;
  EXPECT_THROW(tcfg.validate(), ConfigError);

  auto bad = ds;
  bad.samples[0].input[3] = std::nan("");
  tcfg = TrainConfig{};
  tcfg.batch_size = 1000;
  EXPECT_THROW(train(cfg, init_params(cfg, 0), bad, ds, tcfg), TrainingError);
}

TEST(Train, EpochCallbackAndFormat) {
  const auto cfg = tiny_forecast();
  const auto ds = sine_windows(60, 7, cfg);
  TrainConfig tcfg;
  tcfg.max_epochs = 2;
  tcfg.patience = 5;
  std::vector<std::size_t> seen;
  train(cfg, init_params(cfg, 0), ds, ds, tcfg, [&](const EpochRecord& r) { seen.push_back(r.epoch); });
  EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2}));
  const std::string line = format_epoch({3, 0.5, 0.25, 1.5});
  EXPECT_EQ(line.rfind("epoch=3 train_loss=0.5 val_loss=0.25 time_s=", 0), 0u) << line;
}

TEST(ScoreSeries, CoversEveryTimestep) {
  ModelConfig cfg = tiny_forecast();
  cfg.task = Task::kAnomalyDetection;
  cfg.n_vars = 2;
  const auto params = init_params(cfg, 3);
  Rng rng(8);
  const auto s = sine_mixture({70, 2, 2, 0.1}, rng);
  const auto scores = score_series(cfg, params, s, 4);
  ASSERT_EQ(scores.size(), 70u);
  for (double v : scores) EXPECT_GT(v, 0.0);
  // The tail timesteps come from an end-aligned window.
  Tensor x({1, 24, 2});
  const auto rows = detail::rows_of(s, 46, 24);
  std::copy(rows.begin(), rows.end(), x.data().begin());
  const auto tail = anomaly_scores(x, predict(cfg, params, x));
  EXPECT_NEAR(scores[69], tail[23], 1e-12);
}
