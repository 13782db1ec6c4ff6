// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "seqpress/checkpoint.hpp"
#include "seqpress/error.hpp"
#include "seqpress/training.hpp"
#include "test_support.hpp"

namespace seqpress {
namespace {

using testing::random_matrix;
using testing::random_network;
using testing::small_config;

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;  // sentinel the callers never expect
}

bool params_equal(const NetworkParams& a, const NetworkParams& b) {
  const auto va = a.tensors(), vb = b.tensors();
  if (va.size() != vb.size()) return false;
  for (std::size_t k = 0; k < va.size(); ++k) {
    if (va[k].data.size() != vb[k].data.size()) return false;
    for (std::size_t i = 0; i < va[k].data.size(); ++i)
      if (va[k].data[i] != vb[k].data[i]) return false;
  }
  return true;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

std::vector<TrainingSample> labelled_windows(std::size_t n, const std::string& subject, std::uint64_t seed,
                                             std::size_t steps = 4) {
  std::vector<TrainingSample> out;
  CounterRng rng(seed, 0x5A);
  for (std::size_t k = 0; k < n; ++k) {
    TrainingSample s;
    s.x = random_matrix(static_cast<Eigen::Index>(steps), 7, rng);
    s.y = random_matrix(static_cast<Eigen::Index>(steps), 3, rng, 0.1, 0.9);
    s.subject_id = subject;
    s.offset = k;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Recording> synthetic_recordings(std::size_t subjects, std::size_t rows, std::uint64_t seed) {
  std::vector<Recording> out;
  CounterRng rng(seed, 0x12EC);
  for (std::size_t s = 0; s < subjects; ++s) {
    Recording rec;
    rec.features.values = random_matrix(static_cast<Eigen::Index>(rows), 7, rng, 0.1, 2.0);
    rec.features.subject_id = "subject" + std::to_string(s);
    rec.features.session_label = "day1";
    for (std::size_t t = 0; t < rows; ++t) rec.features.times.push_back(static_cast<double>(t));
    rec.bp = random_matrix(static_cast<Eigen::Index>(rows), 3, rng, 60.0, 140.0);
    out.push_back(std::move(rec));
  }
  return out;
}

// --- examples ---------------------------------------------------------------

TEST(TrainingExamples, LossIsZeroWhenPredictionsMatch) {
  CounterRng rng(1, 1);
  const Matrix y = random_matrix(5, 3, rng, 0.1, 0.9);
  EXPECT_EQ(multitask_loss(y, y, 3.0, 0.0), 0.0);
}

TEST(TrainingExamples, LossHandExamples) {
  const Matrix z = Matrix::Constant(1, 3, 0.5), y = Matrix::Ones(1, 3);
  EXPECT_EQ(multitask_loss(z, y, 0.0, 0.0), 0.75);
  EXPECT_NEAR(multitask_loss(z, y, 2.0, 0.1), 0.95, 1e-15);
  EXPECT_EQ(code_of([&] { multitask_loss(z, Matrix::Ones(2, 3), 0.0, 0.0); }), ErrorCode::ShapeMismatch);
}

Gradients two_entry_gradient(double a, double b) {
  Gradients g = NetworkParams::zeros(small_config(2, 2, 3));
  auto v = g.tensors();
  v[0].data[0] = a;
  v[1].data[0] = b;
  return g;
}

TEST(TrainingExamples, ClipScalesAboveThreshold) {
  auto g = two_entry_gradient(6.0, 8.0);
  EXPECT_EQ(clip_gradients(g, 5.0), 10.0);
  const auto v = g.tensors();
  EXPECT_EQ(v[0].data[0], 3.0);
  EXPECT_EQ(v[1].data[0], 4.0);
  EXPECT_EQ(gradient_norm(g), 5.0);
}

TEST(TrainingExamples, ClipLeavesBoundaryAndZeroUnchanged) {
  auto g = two_entry_gradient(3.0, 4.0);
  const auto before = g;
  clip_gradients(g, 5.0);
  EXPECT_TRUE(params_equal(g, before));
  Gradients zero = NetworkParams::zeros(small_config(2, 2, 3));
  clip_gradients(zero, 5.0);
  EXPECT_EQ(gradient_norm(zero), 0.0);
}

TEST(TrainingExamples, AdamFirstStepWithUnitGradient) {
  const auto cfg = small_config(2, 2, 3);
  NetworkParams params = NetworkParams::zeros(cfg);
  Gradients g = NetworkParams::zeros(cfg);
  for (auto& v : g.tensors())
    for (double& x : v.data) x = 1.0;
  AdamState state = AdamState::zeros(cfg);
  adam_step(state, params, g, 1e-3);
  // m_hat = 1, v_hat = 1: update = -lr / (1 + eps).
  const double expected = -1e-3 / (1.0 + 1e-8);
  for (const auto& v : params.tensors())
    for (double x : v.data) {
      EXPECT_NEAR(x, expected, 1e-15);
      EXPECT_NEAR(x, -0.000999999, 1e-9);
    }
  EXPECT_EQ(state.step, 1u);
}

TEST(TrainingExamples, AdamZeroGradientLeavesParameters) {
  const auto cfg = small_config(3, 2, 3);
  NetworkParams params = random_network(cfg, 3);
  const auto before = params;
  AdamState state = AdamState::zeros(cfg);
  adam_step(state, params, NetworkParams::zeros(cfg), 1e-3);
  EXPECT_TRUE(params_equal(params, before));
}

TEST(TrainingExamples, AdamConstantGradientStepsStayBelowLearningRate) {
  const auto cfg = small_config(2, 2, 3);
  NetworkParams params = NetworkParams::zeros(cfg);
  Gradients g = NetworkParams::zeros(cfg);
  CounterRng rng(5, 5);
  for (auto& v : g.tensors())
    for (double& x : v.data) x = rng.uniform(-2.0, 2.0);
  AdamState state = AdamState::zeros(cfg);
  const double lr = 1e-3;
  for (int step = 0; step < 2; ++step) {
    const auto before = params;
    adam_step(state, params, g, lr);
    // With constant g both bias-corrected moments are exact: m_hat = g,
    // v_hat = g^2, so each update is lr * |g| / (|g| + eps).
    const auto pb = before.tensors();
    const auto pa = std::as_const(params).tensors();
    const auto gv = std::as_const(g).tensors();
    for (std::size_t k = 0; k < pa.size(); ++k)
      for (std::size_t i = 0; i < pa[k].data.size(); ++i) {
        const double delta = pa[k].data[i] - pb[k].data[i];
        const double gi = gv[k].data[i];
        EXPECT_LE(std::abs(delta), lr * (1.0 + 1e-12));
        EXPECT_NEAR(delta, -lr * gi / (std::abs(gi) + 1e-8), 1e-15);
      }
  }
}

TEST(TrainingExamples, TargetScalingByMaximum) {
  Matrix bp(3, 3);
  bp << 100, 60, 80, 120, 70, 90, 150, 80, 100;
  const auto scaling = fit_target_scaling({bp});
  EXPECT_EQ(scaling.maxima[0], 150.0);
  const Matrix scaled = normalize_targets(bp, scaling);
  EXPECT_EQ(scaled(0, 0), 100.0 / 150.0);
  EXPECT_NEAR(scaled(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(scaled(1, 0), 0.8);
  EXPECT_EQ(scaled(2, 0), 1.0);
  EXPECT_LE((denormalize_targets(scaled, scaling) - bp).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TrainingExamples, HeldOutValueMayExceedOne) {
  TargetScaling scaling;
  scaling.maxima = {150.0, 90.0, 110.0};
  Matrix held(1, 3);
  held << 160, 80, 100;
  EXPECT_NEAR(normalize_targets(held, scaling)(0, 0), 1.0667, 1e-4);
}

TEST(TrainingExamples, NonPositiveTargetRejected) {
  Matrix bp = Matrix::Constant(2, 3, 100.0);
  bp(1, 2) = 0.0;
  EXPECT_EQ(code_of([&] { fit_target_scaling({bp}); }), ErrorCode::NonPositiveTarget);
}

TEST(TrainingExamples, WindowOffsets) {
  CounterRng rng(6, 6);
  const Matrix f = random_matrix(64, 7, rng), y = random_matrix(64, 3, rng, 0.1, 1.0);
  const auto w = make_windows(f, y, 32, 16);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[0].offset, 0u);
  EXPECT_EQ(w[1].offset, 16u);
  EXPECT_EQ(w[2].offset, 32u);
  EXPECT_TRUE(bitwise_equal(w[2].x, f.middleRows(32, 32)));
  EXPECT_TRUE(bitwise_equal(w[1].y, y.middleRows(16, 32)));
  EXPECT_EQ(make_windows(f.topRows(32), y.topRows(32), 32, 16).size(), 1u);
  EXPECT_EQ(code_of([&] { make_windows(f.topRows(31), y.topRows(31), 32, 16); }), ErrorCode::SourceTooShort);
}

TEST(TrainingExamples, SplitSizesAndDeterminism) {
  const auto a = split_dataset(labelled_windows(100, "s", 1), {0.7, 0.1, 0.2}, 9);
  EXPECT_EQ(a.train.size(), 70u);
  EXPECT_EQ(a.val.size(), 10u);
  EXPECT_EQ(a.test.size(), 20u);
  const auto b = split_dataset(labelled_windows(100, "s", 1), {0.7, 0.1, 0.2}, 9);
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].offset, b.train[i].offset);
  for (std::size_t i = 0; i < a.test.size(); ++i) EXPECT_EQ(a.test[i].offset, b.test[i].offset);
  EXPECT_EQ(code_of([] { split_dataset(labelled_windows(3, "s", 1), {0.7, 0.1, 0.2}, 9); }),
            ErrorCode::EmptySplit);
}

TEST(TrainingExamples, ZeroEpochRunReturnsInitialParameters) {
  const auto init = random_network(small_config(4, 2, 4), 7);
  TrainConfig cfg;
  cfg.max_epochs = 0;
  const auto ckpt = train(cfg, init, {labelled_windows(8, "s", 2), labelled_windows(2, "s", 3)});
  EXPECT_TRUE(params_equal(ckpt.net, init));
  EXPECT_TRUE(ckpt.history.empty());
  EXPECT_EQ(ckpt.steps, 0u);
}

TEST(TrainingExamples, SameSeedGivesBitwiseIdenticalCheckpoint) {
  const auto init = NetworkParams::initialize(small_config(4, 2, 4), 8);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_epochs = 5;
  cfg.seed = 8;
  const TrainingData data{labelled_windows(12, "s", 4), labelled_windows(4, "s", 5)};
  const auto a = train(cfg, init, data), b = train(cfg, init, data);
  EXPECT_EQ(serialize_checkpoint(a), serialize_checkpoint(b));
  EXPECT_FALSE(params_equal(a.net, init));
}

TEST(TrainingExamples, OverfitFourWindows) {
  auto cfg = small_config(16, 2, 32);
  const auto windows = testing::overfit_windows();
  const auto train_cfg = testing::overfit_train_config();
  const auto ckpt = train(train_cfg, NetworkParams::initialize(cfg, 4), {windows, {}});
  EXPECT_LE(ckpt.steps, 2000u);
  EXPECT_LT(testing::mean_squared_error(ckpt.net, windows), 1e-3);
}

TEST(TrainingExamples, FinetuneWithZeroStepsKeepsPretrainedCheckpoint) {
  const auto recs = synthetic_recordings(3, 40, 9);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_epochs = 2;
  cfg.seed = 9;
  const auto base = train_on_recordings(small_config(4, 2, 8), cfg, recs);
  TrainConfig frozen = cfg;
  frozen.max_epochs = 0;
  const auto tuned = finetune(base, recs, frozen);
  EXPECT_TRUE(params_equal(tuned.net, base.net));
  EXPECT_EQ(tuned.targets, base.targets);
  ASSERT_TRUE(tuned.feature_stats.has_value());
  EXPECT_TRUE(bitwise_equal(tuned.feature_stats->mean, base.feature_stats->mean));
}

// --- properties -------------------------------------------------------------

TEST(Training, ClipNormBoundAndDirection) {
  const auto cfg = small_config(3, 2, 3);
  CounterRng rng(10, 10);
  for (int trial = 0; trial < 20; ++trial) {
    Gradients g = NetworkParams::zeros(cfg);
    const double scale = rng.uniform(0.01, 3.0);
    for (auto& v : g.tensors())
      for (double& x : v.data) x = rng.uniform(-scale, scale);
    const Gradients before = g;
    const double v = 5.0;
    const double pre = clip_gradients(g, v);
    const double post = gradient_norm(g);
    EXPECT_LE(post, v * (1.0 + 1e-15));
    if (pre > v) {
      EXPECT_NEAR(post, v, 1e-12);
    }
    double dot = 0.0;
    const auto a = before.tensors();
    const auto b = std::as_const(g).tensors();
    for (std::size_t k = 0; k < a.size(); ++k)
      for (std::size_t i = 0; i < a[k].data.size(); ++i) dot += a[k].data[i] * b[k].data[i];
    EXPECT_NEAR(dot / (pre * post), 1.0, 1e-12);
  }
}

TEST(Training, LossIsNonNegative) {
  CounterRng rng(11, 11);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix z = random_matrix(4, 3, rng, 0.0, 1.0), y = random_matrix(4, 3, rng, 0.0, 1.0);
    EXPECT_GE(multitask_loss(z, y, rng.uniform(0.0, 5.0), rng.uniform(0.0, 1.0)), 0.0);
  }
}

TEST(Training, ZeroLearningRateLeavesParameters) {
  const auto init = random_network(small_config(4, 2, 4), 12);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.0;
  cfg.max_epochs = 1;
  cfg.max_steps = 1;
  const auto ckpt = train(cfg, init, {labelled_windows(8, "s", 6), {}});
  EXPECT_EQ(ckpt.steps, 1u);
  EXPECT_TRUE(params_equal(ckpt.net, init));
}

TEST(Training, BatchGradientIsMeanOfSampleGradients) {
  const auto net = random_network(small_config(4, 2, 4), 13);
  const auto samples = labelled_windows(3, "s", 7);
  TrainConfig cfg;
  cfg.lambda = 0.0;
  const auto both = batch_gradient(net, samples, {0, 2}, cfg);
  const auto first = batch_gradient(net, samples, {0}, cfg);
  const auto second = batch_gradient(net, samples, {2}, cfg);
  EXPECT_NEAR(both.loss, 0.5 * (first.loss + second.loss), 1e-14);
  const auto b = both.grads.tensors(), f = first.grads.tensors(), s = second.grads.tensors();
  for (std::size_t k = 0; k < b.size(); ++k)
    for (std::size_t i = 0; i < b[k].data.size(); ++i)
      EXPECT_NEAR(b[k].data[i], 0.5 * (f[k].data[i] + s[k].data[i]), 1e-14);
}

TEST(Training, ThreadedGradientMatchesInline) {
  const auto net = random_network(small_config(4, 2, 4), 14);
  const auto samples = labelled_windows(6, "s", 8);
  TrainConfig cfg;
  const auto inline_run = batch_gradient(net, samples, {0, 1, 2, 3, 4, 5}, cfg);
  cfg.threads = 3;
  const auto threaded = batch_gradient(net, samples, {0, 1, 2, 3, 4, 5}, cfg);
  EXPECT_EQ(inline_run.loss, threaded.loss);
  EXPECT_TRUE(params_equal(inline_run.grads, threaded.grads));
}

TEST(Training, SplitIsStratifiedBySubject) {
  auto samples = labelled_windows(50, "a", 1);
  auto more = labelled_windows(50, "b", 2);
  samples.insert(samples.end(), more.begin(), more.end());
  const auto split = split_dataset(samples, {0.7, 0.1, 0.2}, 3);
  auto count = [](const std::vector<TrainingSample>& v, const std::string& s) {
    return std::count_if(v.begin(), v.end(), [&](const TrainingSample& t) { return t.subject_id == s; });
  };
  for (const char* s : {"a", "b"}) {
    EXPECT_EQ(count(split.train, s), 35);
    EXPECT_EQ(count(split.val, s), 5);
    EXPECT_EQ(count(split.test, s), 10);
  }
  std::set<std::pair<std::string, std::size_t>> seen;
  for (const auto* part : {&split.train, &split.val, &split.test})
    for (const auto& t : *part) EXPECT_TRUE(seen.insert({t.subject_id, t.offset}).second);
  EXPECT_EQ(seen.size(), 100u);
}

TEST(Training, BestSoFarOverfitLossNeverIncreases) {
  const auto windows = testing::overfit_windows();
  auto train_cfg = testing::overfit_train_config();
  train_cfg.max_steps = 200;
  train_cfg.max_epochs = 200;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_so_far;
  train(train_cfg, NetworkParams::initialize(small_config(16, 2, 32), 4), {windows, {}},
        [&](const EpochRecord& r) {
          best = std::min(best, r.train_loss);
          best_so_far.push_back(best);
          return true;
        });
  ASSERT_EQ(best_so_far.size(), 200u);
  for (std::size_t i = 1; i < best_so_far.size(); ++i) EXPECT_LE(best_so_far[i], best_so_far[i - 1]);
  EXPECT_LT(best_so_far.back(), best_so_far.front());
}

TEST(Training, DivergedLossReportsStep) {
  auto samples = labelled_windows(4, "s", 9);
  samples[1].y(0, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_epochs = 1;
  try {
    train(cfg, NetworkParams::initialize(small_config(4, 2, 4), 1), {samples, {}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DivergedLoss);
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
  }
}

TEST(Training, EmptyTrainingSplitRejected) {
  EXPECT_EQ(code_of([] { train(TrainConfig{}, NetworkParams::zeros(small_config(2, 2, 4)), {}); }),
            ErrorCode::EmptySplit);
}

TEST(Training, TimeSplitKeepsOrder) {
  const auto rec = synthetic_recordings(1, 10, 15)[0];
  const auto [head, tail] = split_recording_by_time(rec, 0.5);
  ASSERT_EQ(head.bp.rows(), 5);
  ASSERT_EQ(tail.bp.rows(), 5);
  EXPECT_TRUE(bitwise_equal(head.bp, rec.bp.topRows(5)));
  EXPECT_TRUE(bitwise_equal(tail.features.values, rec.features.values.bottomRows(5)));
  EXPECT_EQ(tail.features.times.front(), 5.0);
}

TEST(Training, PredictRecordingCoversEveryRow) {
  const auto recs = synthetic_recordings(2, 45, 16);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_epochs = 1;
  const auto ckpt = train_on_recordings(small_config(4, 2, 8), cfg, recs);
  const Matrix pred = predict_recording(ckpt, recs[0].features.values);
  ASSERT_EQ(pred.rows(), 45);
  ASSERT_EQ(pred.cols(), 3);
  for (Eigen::Index c = 0; c < 3; ++c) {
    EXPECT_GT(pred.col(c).minCoeff(), 0.0);
    EXPECT_LT(pred.col(c).maxCoeff(), ckpt.targets.maxima[static_cast<std::size_t>(c)]);
  }
  EXPECT_EQ(code_of([&] { predict_recording(ckpt, recs[0].features.values.topRows(7)); }), ErrorCode::SourceTooShort);
}

// --- checkpoint and config I/O ----------------------------------------------

TEST(TrainingExamples, CheckpointRoundTripForwardIsBitwise) {
  Checkpoint ckpt;
  ckpt.net = random_network(small_config(6, 3, 5), 17);
  ckpt.feature_stats = FeatureStats{Eigen::VectorXd::Constant(7, 0.3), Eigen::VectorXd::Constant(7, 1.7)};
  ckpt.targets.maxima = {151.25, 92.5, 110.0};
  ckpt.train_config.seed = 99;
  ckpt.history.push_back({1, 0.5, 0.25, 1.5});
  ckpt.steps = 12;
  const auto dir = testing::scratch_dir("ckpt");
  save_checkpoint(dir / "a.sqpc", ckpt);
  const auto loaded = load_checkpoint(dir / "a.sqpc");
  EXPECT_TRUE(params_equal(loaded.net, ckpt.net));
  EXPECT_EQ(loaded.net.config, ckpt.net.config);
  EXPECT_EQ(loaded.targets, ckpt.targets);
  EXPECT_EQ(loaded.train_config, ckpt.train_config);
  EXPECT_EQ(loaded.steps, 12u);
  ASSERT_EQ(loaded.history.size(), 1u);
  EXPECT_EQ(loaded.history[0].val_loss, 0.25);
  CounterRng rng(17, 1);
  const Matrix x = random_matrix(5, 7, rng, -2.0, 2.0);
  EXPECT_TRUE(bitwise_equal(deeprnn_forward(ckpt.net, x, false).z, deeprnn_forward(loaded.net, x, false).z));
  EXPECT_EQ(serialize_checkpoint(loaded), serialize_checkpoint(ckpt));
}

TEST(Checkpoint, HeaderAndCorruption) {
  Checkpoint ckpt;
  ckpt.net = random_network(small_config(3, 2, 4), 18);
  const std::string bytes = serialize_checkpoint(ckpt);
  EXPECT_EQ(bytes.substr(0, 4), "SQPC");
  EXPECT_EQ(code_of([&] { deserialize_checkpoint("XXXX" + bytes.substr(4)); }), ErrorCode::InvalidFormat);
  EXPECT_EQ(code_of([&] { deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)); }), ErrorCode::InvalidFormat);
  EXPECT_EQ(code_of([] { load_checkpoint("/nonexistent/none.sqpc"); }), ErrorCode::Io);
}

TEST(Checkpoint, NaNValidationLossSurvivesRoundTrip) {
  Checkpoint ckpt;
  ckpt.net = random_network(small_config(3, 2, 4), 19);
  ckpt.history.push_back({1, 0.5, std::numeric_limits<double>::quiet_NaN(), 1.0});
  const auto loaded = deserialize_checkpoint(serialize_checkpoint(ckpt));
  EXPECT_TRUE(std::isnan(loaded.history[0].val_loss));
}

TEST(Checkpoint, HistoryCsvLayout) {
  const auto dir = testing::scratch_dir("history");
  write_history_csv(dir / "h.csv", {{1, 0.5, 0.25, 2.0}, {2, 0.4, 0.2, 1.5}});
  std::ifstream in(dir / "h.csv");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "epoch,train_loss,val_loss,grad_norm_mean");
  EXPECT_EQ(first.substr(0, 2), "1,");
}

TEST(Checkpoint, ConfigFileOverridesAndRejectsUnknownKeys) {
  const auto dir = testing::scratch_dir("config");
  {
    std::ofstream out(dir / "run.json");
    out << R"({"batch_size": 16, "lambda": 0.001, "network": {"hidden_size": 32, "num_layers": 2}})";
  }
  const auto run = load_run_config(dir / "run.json");
  EXPECT_EQ(run.train.batch_size, 16u);
  EXPECT_EQ(run.train.lambda, 0.001);
  EXPECT_EQ(run.train.clip_norm, 5.0);
  EXPECT_EQ(run.network.hidden_size, 32u);
  EXPECT_EQ(run.network.num_layers, 2u);
  EXPECT_EQ(run.network.seq_len, 32u);
  EXPECT_EQ(code_of([] { train_config_from_json(nlohmann::json{{"batchsize", 3}}); }), ErrorCode::InvalidArgument);
  const TrainConfig defaults;
  EXPECT_EQ(train_config_from_json(to_json(defaults)), defaults);
}

}  // namespace
}  // namespace seqpress
