// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "seqpress/dataset.hpp"
#include "seqpress/error.hpp"
#include "seqpress/eval.hpp"
#include "seqpress/synth.hpp"
#include "test_support.hpp"

namespace seqpress {
namespace {

using testing::random_matrix;

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Predictor offset_predictor(std::string name, double offset) {
  Predictor p;
  p.name = std::move(name);
  p.predict = [offset](const Recording& r) { return Matrix(r.bp.array() + offset); };
  return p;
}

std::vector<Recording> tiny_cohort(std::uint64_t seed, std::size_t subjects, std::size_t samples) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.num_subjects = subjects;
  cfg.samples_per_session = samples;
  return cohort_recordings(generate_feature_cohort(cfg));
}

NetworkConfig tiny_network(std::size_t layers = 2) {
  NetworkConfig cfg;
  cfg.hidden_size = 4;
  cfg.num_layers = layers;
  cfg.seq_len = 8;
  return cfg;
}

TrainConfig tiny_training() {
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.max_epochs = 2;
  cfg.seed = 3;
  return cfg;
}

// --- RMSE ------------------------------------------------------------------

TEST(EvalExamples, RmseHandValues) {
  const std::vector<double> a{120.0, 130.0}, b{124.0, 127.0};
  EXPECT_EQ(rmse(a, a), 0.0);
  EXPECT_NEAR(rmse(a, b), 3.5355, 1e-4);
  EXPECT_EQ(rmse(a, b), std::sqrt(12.5));
  EXPECT_EQ(rmse(std::vector<double>{5.0}, std::vector<double>{2.0}), 3.0);
}

TEST(Eval, RmseErrors) {
  EXPECT_EQ(code_of([] { rmse(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}); }),
            ErrorCode::LengthMismatch);
  EXPECT_EQ(code_of([] { rmse(std::vector<double>{}, std::vector<double>{}); }), ErrorCode::EmptyInput);
}

TEST(Eval, RmseIsPermutationInvariantAndZeroOnlyWhenEqual) {
  CounterRng rng(1, 1);
  std::vector<double> p(50), t(50);
  for (auto& v : p) v = rng.uniform(60, 160);
  for (auto& v : t) v = rng.uniform(60, 160);
  const double base = rmse(p, t);
  std::vector<std::size_t> perm(50);
  std::iota(perm.begin(), perm.end(), 0);
  shuffle(perm, rng);
  std::vector<double> pp, tp;
  for (auto i : perm) {
    pp.push_back(p[i]);
    tp.push_back(t[i]);
  }
  EXPECT_NEAR(rmse(pp, tp), base, 1e-12);
  EXPECT_GT(base, 0.0);
  auto q = t;
  q[17] += 1e-9;
  EXPECT_GT(rmse(q, t), 0.0);
}

TEST(Eval, PerChannelRmseSkipsUncoveredRows) {
  Matrix truth = Matrix::Constant(4, 3, 100.0), pred = truth;
  pred.col(0).array() += 2.0;
  pred.col(1).setConstant(std::numeric_limits<double>::quiet_NaN());
  pred(3, 2) = std::numeric_limits<double>::quiet_NaN();
  pred(0, 2) += 3.0;
  const auto r = rmse_per_channel(pred, truth);
  EXPECT_EQ(r[0], 2.0);
  EXPECT_TRUE(std::isnan(r[1]));
  EXPECT_EQ(r[2], std::sqrt(3.0));
}

// --- Bland-Altman ----------------------------------------------------------

TEST(EvalExamples, BlandAltmanConstantOffset) {
  const std::vector<double> truth{100, 110, 120, 130}, pred{102, 112, 122, 132};
  const auto s = bland_altman(pred, truth);
  EXPECT_EQ(s.mean_diff, 2.0);
  EXPECT_EQ(s.sd_diff, 0.0);
  EXPECT_EQ(s.lower, 2.0);
  EXPECT_EQ(s.upper, 2.0);
  EXPECT_EQ(s.fraction_within, 1.0);
  ASSERT_EQ(s.points.size(), 4u);
  EXPECT_EQ(s.points[1][0], 111.0);
  EXPECT_EQ(s.points[1][1], 2.0);
}

TEST(EvalExamples, BlandAltmanPopulationSd) {
  const auto s = bland_altman(std::vector<double>{11.0, 9.0}, std::vector<double>{10.0, 10.0});
  EXPECT_EQ(s.mean_diff, 0.0);
  EXPECT_EQ(s.sd_diff, 1.0);
  EXPECT_EQ(s.lower, -1.96);
  EXPECT_EQ(s.upper, 1.96);
  EXPECT_EQ(s.fraction_within, 1.0);
}

TEST(Eval, BlandAltmanSymmetryAndScaling) {
  CounterRng rng(2, 2);
  std::vector<double> p(200), t(200);
  for (std::size_t i = 0; i < p.size(); ++i) {
    t[i] = rng.uniform(70, 150);
    p[i] = t[i] + 3.0 * rng.normal() + 1.0;
  }
  const auto s = bland_altman(p, t);
  EXPECT_NEAR(s.upper - s.mean_diff, s.mean_diff - s.lower, 1e-12);
  EXPECT_GE(s.fraction_within, 0.0);
  EXPECT_LE(s.fraction_within, 1.0);
  const double c = 2.5;
  std::vector<double> ps, ts;
  for (std::size_t i = 0; i < p.size(); ++i) {
    ps.push_back(c * p[i]);
    ts.push_back(c * t[i]);
  }
  const auto scaled = bland_altman(ps, ts);
  EXPECT_NEAR(scaled.mean_diff, c * s.mean_diff, 1e-9);
  EXPECT_NEAR(scaled.sd_diff, c * s.sd_diff, 1e-9);
  EXPECT_EQ(scaled.fraction_within, s.fraction_within);
  EXPECT_EQ(code_of([] { bland_altman(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}); }),
            ErrorCode::LengthMismatch);
}

// --- multi-day evaluation --------------------------------------------------

TEST(EvalExamples, EmptySessionListIsMissingSession) {
  const auto data = tiny_cohort(3, 2, 40);
  EXPECT_EQ(code_of([&] { multiday_eval({offset_predictor("m", 1.0)}, data, {}); }), ErrorCode::MissingSession);
  EXPECT_EQ(code_of([&] { multiday_eval({offset_predictor("m", 1.0)}, data, {"year2"}); }),
            ErrorCode::MissingSession);
}

TEST(EvalExamples, OneRowPerModelPerSession) {
  const auto data = tiny_cohort(4, 3, 40);
  const std::vector<std::string> sessions{"day1", "day2", "day4", "month6"};
  const auto report = multiday_eval({offset_predictor("a", 1.0), offset_predictor("b", -2.0)}, data, sessions, "x");
  ASSERT_EQ(report.rows.size(), 8u);
  EXPECT_EQ(report.rows[0].model, "a");
  EXPECT_EQ(report.rows[3].session, "month6");
  EXPECT_EQ(report.rows[4].model, "b");
  for (const auto& r : report.rows) {
    EXPECT_EQ(r.subjects, 3u);
    EXPECT_EQ(r.samples, 120u);
  }
  EXPECT_NEAR(report.row("a", "day2").pooled[0], 1.0, 1e-12);
  EXPECT_NEAR(report.row("b", "day4").macro[2], 2.0, 1e-12);
  ASSERT_EQ(report.agreement.size(), 2u);
  EXPECT_NEAR(report.agreement[1][0].mean_diff, -2.0, 1e-9);
  EXPECT_EQ(report.agreement[1][0].points.size(), 480u);
}

TEST(EvalExamples, FrozenMemorylessBaselineDecaysAcrossSessions) {
  // Large-sample cohort; ridge is fit once on day 1 and never updated.
  const auto data = tiny_cohort(5, 12, 2000);
  const auto day1 = select_sessions(data, {"day1"});
  const auto model = linreg_predictor("BLR", fit_linreg_on(day1));
  const std::vector<std::string> sessions{"day1", "day2", "day4", "month6"};
  const auto report = multiday_eval({model}, data, sessions);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t s = 1; s < sessions.size(); ++s)
      EXPECT_GE(report.row("BLR", sessions[s]).pooled[c], report.row("BLR", sessions[s - 1]).pooled[c])
          << kChannelNames[c] << " " << sessions[s];
}

TEST(Eval, MacroAndPooledDifferWhenSubjectsDiffer) {
  const auto data = tiny_cohort(6, 2, 40);
  Predictor p;
  p.name = "uneven";
  // Error 1 on the first subject and 3 on the second.
  p.predict = [&](const Recording& r) {
    return Matrix(r.bp.array() + (r.features.subject_id == data[0].features.subject_id ? 1.0 : 3.0));
  };
  const auto report = multiday_eval({p}, data, {"day1"});
  EXPECT_NEAR(report.rows[0].macro[0], 2.0, 1e-12);
  EXPECT_NEAR(report.rows[0].pooled[0], std::sqrt(5.0), 1e-12);
}

TEST(Eval, PttPredictorsCoverTheirChannels) {
  const auto data = tiny_cohort(7, 2, 120);
  const auto day1 = select_sessions(data, {"day1"});
  const auto chen = ptt_chen_predictor(day1, 60);
  const auto poon = ptt_poon_predictor(day1, 60);
  EXPECT_EQ(chen.channels, (std::array<bool, 3>{true, false, false}));
  EXPECT_EQ(poon.channels, (std::array<bool, 3>{true, true, false}));
  const Matrix c = chen.predict(day1[0]), p = poon.predict(day1[0]);
  EXPECT_TRUE(std::isfinite(c(5, 0)));
  EXPECT_TRUE(std::isnan(c(5, 1)));
  EXPECT_TRUE(std::isfinite(p(5, 1)));
  EXPECT_TRUE(std::isnan(p(5, 2)));
  Recording stranger = day1[0];
  stranger.features.subject_id = "nobody";
  EXPECT_EQ(code_of([&] { chen.predict(stranger); }), ErrorCode::InsufficientCalibration);
  const auto report = multiday_eval({chen}, data, {"day1"});
  EXPECT_TRUE(std::isnan(report.rows[0].pooled[1]));
}

// --- tables, harnesses and files --------------------------------------------

TEST(EvalExamples, TableLayoutAndFooter) {
  const std::vector<TableRow> rows{{"PTT-Chen", {9.5, std::nan(""), 0}}, {"DeepRNN-4L", {3.734, 2.431, 2.9}}};
  const std::string md = format_table("Static comparison", rows, {0, 1}, kStaticReferenceFooter);
  const std::string expected =
      "## Static comparison\n\n| Model | RMSE SBP (mmHg) | RMSE DBP (mmHg) |\n|---|---:|---:|\n"
      "| PTT-Chen | 9.50 | - |\n| DeepRNN-4L | 3.73 | 2.43 |\n\n" +
      std::string(kStaticReferenceFooter) + "\n";
  EXPECT_EQ(md, expected);
}

TEST(EvalExamples, ResidualAblationShapeAndReproducibility) {
  const auto data = select_sessions(tiny_cohort(8, 3, 64), {"day1"});
  const auto a = ablation_residual(tiny_network(3), tiny_training(), data);
  const auto b = ablation_residual(tiny_network(3), tiny_training(), data);
  ASSERT_EQ(a.rows.size(), 2u);
  EXPECT_EQ(a.rows[0].model, "DeepRNN-3L with residual");
  EXPECT_EQ(a.rows[1].model, "DeepRNN-3L without residual");
  ASSERT_EQ(a.histories.size(), 2u);
  EXPECT_FALSE(a.histories[0].empty());
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_EQ(a.rows[r].rmse[c], b.rows[r].rmse[c]);
      EXPECT_TRUE(std::isfinite(a.rows[r].rmse[c]));
    }
  }
  EXPECT_NE(a.rows[0].rmse[0], a.rows[1].rmse[0]);
}

TEST(EvalExamples, MultitaskHarnessLayoutAndReproducibility) {
  const auto data = select_sessions(tiny_cohort(9, 3, 64), {"day1"});
  const auto a = multitask_vs_singletask_harness(tiny_network(), tiny_training(), data, {2, 3});
  const auto b = multitask_vs_singletask_harness(tiny_network(), tiny_training(), data, {2, 3});
  std::vector<std::string> names;
  for (const auto& r : a.rows) names.push_back(r.model);
  EXPECT_EQ(names, (std::vector<std::string>{"DeepRNN-2L", "DeepRNN-2L†", "DeepRNN-3L", "DeepRNN-3L†"}));
  for (std::size_t r = 0; r < a.rows.size(); ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(a.rows[r].rmse[c], b.rows[r].rmse[c]);
}

TEST(EvalExamples, StaticComparisonRows) {
  const auto data = select_sessions(tiny_cohort(10, 3, 160), {"day1"});
  auto train_cfg = tiny_training();
  train_cfg.max_epochs = 1;
  const auto rows = static_comparison(tiny_network(4), train_cfg, data);
  std::vector<std::string> names;
  for (const auto& r : rows) names.push_back(r.model);
  EXPECT_EQ(names, (std::vector<std::string>{"PTT-Chen", "PTT-Poon", "BLR", "Kalman", "LSTM", "BiLSTM",
                                             "DeepRNN-2L", "DeepRNN-3L", "DeepRNN-4L"}));
  for (const auto& r : rows) {
    EXPECT_TRUE(std::isfinite(r.rmse[0])) << r.model;
    EXPECT_GE(r.rmse[0], 0.0);
  }
  EXPECT_TRUE(std::isnan(rows[0].rmse[1]));
  EXPECT_TRUE(std::isfinite(rows[1].rmse[1]));
}

TEST(Eval, CheckpointPredictorRoundTripsMillimetres) {
  const auto data = select_sessions(tiny_cohort(11, 2, 64), {"day1"});
  auto ckpt = train_on_recordings(tiny_network(), tiny_training(), data);
  const auto p = checkpoint_predictor("net", ckpt);
  const Matrix pred = p.predict(data[0]);
  EXPECT_EQ(pred.rows(), data[0].bp.rows());
  EXPECT_TRUE((pred.array() > 0.0).all());
  const auto prepared = prepare_dataset(data, 8, tiny_training());
  const auto r = window_rmse(ckpt, prepared.split.test);
  for (double v : r) EXPECT_GT(v, 0.0);
}

TEST(Eval, ReportFiles) {
  const auto data = tiny_cohort(12, 2, 40);
  const auto report =
      multiday_eval({offset_predictor("a", 1.0), offset_predictor("b", 2.0)}, data, {"day1", "day2"}, "cohort");
  const auto dir = testing::scratch_dir("report");
  write_session_csv(dir / "sessions.csv", report);
  const std::string csv = read_text(dir / "sessions.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "model,session,sbp_pooled,dbp_pooled,mbp_pooled,sbp_macro,dbp_macro,mbp_macro,subjects,samples");
  EXPECT_NE(csv.find("\nb,day1,2,2,2,2,2,2,2,80\n"), std::string::npos) << csv;
  const auto j = to_json(report);
  EXPECT_EQ(j["dataset"], "cohort");
  EXPECT_EQ(j["rows"].size(), 4u);
  EXPECT_EQ(j["rows"][3]["rmse_pooled"]["sbp"], 2.0);
  const std::string svg = render_session_chart_svg(report, 0);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("day2"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  write_bland_altman_csv(dir / "ba.csv", report.agreement[0][0]);
  const std::string ba = read_text(dir / "ba.csv");
  EXPECT_EQ(ba.substr(0, ba.find('\n')), "mean,difference");
  EXPECT_EQ(std::count(ba.begin(), ba.end(), '\n'), 1 + 160);
}

}  // namespace
}  // namespace seqpress
