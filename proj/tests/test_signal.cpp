// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "seqpress/error.hpp"
#include "seqpress/signal.hpp"
#include "seqpress/synth.hpp"
#include "seqpress/waveform_io.hpp"
#include "test_support.hpp"

namespace seqpress {
namespace {

constexpr double kFs = 500.0;

std::vector<double> impulse_train(double seconds, double period, double fs) {
  std::vector<double> ecg(static_cast<std::size_t>(seconds * fs), 0.0);
  for (double t = 0.0; t < seconds - 1e-9; t += period) ecg[static_cast<std::size_t>(std::lround(t * fs))] = 1.0;
  return ecg;
}

double gaussian(double t, double mu, double sigma) { return std::exp(-0.5 * (t - mu) * (t - mu) / (sigma * sigma)); }

/// Beats every 0.8 s starting at 0.1 s; each PPG beat is a systolic bump of
/// height 1 at +0.25 s and a diastolic bump of height `ratio` at +0.5 s.
struct PulseRecord {
  std::vector<double> ecg, ppg, r_peaks;
};

PulseRecord two_bump_record(double ratio, bool diastolic = true, double seconds = 8.0) {
  PulseRecord rec;
  const std::size_t n = static_cast<std::size_t>(seconds * kFs);
  rec.ecg.assign(n, 0.0);
  rec.ppg.assign(n, 0.0);
  for (double r = 0.1; r < seconds - 1e-9; r += 0.8) {
    rec.r_peaks.push_back(std::round(r * kFs) / kFs);
    rec.ecg[static_cast<std::size_t>(std::lround(r * kFs))] = 1.0;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kFs;
    for (double r : rec.r_peaks) {
      rec.ppg[i] += gaussian(t, r + 0.25, 0.05);
      if (diastolic) rec.ppg[i] += ratio * gaussian(t, r + 0.5, 0.05);
    }
  }
  return rec;
}

TEST(SignalExamples, ImpulseTrainPeaks) {
  const auto ecg = impulse_train(10.0, 1.0, kFs);
  const auto peaks = detect_ecg_r_peaks(ecg, kFs);
  ASSERT_EQ(peaks.size(), 10u);
  for (std::size_t k = 0; k < peaks.size(); ++k) EXPECT_DOUBLE_EQ(peaks[k], static_cast<double>(k));
}

TEST(SignalExamples, NoisyImpulseTrainWithinTwoSamples) {
  auto ecg = impulse_train(10.0, 1.0, kFs);
  CounterRng rng(3, 0);
  for (double& v : ecg) v += rng.uniform(-0.01, 0.01);
  const auto peaks = detect_ecg_r_peaks(ecg, kFs);
  ASSERT_EQ(peaks.size(), 10u);
  for (std::size_t k = 0; k < peaks.size(); ++k) EXPECT_LE(std::abs(peaks[k] - static_cast<double>(k)), 2.0 / kFs);
}

TEST(SignalExamples, FlatSignalHasNoBeats) {
  std::vector<double> ecg(5000, 0.0);
  try {
    detect_ecg_r_peaks(ecg, kFs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoBeatsDetected);
  }
}

TEST(SignalExamples, TwoBumpPulseNotchAndReflectionRatio) {
  const double ratio = 0.55;
  const auto rec = two_bump_record(ratio);
  const auto fid = detect_ppg_fiducials(rec.ppg, kFs, rec.r_peaks);
  ASSERT_GE(fid.beats.size(), 5u);
  for (const auto& b : fid.beats) {
    // Oracle: minimum of the analytic two-bump sum between the bump centers,
    // located on a 1 microsecond grid.
    const double r = b.r_peak_t;
    double best_t = r + 0.25, best_v = 1e9;
    for (double t = r + 0.25; t <= r + 0.5; t += 1e-6) {
      const double v = gaussian(t, r + 0.25, 0.05) + ratio * gaussian(t, r + 0.5, 0.05);
      if (v < best_v) {
        best_v = v;
        best_t = t;
      }
    }
    EXPECT_LE(std::abs(b.tn - best_t), 1.0 / kFs);
    EXPECT_NEAR(b.b / b.a, ratio, 0.02 * ratio);
  }
}

TEST(SignalExamples, MonotoneRampHasNoFiducials) {
  PulseRecord rec = two_bump_record(0.5);
  for (std::size_t i = 0; i < rec.ppg.size(); ++i) rec.ppg[i] = static_cast<double>(i) / kFs;
  const auto fid = detect_ppg_fiducials(rec.ppg, kFs, rec.r_peaks);
  EXPECT_TRUE(fid.beats.empty());
  bool not_found = false;
  for (const auto& q : fid.quality_log) not_found |= q.kind == QualityIssueKind::FiducialNotFound;
  EXPECT_TRUE(not_found);
}

TEST(SignalExamples, SingleBumpPulseHasNoNotch) {
  const auto rec = two_bump_record(0.0, false);
  const auto fid = detect_ppg_fiducials(rec.ppg, kFs, rec.r_peaks);
  EXPECT_TRUE(fid.beats.empty());
  std::size_t notch = 0;
  for (const auto& q : fid.quality_log)
    if (q.kind == QualityIssueKind::FiducialNotFound && q.detail == "dicrotic notch") ++notch;
  EXPECT_GE(notch, 5u);
}

TEST(SignalExamples, ConstructedTimesGiveUpTimeAndSt) {
  BeatFiducials b;
  b.tf = 0.0;
  b.tp = 0.2;
  b.tn = 0.4;
  b.a = 1.0;
  b.b = 0.5;
  b.rr_interval = 0.8;
  b.next_tf = 0.8;
  std::vector<double> ppg(1000, 1.0);
  const auto f = features_from_fiducials(b, ppg, 1000.0);
  EXPECT_EQ(f.up_time, 0.2);
  EXPECT_EQ(f.st, 0.4);
}

TEST(SignalExamples, HeartRateFromRrInterval) {
  BeatFiducials b;
  b.rr_interval = 0.8;
  b.a = 1.0;
  std::vector<double> ppg(10, 0.0);
  EXPECT_DOUBLE_EQ(features_from_fiducials(b, ppg, 10.0).hr, 75.0);
}

TEST(SignalExamples, RectangleSystolicArea) {
  std::vector<double> ppg(1000, 1.0);
  EXPECT_DOUBLE_EQ(integrate_above(ppg, 1000.0, 0.0, 0.4, 0.0), 0.4);
}

TEST(SignalExamples, ReflectionIndexRatio) {
  BeatFiducials b;
  b.a = 1.0;
  b.b = 0.5;
  b.rr_interval = 1.0;
  std::vector<double> ppg(10, 0.0);
  EXPECT_EQ(features_from_fiducials(b, ppg, 10.0).ri, 0.5);
}

TEST(SignalExamples, NormalizeThreeValues) {
  FeatureSequence seq;
  seq.values = Eigen::MatrixXd(3, 1);
  seq.values << 1, 2, 3;
  const auto out = normalize_features(seq);
  const double z = 1.0 / std::sqrt(2.0 / 3.0);
  EXPECT_NEAR(out.values(0, 0), -z, 1e-15);
  EXPECT_NEAR(out.values(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(out.values(2, 0), z, 1e-15);
  EXPECT_NEAR(z, 1.224744871391589, 1e-15);
  ASSERT_TRUE(out.normalization.has_value());
  EXPECT_DOUBLE_EQ(out.normalization->mean(0), 2.0);
}

TEST(SignalExamples, NormalizationIsIdempotent) {
  CounterRng rng(5, 0);
  FeatureSequence seq;
  seq.values = testing::random_matrix(50, 7, rng, -3, 5);
  const auto once = normalize_features(seq);
  const auto twice = normalize_features(once);
  EXPECT_LT((twice.values - once.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SignalExamples, ConstantColumnIsDegenerate) {
  FeatureSequence seq;
  seq.values = Eigen::MatrixXd::Constant(3, 1, 5.0);
  try {
    normalize_features(seq);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateFeature);
  }
}

SyntheticWaveform sample_waveform(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.num_subjects = 1;
  cfg.sessions = {{"day1", 0.0}};
  WaveformConfig wave;
  wave.beats_per_record = 30;
  return generate_waveform_cohort(cfg, wave).front();
}

TEST(Signal, FiducialOrderingAndAreaDecomposition) {
  const auto w = sample_waveform(1);
  const auto ext = extract_features(w.record);
  ASSERT_GT(ext.fiducials.size(), 20u);
  for (std::size_t k = 0; k < ext.fiducials.size(); ++k) {
    const auto& b = ext.fiducials[k];
    EXPECT_LT(b.tf, b.tp);
    EXPECT_LT(b.tp, b.tn);
    EXPECT_LE(b.r_peak_t, b.max_slope_t);
    EXPECT_GT(b.a, 0.0);
    // SV + DV against a direct trapezoid sum over [tf, next tf].
    const std::size_t i0 = static_cast<std::size_t>(std::lround(b.tf * w.record.sample_rate));
    const std::size_t i1 = static_cast<std::size_t>(std::lround(b.next_tf * w.record.sample_rate));
    double area = 0.0;
    for (std::size_t i = i0; i < i1; ++i)
      area += (0.5 * (w.record.ppg[i] + w.record.ppg[i + 1]) - b.foot_level) / w.record.sample_rate;
    const double sv = ext.features.values(static_cast<Eigen::Index>(k), 5);
    const double dv = ext.features.values(static_cast<Eigen::Index>(k), 6);
    EXPECT_NEAR(sv + dv, area, 1e-9 * std::abs(area));
  }
}

TEST(Signal, ShiftInvariance) {
  const auto w = sample_waveform(2);
  WaveformRecord shifted = w.record;
  const std::size_t pad = 137;
  shifted.ecg.insert(shifted.ecg.begin(), pad, shifted.ecg.front());
  shifted.ppg.insert(shifted.ppg.begin(), pad, shifted.ppg.front());
  const auto a = extract_features(w.record);
  const auto b = extract_features(shifted);
  const double dt = static_cast<double>(pad) / w.record.sample_rate;
  const double one_sample = 1.0 / w.record.sample_rate;
  std::size_t matched = 0;
  for (std::size_t i = 0; i < a.fiducials.size(); ++i)
    for (std::size_t j = 0; j < b.fiducials.size(); ++j) {
      if (std::abs(b.fiducials[j].r_peak_t - dt - a.fiducials[i].r_peak_t) > 0.5 * one_sample) continue;
      ++matched;
      for (Eigen::Index c : {0, 3, 4})  // time-valued features
        EXPECT_NEAR(a.features.values(static_cast<Eigen::Index>(i), c),
                    b.features.values(static_cast<Eigen::Index>(j), c), one_sample + 1e-12);
      for (Eigen::Index c : {1, 2, 5, 6})
        EXPECT_NEAR(a.features.values(static_cast<Eigen::Index>(i), c),
                    b.features.values(static_cast<Eigen::Index>(j), c),
                    1e-9 * std::abs(a.features.values(static_cast<Eigen::Index>(i), c)));
    }
  EXPECT_GE(matched + 1, a.fiducials.size());
}

TEST(Signal, NormalizationMoments) {
  CounterRng rng(7, 0);
  FeatureSequence seq;
  seq.values = testing::random_matrix(200, 7, rng, 10, 90);
  const auto out = normalize_features(seq);
  for (Eigen::Index c = 0; c < 7; ++c) {
    const double mean = out.values.col(c).mean();
    const double var = (out.values.col(c).array() - mean).square().mean();
    EXPECT_LT(std::abs(mean), 1e-9);
    EXPECT_LT(std::abs(var - 1.0), 1e-6);
  }
  EXPECT_LT((invert_feature_stats(out.values, *out.normalization) - seq.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Signal, StoredStatsAreReused) {
  FeatureSequence train, test;
  train.values = Eigen::MatrixXd(3, 1);
  train.values << 1, 2, 3;
  test.values = Eigen::MatrixXd(1, 1);
  test.values << 4;
  const auto stats = normalize_features(train).normalization;
  const auto out = normalize_features(test, stats);
  EXPECT_NEAR(out.values(0, 0), 2.0 / std::sqrt(2.0 / 3.0), 1e-15);
}

TEST(Signal, RejectsInvalidRecords) {
  WaveformRecord r;
  r.sample_rate = 100.0;
  r.ecg = {1, 2, 3};
  r.ppg = {1, 2};
  EXPECT_THROW(r.validate(), Error);
  r.ppg = {1, 2, 3};
  r.sample_rate = 0.0;
  EXPECT_THROW(r.validate(), Error);
  std::vector<double> short_ecg(100, 0.0);
  EXPECT_THROW(detect_ecg_r_peaks(short_ecg, kFs), Error);
}

TEST(WaveformIo, CsvAndBinaryRoundTrip) {
  const auto dir = testing::scratch_dir("waveform_io");
  auto w = sample_waveform(3).record;
  write_waveform_binary(dir / "a.sqpw", w);
  const auto bin = read_waveform(dir / "a.sqpw");
  EXPECT_EQ(bin.ecg, w.ecg);
  EXPECT_EQ(bin.ppg, w.ppg);
  EXPECT_EQ(bin.sample_rate, w.sample_rate);
  EXPECT_EQ(read_file(dir / "a.sqpw").substr(0, 4), "SQPW");

  write_waveform_csv(dir / "a.csv", w);
  const auto csv = read_waveform(dir / "a.csv");
  EXPECT_EQ(csv.ecg, w.ecg);
  EXPECT_EQ(csv.ppg, w.ppg);
  EXPECT_DOUBLE_EQ(csv.sample_rate, w.sample_rate);
  EXPECT_EQ(read_file(dir / "a.csv").substr(0, 9), "t,ecg,ppg");
}

TEST(WaveformIo, FeatureCsvWithSidecar) {
  const auto dir = testing::scratch_dir("feature_io");
  const auto ext = extract_features(sample_waveform(4).record);
  auto seq = normalize_features(ext.features);
  seq.subject_id = "s07";
  seq.session_label = "day2";
  write_feature_csv(dir / "f.csv", seq);
  EXPECT_EQ(read_file(dir / "f.csv").substr(0, 31), "t,ptt_s,hr,ri,st,up_time,sv,dv\n");
  EXPECT_TRUE(std::filesystem::exists(sidecar_path(dir / "f.csv")));
  const auto back = read_feature_csv(dir / "f.csv");
  EXPECT_EQ(back.values, seq.values);
  EXPECT_EQ(back.times, seq.times);
  EXPECT_EQ(back.subject_id, "s07");
  EXPECT_EQ(back.session_label, "day2");
  ASSERT_TRUE(back.normalization.has_value());
  EXPECT_EQ(back.normalization->mean, seq.normalization->mean);
  EXPECT_EQ(back.normalization->std, seq.normalization->std);
}

TEST(WaveformIo, MissingFileNamesPath) {
  try {
    read_waveform("/nonexistent/record.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/record.csv"), std::string::npos);
  }
}

}  // namespace
}  // namespace seqpress
