// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace seqpress {

inline constexpr std::size_t kNumFeatures = 7;
inline constexpr std::array<const char*, kNumFeatures> kFeatureNames = {
    "ptt_s", "hr", "ri", "st", "up_time", "sv", "dv"};

/// Raw ECG/PPG channels sampled on a shared clock.
struct WaveformRecord {
  std::vector<double> ecg;
  std::vector<double> ppg;
  double sample_rate = 0.0;
  std::string subject_id;
  std::string session_label;

  /// Throws InvalidFormat when the invariants (positive rate, non-empty,
  /// equal-length channels) do not hold.
  void validate() const;
  double duration() const { return sample_rate > 0 ? ecg.size() / sample_rate : 0.0; }
};

/// Per-beat landmarks. Times in seconds from the start of the record.
struct BeatFiducials {
  double r_peak_t = 0.0;
  double max_slope_t = 0.0;
  double tf = 0.0;  // foot
  double tp = 0.0;  // systolic peak
  double tn = 0.0;  // dicrotic notch
  double a = 0.0;   // systolic height above foot
  double b = 0.0;   // reflected-wave height above foot
  double foot_level = 0.0;  // PPG amplitude at tf, the integration baseline
  double rr_interval = 0.0;  // R-R interval to the next beat, seconds
  double next_tf = 0.0;      // foot of the following beat (end of DV integral)
};

struct FeatureVector {
  double ptt_s = 0.0;
  double hr = 0.0;
  double ri = 0.0;
  double st = 0.0;
  double up_time = 0.0;
  double sv = 0.0;
  double dv = 0.0;

  std::array<double, kNumFeatures> as_array() const { return {ptt_s, hr, ri, st, up_time, sv, dv}; }
};

/// Per-column (mean, population std) used to standardize features.
struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
};

/// T x 7 feature matrix (one row per beat). `normalization` is set once the
/// values have been standardized.
struct FeatureSequence {
  Eigen::MatrixXd values;
  std::vector<double> times;
  std::optional<FeatureStats> normalization;
  std::string subject_id;
  std::string session_label;

  std::size_t length() const { return static_cast<std::size_t>(values.rows()); }
};

enum class QualityIssueKind { FiducialNotFound, PartialBeat, ReflectionIndexAboveOne, NonPositiveFeature };

std::string to_string(QualityIssueKind kind);

struct QualityIssue {
  QualityIssueKind kind;
  std::size_t beat_index;
  std::string detail;
};

struct FiducialResult {
  std::vector<BeatFiducials> beats;
  std::vector<QualityIssue> quality_log;
};

struct ExtractionResult {
  FeatureSequence features;
  std::vector<BeatFiducials> fiducials;
  std::vector<QualityIssue> quality_log;
};

/// R-peak times (seconds). Squared first difference, smoothed over 50 ms,
/// thresholded against 40% of the local maximum within +-1.5 s (and 10% of the
/// global maximum), with a 0.25 s refractory window. Each candidate is refined
/// to the raw ECG maximum within +-50 ms.
std::vector<double> detect_ecg_r_peaks(std::span<const double> ecg, double sample_rate);

inline constexpr double kRefractoryPeriod = 0.25;

/// Locates foot, systolic peak, notch and reflected peak for every complete
/// beat. Beats without a detectable landmark are skipped and logged.
FiducialResult detect_ppg_fiducials(std::span<const double> ppg, double sample_rate,
                                    std::span<const double> r_peaks);

/// Trapezoidal integral of (signal - baseline) between two sample-aligned times.
double integrate_above(std::span<const double> signal, double sample_rate, double t_begin,
                       double t_end, double baseline);

FeatureVector features_from_fiducials(const BeatFiducials& beat, std::span<const double> ppg,
                                      double sample_rate);

ExtractionResult extract_features(std::span<const double> ecg, std::span<const double> ppg,
                                  double sample_rate);
ExtractionResult extract_features(const WaveformRecord& record);

/// Population mean/std per column. Throws DegenerateFeature on a zero std.
FeatureStats compute_feature_stats(const Eigen::MatrixXd& values);

/// Standardizes `raw`; computes stats from `raw` when none are supplied.
FeatureSequence normalize_features(const FeatureSequence& raw,
                                   const std::optional<FeatureStats>& stats = std::nullopt);

Eigen::MatrixXd apply_feature_stats(const Eigen::MatrixXd& raw, const FeatureStats& stats);
Eigen::MatrixXd invert_feature_stats(const Eigen::MatrixXd& normalized, const FeatureStats& stats);

}  // namespace seqpress
