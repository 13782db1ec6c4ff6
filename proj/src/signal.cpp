// SPDX-License-Identifier: Apache-2.0
#include "seqpress/signal.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "seqpress/error.hpp"

namespace seqpress {
namespace {

std::size_t to_index(double t, double fs) {
  return static_cast<std::size_t>(std::llround(std::max(0.0, t) * fs));
}

/// Sliding-window maximum over [i - half, i + half], clipped at the ends.
std::vector<double> windowed_max(const std::vector<double>& x, std::size_t half) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  std::deque<std::size_t> q;
  std::size_t right = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t hi = std::min(n - 1, i + half);
    while (right <= hi) {
      while (!q.empty() && x[q.back()] <= x[right]) q.pop_back();
      q.push_back(right++);
    }
    std::size_t lo = i >= half ? i - half : 0;
    while (q.front() < lo) q.pop_front();
    out[i] = x[q.front()];
  }
  return out;
}

std::size_t argmax_in(std::span<const double> x, std::size_t lo, std::size_t hi) {
  std::size_t best = lo;
  for (std::size_t i = lo + 1; i <= hi; ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

std::size_t argmin_in(std::span<const double> x, std::size_t lo, std::size_t hi) {
  std::size_t best = lo;
  for (std::size_t i = lo + 1; i <= hi; ++i)
    if (x[i] < x[best]) best = i;
  return best;
}

/// Index of the steepest upstroke in [lo, hi], or nullopt when the window is
/// too short or the slope is still rising at a truncated right edge.
std::optional<std::size_t> max_slope_in(std::span<const double> x, std::size_t lo, std::size_t hi,
                                        bool truncated) {
  const std::size_t n = x.size();
  lo = std::max<std::size_t>(lo, 1);
  hi = std::min(hi, n - 2);
  if (hi <= lo) return std::nullopt;
  std::size_t best = lo;
  double best_slope = x[lo + 1] - x[lo - 1];
  for (std::size_t i = lo + 1; i <= hi; ++i) {
    double s = x[i + 1] - x[i - 1];
    if (s > best_slope) {
      best_slope = s;
      best = i;
    }
  }
  if (truncated && best == hi) return std::nullopt;
  return best;
}

}  // namespace

std::string to_string(QualityIssueKind kind) {
  switch (kind) {
    case QualityIssueKind::FiducialNotFound: return "FiducialNotFound";
    case QualityIssueKind::PartialBeat: return "PartialBeat";
    case QualityIssueKind::ReflectionIndexAboveOne: return "ReflectionIndexAboveOne";
    case QualityIssueKind::NonPositiveFeature: return "NonPositiveFeature";
  }
  return "Unknown";
}

void WaveformRecord::validate() const {
  require(sample_rate > 0.0 && std::isfinite(sample_rate), ErrorCode::InvalidFormat,
          "sample_rate must be positive");
  require(!ecg.empty() && !ppg.empty(), ErrorCode::InvalidFormat, "empty waveform channel");
  require(ecg.size() == ppg.size(), ErrorCode::InvalidFormat,
          "ecg and ppg lengths differ (" + std::to_string(ecg.size()) + " vs " +
              std::to_string(ppg.size()) + ")");
}

std::vector<double> detect_ecg_r_peaks(std::span<const double> ecg, double sample_rate) {
  require(sample_rate > 0.0, ErrorCode::InvalidArgument, "sample_rate must be positive");
  const std::size_t n = ecg.size();
  require(static_cast<double>(n) >= 2.0 * sample_rate, ErrorCode::InsufficientData,
          "ECG shorter than 2 s");

  // Differentiate, square, integrate over 50 ms.
  std::vector<double> energy(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = (i == 0)       ? ecg[1] - ecg[0]
               : (i == n - 1) ? ecg[n - 1] - ecg[n - 2]
                              : ecg[i + 1] - ecg[i - 1];
    energy[i] = d * d;
  }
  const std::size_t half_smooth = std::max<std::size_t>(1, to_index(0.025, sample_rate));
  std::vector<double> smooth(n, 0.0);
  {
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + energy[i];
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t lo = i >= half_smooth ? i - half_smooth : 0;
      std::size_t hi = std::min(n, i + half_smooth + 1);
      smooth[i] = prefix[hi] - prefix[lo];
    }
  }
  const double global_max = *std::max_element(smooth.begin(), smooth.end());
  if (!(global_max > 0.0)) fail(ErrorCode::NoBeatsDetected, "flat ECG signal");

  const auto local_max = windowed_max(smooth, to_index(1.5, sample_rate));
  const std::size_t refractory = std::max<std::size_t>(1, to_index(kRefractoryPeriod, sample_rate));

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    double threshold = std::max(0.4 * local_max[i], 0.1 * global_max);
    if (smooth[i] < threshold || smooth[i] <= 0.0) continue;
    bool left_ok = i == 0 || smooth[i] >= smooth[i - 1];
    bool right_ok = i == n - 1 || smooth[i] > smooth[i + 1];
    if (!(left_ok && right_ok)) continue;
    if (!candidates.empty() && i - candidates.back() < refractory) {
      if (smooth[i] > smooth[candidates.back()]) candidates.back() = i;
      continue;
    }
    candidates.push_back(i);
  }

  // Refine on the raw trace, then re-impose the refractory period.
  const std::size_t half_refine = to_index(0.05, sample_rate);
  std::vector<std::size_t> peaks;
  for (std::size_t c : candidates) {
    std::size_t lo = c >= half_refine ? c - half_refine : 0;
    std::size_t hi = std::min(n - 1, c + half_refine);
    std::size_t p = argmax_in(ecg, lo, hi);
    if (!peaks.empty() && p <= peaks.back()) continue;
    if (!peaks.empty() && p - peaks.back() < refractory) {
      if (ecg[p] > ecg[peaks.back()]) peaks.back() = p;
      continue;
    }
    peaks.push_back(p);
  }
  if (peaks.size() < 2)
    fail(ErrorCode::NoBeatsDetected, "found " + std::to_string(peaks.size()) + " R peak(s)");

  std::vector<double> times;
  times.reserve(peaks.size());
  for (std::size_t p : peaks) times.push_back(static_cast<double>(p) / sample_rate);
  return times;
}

FiducialResult detect_ppg_fiducials(std::span<const double> ppg, double sample_rate,
                                    std::span<const double> r_peaks) {
  require(sample_rate > 0.0, ErrorCode::InvalidArgument, "sample_rate must be positive");
  require(r_peaks.size() >= 2, ErrorCode::InsufficientBeats, "need at least 2 R peaks");
  require(ppg.size() >= 3, ErrorCode::InsufficientData, "PPG too short");
  const std::size_t n = ppg.size();
  const std::size_t m = r_peaks.size();
  const double fs = sample_rate;

  std::vector<std::size_t> r_idx(m);
  for (std::size_t k = 0; k < m; ++k) r_idx[k] = std::min(n - 1, to_index(r_peaks[k], fs));

  // Steepest upstroke in each R-R window; the last window borrows the
  // previous interval and is marked truncated at the record end.
  std::vector<std::optional<std::size_t>> slope_idx(m);
  for (std::size_t k = 0; k < m; ++k) {
    std::size_t lo = r_idx[k];
    std::size_t span = k + 1 < m ? r_idx[k + 1] - r_idx[k] : r_idx[k] - r_idx[k - 1];
    std::size_t hi_full = lo + span - 1;
    bool truncated = hi_full > n - 2;
    slope_idx[k] = max_slope_in(ppg, lo, std::min(hi_full, n - 2), truncated);
  }

  // Foot of beat k: minimum between consecutive upstrokes.
  std::vector<std::optional<std::size_t>> foot_idx(m);
  for (std::size_t k = 0; k < m; ++k) {
    if (!slope_idx[k]) continue;
    std::size_t hi = *slope_idx[k];
    std::size_t lo;
    if (k > 0 && slope_idx[k - 1]) {
      lo = *slope_idx[k - 1] + 1;
    } else {
      std::size_t rr = k + 1 < m ? r_idx[k + 1] - r_idx[k] : r_idx[k] - r_idx[k - 1];
      lo = hi >= rr ? hi - rr : 0;
    }
    if (lo > hi) continue;
    std::size_t f = argmin_in(ppg, lo, hi);
    if (f == 0) continue;  // foot lies before the record start
    foot_idx[k] = f;
  }

  FiducialResult result;
  for (std::size_t k = 0; k + 1 < m; ++k) {
    if (!slope_idx[k] || !foot_idx[k] || !foot_idx[k + 1]) {
      result.quality_log.push_back({QualityIssueKind::PartialBeat, k, "beat window incomplete"});
      continue;
    }
    const std::size_t tf = *foot_idx[k];
    const std::size_t ms = *slope_idx[k];
    const std::size_t next_tf = *foot_idx[k + 1];
    if (!(tf <= ms && ms < next_tf)) {
      result.quality_log.push_back({QualityIssueKind::FiducialNotFound, k, "inconsistent foot/upstroke order"});
      continue;
    }

    auto first_local_max = [&](std::size_t from, std::size_t to) -> std::optional<std::size_t> {
      for (std::size_t i = std::max<std::size_t>(from, 1); i < to && i + 1 < n; ++i)
        if (ppg[i] >= ppg[i - 1] && ppg[i] > ppg[i + 1]) return i;
      return std::nullopt;
    };

    auto tp = first_local_max(ms, next_tf);
    if (!tp) {
      result.quality_log.push_back({QualityIssueKind::FiducialNotFound, k, "systolic peak"});
      continue;
    }

    // Most prominent local minimum between the systolic peak and the next foot.
    std::optional<std::size_t> tn;
    double best_prominence = 0.0;
    {
      std::vector<double> left_max(next_tf - *tp + 1);
      double running = ppg[*tp];
      for (std::size_t i = *tp; i <= next_tf; ++i) {
        running = std::max(running, ppg[i]);
        left_max[i - *tp] = running;
      }
      std::vector<double> right_max(next_tf - *tp + 1);
      running = ppg[next_tf];
      for (std::size_t i = next_tf + 1; i-- > *tp;) {
        running = std::max(running, ppg[i]);
        right_max[i - *tp] = running;
      }
      for (std::size_t i = *tp + 1; i < next_tf; ++i) {
        if (!(ppg[i] <= ppg[i - 1] && ppg[i] < ppg[i + 1])) continue;
        double prominence = std::min(left_max[i - *tp], right_max[i - *tp]) - ppg[i];
        if (prominence > best_prominence) {
          best_prominence = prominence;
          tn = i;
        }
      }
    }
    if (!tn) {
      result.quality_log.push_back({QualityIssueKind::FiducialNotFound, k, "dicrotic notch"});
      continue;
    }
    auto tb = first_local_max(*tn + 1, next_tf);
    if (!tb) {
      result.quality_log.push_back({QualityIssueKind::FiducialNotFound, k, "reflected-wave peak"});
      continue;
    }

    BeatFiducials beat;
    beat.r_peak_t = static_cast<double>(r_idx[k]) / fs;
    beat.max_slope_t = static_cast<double>(ms) / fs;
    beat.tf = static_cast<double>(tf) / fs;
    beat.tp = static_cast<double>(*tp) / fs;
    beat.tn = static_cast<double>(*tn) / fs;
    beat.foot_level = ppg[tf];
    beat.a = ppg[*tp] - ppg[tf];
    beat.b = ppg[*tb] - ppg[tf];
    beat.rr_interval = static_cast<double>(r_idx[k + 1] - r_idx[k]) / fs;
    beat.next_tf = static_cast<double>(next_tf) / fs;
    if (!(beat.a > 0.0)) {
      result.quality_log.push_back({QualityIssueKind::FiducialNotFound, k, "non-positive systolic amplitude"});
      continue;
    }
    if (beat.b > beat.a)
      result.quality_log.push_back({QualityIssueKind::ReflectionIndexAboveOne, k,
                                    "b/a = " + std::to_string(beat.b / beat.a)});
    result.beats.push_back(beat);
  }
  return result;
}

double integrate_above(std::span<const double> signal, double sample_rate, double t_begin,
                       double t_end, double baseline) {
  std::size_t i0 = to_index(t_begin, sample_rate);
  std::size_t i1 = std::min(signal.size() - 1, to_index(t_end, sample_rate));
  double sum = 0.0;
  for (std::size_t i = i0; i < i1; ++i) sum += 0.5 * (signal[i] + signal[i + 1]) - baseline;
  return sum / sample_rate;
}

FeatureVector features_from_fiducials(const BeatFiducials& beat, std::span<const double> ppg,
                                      double sample_rate) {
  FeatureVector f;
  f.ptt_s = beat.max_slope_t - beat.r_peak_t;
  f.hr = 60.0 / beat.rr_interval;
  f.ri = beat.b / beat.a;
  f.st = beat.tn - beat.tf;
  f.up_time = beat.tp - beat.tf;
  f.sv = integrate_above(ppg, sample_rate, beat.tf, beat.tn, beat.foot_level);
  f.dv = integrate_above(ppg, sample_rate, beat.tn, beat.next_tf, beat.foot_level);
  return f;
}

ExtractionResult extract_features(std::span<const double> ecg, std::span<const double> ppg,
                                  double sample_rate) {
  require(ecg.size() == ppg.size(), ErrorCode::LengthMismatch, "ecg and ppg lengths differ");
  auto r_peaks = detect_ecg_r_peaks(ecg, sample_rate);
  auto fid = detect_ppg_fiducials(ppg, sample_rate, r_peaks);
  if (fid.beats.empty()) fail(ErrorCode::InsufficientBeats, "no complete beat with valid fiducials");

  ExtractionResult out;
  out.quality_log = std::move(fid.quality_log);
  out.fiducials = std::move(fid.beats);
  auto& seq = out.features;
  seq.values.resize(static_cast<Eigen::Index>(out.fiducials.size()), kNumFeatures);
  for (std::size_t k = 0; k < out.fiducials.size(); ++k) {
    const auto& beat = out.fiducials[k];
    auto row = features_from_fiducials(beat, ppg, sample_rate).as_array();
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
      seq.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = row[j];
      // ri may legitimately be zero; every other feature is a positive quantity
      if (j != 2 && !(row[j] > 0.0))
        out.quality_log.push_back({QualityIssueKind::NonPositiveFeature, k, kFeatureNames[j]});
    }
    seq.times.push_back(beat.r_peak_t);
  }
  return out;
}

ExtractionResult extract_features(const WaveformRecord& record) {
  record.validate();
  auto out = extract_features(record.ecg, record.ppg, record.sample_rate);
  out.features.subject_id = record.subject_id;
  out.features.session_label = record.session_label;
  return out;
}

FeatureStats compute_feature_stats(const Eigen::MatrixXd& values) {
  require(values.rows() > 0, ErrorCode::EmptyInput, "no rows to normalize");
  FeatureStats stats;
  stats.mean = values.colwise().mean().transpose();
  stats.std.resize(values.cols());
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    double var = (values.col(j).array() - stats.mean(j)).square().mean();
    stats.std(j) = std::sqrt(var);
    if (!(stats.std(j) > 0.0))
      fail(ErrorCode::DegenerateFeature, "feature " + std::to_string(j) + " has zero variance");
  }
  return stats;
}

Eigen::MatrixXd apply_feature_stats(const Eigen::MatrixXd& raw, const FeatureStats& stats) {
  require(raw.cols() == stats.mean.size() && raw.cols() == stats.std.size(),
          ErrorCode::DimensionMismatch, "feature stats width does not match data");
  return (raw.rowwise() - stats.mean.transpose()).array().rowwise() / stats.std.transpose().array();
}

Eigen::MatrixXd invert_feature_stats(const Eigen::MatrixXd& normalized, const FeatureStats& stats) {
  require(normalized.cols() == stats.mean.size(), ErrorCode::DimensionMismatch,
          "feature stats width does not match data");
  Eigen::MatrixXd scaled = normalized.array().rowwise() * stats.std.transpose().array();
  return scaled.rowwise() + stats.mean.transpose();
}

FeatureSequence normalize_features(const FeatureSequence& raw, const std::optional<FeatureStats>& stats) {
  FeatureSequence out = raw;
  FeatureStats used = stats ? *stats : compute_feature_stats(raw.values);
  for (Eigen::Index j = 0; j < used.std.size(); ++j)
    if (!(used.std(j) > 0.0))
      fail(ErrorCode::DegenerateFeature, "feature " + std::to_string(j) + " has zero variance");
  out.values = apply_feature_stats(raw.values, used);
  out.normalization = std::move(used);
  return out;
}

}  // namespace seqpress
