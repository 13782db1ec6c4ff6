// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqpress/rnn.hpp"

namespace seqpress {

/// Leading calibration window for the PTT models, in beats.
inline constexpr std::size_t kDefaultCalibrationBeats = 60;
inline constexpr std::size_t kMinCalibrationBeats = 10;

/// Relative-PTT correction, SBP only:
///   SBP = sbp_cal + slope * (ptt_cal - PTT) / ptt_cal
/// with ptt_cal the mean calibration PTT and (sbp_cal, slope) fit by least
/// squares on the calibration window.
struct PttChenModel {
  double ptt_cal = 0.0;
  double sbp_cal = 0.0;
  double slope = 0.0;
};

/// SBP and DBP each affine in 1 / PTT^2:
///   BP = intercept + slope / PTT^2
/// A calibration window with constant PTT yields slope 0 (window mean).
struct PttPoonModel {
  double sbp_intercept = 0.0;
  double sbp_slope = 0.0;
  double dbp_intercept = 0.0;
  double dbp_slope = 0.0;
};

/// Beats dropped because PTT was not a positive finite number.
struct RejectedBeats {
  std::vector<std::size_t> indices;
};

/// Fits on paired (PTT, SBP) beats; invalid beats are skipped and reported
/// through `rejected`. InsufficientCalibration with fewer than ten valid beats
/// or when the calibration PTT has no spread.
PttChenModel ptt_chen_fit(std::span<const double> ptt, std::span<const double> sbp,
                          RejectedBeats* rejected = nullptr);
/// NaN for beats with invalid PTT (recorded in `rejected`).
Vector ptt_chen_predict(const PttChenModel& model, std::span<const double> ptt, RejectedBeats* rejected = nullptr);

PttPoonModel ptt_poon_fit(std::span<const double> ptt, std::span<const double> sbp, std::span<const double> dbp,
                          RejectedBeats* rejected = nullptr);
/// N x 2 (SBP, DBP); NaN rows for invalid PTT.
Matrix ptt_poon_predict(const PttPoonModel& model, std::span<const double> ptt, RejectedBeats* rejected = nullptr);

/// State s = (SBP, DBP, MBP):
///   s_{t+1} = transition s_t + transition_offset + w,  w ~ N(0, process_cov)
///   x_t     = observation s_t + observation_offset + v, v ~ N(0, observation_cov)
struct KalmanModel {
  Matrix transition;          // 3 x 3
  Vector transition_offset;   // 3
  Matrix observation;         // features x 3
  Vector observation_offset;  // features
  Matrix process_cov;         // 3 x 3
  Matrix observation_cov;     // features x features
  Vector initial_mean;        // 3
  Matrix initial_cov;         // 3 x 3
};

inline constexpr double kCovarianceJitter = 1e-8;

/// Least-squares fit over consecutive pairs within each sequence. Residual
/// covariances get +1e-8 I. `features[k]` is N_k x F, `bp[k]` N_k x 3.
KalmanModel kalman_fit(const std::vector<Matrix>& features, const std::vector<Matrix>& bp);

struct KalmanTrace {
  Matrix states;  // N x 3 posterior means
  /// Largest |P - P^T| seen before each re-symmetrization.
  double max_asymmetry = 0.0;
  /// Smallest eigenvalue of any posterior covariance.
  double min_eigenvalue = 0.0;
};

/// Predict/update recursion with a Joseph-form covariance update. The first
/// observation updates the initial state directly. SingularCovariance when
/// the innovation covariance cannot be factored even after jitter.
KalmanTrace kalman_filter(const KalmanModel& model, const Matrix& features);
Matrix kalman_predict(const KalmanModel& model, const Matrix& features);

/// Ridge regression (Gaussian-prior MAP), one weight row per output channel.
/// With an intercept the data are centered first so the intercept is not
/// penalized.
struct LinearModel {
  Matrix weights;    // outputs x features
  Vector intercept;  // outputs
  double alpha = 1.0;
  bool fit_intercept = true;
};

/// InsufficientData when there are fewer rows than fitted coefficients.
LinearModel linreg_fit(const Matrix& x, const Matrix& y, double alpha = 1.0, bool fit_intercept = true);
Matrix linreg_predict(const LinearModel& model, const Matrix& x);

}  // namespace seqpress
