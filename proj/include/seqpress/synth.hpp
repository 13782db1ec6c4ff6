// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "seqpress/signal.hpp"
#include "seqpress/training.hpp"

namespace seqpress {

struct SessionSpec {
  std::string label;
  /// Drift multiplier; 0 leaves the BP map untouched.
  double drift = 0.0;
};

std::vector<SessionSpec> default_sessions();

/// Generative model, per subject and session:
///   latent  s_t = rho s_{t-1} + sqrt(1 - rho^2) e_t               (unit variance)
///   history u_t = l u_{t-1} + (1 - l) s_t,  l = rho * history_factor,
///           rescaled to unit variance
///   driver  z_t = (1 - history_weight) s_t + history_weight u_t
///   BP      DBP = 78 + g (6 z0 + 2 z1) + 2 d,  PP = 42 + g (5 z0 - 3 z1) + 2 d,
///           g = 1 + 0.05 d,  d = session drift * drift_magnitude
///   features: fixed linear and nonlinear mixings of s_t plus sigma_obs noise,
///           mapped to physiological units.
/// Features observe only the current latent while BP also depends on its
/// history, so windowed models can beat any per-beat regressor.
struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t num_subjects = 12;
  std::vector<SessionSpec> sessions = default_sessions();
  std::size_t samples_per_session = 256;
  std::size_t latent_dim = 2;
  double rho = 0.9;
  double history_factor = 0.9;
  double history_weight = 0.5;
  double sigma_obs = 2.0;
  double drift_magnitude = 1.0;
  std::array<double, 2> sbp_range = {70.0, 200.0};
  std::array<double, 2> dbp_range = {40.0, 130.0};
  /// Beats discarded before recording starts.
  std::size_t burn_in = 200;

  void validate() const;
  double history_coupling() const { return rho * history_factor; }
};

struct SyntheticRecording {
  Recording recording;
  Matrix latent;   // N x latent_dim
  Matrix history;  // N x latent_dim, unit-variance history state
};

struct FeatureCohort {
  SynthConfig config;
  std::vector<SyntheticRecording> recordings;  // subject-major, sessions in config order
};

FeatureCohort generate_feature_cohort(const SynthConfig& config);

/// Recordings of the listed sessions (all when empty).
std::vector<Recording> cohort_recordings(const FeatureCohort& cohort, const std::vector<std::string>& sessions = {});

/// One long recording from an independent stream, used by the oracle.
SyntheticRecording generate_sequence(const SynthConfig& config, std::size_t length, double drift,
                                     std::uint64_t stream);

/// 1 + features + all products of pairs (including squares).
Matrix quadratic_basis(const Matrix& features);

struct OracleReport {
  std::array<double, 3> rmse{};
  /// sqrt of the mean squared error over all three channels.
  double pooled_rmse = 0.0;
  std::size_t fit_samples = 0;
  std::size_t eval_samples = 0;
};

/// Best per-beat (memoryless) predictor: least squares on the quadratic
/// feature basis fit on `samples` beats at `fit_drift`, scored on a fresh
/// `samples` beats at `eval_drift`.
OracleReport memoryless_oracle(const SynthConfig& config, std::size_t samples = 100000, double fit_drift = 0.0,
                               double eval_drift = 0.0);

struct WaveformConfig {
  double sample_rate = 1000.0;
  std::size_t beats_per_record = 40;
  /// Scales latent-driven beat-to-beat variation (0 gives a constant rhythm
  /// and shape).
  double variability = 1.0;
  double base_hr = 75.0;
  /// Standard deviation of additive ECG noise relative to the R amplitude.
  double ecg_noise = 0.0;
};

struct BeatTruth {
  BeatFiducials fiducials;
  FeatureVector features;
};

struct SyntheticWaveform {
  WaveformRecord record;
  /// Complete interior beats with fiducials and features from the continuous
  /// waveform model.
  std::vector<BeatTruth> beats;
  Matrix bp;  // one row per entry of `beats`
};

/// ECG: Gaussian R complexes (8 ms) plus a small T wave. PPG: systolic and
/// diastolic Gaussian pulses per beat.
std::vector<SyntheticWaveform> generate_waveform_cohort(const SynthConfig& config, const WaveformConfig& wave);

}  // namespace seqpress
