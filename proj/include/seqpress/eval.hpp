// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqpress/baselines.hpp"
#include "seqpress/training.hpp"

namespace seqpress {

inline constexpr std::array<const char*, 3> kChannelNames = {"sbp", "dbp", "mbp"};

/// sqrt(mean((pred - truth)^2)). LengthMismatch / EmptyInput.
double rmse(std::span<const double> pred, std::span<const double> truth);
/// Per-channel RMSE of N x 3 matrices; channels whose predictions are all
/// NaN report NaN.
std::array<double, 3> rmse_per_channel(const Matrix& pred, const Matrix& truth);

struct BlandAltmanStats {
  double mean_diff = 0.0;
  /// Population standard deviation of the differences.
  double sd_diff = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double fraction_within = 0.0;
  /// Plot data: x = (pred + truth) / 2, y = pred - truth.
  std::vector<std::array<double, 2>> points;
};

/// Differences pred - truth with limits mean +- 1.96 SD. Needs >= 2 points.
BlandAltmanStats bland_altman(std::span<const double> pred, std::span<const double> truth);

/// A fitted model that maps a recording to N x 3 predictions in mmHg. Rows
/// for channels the model does not cover are NaN.
struct Predictor {
  std::string name;
  std::array<bool, 3> channels = {true, true, true};
  std::function<Matrix(const Recording&)> predict;
};

Predictor checkpoint_predictor(std::string name, Checkpoint ckpt);
Predictor linreg_predictor(std::string name, LinearModel model);
Predictor kalman_predictor(std::string name, KalmanModel model);
/// Per-subject calibration on the first `calibration_beats` rows of each
/// subject's calibration recording; subjects without one fail with
/// InsufficientCalibration.
Predictor ptt_chen_predictor(const std::vector<Recording>& calibration,
                             std::size_t calibration_beats = kDefaultCalibrationBeats);
Predictor ptt_poon_predictor(const std::vector<Recording>& calibration,
                             std::size_t calibration_beats = kDefaultCalibrationBeats);

/// Ridge / Kalman fits on whole recordings.
LinearModel fit_linreg_on(const std::vector<Recording>& recordings, double alpha = 1.0);
KalmanModel fit_kalman_on(const std::vector<Recording>& recordings);

struct SessionRow {
  std::string model;
  std::string session;
  /// RMSE over all timesteps of all subjects in the session.
  std::array<double, 3> pooled{};
  /// Mean of per-subject RMSEs.
  std::array<double, 3> macro{};
  std::size_t subjects = 0;
  std::size_t samples = 0;
};

struct EvalReport {
  std::string dataset_id;
  std::vector<std::string> models;
  std::vector<std::string> sessions;
  std::vector<SessionRow> rows;  // model-major, sessions in the given order
  /// Overall SBP / DBP agreement per model, pooled over sessions.
  std::vector<std::array<BlandAltmanStats, 2>> agreement;

  const SessionRow& row(const std::string& model, const std::string& session) const;
};

/// One row per model per session. MissingSession when `sessions` is empty or
/// names a session with no recordings.
EvalReport multiday_eval(const std::vector<Predictor>& models, const std::vector<Recording>& data,
                         const std::vector<std::string>& sessions, const std::string& dataset_id = {});

/// Denormalized per-channel RMSE over every timestep of `samples`.
std::array<double, 3> window_rmse(const Checkpoint& ckpt, const std::vector<TrainingSample>& samples);

struct TableRow {
  std::string model;
  std::array<double, 3> rmse{};
};

/// Train on the prepared split, score on its test windows.
struct ScoredModel {
  Checkpoint checkpoint;
  std::array<double, 3> test_rmse{};
};
ScoredModel train_and_score(const NetworkConfig& net_config, const TrainConfig& config, const PreparedData& data);

/// DeepRNN with and without residual additions, same seed and budget.
struct AblationReport {
  std::vector<TableRow> rows;  // with residual, without residual
  std::vector<std::vector<EpochRecord>> histories;
};
AblationReport ablation_residual(const NetworkConfig& net_config, const TrainConfig& config,
                                 const std::vector<Recording>& recordings);

/// For each depth, one 3-output model and three single-output models trained
/// with identical budgets. Rows: "DeepRNN-<d>L" (single-task) then
/// "DeepRNN-<d>L†" (multi-task).
struct MultitaskReport {
  std::vector<TableRow> rows;
};
MultitaskReport multitask_vs_singletask_harness(const NetworkConfig& net_config, const TrainConfig& config,
                                                const std::vector<Recording>& recordings,
                                                const std::vector<std::size_t>& depths = {2, 3, 4});

/// Static comparison: the reference models scored on the test windows of `recordings`.
/// Baselines are fit on the training windows; PTT models calibrate per subject
/// on the leading training rows.
std::vector<TableRow> static_comparison(const NetworkConfig& deep_config, const TrainConfig& config,
                                        const std::vector<Recording>& recordings);

/// Markdown table with the given columns (indices into kChannelNames).
std::string format_table(const std::string& title, const std::vector<TableRow>& rows,
                         const std::vector<std::size_t>& channels, const std::string& footer = {});
inline constexpr const char* kStaticReferenceFooter =
    "Published reference for DeepRNN-4L on the original static dataset: SBP 3.73 mmHg, DBP 2.43 mmHg "
    "(human recordings, not reproduced by this synthetic run).";

nlohmann::json to_json(const EvalReport& report);
/// model,session,<channel>_pooled...,<channel>_macro...,subjects,samples
void write_session_csv(const std::filesystem::path& path, const EvalReport& report);
/// Grouped bar chart of pooled RMSE for one channel, sessions on the x axis.
std::string render_session_chart_svg(const EvalReport& report, std::size_t channel);
void write_bland_altman_csv(const std::filesystem::path& path, const BlandAltmanStats& stats);

}  // namespace seqpress
