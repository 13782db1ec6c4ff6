// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "seqpress/rnn.hpp"
#include "seqpress/signal.hpp"

namespace seqpress {

struct TrainConfig {
  std::size_t batch_size = 64;
  double clip_norm = 5.0;
  double lambda = 1e-4;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t max_epochs = 500;
  std::size_t early_stop_patience = 20;
  std::uint64_t seed = 0;
  double train_fraction = 0.7;
  double val_fraction = 0.1;
  double test_fraction = 0.2;
  /// Window stride; 0 means seq_len / 2.
  std::size_t stride = 0;
  /// Hard cap on optimizer steps across all epochs; 0 means no cap.
  std::size_t max_steps = 0;
  double finetune_lr_factor = 0.1;
  /// Leading (time-ordered) share of each day-1 recording used for finetuning.
  double finetune_fraction = 0.5;
  /// Loss weight per output channel; single-task runs zero two of them.
  std::array<double, 3> channel_mask = {1.0, 1.0, 1.0};
  /// Worker threads for per-sample gradients; 0 runs inline.
  std::size_t threads = 0;

  void validate() const;
  std::size_t effective_stride(std::size_t seq_len) const {
    return stride > 0 ? stride : std::max<std::size_t>(1, seq_len / 2);
  }
  bool operator==(const TrainConfig&) const = default;
};

/// Per-channel maxima used to map mmHg targets into (0, 1].
struct TargetScaling {
  std::array<double, 3> maxima = {1.0, 1.0, 1.0};

  bool operator==(const TargetScaling&) const = default;
};

/// Maxima over the rows of every matrix (N x 3, mmHg). NonPositiveTarget if
/// any value is <= 0.
TargetScaling fit_target_scaling(const std::vector<Matrix>& bp_sequences);
/// Divides each channel by its stored maximum; held-out values may exceed 1.
Matrix normalize_targets(const Matrix& bp, const TargetScaling& scaling);
Matrix denormalize_targets(const Matrix& scaled, const TargetScaling& scaling);

struct TrainingSample {
  Matrix x;  // T x 7
  Matrix y;  // T x 3
  std::string subject_id;
  std::string session_label;
  std::size_t offset = 0;
};

/// Sliding windows of length `seq_len`; the trailing remainder is dropped.
std::vector<TrainingSample> make_windows(const Matrix& features, const Matrix& targets, std::size_t seq_len,
                                         std::size_t stride, const std::string& subject_id = {},
                                         const std::string& session_label = {});

struct DatasetSplit {
  std::vector<TrainingSample> train, val, test;
};

/// Seeded split stratified by subject: each subject's windows are shuffled
/// and cut into round(f_train n) / round(f_val n) / remainder.
DatasetSplit split_dataset(std::vector<TrainingSample> samples, std::array<double, 3> fractions,
                           std::uint64_t seed);

/// sum_t ||z_t - y_t||^2 + lambda * l2_norm_sq for one sample.
double multitask_loss(const Matrix& z_seq, const Matrix& y_seq, double params_l2_norm_sq, double lambda);

double gradient_norm(const Gradients& grads);
/// dst += scale * src, tensor by tensor.
void accumulate(Gradients& dst, const Gradients& src, double scale = 1.0);

/// Rescales in place to norm v when the global norm exceeds v. Returns the
/// norm before clipping.
double clip_gradients(Gradients& grads, double clip_norm);

struct AdamState {
  Gradients m;
  Gradients v;
  std::uint64_t step = 0;

  static AdamState zeros(const NetworkConfig& config);
};

void adam_step(AdamState& state, NetworkParams& params, const Gradients& grads, double learning_rate,
               double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double grad_norm_mean = 0.0;
};

struct Checkpoint {
  NetworkParams net;
  std::optional<FeatureStats> feature_stats;
  TargetScaling targets;
  TrainConfig train_config;
  std::vector<EpochRecord> history;
  std::size_t steps = 0;
};

/// Mean per-sample multitask loss (no L2) of `net` on `samples`.
double evaluate_loss(const NetworkParams& net, const std::vector<TrainingSample>& samples,
                     const std::array<double, 3>& channel_mask = {1.0, 1.0, 1.0}, std::size_t threads = 0);

/// Objective and gradient of one minibatch: mean per-sample loss plus
/// lambda ||theta||^2.
struct BatchGradient {
  double loss = 0.0;
  Gradients grads;
};
BatchGradient batch_gradient(const NetworkParams& net, const std::vector<TrainingSample>& samples,
                             const std::vector<std::size_t>& indices, const TrainConfig& config);

struct TrainingData {
  std::vector<TrainingSample> train;
  std::vector<TrainingSample> val;
};

/// Called after every epoch; returning false stops training.
using EpochCallback = std::function<bool(const EpochRecord&)>;

/// Minibatch Adam with global-norm clipping and early stopping on the
/// validation loss. Returns the best-validation parameters (final parameters
/// when `data.val` is empty). The effective batch is min(batch_size, train
/// size) and any final short batch is dropped.
Checkpoint train(const TrainConfig& config, const NetworkParams& init, const TrainingData& data,
                 const EpochCallback& on_epoch = {});

/// Recordings in mmHg and raw feature units, ready for windowing.
struct Recording {
  FeatureSequence features;  // raw values
  Matrix bp;                 // N x 3 mmHg, row-aligned with features
};

/// Windows every recording, splits them, fits feature statistics and target
/// maxima on the training windows and normalizes all three splits.
struct PreparedData {
  DatasetSplit split;
  FeatureStats feature_stats;
  TargetScaling targets;
};
PreparedData prepare_dataset(const std::vector<Recording>& recordings, std::size_t seq_len,
                             const TrainConfig& config);

/// Normalized windows of `recordings` with fixed statistics.
std::vector<TrainingSample> windows_with_stats(const std::vector<Recording>& recordings, std::size_t seq_len,
                                               std::size_t stride, const FeatureStats& stats,
                                               const TargetScaling& targets);

/// Full pipeline: prepare, initialize from `seed`, train. The checkpoint
/// carries the fitted statistics.
Checkpoint train_on_recordings(const NetworkConfig& net_config, const TrainConfig& config,
                               const std::vector<Recording>& recordings, const EpochCallback& on_epoch = {});

/// Leading `fraction` of rows (time order) and the rest.
std::pair<Recording, Recording> split_recording_by_time(const Recording& rec, double fraction);

/// Continues from `base` on `recordings` with a fresh Adam state and the
/// learning rate scaled by finetune_lr_factor. Statistics stay frozen.
Checkpoint finetune(const Checkpoint& base, const std::vector<Recording>& recordings, const TrainConfig& config);

struct PretrainFinetuneResult {
  Checkpoint pretrained;
  Checkpoint finetuned;
  /// Trailing share of each day-1 recording, kept out of finetuning.
  std::vector<Recording> day1_holdout;
};
PretrainFinetuneResult pretrain_finetune(const std::vector<Recording>& static_set,
                                         const std::vector<Recording>& day1_set, const NetworkConfig& net_config,
                                         const TrainConfig& config);

/// Per-timestep predictions in mmHg for a whole recording. Non-overlapping
/// windows cover the sequence; a final window aligned to the end covers any
/// remainder. SourceTooShort if the recording is shorter than seq_len.
Matrix predict_recording(const Checkpoint& ckpt, const Matrix& raw_features);

}  // namespace seqpress
