// SPDX-License-Identifier: Apache-2.0
#include "seqpress/training.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "seqpress/bptt.hpp"
#include "seqpress/error.hpp"
#include "seqpress/parallel.hpp"
#include "seqpress/rng.hpp"

namespace seqpress {
namespace {

constexpr std::uint64_t kShuffleStream = 0x5EB7;
constexpr std::uint64_t kSplitStream = 0x5B17;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double masked_loss(const Matrix& z, const Matrix& y, const std::array<double, 3>& mask) {
  const Eigen::RowVector3d m(mask[0], mask[1], mask[2]);
  return ((z - y).array().square().rowwise() * m.array()).sum();
}

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t count) {
  return m.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
}

Recording slice_recording(const Recording& rec, std::size_t begin, std::size_t count) {
  Recording out;
  out.features.subject_id = rec.features.subject_id;
  out.features.session_label = rec.features.session_label;
  out.features.normalization = rec.features.normalization;
  out.features.values = slice_rows(rec.features.values, begin, count);
  if (rec.features.times.size() >= begin + count)
    out.features.times.assign(rec.features.times.begin() + static_cast<std::ptrdiff_t>(begin),
                              rec.features.times.begin() + static_cast<std::ptrdiff_t>(begin + count));
  out.bp = slice_rows(rec.bp, begin, count);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  require(batch_size >= 1, ErrorCode::InvalidArgument, "batch_size must be at least 1");
  require(clip_norm > 0.0, ErrorCode::InvalidArgument, "clip_norm must be positive");
  require(lambda >= 0.0, ErrorCode::InvalidArgument, "lambda must be non-negative");
  require(learning_rate >= 0.0, ErrorCode::InvalidArgument, "learning_rate must be non-negative");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
          ErrorCode::InvalidArgument, "Adam betas must lie in [0, 1)");
  require(adam_epsilon > 0.0, ErrorCode::InvalidArgument, "adam_epsilon must be positive");
  for (double f : {train_fraction, val_fraction, test_fraction})
    require(f >= 0.0 && f <= 1.0, ErrorCode::InvalidArgument, "split fractions must lie in [0, 1]");
  require(std::abs(train_fraction + val_fraction + test_fraction - 1.0) < 1e-9, ErrorCode::InvalidArgument,
          "split fractions must sum to 1");
  require(finetune_fraction > 0.0 && finetune_fraction < 1.0, ErrorCode::InvalidArgument,
          "finetune_fraction must lie in (0, 1)");
  require(finetune_lr_factor >= 0.0, ErrorCode::InvalidArgument, "finetune_lr_factor must be non-negative");
  for (double m : channel_mask)
    require(m >= 0.0, ErrorCode::InvalidArgument, "channel_mask entries must be non-negative");
}

TargetScaling fit_target_scaling(const std::vector<Matrix>& bp_sequences) {
  TargetScaling scaling;
  scaling.maxima = {0.0, 0.0, 0.0};
  bool any = false;
  for (const auto& bp : bp_sequences) {
    require(bp.cols() == kNumOutputs, ErrorCode::ShapeMismatch, "BP sequences must have 3 columns");
    if (bp.rows() == 0) continue;
    if (!((bp.array() > 0.0).all()))
      fail(ErrorCode::NonPositiveTarget, "BP values must be strictly positive to normalize by maximum");
    for (Eigen::Index c = 0; c < kNumOutputs; ++c)
      scaling.maxima[static_cast<std::size_t>(c)] =
          std::max(scaling.maxima[static_cast<std::size_t>(c)], bp.col(c).maxCoeff());
    any = true;
  }
  require(any, ErrorCode::EmptyInput, "no BP rows to fit target maxima");
  return scaling;
}

Matrix normalize_targets(const Matrix& bp, const TargetScaling& scaling) {
  require(bp.cols() == kNumOutputs, ErrorCode::ShapeMismatch, "BP sequences must have 3 columns");
  if (!((bp.array() > 0.0).all())) fail(ErrorCode::NonPositiveTarget, "BP values must be strictly positive");
  Matrix out = bp;
  for (Eigen::Index c = 0; c < kNumOutputs; ++c) out.col(c) /= scaling.maxima[static_cast<std::size_t>(c)];
  return out;
}

Matrix denormalize_targets(const Matrix& scaled, const TargetScaling& scaling) {
  require(scaled.cols() == kNumOutputs, ErrorCode::ShapeMismatch, "BP sequences must have 3 columns");
  Matrix out = scaled;
  for (Eigen::Index c = 0; c < kNumOutputs; ++c) out.col(c) *= scaling.maxima[static_cast<std::size_t>(c)];
  return out;
}

std::vector<TrainingSample> make_windows(const Matrix& features, const Matrix& targets, std::size_t seq_len,
                                         std::size_t stride, const std::string& subject_id,
                                         const std::string& session_label) {
  require(seq_len >= 1 && stride >= 1, ErrorCode::InvalidArgument, "seq_len and stride must be positive");
  require(features.rows() == targets.rows(), ErrorCode::LengthMismatch,
          "features and targets have different lengths");
  const auto n = static_cast<std::size_t>(features.rows());
  if (n < seq_len)
    fail(ErrorCode::SourceTooShort, "sequence of length " + std::to_string(n) + " is shorter than T = " +
                                        std::to_string(seq_len));
  std::vector<TrainingSample> out;
  for (std::size_t offset = 0; offset + seq_len <= n; offset += stride)
    out.push_back({slice_rows(features, offset, seq_len), slice_rows(targets, offset, seq_len), subject_id,
                   session_label, offset});
  return out;
}

DatasetSplit split_dataset(std::vector<TrainingSample> samples, std::array<double, 3> fractions,
                           std::uint64_t seed) {
  for (double f : fractions)
    require(f >= 0.0 && f <= 1.0, ErrorCode::InvalidArgument, "split fractions must lie in [0, 1]");
  require(std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) < 1e-9, ErrorCode::InvalidArgument,
          "split fractions must sum to 1");

  // Subjects in order of first appearance.
  std::vector<std::string> subjects;
  std::map<std::string, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto [it, inserted] = by_subject.try_emplace(samples[i].subject_id);
    if (inserted) subjects.push_back(samples[i].subject_id);
    it->second.push_back(i);
  }

  DatasetSplit split;
  for (const auto& subject : subjects) {
    auto idx = by_subject[subject];
    CounterRng rng(seed, stream_id({kSplitStream, fnv1a(subject)}));
    shuffle(idx, rng);
    const std::size_t n = idx.size();
    const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n))));
    const auto n_val =
        std::min(n - n_train, static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n))));
    std::vector<std::size_t> parts[3] = {{idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train)},
                                         {idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                                          idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val)},
                                         {idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end()}};
    std::vector<TrainingSample>* dst[3] = {&split.train, &split.val, &split.test};
    for (int p = 0; p < 3; ++p) {
      std::sort(parts[p].begin(), parts[p].end());
      for (std::size_t i : parts[p]) dst[p]->push_back(std::move(samples[i]));
    }
  }
  const char* names[3] = {"train", "validation", "test"};
  const std::vector<TrainingSample>* parts[3] = {&split.train, &split.val, &split.test};
  for (int p = 0; p < 3; ++p)
    if (fractions[static_cast<std::size_t>(p)] > 0.0 && parts[p]->empty())
      fail(ErrorCode::EmptySplit, std::string(names[p]) + " split is empty (" + std::to_string(samples.size()) +
                                      " windows available)");
  return split;
}

double multitask_loss(const Matrix& z_seq, const Matrix& y_seq, double params_l2_norm_sq, double lambda) {
  if (z_seq.rows() != y_seq.rows() || z_seq.cols() != y_seq.cols())
    fail(ErrorCode::ShapeMismatch, "prediction and target shapes differ");
  return (z_seq - y_seq).squaredNorm() + lambda * params_l2_norm_sq;
}

double gradient_norm(const Gradients& grads) {
  double s = 0.0;
  for (const auto& t : grads.tensors())
    for (double v : t.data) s += v * v;
  return std::sqrt(s);
}

void accumulate(Gradients& dst, const Gradients& src, double scale) {
  auto d = dst.tensors();
  const auto s = src.tensors();
  require(d.size() == s.size(), ErrorCode::ShapeMismatch, "gradient layouts differ");
  for (std::size_t k = 0; k < d.size(); ++k) {
    require(d[k].data.size() == s[k].data.size(), ErrorCode::ShapeMismatch, "gradient tensor sizes differ");
    for (std::size_t i = 0; i < d[k].data.size(); ++i) d[k].data[i] += scale * s[k].data[i];
  }
}

double clip_gradients(Gradients& grads, double clip_norm) {
  require(clip_norm > 0.0, ErrorCode::InvalidArgument, "clip norm must be positive");
  const double norm = gradient_norm(grads);
  if (norm > clip_norm) {
    const double scale = clip_norm / norm;
    for (auto& t : grads.tensors())
      for (double& v : t.data) v *= scale;
  }
  return norm;
}

AdamState AdamState::zeros(const NetworkConfig& config) {
  return {NetworkParams::zeros(config), NetworkParams::zeros(config), 0};
}

void adam_step(AdamState& state, NetworkParams& params, const Gradients& grads, double learning_rate,
               double beta1, double beta2, double epsilon) {
  auto p = params.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  const auto g = grads.tensors();
  require(p.size() == g.size() && m.size() == p.size() && v.size() == p.size(), ErrorCode::ShapeMismatch,
          "Adam state does not mirror parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(beta1, t);
  const double correct2 = 1.0 - std::pow(beta2, t);
  for (std::size_t k = 0; k < p.size(); ++k) {
    require(p[k].data.size() == g[k].data.size() && m[k].data.size() == p[k].data.size(),
            ErrorCode::ShapeMismatch, "Adam state tensor " + p[k].name + " has the wrong size");
    for (std::size_t i = 0; i < p[k].data.size(); ++i) {
      const double gi = g[k].data[i];
      m[k].data[i] = beta1 * m[k].data[i] + (1.0 - beta1) * gi;
      v[k].data[i] = beta2 * v[k].data[i] + (1.0 - beta2) * gi * gi;
      const double m_hat = m[k].data[i] / correct1;
      const double v_hat = v[k].data[i] / correct2;
      p[k].data[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + epsilon);
    }
  }
}

double evaluate_loss(const NetworkParams& net, const std::vector<TrainingSample>& samples,
                     const std::array<double, 3>& channel_mask, std::size_t threads) {
  require(!samples.empty(), ErrorCode::EmptyInput, "no samples to evaluate");
  std::vector<double> losses(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    losses[i] = masked_loss(deeprnn_forward(net, samples[i].x).z, samples[i].y, channel_mask);
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(samples.size());
}

BatchGradient batch_gradient(const NetworkParams& net, const std::vector<TrainingSample>& samples,
                             const std::vector<std::size_t>& indices, const TrainConfig& config) {
  require(!indices.empty(), ErrorCode::EmptyInput, "empty minibatch");
  const double inv_n = 1.0 / static_cast<double>(indices.size());
  const auto mask = config.channel_mask;
  BatchGradient out;
  out.grads = Gradients::zeros(net.config);

  auto one = [&](std::size_t sample, Gradients& slot) {
    const auto& s = samples.at(sample);
    auto fwd = deeprnn_forward(net, s.x, true);
    const double loss = masked_loss(fwd.z, s.y, mask);
    const Eigen::RowVector3d m(mask[0], mask[1], mask[2]);
    const Matrix dz = (2.0 * (fwd.z - s.y)).array().rowwise() * m.array();
    slot = std::move(deeprnn_backward(net, *fwd.cache, dz).grads);
    return loss;
  };

  // Per-sample gradients are added in index order whatever the thread count,
  // so the sum is bitwise reproducible.
  const std::size_t workers = std::max<std::size_t>(config.threads, 1);
  std::vector<Gradients> slots(workers);
  std::vector<double> losses(workers);
  for (std::size_t begin = 0; begin < indices.size(); begin += workers) {
    const std::size_t count = std::min(workers, indices.size() - begin);
    parallel_for(count, config.threads, [&](std::size_t j) { losses[j] = one(indices[begin + j], slots[j]); });
    for (std::size_t j = 0; j < count; ++j) {
      out.loss += losses[j] * inv_n;
      accumulate(out.grads, slots[j], inv_n);
    }
  }
  if (config.lambda != 0.0) {
    out.loss += config.lambda * net.weight_norm_sq();
    add_l2_gradient(net, config.lambda, out.grads);
  }
  return out;
}

Checkpoint train(const TrainConfig& config, const NetworkParams& init, const TrainingData& data,
                 const EpochCallback& on_epoch) {
  config.validate();
  init.validate();
  require(!data.train.empty(), ErrorCode::EmptySplit, "training split is empty");

  Checkpoint ckpt;
  ckpt.net = init;
  ckpt.train_config = config;
  if (config.max_epochs == 0) return ckpt;

  const std::size_t n = data.train.size();
  const std::size_t batch = std::min(config.batch_size, n);
  const std::size_t batches = n / batch;
  NetworkParams params = init;
  NetworkParams best = init;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  AdamState adam = AdamState::zeros(init.config);
  std::vector<std::size_t> order(n);

  bool stop = false;
  for (std::size_t epoch = 1; epoch <= config.max_epochs && !stop; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    CounterRng rng(config.seed, stream_id({kShuffleStream, epoch}));
    shuffle(order, rng);

    double loss_sum = 0.0, norm_sum = 0.0;
    std::size_t done = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b * batch),
                                   order.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch));
      auto bg = batch_gradient(params, data.train, idx, config);
      if (!std::isfinite(bg.loss))
        fail(ErrorCode::DivergedLoss, "training loss became non-finite at epoch " + std::to_string(epoch) +
                                          ", batch " + std::to_string(b) + " (step " +
                                          std::to_string(ckpt.steps + 1) + ")");
      norm_sum += clip_gradients(bg.grads, config.clip_norm);
      adam_step(adam, params, bg.grads, config.learning_rate, config.adam_beta1, config.adam_beta2,
                config.adam_epsilon);
      loss_sum += bg.loss;
      ++done;
      ++ckpt.steps;
      if (config.max_steps > 0 && ckpt.steps >= config.max_steps) {
        stop = true;
        break;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(done);
    rec.grad_norm_mean = norm_sum / static_cast<double>(done);
    rec.val_loss = std::numeric_limits<double>::quiet_NaN();
    if (!data.val.empty()) {
      rec.val_loss = evaluate_loss(params, data.val, config.channel_mask, config.threads);
      if (!std::isfinite(rec.val_loss))
        fail(ErrorCode::DivergedLoss, "validation loss became non-finite at epoch " + std::to_string(epoch));
      if (rec.val_loss < best_val) {
        best_val = rec.val_loss;
        best = params;
        since_best = 0;
      } else if (++since_best >= config.early_stop_patience) {
        stop = true;
      }
    }
    ckpt.history.push_back(rec);
    if (on_epoch && !on_epoch(rec)) stop = true;
  }
  ckpt.net = data.val.empty() ? params : best;
  return ckpt;
}

std::vector<TrainingSample> windows_with_stats(const std::vector<Recording>& recordings, std::size_t seq_len,
                                               std::size_t stride, const FeatureStats& stats,
                                               const TargetScaling& targets) {
  std::vector<TrainingSample> out;
  for (const auto& rec : recordings) {
    auto w = make_windows(apply_feature_stats(rec.features.values, stats), normalize_targets(rec.bp, targets),
                          seq_len, stride, rec.features.subject_id, rec.features.session_label);
    std::move(w.begin(), w.end(), std::back_inserter(out));
  }
  return out;
}

PreparedData prepare_dataset(const std::vector<Recording>& recordings, std::size_t seq_len,
                             const TrainConfig& config) {
  config.validate();
  require(!recordings.empty(), ErrorCode::EmptyInput, "no recordings supplied");
  std::vector<TrainingSample> raw;
  for (const auto& rec : recordings) {
    require(rec.bp.cols() == kNumOutputs, ErrorCode::ShapeMismatch, "BP must have 3 columns");
    auto w = make_windows(rec.features.values, rec.bp, seq_len, config.effective_stride(seq_len),
                          rec.features.subject_id, rec.features.session_label);
    std::move(w.begin(), w.end(), std::back_inserter(raw));
  }
  PreparedData out;
  out.split = split_dataset(std::move(raw), {config.train_fraction, config.val_fraction, config.test_fraction},
                            config.seed);

  const auto& train = out.split.train;
  Matrix pooled(static_cast<Eigen::Index>(train.size() * seq_len), train.front().x.cols());
  std::vector<Matrix> targets;
  for (std::size_t i = 0; i < train.size(); ++i) {
    pooled.middleRows(static_cast<Eigen::Index>(i * seq_len), static_cast<Eigen::Index>(seq_len)) = train[i].x;
    targets.push_back(train[i].y);
  }
  out.feature_stats = compute_feature_stats(pooled);
  out.targets = fit_target_scaling(targets);
  for (auto* part : {&out.split.train, &out.split.val, &out.split.test}) {
    for (auto& s : *part) {
      s.x = apply_feature_stats(s.x, out.feature_stats);
      s.y = normalize_targets(s.y, out.targets);
    }
  }
  return out;
}

Checkpoint train_on_recordings(const NetworkConfig& net_config, const TrainConfig& config,
                               const std::vector<Recording>& recordings, const EpochCallback& on_epoch) {
  auto prepared = prepare_dataset(recordings, net_config.seq_len, config);
  auto init = NetworkParams::initialize(net_config, config.seed);
  auto ckpt = train(config, init, {prepared.split.train, prepared.split.val}, on_epoch);
  ckpt.feature_stats = prepared.feature_stats;
  ckpt.targets = prepared.targets;
  return ckpt;
}

std::pair<Recording, Recording> split_recording_by_time(const Recording& rec, double fraction) {
  require(fraction >= 0.0 && fraction <= 1.0, ErrorCode::InvalidArgument, "fraction must lie in [0, 1]");
  require(rec.features.values.rows() == rec.bp.rows(), ErrorCode::LengthMismatch,
          "features and BP have different lengths");
  const auto n = static_cast<std::size_t>(rec.bp.rows());
  const auto head = std::min(n, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  return {slice_recording(rec, 0, head), slice_recording(rec, head, n - head)};
}

Checkpoint finetune(const Checkpoint& base, const std::vector<Recording>& recordings, const TrainConfig& config) {
  config.validate();
  require(!recordings.empty(), ErrorCode::EmptyInput, "no finetuning recordings supplied");
  require(base.feature_stats.has_value(), ErrorCode::InvalidArgument, "checkpoint lacks feature statistics");
  const std::size_t seq_len = base.net.config.seq_len;
  auto windows =
      windows_with_stats(recordings, seq_len, config.effective_stride(seq_len), *base.feature_stats, base.targets);
  const double held = config.train_fraction + config.val_fraction;
  require(held > 0.0, ErrorCode::InvalidArgument, "train and validation fractions are both zero");
  auto split = split_dataset(std::move(windows), {config.train_fraction / held, config.val_fraction / held, 0.0},
                             config.seed);

  TrainConfig tuned = config;
  tuned.learning_rate = config.learning_rate * config.finetune_lr_factor;
  Checkpoint out = train(tuned, base.net, {std::move(split.train), std::move(split.val)});
  out.feature_stats = base.feature_stats;
  out.targets = base.targets;
  return out;
}

PretrainFinetuneResult pretrain_finetune(const std::vector<Recording>& static_set,
                                         const std::vector<Recording>& day1_set, const NetworkConfig& net_config,
                                         const TrainConfig& config) {
  require(!static_set.empty(), ErrorCode::EmptyInput, "static dataset is empty");
  require(!day1_set.empty(), ErrorCode::EmptyInput, "day-1 dataset is empty");
  PretrainFinetuneResult out;
  out.pretrained = train_on_recordings(net_config, config, static_set);
  std::vector<Recording> held_in;
  for (const auto& rec : day1_set) {
    auto [head, tail] = split_recording_by_time(rec, config.finetune_fraction);
    held_in.push_back(std::move(head));
    out.day1_holdout.push_back(std::move(tail));
  }
  out.finetuned = finetune(out.pretrained, held_in, config);
  return out;
}

Matrix predict_recording(const Checkpoint& ckpt, const Matrix& raw_features) {
  const std::size_t seq_len = ckpt.net.config.seq_len;
  const auto n = static_cast<std::size_t>(raw_features.rows());
  if (n < seq_len)
    fail(ErrorCode::SourceTooShort, "recording of length " + std::to_string(n) + " is shorter than T = " +
                                        std::to_string(seq_len));
  const Matrix x = ckpt.feature_stats ? apply_feature_stats(raw_features, *ckpt.feature_stats) : raw_features;
  Matrix z(static_cast<Eigen::Index>(n), kNumOutputs);
  std::size_t covered = 0;
  while (covered < n) {
    const std::size_t begin = std::min(covered, n - seq_len);
    Matrix window_z = deeprnn_forward(ckpt.net, slice_rows(x, begin, seq_len)).z;
    const std::size_t skip = covered - begin;
    z.middleRows(static_cast<Eigen::Index>(covered), static_cast<Eigen::Index>(seq_len - skip)) =
        window_z.bottomRows(static_cast<Eigen::Index>(seq_len - skip));
    covered = begin + seq_len;
  }
  return denormalize_targets(z, ckpt.targets);
}

}  // namespace seqpress
