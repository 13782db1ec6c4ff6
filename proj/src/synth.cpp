// SPDX-License-Identifier: Apache-2.0
#include "seqpress/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "seqpress/error.hpp"
#include "seqpress/rng.hpp"

namespace seqpress {
namespace {

constexpr std::uint64_t kCohortStream = 0xC0407;
constexpr std::uint64_t kOracleStream = 0x0AC1E;
constexpr std::uint64_t kWaveStream = 0x3A7E;

/// Latent AR(1) plus its exponentially smoothed history.
class LatentProcess {
 public:
  LatentProcess(const SynthConfig& c, CounterRng& rng)
      : rho_(c.rho), coupling_(c.history_coupling()), rng_(rng), s_(c.latent_dim), u_(c.latent_dim) {
    const double l = coupling_;
    const double var = (1.0 - l) * (1.0 - l) * (1.0 + l * rho_) / ((1.0 - l * l) * (1.0 - l * rho_));
    history_scale_ = 1.0 / std::sqrt(var);
    for (auto& v : s_) v = rng_.normal();
    u_ = s_;
    for (std::size_t i = 0; i < c.burn_in; ++i) step();
  }

  void step() {
    const double innovation = std::sqrt(1.0 - rho_ * rho_);
    for (std::size_t k = 0; k < s_.size(); ++k) {
      s_[k] = rho_ * s_[k] + innovation * rng_.normal();
      u_[k] = coupling_ * u_[k] + (1.0 - coupling_) * s_[k];
    }
  }

  double latent(std::size_t k) const { return k < s_.size() ? s_[k] : 0.0; }
  double history(std::size_t k) const { return k < u_.size() ? u_[k] * history_scale_ : 0.0; }
  std::size_t dim() const { return s_.size(); }

 private:
  double rho_;
  double coupling_;
  double history_scale_ = 1.0;
  CounterRng& rng_;
  std::vector<double> s_;
  std::vector<double> u_;
};

std::array<double, 3> bp_from_driver(double z0, double z1, double drift, const SynthConfig& c) {
  const double gain = 1.0 + 0.05 * drift;
  double dbp = 78.0 + gain * (6.0 * z0 + 2.0 * z1) + 2.0 * drift;
  double pp = std::max(10.0, 42.0 + gain * (5.0 * z0 - 3.0 * z1) + 2.0 * drift);
  dbp = std::clamp(dbp, c.dbp_range[0], c.dbp_range[1]);
  const double sbp = std::clamp(dbp + pp, std::max(c.sbp_range[0], dbp + 10.0), c.sbp_range[1]);
  return {sbp, dbp, dbp + (sbp - dbp) / 3.0};
}

std::array<double, 3> beat_bp(const LatentProcess& p, double drift, const SynthConfig& c) {
  const double w = c.history_weight;
  const double z0 = (1.0 - w) * p.latent(0) + w * p.history(0);
  const double z1 = (1.0 - w) * p.latent(1) + w * p.history(1);
  return bp_from_driver(z0, z1, drift, c);
}

/// Features in standardized units before noise. Latent components beyond the
/// second only enter the features, one per feature in turn.
std::array<double, kNumFeatures> clean_features(const LatentProcess& p) {
  const double s0 = p.latent(0), s1 = p.latent(1);
  std::array<double, kNumFeatures> f = {
      0.9 * s0 + 0.3 * s1,
      0.5 * s0 - 0.7 * s1,
      -0.4 * s0 + 0.6 * s1,
      0.3 * s0 + 0.8 * s1,
      0.7 * s0 - 0.2 * s1,
      1.5 * std::tanh(s0 + 0.5 * s1),
      (s0 * s0 - 1.0) / std::sqrt(2.0) + 0.5 * s1,
  };
  for (std::size_t k = 2; k < p.dim(); ++k) f[(k - 2) % kNumFeatures] += 0.5 * p.latent(k);
  return f;
}

/// Physiological units; ptt falls as BP rises.
std::array<double, kNumFeatures> to_physiological(const std::array<double, kNumFeatures>& f) {
  return {
      std::max(0.05, 0.25 - 0.015 * f[0]),  // ptt_s
      std::clamp(72.0 + 5.0 * f[1], 40.0, 180.0),  // hr
      std::max(0.0, 0.5 + 0.06 * f[2]),  // ri
      std::max(0.05, 0.32 + 0.015 * f[3]),  // st
      std::max(0.02, 0.12 + 0.008 * f[4]),  // up_time
      std::max(0.01, 0.09 + 0.01 * f[5]),  // sv
      std::max(0.01, 0.11 + 0.01 * f[6]),  // dv
  };
}

std::string subject_name(std::size_t i, std::size_t total) {
  const int width = total >= 100 ? 3 : 2;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%0*zu", width, i + 1);
  return buf;
}

double gaussian(double t, double mu, double sigma) {
  const double u = (t - mu) / sigma;
  return std::exp(-0.5 * u * u);
}

struct PulseBeat {
  double r = 0.0;  // R-peak time
  double amp_sys = 1.0, mu_sys = 0.0, sigma_sys = 0.045;
  double amp_dia = 0.5, mu_dia = 0.0, sigma_dia = 0.06;
};

/// Continuous PPG model with its time derivative; only nearby beats contribute.
class PulseTrain {
 public:
  explicit PulseTrain(std::vector<PulseBeat> beats) : beats_(std::move(beats)) {}

  double value(double t) const {
    double v = 0.0;
    for (std::size_t k = first_near(t); k < beats_.size() && beats_[k].r < t + 2.0; ++k) {
      const auto& b = beats_[k];
      v += b.amp_sys * gaussian(t, b.mu_sys, b.sigma_sys) + b.amp_dia * gaussian(t, b.mu_dia, b.sigma_dia);
    }
    return v;
  }

  double slope(double t) const {
    double v = 0.0;
    for (std::size_t k = first_near(t); k < beats_.size() && beats_[k].r < t + 2.0; ++k) {
      const auto& b = beats_[k];
      v -= b.amp_sys * gaussian(t, b.mu_sys, b.sigma_sys) * (t - b.mu_sys) / (b.sigma_sys * b.sigma_sys);
      v -= b.amp_dia * gaussian(t, b.mu_dia, b.sigma_dia) * (t - b.mu_dia) / (b.sigma_dia * b.sigma_dia);
    }
    return v;
  }

  const std::vector<PulseBeat>& beats() const { return beats_; }

 private:
  std::size_t first_near(double t) const {
    auto it = std::lower_bound(beats_.begin(), beats_.end(), t - 2.0,
                               [](const PulseBeat& b, double x) { return b.r < x; });
    return static_cast<std::size_t>(it - beats_.begin());
  }
  std::vector<PulseBeat> beats_;
};

constexpr double kFineStep = 1e-5;
constexpr double kCoarseStep = 2e-4;

/// Grid search at kCoarseStep, then a 1e-6 refinement around the winner.
template <class Score>
double grid_argmax(double lo, double hi, Score score) {
  double best_t = lo, best = score(lo);
  for (double t = lo; t <= hi; t += kCoarseStep) {
    const double v = score(t);
    if (v > best) {
      best = v;
      best_t = t;
    }
  }
  const double a = std::max(lo, best_t - 2.0 * kCoarseStep);
  const double b = std::min(hi, best_t + 2.0 * kCoarseStep);
  for (double t = a; t <= b; t += 1e-6) {
    const double v = score(t);
    if (v > best) {
      best = v;
      best_t = t;
    }
  }
  return best_t;
}

double argmax_slope(const PulseTrain& p, double lo, double hi) {
  return grid_argmax(lo, hi - 1e-6, [&](double t) { return p.slope(t); });
}

double argmin_value(const PulseTrain& p, double lo, double hi) {
  return grid_argmax(lo, hi, [&](double t) { return -p.value(t); });
}

/// Walks forward from `t` while the value keeps moving in `direction`
/// (+1 rising, -1 falling) and returns the turning point.
double next_turn(const PulseTrain& p, double t, int direction, double limit) {
  double prev = p.value(t);
  for (double x = t + kFineStep; x < limit; x += kFineStep) {
    const double v = p.value(x);
    if ((direction > 0 && v < prev) || (direction < 0 && v > prev)) return x - kFineStep;
    prev = v;
  }
  return limit;
}

/// Composite Simpson rule on (value - baseline).
double integrate_model(const PulseTrain& p, double lo, double hi, double baseline) {
  auto steps = static_cast<std::size_t>(std::ceil((hi - lo) / 1e-4));
  if (steps == 0) return 0.0;
  if (steps % 2 == 1) ++steps;
  const double h = (hi - lo) / static_cast<double>(steps);
  double sum = p.value(lo) + p.value(hi) - 2.0 * baseline;
  for (std::size_t i = 1; i < steps; ++i) {
    const double weight = i % 2 == 1 ? 4.0 : 2.0;
    sum += weight * (p.value(lo + h * static_cast<double>(i)) - baseline);
  }
  return sum * h / 3.0;
}

}  // namespace

std::vector<SessionSpec> default_sessions() {
  return {{"day1", 0.0}, {"day2", 1.0}, {"day4", 2.0}, {"month6", 4.0}};
}

void SynthConfig::validate() const {
  require(rho >= 0.0 && rho < 1.0, ErrorCode::InvalidArgument, "rho must lie in [0, 1)");
  require(history_factor >= 0.0 && history_factor < 1.0, ErrorCode::InvalidArgument,
          "history_factor must lie in [0, 1)");
  require(history_weight >= 0.0 && history_weight <= 1.0, ErrorCode::InvalidArgument,
          "history_weight must lie in [0, 1]");
  require(sigma_obs >= 0.0, ErrorCode::InvalidArgument, "sigma_obs must be non-negative");
  require(latent_dim >= 1, ErrorCode::InvalidArgument, "latent_dim must be at least 1");
  require(num_subjects >= 1 && !sessions.empty() && samples_per_session >= 1, ErrorCode::InvalidArgument,
          "need at least one subject, session and sample");
  require(dbp_range[0] > 0.0 && dbp_range[0] < dbp_range[1] && sbp_range[0] < sbp_range[1] &&
              dbp_range[1] + 10.0 <= sbp_range[1],
          ErrorCode::InvalidArgument, "BP ranges must be positive, ordered and leave room for a 10 mmHg pulse");
}

SyntheticRecording generate_sequence(const SynthConfig& config, std::size_t length, double drift,
                                     std::uint64_t stream) {
  config.validate();
  CounterRng rng(config.seed, stream);
  LatentProcess process(config, rng);
  const auto d = static_cast<Eigen::Index>(config.latent_dim);
  const auto n = static_cast<Eigen::Index>(length);
  const double scaled_drift = drift * config.drift_magnitude;

  SyntheticRecording out;
  out.latent.resize(n, d);
  out.history.resize(n, d);
  auto& rec = out.recording;
  rec.features.values.resize(n, kNumFeatures);
  rec.bp.resize(n, kNumOutputs);
  double t = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    process.step();
    auto f = clean_features(process);
    for (auto& v : f) v += config.sigma_obs * rng.normal();
    const auto phys = to_physiological(f);
    const auto bp = beat_bp(process, scaled_drift, config);
    for (std::size_t j = 0; j < kNumFeatures; ++j) rec.features.values(i, static_cast<Eigen::Index>(j)) = phys[j];
    for (Eigen::Index c = 0; c < kNumOutputs; ++c) rec.bp(i, c) = bp[static_cast<std::size_t>(c)];
    for (Eigen::Index k = 0; k < d; ++k) {
      out.latent(i, k) = process.latent(static_cast<std::size_t>(k));
      out.history(i, k) = process.history(static_cast<std::size_t>(k));
    }
    rec.features.times.push_back(t);
    t += 60.0 / phys[1];
  }
  return out;
}

FeatureCohort generate_feature_cohort(const SynthConfig& config) {
  config.validate();
  FeatureCohort cohort;
  cohort.config = config;
  for (std::size_t i = 0; i < config.num_subjects; ++i) {
    for (std::size_t j = 0; j < config.sessions.size(); ++j) {
      auto rec = generate_sequence(config, config.samples_per_session, config.sessions[j].drift,
                                   stream_id({kCohortStream, i, j}));
      rec.recording.features.subject_id = subject_name(i, config.num_subjects);
      rec.recording.features.session_label = config.sessions[j].label;
      cohort.recordings.push_back(std::move(rec));
    }
  }
  return cohort;
}

std::vector<Recording> cohort_recordings(const FeatureCohort& cohort, const std::vector<std::string>& sessions) {
  std::vector<Recording> out;
  for (const auto& r : cohort.recordings) {
    const auto& label = r.recording.features.session_label;
    if (sessions.empty() || std::find(sessions.begin(), sessions.end(), label) != sessions.end())
      out.push_back(r.recording);
  }
  return out;
}

Matrix quadratic_basis(const Matrix& x) {
  const Eigen::Index n = x.rows(), f = x.cols();
  Matrix out(n, 1 + f + f * (f + 1) / 2);
  out.col(0).setOnes();
  out.middleCols(1, f) = x;
  Eigen::Index c = 1 + f;
  for (Eigen::Index a = 0; a < f; ++a)
    for (Eigen::Index b = a; b < f; ++b) out.col(c++) = x.col(a).cwiseProduct(x.col(b));
  return out;
}

OracleReport memoryless_oracle(const SynthConfig& config, std::size_t samples, double fit_drift, double eval_drift) {
  require(samples >= 100, ErrorCode::InvalidArgument, "oracle needs at least 100 samples");
  const auto fit = generate_sequence(config, samples, fit_drift, stream_id({kOracleStream, 0}));
  const auto eval = generate_sequence(config, samples, eval_drift, stream_id({kOracleStream, 1}));

  // Standardize with fit statistics so the normal equations stay well scaled.
  const auto& fx = fit.recording.features.values;
  const Vector mean = fx.colwise().mean().transpose();
  Vector sd = ((fx.rowwise() - mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
  for (Eigen::Index j = 0; j < sd.size(); ++j)
    if (!(sd(j) > 0.0)) sd(j) = 1.0;
  auto standardize = [&](const Matrix& m) {
    return Matrix((m.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array());
  };
  const Matrix basis_fit = quadratic_basis(standardize(fx));
  const Matrix basis_eval = quadratic_basis(standardize(eval.recording.features.values));
  Matrix gram = basis_fit.transpose() * basis_fit;
  gram += 1e-9 * Matrix::Identity(gram.rows(), gram.cols());
  const Matrix coef = gram.ldlt().solve(basis_fit.transpose() * fit.recording.bp);
  const Matrix err = basis_eval * coef - eval.recording.bp;

  OracleReport report;
  report.fit_samples = samples;
  report.eval_samples = samples;
  double total = 0.0;
  for (Eigen::Index c = 0; c < kNumOutputs; ++c) {
    const double mse = err.col(c).squaredNorm() / static_cast<double>(samples);
    report.rmse[static_cast<std::size_t>(c)] = std::sqrt(mse);
    total += mse;
  }
  report.pooled_rmse = std::sqrt(total / 3.0);
  return report;
}

std::vector<SyntheticWaveform> generate_waveform_cohort(const SynthConfig& config, const WaveformConfig& wave) {
  config.validate();
  require(wave.sample_rate >= 100.0, ErrorCode::InvalidArgument, "sample_rate must be at least 100 Hz");
  require(wave.beats_per_record >= 4, ErrorCode::InvalidArgument, "need at least 4 beats per record");
  require(wave.base_hr >= 60.0 && wave.base_hr <= 90.0, ErrorCode::InvalidArgument,
          "base_hr must lie in [60, 90]");
  require(wave.variability >= 0.0 && wave.ecg_noise >= 0.0, ErrorCode::InvalidArgument,
          "variability and noise must be non-negative");

  std::vector<SyntheticWaveform> out;
  const double v = wave.variability;
  for (std::size_t i = 0; i < config.num_subjects; ++i) {
    for (std::size_t j = 0; j < config.sessions.size(); ++j) {
      CounterRng rng(config.seed, stream_id({kWaveStream, i, j}));
      LatentProcess process(config, rng);
      const double drift = config.sessions[j].drift * config.drift_magnitude;

      // One extra beat closes the last complete beat.
      const std::size_t nbeats = wave.beats_per_record + 1;
      std::vector<PulseBeat> beats;
      std::vector<std::array<double, 3>> bp;
      double r = 0.6;
      for (std::size_t k = 0; k < nbeats; ++k) {
        process.step();
        const double s0 = process.latent(0), s1 = process.latent(1);
        const double hr = std::clamp(wave.base_hr + 5.0 * v * (0.5 * s0 - 0.7 * s1), 60.0, 90.0);
        const double ptt = std::clamp(0.25 - 0.015 * v * (0.9 * s0 + 0.3 * s1), 0.18, 0.32);
        PulseBeat b;
        b.r = r;
        b.sigma_sys = std::clamp(0.045 + 0.004 * v * (0.3 * s0 + 0.8 * s1), 0.035, 0.055);
        b.amp_sys = std::clamp(1.0 + 0.1 * v * (0.3 * s0 + 0.2 * s1), 0.6, 1.4);
        b.mu_sys = r + ptt + b.sigma_sys;
        b.amp_dia = b.amp_sys * std::clamp(0.55 + 0.06 * v * (-0.4 * s0 + 0.6 * s1), 0.35, 0.75);
        b.mu_dia = b.mu_sys + std::clamp(0.26 + 0.015 * v * (0.7 * s0 - 0.2 * s1), 0.22, 0.30);
        beats.push_back(b);
        bp.push_back(beat_bp(process, drift, config));
        r += 60.0 / hr;
      }
      const double duration = beats.back().r + 0.45;
      PulseTrain train(beats);

      SyntheticWaveform sw;
      auto& rec = sw.record;
      rec.sample_rate = wave.sample_rate;
      rec.subject_id = subject_name(i, config.num_subjects);
      rec.session_label = config.sessions[j].label;
      const auto n = static_cast<std::size_t>(std::floor(duration * wave.sample_rate));
      rec.ecg.resize(n);
      rec.ppg.resize(n);
      for (std::size_t s = 0; s < n; ++s) {
        const double t = static_cast<double>(s) / wave.sample_rate;
        double e = 0.0;
        for (const auto& b : beats) {
          if (std::abs(t - b.r) > 1.0) continue;
          e += gaussian(t, b.r, 0.008) + 0.25 * gaussian(t, b.r + 0.28, 0.04);
        }
        rec.ecg[s] = e;
        rec.ppg[s] = train.value(t);
      }
      if (wave.ecg_noise > 0.0) {
        CounterRng noise(config.seed, stream_id({kWaveStream, i, j, 1}));
        for (auto& e : rec.ecg) e += wave.ecg_noise * noise.normal();
      }

      // Ground truth from the continuous model on a fine grid.
      std::vector<double> upstroke(nbeats);
      for (std::size_t k = 0; k + 1 < nbeats; ++k) upstroke[k] = argmax_slope(train, beats[k].r, beats[k + 1].r);
      std::vector<double> foot(nbeats, 0.0);
      for (std::size_t k = 1; k + 1 < nbeats; ++k) foot[k] = argmin_value(train, upstroke[k - 1], upstroke[k]);
      for (std::size_t k = 1; k + 2 < nbeats; ++k) {
        BeatTruth truth;
        auto& fid = truth.fiducials;
        fid.r_peak_t = beats[k].r;
        fid.max_slope_t = upstroke[k];
        fid.tf = foot[k];
        fid.next_tf = foot[k + 1];
        fid.tp = next_turn(train, upstroke[k], +1, fid.next_tf);
        fid.tn = next_turn(train, fid.tp, -1, fid.next_tf);
        const double tb = next_turn(train, fid.tn, +1, fid.next_tf);
        fid.foot_level = train.value(fid.tf);
        fid.a = train.value(fid.tp) - fid.foot_level;
        fid.b = train.value(tb) - fid.foot_level;
        fid.rr_interval = beats[k + 1].r - beats[k].r;

        auto& f = truth.features;
        f.ptt_s = fid.max_slope_t - fid.r_peak_t;
        f.hr = 60.0 / fid.rr_interval;
        f.ri = fid.b / fid.a;
        f.st = fid.tn - fid.tf;
        f.up_time = fid.tp - fid.tf;
        f.sv = integrate_model(train, fid.tf, fid.tn, fid.foot_level);
        f.dv = integrate_model(train, fid.tn, fid.next_tf, fid.foot_level);
        sw.beats.push_back(truth);
      }
      sw.bp.resize(static_cast<Eigen::Index>(sw.beats.size()), kNumOutputs);
      for (std::size_t k = 0; k < sw.beats.size(); ++k)
        for (Eigen::Index c = 0; c < kNumOutputs; ++c)
          sw.bp(static_cast<Eigen::Index>(k), c) = bp[k + 1][static_cast<std::size_t>(c)];
      out.push_back(std::move(sw));
    }
  }
  return out;
}

}  // namespace seqpress
