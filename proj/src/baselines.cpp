// SPDX-License-Identifier: Apache-2.0
#include "seqpress/baselines.hpp"

#include <cmath>
#include <limits>

#include "seqpress/error.hpp"

namespace seqpress {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

bool valid_ptt(double p) { return std::isfinite(p) && p > 0.0; }

/// Indices of beats usable for calibration.
std::vector<std::size_t> calibration_beats(std::span<const double> ptt, std::initializer_list<std::span<const double>> bp,
                                           RejectedBeats* rejected) {
  for (const auto& b : bp)
    require(b.size() == ptt.size(), ErrorCode::LengthMismatch, "PTT and BP series have different lengths");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ptt.size(); ++i) {
    bool ok = valid_ptt(ptt[i]);
    for (const auto& b : bp) ok = ok && std::isfinite(b[i]);
    if (ok) {
      keep.push_back(i);
    } else if (rejected) {
      rejected->indices.push_back(i);
    }
  }
  if (keep.size() < kMinCalibrationBeats)
    fail(ErrorCode::InsufficientCalibration, "calibration window has " + std::to_string(keep.size()) +
                                                 " valid beats, need at least " +
                                                 std::to_string(kMinCalibrationBeats));
  return keep;
}

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
};

/// Least-squares y = intercept + slope u. Returns nullopt when u has no spread.
std::optional<LineFit> fit_line(const std::vector<double>& u, const std::vector<double>& y) {
  const double n = static_cast<double>(u.size());
  double mu = 0.0, my = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    mu += u[i];
    my += y[i];
  }
  mu /= n;
  my /= n;
  double suu = 0.0, suy = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    suu += (u[i] - mu) * (u[i] - mu);
    suy += (u[i] - mu) * (y[i] - my);
    scale = std::max(scale, std::abs(u[i]));
  }
  if (!(suu > 1e-24 * n * std::max(scale * scale, 1e-300))) return std::nullopt;
  const double slope = suy / suu;
  return LineFit{my - slope * mu, slope};
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

Matrix with_ones(const Matrix& x) {
  Matrix out(x.rows(), x.cols() + 1);
  out << x, Vector::Ones(x.rows());
  return out;
}

/// Population covariance of residual rows, plus jitter.
Matrix residual_cov(const Matrix& residuals) {
  const Matrix centered = residuals.rowwise() - residuals.colwise().mean();
  Matrix cov = centered.transpose() * centered / static_cast<double>(std::max<Eigen::Index>(residuals.rows(), 1));
  cov += kCovarianceJitter * Matrix::Identity(cov.rows(), cov.cols());
  return 0.5 * (cov + cov.transpose());
}

/// Least squares B minimizing ||design B - target||, via a jittered normal
/// equation when the design is rank deficient.
Matrix least_squares(const Matrix& design, const Matrix& target) {
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  if (qr.rank() == design.cols()) return qr.solve(target);
  Matrix gram = design.transpose() * design;
  gram += kCovarianceJitter * Matrix::Identity(gram.rows(), gram.cols());
  return gram.ldlt().solve(design.transpose() * target);
}

}  // namespace

PttChenModel ptt_chen_fit(std::span<const double> ptt, std::span<const double> sbp, RejectedBeats* rejected) {
  const auto keep = calibration_beats(ptt, {sbp}, rejected);
  std::vector<double> p, y;
  for (std::size_t i : keep) {
    p.push_back(ptt[i]);
    y.push_back(sbp[i]);
  }
  PttChenModel model;
  model.ptt_cal = mean_of(p);
  std::vector<double> u(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) u[i] = (model.ptt_cal - p[i]) / model.ptt_cal;
  auto line = fit_line(u, y);
  if (!line)
    fail(ErrorCode::InsufficientCalibration, "calibration PTT is constant; the PTT slope is indeterminate");
  model.sbp_cal = line->intercept;
  model.slope = line->slope;
  return model;
}

Vector ptt_chen_predict(const PttChenModel& model, std::span<const double> ptt, RejectedBeats* rejected) {
  require(valid_ptt(model.ptt_cal), ErrorCode::InvalidArgument, "calibration PTT must be positive");
  Vector out(static_cast<Eigen::Index>(ptt.size()));
  for (std::size_t i = 0; i < ptt.size(); ++i) {
    if (!valid_ptt(ptt[i])) {
      out(static_cast<Eigen::Index>(i)) = kNan;
      if (rejected) rejected->indices.push_back(i);
      continue;
    }
    out(static_cast<Eigen::Index>(i)) = model.sbp_cal + model.slope * (model.ptt_cal - ptt[i]) / model.ptt_cal;
  }
  return out;
}

PttPoonModel ptt_poon_fit(std::span<const double> ptt, std::span<const double> sbp, std::span<const double> dbp,
                          RejectedBeats* rejected) {
  const auto keep = calibration_beats(ptt, {sbp, dbp}, rejected);
  std::vector<double> u, ys, yd;
  for (std::size_t i : keep) {
    u.push_back(1.0 / (ptt[i] * ptt[i]));
    ys.push_back(sbp[i]);
    yd.push_back(dbp[i]);
  }
  PttPoonModel model;
  auto fs = fit_line(u, ys);
  auto fd = fit_line(u, yd);
  if (fs && fd) {
    model = {fs->intercept, fs->slope, fd->intercept, fd->slope};
  } else {
    model = {mean_of(ys), 0.0, mean_of(yd), 0.0};
  }
  return model;
}

Matrix ptt_poon_predict(const PttPoonModel& model, std::span<const double> ptt, RejectedBeats* rejected) {
  Matrix out(static_cast<Eigen::Index>(ptt.size()), 2);
  for (std::size_t i = 0; i < ptt.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (!valid_ptt(ptt[i])) {
      out.row(r).setConstant(kNan);
      if (rejected) rejected->indices.push_back(i);
      continue;
    }
    const double u = 1.0 / (ptt[i] * ptt[i]);
    out(r, 0) = model.sbp_intercept + model.sbp_slope * u;
    out(r, 1) = model.dbp_intercept + model.dbp_slope * u;
  }
  return out;
}

KalmanModel kalman_fit(const std::vector<Matrix>& features, const std::vector<Matrix>& bp) {
  require(features.size() == bp.size() && !features.empty(), ErrorCode::InsufficientData,
          "Kalman fit needs paired feature and BP sequences");
  const Eigen::Index nf = features.front().cols();
  Eigen::Index pairs = 0, rows = 0;
  for (std::size_t k = 0; k < bp.size(); ++k) {
    require(bp[k].cols() == kNumOutputs && features[k].cols() == nf, ErrorCode::ShapeMismatch,
            "Kalman fit: inconsistent column counts");
    require(bp[k].rows() == features[k].rows(), ErrorCode::LengthMismatch,
            "Kalman fit: features and BP have different lengths");
    rows += bp[k].rows();
    pairs += std::max<Eigen::Index>(bp[k].rows() - 1, 0);
  }
  require(pairs >= 1, ErrorCode::InsufficientData, "Kalman fit needs at least 2 consecutive timesteps");

  Matrix prev(pairs, kNumOutputs), next(pairs, kNumOutputs);
  Matrix states(rows, kNumOutputs), obs(rows, nf);
  Eigen::Index p = 0, r = 0;
  for (std::size_t k = 0; k < bp.size(); ++k) {
    const auto n = bp[k].rows();
    if (n > 1) {
      prev.middleRows(p, n - 1) = bp[k].topRows(n - 1);
      next.middleRows(p, n - 1) = bp[k].bottomRows(n - 1);
      p += n - 1;
    }
    states.middleRows(r, n) = bp[k];
    obs.middleRows(r, n) = features[k];
    r += n;
  }

  KalmanModel m;
  const Matrix dyn = least_squares(with_ones(prev), next);  // 4 x 3
  m.transition = dyn.topRows(kNumOutputs).transpose();
  m.transition_offset = dyn.row(kNumOutputs).transpose();
  m.process_cov = residual_cov(next - with_ones(prev) * dyn);

  const Matrix meas = least_squares(with_ones(states), obs);  // 4 x F
  m.observation = meas.topRows(kNumOutputs).transpose();
  m.observation_offset = meas.row(kNumOutputs).transpose();
  m.observation_cov = residual_cov(obs - with_ones(states) * meas);

  m.initial_mean = states.colwise().mean().transpose();
  m.initial_cov = residual_cov(states);
  return m;
}

KalmanTrace kalman_filter(const KalmanModel& m, const Matrix& features) {
  const Eigen::Index ns = m.transition.rows();
  const Eigen::Index nf = m.observation.rows();
  require(m.transition.cols() == ns && m.observation.cols() == ns && m.initial_mean.size() == ns &&
              m.process_cov.rows() == ns && m.observation_cov.rows() == nf && m.observation_offset.size() == nf,
          ErrorCode::ShapeMismatch, "Kalman model matrices are inconsistent");
  require(features.cols() == nf, ErrorCode::ShapeMismatch,
          "feature width " + std::to_string(features.cols()) + " does not match the observation model");

  KalmanTrace trace;
  trace.states.resize(features.rows(), ns);
  trace.min_eigenvalue = std::numeric_limits<double>::infinity();
  Vector s = m.initial_mean;
  Matrix cov = m.initial_cov;
  const Matrix eye = Matrix::Identity(ns, ns);

  for (Eigen::Index t = 0; t < features.rows(); ++t) {
    if (t > 0) {
      s = m.transition * s + m.transition_offset;
      cov = m.transition * cov * m.transition.transpose() + m.process_cov;
    }
    Matrix innovation_cov = m.observation * cov * m.observation.transpose() + m.observation_cov;
    innovation_cov = 0.5 * (innovation_cov + innovation_cov.transpose());
    Eigen::LDLT<Matrix> ldlt(innovation_cov);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0) {
      innovation_cov += kCovarianceJitter * Matrix::Identity(nf, nf);
      ldlt.compute(innovation_cov);
      if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0)
        fail(ErrorCode::SingularCovariance, "innovation covariance is singular at step " + std::to_string(t));
    }
    // gain = P C^T S^-1, computed as (S^-1 C P)^T since S and P are symmetric.
    const Matrix gain = ldlt.solve(m.observation * cov).transpose();
    const Vector residual = features.row(t).transpose() - m.observation * s - m.observation_offset;
    s += gain * residual;
    const Matrix joseph = eye - gain * m.observation;
    cov = joseph * cov * joseph.transpose() + gain * m.observation_cov * gain.transpose();
    trace.max_asymmetry = std::max(trace.max_asymmetry, (cov - cov.transpose()).cwiseAbs().maxCoeff());
    cov = 0.5 * (cov + cov.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov, Eigen::EigenvaluesOnly);
    trace.min_eigenvalue = std::min(trace.min_eigenvalue, eig.eigenvalues().minCoeff());
    trace.states.row(t) = s.transpose();
  }
  return trace;
}

Matrix kalman_predict(const KalmanModel& model, const Matrix& features) {
  return kalman_filter(model, features).states;
}

LinearModel linreg_fit(const Matrix& x, const Matrix& y, double alpha, bool fit_intercept) {
  require(alpha > 0.0, ErrorCode::InvalidArgument, "ridge alpha must be positive");
  require(x.rows() == y.rows(), ErrorCode::LengthMismatch, "feature and target row counts differ");
  const Eigen::Index coefficients = x.cols() + (fit_intercept ? 1 : 0);
  if (x.rows() < coefficients)
    fail(ErrorCode::InsufficientData, "ridge fit needs at least " + std::to_string(coefficients) + " rows, got " +
                                          std::to_string(x.rows()));
  LinearModel m;
  m.alpha = alpha;
  m.fit_intercept = fit_intercept;
  Vector x_mean = Vector::Zero(x.cols());
  Vector y_mean = Vector::Zero(y.cols());
  if (fit_intercept) {
    x_mean = x.colwise().mean().transpose();
    y_mean = y.colwise().mean().transpose();
  }
  const Matrix xc = x.rowwise() - x_mean.transpose();
  const Matrix yc = y.rowwise() - y_mean.transpose();
  Matrix gram = xc.transpose() * xc;
  gram += alpha * Matrix::Identity(x.cols(), x.cols());
  m.weights = gram.ldlt().solve(xc.transpose() * yc).transpose();
  m.intercept = y_mean - m.weights * x_mean;
  return m;
}

Matrix linreg_predict(const LinearModel& model, const Matrix& x) {
  require(x.cols() == model.weights.cols(), ErrorCode::ShapeMismatch, "feature width does not match the model");
  Matrix out = x * model.weights.transpose();
  out.rowwise() += model.intercept.transpose();
  return out;
}

}  // namespace seqpress
