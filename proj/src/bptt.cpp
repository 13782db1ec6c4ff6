// SPDX-License-Identifier: Apache-2.0
#include "seqpress/bptt.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "seqpress/error.hpp"
#include "seqpress/rng.hpp"

namespace seqpress {

Matrix lstm_layer_backward(const LstmParams& p, const LstmCache& cache, const Matrix& dh, LstmParams& grad) {
  const auto hsize = p.hidden_size();
  const auto steps = cache.steps();
  if (dh.rows() != hsize || dh.cols() != steps)
    fail(ErrorCode::CacheMismatch, "upstream gradient shape does not match layer cache");

  Matrix da_f(hsize, steps), da_i(hsize, steps), da_o(hsize, steps), da_g(hsize, steps);
  Vector dh_next = Vector::Zero(hsize);
  Vector dc_next = Vector::Zero(hsize);
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    const auto f = cache.f.col(t).array();
    const auto i = cache.i.col(t).array();
    const auto o = cache.o.col(t).array();
    const auto g = cache.g.col(t).array();
    const auto tc = cache.tanh_c.col(t).array();
    const Vector dh_t = dh.col(t) + dh_next;
    const auto dht = dh_t.array();

    da_o.col(t) = (dht * tc * o * (1.0 - o)).matrix();
    const Vector dc = (dc_next.array() + dht * o * (1.0 - tc.square())).matrix();
    if (t > 0) {
      da_f.col(t) = (dc.array() * cache.c.col(t - 1).array() * f * (1.0 - f)).matrix();
    } else {
      da_f.col(t).setZero();
    }
    da_i.col(t) = (dc.array() * g * i * (1.0 - i)).matrix();
    da_g.col(t) = (dc.array() * i * (1.0 - g.square())).matrix();
    dc_next = (dc.array() * f).matrix();
    dh_next = p.w_hf.transpose() * da_f.col(t) + p.w_hi.transpose() * da_i.col(t) +
              p.w_ho.transpose() * da_o.col(t) + p.w_hc.transpose() * da_g.col(t);
  }

  const Matrix& x = cache.x;
  grad.w_xf.noalias() += da_f * x.transpose();
  grad.w_xi.noalias() += da_i * x.transpose();
  grad.w_xo.noalias() += da_o * x.transpose();
  grad.w_xc.noalias() += da_g * x.transpose();
  if (steps > 1) {
    const auto h_prev = cache.h.leftCols(steps - 1);
    grad.w_hf.noalias() += da_f.rightCols(steps - 1) * h_prev.transpose();
    grad.w_hi.noalias() += da_i.rightCols(steps - 1) * h_prev.transpose();
    grad.w_ho.noalias() += da_o.rightCols(steps - 1) * h_prev.transpose();
    grad.w_hc.noalias() += da_g.rightCols(steps - 1) * h_prev.transpose();
  }
  grad.b_f += da_f.rowwise().sum();
  grad.b_i += da_i.rowwise().sum();
  grad.b_o += da_o.rowwise().sum();
  grad.b_c += da_g.rowwise().sum();

  Matrix dx = p.w_xf.transpose() * da_f;
  dx.noalias() += p.w_xi.transpose() * da_i;
  dx.noalias() += p.w_xo.transpose() * da_o;
  dx.noalias() += p.w_xc.transpose() * da_g;
  return dx;
}

BackwardResult deeprnn_backward(const NetworkParams& net, const ForwardCache& cache, const Matrix& dloss_dz) {
  const auto steps = cache.steps();
  const std::size_t blocks = net.stack.size();
  const auto hsize = static_cast<Eigen::Index>(net.config.hidden_size);
  if (cache.blocks.size() != blocks || cache.stream.size() != std::max<std::size_t>(blocks, 1) ||
      cache.z.cols() != steps || cache.input.rows() != static_cast<Eigen::Index>(net.config.input_size) ||
      cache.stream[0].rows() != hsize || cache.bilstm.bidirectional != net.config.bidirectional)
    fail(ErrorCode::CacheMismatch, "forward cache was not produced by this network");
  if (dloss_dz.rows() != steps || dloss_dz.cols() != kNumOutputs)
    fail(ErrorCode::ShapeMismatch, "dloss_dz must be T x 3");

  BackwardResult out;
  out.grads = Gradients::zeros(net.config);
  Gradients& g = out.grads;

  // Output head.
  const Matrix dpre = (dloss_dz.transpose().array() * cache.z.array() * (1.0 - cache.z.array())).matrix();
  const Matrix& top_hidden = blocks > 0 ? cache.blocks.back().h : cache.stream[0];
  g.head.w_hz.noalias() += dpre * top_hidden.transpose();
  g.head.b_z += dpre.rowwise().sum();
  Matrix d_top_hidden = net.head.w_hz.transpose() * dpre;

  out.dloss_dstream.assign(cache.stream.size(), Matrix());
  Matrix d_stream;  // hidden x T gradient at the current stream level
  if (blocks == 0) {
    d_stream = d_top_hidden;
  } else {
    g.head.w_xz.noalias() += dpre * cache.stream.back().transpose();
    d_stream = net.head.w_xz.transpose() * dpre;
    d_stream += lstm_layer_backward(net.stack[blocks - 1], cache.blocks[blocks - 1], d_top_hidden,
                                    g.stack[blocks - 1]);
    for (std::size_t k = blocks - 1; k-- > 0;) {
      // stream[k+1] = h^{k} (+ stream[k]); the block's hidden output carries d_stream.
      out.dloss_dstream[k + 1] = d_stream.transpose();
      Matrix through = lstm_layer_backward(net.stack[k], cache.blocks[k], d_stream, g.stack[k]);
      if (net.config.residual) {
        d_stream += through;
      } else {
        d_stream = std::move(through);
      }
    }
  }
  out.dloss_dstream[0] = d_stream.transpose();

  // Bidirectional merge and both directions.
  const auto& bc = cache.bilstm;
  g.bilstm.w_f_merge.noalias() += d_stream * bc.fwd.h.transpose();
  g.bilstm.b_h += d_stream.rowwise().sum();
  Matrix dhf = net.bilstm.w_f_merge.transpose() * d_stream;
  lstm_layer_backward(net.bilstm.fwd, bc.fwd, dhf, g.bilstm.fwd);
  if (bc.bidirectional) {
    const Matrix hb_aligned = bc.bwd.h.rowwise().reverse();
    g.bilstm.w_b_merge.noalias() += d_stream * hb_aligned.transpose();
    Matrix dhb_reversed = (net.bilstm.w_b_merge.transpose() * d_stream).rowwise().reverse();
    lstm_layer_backward(net.bilstm.bwd, bc.bwd, dhb_reversed, g.bilstm.bwd);
  }
  return out;
}

void add_l2_gradient(const NetworkParams& net, double lambda, Gradients& grads) {
  if (lambda == 0.0) return;
  auto src = net.tensors();
  auto dst = grads.tensors();
  for (std::size_t k = 0; k < src.size(); ++k) {
    if (!src[k].is_weight) continue;
    for (std::size_t i = 0; i < src[k].data.size(); ++i) dst[k].data[i] += 2.0 * lambda * src[k].data[i];
  }
}

SequenceLoss squared_error_loss(Matrix target, std::array<double, 3> mask) {
  const Eigen::RowVector3d m(mask[0], mask[1], mask[2]);
  SequenceLoss loss;
  loss.value = [target, m](const Matrix& z) {
    require(z.rows() == target.rows() && z.cols() == target.cols(), ErrorCode::ShapeMismatch,
            "prediction and target shapes differ");
    return ((z - target).array().square().rowwise() * m.array()).sum();
  };
  loss.gradient = [target, m](const Matrix& z) {
    require(z.rows() == target.rows() && z.cols() == target.cols(), ErrorCode::ShapeMismatch,
            "prediction and target shapes differ");
    return Matrix((2.0 * (z - target)).array().rowwise() * m.array());
  };
  return loss;
}

double objective(const NetworkParams& net, const Matrix& x_seq, const SequenceLoss& loss, double lambda) {
  auto fwd = deeprnn_forward(net, x_seq, false);
  double value = loss.value(fwd.z);
  if (lambda != 0.0) value += lambda * net.weight_norm_sq();
  return value;
}

Gradients objective_gradient(const NetworkParams& net, const Matrix& x_seq, const SequenceLoss& loss,
                             double lambda) {
  auto fwd = deeprnn_forward(net, x_seq, true);
  auto back = deeprnn_backward(net, *fwd.cache, loss.gradient(fwd.z));
  add_l2_gradient(net, lambda, back.grads);
  return std::move(back.grads);
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

std::vector<Coordinate> sample_coordinates(const NetworkParams& net, std::size_t min_count, std::uint64_t seed) {
  const auto views = net.tensors();
  const std::size_t per_tensor = (min_count + views.size() - 1) / views.size();
  CounterRng rng(seed, stream_id({0x6C8, 0}));
  std::vector<std::pair<std::size_t, std::size_t>> picked, spare;
  for (std::size_t k = 0; k < views.size(); ++k) {
    const std::size_t size = views[k].data.size();
    std::vector<std::size_t> idx(size);
    for (std::size_t i = 0; i < size; ++i) idx[i] = i;
    shuffle(idx, rng);
    const std::size_t take = std::min(size, per_tensor);
    for (std::size_t j = 0; j < size; ++j) (j < take ? picked : spare).push_back({k, idx[j]});
  }
  // Tensors smaller than the quota leave a shortfall; fill it from the rest.
  if (picked.size() < min_count) {
    shuffle(spare, rng);
    const std::size_t extra = std::min(spare.size(), min_count - picked.size());
    picked.insert(picked.end(), spare.begin(), spare.begin() + static_cast<std::ptrdiff_t>(extra));
  }
  std::sort(picked.begin(), picked.end());
  std::vector<Coordinate> coords;
  coords.reserve(picked.size());
  for (auto [k, i] : picked) coords.push_back({k, i, views[k].name + "[" + std::to_string(i) + "]"});
  return coords;
}

namespace {

using ExtMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using ExtVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

ExtVector ext_sigmoid(const ExtVector& v) {
  return v.unaryExpr([](long double a) { return 1.0L / (1.0L + std::exp(-a)); });
}
ExtVector ext_tanh(const ExtVector& v) {
  return v.unaryExpr([](long double a) { return std::tanh(a); });
}

/// One LSTM layer over hidden x T columns in extended precision.
ExtMatrix ext_layer(const LstmParams& p, const ExtMatrix& x) {
  const Matrix* wx[4] = {&p.w_xf, &p.w_xi, &p.w_xo, &p.w_xc};
  const Matrix* wh[4] = {&p.w_hf, &p.w_hi, &p.w_ho, &p.w_hc};
  const Vector* b[4] = {&p.b_f, &p.b_i, &p.b_o, &p.b_c};
  ExtMatrix ewx[4], ewh[4];
  ExtVector eb[4];
  for (int k = 0; k < 4; ++k) {
    ewx[k] = wx[k]->cast<long double>();
    ewh[k] = wh[k]->cast<long double>();
    eb[k] = b[k]->cast<long double>();
  }
  const Eigen::Index hidden = p.hidden_size();
  ExtVector h = ExtVector::Zero(hidden), c = ExtVector::Zero(hidden);
  ExtMatrix out(hidden, x.cols());
  for (Eigen::Index t = 0; t < x.cols(); ++t) {
    auto pre = [&](int k) { return ExtVector(ewx[k] * x.col(t) + ewh[k] * h + eb[k]); };
    const ExtVector f = ext_sigmoid(pre(0)), i = ext_sigmoid(pre(1)), o = ext_sigmoid(pre(2));
    const ExtVector g = ext_tanh(pre(3));
    c = f.cwiseProduct(c) + i.cwiseProduct(g);
    h = o.cwiseProduct(ext_tanh(c));
    out.col(t) = h;
  }
  return out;
}

/// Squared-error + L2 objective with every intermediate in long double. The
/// finite-difference oracle uses it so that rounding in the two loss
/// evaluations stays far below the step-size truncation error.
long double extended_objective(const NetworkParams& net, const Matrix& x_seq, const Matrix& y_seq, double lambda) {
  const ExtMatrix x = x_seq.transpose().cast<long double>();
  const ExtMatrix fwd = ext_layer(net.bilstm.fwd, x);
  ExtMatrix level = net.bilstm.w_f_merge.cast<long double>() * fwd;
  if (net.config.bidirectional) {
    const ExtMatrix bwd = ext_layer(net.bilstm.bwd, x.rowwise().reverse()).rowwise().reverse();
    level += net.bilstm.w_b_merge.cast<long double>() * bwd;
  }
  level.colwise() += net.bilstm.b_h.cast<long double>();

  ExtMatrix top = level;
  for (std::size_t k = 0; k < net.stack.size(); ++k) {
    top = ext_layer(net.stack[k], level);
    if (k + 1 < net.stack.size()) level = net.config.residual ? ExtMatrix(top + level) : top;
  }
  ExtMatrix pre = net.head.w_hz.cast<long double>() * top;
  if (!net.stack.empty()) pre += net.head.w_xz.cast<long double>() * level;
  pre.colwise() += net.head.b_z.cast<long double>();

  long double value = 0.0L;
  for (Eigen::Index t = 0; t < pre.cols(); ++t)
    for (Eigen::Index c = 0; c < pre.rows(); ++c) {
      const long double z = 1.0L / (1.0L + std::exp(-pre(c, t)));
      const long double d = z - static_cast<long double>(y_seq(t, c));
      value += d * d;
    }
  if (lambda != 0.0) {
    long double sq = 0.0L;
    for (const auto& v : net.tensors())
      if (v.is_weight)
        for (double w : v.data) sq += static_cast<long double>(w) * w;
    value += static_cast<long double>(lambda) * sq;
  }
  return value;
}

using ObjectiveFn = std::function<long double(const NetworkParams&)>;

GradCheckReport central_differences(const NetworkParams& net, const ObjectiveFn& evaluate, const Gradients& analytic,
                                    double epsilon, const std::vector<Coordinate>& coords, std::uint64_t seed) {
  require(epsilon >= 1e-7 && epsilon <= 1e-3, ErrorCode::InvalidArgument, "epsilon must lie in [1e-7, 1e-3]");
  NetworkParams probe = net;
  auto views = probe.tensors();
  const auto grad_views = analytic.tensors();
  require(grad_views.size() == views.size(), ErrorCode::ShapeMismatch, "gradient layout differs from network");

  GradCheckReport report;
  report.epsilon = epsilon;
  report.seed = seed;
  for (const auto& c : coords) {
    double& theta = views.at(c.tensor).data[c.index];
    const double saved = theta;
    theta = saved + epsilon;
    const double step_up = theta - saved;
    const long double up = evaluate(probe);
    theta = saved - epsilon;
    const double step_down = saved - theta;
    const long double down = evaluate(probe);
    theta = saved;

    // Divide by the step actually taken after rounding theta +- epsilon.
    const double numeric =
        static_cast<double>((up - down) / (static_cast<long double>(step_up) + static_cast<long double>(step_down)));
    CoordinateCheck check{c, grad_views[c.tensor].data[c.index], numeric, 0.0};
    check.rel_err = relative_error(check.analytic, check.numeric);
    if (report.coordinates_checked == 0 || check.rel_err > report.max_rel_err) {
      report.max_rel_err = check.rel_err;
      report.worst = check;
    }
    if (check.rel_err > kGradCheckFlagThreshold) report.flagged.push_back(check);
    ++report.coordinates_checked;
  }
  return report;
}

}  // namespace

GradCheckReport compare_gradients(const NetworkParams& net, const Matrix& x_seq, const SequenceLoss& loss,
                                  double lambda, const Gradients& analytic, double epsilon,
                                  const std::vector<Coordinate>& coords, std::uint64_t seed) {
  return central_differences(
      net, [&](const NetworkParams& p) { return static_cast<long double>(objective(p, x_seq, loss, lambda)); },
      analytic, epsilon, coords, seed);
}

GradCheckReport finite_difference_check(const NetworkParams& net, const Matrix& x_seq, const Matrix& y_seq,
                                        double lambda, double epsilon, std::uint64_t seed, std::size_t min_coords) {
  auto loss = squared_error_loss(y_seq);
  auto analytic = objective_gradient(net, x_seq, loss, lambda);
  auto coords = sample_coordinates(net, min_coords, seed);
  require(y_seq.rows() == x_seq.rows() && y_seq.cols() == kNumOutputs, ErrorCode::ShapeMismatch,
          "target must be T x 3");
  return central_differences(
      net, [&](const NetworkParams& p) { return extended_objective(p, x_seq, y_seq, lambda); }, analytic, epsilon,
      coords, seed);
}

namespace {

/// Pushes `level` (hidden x T) through stacked blocks [from, to) in extended
/// precision and returns the sum of their hidden outputs.
ExtMatrix residual_branch_sum(const NetworkParams& net, ExtMatrix level, std::size_t from, std::size_t to) {
  ExtMatrix sum = ExtMatrix::Zero(level.rows(), level.cols());
  for (std::size_t k = from; k < to; ++k) {
    ExtMatrix h = ext_layer(net.stack[k], level);
    sum += h;
    level = net.config.residual ? ExtMatrix(h + level) : h;
  }
  return sum;
}

}  // namespace

ResidualDecompositionReport residual_gradient_decomposition_check(const NetworkParams& net, const Matrix& x_seq,
                                                                  const Matrix& y_seq, double epsilon) {
  require(net.stack.size() >= 2, ErrorCode::InvalidArgument,
          "decomposition check needs at least two stacked residual blocks");
  require(net.config.residual, ErrorCode::InvalidArgument, "decomposition check needs residual connections");
  ResidualDecompositionReport report;
  const auto loss = squared_error_loss(y_seq);

  // Forward telescoping, including the level above the top block.
  auto fwd = deeprnn_forward(net, x_seq, true);
  const auto& cache = *fwd.cache;
  std::vector<Matrix> levels = cache.stream;
  levels.push_back(cache.blocks.back().h + cache.stream.back());
  report.levels = levels.size();
  for (std::size_t l = 0; l < levels.size(); ++l) {
    for (std::size_t top = l + 1; top < levels.size(); ++top) {
      Matrix sum = Matrix::Zero(levels[l].rows(), levels[l].cols());
      for (std::size_t i = l; i < top; ++i) sum += cache.blocks[i].h;
      double err = (levels[top] - (levels[l] + sum)).cwiseAbs().maxCoeff();
      report.max_telescoping_error = std::max(report.max_telescoping_error, err);
      ++report.pairs_checked;
    }
  }

  // Direct path: zero every stacked block so sum_i dH_i/dx vanishes.
  {
    NetworkParams zeroed = net;
    for (auto& layer : zeroed.stack) layer = LstmParams::zeros(layer.input_size(), layer.hidden_size());
    auto zf = deeprnn_forward(zeroed, x_seq, true);
    auto back = deeprnn_backward(zeroed, *zf.cache, loss.gradient(zf.z));
    const Matrix& top = back.dloss_dstream.back();
    report.direct_path_exact = true;
    for (const auto& d : back.dloss_dstream) {
      double diff = (d - top).cwiseAbs().maxCoeff();
      report.direct_path_max_abs_diff = std::max(report.direct_path_max_abs_diff, diff);
      if (!(d.array() == top.array()).all()) report.direct_path_exact = false;
    }
  }

  // Through-weights term against a finite-difference vector-Jacobian product.
  {
    auto back = deeprnn_backward(net, cache, loss.gradient(fwd.z));
    const std::size_t top = back.dloss_dstream.size() - 1;
    const Matrix& g_top = back.dloss_dstream[top];  // T x hidden
    for (std::size_t l = 0; l < top; ++l) {
      const Matrix analytic = back.dloss_dstream[l] - g_top;
      ExtMatrix level = cache.stream[l].cast<long double>();
      const ExtMatrix weight = g_top.transpose().cast<long double>();
      for (Eigen::Index t = 0; t < level.cols(); ++t) {
        for (Eigen::Index j = 0; j < level.rows(); ++j) {
          const long double saved = level(j, t);
          level(j, t) = saved + epsilon;
          const ExtMatrix up = residual_branch_sum(net, level, l, top);
          level(j, t) = saved - epsilon;
          const ExtMatrix down = residual_branch_sum(net, level, l, top);
          level(j, t) = saved;
          const double numeric =
              static_cast<double>((weight.array() * (up - down).array()).sum() / (2.0L * epsilon));
          report.through_weights_max_rel_err =
              std::max(report.through_weights_max_rel_err, relative_error(analytic(t, j), numeric));
        }
      }
    }
  }
  return report;
}

}  // namespace seqpress
