// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "seqpress/rnn.hpp"

namespace seqpress {

struct BackwardResult {
  Gradients grads;
  /// dL/dx^i for every residual-stream level (T x hidden), same indexing as
  /// ForwardCache::stream.
  std::vector<Matrix> dloss_dstream;
};

/// Reverse-mode differentiation of the network output. `dloss_dz` is T x 3.
/// The L2 term is not included; see add_l2_gradient.
BackwardResult deeprnn_backward(const NetworkParams& net, const ForwardCache& cache, const Matrix& dloss_dz);

/// Backpropagates dL/dh (hidden x T) through one layer, accumulating into
/// `grad`; returns dL/dx (input x T).
Matrix lstm_layer_backward(const LstmParams& params, const LstmCache& cache, const Matrix& dh, LstmParams& grad);

/// grads += 2 * lambda * theta on weight tensors.
void add_l2_gradient(const NetworkParams& net, double lambda, Gradients& grads);

/// A differentiable per-sequence loss on the T x 3 output.
struct SequenceLoss {
  std::function<double(const Matrix& z)> value;
  std::function<Matrix(const Matrix& z)> gradient;
};

/// sum_t sum_c mask_c (z_tc - y_tc)^2.
SequenceLoss squared_error_loss(Matrix target, std::array<double, 3> channel_mask = {1.0, 1.0, 1.0});

double objective(const NetworkParams& net, const Matrix& x_seq, const SequenceLoss& loss, double lambda);
Gradients objective_gradient(const NetworkParams& net, const Matrix& x_seq, const SequenceLoss& loss,
                             double lambda);

struct Coordinate {
  std::size_t tensor = 0;
  std::size_t index = 0;
  std::string name;
};

/// Deterministic coordinate subsample: ceil(min_count / tensors) coordinates
/// from every tensor (all of them when the tensor is smaller), topped up from
/// the remaining coordinates to min_count total when the network has that many.
std::vector<Coordinate> sample_coordinates(const NetworkParams& net, std::size_t min_count, std::uint64_t seed);

struct CoordinateCheck {
  Coordinate coordinate;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  CoordinateCheck worst;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  std::size_t coordinates_checked = 0;
  /// Coordinates whose relative error exceeds the flag threshold.
  std::vector<CoordinateCheck> flagged;
};

inline constexpr double kGradCheckFlagThreshold = 1e-5;

/// |a - b| / max(|a|, |b|, 1e-8).
double relative_error(double a, double b);

/// Central differences (L(theta + eps) - L(theta - eps)) / 2 eps at `coords`
/// compared with `analytic`.
GradCheckReport compare_gradients(const NetworkParams& net, const Matrix& x_seq, const SequenceLoss& loss,
                                  double lambda, const Gradients& analytic, double epsilon,
                                  const std::vector<Coordinate>& coords, std::uint64_t seed = 0);

/// Squared-error + L2 objective checked on >= min_coords sampled coordinates.
GradCheckReport finite_difference_check(const NetworkParams& net, const Matrix& x_seq, const Matrix& y_seq,
                                        double lambda, double epsilon, std::uint64_t seed = 0,
                                        std::size_t min_coords = 200);

struct ResidualDecompositionReport {
  std::size_t levels = 0;
  std::size_t pairs_checked = 0;
  /// max |x^L - (x^l + sum_{i=l}^{L-1} h^i)| over all pairs and entries.
  double max_telescoping_error = 0.0;
  /// With stacked blocks zeroed: whether dL/dx^l == dL/dx^L bitwise for every l.
  bool direct_path_exact = false;
  double direct_path_max_abs_diff = 0.0;
  /// Random blocks: dL/dx^l - dL/dx^L against a finite-difference
  /// vector-Jacobian product of sum_i h^i, max relative error.
  double through_weights_max_rel_err = 0.0;
};

/// Requires at least two stacked residual blocks.
ResidualDecompositionReport residual_gradient_decomposition_check(const NetworkParams& net, const Matrix& x_seq,
                                                                  const Matrix& y_seq, double epsilon = 1e-6);

}  // namespace seqpress
