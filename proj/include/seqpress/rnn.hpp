// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace seqpress {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// SBP, DBP, MBP.
inline constexpr Eigen::Index kNumOutputs = 3;
inline constexpr std::size_t kDefaultMaxLayers = 4;

/// Input-to-gate (hidden x input), hidden-to-gate (hidden x hidden) and bias
/// terms for the forget, input, output gates and the cell candidate.
struct LstmParams {
  Matrix w_xf, w_xi, w_xo, w_xc;
  Matrix w_hf, w_hi, w_ho, w_hc;
  Vector b_f, b_i, b_o, b_c;

  static LstmParams zeros(Eigen::Index input_size, Eigen::Index hidden_size);
  Eigen::Index input_size() const { return w_xf.cols(); }
  Eigen::Index hidden_size() const { return w_xf.rows(); }
  void validate() const;
};

/// Forward and backward directions plus the affine merge
/// h = W_f h^f + W_b h^b + b_h.
struct BiLstmParams {
  LstmParams fwd;
  LstmParams bwd;
  Matrix w_f_merge;
  Matrix w_b_merge;
  Vector b_h;

  static BiLstmParams zeros(Eigen::Index input_size, Eigen::Index hidden_size);
  void validate() const;
};

/// z = sigmoid(W_hz h + W_xz x + b_z) read from the top layer's hidden state
/// and its input.
struct OutputHeadParams {
  Matrix w_hz;
  Matrix w_xz;
  Vector b_z;

  static OutputHeadParams zeros(Eigen::Index hidden_size);
};

struct NetworkConfig {
  std::size_t input_size = 7;
  std::size_t hidden_size = 128;
  /// Total LSTM layers including the bidirectional one.
  std::size_t num_layers = 4;
  std::size_t seq_len = 32;
  /// false runs only the forward direction of the first layer (plain LSTM).
  bool bidirectional = true;
  /// false replaces x^{i+1} = h^i + x^i with x^{i+1} = h^i (ablation).
  bool residual = true;
  /// Permit num_layers above kDefaultMaxLayers.
  bool allow_deep = false;

  std::size_t stacked_blocks() const { return num_layers - 1; }
  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

/// Flat view of one parameter tensor (column-major storage).
struct TensorView {
  std::string name;
  bool is_weight;  // false for bias vectors
  Eigen::Index rows;
  Eigen::Index cols;
  std::span<double> data;
};

struct ConstTensorView {
  std::string name;
  bool is_weight;
  Eigen::Index rows;
  Eigen::Index cols;
  std::span<const double> data;
};

struct NetworkParams {
  NetworkConfig config;
  BiLstmParams bilstm;
  std::vector<LstmParams> stack;
  OutputHeadParams head;

  static NetworkParams zeros(const NetworkConfig& config);
  /// Matrices ~ U[-1/sqrt(hidden), 1/sqrt(hidden)], biases 0, forget biases 1.
  static NetworkParams initialize(const NetworkConfig& config, std::uint64_t seed);

  /// Fixed serialization order: bilstm.fwd (gates f,i,o,c; each w_x, w_h, b),
  /// bilstm.bwd, merge (w_f, w_b, b_h), stack layers in order, head (w_hz, w_xz, b_z).
  std::vector<TensorView> tensors();
  std::vector<ConstTensorView> tensors() const;
  std::size_t parameter_count() const;
  /// Sum of squares of all weight matrices (biases excluded).
  double weight_norm_sq() const;
  void set_zero();
  void validate() const;
};

/// Mirror of NetworkParams holding dL/dtheta.
using Gradients = NetworkParams;

struct HiddenState {
  Vector h;
  Vector c;

  static HiddenState zeros(Eigen::Index hidden_size);
};

struct GateRecord {
  Vector f, i, o;
  Vector candidate;
  Vector c;
};

struct CellOutput {
  HiddenState state;
  GateRecord gates;
};

CellOutput lstm_cell_forward(const LstmParams& params, const Vector& x_t, const HiddenState& prev);

/// Activations of one LSTM layer over a sequence, columns indexed by time.
struct LstmCache {
  Matrix x;  // input x T
  Matrix f, i, o, g, c, tanh_c, h;  // hidden x T

  Eigen::Index steps() const { return h.cols(); }
};

/// Runs a layer from a zero state. `x` is input x T (column per timestep).
LstmCache lstm_layer_forward(const LstmParams& params, const Matrix& x);

struct BiLstmCache {
  LstmCache fwd;
  LstmCache bwd;  // in reversed time order
  bool bidirectional = true;
};

/// `x_seq` is T x input; returns the merged T x hidden sequence.
Matrix bilstm_forward(const BiLstmParams& params, const Matrix& x_seq, bool bidirectional = true,
                      BiLstmCache* cache = nullptr);

struct ResidualBlockOutput {
  Matrix next;    // T x hidden: x^{i+1}
  Matrix hidden;  // T x hidden: h^i
  LstmCache cache;
};

ResidualBlockOutput residual_block_forward(const LstmParams& params, const Matrix& x_seq,
                                           std::size_t layer_index, bool residual = true);

struct ForwardCache {
  Matrix input;  // input_size x T
  BiLstmCache bilstm;
  /// Residual-stream levels, hidden x T. stream[0] is the bidirectional
  /// output; stream[k] = h^k + stream[k-1] for stacked block k. The head reads
  /// the top block's input stream[K-1] and its hidden state.
  std::vector<Matrix> stream;
  std::vector<LstmCache> blocks;
  Matrix z;  // 3 x T

  Eigen::Index steps() const { return input.cols(); }
};

struct ForwardResult {
  Matrix z;  // T x 3, entries in (0, 1)
  std::optional<ForwardCache> cache;
};

/// Full network; `training` retains the cache needed for backpropagation.
ForwardResult deeprnn_forward(const NetworkParams& net, const Matrix& x_seq, bool training = false);

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace seqpress
