// SPDX-License-Identifier: Apache-2.0
#include "seqpress/rnn.hpp"

#include <iostream>

#include "seqpress/error.hpp"
#include "seqpress/rng.hpp"

namespace seqpress {
namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void expect_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols)
    fail(ErrorCode::DimensionMismatch, std::string(what) + " is " + shape(m) + ", expected " +
                                           std::to_string(rows) + "x" + std::to_string(cols));
}

void expect_size(const Vector& v, Eigen::Index n, const char* what) {
  if (v.size() != n)
    fail(ErrorCode::DimensionMismatch,
         std::string(what) + " has " + std::to_string(v.size()) + " entries, expected " + std::to_string(n));
}

Vector sigmoid_vec(const Vector& a) { return (1.0 + (-a.array()).exp()).inverse().matrix(); }

/// One time step given precomputed input projections.
void cell_step(const LstmParams& p, const Eigen::Ref<const Vector>& xf, const Eigen::Ref<const Vector>& xi,
               const Eigen::Ref<const Vector>& xo, const Eigen::Ref<const Vector>& xc,
               const Eigen::Ref<const Vector>& h_prev, const Eigen::Ref<const Vector>& c_prev,
               Eigen::Ref<Vector> f, Eigen::Ref<Vector> i, Eigen::Ref<Vector> o, Eigen::Ref<Vector> g,
               Eigen::Ref<Vector> c, Eigen::Ref<Vector> tanh_c, Eigen::Ref<Vector> h) {
  Vector af = xf + p.w_hf * h_prev + p.b_f;
  Vector ai = xi + p.w_hi * h_prev + p.b_i;
  Vector ao = xo + p.w_ho * h_prev + p.b_o;
  Vector ac = xc + p.w_hc * h_prev + p.b_c;
  f = sigmoid_vec(af);
  i = sigmoid_vec(ai);
  o = sigmoid_vec(ao);
  g = ac.array().tanh().matrix();
  c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
  tanh_c = c.array().tanh().matrix();
  h = o.cwiseProduct(tanh_c);
}

void check_finite(const Matrix& m, const std::string& where) {
  if (m.allFinite()) return;
  for (Eigen::Index t = 0; t < m.cols(); ++t)
    if (!m.col(t).allFinite())
      fail(ErrorCode::NonFiniteActivation, where + " at timestep " + std::to_string(t));
}

void fill_uniform(Matrix& m, double bound, CounterRng& rng) {
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform(-bound, bound);
}

void fill_uniform(LstmParams& p, double bound, CounterRng& rng) {
  for (Matrix* m : {&p.w_xf, &p.w_xi, &p.w_xo, &p.w_xc, &p.w_hf, &p.w_hi, &p.w_ho, &p.w_hc})
    fill_uniform(*m, bound, rng);
  p.b_f.setOnes();
}

template <class View, class Lstm>
void push_lstm(std::vector<View>& out, Lstm& p, const std::string& prefix) {
  auto add = [&](const std::string& name, bool is_weight, auto& m) {
    out.push_back(View{prefix + name, is_weight, m.rows(), m.cols(), {m.data(), static_cast<std::size_t>(m.size())}});
  };
  add("w_xf", true, p.w_xf);
  add("w_hf", true, p.w_hf);
  add("b_f", false, p.b_f);
  add("w_xi", true, p.w_xi);
  add("w_hi", true, p.w_hi);
  add("b_i", false, p.b_i);
  add("w_xo", true, p.w_xo);
  add("w_ho", true, p.w_ho);
  add("b_o", false, p.b_o);
  add("w_xc", true, p.w_xc);
  add("w_hc", true, p.w_hc);
  add("b_c", false, p.b_c);
}

template <class View, class Net>
std::vector<View> collect_tensors(Net& net) {
  std::vector<View> out;
  auto add = [&](const std::string& name, bool is_weight, auto& m) {
    out.push_back(View{name, is_weight, m.rows(), m.cols(), {m.data(), static_cast<std::size_t>(m.size())}});
  };
  push_lstm<View>(out, net.bilstm.fwd, "bilstm.fwd.");
  push_lstm<View>(out, net.bilstm.bwd, "bilstm.bwd.");
  add("bilstm.w_f_merge", true, net.bilstm.w_f_merge);
  add("bilstm.w_b_merge", true, net.bilstm.w_b_merge);
  add("bilstm.b_h", false, net.bilstm.b_h);
  for (std::size_t k = 0; k < net.stack.size(); ++k)
    push_lstm<View>(out, net.stack[k], "stack." + std::to_string(k + 1) + ".");
  add("head.w_hz", true, net.head.w_hz);
  add("head.w_xz", true, net.head.w_xz);
  add("head.b_z", false, net.head.b_z);
  return out;
}

}  // namespace

LstmParams LstmParams::zeros(Eigen::Index input_size, Eigen::Index hidden_size) {
  LstmParams p;
  for (Matrix* m : {&p.w_xf, &p.w_xi, &p.w_xo, &p.w_xc}) *m = Matrix::Zero(hidden_size, input_size);
  for (Matrix* m : {&p.w_hf, &p.w_hi, &p.w_ho, &p.w_hc}) *m = Matrix::Zero(hidden_size, hidden_size);
  for (Vector* v : {&p.b_f, &p.b_i, &p.b_o, &p.b_c}) *v = Vector::Zero(hidden_size);
  return p;
}

void LstmParams::validate() const {
  const auto h = hidden_size();
  const auto in = input_size();
  expect_shape(w_xi, h, in, "w_xi");
  expect_shape(w_xo, h, in, "w_xo");
  expect_shape(w_xc, h, in, "w_xc");
  for (const Matrix* m : {&w_hf, &w_hi, &w_ho, &w_hc}) expect_shape(*m, h, h, "hidden-to-gate matrix");
  for (const Vector* v : {&b_f, &b_i, &b_o, &b_c}) expect_size(*v, h, "gate bias");
}

BiLstmParams BiLstmParams::zeros(Eigen::Index input_size, Eigen::Index hidden_size) {
  BiLstmParams p;
  p.fwd = LstmParams::zeros(input_size, hidden_size);
  p.bwd = LstmParams::zeros(input_size, hidden_size);
  p.w_f_merge = Matrix::Zero(hidden_size, hidden_size);
  p.w_b_merge = Matrix::Zero(hidden_size, hidden_size);
  p.b_h = Vector::Zero(hidden_size);
  return p;
}

void BiLstmParams::validate() const {
  fwd.validate();
  bwd.validate();
  const auto h = fwd.hidden_size();
  if (bwd.hidden_size() != h || bwd.input_size() != fwd.input_size())
    fail(ErrorCode::DimensionMismatch, "forward and backward directions disagree in shape");
  expect_shape(w_f_merge, h, h, "w_f_merge");
  expect_shape(w_b_merge, h, h, "w_b_merge");
  expect_size(b_h, h, "b_h");
}

OutputHeadParams OutputHeadParams::zeros(Eigen::Index hidden_size) {
  return {Matrix::Zero(kNumOutputs, hidden_size), Matrix::Zero(kNumOutputs, hidden_size),
          Vector::Zero(kNumOutputs)};
}

void NetworkConfig::validate() const {
  require(input_size >= 1 && hidden_size >= 1 && seq_len >= 1, ErrorCode::InvalidArgument,
          "network sizes must be positive");
  require(num_layers >= 1, ErrorCode::InvalidArgument, "num_layers must be at least 1");
  if (num_layers > kDefaultMaxLayers) {
    require(allow_deep, ErrorCode::InvalidArgument,
            "num_layers " + std::to_string(num_layers) + " exceeds the default maximum depth of " +
                std::to_string(kDefaultMaxLayers) + " (set allow_deep to override)");
    std::cerr << "warning: num_layers " << num_layers << " exceeds the default maximum depth of "
              << kDefaultMaxLayers << "\n";
  }
}

NetworkParams NetworkParams::zeros(const NetworkConfig& config) {
  config.validate();
  const auto in = static_cast<Eigen::Index>(config.input_size);
  const auto h = static_cast<Eigen::Index>(config.hidden_size);
  NetworkParams net;
  net.config = config;
  net.bilstm = BiLstmParams::zeros(in, h);
  net.stack.assign(config.stacked_blocks(), LstmParams::zeros(h, h));
  net.head = OutputHeadParams::zeros(h);
  return net;
}

NetworkParams NetworkParams::initialize(const NetworkConfig& config, std::uint64_t seed) {
  NetworkParams net = zeros(config);
  CounterRng rng(seed, stream_id({0x1417, 0}));
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.hidden_size));
  fill_uniform(net.bilstm.fwd, bound, rng);
  fill_uniform(net.bilstm.bwd, bound, rng);
  fill_uniform(net.bilstm.w_f_merge, bound, rng);
  fill_uniform(net.bilstm.w_b_merge, bound, rng);
  for (auto& layer : net.stack) fill_uniform(layer, bound, rng);
  fill_uniform(net.head.w_hz, bound, rng);
  fill_uniform(net.head.w_xz, bound, rng);
  return net;
}

std::vector<TensorView> NetworkParams::tensors() { return collect_tensors<TensorView>(*this); }

std::vector<ConstTensorView> NetworkParams::tensors() const {
  return collect_tensors<ConstTensorView>(*this);
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.data.size();
  return n;
}

double NetworkParams::weight_norm_sq() const {
  double s = 0.0;
  for (const auto& t : tensors())
    if (t.is_weight)
      for (double v : t.data) s += v * v;
  return s;
}

void NetworkParams::set_zero() {
  for (auto& t : tensors()) std::fill(t.data.begin(), t.data.end(), 0.0);
}

void NetworkParams::validate() const {
  config.validate();
  const auto in = static_cast<Eigen::Index>(config.input_size);
  const auto h = static_cast<Eigen::Index>(config.hidden_size);
  bilstm.validate();
  if (bilstm.fwd.input_size() != in || bilstm.fwd.hidden_size() != h)
    fail(ErrorCode::DimensionMismatch, "bidirectional layer does not match config sizes");
  if (stack.size() != config.stacked_blocks())
    fail(ErrorCode::DimensionMismatch, "stack depth " + std::to_string(stack.size()) +
                                           " does not match num_layers - 1 = " +
                                           std::to_string(config.stacked_blocks()));
  for (const auto& layer : stack) {
    layer.validate();
    if (layer.input_size() != h || layer.hidden_size() != h)
      fail(ErrorCode::DimensionMismatch, "residual blocks require input width == hidden width");
  }
  expect_shape(head.w_hz, kNumOutputs, h, "head.w_hz");
  expect_shape(head.w_xz, kNumOutputs, h, "head.w_xz");
  expect_size(head.b_z, kNumOutputs, "head.b_z");
}

HiddenState HiddenState::zeros(Eigen::Index hidden_size) {
  return {Vector::Zero(hidden_size), Vector::Zero(hidden_size)};
}

CellOutput lstm_cell_forward(const LstmParams& params, const Vector& x_t, const HiddenState& prev) {
  params.validate();
  const auto h = params.hidden_size();
  if (x_t.size() != params.input_size())
    fail(ErrorCode::DimensionMismatch, "input has " + std::to_string(x_t.size()) + " entries, expected " +
                                           std::to_string(params.input_size()));
  if (prev.h.size() != h || prev.c.size() != h)
    fail(ErrorCode::DimensionMismatch, "previous state width does not match hidden size");
  CellOutput out;
  auto& g = out.gates;
  for (Vector* v : {&g.f, &g.i, &g.o, &g.candidate, &g.c, &out.state.h}) v->resize(h);
  Vector tanh_c(h);
  Vector xf = params.w_xf * x_t, xi = params.w_xi * x_t, xo = params.w_xo * x_t, xc = params.w_xc * x_t;
  cell_step(params, xf, xi, xo, xc, prev.h, prev.c, g.f, g.i, g.o, g.candidate, g.c, tanh_c, out.state.h);
  out.state.c = g.c;
  return out;
}

LstmCache lstm_layer_forward(const LstmParams& p, const Matrix& x) {
  if (x.rows() != p.input_size())
    fail(ErrorCode::DimensionMismatch, "layer input width " + std::to_string(x.rows()) + " != " +
                                           std::to_string(p.input_size()));
  const auto h = p.hidden_size();
  const auto steps = x.cols();
  LstmCache cache;
  cache.x = x;
  for (Matrix* m : {&cache.f, &cache.i, &cache.o, &cache.g, &cache.c, &cache.tanh_c, &cache.h})
    m->resize(h, steps);
  const Matrix xf = p.w_xf * x, xi = p.w_xi * x, xo = p.w_xo * x, xc = p.w_xc * x;
  const Vector zero = Vector::Zero(h);
  for (Eigen::Index t = 0; t < steps; ++t) {
    if (t == 0) {
      cell_step(p, xf.col(t), xi.col(t), xo.col(t), xc.col(t), zero, zero, cache.f.col(t), cache.i.col(t),
                cache.o.col(t), cache.g.col(t), cache.c.col(t), cache.tanh_c.col(t), cache.h.col(t));
    } else {
      cell_step(p, xf.col(t), xi.col(t), xo.col(t), xc.col(t), cache.h.col(t - 1), cache.c.col(t - 1),
                cache.f.col(t), cache.i.col(t), cache.o.col(t), cache.g.col(t), cache.c.col(t),
                cache.tanh_c.col(t), cache.h.col(t));
    }
  }
  return cache;
}

namespace {

/// Merge on the time-aligned direction outputs, column by column.
Matrix merge_directions(const BiLstmParams& p, const Matrix& hf, const Matrix* hb_reversed) {
  const auto steps = hf.cols();
  Matrix out(p.b_h.size(), steps);
  for (Eigen::Index t = 0; t < steps; ++t) {
    Vector y = p.w_f_merge * hf.col(t);
    if (hb_reversed) y += p.w_b_merge * hb_reversed->col(steps - 1 - t);
    y += p.b_h;
    out.col(t) = y;
  }
  return out;
}

Matrix bilstm_columns(const BiLstmParams& params, const Matrix& x, bool bidirectional, BiLstmCache& cache) {
  cache.bidirectional = bidirectional;
  cache.fwd = lstm_layer_forward(params.fwd, x);
  if (bidirectional) {
    cache.bwd = lstm_layer_forward(params.bwd, x.rowwise().reverse());
    return merge_directions(params, cache.fwd.h, &cache.bwd.h);
  }
  cache.bwd = LstmCache{};
  return merge_directions(params, cache.fwd.h, nullptr);
}

}  // namespace

Matrix bilstm_forward(const BiLstmParams& params, const Matrix& x_seq, bool bidirectional, BiLstmCache* cache) {
  params.validate();
  require(x_seq.rows() >= 1, ErrorCode::InvalidArgument, "sequence must have T >= 1");
  if (x_seq.cols() != params.fwd.input_size())
    fail(ErrorCode::DimensionMismatch, "input width " + std::to_string(x_seq.cols()) + " != " +
                                           std::to_string(params.fwd.input_size()));
  BiLstmCache local;
  BiLstmCache& c = cache ? *cache : local;
  return bilstm_columns(params, x_seq.transpose(), bidirectional, c).transpose();
}

ResidualBlockOutput residual_block_forward(const LstmParams& params, const Matrix& x_seq,
                                           std::size_t layer_index, bool residual) {
  params.validate();
  if (x_seq.cols() != params.hidden_size() || params.input_size() != params.hidden_size())
    fail(ErrorCode::DimensionMismatch, "residual block " + std::to_string(layer_index) +
                                           " needs input width == hidden width (" +
                                           std::to_string(params.hidden_size()) + "), got " +
                                           std::to_string(x_seq.cols()));
  ResidualBlockOutput out;
  out.cache = lstm_layer_forward(params, x_seq.transpose());
  out.hidden = out.cache.h.transpose();
  out.next = residual ? Matrix(out.hidden + x_seq) : out.hidden;
  return out;
}

ForwardResult deeprnn_forward(const NetworkParams& net, const Matrix& x_seq, bool training) {
  net.validate();
  require(x_seq.rows() >= 1, ErrorCode::InvalidArgument, "sequence must have T >= 1");
  if (x_seq.cols() != static_cast<Eigen::Index>(net.config.input_size))
    fail(ErrorCode::DimensionMismatch, "input width " + std::to_string(x_seq.cols()) + " != " +
                                           std::to_string(net.config.input_size));
  if (!x_seq.allFinite()) fail(ErrorCode::NonFiniteActivation, "input sequence contains NaN/Inf");

  ForwardCache cache;
  cache.input = x_seq.transpose();
  cache.stream.push_back(bilstm_columns(net.bilstm, cache.input, net.config.bidirectional, cache.bilstm));
  check_finite(cache.stream.back(), "layer 1 (bidirectional)");

  const std::size_t blocks = net.stack.size();
  for (std::size_t k = 0; k < blocks; ++k) {
    const Matrix& in = cache.stream.back();
    cache.blocks.push_back(lstm_layer_forward(net.stack[k], in));
    const Matrix& h = cache.blocks.back().h;
    check_finite(h, "layer " + std::to_string(k + 2));
    if (k + 1 < blocks) cache.stream.push_back(net.config.residual ? Matrix(h + in) : h);
  }

  const Matrix& top_hidden = blocks > 0 ? cache.blocks.back().h : cache.stream[0];
  Matrix pre = net.head.w_hz * top_hidden;
  if (blocks > 0) pre += net.head.w_xz * cache.stream.back();
  pre.colwise() += net.head.b_z;
  cache.z = (1.0 + (-pre.array()).exp()).inverse().matrix();
  check_finite(cache.z, "output head");

  ForwardResult result;
  result.z = cache.z.transpose();
  if (training) result.cache = std::move(cache);
  return result;
}

}  // namespace seqpress
