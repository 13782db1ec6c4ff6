// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "seqpress/bptt.hpp"
#include "seqpress/error.hpp"
#include "test_support.hpp"

namespace seqpress {
namespace {

using testing::random_matrix;
using testing::random_network;
using testing::small_config;

struct Instance {
  NetworkParams net;
  Matrix x, y;
};

Instance make_instance(std::size_t hidden, std::size_t layers, std::size_t steps, std::uint64_t seed) {
  Instance in{random_network(small_config(hidden, layers, steps), seed), {}, {}};
  CounterRng rng(seed, 0xDA7A);
  in.x = random_matrix(static_cast<Eigen::Index>(steps), 7, rng, -2.0, 2.0);
  in.y = random_matrix(static_cast<Eigen::Index>(steps), 3, rng, 0.05, 0.95);
  return in;
}

double max_abs(const Gradients& g) {
  double m = 0.0;
  for (const auto& v : g.tensors())
    for (double x : v.data) m = std::max(m, std::abs(x));
  return m;
}

TEST(BpttExamples, ZeroUpstreamGivesZeroGradients) {
  auto in = make_instance(4, 3, 5, 1);
  auto fwd = deeprnn_forward(in.net, in.x, true);
  auto back = deeprnn_backward(in.net, *fwd.cache, Matrix::Zero(5, 3));
  EXPECT_EQ(max_abs(back.grads), 0.0);
  for (const auto& d : back.dloss_dstream) EXPECT_TRUE((d.array() == 0.0).all());
}

TEST(BpttExamples, ScalarCellOutputGateGradientAtZero) {
  // loss = h_1 for a scalar cell with zero parameters: dL/db_o = sigma'(0) tanh(c_1) = 0.25 * tanh(0).
  const auto p = LstmParams::zeros(1, 1);
  const Matrix x = Matrix::Constant(1, 1, 0.8);
  const auto cache = lstm_layer_forward(p, x);
  LstmParams grad = LstmParams::zeros(1, 1);
  lstm_layer_backward(p, cache, Matrix::Ones(1, 1), grad);
  EXPECT_EQ(grad.b_o(0), 0.25 * std::tanh(0.0));
  EXPECT_EQ(grad.b_o(0), 0.0);
}

TEST(BpttExamples, ThreeLayerNetworkMatchesCentralDifferences) {
  auto in = make_instance(4, 3, 5, 2);
  const auto rep = finite_difference_check(in.net, in.x, in.y, 1e-4, 1e-5, 2);
  EXPECT_GE(rep.coordinates_checked, 200u);
  EXPECT_LT(rep.max_rel_err, 1e-6) << rep.worst.coordinate.name;
}

TEST(BpttExamples, DeskScaleConfigurationsPass) {
  for (std::size_t hidden : {4, 8})
    for (std::size_t layers : {1, 2, 4})
      for (std::size_t steps : {3, 8}) {
        auto in = make_instance(hidden, layers, steps, 100 + hidden * 10 + layers + steps);
        const auto rep = finite_difference_check(in.net, in.x, in.y, 1e-4, 1e-5, steps);
        EXPECT_LT(rep.max_rel_err, 1e-5) << hidden << "/" << layers << "/" << steps << " "
                                         << rep.worst.coordinate.name;
      }
}

TEST(BpttExamples, ZeroLossPointGivesZeroDifferences) {
  auto in = make_instance(4, 2, 4, 3);
  SequenceLoss flat{[](const Matrix&) { return 0.0; }, [](const Matrix& z) { return Matrix(Matrix::Zero(z.rows(), z.cols())); }};
  const auto analytic = objective_gradient(in.net, in.x, flat, 0.0);
  EXPECT_EQ(max_abs(analytic), 0.0);
  const auto rep = compare_gradients(in.net, in.x, flat, 0.0, analytic, 1e-5, sample_coordinates(in.net, 200, 0));
  EXPECT_EQ(rep.max_rel_err, 0.0);
  EXPECT_EQ(rep.worst.numeric, 0.0);
}

TEST(BpttExamples, CorruptedGradientIsFlagged) {
  auto in = make_instance(4, 3, 5, 4);
  const auto loss = squared_error_loss(in.y);
  auto analytic = objective_gradient(in.net, in.x, loss, 1e-4);
  const auto coords = sample_coordinates(in.net, 200, 0);
  const Coordinate target = coords[37];
  analytic.tensors()[target.tensor].data[target.index] += 1.0;
  const auto rep = compare_gradients(in.net, in.x, loss, 1e-4, analytic, 1e-5, coords);
  ASSERT_EQ(rep.flagged.size(), 1u);
  EXPECT_EQ(rep.flagged[0].coordinate.name, target.name);
  EXPECT_EQ(rep.worst.coordinate.name, target.name);
}

TEST(BpttExamples, ZeroedBlocksGiveExactDirectPath) {
  auto in = make_instance(5, 4, 4, 5);
  const auto rep = residual_gradient_decomposition_check(in.net, in.x, in.y);
  EXPECT_TRUE(rep.direct_path_exact);
  EXPECT_EQ(rep.direct_path_max_abs_diff, 0.0);
}

TEST(BpttExamples, ThroughWeightsTermMatchesFiniteDifferences) {
  auto in = make_instance(5, 4, 4, 6);
  const auto rep = residual_gradient_decomposition_check(in.net, in.x, in.y);
  EXPECT_LT(rep.through_weights_max_rel_err, 1e-5);
}

TEST(BpttExamples, ForwardTelescopingExact) {
  auto in = make_instance(6, 4, 6, 7);
  const auto rep = residual_gradient_decomposition_check(in.net, in.x, in.y);
  EXPECT_EQ(rep.levels, 4u);
  EXPECT_EQ(rep.pairs_checked, 6u);
  EXPECT_LT(rep.max_telescoping_error, 1e-12);
}

TEST(Bptt, BackwardIsLinearInUpstreamGradient) {
  auto in = make_instance(4, 3, 6, 8);
  auto fwd = deeprnn_forward(in.net, in.x, true);
  CounterRng rng(8, 9);
  const Matrix d1 = random_matrix(6, 3, rng), d2 = random_matrix(6, 3, rng);
  auto g1 = deeprnn_backward(in.net, *fwd.cache, d1).grads;
  auto g2 = deeprnn_backward(in.net, *fwd.cache, d2).grads;
  auto g12 = deeprnn_backward(in.net, *fwd.cache, d1 + d2).grads;
  auto v1 = g1.tensors(), v2 = g2.tensors(), v12 = g12.tensors();
  for (std::size_t k = 0; k < v12.size(); ++k)
    for (std::size_t i = 0; i < v12[k].data.size(); ++i)
      EXPECT_NEAR(v12[k].data[i], v1[k].data[i] + v2[k].data[i], 1e-12);
}

TEST(Bptt, GradientsAreFinite) {
  auto in = make_instance(8, 4, 8, 9);
  const auto g = objective_gradient(in.net, in.x, squared_error_loss(in.y), 1e-4);
  for (const auto& v : g.tensors())
    for (double x : v.data) EXPECT_TRUE(std::isfinite(x));
}

TEST(Bptt, UnidirectionalAndPlainStackAlsoCheck) {
  for (bool bidir : {true, false})
    for (bool residual : {true, false}) {
      auto cfg = small_config(4, 3, 5);
      cfg.bidirectional = bidir;
      cfg.residual = residual;
      auto net = random_network(cfg, 11);
      CounterRng rng(11, 1);
      const Matrix x = random_matrix(5, 7, rng), y = random_matrix(5, 3, rng, 0.1, 0.9);
      EXPECT_LT(finite_difference_check(net, x, y, 0.0, 1e-5).max_rel_err, 1e-5) << bidir << residual;
    }
}

TEST(Bptt, CoordinateSampleCoversEveryTensorAndIsDeterministic) {
  auto in = make_instance(4, 3, 5, 12);
  const auto a = sample_coordinates(in.net, 200, 3), b = sample_coordinates(in.net, 200, 3);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_GE(a.size(), 200u);
  std::vector<bool> seen(in.net.tensors().size(), false);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    seen[a[i].tensor] = true;
  }
  for (bool s : seen) EXPECT_TRUE(s);
}

TEST(Bptt, CoordinateSampleReachesMinimumDespiteSmallTensors) {
  for (std::size_t hidden : {2, 4, 8})
    for (std::size_t layers : {2, 3, 4}) {
      const auto net = random_network(small_config(hidden, layers, 3), 15);
      const auto coords = sample_coordinates(net, 200, 1);
      EXPECT_GE(coords.size(), std::min<std::size_t>(200, net.parameter_count())) << hidden << "/" << layers;
      EXPECT_LE(coords.size(), net.parameter_count());
      std::set<std::pair<std::size_t, std::size_t>> unique;
      for (const auto& c : coords) unique.insert({c.tensor, c.index});
      EXPECT_EQ(unique.size(), coords.size());
    }
}

TEST(Bptt, RejectsMismatchedCacheAndBadEpsilon) {
  auto a = make_instance(4, 3, 5, 13);
  auto b = make_instance(5, 3, 5, 13);
  auto fwd = deeprnn_forward(a.net, a.x, true);
  try {
    deeprnn_backward(b.net, *fwd.cache, Matrix::Zero(5, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CacheMismatch);
  }
  EXPECT_THROW(finite_difference_check(a.net, a.x, a.y, 0.0, 1e-2), Error);
  EXPECT_THROW(finite_difference_check(a.net, a.x, a.y, 0.0, 1e-8), Error);
  auto shallow = make_instance(4, 2, 5, 14);
  EXPECT_THROW(residual_gradient_decomposition_check(shallow.net, shallow.x, shallow.y), Error);
}

}  // namespace
}  // namespace seqpress
