#include <chrono>
#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "fea2fea.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace fea2fea;
using namespace fea2fea::check;


// ---------------------------------------------------------------------------
// Autodiff primitives

TEST(Autodiff, TrivialExamples) {
  Tape tape;
  Var x = tape.variable(Tensor::scalar(3.0));
  Var y = mul(x, x);
  tape.backward(y);
  EXPECT_DOUBLE_EQ(x.grad().item(), 6.0);

  Tape t2;
  Var a = t2.variable(Tensor::scalar(2.0));
  Var b = t2.variable(Tensor::scalar(5.0));
  Var s = add(mul(a, b), a);
  t2.backward(s);
  EXPECT_DOUBLE_EQ(a.grad().item(), 6.0);
  EXPECT_DOUBLE_EQ(b.grad().item(), 2.0);
}

TEST(Autodiff, BackwardRequiresScalarRoot) {
  Tape tape;
  Var x = tape.variable(rnd({2, 2}, 1));
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Autodiff, ElementwiseOps) {
  EXPECT_LT(gradcheck({rnd({3, 4}, 1), rnd({4, 2}, 2)}, [](Tape&, const auto& v) { return matmul(v[0], v[1]); }), kTol);
  EXPECT_LT(gradcheck({rnd({3, 4}, 3), rnd({3, 4}, 4)}, [](Tape&, const auto& v) { return add(v[0], v[1]); }), kTol);
  EXPECT_LT(gradcheck({rnd({3, 4}, 5), rnd({4}, 6)}, [](Tape&, const auto& v) { return add_bias(v[0], v[1]); }), kTol);
  EXPECT_LT(gradcheck({rnd({3, 4}, 7), rnd({3, 4}, 8)}, [](Tape&, const auto& v) { return mul(v[0], v[1]); }), kTol);
  EXPECT_LT(gradcheck({rnd({3, 4}, 9)}, [](Tape&, const auto& v) { return scale(v[0], -2.5); }), kTol);
  EXPECT_LT(gradcheck({rnd({3, 4}, 10)}, [](Tape&, const auto& v) { return tanh(v[0]); }), kTol);
  EXPECT_LT(gradcheck({rnd({3, 4}, 11)}, [](Tape&, const auto& v) { return relu(v[0]); }), kTol);
  EXPECT_LT(gradcheck({rnd({3, 4}, 12)}, [](Tape&, const auto& v) { return leaky_relu(v[0], 0.2); }), kTol);
}

TEST(Autodiff, ShapeOps) {
  EXPECT_LT(gradcheck({rnd({3, 2}, 1), rnd({3, 5}, 2)}, [](Tape&, const auto& v) { return concat({v[0], v[1]}, 1); }), kTol);
  EXPECT_LT(gradcheck({rnd({2, 3}, 3), rnd({4, 3}, 4)}, [](Tape&, const auto& v) { return concat({v[0], v[1]}, 0); }), kTol);
  EXPECT_LT(gradcheck({rnd({3, 4}, 5)}, [](Tape&, const auto& v) { return sum(v[0]); }), kTol);
  EXPECT_LT(gradcheck({rnd({3, 4}, 6)}, [](Tape&, const auto& v) { return mean(v[0]); }), kTol);
  EXPECT_LT(gradcheck({rnd({3, 4}, 7)}, [](Tape&, const auto& v) { return sum(v[0], 0); }), kTol);
  EXPECT_LT(gradcheck({rnd({3, 4}, 8)}, [](Tape&, const auto& v) { return mean(v[0], 1); }), kTol);
  EXPECT_LT(gradcheck({rnd({3, 4}, 9)}, [](Tape&, const auto& v) { return log_softmax(v[0], 1); }), kTol);
  EXPECT_LT(gradcheck({rnd({5, 2}, 10)}, [](Tape&, const auto& v) { return gather_rows(v[0], {4, 0, 0, 2}); }), kTol);
}

TEST(Autodiff, LogSoftmaxRowsNormalize) {
  Tape tape;
  Var l = log_softmax(tape.constant(rnd({4, 5}, 3, -30, 30)), 1);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (double x : l.value().row(r)) s += std::exp(x);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Autodiff, NllLoss) {
  std::vector<ClassId> y{0, 2, 1, 2};
  std::vector<std::size_t> rows{0, 1, 3};
  EXPECT_LT(gradcheck({rnd({4, 3}, 1)}, [&](Tape&, const auto& v) { return nll_loss(log_softmax(v[0], 1), y, rows); }), kTol);
  Tape tape;
  Tensor lp({2, 2}, std::vector<double>{std::log(0.25), std::log(0.75), std::log(0.5), std::log(0.5)});
  EXPECT_NEAR(nll_loss(tape.constant(lp), std::vector<ClassId>{1, 0}).value().item(), -(std::log(0.75) + std::log(0.5)) / 2, 1e-15);
}

TEST(Autodiff, BatchNorm) {
  BatchNormStats st;
  EXPECT_LT(gradcheck({rnd({6, 3}, 1), rnd({3}, 2, 0.5, 1.5), rnd({3}, 3)},
                      [&](Tape&, const auto& v) { return batchnorm(v[0], v[1], v[2], st, true); }),
            kBnTol);
  EXPECT_LT(gradcheck({rnd({6, 3}, 4), rnd({3}, 5, 0.5, 1.5), rnd({3}, 6)},
                      [&](Tape&, const auto& v) { return batchnorm(v[0], v[1], v[2], st, false); }),
            kTol);
}

TEST(Autodiff, BatchNormTrainOutputIsStandardized) {
  Tape tape;
  BatchNormStats st;
  Var y = batchnorm(tape.constant(rnd({50, 2}, 3, -4, 9)), tape.constant(Tensor({2}, 1.0)), tape.constant(Tensor({2}, 0.0)), st, true);
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0, v = 0;
    for (std::size_t r = 0; r < 50; ++r) m += y.value()(r, c) / 50;
    for (std::size_t r = 0; r < 50; ++r) v += (y.value()(r, c) - m) * (y.value()(r, c) - m) / 50;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-3);
  }
}

TEST(Autodiff, DropoutScalesAndMasks) {
  Rng rng(4);
  Tape tape;
  Tensor ones({200, 5}, 1.0);
  Var x = tape.variable(ones);
  Var y = dropout(x, 0.6, true, rng);
  std::size_t kept = 0;
  for (double v : y.value().data) {
    EXPECT_TRUE(v == 0.0 || std::abs(v - 2.5) < 1e-12);
    kept += v != 0.0;
  }
  EXPECT_NEAR(static_cast<double>(kept) / 1000.0, 0.4, 0.06);
  Var eval = dropout(x, 0.6, false, rng);
  EXPECT_EQ(eval.value(), ones);
}

// ---------------------------------------------------------------------------
// Graph operators against dense oracles

TEST(GraphOps, PropagationMatchesDense) {
  const Graph g = oracle::random_graph(7, 0.4, 2);
  const Tensor x = rnd({7, 3}, 5);
  const auto a = oracle::adjacency(g);
  Tape tape;
  Var xv = tape.constant(x);
  const auto sum_ref = oracle::dense_apply(a, x.data, 3);
  const auto gcn_ref = oracle::dense_apply(oracle::gcn_matrix(g), x.data, 3);
  oracle::Dense mean_op = a;
  for (auto& row : mean_op) {
    double d = 0;
    for (double v : row) d += v;
    if (d > 0)
      for (double& v : row) v /= d;
  }
  const auto mean_ref = oracle::dense_apply(mean_op, x.data, 3);
  const auto s = neighbor_sum(xv, g).value().data;
  const auto m = neighbor_mean(xv, g).value().data;
  const auto c = gcn_propagate(xv, g).value().data;
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(s[i], sum_ref[i], 1e-12);
    EXPECT_NEAR(m[i], mean_ref[i], 1e-12);
    EXPECT_NEAR(c[i], gcn_ref[i], 1e-12);
  }
}

TEST(GraphOps, Gradients) {
  const Graph g = six_node_graph(3);
  EXPECT_LT(gradcheck({rnd({6, 2}, 1)}, [&](Tape&, const auto& v) { return neighbor_sum(v[0], g); }), kTol);
  EXPECT_LT(gradcheck({rnd({6, 2}, 2)}, [&](Tape&, const auto& v) { return neighbor_mean(v[0], g); }), kTol);
  EXPECT_LT(gradcheck({rnd({6, 2}, 3)}, [&](Tape&, const auto& v) { return gcn_propagate(v[0], g); }), kTol);
  EXPECT_LT(gradcheck({rnd({6, 3}, 4), rnd({6}, 5)}, [&](Tape&, const auto& v) { return gat_aggregate(v[0], v[1], g); }), kTol);
  std::vector<std::uint32_t> seg{0, 0, 1, 2, 2, 2};
  EXPECT_LT(gradcheck({rnd({6, 2}, 6)}, [&](Tape&, const auto& v) { return segment_sum(v[0], seg, 3); }), kTol);
  EXPECT_LT(gradcheck({rnd({6, 2}, 7)}, [&](Tape&, const auto& v) { return segment_mean(v[0], seg, 3); }), kTol);
  EXPECT_LT(gradcheck({rnd({4, 2}, 8), rnd({4, 3}, 9), rnd({2, 5, 3}, 10)}, [&](Tape&, const auto& v) { return bilinear(v[0], v[1], v[2]); }), kTol);
}

TEST(GraphOps, AttentionRowsSumToOne) {
  const Graph g = oracle::random_graph(12, 0.3, 8);
  const Tensor z = rnd({12, 4}, 2, -3, 3);
  const auto att = oracle::random_values(8, 3, -2, 2);
  const auto alpha = gat_coefficients(z, att, g, 0.2);
  for (NodeId u = 0; u < 12; ++u) {
    ASSERT_EQ(alpha[u].size(), g.degree(u) + 1);
    double s = 0;
    for (double a : alpha[u]) {
      EXPECT_GT(a, 0.0);
      s += a;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(GraphOps, BilinearMatchesTripleLoop) {
  const Tensor l = rnd({5, 3}, 1), r = rnd({5, 4}, 2), w = rnd({3, 6, 4}, 3);
  Tape tape;
  const auto out = bilinear(tape.constant(l), tape.constant(r), tape.constant(w)).value();
  const auto ref = oracle::bilinear(l.data, r.data, w.data, 5, 3, 6, 4);
  ASSERT_EQ(out.shape, (std::vector<std::size_t>{5, 6}));
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.data[i], ref[i], 1e-12);
}

// ---------------------------------------------------------------------------
// Layers

namespace {

Tensor run_conv(ConvType type, const Graph& g, const Tensor& x, ParameterStore& store, Conv& conv) {
  Rng rng(7);
  conv = Conv::create(type, store, "c", x.cols(), 4, rng);
  Tape tape;
  Binding b(tape, store);
  return conv(b, tape.constant(x), g).value();
}

std::vector<double> dense_linear(const std::vector<double>& x, std::size_t n, const Tensor& w, const Tensor* bias) {
  const std::size_t in = w.rows(), out = w.cols();
  std::vector<double> y(n * out, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < out; ++o) {
      double s = bias ? bias->data[o] : 0.0;
      for (std::size_t k = 0; k < in; ++k) s += x[i * in + k] * w(k, o);
      y[i * out + o] = s;
    }
  return y;
}

const Tensor& param(const ParameterStore& s, std::string_view name) { return s[*s.find(name)].value; }

}  // namespace

TEST(Layers, GcnMatchesDense) {
  const Graph g = oracle::random_graph(8, 0.4, 1);
  const Tensor x = rnd({8, 3}, 2);
  ParameterStore store;
  Conv conv;
  const Tensor y = run_conv(ConvType::gcn, g, x, store, conv);
  const auto ref = dense_linear(oracle::dense_apply(oracle::gcn_matrix(g), x.data, 3), 8, param(store, "c.lin.weight"), &param(store, "c.lin.bias"));
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data[i], ref[i], 1e-12);
}

TEST(Layers, GinMatchesDense) {
  const Graph g = oracle::random_graph(8, 0.4, 2);
  const Tensor x = rnd({8, 3}, 3);
  ParameterStore store;
  Conv conv;
  const Tensor y = run_conv(ConvType::gin, g, x, store, conv);
  auto a = oracle::adjacency(g);
  for (std::size_t i = 0; i < 8; ++i) a[i][i] += 1.0;
  auto h = dense_linear(oracle::dense_apply(a, x.data, 3), 8, param(store, "c.mlp0.weight"), &param(store, "c.mlp0.bias"));
  for (double& v : h) v = std::max(v, 0.0);
  const auto ref = dense_linear(h, 8, param(store, "c.mlp1.weight"), &param(store, "c.mlp1.bias"));
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data[i], ref[i], 1e-12);
}

TEST(Layers, SageMatchesDense) {
  const Graph g = oracle::random_graph(8, 0.4, 3);
  const Tensor x = rnd({8, 3}, 4);
  ParameterStore store;
  Conv conv;
  const Tensor y = run_conv(ConvType::sage, g, x, store, conv);
  auto a = oracle::adjacency(g);
  for (auto& row : a) {
    double d = 0;
    for (double v : row) d += v;
    if (d > 0)
      for (double& v : row) v /= d;
  }
  const auto self = dense_linear(x.data, 8, param(store, "c.self.weight"), &param(store, "c.self.bias"));
  const auto neigh = dense_linear(oracle::dense_apply(a, x.data, 3), 8, param(store, "c.neigh.weight"), nullptr);
  for (std::size_t i = 0; i < self.size(); ++i) EXPECT_NEAR(y.data[i], self[i] + neigh[i], 1e-12);
}

TEST(Layers, ConvTypeNames) {
  for (ConvType c : {ConvType::gcn, ConvType::gin, ConvType::sage, ConvType::gat, ConvType::mlp}) EXPECT_EQ(parse_conv_type(to_string(c)), c);
  EXPECT_THROW(parse_conv_type("cheb"), UsageError);
}

TEST(Layers, EveryConvPassesGradientCheck) {
  for (ConvType type : {ConvType::gcn, ConvType::gin, ConvType::sage, ConvType::gat}) EXPECT_LT(conv_gradient_error(type), kTol) << to_string(type);
}

// ---------------------------------------------------------------------------
// Concatenation

TEST(Concat, NtnReducesToTanhOfSimple) {
  for (std::size_t k : {2u, 3u, 4u}) {
    Tape tape;
    std::vector<Var> e;
    for (std::size_t i = 0; i < k; ++i) e.push_back(tape.constant(rnd({5, 8}, 10 + i, -3, 3)));
    const auto params = NtnParams::identity(k, 8);
    const auto steps = params.bind(tape);
    const Tensor ntn = concat_ntn(e, steps).value();
    const Tensor simple = concat_simple(e).value();
    ASSERT_EQ(ntn.shape, simple.shape);
    // The recurrence nests tanh: g_t = tanh([g_{t-1}, e_t]).
    std::vector<double> ref(5 * 8 * k);
    for (std::size_t r = 0; r < 5; ++r) {
      std::vector<double> g(e[0].value().row(r).begin(), e[0].value().row(r).end());
      for (std::size_t t = 1; t < k; ++t) {
        for (double x : e[t].value().row(r)) g.push_back(x);
        for (double& x : g) x = std::tanh(x);
      }
      std::copy(g.begin(), g.end(), ref.begin() + static_cast<std::ptrdiff_t>(r * 8 * k));
    }
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(ntn.data[i], ref[i], 1e-12);
    if (k == 2) {
      for (std::size_t i = 0; i < simple.size(); ++i) EXPECT_NEAR(ntn.data[i], std::tanh(simple.data[i]), 1e-12);
    }
  }
}

TEST(Concat, OutputLengths) {
  Rng rng(1);
  for (std::size_t k : {2u, 3u, 4u}) {
    Tape tape;
    std::vector<Var> e;
    for (std::size_t i = 0; i < k; ++i) e.push_back(tape.constant(rnd({3, 64}, i, -0.1, 0.1)));
    const auto p = NtnParams::random(k, 64, rng, 0.01);
    const auto steps = p.bind(tape);
    for (ConcatMethod m : {ConcatMethod::simple, ConcatMethod::bilinear, ConcatMethod::ntn}) {
      EXPECT_EQ(concat_embeddings(m, e, steps).value().cols(), 64 * k) << to_string(m);
    }
  }
}

TEST(Concat, BilinearMatchesOracle) {
  Tape tape;
  std::vector<Var> e{tape.constant(rnd({4, 3}, 1)), tape.constant(rnd({4, 3}, 2))};
  Rng rng(5);
  const auto p = NtnParams::random(2, 3, rng);
  const auto steps = p.bind(tape);
  const auto out = concat_bilinear(e, steps).value();
  auto ref = oracle::bilinear(e[0].value().data, e[1].value().data, p.weights[0].data, 4, 3, 6, 3);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(out(i, c), std::tanh(ref[i * 6 + c] + p.biases[0].data[c]), 1e-12);
}

TEST(Concat, GradientsThroughRecurrence) {
  Rng rng(2);
  const auto p = NtnParams::random(3, 2, rng);
  for (ConcatMethod m : {ConcatMethod::bilinear, ConcatMethod::ntn}) {
    std::vector<Tensor> inputs{rnd({3, 2}, 1), rnd({3, 2}, 2), rnd({3, 2}, 3)};
    for (std::size_t i = 0; i < 2; ++i) {
      inputs.push_back(p.weights[i]);
      inputs.push_back(p.biases[i]);
      inputs.push_back(p.maps[i]);
    }
    const double err = gradcheck(inputs, [&](Tape&, const auto& v) {
      std::vector<ConcatStep> steps{{v[3], v[4], v[5]}, {v[6], v[7], v[8]}};
      return concat_embeddings(m, {v[0], v[1], v[2]}, steps);
    });
    EXPECT_LT(err, kTol) << to_string(m);
  }
}

TEST(Concat, RejectsMismatchedDimensions) {
  Tape tape;
  std::vector<Var> e{tape.constant(rnd({3, 4}, 1)), tape.constant(rnd({3, 5}, 2))};
  EXPECT_THROW(concat_simple(e), ShapeError);
  EXPECT_THROW(concat_simple({}), ShapeError);
  EXPECT_EQ(parse_concat_method("ntn"), ConcatMethod::ntn);
  EXPECT_THROW(parse_concat_method("sum"), UsageError);
}

// ---------------------------------------------------------------------------
// Model


TEST(Model, FullModelGradientCheckAllConvTypes) {
  const auto start = std::chrono::steady_clock::now();
  const Graph g = six_node_graph(11);
  const std::vector<ClassId> y{0, 1, 2, 0, 1, 2};
  for (ConvType type : {ConvType::gcn, ConvType::gin, ConvType::sage, ConvType::gat}) {
    for (bool bn : {false, true}) {
      GnnModel model(small_config(type, bn), 5);
      EXPECT_LT(model_gradient_error(model, small_input(g, 0), y), bn ? kBnTol : kTol) << to_string(type) << (bn ? " +bn" : "");
    }
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 30.0);
}

TEST(Model, GradientCheckWithEncodersAndConcatenation) {
  const Graph g = six_node_graph(12);
  const std::vector<ClassId> y{2, 1, 0, 0, 1, 2};
  for (ConcatMethod m : {ConcatMethod::simple, ConcatMethod::bilinear, ConcatMethod::ntn}) {
    GnnModel model(small_config(ConvType::gin, false, 2, m), 6);
    EXPECT_LT(model_gradient_error(model, small_input(g, 2), y), kTol) << to_string(m);
  }
}

TEST(Model, AugmentedWidth) {
  const Graph g = oracle::path(4);
  ModelConfig cfg;
  cfg.num_structural = 2;
  cfg.embed_dim = 64;
  cfg.initial_dim = 10;
  EXPECT_EQ(cfg.gnn_input_dim(), 138u);
  GnnModel model(cfg, 1);
  ModelInput in;
  in.graph = &g;
  in.structural = rnd({4, 2}, 1);
  in.initial = rnd({4, 10}, 2);
  Tape tape;
  Binding b(tape, model.parameters());
  const auto out = model.encode(b, in).value();
  EXPECT_EQ(out.shape, (std::vector<std::size_t>{4, 138}));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 10; ++c) EXPECT_EQ(out(r, 128 + c), in.initial(r, c));
}

TEST(Model, PermutationEquivariance) {
  const Graph g = oracle::random_graph(9, 0.4, 3);
  std::vector<NodeId> perm{4, 0, 7, 1, 8, 2, 6, 3, 5};
  const Graph pg = g.permuted(perm);
  for (ConvType type : {ConvType::gcn, ConvType::gin, ConvType::sage, ConvType::gat}) {
    GnnModel model(small_config(type, true), 2);
    ModelInput in = small_input(g, 0), pin;
    pin.graph = &pg;
    pin.initial = Tensor({9, 2});
    for (std::size_t u = 0; u < 9; ++u)
      for (std::size_t c = 0; c < 2; ++c) pin.initial(perm[u], c) = in.initial(u, c);
    // Train-mode batchnorm sees the same batch statistics in both orders.
    Tape t1, t2;
    Rng r1(0), r2(0);
    const Tensor a = model.forward(t1, in, true, r1).log_probs.value();
    const Tensor b = model.forward(t2, pin, true, r2).log_probs.value();
    for (std::size_t u = 0; u < 9; ++u)
      for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(a(u, c), b(perm[u], c), 1e-10) << to_string(type);
  }
}

TEST(Model, MeanReadoutIsPermutationInvariant) {
  std::vector<Graph> gs{oracle::random_graph(6, 0.5, 1), oracle::random_graph(7, 0.5, 2)};
  const auto u = disjoint_union(gs);
  std::vector<std::uint32_t> seg(u.graph.num_nodes());
  for (std::size_t gi = 0; gi < 2; ++gi)
    for (std::size_t k = u.node_offsets[gi]; k < u.node_offsets[gi + 1]; ++k) seg[k] = static_cast<std::uint32_t>(gi);
  auto cfg = small_config(ConvType::gin, false);
  cfg.readout = Readout::mean;
  GnnModel model(cfg, 3);
  ModelInput in = small_input(u.graph, 0);
  in.segments = seg;
  in.num_segments = 2;
  const Tensor base = predict_log_probs(model, in);
  ASSERT_EQ(base.rows(), 2u);

  Rng rng(9);
  std::vector<NodeId> perm(u.graph.num_nodes());
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(std::span<NodeId>(perm));
  const Graph pg = u.graph.permuted(perm);
  std::vector<std::uint32_t> pseg(seg.size());
  ModelInput pin;
  pin.graph = &pg;
  pin.initial = Tensor(in.initial.shape);
  for (std::size_t k = 0; k < perm.size(); ++k) {
    pseg[perm[k]] = seg[k];
    for (std::size_t c = 0; c < 2; ++c) pin.initial(perm[k], c) = in.initial(k, c);
  }
  pin.segments = pseg;
  pin.num_segments = 2;
  const Tensor moved = predict_log_probs(model, pin);
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(base.data[i], moved.data[i], 1e-10);
}

TEST(Model, CheckpointRoundTrip) {
  const Graph g = oracle::random_graph(10, 0.3, 4);
  auto cfg = small_config(ConvType::gat, true, 2, ConcatMethod::ntn);
  GnnModel model(cfg, 8);
  ModelInput in = small_input(g, 2);
  Supervision sup{std::vector<ClassId>{0, 1, 2, 0, 1, 2, 0, 1, 2, 0}, {0, 1, 2, 3, 4, 5}, {6, 7}, {8, 9}};
  TrainOptions opt;
  opt.epochs = 5;
  train_classifier(model, in, sup, opt, 1);
  const auto j = checkpoint_json(model);
  GnnModel back = model_from_checkpoint(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(predict_log_probs(back, in), predict_log_probs(model, in));
  auto bad = j;
  bad["version"] = 99;
  EXPECT_THROW(model_from_checkpoint(bad), ParseError);
  bad = j;
  bad["format"] = "other";
  EXPECT_THROW(model_from_checkpoint(bad), ParseError);
}

TEST(Model, InvalidConfigurations) {
  auto cfg = small_config(ConvType::gin, false);
  cfg.layers.depth = 0;
  EXPECT_THROW(GnnModel(cfg, 1), UsageError);
  cfg = small_config(ConvType::gin, false);
  cfg.layers.dropout_p = 1.0;
  EXPECT_THROW(GnnModel(cfg, 1), UsageError);
  GnnModel ok(small_config(ConvType::gin, false), 1);
  const Graph g = oracle::path(3);
  ModelInput in;
  in.graph = &g;
  in.initial = rnd({4, 2}, 1);
  EXPECT_THROW(predict(ok, in), ShapeError);
}

// ---------------------------------------------------------------------------
// Optimizer and training

TEST(Optim, AdamMatchesHandComputedSteps) {
  std::vector<Parameter> p{{"w", Tensor({2}, std::vector<double>{1.0, -2.0}), Tensor({2}, std::vector<double>{0.5, -0.1})}};
  AdamState st;
  AdamOptions opt{0.1, 0.9, 0.999, 1e-8, 0.0};
  adam_step(p, st, opt);
  // The first bias-corrected step is lr * g / (|g| + eps).
  EXPECT_NEAR(p[0].value.data[0], 1.0 - 0.1, 1e-7);
  EXPECT_NEAR(p[0].value.data[1], -2.0 + 0.1, 1e-7);
  p[0].grad.data = {0.5, 0.3};
  adam_step(p, st, opt);
  auto step = [](double g1, double g2) {
    const double m = 0.9 * 0.1 * g1 + 0.1 * g2;
    const double v = 0.999 * 0.001 * g1 * g1 + 0.001 * g2 * g2;
    return 0.1 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  };
  const double w0 = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), w1 = -2.0 + 0.1 * 0.1 / (0.1 + 1e-8);
  EXPECT_NEAR(p[0].value.data[0], w0 - step(0.5, 0.5), 1e-12);
  EXPECT_NEAR(p[0].value.data[1], w1 - step(-0.1, 0.3), 1e-12);
}

TEST(Optim, WeightDecayPullsTowardZero) {
  std::vector<Parameter> p{{"w", Tensor({1}, std::vector<double>{3.0}), Tensor({1}, std::vector<double>{0.0})}};
  AdamState st;
  adam_step(p, st, {0.01, 0.9, 0.999, 1e-8, 5e-4});
  EXPECT_LT(p[0].value.data[0], 3.0);
}

TEST(Optim, UntouchedParametersStay) {
  std::vector<Parameter> p{{"w", Tensor({2}, 1.0), Tensor{}}};
  AdamState st;
  adam_step(p, st, {});
  EXPECT_EQ(p[0].value.data, (std::vector<double>{1.0, 1.0}));
}

TEST(Train, LearnsSeparableTaskAndIsDeterministic) {
  const Graph g = generate_random_geometric(120, std::nullopt, 4);
  const auto deg = degree(g);
  const auto labels = apply_bins(deg, fit_bins(deg, {3, BinStrategy::equal_frequency, 0.0, {}}));
  const auto split = split_indices(120, {}, 2);
  Supervision sup{labels, split.train, split.val, split.test};
  ModelInput in;
  in.graph = &g;
  in.initial = standardized_columns(build_feature_matrix(g).values, std::vector<std::size_t>{1}, split.train);
  ModelConfig cfg;
  cfg.layers.conv_type = ConvType::mlp;
  cfg.layers.out_dim = 3;
  cfg.initial_dim = 1;
  GnnModel a(cfg, 3), b(cfg, 3);
  const auto ra = train_classifier(a, in, sup, {}, 9);
  const auto rb = train_classifier(b, in, sup, {}, 9);
  EXPECT_GT(ra.test_accuracy, 0.9);
  EXPECT_EQ(ra.test_accuracy, rb.test_accuracy);
  EXPECT_EQ(ra.loss_curve, rb.loss_curve);
  EXPECT_LE(ra.best_epoch, ra.epochs_run);
  EXPECT_LE(ra.epochs_run, 200u);
  EXPECT_LT(ra.loss_curve.back(), ra.loss_curve.front());
}

TEST(Train, EarlyStoppingHonorsPatience) {
  const Graph g = oracle::path(10);
  // Validation labels contradict training labels, so validation never improves for long.
  Supervision sup{std::vector<ClassId>{0, 0, 0, 0, 0, 0, 1, 1, 0, 0}, {0, 1, 2, 3, 4, 5}, {6, 7}, {8, 9}};
  ModelInput in;
  in.graph = &g;
  in.initial = Tensor({10, 1}, 1.0);
  ModelConfig cfg;
  cfg.layers.out_dim = 2;
  cfg.initial_dim = 1;
  GnnModel m(cfg, 1);
  TrainOptions opt;
  opt.patience = 3;
  const auto r = train_classifier(m, in, sup, opt, 1);
  EXPECT_EQ(r.test_accuracy, 1.0);
  EXPECT_LT(r.epochs_run, 200u);
  EXPECT_EQ(r.epochs_run, r.best_epoch + 1 + opt.patience);
  Supervision empty{sup.labels, {}, {}, {}};
  EXPECT_THROW(train_classifier(m, in, empty, opt, 1), DataError);
}

TEST(Train, StandardizedColumns) {
  Matrix m(4, 2);
  m.values = {1, 5, 2, 5, 3, 5, 100, 5};
  const std::vector<std::size_t> rows{0, 1, 2};
  const auto t = standardized_columns(m, std::vector<std::size_t>{0, 1}, rows);
  EXPECT_NEAR(t(0, 0), -std::sqrt(1.5), 1e-12);
  EXPECT_NEAR(t(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(t(3, 0), 98 / std::sqrt(2.0 / 3.0), 1e-9);
  EXPECT_EQ(t(2, 1), 5.0);
}

TEST(Stats, PopulationStd) {
  const std::vector<double> v{1, 2, 3, 4};
  const auto ms = mean_std(v);
  EXPECT_DOUBLE_EQ(ms.mean, 2.5);
  EXPECT_DOUBLE_EQ(ms.std, std::sqrt(1.25));
  EXPECT_EQ(mean_std(std::vector<double>{}).mean, 0.0);
}
