#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "necti/core.hpp"
#include "necti/numkit.hpp"

namespace necti::numkit {
namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Tensor t = Tensor::matrix(r, c);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

TEST(Kernels, IdentityMatmul) {
  std::mt19937_64 rng(1);
  Tensor eye = Tensor::matrix(3, 3);
  for (int i = 0; i < 3; ++i) eye(i, i) = 1;
  Tensor x = random_matrix(3, 4, rng);
  Graph g;
  auto y = g.matmul(g.constant(eye), g.constant(x));
  EXPECT_EQ(g.value(y), x);
}

TEST(Kernels, MatmulNtAndTranspose) {
  std::mt19937_64 rng(2);
  Tensor a = random_matrix(2, 3, rng);
  Tensor b = random_matrix(4, 3, rng);
  Graph g;
  auto va = g.constant(a);
  auto vb = g.constant(b);
  const Tensor& nt = g.value(g.matmul_nt(va, vb));
  const Tensor& ref = g.value(g.matmul(va, g.transpose(vb)));
  ASSERT_EQ(nt.shape(), (std::vector<std::size_t>{2, 4}));
  for (std::size_t i = 0; i < nt.size(); ++i) EXPECT_NEAR(nt[i], ref[i], 1e-12);
}

TEST(Kernels, ShapeMismatchThrows) {
  Graph g;
  auto a = g.constant(Tensor::matrix(2, 3));
  auto b = g.constant(Tensor::matrix(2, 3));
  EXPECT_THROW(g.matmul(a, b), Error);
  EXPECT_THROW(g.add(a, g.constant(Tensor::matrix(3, 2))), Error);
}

TEST(Kernels, CrossEntropyUniformIsLn2) {
  Graph g;
  auto loss = g.cross_entropy_rows(g.constant(Tensor::matrix(1, 2)), {0});
  EXPECT_NEAR(g.scalar(loss), std::log(2.0), 1e-15);
}

TEST(Kernels, WindowsAndMaxRows) {
  Graph g;
  auto x = g.constant(Tensor::from_rows(4, 1, {1, 5, 2, 3}));
  const Tensor& w = g.value(g.windows(x, 3));
  ASSERT_EQ(w.shape(), (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(w.values(), (std::vector<double>{1, 5, 2, 5, 2, 3}));
  const Tensor& m = g.value(g.max_rows(g.windows(x, 3)));
  EXPECT_EQ(m.values(), (std::vector<double>{5, 5, 3}));
}

TEST(Kernels, PairBilinear) {
  // left row i holds L blocks of k values; out[i][l] = <block l, right row i>.
  Graph g;
  auto left = g.constant(Tensor::from_rows(1, 4, {1, 2, 3, 4}));
  auto right = g.constant(Tensor::from_rows(1, 2, {10, 1}));
  const Tensor& out = g.value(g.pair_bilinear(left, right, 2));
  EXPECT_EQ(out.values(), (std::vector<double>{12, 34}));
}

TEST(Kernels, NonFiniteDetected) {
  Graph g;
  auto x = g.constant(Tensor::from_rows(1, 1, {std::nan("")}));
  EXPECT_THROW(g.check_finite(x, "x"), Error);
  EXPECT_THROW(g.backward(g.sum(x)), Error);
}

TEST(Dropout, IdentityWhenOffOrZero) {
  std::mt19937_64 rng(3);
  Tensor x = random_matrix(5, 5, rng);
  Graph eval_graph(false, 7);
  EXPECT_EQ(eval_graph.value(eval_graph.dropout(eval_graph.constant(x), 0.5)), x);
  Graph train_graph(true, 7);
  EXPECT_EQ(train_graph.value(train_graph.dropout(train_graph.constant(x), 0.0)), x);
}

TEST(Dropout, InvertedScalingKeepsExpectation) {
  const std::size_t n = 100000;
  Graph g(true, 99);
  auto y = g.dropout(g.constant(Tensor::matrix(1, n, 1.0)), 0.33);
  double mean = 0;
  std::size_t zeros = 0;
  for (double v : g.value(y).values()) {
    mean += v;
    zeros += v == 0.0;
  }
  mean /= static_cast<double>(n);
  EXPECT_NEAR(mean, 1.0, 0.01);
  EXPECT_NEAR(static_cast<double>(zeros) / n, 0.33, 0.01);
}

TEST(GradCheck, LinearFunction) {
  std::mt19937_64 rng(4);
  ParamStore store;
  store.add("w", random_matrix(3, 2, rng));
  Tensor x = random_matrix(4, 3, rng);
  auto result = grad_check(
      [&](Graph& g) { return g.sum(g.matmul(g.constant(x), g.param(store, "w"))); }, store);
  EXPECT_LT(result.max_rel_error, 1e-6);
  EXPECT_EQ(result.n_checked, 6u);
}

TEST(GradCheck, TwoLayerTanhNetwork) {
  std::mt19937_64 rng(5);
  ParamStore store;
  store.add("w1", random_matrix(4, 6, rng, 0.5));
  store.add("b1", random_matrix(1, 6, rng, 0.1));
  store.add("w2", random_matrix(6, 3, rng, 0.5));
  Tensor x = random_matrix(5, 4, rng);
  auto result = grad_check(
      [&](Graph& g) {
        auto h = g.tanh(g.add_row(g.matmul(g.constant(x), g.param(store, "w1")),
                                  g.param(store, "b1")));
        return g.cross_entropy_rows(g.matmul(h, g.param(store, "w2")), {0, 2, 1, 1, 0});
      },
      store);
  EXPECT_LT(result.max_rel_error, 1e-4) << result.worst_param;
}

// Every kernel at dims <= 8 against central differences.
TEST(GradCheck, EveryKernel) {
  std::mt19937_64 rng(6);
  ParamStore store;
  store.add("a", random_matrix(4, 3, rng));
  store.add("b", random_matrix(4, 3, rng));
  store.add("c", random_matrix(3, 5, rng));
  store.add("row", random_matrix(1, 3, rng));
  store.add("col", random_matrix(4, 1, rng));
  store.add("emb", random_matrix(6, 3, rng));
  store.add("pl", random_matrix(4, 6, rng));
  Tensor weights = random_matrix(8, 8, rng);
  // Weighted sum so that every output coordinate gets a distinct gradient.
  auto reduce = [&](Graph& g, Var v) {
    const Tensor& val = g.value(v);
    Tensor w = Tensor::matrix(val.rows(), val.cols());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = weights[i % weights.size()];
    return g.sum(g.mul(v, g.constant(w)));
  };
  const std::vector<std::pair<std::string, std::function<Var(Graph&)>>> cases = {
      {"matmul", [&](Graph& g) { return g.matmul(g.param(store, "a"), g.param(store, "c")); }},
      {"matmul_nt", [&](Graph& g) { return g.matmul_nt(g.param(store, "a"), g.param(store, "b")); }},
      {"add", [&](Graph& g) { return g.add(g.param(store, "a"), g.param(store, "b")); }},
      {"add_row", [&](Graph& g) { return g.add_row(g.param(store, "a"), g.param(store, "row")); }},
      {"add_col", [&](Graph& g) { return g.add_col(g.param(store, "a"), g.param(store, "col")); }},
      {"mul", [&](Graph& g) { return g.mul(g.param(store, "a"), g.param(store, "b")); }},
      {"scale", [&](Graph& g) { return g.scale(g.param(store, "a"), -1.7); }},
      {"tanh", [&](Graph& g) { return g.tanh(g.param(store, "a")); }},
      {"relu", [&](Graph& g) { return g.relu(g.param(store, "a")); }},
      {"sigmoid", [&](Graph& g) { return g.sigmoid(g.param(store, "a")); }},
      {"concat_cols",
       [&](Graph& g) { return g.concat_cols({g.param(store, "a"), g.param(store, "b")}); }},
      {"concat_rows",
       [&](Graph& g) { return g.concat_rows({g.param(store, "row"), g.param(store, "a")}); }},
      {"slice_cols", [&](Graph& g) { return g.slice_cols(g.param(store, "c"), 1, 3); }},
      {"slice_rows", [&](Graph& g) { return g.slice_rows(g.param(store, "a"), 1, 2); }},
      {"gather_rows", [&](Graph& g) { return g.gather_rows(g.param(store, "a"), {3, 0, 3}); }},
      {"transpose", [&](Graph& g) { return g.transpose(g.param(store, "c")); }},
      {"lookup",
       [&](Graph& g) {
         std::vector<int> rows = {5, 1, 5, 0};
         return g.lookup(store, "emb", rows);
       }},
      {"windows", [&](Graph& g) { return g.windows(g.param(store, "a"), 3); }},
      {"max_rows", [&](Graph& g) { return g.max_rows(g.param(store, "a")); }},
      {"cross_entropy_rows",
       [&](Graph& g) { return g.cross_entropy_rows(g.param(store, "a"), {0, 2, 1, 2}); }},
      {"pair_bilinear",
       [&](Graph& g) { return g.pair_bilinear(g.param(store, "pl"), g.param(store, "b"), 2); }},
  };
  for (const auto& [name, build] : cases) {
    auto result = grad_check([&](Graph& g) { return reduce(g, build(g)); }, store);
    EXPECT_LT(result.max_rel_error, 1e-4) << name << " " << result.worst_param;
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParamStore store;
  store.add("w", Tensor::from_rows(1, 2, {0.5, -0.25}));
  adam_step(store, 0.002);
  EXPECT_EQ(store.at("w").value.values(), (std::vector<double>{0.5, -0.25}));
  EXPECT_EQ(store.step(), 1u);
}

TEST(Adam, ConstantGradientDescends) {
  ParamStore store;
  store.add("w", Tensor::from_rows(1, 1, {0.0}));
  double previous = 0;
  for (int i = 0; i < 20; ++i) {
    store.at("w").grad[0] = 1.0;
    adam_step(store, 0.01);
    EXPECT_LT(store.at("w").value[0], previous);
    previous = store.at("w").value[0];
    EXPECT_EQ(store.at("w").grad[0], 0.0);
  }
}

TEST(Adam, FirstStepOnQuadraticMovesByLearningRate) {
  // f(w) = w^2 at w = 1: the bias-corrected first step is lr * g / (|g| + eps).
  ParamStore store;
  store.add("w", Tensor::from_rows(1, 1, {1.0}));
  Graph g(false, 0, &store);
  auto w = g.param(store, "w");
  g.backward(g.sum(g.mul(w, w)));
  EXPECT_DOUBLE_EQ(store.at("w").grad[0], 2.0);
  adam_step(store, 0.002);
  EXPECT_NEAR(1.0 - store.at("w").value[0], 0.002, 1e-10);
}

TEST(ParamStore, ClipAndDuplicates) {
  ParamStore store;
  store.add("a", Tensor::from_rows(1, 2, {0, 0}));
  EXPECT_THROW(store.add("a", Tensor::matrix(1, 1)), Error);
  store.at("a").grad = Tensor::from_rows(1, 2, {3, 4});
  EXPECT_DOUBLE_EQ(store.clip_grad_norm(1.0), 5.0);
  EXPECT_NEAR(store.grad_norm(), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(store.clip_grad_norm(5.0), 1.0);
  EXPECT_NEAR(store.grad_norm(), 1.0, 1e-12);
}

TEST(Determinism, SameSeedSameForwardBackward) {
  auto run = [] {
    std::mt19937_64 rng(8);
    ParamStore store;
    store.add("w", random_matrix(6, 6, rng));
    Graph g(true, 1234, &store);
    auto x = g.dropout(g.tanh(g.param(store, "w")), 0.33);
    g.backward(g.cross_entropy_rows(x, {0, 1, 2, 3, 4, 5}));
    return std::make_pair(g.value(x), store.at("w").grad);
  };
  auto first = run();
  auto second = run();
  EXPECT_EQ(first.first, second.first);
  EXPECT_EQ(first.second, second.second);
}

}  // namespace
}  // namespace necti::numkit
