#include <doctest.h>

#include <random>

#include "cnp/grad_suite.hpp"
#include "cnp/gradcheck.hpp"
#include "cnp/graph.hpp"
#include "cnp/tape.hpp"
#include "cnp/training.hpp"
#include "oracles.hpp"

using namespace cnp;

namespace {

template <typename T>
TensorT<T> rand_tensor(Shape s, unsigned seed, double stddev = 1.0) {
  std::mt19937 rng(seed);
  return randn<T>(s, rng, stddev);
}

}  // namespace

TEST_CASE("backward: sum of a parameter gives an all-ones gradient") {
  Tape<float> t;
  auto p = t.leaf(rand_tensor<float>({1, 2, 3, 3}, 5), true);
  t.backward(t.reduce_sum(p));
  for (float v : t.grad(p).data) CHECK(v == doctest::Approx(1.0f));
}

TEST_CASE("backward: a parameter used twice accumulates both paths") {
  // f = sum(x + 2x) => df/dx = 3 everywhere, confirmed by finite differences
  TensorD x = rand_tensor<double>({1, 1, 3, 3}, 6);
  ScalarFn fn = [](Tape<double>& t, Tape<double>::Id xi) {
    return t.reduce_sum(t.add(xi, t.scale(xi, 2.0)));
  };
  CHECK(gradcheck(fn, x, 1e-5) < 1e-9);

  Tape<double> t;
  auto xi = t.leaf(x, true);
  t.backward(t.reduce_sum(t.add(xi, t.scale(xi, 2.0))));
  for (double v : t.grad(xi).data) CHECK(v == doctest::Approx(3.0));
}

TEST_CASE("backward: disconnected parameter keeps a zero gradient") {
  Tape<float> t;
  auto used = t.leaf(rand_tensor<float>({1, 1, 2, 2}, 7), true);
  auto unused = t.leaf(rand_tensor<float>({1, 1, 2, 2}, 8), true);
  t.backward(t.reduce_sum(used));
  CHECK(t.has_grad(used));
  CHECK_FALSE(t.has_grad(unused));
}

TEST_CASE("backward requires a scalar root") {
  Tape<float> t;
  auto x = t.leaf(rand_tensor<float>({1, 1, 2, 2}, 9), true);
  CHECK_THROWS_AS(t.backward(x), ConfigError);
}

TEST_CASE("gradcheck: quadratic gradient is exact") {
  // f = 0.5 * |x|^2, gradient x itself
  TensorD x = rand_tensor<double>({1, 2, 4, 4}, 11);
  ScalarFn fn = [](Tape<double>& t, Tape<double>::Id xi) {
    return t.scale(t.reduce_sum(t.mul(xi, xi)), 0.5);
  };
  CHECK(gradcheck(fn, x, 1e-5) < 1e-9);
}

TEST_CASE("gradcheck: conv-prelu-maxpool chain on 1x2x8x8") {
  TensorD x = rand_tensor<double>({1, 2, 8, 8}, 12);
  const TensorD w = rand_tensor<double>({3, 2, 3, 3}, 13, 0.5);
  const TensorD b = rand_tensor<double>({1, 3, 1, 1}, 14, 0.2);
  const TensorD slopes = TensorD::full({1, 3, 1, 1}, 0.25);
  ScalarFn fn = [&](Tape<double>& t, Tape<double>::Id xi) {
    auto y = t.conv2d(xi, t.leaf(w), t.leaf(b), 1, 1);
    y = t.prelu(y, t.leaf(slopes));
    return t.reduce_mean(t.maxpool2(y));
  };
  CHECK(gradcheck(fn, x, 1e-5) < 1e-6);
}

TEST_CASE("gradcheck: full 2-level pyramid loss w.r.t. the input") {
  CnpConfig c;
  c.levels = 2;
  c.feature_channels = 8;
  c.embed_channels = 4;
  c.input_channels = 3;
  c.output_channels = 1;
  c.residual = true;
  c.residual_channel = 1;
  ModelGraph g = build_cnp(c);
  init_params(g, 77);

  std::mt19937 rng(15);
  TensorD x = rand_uniform<double>({1, 3, 16, 16}, rng, 0.05, 0.95);
  const TensorD target = rand_uniform<double>({1, 1, 16, 16}, rng, 0.05, 0.95);
  ScalarFn fn = [&](Tape<double>& t, Tape<double>::Id xi) {
    auto params = g.bind_params<double>(t, false);
    auto pred = g.emit<double>(t, xi, params);
    return build_loss<double>(t, pred, t.leaf(target), 1.0);
  };
  CHECK(gradcheck(fn, x, 1e-6) < 1e-5);
}

TEST_CASE("gradient suite: every op within 1e-5 over screened seeds") {
  const GradSuiteResult r = run_gradient_suite(5, /*include_models=*/false);
  for (const auto& e : r.entries) {
    INFO(e.name);
    CHECK(e.seeds == 5);
    CHECK(e.max_rel_error < 1e-5);
  }
}

TEST_CASE("conv2d gradients match the oracle-computed adjoints") {
  // dL/dinput and dL/dweight of sum(conv(x,w)) equal tconv-style adjoints;
  // cross-checked through finite differences on a small case.
  TensorD x = rand_tensor<double>({1, 2, 5, 5}, 16);
  TensorD w = rand_tensor<double>({2, 2, 3, 3}, 17, 0.5);
  MultiScalarFn fn = [](Tape<double>& t, const std::vector<Tape<double>::Id>& p) {
    return t.reduce_sum(t.conv2d(p[0], p[1], -1, 1, 1));
  };
  CHECK(gradcheck_many(fn, {x, w}, 1e-5) < 1e-8);
}
