#include <doctest.h>

#include <random>

#include "cnp/tape.hpp"
#include "cnp/tensor.hpp"
#include "oracles.hpp"

using namespace cnp;

namespace {

Tensor ones(Shape s) { return Tensor::full(s, 1.0f); }

template <typename T>
TensorT<T> rand_tensor(Shape s, unsigned seed, double stddev = 1.0) {
  std::mt19937 rng(seed);
  return randn<T>(s, rng, stddev);
}

template <typename T>
double dot_all(const TensorT<T>& a, const TensorT<T>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) acc += double(a.data[i]) * double(b.data[i]);
  return acc;
}

}  // namespace

TEST_CASE("conv2d all-ones kernel counts in-window ones") {
  Tape<float> t;
  auto x = t.leaf(ones({1, 1, 3, 3}));
  auto w = t.leaf(ones({1, 1, 3, 3}));
  auto b = t.leaf(Tensor({1, 1, 1, 1}));
  auto y = t.conv2d(x, w, b, 1, 1);
  const Tensor& v = t.value(y);
  CHECK(v.at(0, 0, 1, 1) == doctest::Approx(9.0f));
  CHECK(v.at(0, 0, 0, 0) == doctest::Approx(4.0f));
  CHECK(v.at(0, 0, 0, 2) == doctest::Approx(4.0f));
  CHECK(v.at(0, 0, 2, 0) == doctest::Approx(4.0f));
  CHECK(v.at(0, 0, 2, 2) == doctest::Approx(4.0f));
  CHECK(v.at(0, 0, 0, 1) == doctest::Approx(6.0f));
}

TEST_CASE("conv2d delta kernel is the identity") {
  auto x = rand_tensor<float>({1, 1, 5, 7}, 42);
  Tensor w({1, 1, 3, 3});
  w.at(0, 0, 1, 1) = 1.0f;
  Tape<float> t;
  auto y = t.conv2d(t.leaf(x), t.leaf(w), -1, 1, 1);
  CHECK(oracle::max_abs_diff(t.value(y), x) == 0.0);
}

TEST_CASE("conv2d matches the direct nested-loop oracle") {
  auto x = rand_tensor<float>({1, 2, 5, 5}, 7);
  auto w = rand_tensor<float>({3, 2, 3, 3}, 8);
  std::vector<float> bias = {0.1f, -0.2f, 0.3f};
  Tensor bias_t({1, 3, 1, 1});
  bias_t.data = {0.1f, -0.2f, 0.3f};

  Tape<float> t;
  auto y = t.conv2d(t.leaf(x), t.leaf(w), t.leaf(bias_t), 1, 1);
  const Tensor ref = oracle::conv2d(x, w, bias, 1, 1);
  CHECK(oracle::max_rel_diff(t.value(y), ref) < 1e-5);
}

TEST_CASE("conv2d oracle sweep over shapes and strides") {
  for (int b : {1, 2})
    for (int ic : {1, 3})
      for (int oc : {1, 4})
        for (int hw : {4, 9})
          for (int k : {1, 3})
            for (int stride : {1, 2}) {
              if (hw < k) continue;
              const unsigned seed = unsigned(b * 100000 + ic * 10000 + oc * 1000 + hw * 10 +
                                             k * 2 + stride);
              auto x = rand_tensor<float>({b, ic, hw, hw}, seed);
              auto w = rand_tensor<float>({oc, ic, k, k}, seed + 1);
              Tape<float> t;
              auto y = t.conv2d(t.leaf(x), t.leaf(w), -1, stride, k / 2);
              const Tensor ref = oracle::conv2d(x, w, {}, stride, k / 2);
              REQUIRE(t.value(y).shape == ref.shape);
              CHECK(oracle::max_rel_diff(t.value(y), ref) < 1e-5);
            }
}

TEST_CASE("conv2d rejects mismatched channels naming the dimensions") {
  Tape<float> t;
  auto x = t.leaf(ones({1, 2, 4, 4}));
  auto w = t.leaf(ones({1, 3, 3, 3}));
  CHECK_THROWS_WITH_AS(t.conv2d(x, w, -1, 1, 1),
                       doctest::Contains("weight expects 3 input channels"), ConfigError);
}

TEST_CASE("transposed_conv2d scatters a single impulse") {
  Tensor x({1, 1, 2, 2});
  x.at(0, 0, 0, 0) = 1.0f;
  Tape<float> t;
  auto y = t.transposed_conv2d(t.leaf(x), t.leaf(ones({1, 1, 3, 3})), -1);
  const Tensor& v = t.value(y);
  REQUIRE(v.shape == Shape{1, 1, 4, 4});
  // 3x3 block centered at the origin, clipped to bounds
  for (int yy = 0; yy < 4; ++yy)
    for (int xx = 0; xx < 4; ++xx)
      CHECK(v.at(0, 0, yy, xx) == doctest::Approx(yy <= 1 && xx <= 1 ? 1.0f : 0.0f));
}

TEST_CASE("transposed_conv2d frozen scatter-add including overlaps") {
  Tensor x({1, 1, 2, 2});
  x.data = {1, 2, 3, 4};
  Tape<float> t;
  auto y = t.transposed_conv2d(t.leaf(x), t.leaf(ones({1, 1, 3, 3})), -1);
  const float expect[4][4] = {
      {1, 3, 2, 2}, {4, 10, 6, 6}, {3, 7, 4, 4}, {3, 7, 4, 4}};
  for (int yy = 0; yy < 4; ++yy)
    for (int xx = 0; xx < 4; ++xx) CHECK(t.value(y).at(0, 0, yy, xx) == doctest::Approx(expect[yy][xx]));
  const Tensor ref = oracle::tconv2d(x, ones({1, 1, 3, 3}), {});
  CHECK(oracle::max_abs_diff(t.value(y), ref) == 0.0);
}

TEST_CASE("transposed_conv2d matches the scatter-add oracle on random input") {
  auto x = rand_tensor<float>({2, 3, 4, 5}, 21);
  auto w = rand_tensor<float>({3, 2, 3, 3}, 22);
  Tensor bias_t({1, 2, 1, 1});
  bias_t.data = {0.5f, -0.25f};
  Tape<float> t;
  auto y = t.transposed_conv2d(t.leaf(x), t.leaf(w), t.leaf(bias_t));
  const Tensor ref = oracle::tconv2d(x, w, {0.5f, -0.25f});
  CHECK(oracle::max_rel_diff(t.value(y), ref) < 1e-5);
}

TEST_CASE("transposed conv is the adjoint of stride-2 conv") {
  // <conv_s2(x), y> == <x, tconv_s2(y)> with shared weights
  for (unsigned seed : {1u, 2u, 3u, 4u}) {
    const int h = 4 + 2 * int(seed % 3);
    auto x = rand_tensor<double>({1, 2, h, h}, seed);
    auto w = rand_tensor<double>({3, 2, 3, 3}, seed + 50);
    auto y = rand_tensor<double>({1, 3, h / 2, h / 2}, seed + 100);

    Tape<double> t;
    auto cx = t.conv2d(t.leaf(x), t.leaf(w), -1, 2, 1);
    REQUIRE(t.value(cx).shape == y.shape);
    // same buffer viewed as a tconv weight [inC=3, outC=2, 3, 3]
    TensorT<double> wt({3, 2, 3, 3});
    wt.data = w.data;
    auto ty = t.transposed_conv2d(t.leaf(y), t.leaf(wt), -1);
    REQUIRE(t.value(ty).shape == x.shape);

    const double lhs = dot_all(t.value(cx), y);
    const double rhs = dot_all(x, t.value(ty));
    CHECK(std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-8}) < 1e-5);
  }
}

TEST_CASE("maxpool2 on constant input is constant") {
  Tape<float> t;
  auto y = t.maxpool2(t.leaf(Tensor::full({1, 2, 4, 4}, 5.0f)));
  for (float v : t.value(y).data) CHECK(v == doctest::Approx(5.0f));
}

TEST_CASE("maxpool2 picks the max and routes the gradient to it") {
  Tensor x({1, 1, 2, 2});
  x.data = {1, 2, 3, 4};
  Tape<float> t;
  auto xi = t.leaf(x, true);
  auto y = t.maxpool2(xi);
  CHECK(t.value(y).data[0] == doctest::Approx(4.0f));
  t.backward(t.reduce_sum(y));
  const Tensor& g = t.grad(xi);
  CHECK(g.data == std::vector<float>{0, 0, 0, 1});
}

TEST_CASE("maxpool2 ties go to the first position in scan order") {
  Tensor x({1, 1, 2, 2});
  x.data = {7, 7, 0, 0};
  Tape<float> t;
  auto xi = t.leaf(x, true);
  auto y = t.maxpool2(xi);
  CHECK(t.value(y).data[0] == doctest::Approx(7.0f));
  t.backward(t.reduce_sum(y));
  CHECK(t.grad(xi).data == std::vector<float>{1, 0, 0, 0});

  // oracle implements the same tie-break
  Tensor dy({1, 1, 1, 1});
  dy.data = {1.0f};
  const Tensor ref = oracle::maxpool2_backward(x, dy);
  CHECK(t.grad(xi).data == ref.data);
}

TEST_CASE("maxpool2 matches oracle on random tensors, gradient mass conserved") {
  for (unsigned seed : {11u, 12u, 13u}) {
    auto x = rand_tensor<float>({2, 3, 6, 6}, seed);
    Tape<float> t;
    auto xi = t.leaf(x, true);
    auto y = t.maxpool2(xi);
    CHECK(oracle::max_abs_diff(t.value(y), oracle::maxpool2(x)) == 0.0);

    t.backward(t.reduce_sum(y));
    const Tensor& g = t.grad(xi);
    // exactly one nonzero per window, sum of deposits equals upstream mass
    double total = 0.0;
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 3; ++c)
        for (int oy = 0; oy < 3; ++oy)
          for (int ox = 0; ox < 3; ++ox) {
            int nz = 0;
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx)
                if (g.at(b, c, 2 * oy + dy, 2 * ox + dx) != 0.0f) ++nz;
            CHECK(nz == 1);
          }
    for (float v : g.data) total += v;
    CHECK(total == doctest::Approx(double(t.value(y).size())));
  }
}

TEST_CASE("maxpool2 rejects odd spatial dims") {
  Tape<float> t;
  auto x = t.leaf(ones({1, 1, 5, 6}));
  CHECK_THROWS_WITH_AS(t.maxpool2(x), doctest::Contains("pad the input"), ConfigError);
}

TEST_CASE("prelu positive and negative branches") {
  Tensor x({1, 1, 1, 2});
  x.data = {3.0f, -4.0f};
  Tensor a({1, 1, 1, 1});
  a.data = {0.25f};
  Tape<float> t;
  auto ai = t.leaf(a, true);
  auto y = t.prelu(t.leaf(x), ai);
  CHECK(t.value(y).data[0] == doctest::Approx(3.0f));
  CHECK(t.value(y).data[1] == doctest::Approx(-1.0f));

  // d out / d a at x=-4 is -4
  t.backward(t.pick(y, 0, 0, 0, 1));
  CHECK(t.grad(ai).data[0] == doctest::Approx(-4.0f));
}

TEST_CASE("prelu matches the elementwise oracle exactly") {
  auto x = rand_tensor<float>({2, 3, 5, 5}, 31);
  std::vector<float> slopes = {0.25f, -0.1f, 0.6f};
  Tensor st({1, 3, 1, 1});
  st.data = slopes;
  Tape<float> t;
  auto y = t.prelu(t.leaf(x), t.leaf(st));
  CHECK(oracle::max_abs_diff(t.value(y), oracle::prelu(x, slopes)) == 0.0);
}

TEST_CASE("fuse: sum with zeros is the identity, concat stacks channels") {
  auto a = rand_tensor<float>({1, 2, 4, 4}, 41);
  Tape<float> t;
  auto ai = t.leaf(a);
  auto sum = t.add(ai, t.leaf(Tensor({1, 2, 4, 4})));
  CHECK(oracle::max_abs_diff(t.value(sum), a) == 0.0);

  auto cat = t.concat_c(ai, t.leaf(ones({1, 3, 4, 4})));
  CHECK(t.value(cat).shape == Shape{1, 5, 4, 4});
  CHECK(t.value(cat).at(0, 1, 2, 2) == a.at(0, 1, 2, 2));
  CHECK(t.value(cat).at(0, 2, 2, 2) == 1.0f);

  CHECK_THROWS_AS(t.add(ai, t.leaf(ones({1, 3, 4, 4}))), ConfigError);
}

TEST_CASE("fuse sum backward passes the upstream gradient to both inputs") {
  auto a = rand_tensor<float>({1, 2, 3, 3}, 51);
  auto b = rand_tensor<float>({1, 2, 3, 3}, 52);
  Tape<float> t;
  auto ai = t.leaf(a, true), bi = t.leaf(b, true);
  auto y = t.reduce_sum(t.add(ai, bi));
  t.backward(y);
  for (float v : t.grad(ai).data) CHECK(v == doctest::Approx(1.0f));
  for (float v : t.grad(bi).data) CHECK(v == doctest::Approx(1.0f));
}

TEST_CASE("forward is deterministic: identical runs produce identical bits") {
  auto x = rand_tensor<float>({1, 3, 8, 8}, 61);
  auto w = rand_tensor<float>({4, 3, 3, 3}, 62);
  auto run = [&]() {
    Tape<float> t;
    auto y = t.maxpool2(t.conv2d(t.leaf(x), t.leaf(w), -1, 1, 1));
    return t.value(y).data;
  };
  CHECK(run() == run());
}
