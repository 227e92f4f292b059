#include <doctest.h>

#include <cmath>
#include <random>

#include "docentr/error.hpp"
#include "docentr/numerics/grad_check.hpp"
#include "docentr/numerics/ops.hpp"

using namespace docentr;
using namespace docentr::numerics;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, float lo = -1, float hi = 1) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<float> u(lo, hi);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("tensor rejects zero dimensions and wrong value counts") {
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, {1.0f, 2.0f, 3.0f}), DimensionError);
  Tensor t(Shape{2, 3}, 1.5f);
  CHECK(t.size() == 6);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(t.reshaped({4}), DimensionError);
}

TEST_CASE("matmul small cases") {
  Graph<float> g;
  auto a = g.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  auto b = g.constant(Tensor({2, 2}, {3, 4, 5, 6}));
  CHECK(g.value(matmul(g, a, b)) == Tensor({2, 2}, {3, 4, 5, 6}));

  auto r = g.constant(Tensor({1, 2}, {1, 2}));
  auto c = g.constant(Tensor({2, 1}, {3, 4}));
  CHECK(g.value(matmul(g, r, c))[0] == 11.0f);

  CHECK_THROWS_AS(matmul(g, a, r), DimensionError);
}

TEST_CASE("matmul matches a triple loop on random shapes") {
  std::mt19937_64 rng(7);
  for (std::size_t m = 1; m <= 8; m += 3)
    for (std::size_t k = 1; k <= 8; k += 2)
      for (std::size_t n = 1; n <= 8; n += 3) {
        for (std::size_t batch : {1, 3}) {
          Tensor a = random_tensor({batch, m, k}, rng), b = random_tensor({batch, k, n}, rng);
          Graph<float> g;
          const Tensor out = g.value(matmul(g, g.constant(a), g.constant(b)));
          for (std::size_t z = 0; z < batch; ++z)
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < n; ++j) {
                double ref = 0;
                for (std::size_t q = 0; q < k; ++q) ref += a[(z * m + i) * k + q] * b[(z * k + q) * n + j];
                CHECK(std::abs(out[(z * m + i) * n + j] - ref) < 1e-5);
              }
        }
      }
}

TEST_CASE("matmul broadcasts a single right-hand matrix and transposes on request") {
  std::mt19937_64 rng(3);
  Tensor a = random_tensor({2, 3, 4}, rng), b = random_tensor({1, 5, 4}, rng);
  Graph<float> g;
  const Tensor out = g.value(matmul(g, g.constant(a), g.constant(b), Transpose::Yes));
  REQUIRE(out.shape() == Shape{2, 3, 5});
  for (std::size_t z = 0; z < 2; ++z)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        double ref = 0;
        for (std::size_t q = 0; q < 4; ++q) ref += a[(z * 3 + i) * 4 + q] * b[j * 4 + q];
        CHECK(std::abs(out[(z * 3 + i) * 5 + j] - ref) < 1e-5);
      }
}

TEST_CASE("softmax examples and properties") {
  Graph<double> g;
  auto u = g.value(softmax(g, g.constant(TensorD({3}, {0, 0, 0})), 0));
  for (double v : u.values()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

  auto two = g.value(softmax(g, g.constant(TensorD({2}, {0, std::log(2.0)})), 0));
  CHECK(two[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(two[1] == doctest::Approx(2.0 / 3).epsilon(1e-12));

  std::mt19937_64 rng(11);
  Tensor x = random_tensor({4, 5, 6}, rng, -20, 20);
  Tensor shifted = x;
  for (auto& v : shifted.values()) v += 37.5f;
  for (std::size_t axis = 0; axis < 3; ++axis) {
    Graph<float> gf;
    const Tensor a = gf.value(softmax(gf, gf.constant(x), axis));
    const Tensor b = gf.value(softmax(gf, gf.constant(shifted), axis));
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] >= 0.0f);
      CHECK(std::abs(a[i] - b[i]) < 1e-6);
    }
    const std::size_t len = x.dim(axis);
    std::size_t inner = 1;
    for (std::size_t d = axis + 1; d < 3; ++d) inner *= x.dim(d);
    const std::size_t outer = x.size() / (len * inner);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        double s = 0;
        for (std::size_t l = 0; l < len; ++l) s += a[(o * len + l) * inner + in];
        CHECK(std::abs(s - 1.0) < 1e-6);
      }
  }
}

TEST_CASE("softmax survives large logits") {
  Graph<float> g;
  const Tensor s = g.value(softmax(g, g.constant(Tensor({2}, {1000.0f, 1000.0f})), 0));
  CHECK(s[0] == doctest::Approx(0.5));
}

TEST_CASE("layer_norm examples") {
  Graph<double> g;
  auto gamma = g.constant(TensorD({4}, 1.0)), beta = g.constant(TensorD({4}, 0.0));
  const TensorD flat = g.value(layer_norm(g, g.constant(TensorD({1, 4}, {5, 5, 5, 5})), gamma, beta, 1e-6));
  for (double v : flat.values()) CHECK(v == 0.0);

  auto g2 = g.constant(TensorD({2}, 1.0)), b2 = g.constant(TensorD({2}, 0.0));
  const TensorD pair = g.value(layer_norm(g, g.constant(TensorD({1, 2}, {1, 3})), g2, b2, 0.0));
  CHECK(pair[0] == doctest::Approx(-1.0));
  CHECK(pair[1] == doctest::Approx(1.0));

  CHECK_THROWS_AS(layer_norm(g, g.constant(TensorD({1, 4}, 0.0)), gamma, beta, -1.0), ContractError);
}

TEST_CASE("layer_norm normalizes rows with non-trivial variance") {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({16, 32}, rng, -3, 5);
  Graph<float> g;
  const Tensor y = g.value(
      layer_norm(g, g.constant(x), g.constant(Tensor({32}, 1.0f)), g.constant(Tensor({32}, 0.0f)), 1e-6));
  for (std::size_t r = 0; r < 16; ++r) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < 32; ++c) mean += y[r * 32 + c];
    mean /= 32;
    for (std::size_t c = 0; c < 32; ++c) var += (y[r * 32 + c] - mean) * (y[r * 32 + c] - mean);
    var /= 32;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-3);
  }
}

TEST_CASE("gelu uses the erf form") {
  Graph<double> g;
  const TensorD y = g.value(gelu(g, g.constant(TensorD({4}, {0.0, 1.0, -10.0, 30.0}))));
  CHECK(y[0] == 0.0);
  CHECK(y[1] == doctest::Approx(0.841345).epsilon(1e-6));
  CHECK(std::abs(y[2]) < 1e-6);
  CHECK(y[3] == doctest::Approx(30.0));
}

TEST_CASE("linear examples") {
  Graph<float> g;
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(g.value(linear(g, g.constant(x), g.constant(eye), g.constant(Tensor({3}, 0.0f)))) == x);

  const Tensor y = g.value(
      linear(g, g.constant(Tensor({1, 2}, {1, 2})), g.constant(Tensor({2, 1}, {1, 1})), g.constant(Tensor({1}, {0.5f}))));
  CHECK(y[0] == 3.5f);
  CHECK_THROWS_AS(linear(g, g.constant(x), g.constant(Tensor({2, 2})), g.constant(Tensor({2}))), DimensionError);
}

TEST_CASE("linear weight gradient matches central differences") {
  std::mt19937_64 rng(1);
  Parameter w("w", random_tensor({3, 2}, rng));
  Parameter b("b", random_tensor({2}, rng));
  const Tensor x = random_tensor({4, 3}, rng);
  LossBuilder<float> loss = [&](Graph<float>& g) {
    return sum(g, linear(g, g.constant(x), g.parameter(w), g.parameter(b)));
  };
  std::vector<Parameter*> ps{&w, &b};
  const auto r = grad_check<float>(loss, ps, {.step = 1e-3});
  CHECK(r.checked == 8);
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("backward basics") {
  Parameter p("p", Tensor::scalar(3.0f));
  {
    Graph<float> g;
    g.backward(g.parameter(p));
    CHECK(p.grad.item() == 1.0f);
  }
  p.zero_grad();
  {
    Graph<float> g;
    auto v = g.parameter(p);
    g.backward(mul(g, v, v));
    CHECK(p.grad.item() == 6.0f);
  }
  Parameter v("v", Tensor({2}, {1.0f, 2.0f}));
  Graph<float> g;
  CHECK_THROWS_AS(g.backward(g.parameter(v)), ContractError);
}

TEST_CASE("two backward passes accumulate exactly twice the gradient") {
  std::mt19937_64 rng(2);
  Parameter w("w", random_tensor({4, 3}, rng));
  Parameter b("b", random_tensor({3}, rng));
  const Tensor x = random_tensor({5, 4}, rng);
  const Tensor target = random_tensor({5, 3}, rng);
  Graph<float> g;
  auto loss = mse(g, gelu(g, linear(g, g.constant(x), g.parameter(w), g.parameter(b))), target);
  g.backward(loss);
  const Tensor once_w = w.grad, once_b = b.grad;
  g.backward(loss);
  for (std::size_t i = 0; i < w.grad.size(); ++i) CHECK(w.grad[i] == 2.0f * once_w[i]);
  for (std::size_t i = 0; i < b.grad.size(); ++i) CHECK(b.grad[i] == 2.0f * once_b[i]);
}

TEST_CASE("grad_check on a quadratic and on a constant") {
  std::mt19937_64 rng(4);
  BasicParameter<double> theta("theta", random_tensor({3, 3}, rng).cast<double>());
  std::vector<BasicParameter<double>*> ps{&theta};
  LossBuilder<double> quad = [&](Graph<double>& g) {
    auto t = g.parameter(theta);
    return sum(g, mul(g, t, t));
  };
  CHECK(grad_check<double>(quad, ps).max_rel_error < 1e-6);

  LossBuilder<double> constant = [&](Graph<double>& g) {
    g.parameter(theta);
    return g.constant(TensorD::scalar(4.0));
  };
  const auto r = grad_check<double>(constant, ps);
  CHECK(r.max_rel_error == 0.0);
  CHECK(r.worst_analytic == 0.0);
  CHECK(r.worst_numeric == 0.0);
}

TEST_CASE("grad_check samples the requested number of elements") {
  std::mt19937_64 rng(6);
  Parameter w("w", random_tensor({8, 8}, rng));
  std::vector<Parameter*> ps{&w};
  LossBuilder<float> loss = [&](Graph<float>& g) {
    auto v = g.parameter(w);
    return sum(g, mul(g, v, v));
  };
  CHECK(grad_check<float>(loss, ps, {.samples = 10}).checked == 10);
}

TEST_CASE("non-finite values are reported as numeric faults") {
  Graph<float> g;
  auto x = g.constant(Tensor({1}, {3e38f}));
  CHECK_THROWS_AS(scale(g, x, 10.0), NumericFault);
}

TEST_CASE("split_heads and merge_heads are inverse") {
  std::mt19937_64 rng(8);
  const Tensor qkv = random_tensor({2, 5, 3 * 6}, rng);
  Graph<float> g;
  auto in = g.constant(qkv);
  for (std::size_t part = 0; part < 3; ++part) {
    const Tensor merged = g.value(merge_heads(g, split_heads(g, in, part, 3), 3));
    REQUIRE(merged.shape() == Shape{2, 5, 6});
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t n = 0; n < 5; ++n)
        for (std::size_t d = 0; d < 6; ++d) CHECK(merged[(b * 5 + n) * 6 + d] == qkv[(b * 5 + n) * 18 + part * 6 + d]);
  }
}
