#include <cmath>
#include <limits>
#include <numbers>

#include "doctest.h"
#include "support.hpp"
#include "tcape/error.hpp"
#include "tcape/ops.hpp"
#include "tcape/optim.hpp"

using namespace tcape;
using testing::check_gradients;
using testing::random_tensor;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kSeeds = 20;

// Weighted sum with fixed random weights so every output entry matters.
Var probe(Graph& g, Var y, std::uint64_t seed) {
  CounterRng rng(seed ^ 0xabcdefULL);
  return ops::sum(ops::mul(y, g.constant(random_tensor(y.value().dims(), rng))));
}

void expect_grads(const std::function<Var(Graph&)>& f, const std::vector<Parameter*>& ps) {
  const auto r = check_gradients(f, ps);
  INFO(r.worst_where);
  CHECK(r.worst_rel < 1e-4);
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t(1, 2) == 6);
  CHECK(t.shape_string() == "[2x3]");
  CHECK(t.reshaped({3, 2})(2, 1) == 6);
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK(Tensor::vector({1, 2}).rows() == 1);
}

TEST_CASE("counter rng is resumable and forkable") {
  CounterRng a(42);
  a.next_u64();
  a.next_u64();
  CounterRng b(42, 2);
  CHECK(a.next_u64() == b.next_u64());
  CHECK(a.fork(1).next_u64() != a.fork(2).next_u64());
  CounterRng c(7);
  double mean = 0.0;
  for (int i = 0; i < 10000; ++i) mean += c.uniform();
  CHECK(mean / 10000 == doctest::Approx(0.5).epsilon(0.02));
  for (int i = 0; i < 1000; ++i) CHECK(c.below(5) < 5);
}

TEST_CASE("matmul examples") {
  Graph g;
  auto id = g.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  auto b = g.constant(Tensor::matrix({{3, 4}, {5, 6}}));
  CHECK(ops::matmul(id, b).value() == Tensor::matrix({{3, 4}, {5, 6}}));
  auto r = ops::matmul(g.constant(Tensor::matrix({{1, 2}})), g.constant(Tensor::matrix({{3}, {4}})));
  CHECK(r.value()(0, 0) == 11);
  try {
    ops::matmul(g.constant(Tensor({2, 3})), g.constant(Tensor({2, 3})));
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient of sum is ones times b transposed") {
  CounterRng rng(3);
  Parameter a{"a", random_tensor({5, 7}, rng)};
  const Tensor bv = random_tensor({7, 3}, rng);
  Graph g;
  const Var bvar = g.constant(bv);
  g.backward(ops::sum(ops::matmul(g.parameter(a), bvar)));
  const Tensor ga = g.grad_of(a);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 7; ++k) {
      double expect = 0.0;
      for (std::size_t j = 0; j < 3; ++j) expect += bv(k, j);
      CHECK(ga(i, k) == doctest::Approx(expect).epsilon(1e-12));
    }
  expect_grads([&](Graph& g2) { return ops::sum(ops::matmul(g2.parameter(a), g2.constant(bv))); }, {&a});
}

TEST_CASE("softmax examples") {
  Graph g;
  auto s = ops::softmax_rows(g.constant(Tensor::matrix({{0, 0}})));
  CHECK(s.value()[0] == 0.5);
  CHECK(s.value()[1] == 0.5);
  auto m = ops::softmax_rows(g.constant(Tensor::matrix({{0, -kInf}})));
  CHECK(m.value()[0] == 1.0);
  CHECK(m.value()[1] == 0.0);
  auto t = ops::softmax_rows(g.constant(Tensor::matrix({{1, 2, 3}})));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(t.value()[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-12));
  CHECK(t.value()[0] == doctest::Approx(0.09003).epsilon(1e-4));
  CHECK(t.value()[1] == doctest::Approx(0.24473).epsilon(1e-4));
  CHECK(t.value()[2] == doctest::Approx(0.66524).epsilon(1e-4));
  CHECK_THROWS_WITH(ops::softmax_rows(g.constant(Tensor::matrix({{-kInf, -kInf}}))),
                    doctest::Contains("fully masked row"));
  const std::vector<unsigned char> mask = {0, 0};
  CHECK_THROWS_WITH(ops::softmax_rows(g.constant(Tensor::matrix({{1, 2}})), &mask),
                    doctest::Contains("fully masked row"));
}

TEST_CASE("softmax rows sum to one and masked entries are exactly zero") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    CounterRng rng(seed);
    const std::size_t r = 1 + rng.below(6), c = 1 + rng.below(6);
    std::vector<unsigned char> mask(r * c);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) mask[i * c + j] = rng.uniform() < 0.6;
      mask[i * c + rng.below(c)] = 1;
    }
    Graph g;
    const auto y = ops::softmax_rows(g.constant(random_tensor({r, c}, rng, 5.0)), &mask).value();
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        s += y(i, j);
        if (!mask[i * c + j]) CHECK(y(i, j) == 0.0);
        CHECK(y(i, j) >= 0.0);
      }
      CHECK(std::fabs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("conv1d examples") {
  Graph g;
  CounterRng rng(1);
  const Tensor x = random_tensor({6, 3}, rng);
  Tensor eye({1, 3, 3}, 0.0);
  for (std::size_t c = 0; c < 3; ++c) eye[c * 3 + c] = 1.0;
  auto y = ops::conv1d(g.constant(x), g.constant(eye), g.constant(Tensor({3}, 0.0)), ops::Padding::same);
  CHECK(y.value() == x);

  Tensor impulse({6, 1}, 0.0);
  impulse[0] = 1.0;
  auto c = ops::conv1d(g.constant(impulse), g.constant(Tensor({3, 1, 1}, 1.0)), g.constant(Tensor({1}, 0.0)),
                       ops::Padding::causal);
  CHECK(c.value().storage() == std::vector<double>{1, 1, 1, 0, 0, 0});

  CHECK_THROWS(ops::conv1d(g.constant(Tensor({2, 1})), g.constant(Tensor({3, 1, 1})), g.constant(Tensor({1})),
                           ops::Padding::valid));
}

TEST_CASE("causal conv1d ignores the future") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    CounterRng rng(100 + seed);
    const std::size_t t = 8, k = 1 + rng.below(5);
    const Tensor x = random_tensor({t, 2}, rng);
    const Tensor w = random_tensor({k, 2, 3}, rng);
    const Tensor b = random_tensor({3}, rng);
    Graph g;
    const auto base = ops::conv1d(g.constant(x), g.constant(w), g.constant(b), ops::Padding::causal).value();
    Tensor x2 = x;
    x2(5, 0) += 3.0;
    x2(5, 1) -= 1.0;
    const auto pert = ops::conv1d(g.constant(x2), g.constant(w), g.constant(b), ops::Padding::causal).value();
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(base(i, j) == pert(i, j));
  }
}

TEST_CASE("elementwise examples") {
  CHECK(ops::apply_unary(ops::Unary::sigmoid, 0.0) == 0.5);
  CHECK(ops::apply_unary(ops::Unary::gelu, 0.0) == 0.0);
  CHECK(ops::apply_unary(ops::Unary::sqrt_signed, -4.0) == -2.0);
  CHECK(ops::apply_unary(ops::Unary::sigmoid, -800.0) >= 0.0);
  CHECK(ops::apply_unary(ops::Unary::sigmoid, 30.0) < 1.0);
  // erf form of GELU
  CHECK(ops::apply_unary(ops::Unary::gelu, 1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
}

TEST_CASE("dropout") {
  Graph g;
  CounterRng rng(5);
  const Var x = g.constant(random_tensor({100}, rng));
  CHECK(ops::dropout(x, 0.0, true, rng).id == x.id);
  CHECK(ops::dropout(x, 0.1, false, rng).value() == x.value());
  CHECK_THROWS(ops::dropout(x, 1.0, true, rng));
  CHECK_THROWS(ops::dropout(x, -0.1, true, rng));

  const Var ones = g.constant(Tensor({100000}, 1.0));
  const auto y = ops::dropout(ones, 0.5, true, rng).value();
  std::size_t survivors = 0;
  for (double v : y.storage()) {
    if (v != 0.0) {
      ++survivors;
      CHECK(v == 2.0);
    }
  }
  CHECK(std::fabs(static_cast<double>(survivors) / 100000.0 - 0.5) < 0.01);
}

TEST_CASE("backward examples") {
  Parameter p{"p", Tensor::vector({1, 2})};
  Parameter unused{"u", Tensor::vector({3})};
  {
    Graph g;
    g.parameter(unused);
    g.backward(ops::sum(g.parameter(p)));
    CHECK(g.grad_of(p).storage() == std::vector<double>{1, 1});
    CHECK(g.grad_of(unused).storage() == std::vector<double>{0});
  }
  {
    Graph g;
    const Var v = g.parameter(p);
    g.backward(ops::sum(ops::mul(v, v)));
    CHECK(g.grad_of(p).storage() == std::vector<double>{2, 4});
  }
  {
    Graph g;
    CHECK_THROWS(g.backward(g.parameter(p)));
  }
}

TEST_CASE("gradient checks for every differentiable op") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    CAPTURE(seed);
    CounterRng rng(1000 + seed);
    const std::size_t m = 2 + rng.below(3), n = 2 + rng.below(3), k = 2 + rng.below(3);
    Parameter a{"a", random_tensor({m, k}, rng)};
    Parameter b{"b", random_tensor({k, n}, rng)};
    Parameter c{"c", random_tensor({m, n}, rng)};
    Parameter bt{"bt", random_tensor({n, k}, rng)};
    Parameter row{"row", random_tensor({n}, rng)};
    Parameter s{"s", random_tensor({1}, rng)};
    const auto u = static_cast<std::uint64_t>(seed);

    expect_grads([&](Graph& g) { return probe(g, ops::matmul(g.parameter(a), g.parameter(b)), u); }, {&a, &b});
    expect_grads([&](Graph& g) { return probe(g, ops::matmul_bt(g.parameter(a), g.parameter(bt)), u); }, {&a, &bt});
    expect_grads([&](Graph& g) { return probe(g, ops::add(g.parameter(c), g.parameter(c)), u); }, {&c});
    expect_grads(
        [&](Graph& g) {
          return probe(g, ops::sub(ops::matmul(g.parameter(a), g.parameter(b)), g.parameter(c)), u);
        },
        {&a, &b, &c});
    expect_grads([&](Graph& g) { return probe(g, ops::mul(g.parameter(c), g.parameter(c)), u); }, {&c});
    expect_grads([&](Graph& g) { return probe(g, ops::add_row(g.parameter(c), g.parameter(row)), u); }, {&c, &row});
    expect_grads([&](Graph& g) { return probe(g, ops::add_scalar(ops::scale(g.parameter(c), -1.7), 2.0), u); },
                 {&c});
    expect_grads([&](Graph& g) { return probe(g, ops::scale_by(g.parameter(c), g.parameter(s)), u); }, {&c, &s});
    expect_grads([&](Graph& g) { return probe(g, ops::linear(g.parameter(a), g.parameter(b), g.parameter(row)), u); },
                 {&a, &b, &row});
    for (auto kind : {ops::Unary::gelu, ops::Unary::sigmoid, ops::Unary::exp}) {
      expect_grads([&](Graph& g) { return probe(g, ops::unary(g.parameter(c), kind), u); }, {&c});
    }
    // abs, sqrt_signed and log are checked away from their kinks.
    Parameter away{"away", random_tensor({m, n}, rng)};
    for (double& v : away.value.storage()) v = (v >= 0 ? 0.5 : -0.5) + v;
    expect_grads([&](Graph& g) { return probe(g, ops::unary(g.parameter(away), ops::Unary::abs), u); }, {&away});
    expect_grads([&](Graph& g) { return probe(g, ops::unary(g.parameter(away), ops::Unary::sqrt_signed), u); },
                 {&away});
    Parameter pos{"pos", random_tensor({m, n}, rng)};
    for (double& v : pos.value.storage()) v = 0.5 + std::fabs(v);
    expect_grads([&](Graph& g) { return probe(g, ops::unary(g.parameter(pos), ops::Unary::log), u); }, {&pos});

    std::vector<unsigned char> mask(m * n, 1);
    for (std::size_t i = 0; i < m; ++i) mask[i * n + (i % n)] = 0;
    expect_grads([&](Graph& g) { return probe(g, ops::softmax_rows(g.parameter(c)), u); }, {&c});
    expect_grads([&](Graph& g) { return probe(g, ops::softmax_rows(g.parameter(c), &mask), u); }, {&c});
    expect_grads([&](Graph& g) { return probe(g, ops::log_softmax_rows(g.parameter(c)), u); }, {&c});

    const std::size_t t = 4 + rng.below(4), kw = 1 + rng.below(4);
    Parameter x{"x", random_tensor({t, 3}, rng)};
    Parameter w{"w", random_tensor({kw, 3, 2}, rng)};
    Parameter wb{"wb", random_tensor({2}, rng)};
    for (auto pad : {ops::Padding::same, ops::Padding::causal, ops::Padding::valid}) {
      expect_grads(
          [&](Graph& g) { return probe(g, ops::conv1d(g.parameter(x), g.parameter(w), g.parameter(wb), pad), u); },
          {&x, &w, &wb});
    }
    expect_grads(
        [&](Graph& g) {
          CounterRng drop(77 + u);
          return probe(g, ops::dropout(g.parameter(c), 0.3, true, drop), u);
        },
        {&c});
    expect_grads([&](Graph& g) { return probe(g, ops::l2_normalize_rows(g.parameter(c)), u); }, {&c});
    Parameter gain{"gain", random_tensor({n}, rng)};
    expect_grads(
        [&](Graph& g) {
          return probe(g, ops::layer_norm(g.parameter(c), g.parameter(gain), g.parameter(row)), u);
        },
        {&c, &gain, &row});
    expect_grads([&](Graph& g) { return ops::mean(ops::mul(g.parameter(c), g.parameter(c))); }, {&c});
    expect_grads([&](Graph& g) { return probe(g, ops::mean_rows(g.parameter(c)), u); }, {&c});
    Parameter flat{"flat", random_tensor({t}, rng)};
    expect_grads([&](Graph& g) { return ops::topk_mean(ops::unary(g.parameter(flat), ops::Unary::exp), 2); },
                 {&flat});
    expect_grads([&](Graph& g) { return probe(g, ops::gather(g.parameter(c), {{0, 1}, {m - 1, 0}, {0, 1}}), u); },
                 {&c});
    expect_grads(
        [&](Graph& g) {
          return probe(g, ops::stack_rows({g.parameter(row), ops::scale(g.parameter(row), 2.0)}), u);
        },
        {&row});
    expect_grads([&](Graph& g) { return probe(g, ops::reshape(g.parameter(c), {n, m}), u); }, {&c});
    expect_grads([&](Graph& g) { return probe(g, ops::column(g.parameter(c), n - 1), u); }, {&c});
  }
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0.1, 0, 10) == 0.1);
  CHECK(cosine_lr(0.1, 10, 10) == 0.0);
  CHECK(cosine_lr(0.1, 5, 10) == doctest::Approx(0.05).epsilon(1e-12));
  double prev = cosine_lr(1.0, 0, 100);
  for (std::uint64_t s = 1; s <= 100; ++s) {
    const double cur = cosine_lr(1.0, s, 100);
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("adam examples") {
  Parameter p{"p", Tensor::vector({0.3, -0.2})};
  std::vector<Parameter*> ps{&p};
  AdamState st;
  st.base_lr = 0.1;
  st.total_steps = 100;
  adam_step(st, ps, std::vector<Tensor>{Tensor({2}, 0.0)});
  CHECK(p.value.storage() == std::vector<double>{0.3, -0.2});

  Parameter q{"q", Tensor::scalar(0.0)};
  std::vector<Parameter*> qs{&q};
  AdamState s2;
  s2.base_lr = 0.1;
  s2.total_steps = 1000000;
  adam_step(s2, qs, std::vector<Tensor>{Tensor::scalar(1.0)});
  // First step: m̂ = 1, v̂ = 1, so the move is lr / (1 + ε).
  CHECK(q.value[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(s2.step == 1);

  Parameter r{"r", Tensor::scalar(1.0)};
  std::vector<Parameter*> rs{&r};
  AdamState s3;
  s3.total_steps = 3;
  s3.step = 3;
  adam_step(s3, rs, std::vector<Tensor>{Tensor::scalar(1.0)});
  CHECK(r.value[0] == 1.0);

  CHECK_THROWS_AS(adam_step(st, ps, std::vector<Tensor>{Tensor({3}, 0.0)}), ShapeError);
}
