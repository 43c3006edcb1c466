#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "tcape/ops.hpp"
#include "tcape/pel.hpp"

using namespace tcape;
using namespace tcape::pel;
using testing::random_tensor;

namespace {

std::vector<double> row(const Tensor& m, std::size_t r) {
  std::vector<double> v(m.cols());
  for (std::size_t c = 0; c < m.cols(); ++c) v[c] = m(r, c);
  return v;
}

double total(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

TEST_CASE("separation examples") {
  const Tensor xe = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  const auto sep = separate_context(xe, std::vector<double>{0.0, 1.0}, 1.0);
  CHECK(sep.fg_weights == std::vector<double>{0.0, 1.0});
  CHECK(sep.foreground.storage() == row(xe, 1));
  CHECK(sep.bg_weights == std::vector<double>{1.0, 0.0});
  CHECK(sep.background.storage() == row(xe, 0));

  const auto w = separation_weights(std::vector<double>(5, 0.3), 10.0);
  for (double v : w) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
  // All-zero activations fall back to uniform weights.
  const auto z = separation_weights(std::vector<double>(4, 0.0), 10.0);
  for (double v : z) CHECK(v == 0.25);
}

TEST_CASE("separation weights sum to one and swap under complement") {
  CounterRng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t t = 1 + rng.below(50);
    // Multiples of 1/8 make 1−(1−s) exact, so the swap can be checked bit for bit.
    std::vector<double> s(t), flipped(t);
    for (std::size_t i = 0; i < t; ++i) {
      s[i] = static_cast<double>(rng.below(9)) / 8.0;
      flipped[i] = 1.0 - s[i];
    }
    const Tensor xe = random_tensor({t, 4}, rng);
    const auto a = separate_context(xe, s, 10.0);
    const auto b = separate_context(xe, flipped, 10.0);
    CHECK(std::fabs(total(a.fg_weights) - 1.0) < 1e-6);
    CHECK(std::fabs(total(a.bg_weights) - 1.0) < 1e-6);
    for (double v : a.fg_weights) CHECK(v >= 0.0);
    CHECK(a.foreground == b.background);
    CHECK(a.background == b.foreground);
  }
}

TEST_CASE("v2t distribution") {
  const Tensor prompts = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const auto sharp = v2t_distribution(std::vector<double>{0, 2, 0}, prompts, 0.01);
  CHECK(sharp[1] > 0.99);

  const Tensor same = Tensor::matrix({{1, 1}, {1, 1}, {1, 1}, {1, 1}});
  for (double p : v2t_distribution(std::vector<double>{0.3, -2}, same, 0.09)) CHECK(p == doctest::Approx(0.25));
  CHECK_THROWS(v2t_distribution(std::vector<double>{0, 0, 0}, prompts, 0.1));

  CounterRng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor bank = random_tensor({4, 6}, rng);
    const Tensor v = random_tensor({6}, rng);
    const auto p = v2t_distribution(v.storage(), bank, 0.09);
    CHECK(std::fabs(total(p) - 1.0) < 1e-6);
    std::vector<double> scaled = v.storage();
    for (double& x : scaled) x *= 3.0;
    const auto q = v2t_distribution(scaled, bank, 0.09);
    for (std::size_t k = 0; k < p.size(); ++k) CHECK(std::fabs(p[k] - q[k]) < 1e-6);
  }
}

TEST_CASE("alignment loss closed forms") {
  const Tensor same = Tensor::matrix({{1, 2}, {1, 2}, {1, 2}});
  CHECK(std::fabs(alignment_loss({{0.5, -1.0}}, {2}, same, 0.05) - std::log(3.0)) < 1e-9);

  // A positive at the prompt direction with orthogonal negatives at tiny τ is near zero.
  const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  CHECK(alignment_loss({{4.0, 0.0}}, {0}, eye, 0.01) < 1e-12);
  CHECK_THROWS(alignment_loss({}, {}, eye, 0.1));

  // Raising the positive similarity with the others fixed lowers the loss.
  const Tensor bank = Tensor::matrix({{1, 0, 0}, {0, 1, 0}});
  double last = 1e9;
  for (double c : {-0.5, 0.0, 0.5, 1.0, 2.0}) {
    const double l = alignment_loss({{c, 0.3, 1.0}}, {0}, bank, 0.2);
    CHECK(l >= 0.0);
    CHECK(l < last);
    last = l;
  }
}

TEST_CASE("graph and plain alignment agree") {
  CounterRng rng(21);
  const Tensor bank = random_tensor({4, 5}, rng);
  std::vector<std::vector<double>> vs;
  std::vector<std::size_t> pos;
  Graph g;
  std::vector<AlignmentItem> items;
  for (int i = 0; i < 6; ++i) {
    const Tensor v = random_tensor({5}, rng);
    vs.push_back(v.storage());
    pos.push_back(rng.below(4));
    items.push_back({g.constant(v), pos.back(), Role::abnormal_fg});
  }
  CHECK(alignment_loss(g, items, bank, 0.09).value()[0] ==
        doctest::Approx(alignment_loss(vs, pos, bank, 0.09)).epsilon(1e-12));
}

TEST_CASE("total loss") {
  CHECK(total_loss(0.5, 0.25, 2.0) == 1.0);
  CHECK(total_loss(0.7, 3.0, 0.0) == 0.7);
}

TEST_CASE("PEL gradients match finite differences") {
  for (int seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    CounterRng rng(900 + seed);
    const std::size_t t = 7, e = 5;
    Parameter embed{"embed", random_tensor({t, e}, rng)};
    Parameter logits{"logits", random_tensor({t}, rng)};
    const Tensor bank = random_tensor({3, e}, rng);
    const double mu = seed % 2 ? 10.0 : 1.0;
    const auto r = testing::check_gradients(
        [&](Graph& g) {
          const Var s = ops::unary(g.parameter(logits), ops::Unary::sigmoid);
          const auto sep = separate_context(g, g.parameter(embed), s, mu);
          return alignment_loss(g,
                                {{sep.foreground, 1, Role::abnormal_fg},
                                 {sep.background, 2, Role::abnormal_bg}},
                                bank, 0.2);
        },
        {&embed, &logits});
    INFO(r.worst_where);
    CHECK(r.worst_rel < 1e-4);
  }
}
