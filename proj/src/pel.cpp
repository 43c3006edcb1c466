#include "tcape/pel.hpp"

#include <cmath>

#include "tcape/error.hpp"
#include "tcape/log.hpp"
#include "tcape/ops.hpp"

namespace tcape::pel {
namespace {

// Weight node over flat scores with an analytic backward pass.
Var weights_node(Graph& g, Var scores, double mu) {
  const Tensor& s = scores.value();
  const std::size_t n = s.size();
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    w[t] = std::expm1(mu * s[t]);
    total += w[t];
  }
  const bool uniform = !(total > 0.0);
  if (uniform) log::warn("context separation: all activations are zero; using uniform weights");
  Tensor a({n});
  for (std::size_t t = 0; t < n; ++t) a[t] = uniform ? 1.0 / static_cast<double>(n) : w[t] / total;
  const auto is = scores.id;
  return g.record("separation_weights", std::move(a), {scores},
                  [is, mu, total, uniform, n](Graph& g, std::size_t self) {
                    if (uniform) return;
                    const Tensor& gy = g.grad(self);
                    const Tensor& a = g.value(self);
                    const Tensor& s = g.value(is);
                    double dot = 0.0;
                    for (std::size_t t = 0; t < n; ++t) dot += gy[t] * a[t];
                    Tensor& gs = g.grad(is);
                    for (std::size_t u = 0; u < n; ++u)
                      gs[u] += mu * std::exp(mu * s[u]) / total * (gy[u] - dot);
                  });
}

Var pooled(Var weights, Var embed) {
  const std::size_t n = weights.value().size();
  const Var row = ops::matmul(ops::reshape(weights, {1, n}), embed);
  return ops::reshape(row, {embed.value().cols()});
}

}  // namespace

std::vector<double> separation_weights(std::span<const double> scores, double mu) {
  Graph g(Graph::Mode::inference);
  const Var a = weights_node(g, g.constant(Tensor::vector({scores.begin(), scores.end()})), mu);
  return a.value().storage();
}

SeparatedContext separate_context(Graph& g, Var embed, Var scores, double mu, bool score_gradient) {
  if (!(mu > 0.0)) throw Error("separate_context: scale μ must be positive");
  const Tensor& e = embed.value();
  if (e.rank() != 2 || e.rows() != scores.value().size()) {
    throw ShapeError("separate_context: embed " + e.shape_string() + " vs scores " + scores.value().shape_string());
  }
  Var s = score_gradient ? scores : g.constant(scores.value());
  const Var complement = ops::add_scalar(ops::scale(s, -1.0), 1.0);
  return {pooled(weights_node(g, s, mu), embed), pooled(weights_node(g, complement, mu), embed)};
}

SeparatedValues separate_context(const Tensor& embed, std::span<const double> scores, double mu) {
  Graph g(Graph::Mode::inference);
  const Var s = g.constant(Tensor::vector({scores.begin(), scores.end()}));
  const auto ctx = separate_context(g, g.constant(embed), s, mu);
  std::vector<double> bg_scores(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) bg_scores[i] = 1.0 - scores[i];
  return {ctx.foreground.value(), ctx.background.value(), separation_weights(scores, mu),
          separation_weights(bg_scores, mu)};
}

namespace {

Var logits_node(Graph& g, Var visual_rows, const Tensor& prompts, double tau) {
  if (!(tau > 0.0)) throw Error("temperature τ must be positive");
  const Tensor& v = visual_rows.value();
  if (v.cols() != prompts.cols()) {
    throw ShapeError("visual width " + v.shape_string() + " does not match prompt width " + prompts.shape_string());
  }
  for (std::size_t i = 0; i < v.rows(); ++i) {
    double n = 0.0;
    for (double x : v.row(i)) n += x * x;
    if (n == 0.0) throw Error("v2t: zero-norm visual vector (row " + std::to_string(i) + ")");
  }
  const Var vn = ops::l2_normalize_rows(visual_rows);
  const Var pn = ops::l2_normalize_rows(g.constant(prompts));
  return ops::scale(ops::matmul_bt(vn, pn), 1.0 / tau);
}

}  // namespace

std::vector<double> v2t_distribution(std::span<const double> v, const Tensor& prompts, double tau) {
  Graph g(Graph::Mode::inference);
  const Var row = g.constant(Tensor({1, v.size()}, {v.begin(), v.end()}));
  const Var p = ops::softmax_rows(logits_node(g, row, prompts, tau));
  return p.value().storage();
}

Var alignment_loss(Graph& g, const std::vector<AlignmentItem>& items, const Tensor& prompts, double tau) {
  if (items.empty()) throw Error("alignment_loss: empty batch");
  std::vector<Var> rows;
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].positive >= prompts.rows()) throw Error("alignment_loss: positive class index out of range");
    rows.push_back(items[i].visual);
    picks.emplace_back(i, items[i].positive);
  }
  const Var logp = ops::log_softmax_rows(logits_node(g, ops::stack_rows(rows), prompts, tau));
  return ops::scale(ops::mean(ops::gather(logp, std::move(picks))), -1.0);
}

double alignment_loss(const std::vector<std::vector<double>>& visuals, const std::vector<std::size_t>& positives,
                      const Tensor& prompts, double tau) {
  if (visuals.size() != positives.size()) throw ShapeError("alignment_loss: visuals and targets differ in length");
  Graph g(Graph::Mode::inference);
  std::vector<AlignmentItem> items;
  for (std::size_t i = 0; i < visuals.size(); ++i)
    items.push_back({g.constant(Tensor::vector(visuals[i])), positives[i], Role::abnormal_fg});
  return alignment_loss(g, items, prompts, tau).value()[0];
}

double total_loss(double l_ce, double l_kd, double lambda) {
  if (lambda < 0) throw Error("loss coefficient λ must be nonnegative");
  return l_ce + lambda * l_kd;
}

Var total_loss(Var l_ce, Var l_kd, double lambda) {
  if (lambda < 0) throw Error("loss coefficient λ must be nonnegative");
  return ops::add(l_ce, ops::scale(l_kd, lambda));
}

}  // namespace tcape::pel
