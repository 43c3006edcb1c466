#include "tcape/head.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "tcape/error.hpp"
#include "tcape/ops.hpp"

namespace tcape::head {
namespace {

Parameter conv_kernel(std::string name, std::size_t k, std::size_t cin, std::size_t cout, CounterRng& rng) {
  Tensor t({k, cin, cout});
  const double bound = 1.0 / std::sqrt(static_cast<double>(k * cin));
  for (double& v : t.storage()) v = rng.uniform(-bound, bound);
  return {std::move(name), std::move(t)};
}

double bce_term(double p, int y, LossMode mode) {
  const double pos = -std::log(std::max(p, kProbEps));
  if (mode == LossMode::pos_only) return y * pos;
  return y == 1 ? pos : -std::log(std::max(1.0 - p, kProbEps));
}

double bce_slope(double p, int y, LossMode mode) {
  if (y == 1) return p > kProbEps ? -1.0 / p : 0.0;
  if (mode == LossMode::pos_only) return 0.0;
  return 1.0 - p > kProbEps ? 1.0 / (1.0 - p) : 0.0;
}

}  // namespace

std::vector<Parameter*> HeadParams::list() { return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &cls_w, &cls_b}; }
std::vector<const Parameter*> HeadParams::list() const {
  return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &cls_w, &cls_b};
}

HeadParams init_params(std::size_t input_dim, const HeadConfig& cfg, CounterRng& rng) {
  if (cfg.kernel == 0) throw Error("head: classifier kernel width must be at least 1");
  HeadParams p;
  p.conv1_w = conv_kernel("head.conv1_w", 1, input_dim, cfg.embed_dim, rng);
  p.conv1_b = {"head.conv1_b", Tensor({cfg.embed_dim}, 0.0)};
  p.conv2_w = conv_kernel("head.conv2_w", 1, cfg.embed_dim, cfg.reduced_dim, rng);
  p.conv2_b = {"head.conv2_b", Tensor({cfg.reduced_dim}, 0.0)};
  p.cls_w = conv_kernel("head.cls_w", cfg.kernel, cfg.reduced_dim, 1, rng);
  p.cls_b = {"head.cls_b", Tensor({1}, 0.0)};
  return p;
}

MlpOutput mlp_forward(Graph& g, Var xc, const HeadParams& p, const HeadConfig& cfg, bool training,
                      CounterRng& rng) {
  using ops::Unary;
  const Var h1 = ops::unary(ops::conv1d(xc, g.parameter(p.conv1_w), g.parameter(p.conv1_b), ops::Padding::same),
                            Unary::gelu);
  const Var xe = ops::dropout(h1, cfg.dropout, training, rng);
  const Var h2 = ops::unary(ops::conv1d(xe, g.parameter(p.conv2_w), g.parameter(p.conv2_b), ops::Padding::same),
                            Unary::gelu);
  const Var xs = ops::dropout(h2, cfg.dropout, training, rng);
  return {xe, xs};
}

Var score(Graph& g, Var xs, const HeadParams& p) {
  const Var logits = ops::conv1d(xs, g.parameter(p.cls_w), g.parameter(p.cls_b), ops::Padding::causal);
  return ops::unary(ops::column(logits, 0), ops::Unary::sigmoid);
}

std::size_t topk_count(std::size_t length, int label) {
  if (label != 1) return 1;
  return std::min(length, length / 16 + 1);
}

BagPrediction topk_pool(std::span<const double> scores, int label) {
  if (scores.empty()) throw Error("topk_pool: empty score sequence");
  const std::size_t k = topk_count(scores.size(), label);
  std::vector<double> sorted(scores.begin(), scores.end());
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end(),
                    std::greater<>());
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += sorted[i];
  return {s / static_cast<double>(k), k, label};
}

Var topk_pool(Var scores, int label) {
  return ops::topk_mean(scores, topk_count(scores.value().size(), label));
}

double mil_loss(std::span<const BagPrediction> batch, LossMode mode) {
  if (batch.empty()) throw Error("mil_loss: empty batch");
  double s = 0.0;
  for (const auto& b : batch) s += bce_term(b.p, b.y, mode);
  return s / static_cast<double>(batch.size());
}

Var mil_loss(Graph& g, const std::vector<Var>& probs, const std::vector<int>& labels, LossMode mode) {
  if (probs.empty()) throw Error("mil_loss: empty batch");
  if (probs.size() != labels.size()) throw ShapeError("mil_loss: probabilities and labels differ in length");
  const Var p = ops::stack_rows(probs);  // B×1
  const std::size_t n = probs.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += bce_term(p.value()[i], labels[i], mode);
  const auto ip = p.id;
  return g.record("mil_loss", Tensor::scalar(s / static_cast<double>(n)), {p},
                  [ip, labels, mode, n](Graph& g, std::size_t self) {
                    const double gy = g.grad(self)[0] / static_cast<double>(n);
                    const Tensor& pv = g.value(ip);
                    Tensor& gp = g.grad(ip);
                    for (std::size_t i = 0; i < n; ++i) gp[i] += gy * bce_slope(pv[i], labels[i], mode);
                  });
}

}  // namespace tcape::head
