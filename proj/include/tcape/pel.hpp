#pragma once

#include <span>
#include <vector>

#include "tcape/graph.hpp"

namespace tcape::pel {

struct SeparatedContext {
  Var foreground;  // V^fg
  Var background;  // V^bg
};

/// Activation weights (exp(μ·s)−1)/Σ(exp(μ·s)−1). An all-zero input falls
/// back to uniform weights.
std::vector<double> separation_weights(std::span<const double> scores, double mu);

/// Foreground/background video vectors from X^e[T×E] and scores[T].
/// With `score_gradient` false the weights are treated as constants.
SeparatedContext separate_context(Graph& g, Var embed, Var scores, double mu, bool score_gradient = true);

struct SeparatedValues {
  Tensor foreground;
  Tensor background;
  std::vector<double> fg_weights;
  std::vector<double> bg_weights;
};
SeparatedValues separate_context(const Tensor& embed, std::span<const double> scores, double mu);

/// Cosine similarity of v to each prompt row, softmaxed with temperature τ.
std::vector<double> v2t_distribution(std::span<const double> v, const Tensor& prompts, double tau);

enum class Role { abnormal_fg, abnormal_bg, normal_fg };

struct AlignmentItem {
  Var visual;            // flat vector of the prompt width
  std::size_t positive;  // prompt row index in [0, C]
  Role role = Role::abnormal_fg;
};

/// Mean over items of −log p_positive (cross-entropy against the one-hot pairing target).
Var alignment_loss(Graph& g, const std::vector<AlignmentItem>& items, const Tensor& prompts, double tau);
double alignment_loss(const std::vector<std::vector<double>>& visuals, const std::vector<std::size_t>& positives,
                      const Tensor& prompts, double tau);

/// L = l_ce + λ·l_kd.
double total_loss(double l_ce, double l_kd, double lambda);
Var total_loss(Var l_ce, Var l_kd, double lambda);

}  // namespace tcape::pel
