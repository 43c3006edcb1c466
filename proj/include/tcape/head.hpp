#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tcape/graph.hpp"
#include "tcape/rng.hpp"

namespace tcape::head {

struct HeadConfig {
  std::size_t embed_dim = 512;    // width of X^e (must match the prompt dimension)
  std::size_t reduced_dim = 300;  // width of X^s
  std::size_t kernel = 9;         // causal classifier width Δt
  double dropout = 0.1;
};

struct HeadParams {
  Parameter conv1_w, conv1_b, conv2_w, conv2_b, cls_w, cls_b;

  std::vector<Parameter*> list();
  std::vector<const Parameter*> list() const;
};

HeadParams init_params(std::size_t input_dim, const HeadConfig& cfg, CounterRng& rng);

struct MlpOutput {
  Var embed;    // X^e, T×embed_dim
  Var reduced;  // X^s, T×reduced_dim
};

/// Two K=1 conv layers, each followed by GELU and dropout.
MlpOutput mlp_forward(Graph& g, Var xc, const HeadParams& p, const HeadConfig& cfg, bool training,
                      CounterRng& rng);

/// Snippet scores S = σ(causal_conv(X^s)) as a flat length-T vector.
Var score(Graph& g, Var xs, const HeadParams& p);

/// ⌊T/16⌋+1 for positive bags, 1 for negative bags.
std::size_t topk_count(std::size_t length, int label);

struct BagPrediction {
  double p = 0.0;
  std::size_t k = 1;
  int y = 0;
};

BagPrediction topk_pool(std::span<const double> scores, int label);
Var topk_pool(Var scores, int label);

enum class LossMode { bce, pos_only };

inline constexpr double kProbEps = 1e-7;

/// Batch mean of −[y·log p + (1−y)·log(1−p)], each log argument floored at 1e−7.
double mil_loss(std::span<const BagPrediction> batch, LossMode mode = LossMode::bce);
/// `probs` holds one scalar node per bag.
Var mil_loss(Graph& g, const std::vector<Var>& probs, const std::vector<int>& labels,
             LossMode mode = LossMode::bce);

}  // namespace tcape::head
