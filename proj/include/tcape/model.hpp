#pragma once

#include <optional>
#include <vector>

#include "tcape/graph.hpp"
#include "tcape/head.hpp"
#include "tcape/rng.hpp"
#include "tcape/tca.hpp"

namespace tcape {

struct ModelConfig {
  bool use_tca = true;
  tca::TcaConfig tca;
  head::HeadConfig head;
};

/// All trainable weights. `tca` is absent for the MLP+classifier baseline.
struct ModelParams {
  std::optional<tca::TcaParams> tca;
  head::HeadParams head;

  std::vector<Parameter*> list();
  std::vector<const Parameter*> list() const;
  std::size_t input_dim() const { return head.conv1_w.value.dims()[1]; }
};

ModelParams init_model(std::size_t input_dim, const ModelConfig& cfg, CounterRng& rng);

struct ModelOutput {
  Var scores;  // flat [T]
  Var embed;   // X^e [T×E]
};

/// Features → (TCA) → MLP → causal classifier.
ModelOutput forward(Graph& g, Var x, const ModelParams& p, const ModelConfig& cfg, bool training,
                    CounterRng& rng);

/// Crop-averaged forward: each crop is scored separately and the scores and
/// embeddings are averaged.
ModelOutput forward_crops(Graph& g, const std::vector<Tensor>& crops, const ModelParams& p,
                          const ModelConfig& cfg, bool training, CounterRng& rng);

/// Inference-mode snippet scores.
std::vector<double> score_snippets(const Tensor& x, const ModelParams& p, const ModelConfig& cfg);
std::vector<double> score_snippets(const std::vector<Tensor>& crops, const ModelParams& p,
                                   const ModelConfig& cfg);

}  // namespace tcape
