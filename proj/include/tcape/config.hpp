#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcape/eval.hpp"
#include "tcape/featio.hpp"
#include "tcape/head.hpp"
#include "tcape/model.hpp"

namespace tcape {

/// Every knob of a training run. Presets carry the published per-dataset
/// values; `synthetic` is the desk-scale setting used by the acceptance run.
struct TrainConfig {
  std::string preset = "ucf";
  std::uint64_t seed = 0;

  std::size_t batch_size = 128;
  std::size_t epochs = 50;
  double lr = 5e-4;
  std::size_t snippet_limit = 200;

  // TCA
  bool use_tca = true;
  std::size_t hidden_dim = 128;
  std::size_t value_dim = 128;
  std::size_t window = 9;
  std::string norm = "power+l2";  // none | power | l2 | power+l2
  bool dpe = true;
  std::optional<double> fixed_alpha;

  // Head
  std::size_t embed_dim = 512;
  std::size_t reduced_dim = 300;
  std::size_t kernel = 9;
  double dropout = 0.1;
  std::string loss = "bce";  // bce | pos_only

  // Prompt-enhanced learning
  bool use_pel = true;
  double lambda = 1.0;
  double tau = 0.09;
  double mu = 10.0;
  bool separation = true;
  bool score_gradient = true;

  // Inference
  std::string smooth = "sliding";
  std::size_t kappa = 7;
  std::string tail = "zero";  // zero | shrink
  std::string crop_mode = "feature_mean";  // feature_mean | score_mean

  /// Preset defaults; throws on an unknown name.
  static TrainConfig preset_named(const std::string& name);

  /// Returns every validation problem; empty when valid.
  std::vector<std::string> validate() const;

  /// Applies a JSON object of overrides. Unknown keys and type errors are
  /// appended to `errors` instead of throwing.
  void apply(const nlohmann::json& overrides, std::vector<std::string>& errors);
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);

  ModelConfig model_config() const;
  eval::SmoothingConfig smoothing() const;
  head::LossMode loss_mode() const;
  featio::CropMode crops() const;
};

tca::Norm parse_norm(const std::string& s);

}  // namespace tcape
