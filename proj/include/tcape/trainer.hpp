#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tcape/config.hpp"
#include "tcape/featio.hpp"
#include "tcape/model.hpp"
#include "tcape/optim.hpp"
#include "tcape/prompt.hpp"

namespace tcape {

/// A training video with snippet-sampled features. Under feature-mean crop
/// handling `crops` holds the single averaged tensor.
struct TrainVideo {
  std::string id;
  int label = 0;
  std::string cls;
  std::vector<Tensor> crops;
};

std::vector<TrainVideo> load_training_set(const featio::Manifest& manifest, const TrainConfig& cfg);

/// Sorted anomaly classes followed by "normal".
std::vector<std::string> class_order(const std::vector<TrainVideo>& videos);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double l_ce = 0.0;
  double l_kd = 0.0;
  std::optional<double> alpha;
  double lr = 0.0;
  std::string to_jsonl() const;
};

/// Everything needed to continue a run bit-exactly.
struct TrainState {
  TrainConfig config;
  std::vector<std::string> classes;
  ModelParams params;
  AdamState adam;
  std::size_t epoch = 0;  // completed epochs
  std::size_t steps_per_epoch = 0;

  std::optional<double> alpha() const;
};

TrainState init_training(const TrainConfig& cfg, std::size_t input_dim, std::vector<std::string> classes,
                         std::size_t abnormal_count);

std::size_t steps_per_epoch(std::size_t abnormal_count, std::size_t batch_size);

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
  std::optional<std::filesystem::path> checkpoint;  // rewritten after every epoch
  std::optional<std::size_t> stop_after;            // stop once this many epochs are complete
};

/// Runs the remaining epochs of `state`. `prompts` is required when PEL is on.
void train(TrainState& state, const std::vector<TrainVideo>& videos, const prompt::PromptBank* prompts,
           const TrainHooks& hooks = {});

/// Archive: "TCK1", u64 index length, JSON index, then tensor blobs.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);

/// Writes `bytes` to a sibling temp file and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace tcape
