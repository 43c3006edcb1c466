#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tcape/config.hpp"
#include "tcape/eval.hpp"
#include "tcape/featio.hpp"
#include "tcape/model.hpp"

namespace tcape {

/// Scores for one test video at each inference stage.
struct ScoredVideo {
  std::string id;
  std::vector<double> snippet;   // raw classifier output
  std::vector<double> smoothed;  // after score smoothing
  std::vector<double> frames;    // smoothed scores expanded to frames
};

ScoredVideo score_video(const featio::VideoRecord& rec, const ModelParams& params, const TrainConfig& cfg,
                        const eval::SmoothingConfig& smoothing);

/// Pairs frame scores with ground truth. Throws listing any test video
/// without scores.
std::vector<eval::VideoScores> attach_labels(const featio::Manifest& manifest,
                                             const std::vector<ScoredVideo>& scored);

/// Scores every test video and evaluates the frame-level metrics.
eval::MetricReport evaluate_model(const ModelParams& params, const TrainConfig& cfg,
                                  const featio::Manifest& manifest, const eval::SmoothingConfig& smoothing,
                                  const eval::EvalOptions& opts = {});

/// <dir>/<id>.csv (snippet,raw,smoothed) and <dir>/<id>.frames.csv (frame,score).
void write_scores(const std::filesystem::path& dir, const ScoredVideo& v);
/// Reads the frame scores written by write_scores.
std::vector<double> read_frame_scores(const std::filesystem::path& path);

}  // namespace tcape
