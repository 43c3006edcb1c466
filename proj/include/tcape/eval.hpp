#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tcape::eval {

enum class SmoothMode { none, moving, sliding };
/// How windows running past the end are treated: zero-padded (divide by κ) or
/// shrunk to the real elements.
enum class Tail { zero, shrink };

struct SmoothingConfig {
  SmoothMode mode = SmoothMode::none;
  std::size_t kappa = 1;
  Tail tail = Tail::zero;
};

SmoothMode parse_smooth_mode(const std::string& s);
std::string to_string(SmoothMode m);

std::vector<double> smooth(std::span<const double> scores, const SmoothingConfig& cfg);

/// Rank-based ROC AUC with midranks for ties.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);
/// Step-wise AP over descending scores; ties keep index order.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);
/// Fraction of negative entries scoring ≥ threshold.
double false_alarm_rate(std::span<const double> scores, std::span<const std::uint8_t> labels,
                        double threshold = 0.5);

struct VideoScores {
  std::string id;
  std::string cls;  // primary class, "normal" for label 0
  int label = 0;
  std::vector<double> frame_scores;
  std::vector<std::uint8_t> frame_labels;
};

struct ClassMetrics {
  std::optional<double> auc;
  std::optional<double> ap;
  std::optional<double> far;
  std::size_t videos = 0;
  std::size_t frames = 0;
  std::size_t positive_frames = 0;
};

struct MetricReport {
  double auc = 0.0;
  double ap = 0.0;
  double far = 0.0;
  std::size_t videos = 0;
  std::size_t frames = 0;
  std::size_t positive_frames = 0;
  std::map<std::string, ClassMetrics> per_class;
  std::map<std::string, ClassMetrics> per_video;
};

struct EvalOptions {
  double threshold = 0.5;
  /// FAR over frames of normal videos only; otherwise over all negative frames.
  bool far_normal_videos_only = true;
};

/// Metrics restricted to `videos` (no per-class breakdown).
ClassMetrics evaluate_subset(const std::vector<const VideoScores*>& videos, const EvalOptions& opts);

/// Global metrics plus one entry per anomaly class, each evaluated as that
/// class's videos against every normal video.
MetricReport evaluate(const std::vector<VideoScores>& videos, const EvalOptions& opts = {},
                      const std::vector<std::string>& expected_classes = {});

std::string report_json(const MetricReport& r);
std::string report_csv(const MetricReport& r);

}  // namespace tcape::eval
