#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tcape {

/// Desk-scale stand-in for real extracted features: a slowly drifting AR(1)
/// background plus per-snippet noise, with a class-specific direction added
/// over each anomalous stretch.
struct SyntheticOptions {
  std::uint64_t seed = 0;
  std::size_t train_videos = 40;  // half abnormal
  std::size_t test_videos = 20;   // half abnormal
  std::size_t dim = 64;
  std::size_t min_length = 40;
  std::size_t max_length = 120;
  std::vector<std::string> classes = {"explosion", "fighting", "robbery"};
  double ar_coeff = 0.95;  // background drift persistence
  double drift = 0.1;      // drift innovation scale
  double noise = 1.0;      // per-snippet noise scale
  double amplitude = 4.0;  // bump size along the class direction
  std::size_t segments = 1;  // anomalous stretches per abnormal video
  std::size_t crops = 1;  // >1 writes [crops×T×D] files
  std::size_t prompt_dim = 512;
};

/// Writes features/, manifest.jsonl and prompts.json under `out_dir`.
void generate_synthetic(const std::filesystem::path& out_dir, const SyntheticOptions& opts = {});

}  // namespace tcape
