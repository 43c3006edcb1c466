#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tcape/error.hpp"
#include "tcape/tensor.hpp"

namespace tcape::featio {

/// Snippet length in frames.
inline constexpr std::size_t kFramesPerSnippet = 16;

enum class Dtype : std::uint32_t { f32 = 0, f64 = 1 };

/// Distinct failure kinds when decoding a feature container.
class FormatError : public Error {
 public:
  enum class Kind { bad_magic, bad_dtype, bad_rank, truncated, io };
  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Container layout, all integers little-endian u32:
//   "TFV1" | dtype | rank | dims[rank] | payload (row-major, little-endian)
std::vector<std::uint8_t> encode(const Tensor& t, Dtype dtype = Dtype::f64);
Tensor decode(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& t, Dtype dtype = Dtype::f64);
/// Reads a container of any rank as-is.
Tensor read_tensor(const std::filesystem::path& path);

enum class CropMode { feature_mean, score_mean };

/// T×D features; a rank-3 crops×T×D file is averaged over crops.
Tensor load_features(const std::filesystem::path& path);
/// Each crop as its own T×D matrix (a rank-2 file yields one crop).
std::vector<Tensor> load_feature_crops(const std::filesystem::path& path);
Tensor mean_over_crops(const Tensor& crops);

/// Reduces T > limit snippets to `limit` contiguous near-equal segment means.
Tensor sample_snippets(const Tensor& x, std::size_t limit);

/// Repeats each snippet score 16× then truncates or pads with the last score.
std::vector<double> expand_to_frames(std::span<const double> scores, std::size_t frame_count);

enum class Split { train, test };

struct VideoRecord {
  std::string id;
  std::filesystem::path features;
  int label = 0;                     // y ∈ {0,1}
  std::vector<std::string> classes;  // first entry is the primary class; "normal" when y = 0
  std::optional<std::vector<std::uint8_t>> frames;  // per-frame ground truth
  Split split = Split::train;

  const std::string& primary_class() const { return classes.front(); }
  std::size_t frame_count(std::size_t snippets) const {
    return frames ? frames->size() : snippets * kFramesPerSnippet;
  }
};

inline const std::string kNormalClass = "normal";

/// JSON-lines manifest with fields {"id","features","label","class","frames","split"}.
/// Relative feature paths resolve against the manifest's directory.
struct Manifest {
  std::vector<VideoRecord> videos;

  static Manifest load(const std::filesystem::path& path, bool check_files = true);
  static Manifest parse(const std::string& text, const std::filesystem::path& base_dir,
                        bool check_files = true);
  void save(const std::filesystem::path& path) const;
  std::string serialize(const std::filesystem::path& base_dir = {}) const;

  std::vector<const VideoRecord*> split(Split s) const;
  const VideoRecord* find(const std::string& id) const;
};

std::string frames_to_string(std::span<const std::uint8_t> frames);

}  // namespace tcape::featio
