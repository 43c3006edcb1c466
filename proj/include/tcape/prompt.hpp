#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tcape/tensor.hpp"

namespace tcape::prompt {

/// The twelve ConceptNet relations considered before frequency selection.
const std::vector<std::string>& candidate_relations();
bool is_candidate_relation(const std::string& relation);

enum class Direction { class_as_head, class_as_tail };

struct ConceptEdge {
  std::string label;     // category the edge was retrieved for
  std::string relation;  // e.g. "IsA"
  std::string key;       // text of the non-category node
  double score = 0.0;    // edge relevance (ConceptNet weight)
  Direction direction = Direction::class_as_head;

  friend bool operator==(const ConceptEdge&, const ConceptEdge&) = default;
};

struct ConceptDictionary {
  std::map<std::string, std::vector<ConceptEdge>> edges;  // class → edges
  std::vector<std::string> relations;                     // retrieval relation set
};

/// Lowercased, whitespace collapsed to underscores: "Road Accidents" → "road_accidents".
std::string concept_slug(const std::string& label);

/// Extracts the edges of `relation` touching /c/en/<slug> from a /query response.
std::vector<ConceptEdge> parse_query_response(const std::string& json_text, const std::string& label,
                                              const std::string& relation);

/// The `top_n` relations by total edge count; ties go to the lexicographically smaller name.
std::vector<std::string> select_relations(const std::map<std::string, std::vector<ConceptEdge>>& edges,
                                          std::size_t top_n = 5);

enum class FilterMode { none, step1, step1_fixed, step1_dynamic };

/// step1 drops score ≤ 0; step2 keeps score ≥ θ (fixed) or ≥ the post-step1 mean (dynamic).
/// Edges are grouped by class label for the dynamic threshold.
std::vector<ConceptEdge> filter_nodes(const std::vector<ConceptEdge>& edges, FilterMode mode,
                                      double fixed_threshold = 1.0);

FilterMode parse_filter_mode(const std::string& s);
std::string to_string(FilterMode m);

/// Deterministic unit vector derived from a seeded hash of `text`.
std::vector<double> stub_embed(const std::string& text, std::size_t dim, std::uint64_t seed = 0);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::optional<std::vector<double>> embed(const std::string& text) const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::string provenance() const = 0;
};

class StubEmbedder final : public Embedder {
 public:
  explicit StubEmbedder(std::size_t dim = 512, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {}
  std::optional<std::vector<double>> embed(const std::string& text) const override {
    return stub_embed(text, dim_, seed_);
  }
  std::size_t dim() const override { return dim_; }
  std::string provenance() const override { return "stub_embedder"; }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Lookup table of pre-exported text embeddings.
class TableEmbedder final : public Embedder {
 public:
  explicit TableEmbedder(std::map<std::string, std::vector<double>> table);
  /// JSON map {key: [floats]}, or a feature container (N×dim) with a sidecar
  /// `<path>.keys` file listing one key per line.
  static TableEmbedder load(const std::filesystem::path& path);

  std::optional<std::vector<double>> embed(const std::string& text) const override;
  std::size_t dim() const override { return dim_; }
  std::string provenance() const override { return "clip_file"; }

 private:
  std::map<std::string, std::vector<double>> table_;
  std::size_t dim_ = 0;
};

enum class Template { label, prefix, label_wordnet, learnable, label_conceptnet };
Template parse_template(const std::string& s);
std::string to_string(Template t);

struct BankOptions {
  Template mode = Template::label_conceptnet;
  std::string prefix = "a video of ";
  std::map<std::string, std::string> definitions;  // label → gloss, for label+wordnet
  std::uint64_t learnable_seed = 7;
};

struct PromptBank {
  std::size_t dim = 0;
  std::string provenance;
  Template mode = Template::label_conceptnet;
  std::map<std::string, std::vector<double>> vectors;

  bool has(const std::string& cls) const { return vectors.count(cls) != 0; }
  /// Rows in the order of `classes`.
  Tensor matrix(const std::vector<std::string>& classes) const;

  std::string to_json() const;
  static PromptBank from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static PromptBank load(const std::filesystem::path& path);
};

/// Text fed to the encoder for a class under a non-ConceptNet template.
std::string template_text(const std::string& label, const BankOptions& opts);

/// Builds T^c for each of `classes`: the mean key embedding in ConceptNet mode,
/// otherwise the embedding of the composed template text.
PromptBank build_prompt_bank(const ConceptDictionary& dict, const std::vector<std::string>& classes,
                             const Embedder& embedder, const BankOptions& opts = {});

/// Human-readable listing of a dictionary with kept/dropped markers.
std::string dump_dictionary(const ConceptDictionary& raw, const ConceptDictionary& filtered);

}  // namespace tcape::prompt
