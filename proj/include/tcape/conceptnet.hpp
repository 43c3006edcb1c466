#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "tcape/prompt.hpp"

namespace tcape::prompt {

enum class Source { live, fixture };

struct FetchOptions {
  Source source = Source::fixture;
  std::filesystem::path fixtures_dir = "fixtures";
  std::string base_url = "https://api.conceptnet.io";
  std::size_t page_limit = 1000;
  int max_attempts = 4;
  std::chrono::milliseconds backoff{500};
  /// Minimum spacing between requests, shared by all fetches in the process.
  std::chrono::milliseconds min_interval{500};
  /// Live mode: write each merged response under fixtures_dir.
  bool cache = true;
};

/// Fixture path for one class/relation: <dir>/<slug>/<relation>.json.
std::filesystem::path fixture_path(const FetchOptions& opts, const std::string& label,
                                   const std::string& relation);

/// All edges where `label` is head or tail under any of `relations`.
/// Fixture mode reads recorded responses (a missing class directory is an
/// error; a missing relation file means no edges). Live mode queries the API,
/// follows pagination, retries with exponential backoff, and caches the merged
/// response in fixture format before parsing it.
std::vector<ConceptEdge> fetch_edges(const std::string& label, const std::vector<std::string>& relations,
                                     const FetchOptions& opts);

/// Live mode only: GET one relation for one label, following nextPage links.
/// Returns the merged response document as JSON text.
std::string fetch_relation_document(const std::string& label, const std::string& relation,
                                    const FetchOptions& opts);

}  // namespace tcape::prompt
