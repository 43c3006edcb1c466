#include "tcape/conceptnet.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "tcape/error.hpp"
#include "tcape/log.hpp"

namespace tcape::prompt {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

// Process-wide request spacing for the public API.
void rate_limit(std::chrono::milliseconds interval) {
  static std::mutex mu;
  static Clock::time_point last{};
  std::unique_lock lock(mu);
  const auto now = Clock::now();
  if (last != Clock::time_point{} && now - last < interval) std::this_thread::sleep_for(interval - (now - last));
  last = Clock::now();
}

std::string get_with_retry(httplib::Client& client, const std::string& path, const FetchOptions& opts) {
  std::string last_error;
  for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(opts.backoff * (1 << (attempt - 1)));
    rate_limit(opts.min_interval);
    auto res = client.Get(path);
    if (!res) {
      last_error = httplib::to_string(res.error());
    } else if (res->status == 200) {
      return res->body;
    } else if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
    } else {
      throw Error("conceptnet: GET " + path + " failed with HTTP " + std::to_string(res->status));
    }
    log::warn("conceptnet: GET " + path + " attempt " + std::to_string(attempt + 1) + " failed: " + last_error);
  }
  throw Error("conceptnet: GET " + path + " failed after " + std::to_string(opts.max_attempts) +
              " attempts: " + last_error);
}

void write_atomically(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc | std::ios::binary);
    if (!os) throw Error("cannot write " + tmp);
    os << text;
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

std::filesystem::path fixture_path(const FetchOptions& opts, const std::string& label, const std::string& relation) {
  return opts.fixtures_dir / concept_slug(label) / (relation + ".json");
}

std::string fetch_relation_document(const std::string& label, const std::string& relation, const FetchOptions& opts) {
  httplib::Client client(opts.base_url);
  client.set_follow_location(true);
  client.set_connection_timeout(10);
  client.set_read_timeout(30);
  std::string path = "/query?node=/c/en/" + concept_slug(label) + "&rel=/r/" + relation +
                     "&limit=" + std::to_string(opts.page_limit);
  json merged;
  json edges = json::array();
  for (int page = 0; !path.empty(); ++page) {
    json doc = json::parse(get_with_retry(client, path, opts));
    if (page == 0) merged = doc;
    if (doc.contains("edges"))
      for (auto& e : doc["edges"]) edges.push_back(std::move(e));
    path.clear();
    if (doc.contains("view") && doc["view"].contains("nextPage") && doc["view"]["nextPage"].is_string()) {
      path = doc["view"]["nextPage"].get<std::string>();
    }
  }
  if (!merged.is_object()) merged = json::object();
  merged.erase("view");
  merged["edges"] = std::move(edges);
  return merged.dump(1) + "\n";
}

std::vector<ConceptEdge> fetch_edges(const std::string& label, const std::vector<std::string>& relations,
                                     const FetchOptions& opts) {
  for (const auto& r : relations) {
    if (!is_candidate_relation(r)) throw Error("unknown relation \"" + r + "\"");
  }
  std::vector<ConceptEdge> out;
  if (opts.source == Source::fixture) {
    const auto dir = opts.fixtures_dir / concept_slug(label);
    if (!std::filesystem::is_directory(dir)) {
      throw Error("no ConceptNet fixture for class \"" + label + "\" (expected " + dir.string() + ")");
    }
    for (const auto& r : relations) {
      const auto path = fixture_path(opts, label, r);
      if (!std::filesystem::exists(path)) continue;
      auto edges = parse_query_response(read_file(path), label, r);
      out.insert(out.end(), edges.begin(), edges.end());
    }
    return out;
  }
  for (const auto& r : relations) {
    const std::string doc = fetch_relation_document(label, r, opts);
    if (opts.cache) {
      write_atomically(fixture_path(opts, label, r), doc);
      // Parse what was written so fixture replays see identical bytes.
      auto edges = parse_query_response(read_file(fixture_path(opts, label, r)), label, r);
      out.insert(out.end(), edges.begin(), edges.end());
    } else {
      auto edges = parse_query_response(doc, label, r);
      out.insert(out.end(), edges.begin(), edges.end());
    }
  }
  return out;
}

}  // namespace tcape::prompt
