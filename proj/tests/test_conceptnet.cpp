#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <atomic>
#include <filesystem>
#include <thread>

#include "doctest.h"
#include "json.hpp"
#include "tcape/conceptnet.hpp"
#include "tcape/error.hpp"

using namespace tcape;
using namespace tcape::prompt;
using nlohmann::json;

namespace {

json node(const std::string& term, const std::string& label) {
  return {{"@id", term}, {"label", label}, {"language", "en"}, {"term", term}};
}

json edge_json(const std::string& start, const std::string& end, const std::string& rel, double w) {
  return {{"start", node("/c/en/" + start, start)},
          {"end", node("/c/en/" + end, end)},
          {"rel", {{"@id", "/r/" + rel}, {"label", rel}}},
          {"weight", w}};
}

// Local stand-in for the public API: two pages for IsA, and one transient 503.
struct FakeApi {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> requests{0};
  std::atomic<int> failures_left{1};

  FakeApi() {
    server.Get("/query", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      if (failures_left-- > 0) {
        res.status = 503;
        return;
      }
      const std::string rel = req.get_param_value("rel");
      json doc{{"@id", "/query"}, {"edges", json::array()}};
      if (rel == "/r/IsA" && !req.has_param("offset")) {
        doc["edges"].push_back(edge_json("riot", "disorder", "IsA", 2.0));
        doc["view"] = {{"nextPage", "/query?node=/c/en/riot&rel=/r/IsA&limit=1000&offset=1"}};
      } else if (rel == "/r/IsA") {
        doc["edges"].push_back(edge_json("looting", "riot", "IsA", 0.5));
      }
      res.set_content(doc.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeApi() {
    server.stop();
    thread.join();
  }
};

}  // namespace

TEST_CASE("live fetch follows pages, retries, and caches replayable fixtures") {
  FakeApi api;
  const auto dir = std::filesystem::temp_directory_path() / "tcape_live_cache";
  std::filesystem::remove_all(dir);

  FetchOptions live;
  live.source = Source::live;
  live.base_url = "http://127.0.0.1:" + std::to_string(api.port);
  live.fixtures_dir = dir;
  live.backoff = std::chrono::milliseconds(1);
  live.min_interval = std::chrono::milliseconds(0);
  const auto fetched = fetch_edges("riot", {"IsA", "Causes"}, live);
  REQUIRE(fetched.size() == 2);
  CHECK(fetched[0].key == "disorder");
  CHECK(fetched[0].direction == Direction::class_as_head);
  CHECK(fetched[1].key == "looting");
  CHECK(fetched[1].direction == Direction::class_as_tail);
  CHECK(api.requests == 4);  // one failed attempt, two IsA pages, one Causes page
  CHECK(std::filesystem::exists(dir / "riot" / "IsA.json"));
  CHECK(std::filesystem::exists(dir / "riot" / "Causes.json"));

  FetchOptions offline;
  offline.fixtures_dir = dir;
  CHECK(fetch_edges("riot", {"IsA", "Causes"}, offline) == fetched);
  std::filesystem::remove_all(dir);
}

TEST_CASE("live fetch gives up after repeated failures") {
  FakeApi api;
  api.failures_left = 100;
  FetchOptions live;
  live.source = Source::live;
  live.base_url = "http://127.0.0.1:" + std::to_string(api.port);
  live.cache = false;
  live.max_attempts = 3;
  live.backoff = std::chrono::milliseconds(1);
  live.min_interval = std::chrono::milliseconds(0);
  CHECK_THROWS_AS(fetch_edges("riot", {"IsA"}, live), Error);
  CHECK(api.requests == 3);
}
