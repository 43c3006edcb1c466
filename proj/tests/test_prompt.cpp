#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "tcape/conceptnet.hpp"
#include "tcape/error.hpp"
#include "tcape/prompt.hpp"

using namespace tcape;
using namespace tcape::prompt;

namespace {

std::filesystem::path fixtures() { return std::filesystem::path(TCAPE_SOURCE_DIR) / "fixtures"; }

ConceptEdge edge(std::string label, std::string relation, std::string key, double score) {
  return {std::move(label), std::move(relation), std::move(key), score, Direction::class_as_head};
}

std::vector<double> scores(const std::vector<ConceptEdge>& edges) {
  std::vector<double> s;
  for (const auto& e : edges) s.push_back(e.score);
  return s;
}

class FixedEmbedder final : public Embedder {
 public:
  explicit FixedEmbedder(std::map<std::string, std::vector<double>> t) : t_(std::move(t)) {}
  std::optional<std::vector<double>> embed(const std::string& text) const override {
    auto it = t_.find(text);
    if (it == t_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t dim() const override { return 2; }
  std::string provenance() const override { return "clip_file"; }

 private:
  std::map<std::string, std::vector<double>> t_;
};

}  // namespace

TEST_CASE("node filtering worked sequence") {
  const std::vector<ConceptEdge> edges{edge("fighting", "IsA", "a", 2.0), edge("fighting", "IsA", "b", 1.0),
                                       edge("fighting", "IsA", "c", -0.5), edge("fighting", "IsA", "d", 0.0)};
  CHECK(scores(filter_nodes(edges, FilterMode::none)) == std::vector<double>{2.0, 1.0, -0.5, 0.0});
  CHECK(scores(filter_nodes(edges, FilterMode::step1)) == std::vector<double>{2.0, 1.0});
  CHECK(scores(filter_nodes(edges, FilterMode::step1_dynamic)) == std::vector<double>{2.0});
  CHECK(scores(filter_nodes(edges, FilterMode::step1_fixed, 0.9)) == std::vector<double>{2.0, 1.0});
  CHECK(filter_nodes({edge("x", "IsA", "a", -1.0)}, FilterMode::step1_dynamic).empty());
}

TEST_CASE("dynamic threshold is per class") {
  const std::vector<ConceptEdge> edges{edge("a", "IsA", "p", 10.0), edge("a", "IsA", "q", 2.0),
                                       edge("b", "IsA", "r", 1.0), edge("b", "IsA", "s", 0.5)};
  const auto kept = filter_nodes(edges, FilterMode::step1_dynamic);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].key == "p");
  CHECK(kept[1].key == "r");
}

TEST_CASE("filter mode names round trip") {
  for (auto m : {FilterMode::none, FilterMode::step1, FilterMode::step1_fixed, FilterMode::step1_dynamic})
    CHECK(parse_filter_mode(to_string(m)) == m);
  CHECK_THROWS(parse_filter_mode("step2"));
}

TEST_CASE("relation selection") {
  std::map<std::string, std::vector<ConceptEdge>> edges;
  const std::vector<std::pair<std::string, int>> counts{{"IsA", 10},   {"UsedFor", 8}, {"HasA", 6},
                                                        {"Causes", 5}, {"PartOf", 4},  {"HasProperty", 1}};
  for (const auto& [rel, n] : counts)
    for (int i = 0; i < n; ++i) edges[i % 2 ? "x" : "y"].push_back(edge("x", rel, "k", 1.0));
  CHECK(select_relations(edges) == std::vector<std::string>{"IsA", "UsedFor", "HasA", "Causes", "PartOf"});

  std::map<std::string, std::vector<ConceptEdge>> single{{"x", {edge("x", "Causes", "k", 1.0)}}};
  CHECK(select_relations(single) == std::vector<std::string>{"Causes"});

  std::map<std::string, std::vector<ConceptEdge>> tie{
      {"x", {edge("x", "UsedFor", "k", 1), edge("x", "Causes", "k", 1), edge("x", "IsA", "k", 1),
             edge("x", "IsA", "k", 1)}}};
  CHECK(select_relations(tie, 2) == std::vector<std::string>{"IsA", "Causes"});
}

TEST_CASE("relation names are checked") {
  CHECK(candidate_relations().size() == 12);
  CHECK(is_candidate_relation("HasSubevent"));
  CHECK_FALSE(is_candidate_relation("Synonym"));
  FetchOptions opts;
  opts.fixtures_dir = fixtures();
  CHECK_THROWS_AS(fetch_edges("fighting", {"Synonym"}, opts), Error);
}

TEST_CASE("slugs") {
  CHECK(concept_slug("Road Accidents") == "road_accidents");
  CHECK(concept_slug("  fighting ") == "fighting");
}

TEST_CASE("fighting fixture parses to the recorded edges") {
  FetchOptions opts;
  opts.fixtures_dir = fixtures();
  const auto edges = fetch_edges("fighting", {"IsA"}, opts);
  // The German node is skipped; tail-side edges keep the other endpoint.
  const std::vector<ConceptEdge> expect{
      {"fighting", "IsA", "conflict", 2.0, Direction::class_as_head},
      {"fighting", "IsA", "physical violence", 1.5, Direction::class_as_head},
      {"fighting", "IsA", "boxing", 1.0, Direction::class_as_tail},
      {"fighting", "IsA", "brawl", 0.5, Direction::class_as_tail},
  };
  CHECK(edges == expect);

  // A relation without a recorded file contributes nothing; a missing class is an error naming it.
  CHECK(fetch_edges("fighting", {"PartOf"}, opts).empty());
  try {
    fetch_edges("arson", {"IsA"}, opts);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("arson") != std::string::npos);
  }
}

TEST_CASE("empty response parses to no edges") {
  CHECK(parse_query_response(R"({"edges": []})", "fighting", "IsA").empty());
  CHECK(parse_query_response("{}", "fighting", "IsA").empty());
  CHECK_THROWS(parse_query_response("{not json", "fighting", "IsA"));
}

TEST_CASE("stub embedder") {
  const auto a = stub_embed("fighting", 512);
  CHECK(a == stub_embed("fighting", 512));
  double n = 0.0;
  for (double v : a) n += v * v;
  CHECK(std::fabs(std::sqrt(n) - 1.0) < 1e-6);
  CHECK(stub_embed("fighting", 512, 1) != a);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto u = stub_embed("word " + std::to_string(i), 512);
    const auto v = stub_embed("other " + std::to_string(i), 512);
    double c = 0.0;
    for (std::size_t k = 0; k < 512; ++k) c += u[k] * v[k];
    worst = std::max(worst, std::fabs(c));
  }
  CHECK(worst < 0.5);
  CHECK_THROWS(stub_embed("x", 0));
}

TEST_CASE("prompt bank assembly") {
  const FixedEmbedder emb({{"p", {1, 0}}, {"q", {0, 1}}, {"r", {3, 4}}, {"solo", {2, 2}}, {"normal", {5, 5}}});
  ConceptDictionary dict;
  dict.edges["a"] = {edge("a", "IsA", "p", 1), edge("a", "Causes", "q", 1)};
  dict.edges["b"] = {edge("b", "IsA", "r", 1)};
  auto bank = build_prompt_bank(dict, {"a", "b", "normal"}, emb);
  CHECK(bank.vectors.at("a") == std::vector<double>{0.5, 0.5});
  CHECK(bank.vectors.at("b") == std::vector<double>{3, 4});
  // No concepts survive for "normal", so it falls back to its label.
  CHECK(bank.vectors.at("normal") == std::vector<double>{5, 5});
  CHECK(bank.provenance == "clip_file");

  // Order of keys does not matter.
  ConceptDictionary flipped = dict;
  std::reverse(flipped.edges["a"].begin(), flipped.edges["a"].end());
  CHECK(build_prompt_bank(flipped, {"a"}, emb).vectors.at("a") == bank.vectors.at("a"));

  // Label template embeds the bare label.
  BankOptions label_only;
  label_only.mode = Template::label;
  CHECK(build_prompt_bank(dict, {"solo"}, emb, label_only).vectors.at("solo") == std::vector<double>{2, 2});

  dict.edges["c"] = {edge("c", "IsA", "missing one", 1), edge("c", "IsA", "missing two", 1)};
  try {
    build_prompt_bank(dict, {"a", "c"}, emb);
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("missing one") != std::string::npos);
    CHECK(msg.find("missing two") != std::string::npos);
  }
}

TEST_CASE("template texts") {
  BankOptions o;
  o.mode = Template::prefix;
  CHECK(template_text("robbery", o) == "a video of robbery");
  o.mode = Template::label_wordnet;
  o.definitions["robbery"] = "taking property unlawfully";
  CHECK(template_text("robbery", o) == "robbery: taking property unlawfully");
  for (auto t : {Template::label, Template::prefix, Template::label_wordnet, Template::learnable,
                 Template::label_conceptnet})
    CHECK(parse_template(to_string(t)) == t);
}

TEST_CASE("prompt bank serialization") {
  PromptBank bank;
  bank.dim = 3;
  bank.provenance = "stub_embedder";
  bank.mode = Template::label;
  bank.vectors["fighting"] = {0.1, 1.0 / 3.0, -2e-17};
  bank.vectors["normal"] = {1, 0, 0};
  const auto back = PromptBank::from_json(bank.to_json());
  CHECK(back.vectors == bank.vectors);
  CHECK(back.mode == bank.mode);
  const Tensor m = bank.matrix({"normal", "fighting"});
  CHECK(m(0, 0) == 1.0);
  CHECK(m(1, 1) == 1.0 / 3.0);
  CHECK_THROWS(bank.matrix({"arson"}));
}

TEST_CASE("embedding table file") {
  const auto path = std::filesystem::temp_directory_path() / "tcape_embeddings.json";
  {
    std::ofstream os(path);
    os << R"({"conflict": [1, 0], "brawl": [0, 2]})";
  }
  const auto t = TableEmbedder::load(path);
  CHECK(t.dim() == 2);
  CHECK(*t.embed("brawl") == std::vector<double>{0, 2});
  CHECK_FALSE(t.embed("nope").has_value());
  std::filesystem::remove(path);
}
