#include "tcape/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tcape/error.hpp"
#include "tcape/featio.hpp"
#include "tcape/log.hpp"
#include "tcape/rng.hpp"

namespace tcape::prompt {

using nlohmann::json;

const std::vector<std::string>& candidate_relations() {
  static const std::vector<std::string> rels = {
      "IsA",         "PartOf",          "HasA",        "UsedFor",   "CapableOf", "Causes",
      "HasSubevent", "HasPrerequisite", "HasProperty", "DefinedAs", "MannerOf",  "SimilarTo"};
  return rels;
}

bool is_candidate_relation(const std::string& relation) {
  const auto& r = candidate_relations();
  return std::find(r.begin(), r.end(), relation) != r.end();
}

std::string concept_slug(const std::string& label) {
  std::string out;
  bool pending_sep = false;
  for (unsigned char ch : label) {
    if (std::isspace(ch) || ch == '_') {
      pending_sep = !out.empty();
      continue;
    }
    if (pending_sep) out += '_';
    pending_sep = false;
    out += static_cast<char>(std::tolower(ch));
  }
  return out;
}

namespace {

// Node ids look like /c/en/fighting or /c/en/fighting/n/...
bool node_is(const json& node, const std::string& slug) {
  const std::string id = node.value("@id", node.value("term", std::string{}));
  const std::string base = "/c/en/" + slug;
  return id == base || id.rfind(base + "/", 0) == 0;
}

bool node_is_english(const json& node) {
  const std::string id = node.value("@id", node.value("term", std::string{}));
  return id.rfind("/c/en/", 0) == 0;
}

std::string node_text(const json& node) {
  if (node.contains("label") && node["label"].is_string()) return node["label"].get<std::string>();
  // Fall back to the URI term: /c/en/a_fight/n → "a fight".
  std::string id = node.value("@id", std::string{});
  if (id.rfind("/c/en/", 0) == 0) id = id.substr(6);
  id = id.substr(0, id.find('/'));
  std::replace(id.begin(), id.end(), '_', ' ');
  return id;
}

std::string relation_name(const json& rel) {
  if (rel.contains("label") && rel["label"].is_string()) return rel["label"].get<std::string>();
  const std::string id = rel.value("@id", std::string{});
  return id.rfind("/r/", 0) == 0 ? id.substr(3) : id;
}

}  // namespace

std::vector<ConceptEdge> parse_query_response(const std::string& json_text, const std::string& label,
                                              const std::string& relation) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error("conceptnet response for " + label + "/" + relation + ": " + e.what());
  }
  std::vector<ConceptEdge> out;
  if (!doc.contains("edges")) return out;
  const std::string slug = concept_slug(label);
  for (const auto& e : doc["edges"]) {
    if (!e.contains("start") || !e.contains("end") || !e.contains("rel")) continue;
    if (relation_name(e["rel"]) != relation) continue;
    ConceptEdge edge;
    edge.label = label;
    edge.relation = relation;
    edge.score = e.value("weight", 0.0);
    const json* other = nullptr;
    if (node_is(e["start"], slug)) {
      edge.direction = Direction::class_as_head;
      other = &e["end"];
    } else if (node_is(e["end"], slug)) {
      edge.direction = Direction::class_as_tail;
      other = &e["start"];
    } else {
      continue;
    }
    if (!node_is_english(*other)) continue;
    edge.key = node_text(*other);
    if (edge.key.empty()) continue;
    out.push_back(std::move(edge));
  }
  return out;
}

std::vector<std::string> select_relations(const std::map<std::string, std::vector<ConceptEdge>>& edges,
                                          std::size_t top_n) {
  std::map<std::string, std::size_t> counts;
  for (const auto& [_, list] : edges)
    for (const auto& e : list) ++counts[e.relation];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() < top_n) {
    log::warn("only " + std::to_string(ranked.size()) + " distinct relations available, fewer than " +
              std::to_string(top_n));
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(top_n, ranked.size()); ++i) out.push_back(ranked[i].first);
  return out;
}

std::vector<ConceptEdge> filter_nodes(const std::vector<ConceptEdge>& edges, FilterMode mode,
                                      double fixed_threshold) {
  if (mode == FilterMode::none) return edges;
  std::vector<ConceptEdge> step1;
  for (const auto& e : edges)
    if (e.score > 0.0) step1.push_back(e);
  if (mode == FilterMode::step1) return step1;

  std::map<std::string, std::pair<double, std::size_t>> totals;
  for (const auto& e : step1) {
    auto& [s, n] = totals[e.label];
    s += e.score;
    ++n;
  }
  std::vector<ConceptEdge> out;
  for (const auto& e : step1) {
    const auto& [s, n] = totals[e.label];
    const double threshold = mode == FilterMode::step1_fixed ? fixed_threshold : s / static_cast<double>(n);
    if (e.score >= threshold) out.push_back(e);
  }
  if (out.empty() && !edges.empty()) log::warn("node filtering removed every concept");
  return out;
}

FilterMode parse_filter_mode(const std::string& s) {
  if (s == "none") return FilterMode::none;
  if (s == "step1") return FilterMode::step1;
  if (s == "step1+fixed") return FilterMode::step1_fixed;
  if (s == "step1+dynamic") return FilterMode::step1_dynamic;
  throw Error("unknown filter mode \"" + s + "\" (none|step1|step1+fixed|step1+dynamic)");
}

std::string to_string(FilterMode m) {
  switch (m) {
    case FilterMode::none: return "none";
    case FilterMode::step1: return "step1";
    case FilterMode::step1_fixed: return "step1+fixed";
    case FilterMode::step1_dynamic: return "step1+dynamic";
  }
  return "none";
}

std::vector<double> stub_embed(const std::string& text, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw Error("stub_embed: dim must be at least 1");
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  CounterRng rng(mix64(h) ^ mix64(seed));
  std::vector<double> v(dim);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

TableEmbedder::TableEmbedder(std::map<std::string, std::vector<double>> table) : table_(std::move(table)) {
  for (const auto& [k, v] : table_) {
    if (dim_ == 0) dim_ = v.size();
    if (v.size() != dim_) throw ShapeError("embedding table: key \"" + k + "\" has inconsistent width");
  }
}

TableEmbedder TableEmbedder::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open embedding file " + path.string());
  char magic[4] = {};
  is.read(magic, 4);
  is.close();
  if (std::string(magic, 4) == "TFV1") {
    Tensor t = featio::read_tensor(path);
    if (t.rank() != 2) throw ShapeError("embedding container must be N×dim, got " + t.shape_string());
    std::ifstream ks(path.string() + ".keys");
    if (!ks) throw Error("embedding container needs a sidecar key list " + path.string() + ".keys");
    std::vector<std::string> keys;
    for (std::string line; std::getline(ks, line);)
      if (!line.empty()) keys.push_back(line);
    if (keys.size() != t.rows()) {
      throw ShapeError("embedding key list has " + std::to_string(keys.size()) + " entries for " +
                       std::to_string(t.rows()) + " rows");
    }
    std::map<std::string, std::vector<double>> table;
    for (std::size_t i = 0; i < keys.size(); ++i) table[keys[i]] = {t.row(i).begin(), t.row(i).end()};
    return TableEmbedder(std::move(table));
  }
  std::ifstream js(path);
  json doc = json::parse(js);
  return TableEmbedder(doc.get<std::map<std::string, std::vector<double>>>());
}

std::optional<std::vector<double>> TableEmbedder::embed(const std::string& text) const {
  auto it = table_.find(text);
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

Template parse_template(const std::string& s) {
  if (s == "label") return Template::label;
  if (s == "prefix") return Template::prefix;
  if (s == "label+wordnet") return Template::label_wordnet;
  if (s == "learnable") return Template::learnable;
  if (s == "label+conceptnet") return Template::label_conceptnet;
  throw Error("unknown prompt template \"" + s + "\"");
}

std::string to_string(Template t) {
  switch (t) {
    case Template::label: return "label";
    case Template::prefix: return "prefix";
    case Template::label_wordnet: return "label+wordnet";
    case Template::learnable: return "learnable";
    case Template::label_conceptnet: return "label+conceptnet";
  }
  return "label";
}

Tensor PromptBank::matrix(const std::vector<std::string>& classes) const {
  Tensor m({classes.size(), dim});
  for (std::size_t i = 0; i < classes.size(); ++i) {
    auto it = vectors.find(classes[i]);
    if (it == vectors.end()) throw Error("prompt bank has no vector for class \"" + classes[i] + "\"");
    std::copy(it->second.begin(), it->second.end(), m.row(i).begin());
  }
  return m;
}

std::string PromptBank::to_json() const {
  json j;
  j["dim"] = dim;
  j["provenance"] = provenance;
  j["template"] = to_string(mode);
  j["classes"] = vectors;
  return j.dump(1) + "\n";
}

PromptBank PromptBank::from_json(const std::string& text) {
  const json j = json::parse(text);
  PromptBank b;
  b.dim = j.at("dim").get<std::size_t>();
  b.provenance = j.value("provenance", "");
  b.mode = parse_template(j.value("template", "label+conceptnet"));
  b.vectors = j.at("classes").get<std::map<std::string, std::vector<double>>>();
  for (const auto& [k, v] : b.vectors) {
    if (v.size() != b.dim) throw ShapeError("prompt bank: class \"" + k + "\" vector has wrong width");
    for (double x : v)
      if (!std::isfinite(x)) throw Error("prompt bank: class \"" + k + "\" has non-finite entries");
  }
  return b;
}

void PromptBank::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write prompt bank " + path.string());
  os << to_json();
}

PromptBank PromptBank::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open prompt bank " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return from_json(ss.str());
}

std::string template_text(const std::string& label, const BankOptions& opts) {
  switch (opts.mode) {
    case Template::prefix:
      return opts.prefix + label;
    case Template::label_wordnet: {
      auto it = opts.definitions.find(label);
      if (it == opts.definitions.end()) {
        log::warn("no definition for \"" + label + "\"; using the bare label");
        return label;
      }
      return label + ": " + it->second;
    }
    default:
      return label;
  }
}

namespace {

std::vector<double> normalized(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0)
    for (double& x : v) x /= n;
  return v;
}

}  // namespace

PromptBank build_prompt_bank(const ConceptDictionary& dict, const std::vector<std::string>& classes,
                             const Embedder& embedder, const BankOptions& opts) {
  PromptBank bank;
  bank.dim = embedder.dim();
  bank.provenance = embedder.provenance();
  bank.mode = opts.mode;

  // Text list per class, resolved before any lookup so missing keys are reported together.
  std::map<std::string, std::vector<std::string>> texts;
  for (const auto& cls : classes) {
    auto& list = texts[cls];
    if (opts.mode == Template::label_conceptnet) {
      std::set<std::string> seen;
      if (auto it = dict.edges.find(cls); it != dict.edges.end()) {
        for (const auto& e : it->second)
          if (seen.insert(e.key).second) list.push_back(e.key);
      }
      if (list.empty()) {
        log::warn("class \"" + cls + "\" has no surviving concepts; falling back to the label prompt");
        list.push_back(cls);
      }
    } else {
      list.push_back(template_text(cls, opts));
    }
  }

  std::vector<std::string> missing;
  for (const auto& [cls, list] : texts)
    for (const auto& t : list)
      if (!embedder.embed(t)) missing.push_back(t);
  if (!missing.empty()) {
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
    std::string msg = "missing embeddings for " + std::to_string(missing.size()) + " key(s):";
    for (const auto& m : missing) msg += " \"" + m + "\"";
    throw Error(msg);
  }

  for (const auto& [cls, list] : texts) {
    std::vector<double> acc(bank.dim, 0.0);
    for (const auto& t : list) {
      const auto v = *embedder.embed(t);
      if (v.size() != bank.dim) throw ShapeError("embedding for \"" + t + "\" has wrong width");
      for (std::size_t i = 0; i < bank.dim; ++i) acc[i] += v[i];
    }
    for (double& x : acc) x /= static_cast<double>(list.size());
    if (opts.mode == Template::learnable) {
      const auto ctx = stub_embed("<learnable-context>", bank.dim, opts.learnable_seed);
      for (std::size_t i = 0; i < bank.dim; ++i) acc[i] += ctx[i];
      acc = normalized(std::move(acc));
    }
    bank.vectors[cls] = std::move(acc);
  }
  return bank;
}

std::string dump_dictionary(const ConceptDictionary& raw, const ConceptDictionary& filtered) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "relations:";
  for (const auto& r : raw.relations) os << ' ' << r;
  os << '\n';
  for (const auto& [cls, edges] : raw.edges) {
    const auto fit = filtered.edges.find(cls);
    const std::vector<ConceptEdge> kept = fit == filtered.edges.end() ? std::vector<ConceptEdge>{} : fit->second;
    os << '[' << cls << "] " << edges.size() << " edges, " << kept.size() << " kept\n";
    for (const auto& e : edges) {
      const bool is_kept = std::find(kept.begin(), kept.end(), e) != kept.end();
      os << "  " << (is_kept ? '+' : '-') << ' ';
      if (e.direction == Direction::class_as_head) {
        os << cls << " --" << e.relation << "--> " << e.key;
      } else {
        os << e.key << " --" << e.relation << "--> " << cls;
      }
      os << "  (" << e.score << ")\n";
    }
  }
  return os.str();
}

}  // namespace tcape::prompt
