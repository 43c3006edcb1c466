#include "tcape/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tcape/complexity.hpp"
#include "tcape/conceptnet.hpp"
#include "tcape/config.hpp"
#include "tcape/error.hpp"
#include "tcape/log.hpp"
#include "tcape/pipeline.hpp"
#include "tcape/synthetic.hpp"
#include "tcape/trainer.hpp"

namespace tcape {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ','))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

// ---- synth -------------------------------------------------------------

struct SynthArgs {
  fs::path out;
  SyntheticOptions opts;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* c = app.add_subcommand("synth", "Generate a seeded synthetic dataset");
  c->add_option("--out", a.out, "Output directory")->required();
  c->add_option("--seed", a.opts.seed, "Generator seed");
  c->add_option("--train-videos", a.opts.train_videos);
  c->add_option("--test-videos", a.opts.test_videos);
  c->add_option("--dim", a.opts.dim, "Feature width");
  c->add_option("--min-length", a.opts.min_length);
  c->add_option("--max-length", a.opts.max_length);
  c->add_option("--amplitude", a.opts.amplitude, "Anomaly bump magnitude");
  c->add_option("--segments", a.opts.segments, "Anomalous stretches per abnormal video");
  c->add_option("--crops", a.opts.crops);
  c->add_option("--prompt-dim", a.opts.prompt_dim);
}

// ---- prompt-build ------------------------------------------------------

struct PromptArgs {
  std::string classes;
  std::string source = "fixture";
  fs::path fixtures = "fixtures";
  std::string filter = "step1+dynamic";
  double threshold = 1.0;
  std::string embedder = "stub";
  fs::path embeddings;
  std::size_t dim = 512;
  std::string template_mode = "label+conceptnet";
  std::size_t relations = 5;
  fs::path out;
};

void add_prompt(CLI::App& app, PromptArgs& a) {
  auto* c = app.add_subcommand("prompt-build", "Build class prompt embeddings from the concept graph");
  c->add_option("--classes", a.classes, "Comma-separated anomaly classes (normal is added)")->required();
  c->add_option("--source", a.source, "live or fixture")->check(CLI::IsMember({"live", "fixture"}));
  c->add_option("--fixtures", a.fixtures, "Recorded responses (overridden by TCAPE_FIXTURES)");
  c->add_option("--filter", a.filter, "none | step1 | step1+fixed | step1+dynamic");
  c->add_option("--threshold", a.threshold, "Fixed relevance threshold");
  c->add_option("--embedder", a.embedder, "stub or file")->check(CLI::IsMember({"stub", "file"}));
  c->add_option("--embeddings", a.embeddings, "Embedding table for --embedder file");
  c->add_option("--dim", a.dim, "Stub embedding width");
  c->add_option("--template", a.template_mode, "label | prefix | label+wordnet | learnable | label+conceptnet");
  c->add_option("--relations", a.relations, "Number of relations kept");
  c->add_option("--out", a.out, "Prompt bank file")->required();
}

int run_prompt(const PromptArgs& a, std::ostream& out) {
  std::vector<std::string> classes = split_list(a.classes);
  if (std::find(classes.begin(), classes.end(), featio::kNormalClass) == classes.end())
    classes.push_back(featio::kNormalClass);

  prompt::BankOptions bank_opts;
  bank_opts.mode = prompt::parse_template(a.template_mode);
  const auto mode = prompt::parse_filter_mode(a.filter);

  prompt::ConceptDictionary raw, filtered;
  if (bank_opts.mode == prompt::Template::label_conceptnet) {
    prompt::FetchOptions fo;
    fo.source = a.source == "live" ? prompt::Source::live : prompt::Source::fixture;
    fo.fixtures_dir = a.fixtures;
    if (const char* env = std::getenv("TCAPE_FIXTURES"); env && *env) fo.fixtures_dir = env;
    std::map<std::string, std::vector<prompt::ConceptEdge>> all;
    for (const auto& cls : classes) all[cls] = prompt::fetch_edges(cls, prompt::candidate_relations(), fo);
    raw.relations = prompt::select_relations(all, a.relations);
    filtered.relations = raw.relations;
    for (const auto& [cls, edges] : all) {
      auto& kept = raw.edges[cls];
      for (const auto& e : edges)
        if (std::find(raw.relations.begin(), raw.relations.end(), e.relation) != raw.relations.end())
          kept.push_back(e);
      filtered.edges[cls] = prompt::filter_nodes(kept, mode, a.threshold);
    }
  }

  std::unique_ptr<prompt::Embedder> embedder;
  if (a.embedder == "file") {
    if (a.embeddings.empty()) throw Error("--embedder file needs --embeddings");
    embedder = std::make_unique<prompt::TableEmbedder>(prompt::TableEmbedder::load(a.embeddings));
  } else {
    embedder = std::make_unique<prompt::StubEmbedder>(a.dim);
  }
  const auto bank = prompt::build_prompt_bank(filtered, classes, *embedder, bank_opts);
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  bank.save(a.out);
  fs::path dump = a.out;
  dump.replace_extension(".dictionary.txt");
  write_text(dump, prompt::dump_dictionary(raw, filtered));
  out << "wrote " << a.out.string() << " (" << classes.size() << " classes, dim " << bank.dim << ")\n";
  return 0;
}

// ---- train -------------------------------------------------------------

struct TrainArgs {
  fs::path config;
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<fs::path> manifest, prompts, out;
  bool no_pel = false, no_tca = false, no_ss = false, resume = false;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* c = app.add_subcommand("train", "Train a model");
  c->add_option("--config", a.config, "JSON configuration file");
  c->add_option("--preset", a.preset, "ucf | xd | shtech | synthetic");
  c->add_option("--seed", a.seed);
  c->add_option("--epochs", a.epochs);
  c->add_option("--manifest", a.manifest);
  c->add_option("--prompts", a.prompts, "Prompt bank file");
  c->add_option("--out", a.out, "Run directory");
  c->add_flag("--no-pel", a.no_pel, "Disable prompt-enhanced learning");
  c->add_flag("--no-tca", a.no_tca, "Disable temporal context aggregation");
  c->add_flag("--no-ss", a.no_ss, "Disable score smoothing");
  c->add_flag("--resume", a.resume, "Continue from <out>/checkpoint.tck");
}

const char* const kPathKeys[] = {"manifest", "prompts", "out", "fixtures"};

int run_train(const TrainArgs& a, std::ostream& out) {
  json file = json::object();
  fs::path base;
  if (!a.config.empty()) {
    try {
      file = json::parse(read_text(a.config));
    } catch (const json::parse_error& e) {
      throw Error("cannot parse " + a.config.string() + ": " + e.what());
    }
    base = a.config.parent_path();
  }
  std::vector<std::string> errors;
  auto path_from_file = [&](const char* key) -> std::optional<fs::path> {
    if (!file.is_object() || !file.contains(key)) return std::nullopt;
    if (!file[key].is_string()) {
      errors.push_back(std::string("\"") + key + "\" must be a string path");
      return std::nullopt;
    }
    fs::path p = file[key].get<std::string>();
    return p.is_relative() ? base / p : p;
  };
  auto manifest = a.manifest ? a.manifest : path_from_file("manifest");
  auto prompts = a.prompts ? a.prompts : path_from_file("prompts");
  auto run_dir = a.out ? a.out : path_from_file("out");
  if (file.is_object())
    for (const char* k : kPathKeys) file.erase(k);

  std::string preset = a.preset.value_or("ucf");
  if (!a.preset && file.is_object() && file.contains("preset") && file["preset"].is_string())
    preset = file["preset"].get<std::string>();
  TrainConfig cfg;
  try {
    cfg = TrainConfig::preset_named(preset);
  } catch (const Error& e) {
    errors.push_back(e.what());
  }
  cfg.apply(file, errors);
  cfg.preset = preset;
  if (a.seed) cfg.seed = *a.seed;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.no_pel) cfg.use_pel = false;
  if (a.no_tca) cfg.use_tca = false;
  if (a.no_ss) cfg.smooth = "none";
  for (const auto& e : cfg.validate()) errors.push_back(e);
  if (!manifest) errors.push_back("no manifest given (--manifest or \"manifest\")");
  if (!run_dir) errors.push_back("no run directory given (--out or \"out\")");
  if (cfg.use_pel && !prompts) errors.push_back("prompt-enhanced learning needs a prompt bank (--prompts or \"prompts\")");
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw Error(msg);
  }

  const auto m = featio::Manifest::load(*manifest);
  const auto videos = load_training_set(m, cfg);
  std::optional<prompt::PromptBank> bank;
  if (cfg.use_pel) bank = prompt::PromptBank::load(*prompts);

  fs::create_directories(*run_dir);
  const fs::path ckpt = *run_dir / "checkpoint.tck";
  const fs::path log_path = *run_dir / "train_log.jsonl";

  nlohmann::ordered_json resolved = cfg.to_json();
  resolved["manifest"] = fs::absolute(*manifest).lexically_normal().generic_string();
  if (prompts) resolved["prompts"] = fs::absolute(*prompts).lexically_normal().generic_string();
  write_text(*run_dir / "config.json", resolved.dump(2) + "\n");

  TrainState state;
  std::size_t abnormal = 0;
  for (const auto& v : videos) abnormal += v.label == 1;
  if (a.resume && fs::exists(ckpt)) {
    state = load_checkpoint(ckpt);
    if (state.config.to_json() != cfg.to_json())
      throw Error("--resume: configuration differs from the one stored in " + ckpt.string());
    out << "resuming after epoch " << state.epoch << "\n";
  } else {
    state = init_training(cfg, videos.front().crops.front().cols(), class_order(videos), abnormal);
    write_text(log_path, "");
  }

  // Drop log lines past the resumed epoch so the log matches an uninterrupted run.
  std::vector<std::string> lines;
  {
    std::ifstream is(log_path);
    std::string line;
    while (lines.size() < state.epoch && std::getline(is, line)) lines.push_back(line);
  }
  std::string kept;
  for (const auto& l : lines) kept += l + "\n";
  write_text(log_path, kept);

  TrainHooks hooks;
  hooks.checkpoint = ckpt;
  hooks.on_epoch = [&](const EpochLog& e) {
    std::ofstream os(log_path, std::ios::app);
    os << e.to_jsonl() << '\n';
    out << e.to_jsonl() << '\n';
  };
  train(state, videos, bank ? &*bank : nullptr, hooks);
  if (!fs::exists(ckpt)) save_checkpoint(ckpt, state);
  out << "wrote " << ckpt.string() << "\n";
  return 0;
}

// ---- score -------------------------------------------------------------

struct ScoreArgs {
  fs::path checkpoint, manifest, out;
  std::optional<std::string> smooth;
  std::optional<std::size_t> kappa;
};

void add_score(CLI::App& app, ScoreArgs& a) {
  auto* c = app.add_subcommand("score", "Score test videos with a trained model");
  c->add_option("--checkpoint", a.checkpoint)->required();
  c->add_option("--manifest", a.manifest)->required();
  c->add_option("--out", a.out, "Score directory")->required();
  c->add_option("--smooth", a.smooth, "none | moving | sliding (default: from checkpoint)");
  c->add_option("--kappa", a.kappa, "Smoothing window");
}

int run_score(const ScoreArgs& a, std::ostream& out) {
  const TrainState state = load_checkpoint(a.checkpoint);
  eval::SmoothingConfig sm = state.config.smoothing();
  if (a.smooth) sm.mode = eval::parse_smooth_mode(*a.smooth);
  if (a.kappa) sm.kappa = *a.kappa;
  if (sm.kappa == 0) throw Error("--kappa must be at least 1");
  const auto m = featio::Manifest::load(a.manifest);
  std::size_t n = 0;
  for (const auto* rec : m.split(featio::Split::test)) {
    write_scores(a.out, score_video(*rec, state.params, state.config, sm));
    ++n;
  }
  out << "scored " << n << " videos into " << a.out.string() << "\n";
  return 0;
}

// ---- eval --------------------------------------------------------------

struct EvalArgs {
  fs::path scores, manifest, out;
  double threshold = 0.5;
  bool far_all = false;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* c = app.add_subcommand("eval", "Compute frame-level metrics from score files");
  c->add_option("--scores", a.scores)->required();
  c->add_option("--manifest", a.manifest)->required();
  c->add_option("--out", a.out, "Report directory (default: the score directory)");
  c->add_option("--threshold", a.threshold, "False-alarm threshold");
  c->add_flag("--far-all-negatives", a.far_all, "FAR over all negative frames, not only normal videos");
}

int run_eval(const EvalArgs& a, std::ostream& out) {
  const auto m = featio::Manifest::load(a.manifest, false);
  std::vector<ScoredVideo> scored;
  std::vector<std::string> missing;
  for (const auto* rec : m.split(featio::Split::test)) {
    const fs::path p = a.scores / (rec->id + ".frames.csv");
    if (!fs::exists(p)) {
      missing.push_back(rec->id);
      continue;
    }
    scored.push_back({rec->id, {}, {}, read_frame_scores(p)});
  }
  if (!missing.empty()) {
    std::string msg = "missing scores for:";
    for (const auto& id : missing) msg += " " + id;
    throw Error(msg);
  }
  eval::EvalOptions opts;
  opts.threshold = a.threshold;
  opts.far_normal_videos_only = !a.far_all;
  std::vector<std::string> expected;
  for (const auto& v : m.videos)
    if (v.label == 1 && std::find(expected.begin(), expected.end(), v.primary_class()) == expected.end())
      expected.push_back(v.primary_class());
  const auto report = eval::evaluate(attach_labels(m, scored), opts, expected);
  const fs::path dir = a.out.empty() ? a.scores : a.out;
  write_text(dir / "metrics.json", eval::report_json(report));
  write_text(dir / "metrics.csv", eval::report_csv(report));
  char buf[128];
  std::snprintf(buf, sizeof buf, "AUC %.4f  AP %.4f  FAR %.4f\n", report.auc, report.ap, report.far);
  out << buf;
  return 0;
}

// ---- report ------------------------------------------------------------

struct ReportArgs {
  std::size_t input_dim = 1024;
  std::size_t length = 200;
  std::size_t hidden_dim = 128;
  std::size_t value_dim = 128;
  std::size_t kernel = 9;
  bool json = false;
};

void add_report(CLI::App& app, ReportArgs& a) {
  auto* c = app.add_subcommand("report", "Print parameter and FLOP counts");
  c->add_option("--input-dim", a.input_dim);
  c->add_option("--length", a.length, "Snippets per video");
  c->add_option("--hidden-dim", a.hidden_dim);
  c->add_option("--value-dim", a.value_dim);
  c->add_option("--kernel", a.kernel, "Classifier width");
  c->add_flag("--json", a.json);
}

int run_report(const ReportArgs& a, std::ostream& out) {
  ModelConfig cfg;
  cfg.tca.hidden_dim = a.hidden_dim;
  cfg.tca.value_dim = a.value_dim;
  cfg.head.kernel = a.kernel;
  const auto r = report_complexity(cfg, a.input_dim, a.length);
  if (a.json) {
    out << r.to_json() << "\n";
    return 0;
  }
  out << r.to_text();
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "published reference: 1.21M parameters (TCA with the MLP), hidden and value widths %zu/%zu here\n",
                a.hidden_dim, a.value_dim);
  out << buf;
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal context aggregation with prompt-enhanced learning for video anomaly detection", "tcape"};
  app.require_subcommand(1);
  SynthArgs synth;
  PromptArgs prompt_args;
  TrainArgs train_args;
  ScoreArgs score_args;
  EvalArgs eval_args;
  ReportArgs report_args;
  add_synth(app, synth);
  add_prompt(app, prompt_args);
  add_train(app, train_args);
  add_score(app, score_args);
  add_eval(app, eval_args);
  add_report(app, report_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  auto previous = log::set_warning_sink([&err](const std::string& m) { err << "warning: " << m << "\n"; });
  int code = 1;
  try {
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "synth") {
      generate_synthetic(synth.out, synth.opts);
      out << "wrote synthetic dataset to " << synth.out.string() << "\n";
      code = 0;
    } else if (name == "prompt-build") {
      code = run_prompt(prompt_args, out);
    } else if (name == "train") {
      code = run_train(train_args, out);
    } else if (name == "score") {
      code = run_score(score_args, out);
    } else if (name == "eval") {
      code = run_eval(eval_args, out);
    } else if (name == "report") {
      code = run_report(report_args, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    code = 1;
  }
  log::set_warning_sink(std::move(previous));
  return code;
}

}  // namespace tcape
