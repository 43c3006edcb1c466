#include "tcape/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tcape/error.hpp"
#include "tcape/head.hpp"
#include "tcape/ops.hpp"
#include "tcape/pel.hpp"

namespace tcape {

using nlohmann::json;

namespace {

constexpr char kCheckpointMagic[4] = {'T', 'C', 'K', '1'};

// Streams derived from the run seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kDropoutStream = 3;

void shuffle(std::vector<std::size_t>& v, CounterRng rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

std::size_t class_index(const std::vector<std::string>& classes, const std::string& cls) {
  const auto it = std::find(classes.begin(), classes.end(), cls);
  if (it == classes.end()) throw Error("class \"" + cls + "\" is not in the class list");
  return static_cast<std::size_t>(it - classes.begin());
}

}  // namespace

std::vector<TrainVideo> load_training_set(const featio::Manifest& manifest, const TrainConfig& cfg) {
  std::vector<TrainVideo> out;
  for (const auto* rec : manifest.split(featio::Split::train)) {
    TrainVideo v{rec->id, rec->label, rec->primary_class(), {}};
    if (cfg.crops() == featio::CropMode::feature_mean) {
      v.crops.push_back(featio::sample_snippets(featio::load_features(rec->features), cfg.snippet_limit));
    } else {
      for (auto& c : featio::load_feature_crops(rec->features))
        v.crops.push_back(featio::sample_snippets(c, cfg.snippet_limit));
    }
    out.push_back(std::move(v));
  }
  if (out.empty()) throw Error("manifest has no training videos");
  return out;
}

std::vector<std::string> class_order(const std::vector<TrainVideo>& videos) {
  std::set<std::string> anomalies;
  for (const auto& v : videos)
    if (v.label == 1) anomalies.insert(v.cls);
  std::vector<std::string> out(anomalies.begin(), anomalies.end());
  out.push_back(featio::kNormalClass);
  return out;
}

std::string EpochLog::to_jsonl() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["l_ce"] = l_ce;
  j["l_kd"] = l_kd;
  j["alpha"] = alpha ? nlohmann::ordered_json(*alpha) : nlohmann::ordered_json(nullptr);
  j["lr"] = lr;
  return j.dump();
}

std::optional<double> TrainState::alpha() const {
  if (!params.tca) return std::nullopt;
  if (config.fixed_alpha) return config.fixed_alpha;
  return params.tca->alpha.value[0];
}

std::size_t steps_per_epoch(std::size_t abnormal_count, std::size_t batch_size) {
  const std::size_t half = std::max<std::size_t>(1, batch_size / 2);
  return (abnormal_count + half - 1) / half;
}

TrainState init_training(const TrainConfig& cfg, std::size_t input_dim, std::vector<std::string> classes,
                         std::size_t abnormal_count) {
  if (abnormal_count == 0) throw Error("training needs at least one abnormal video");
  TrainState s;
  s.config = cfg;
  s.classes = std::move(classes);
  CounterRng init = CounterRng(cfg.seed).fork(kInitStream);
  s.params = init_model(input_dim, cfg.model_config(), init);
  s.steps_per_epoch = steps_per_epoch(abnormal_count, cfg.batch_size);
  s.adam.base_lr = cfg.lr;
  s.adam.total_steps = s.steps_per_epoch * cfg.epochs;
  return s;
}

void train(TrainState& state, const std::vector<TrainVideo>& videos, const prompt::PromptBank* prompts,
           const TrainHooks& hooks) {
  const TrainConfig& cfg = state.config;
  const ModelConfig mcfg = cfg.model_config();
  std::vector<std::size_t> abnormal, normal;
  for (std::size_t i = 0; i < videos.size(); ++i) (videos[i].label == 1 ? abnormal : normal).push_back(i);
  if (abnormal.empty() || normal.empty()) throw Error("training needs both normal and abnormal videos");
  if (steps_per_epoch(abnormal.size(), cfg.batch_size) != state.steps_per_epoch)
    throw Error("training set does not match the checkpointed run (abnormal video count changed)");

  Tensor prompt_matrix;
  if (cfg.use_pel) {
    if (prompts == nullptr) throw Error("prompt-enhanced learning is on but no prompt bank was given");
    std::vector<std::string> missing;
    for (const auto& c : state.classes)
      if (!prompts->has(c)) missing.push_back(c);
    if (!missing.empty()) {
      std::string msg = "prompt bank lacks classes:";
      for (const auto& m : missing) msg += " " + m;
      throw Error(msg);
    }
    if (prompts->dim != cfg.embed_dim)
      throw Error("prompt width " + std::to_string(prompts->dim) + " does not match embedding width " +
                  std::to_string(cfg.embed_dim));
    prompt_matrix = prompts->matrix(state.classes);
  }
  const std::size_t normal_idx = class_index(state.classes, featio::kNormalClass);
  std::vector<std::size_t> video_class(videos.size(), normal_idx);
  for (std::size_t i : abnormal) video_class[i] = class_index(state.classes, videos[i].cls);

  const CounterRng base(cfg.seed);
  const std::size_t half = std::max<std::size_t>(1, cfg.batch_size / 2);
  const auto params = state.params.list();

  while (state.epoch < cfg.epochs) {
    if (hooks.stop_after && state.epoch >= *hooks.stop_after) break;
    const CounterRng epoch_rng = base.fork(kShuffleStream).fork(state.epoch);
    std::vector<std::size_t> abn = abnormal, nor = normal;
    shuffle(abn, epoch_rng.fork(0));
    shuffle(nor, epoch_rng.fork(1));

    double ce_sum = 0.0, kd_sum = 0.0, lr = 0.0;
    std::size_t normal_cursor = 0;
    for (std::size_t b = 0; b < state.steps_per_epoch; ++b) {
      const std::size_t lo = b * half, hi = std::min(abn.size(), lo + half);
      std::vector<std::size_t> batch(abn.begin() + static_cast<std::ptrdiff_t>(lo),
                                     abn.begin() + static_cast<std::ptrdiff_t>(hi));
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(nor[normal_cursor++ % nor.size()]);

      CounterRng drop = base.fork(kDropoutStream).fork(state.adam.step);
      Graph g;
      std::vector<Var> probs;
      std::vector<int> labels;
      std::vector<pel::AlignmentItem> items;
      try {
        for (std::size_t vi : batch) {
          const TrainVideo& v = videos[vi];
          const ModelOutput out = forward_crops(g, v.crops, state.params, mcfg, true, drop);
          probs.push_back(head::topk_pool(out.scores, v.label));
          labels.push_back(v.label);
          if (!cfg.use_pel) continue;
          if (cfg.separation) {
            const auto ctx = pel::separate_context(g, out.embed, out.scores, cfg.mu, cfg.score_gradient);
            if (v.label == 1) {
              items.push_back({ctx.foreground, video_class[vi], pel::Role::abnormal_fg});
              items.push_back({ctx.background, normal_idx, pel::Role::abnormal_bg});
            } else {
              items.push_back({ctx.foreground, normal_idx, pel::Role::normal_fg});
            }
          } else {
            const auto role = v.label == 1 ? pel::Role::abnormal_fg : pel::Role::normal_fg;
            items.push_back({ops::mean_rows(out.embed), video_class[vi], role});
          }
        }
        const Var l_ce = head::mil_loss(g, probs, labels, cfg.loss_mode());
        Var loss = l_ce;
        double l_kd = 0.0;
        if (cfg.use_pel) {
          const Var kd = pel::alignment_loss(g, items, prompt_matrix, cfg.tau);
          l_kd = kd.value()[0];
          loss = pel::total_loss(l_ce, kd, cfg.lambda);
        }
        g.backward(loss);
        ce_sum += l_ce.value()[0];
        kd_sum += l_kd;
      } catch (const ShapeError&) {
        throw;
      } catch (const Error& e) {
        throw Error("training aborted at epoch " + std::to_string(state.epoch + 1) + ", step " +
                    std::to_string(state.adam.step) + ": " + e.what());
      }
      std::vector<Tensor> grads;
      grads.reserve(params.size());
      for (const Parameter* p : params) grads.push_back(g.grad_of(*p));
      lr = state.adam.current_lr();
      adam_step(state.adam, params, grads);
      for (const Parameter* p : params)
        if (!p->value.all_finite())
          throw Error("training aborted: parameter " + p->name + " became non-finite at step " +
                      std::to_string(state.adam.step));
    }
    ++state.epoch;
    EpochLog log{state.epoch, ce_sum / static_cast<double>(state.steps_per_epoch),
                 kd_sum / static_cast<double>(state.steps_per_epoch), state.alpha(), lr};
    if (hooks.checkpoint) save_checkpoint(*hooks.checkpoint, state);
    if (hooks.on_epoch) hooks.on_epoch(log);
  }
}

void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  nlohmann::ordered_json index;
  index["format"] = "tcape-checkpoint";
  index["config"] = state.config.to_json();
  index["classes"] = state.classes;
  index["epoch"] = state.epoch;
  index["steps_per_epoch"] = state.steps_per_epoch;
  index["input_dim"] = state.params.input_dim();
  const AdamState& a = state.adam;
  index["adam"] = {{"step", a.step}, {"total_steps", a.total_steps}, {"base_lr", a.base_lr},
                   {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}};
  index["rng"] = {{"seed", state.config.seed}};
  if (auto al = state.alpha()) index["alpha"] = *al;

  std::string blobs;
  auto tensors = nlohmann::ordered_json::array();
  auto add = [&](const std::string& name, const Tensor& t) {
    const auto bytes = featio::encode(t, featio::Dtype::f64);
    tensors.push_back({{"name", name}, {"offset", blobs.size()}, {"length", bytes.size()}});
    blobs.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  };
  const auto params = state.params.list();
  for (const Parameter* p : params) add(p->name, p->value);
  if (!a.m.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      add("adam.m." + params[i]->name, a.m[i]);
      add("adam.v." + params[i]->name, a.v[i]);
    }
  }
  index["tensors"] = tensors;

  const std::string idx = index.dump();
  std::string out(kCheckpointMagic, 4);
  const std::uint64_t n = idx.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
  out += idx;
  out += blobs;
  write_atomic(path, out);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = "checkpoint " + path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw Error(where + " is not a checkpoint archive");
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[4 + i])) << (8 * i);
  if (n > bytes.size() - 12) throw Error(where + " is truncated");
  json index;
  try {
    index = json::parse(bytes.substr(12, n));
  } catch (const json::exception& e) {
    throw Error(where + " has a corrupt index: " + e.what());
  }
  const std::size_t base = 12 + n;

  std::map<std::string, Tensor> tensors;
  for (const auto& t : index.at("tensors")) {
    const std::size_t off = t.at("offset"), len = t.at("length");
    if (off + len > bytes.size() - base) throw Error(where + " is truncated");
    const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data() + base + off);
    tensors[t.at("name").get<std::string>()] = featio::decode({p, len});
  }

  TrainState s;
  s.config = TrainConfig::from_json(index.at("config"));
  s.classes = index.at("classes").get<std::vector<std::string>>();
  s.epoch = index.at("epoch");
  s.steps_per_epoch = index.at("steps_per_epoch");
  CounterRng unused;
  s.params = init_model(index.at("input_dim").get<std::size_t>(), s.config.model_config(), unused);
  const auto& a = index.at("adam");
  s.adam.step = a.at("step");
  s.adam.total_steps = a.at("total_steps");
  s.adam.base_lr = a.at("base_lr");
  s.adam.beta1 = a.at("beta1");
  s.adam.beta2 = a.at("beta2");
  s.adam.eps = a.at("eps");

  auto take = [&](const std::string& name, const Tensor::Shape& dims) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw Error(where + " lacks tensor " + name);
    if (it->second.dims() != dims)
      throw ShapeError(where + ": tensor " + name + " has shape " + it->second.shape_string() + ", expected " +
                       shape_string(dims));
    return it->second;
  };
  const auto params = s.params.list();
  for (Parameter* p : params) p->value = take(p->name, p->value.dims());
  if (tensors.count("adam.m." + params.front()->name)) {
    for (Parameter* p : params) {
      s.adam.m.push_back(take("adam.m." + p->name, p->value.dims()));
      s.adam.v.push_back(take("adam.v." + p->name, p->value.dims()));
    }
  }
  return s;
}

}  // namespace tcape
