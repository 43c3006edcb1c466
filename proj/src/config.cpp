#include "tcape/config.hpp"

#include <set>

#include "tcape/error.hpp"

namespace tcape {

using nlohmann::json;

tca::Norm parse_norm(const std::string& s) {
  if (s == "none") return tca::Norm::none;
  if (s == "power") return tca::Norm::power;
  if (s == "l2") return tca::Norm::l2;
  if (s == "power+l2") return tca::Norm::power_l2;
  throw Error("unknown normalization \"" + s + "\" (none|power|l2|power+l2)");
}

TrainConfig TrainConfig::preset_named(const std::string& name) {
  TrainConfig c;
  c.preset = name;
  if (name == "ucf") {
    c.window = 9;
    c.kernel = 9;
    c.tau = 0.09;
    c.lambda = 1.0;
    c.smooth = "sliding";
    c.kappa = 7;
    c.norm = "power+l2";
  } else if (name == "xd") {
    c.window = 9;
    c.kernel = 3;
    c.tau = 0.05;
    c.lambda = 1.0;
    c.smooth = "moving";
    c.kappa = 9;
    c.norm = "none";
  } else if (name == "shtech") {
    c.window = 5;
    c.kernel = 3;
    c.tau = 0.2;
    c.lambda = 9.0;
    c.smooth = "sliding";
    c.kappa = 3;
    c.norm = "power+l2";
  } else if (name == "synthetic") {
    c.batch_size = 16;
    c.epochs = 30;
    c.lr = 1e-3;
    c.window = 9;
    c.kernel = 3;
    c.tau = 0.09;
    c.lambda = 1.0;
    c.smooth = "sliding";
    c.kappa = 3;
    c.norm = "power+l2";
  } else {
    throw Error("unknown preset \"" + name + "\" (ucf|xd|shtech|synthetic)");
  }
  return c;
}

std::vector<std::string> TrainConfig::validate() const {
  std::vector<std::string> e;
  if (batch_size < 2) e.push_back("batch_size must be at least 2");
  if (epochs == 0) e.push_back("epochs must be at least 1");
  if (!(lr > 0)) e.push_back("lr must be positive");
  if (snippet_limit == 0) e.push_back("snippet_limit must be at least 1");
  if (hidden_dim == 0) e.push_back("hidden_dim must be positive");
  if (value_dim == 0) e.push_back("value_dim must be positive");
  if (window == 0) e.push_back("window must be at least 1");
  if (embed_dim == 0 || reduced_dim == 0) e.push_back("MLP widths must be positive");
  if (kernel == 0) e.push_back("kernel must be at least 1");
  if (!(dropout >= 0 && dropout < 1)) e.push_back("dropout must lie in [0, 1)");
  if (!(lambda >= 0)) e.push_back("lambda must be nonnegative");
  if (!(tau > 0)) e.push_back("tau must be positive");
  if (!(mu > 0)) e.push_back("mu must be positive");
  if (kappa == 0) e.push_back("kappa must be at least 1");
  try { parse_norm(norm); } catch (const Error& x) { e.push_back(x.what()); }
  try { eval::parse_smooth_mode(smooth); } catch (const Error& x) { e.push_back(x.what()); }
  if (loss != "bce" && loss != "pos_only") e.push_back("loss must be bce or pos_only");
  if (tail != "zero" && tail != "shrink") e.push_back("tail must be zero or shrink");
  if (crop_mode != "feature_mean" && crop_mode != "score_mean") e.push_back("crop_mode must be feature_mean or score_mean");
  return e;
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["preset"] = preset;
  j["seed"] = seed;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["lr"] = lr;
  j["snippet_limit"] = snippet_limit;
  j["use_tca"] = use_tca;
  j["hidden_dim"] = hidden_dim;
  j["value_dim"] = value_dim;
  j["window"] = window;
  j["norm"] = norm;
  j["dpe"] = dpe;
  j["fixed_alpha"] = fixed_alpha ? nlohmann::ordered_json(*fixed_alpha) : nlohmann::ordered_json(nullptr);
  j["embed_dim"] = embed_dim;
  j["reduced_dim"] = reduced_dim;
  j["kernel"] = kernel;
  j["dropout"] = dropout;
  j["loss"] = loss;
  j["use_pel"] = use_pel;
  j["lambda"] = lambda;
  j["tau"] = tau;
  j["mu"] = mu;
  j["separation"] = separation;
  j["score_gradient"] = score_gradient;
  j["smooth"] = smooth;
  j["kappa"] = kappa;
  j["tail"] = tail;
  j["crop_mode"] = crop_mode;
  return j;
}

void TrainConfig::apply(const json& o, std::vector<std::string>& errors) {
  if (!o.is_object()) {
    errors.push_back("configuration must be a JSON object");
    return;
  }
  auto set = [&](const std::string& key, auto& field) {
    if (!o.contains(key)) return;
    try {
      o.at(key).get_to(field);
    } catch (const json::exception&) {
      errors.push_back("\"" + key + "\" has the wrong type");
    }
  };
  const auto known = to_json();
  for (const auto& [k, _] : o.items()) {
    if (!known.contains(k)) errors.push_back("unknown configuration key \"" + k + "\"");
  }
  set("preset", preset);
  set("seed", seed);
  set("batch_size", batch_size);
  set("epochs", epochs);
  set("lr", lr);
  set("snippet_limit", snippet_limit);
  set("use_tca", use_tca);
  set("hidden_dim", hidden_dim);
  set("value_dim", value_dim);
  set("window", window);
  set("norm", norm);
  set("dpe", dpe);
  if (o.contains("fixed_alpha")) {
    if (o["fixed_alpha"].is_null()) fixed_alpha.reset();
    else if (o["fixed_alpha"].is_number()) fixed_alpha = o["fixed_alpha"].get<double>();
    else errors.push_back("\"fixed_alpha\" has the wrong type");
  }
  set("embed_dim", embed_dim);
  set("reduced_dim", reduced_dim);
  set("kernel", kernel);
  set("dropout", dropout);
  set("loss", loss);
  set("use_pel", use_pel);
  set("lambda", lambda);
  set("tau", tau);
  set("mu", mu);
  set("separation", separation);
  set("score_gradient", score_gradient);
  set("smooth", smooth);
  set("kappa", kappa);
  set("tail", tail);
  set("crop_mode", crop_mode);
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c = preset_named(j.value("preset", std::string("ucf")));
  std::vector<std::string> errors;
  c.apply(j, errors);
  for (const auto& e : c.validate()) errors.push_back(e);
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw Error(msg);
  }
  return c;
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.use_tca = use_tca;
  m.tca.hidden_dim = hidden_dim;
  m.tca.value_dim = value_dim;
  m.tca.window = window;
  m.tca.norm = parse_norm(norm);
  m.tca.dpe = dpe;
  m.tca.fixed_alpha = fixed_alpha;
  m.head.embed_dim = embed_dim;
  m.head.reduced_dim = reduced_dim;
  m.head.kernel = kernel;
  m.head.dropout = dropout;
  return m;
}

eval::SmoothingConfig TrainConfig::smoothing() const {
  return {eval::parse_smooth_mode(smooth), kappa, tail == "shrink" ? eval::Tail::shrink : eval::Tail::zero};
}

head::LossMode TrainConfig::loss_mode() const {
  return loss == "pos_only" ? head::LossMode::pos_only : head::LossMode::bce;
}

featio::CropMode TrainConfig::crops() const {
  return crop_mode == "score_mean" ? featio::CropMode::score_mean : featio::CropMode::feature_mean;
}

}  // namespace tcape
