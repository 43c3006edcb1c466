#include "tcape/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "tcape/error.hpp"

namespace tcape {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

ScoredVideo score_video(const featio::VideoRecord& rec, const ModelParams& params, const TrainConfig& cfg,
                        const eval::SmoothingConfig& smoothing) {
  ScoredVideo out;
  out.id = rec.id;
  const ModelConfig mcfg = cfg.model_config();
  std::size_t width = 0;
  if (cfg.crops() == featio::CropMode::feature_mean) {
    const Tensor x = featio::load_features(rec.features);
    width = x.cols();
    if (width == params.input_dim()) out.snippet = score_snippets(x, params, mcfg);
  } else {
    const auto crops = featio::load_feature_crops(rec.features);
    width = crops.front().cols();
    if (width == params.input_dim()) out.snippet = score_snippets(crops, params, mcfg);
  }
  if (width != params.input_dim())
    throw ShapeError("video " + rec.id + ": feature width " + std::to_string(width) +
                     " does not match checkpoint input width " + std::to_string(params.input_dim()));
  out.smoothed = eval::smooth(out.snippet, smoothing);
  out.frames = featio::expand_to_frames(out.smoothed, rec.frame_count(out.smoothed.size()));
  return out;
}

std::vector<eval::VideoScores> attach_labels(const featio::Manifest& manifest,
                                             const std::vector<ScoredVideo>& scored) {
  std::map<std::string, const ScoredVideo*> by_id;
  for (const auto& s : scored) by_id[s.id] = &s;
  std::vector<eval::VideoScores> out;
  std::vector<std::string> missing;
  for (const auto* rec : manifest.split(featio::Split::test)) {
    const auto it = by_id.find(rec->id);
    if (it == by_id.end()) {
      missing.push_back(rec->id);
      continue;
    }
    eval::VideoScores v;
    v.id = rec->id;
    v.cls = rec->primary_class();
    v.label = rec->label;
    v.frame_scores = it->second->frames;
    if (rec->frames) {
      v.frame_labels = *rec->frames;
    } else {
      v.frame_labels.assign(v.frame_scores.size(), static_cast<std::uint8_t>(rec->label == 1));
    }
    if (v.frame_labels.size() != v.frame_scores.size())
      throw ShapeError("video " + rec->id + ": " + std::to_string(v.frame_scores.size()) + " frame scores for " +
                       std::to_string(v.frame_labels.size()) + " labelled frames");
    out.push_back(std::move(v));
  }
  if (!missing.empty()) {
    std::string msg = "no scores for test videos:";
    for (const auto& m : missing) msg += " " + m;
    throw Error(msg);
  }
  return out;
}

eval::MetricReport evaluate_model(const ModelParams& params, const TrainConfig& cfg,
                                  const featio::Manifest& manifest, const eval::SmoothingConfig& smoothing,
                                  const eval::EvalOptions& opts) {
  std::vector<ScoredVideo> scored;
  for (const auto* rec : manifest.split(featio::Split::test)) scored.push_back(score_video(*rec, params, cfg, smoothing));
  return eval::evaluate(attach_labels(manifest, scored), opts);
}

void write_scores(const std::filesystem::path& dir, const ScoredVideo& v) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / (v.id + ".csv"), std::ios::trunc);
    if (!os) throw Error("cannot write scores for " + v.id);
    os << "snippet,raw,smoothed\n";
    for (std::size_t i = 0; i < v.snippet.size(); ++i)
      os << i << ',' << fmt(v.snippet[i]) << ',' << fmt(v.smoothed[i]) << '\n';
  }
  std::ofstream os(dir / (v.id + ".frames.csv"), std::ios::trunc);
  if (!os) throw Error("cannot write frame scores for " + v.id);
  os << "frame,score\n";
  for (std::size_t i = 0; i < v.frames.size(); ++i) os << i << ',' << fmt(v.frames[i]) << '\n';
}

std::vector<double> read_frame_scores(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "frame,score") throw Error(path.string() + ": missing frame,score header");
  std::vector<double> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument("no comma");
      if (std::stoul(line.substr(0, comma)) != out.size()) throw std::invalid_argument("frame index out of order");
      out.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": malformed row (" + e.what() + ")");
    }
  }
  return out;
}

}  // namespace tcape
