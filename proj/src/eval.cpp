#include "tcape/eval.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tcape/error.hpp"
#include "tcape/featio.hpp"
#include "tcape/log.hpp"

namespace tcape::eval {

SmoothMode parse_smooth_mode(const std::string& s) {
  if (s == "none") return SmoothMode::none;
  if (s == "moving") return SmoothMode::moving;
  if (s == "sliding") return SmoothMode::sliding;
  throw Error("unknown smoothing mode \"" + s + "\" (none|moving|sliding)");
}

std::string to_string(SmoothMode m) {
  switch (m) {
    case SmoothMode::none: return "none";
    case SmoothMode::moving: return "moving";
    case SmoothMode::sliding: return "sliding";
  }
  return "none";
}

std::vector<double> smooth(std::span<const double> s, const SmoothingConfig& cfg) {
  if (s.empty()) throw Error("smooth: empty score sequence");
  if (cfg.kappa == 0) throw Error("smooth: window must be at least 1");
  if (cfg.mode == SmoothMode::none || cfg.kappa == 1) return {s.begin(), s.end()};
  const std::size_t n = s.size(), k = cfg.kappa;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t start = cfg.mode == SmoothMode::moving ? (i / k) * k : i;
    const std::size_t end = std::min(start + k, n);  // exclusive; the rest is zero padding
    double acc = 0.0;
    for (std::size_t j = start; j < end; ++j) acc += s[j];
    const std::size_t div = cfg.tail == Tail::zero ? k : end - start;
    out[i] = acc / static_cast<double>(div);
  }
  return out;
}

namespace {

void require_same_length(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("metric: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) +
                     " labels");
  }
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  require_same_length(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (labels[idx[t]]) {
        pos_rank_sum += midrank;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw Error("roc_auc: labels must contain both classes");
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (pos_rank_sum - p * (p + 1) / 2.0) / (p * q);
}

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  require_same_length(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  std::size_t tp = 0;
  double acc = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[idx[r]]) {
      ++tp;
      acc += static_cast<double>(tp) / static_cast<double>(r + 1);
    }
  }
  if (tp == 0) throw Error("average_precision: no positive labels");
  return acc / static_cast<double>(tp);
}

double false_alarm_rate(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold) {
  require_same_length(scores, labels);
  std::size_t neg = 0, alarms = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i]) continue;
    ++neg;
    if (scores[i] >= threshold) ++alarms;
  }
  if (neg == 0) throw Error("false_alarm_rate: no negative frames");
  return static_cast<double>(alarms) / static_cast<double>(neg);
}

ClassMetrics evaluate_subset(const std::vector<const VideoScores*>& videos, const EvalOptions& opts) {
  ClassMetrics m;
  std::vector<double> s, far_s;
  std::vector<std::uint8_t> l, far_l;
  for (const auto* v : videos) {
    if (v->frame_scores.size() != v->frame_labels.size()) {
      throw ShapeError("video " + v->id + ": " + std::to_string(v->frame_scores.size()) + " frame scores vs " +
                       std::to_string(v->frame_labels.size()) + " labels");
    }
    s.insert(s.end(), v->frame_scores.begin(), v->frame_scores.end());
    l.insert(l.end(), v->frame_labels.begin(), v->frame_labels.end());
    if (!opts.far_normal_videos_only || v->label == 0) {
      far_s.insert(far_s.end(), v->frame_scores.begin(), v->frame_scores.end());
      far_l.insert(far_l.end(), v->frame_labels.begin(), v->frame_labels.end());
    }
    ++m.videos;
  }
  m.frames = s.size();
  m.positive_frames = static_cast<std::size_t>(std::count(l.begin(), l.end(), 1));
  if (m.positive_frames > 0 && m.positive_frames < m.frames) {
    m.auc = roc_auc(s, l);
    m.ap = average_precision(s, l);
  }
  if (std::count(far_l.begin(), far_l.end(), 0) > 0) m.far = false_alarm_rate(far_s, far_l, opts.threshold);
  return m;
}

MetricReport evaluate(const std::vector<VideoScores>& videos, const EvalOptions& opts,
                      const std::vector<std::string>& expected_classes) {
  std::vector<const VideoScores*> all, normals;
  std::map<std::string, std::vector<const VideoScores*>> by_class;
  for (const auto& v : videos) {
    all.push_back(&v);
    if (v.label == 0) normals.push_back(&v);
    else by_class[v.cls].push_back(&v);
  }
  const ClassMetrics global = evaluate_subset(all, opts);
  if (!global.auc) throw Error("evaluate: frame labels must contain both classes");
  if (!global.far) throw Error("evaluate: no negative frames for the false alarm rate");
  MetricReport r;
  r.auc = *global.auc;
  r.ap = *global.ap;
  r.far = *global.far;
  r.videos = global.videos;
  r.frames = global.frames;
  r.positive_frames = global.positive_frames;

  for (const auto& cls : expected_classes) {
    if (cls != featio::kNormalClass && !by_class.count(cls)) {
      log::warn("class \"" + cls + "\" has no test videos; omitted from the per-class report");
    }
  }
  for (const auto& [cls, list] : by_class) {
    auto subset = list;
    subset.insert(subset.end(), normals.begin(), normals.end());
    r.per_class[cls] = evaluate_subset(subset, opts);
  }
  for (const auto& v : videos) r.per_video[v.id] = evaluate_subset({&v}, opts);
  return r;
}

namespace {

nlohmann::ordered_json metrics_json(const ClassMetrics& m) {
  nlohmann::ordered_json j;
  j["auc"] = m.auc ? nlohmann::ordered_json(*m.auc) : nlohmann::ordered_json(nullptr);
  j["ap"] = m.ap ? nlohmann::ordered_json(*m.ap) : nlohmann::ordered_json(nullptr);
  j["far"] = m.far ? nlohmann::ordered_json(*m.far) : nlohmann::ordered_json(nullptr);
  j["videos"] = m.videos;
  j["frames"] = m.frames;
  j["positive_frames"] = m.positive_frames;
  return j;
}

std::string opt(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(17) << *v;
  return os.str();
}

}  // namespace

std::string report_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["auc"] = r.auc;
  j["ap"] = r.ap;
  j["far"] = r.far;
  j["videos"] = r.videos;
  j["frames"] = r.frames;
  j["positive_frames"] = r.positive_frames;
  j["per_class"] = nlohmann::ordered_json::object();
  for (const auto& [k, m] : r.per_class) j["per_class"][k] = metrics_json(m);
  j["per_video"] = nlohmann::ordered_json::object();
  for (const auto& [k, m] : r.per_video) j["per_video"][k] = metrics_json(m);
  return j.dump(2) + "\n";
}

std::string report_csv(const MetricReport& r) {
  std::ostringstream os;
  os << "kind,name,videos,frames,positive_frames,auc,ap,far\n";
  os << "global,all," << r.videos << ',' << r.frames << ',' << r.positive_frames << ',' << opt(r.auc) << ','
     << opt(r.ap) << ',' << opt(r.far) << '\n';
  for (const auto& [k, m] : r.per_class)
    os << "class," << k << ',' << m.videos << ',' << m.frames << ',' << m.positive_frames << ',' << opt(m.auc)
       << ',' << opt(m.ap) << ',' << opt(m.far) << '\n';
  for (const auto& [k, m] : r.per_video)
    os << "video," << k << ',' << m.videos << ',' << m.frames << ',' << m.positive_frames << ',' << opt(m.auc)
       << ',' << opt(m.ap) << ',' << opt(m.far) << '\n';
  return os.str();
}

}  // namespace tcape::eval
