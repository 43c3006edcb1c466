#include "tcape/complexity.hpp"

#include <cstdio>

#include "json.hpp"
#include "tcape/error.hpp"

namespace tcape {

double ComplexityReport::flops(const std::string& component) const {
  double s = 0.0;
  for (const auto& t : terms)
    if (t.component == component) s += t.flops;
  return s;
}

double ComplexityReport::flops(const std::string& component, const std::string& part) const {
  double s = 0.0;
  for (const auto& t : terms)
    if (t.component == component && t.part == part) s += t.flops;
  return s;
}

ComplexityReport report_complexity(const ModelConfig& cfg, std::size_t input_dim, std::size_t length) {
  if (input_dim == 0 || length == 0) throw Error("complexity: input width and length must be positive");
  ComplexityReport r;
  r.input_dim = input_dim;
  r.length = length;

  CounterRng rng(0);
  const ModelParams p = init_model(input_dim, cfg, rng);
  if (p.tca)
    for (const auto* q : std::as_const(*p.tca).list()) r.tca_params += q->value.size();
  for (const auto* q : {&p.head.conv1_w, &p.head.conv1_b, &p.head.conv2_w, &p.head.conv2_b})
    r.mlp_params += q->value.size();
  r.classifier_params = p.head.cls_w.value.size() + p.head.cls_b.value.size();

  const double t = static_cast<double>(length), d = static_cast<double>(input_dim);
  auto add = [&](const char* c, const char* part, double f) { r.terms.push_back({c, part, f}); };

  if (cfg.use_tca) {
    const double dh = static_cast<double>(cfg.tca.hidden_dim), dv = static_cast<double>(cfg.tca.value_dim);
    add("tca", "linear", 2.0 * t * d * (2.0 * dh + dv) + 2.0 * t * dv * d);
    // Similarity is shared; each branch multiplies its attention by V.
    add("tca", "attention", 2.0 * t * t * dh + 2.0 * (2.0 * t * t * dv));
    double elementwise = 0.0;
    if (cfg.tca.dpe) elementwise += 5.0 * t * t + t * t;  // position encoding, then added to M
    elementwise += 2.0 * (t * t + 4.0 * t * t);             // per branch: scale, then max/exp/sum/divide
    elementwise += 3.0 * t * dv;                            // α-blend
    switch (cfg.tca.norm) {
      case tca::Norm::none: break;
      case tca::Norm::power: elementwise += 2.0 * t * dv; break;
      case tca::Norm::l2: elementwise += 3.0 * t * dv; break;
      case tca::Norm::power_l2: elementwise += 5.0 * t * dv; break;
    }
    elementwise += t * d + 8.0 * t * d;  // residual and layer norm
    add("tca", "elementwise", elementwise);
  }
  const double e = static_cast<double>(cfg.head.embed_dim), rd = static_cast<double>(cfg.head.reduced_dim);
  add("mlp", "linear", 2.0 * t * d * e + 2.0 * t * e * rd);
  add("mlp", "elementwise", 8.0 * t * (e + rd));  // bias and GELU
  add("classifier", "linear", 2.0 * t * static_cast<double>(cfg.head.kernel) * rd);
  add("classifier", "elementwise", 5.0 * t);
  return r;
}

std::string ComplexityReport::to_text() const {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "input width %zu, %zu snippets\n", input_dim, length);
  out += buf;
  auto line = [&](const char* name, std::size_t params, double f) {
    std::snprintf(buf, sizeof buf, "%-20s %12zu params (%6.3fM) %14.0f FLOPs (%8.2fM)\n", name, params,
                  static_cast<double>(params) / 1e6, f, f / 1e6);
    out += buf;
  };
  line("tca", tca_params, flops("tca"));
  line("  attention (T^2)", 0, flops("tca", "attention"));
  line("mlp", mlp_params, flops("mlp"));
  line("classifier", classifier_params, flops("classifier"));
  line("tca + mlp", tca_params + mlp_params, flops("tca") + flops("mlp"));
  line("total", total_params(), flops("tca") + flops("mlp") + flops("classifier"));
  return out;
}

std::string ComplexityReport::to_json() const {
  nlohmann::ordered_json j;
  j["input_dim"] = input_dim;
  j["length"] = length;
  j["params"] = {{"tca", tca_params}, {"mlp", mlp_params}, {"classifier", classifier_params},
                 {"total", total_params()}};
  auto terms_json = nlohmann::ordered_json::array();
  for (const auto& t : terms) terms_json.push_back({{"component", t.component}, {"part", t.part}, {"flops", t.flops}});
  j["flops"] = terms_json;
  return j.dump(2);
}

}  // namespace tcape
