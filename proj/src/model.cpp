#include "tcape/model.hpp"

#include "tcape/error.hpp"
#include "tcape/ops.hpp"

namespace tcape {

std::vector<Parameter*> ModelParams::list() {
  std::vector<Parameter*> out;
  if (tca) out = tca->list();
  for (auto* p : head.list()) out.push_back(p);
  return out;
}

std::vector<const Parameter*> ModelParams::list() const {
  std::vector<const Parameter*> out;
  if (tca) out = std::as_const(*tca).list();
  for (auto* p : head.list()) out.push_back(p);
  return out;
}

ModelParams init_model(std::size_t input_dim, const ModelConfig& cfg, CounterRng& rng) {
  ModelParams p;
  CounterRng tca_rng = rng.fork(1);
  CounterRng head_rng = rng.fork(2);
  if (cfg.use_tca) p.tca = tca::init_params(input_dim, cfg.tca, tca_rng);
  p.head = head::init_params(input_dim, cfg.head, head_rng);
  return p;
}

ModelOutput forward(Graph& g, Var x, const ModelParams& p, const ModelConfig& cfg, bool training,
                    CounterRng& rng) {
  if (x.value().rank() != 2 || x.value().cols() != p.input_dim()) {
    throw ShapeError("model: features " + x.value().shape_string() + " do not match model input width " +
                     std::to_string(p.input_dim()));
  }
  if (cfg.use_tca != p.tca.has_value()) throw Error("model: configuration and parameters disagree on TCA");
  Var xc = cfg.use_tca ? tca::forward(g, x, *p.tca, cfg.tca) : x;
  const auto mlp = head::mlp_forward(g, xc, p.head, cfg.head, training, rng);
  return {head::score(g, mlp.reduced, p.head), mlp.embed};
}

ModelOutput forward_crops(Graph& g, const std::vector<Tensor>& crops, const ModelParams& p,
                          const ModelConfig& cfg, bool training, CounterRng& rng) {
  if (crops.empty()) throw Error("model: no crops");
  ModelOutput acc = forward(g, g.constant(crops.front()), p, cfg, training, rng);
  for (std::size_t c = 1; c < crops.size(); ++c) {
    const ModelOutput o = forward(g, g.constant(crops[c]), p, cfg, training, rng);
    acc.scores = ops::add(acc.scores, o.scores);
    acc.embed = ops::add(acc.embed, o.embed);
  }
  if (crops.size() > 1) {
    const double inv = 1.0 / static_cast<double>(crops.size());
    acc.scores = ops::scale(acc.scores, inv);
    acc.embed = ops::scale(acc.embed, inv);
  }
  return acc;
}

std::vector<double> score_snippets(const Tensor& x, const ModelParams& p, const ModelConfig& cfg) {
  Graph g(Graph::Mode::inference);
  CounterRng unused;
  return forward(g, g.constant(x), p, cfg, false, unused).scores.value().storage();
}

std::vector<double> score_snippets(const std::vector<Tensor>& crops, const ModelParams& p, const ModelConfig& cfg) {
  Graph g(Graph::Mode::inference);
  CounterRng unused;
  return forward_crops(g, crops, p, cfg, false, unused).scores.value().storage();
}

}  // namespace tcape
