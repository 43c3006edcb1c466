#include "tcape/graph.hpp"

#include "tcape/error.hpp"

namespace tcape {

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Graph::parameter(const Parameter& p) {
  if (auto it = params_.find(&p); it != params_.end()) return Var{this, it->second};
  Node n;
  n.op = "parameter";
  n.value = p.value;
  n.needs_grad = recording();
  nodes_.push_back(std::move(n));
  params_.emplace(&p, nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

Var Graph::record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  if (!value.all_finite()) {
    throw Error(std::string("non-finite value produced by ") + op + " " + value.shape_string());
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  if (recording()) {
    n.inputs.reserve(inputs.size());
    for (const auto& v : inputs) {
      if (v.graph != this) throw Error(std::string(op) + ": input from a different graph");
      n.inputs.push_back(v.id);
      n.needs_grad = n.needs_grad || nodes_[v.id].needs_grad;
    }
    if (n.needs_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Tensor& Graph::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.dims(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw Error("backward: loss belongs to a different graph");
  if (!recording()) throw Error("backward: graph was built in inference mode");
  if (backward_done_) throw Error("backward: already run on this graph");
  const Tensor& lv = nodes_[loss.id].value;
  if (lv.size() != 1) throw ShapeError("backward: loss must be scalar, got " + lv.shape_string());
  grad(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, i);
  }
  backward_done_ = true;
}

Tensor Graph::grad_of(const Parameter& p) const {
  auto it = params_.find(&p);
  if (it == params_.end() || !nodes_[it->second].has_grad) return Tensor(p.value.dims(), 0.0);
  return nodes_[it->second].grad;
}

}  // namespace tcape
