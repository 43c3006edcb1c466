#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tcape/tensor.hpp"

namespace tcape {

/// A named trainable tensor. Graphs reference parameters by address, so a
/// Parameter must outlive every Graph that binds it.
struct Parameter {
  std::string name;
  Tensor value;
};

class Graph;

/// Handle to a node in a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Tensor::Shape& dims() const { return value().dims(); }
};

/// Eagerly evaluated reverse-mode tape. Each op appends a node holding its
/// forward value and a closure that pushes the node's gradient to its inputs.
/// Nodes are never mutated after creation.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  enum class Mode { train, inference };

  explicit Graph(Mode mode = Mode::train) : mode_(mode) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return mode_ == Mode::train; }

  Var constant(Tensor value);
  /// Leaf bound to `p`. Repeated calls for the same parameter return the same node.
  Var parameter(const Parameter& p);

  /// Appends an op node. `fn` runs during backward only if some input needs a gradient.
  Var record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn fn);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

  /// Gradient slot of node `id`, zero-initialised on first access.
  Tensor& grad(std::size_t id);
  const Tensor& upstream(std::size_t self) { return grad(self); }

  /// Reverse sweep from a scalar node.
  void backward(Var loss);

  /// Gradient w.r.t. a parameter after backward(); zeros if unreachable.
  Tensor grad_of(const Parameter& p) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool needs_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  Mode mode_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> params_;
  bool backward_done_ = false;
};

}  // namespace tcape
