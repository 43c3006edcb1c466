#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tcape/graph.hpp"
#include "tcape/rng.hpp"
#include "tcape/tensor.hpp"

namespace tcape::testing {

inline Tensor random_tensor(Tensor::Shape dims, CounterRng& rng, double scale = 1.0) {
  Tensor t(std::move(dims));
  for (double& v : t.storage()) v = scale * rng.normal();
  return t;
}

struct GradReport {
  double worst_rel = 0.0;
  std::string worst_where;
  std::size_t checked = 0;
};

/// Compares analytic parameter gradients of `loss` against central finite
/// differences. `loss` builds a fresh scalar on the given graph.
inline GradReport check_gradients(const std::function<Var(Graph&)>& loss, const std::vector<Parameter*>& params,
                                  double h = 1e-4, double floor = 1e-6) {
  Graph g;
  const Var l = loss(g);
  g.backward(l);
  std::vector<Tensor> analytic;
  for (auto* p : params) analytic.push_back(g.grad_of(*p));

  auto eval = [&] {
    Graph ge(Graph::Mode::inference);
    return loss(ge).value()[0];
  };
  GradReport r;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& data = params[k]->value.storage();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + h;
      const double up = eval();
      data[i] = orig - h;
      const double down = eval();
      data[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), floor});
      ++r.checked;
      if (rel > r.worst_rel) {
        r.worst_rel = rel;
        r.worst_where = params[k]->name + "[" + std::to_string(i) + "] analytic " + std::to_string(a) +
                        " numeric " + std::to_string(numeric);
      }
    }
  }
  return r;
}

}  // namespace tcape::testing
