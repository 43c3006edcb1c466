#include "tcape/optim.hpp"

#include <cmath>
#include <numbers>

#include "tcape/error.hpp"

namespace tcape {

double cosine_lr(double base, std::uint64_t step, std::uint64_t total_steps) {
  if (total_steps == 0 || step >= total_steps) return 0.0;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void adam_step(AdamState& state, std::span<Parameter* const> params,
               std::span<const Tensor> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (state.m.empty()) {
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.dims(), 0.0);
      state.v.emplace_back(p->value.dims(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                     " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->value.same_shape(grads[i]) || !state.m[i].same_shape(grads[i])) {
      throw ShapeError("adam_step: parameter " + params[i]->name + " " +
                       params[i]->value.shape_string() + " vs gradient " +
                       grads[i].shape_string());
    }
  }

  const double lr = state.current_lr();
  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i]->value.data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
  ++state.step;
}

}  // namespace tcape
