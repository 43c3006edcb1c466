#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tcape/graph.hpp"

namespace tcape {

/// Cosine decay from `base` at step 0 to 0 at `total_steps`.
double cosine_lr(double base, std::uint64_t step, std::uint64_t total_steps);

/// Adam with a cosine learning-rate schedule. Defaults are the standard
/// Adam constants.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double base_lr = 5e-4;
  std::uint64_t total_steps = 1;
  std::uint64_t step = 0;  // updates applied so far
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  double current_lr() const { return cosine_lr(base_lr, step, total_steps); }
};

/// Applies one update in place. Moments are created on first use.
void adam_step(AdamState& state, std::span<Parameter* const> params,
               std::span<const Tensor> grads);

}  // namespace tcape
