#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tcape/model.hpp"

namespace tcape {

/// FLOPs count a multiply-add as two operations.
struct ComplexityTerm {
  std::string component;
  std::string part;
  double flops = 0.0;
};

struct ComplexityReport {
  std::size_t input_dim = 0;
  std::size_t length = 0;
  std::size_t tca_params = 0;
  std::size_t mlp_params = 0;         // the two pointwise layers
  std::size_t classifier_params = 0;  // causal convolution
  std::vector<ComplexityTerm> terms;

  double flops(const std::string& component) const;
  double flops(const std::string& component, const std::string& part) const;
  std::size_t total_params() const { return tca_params + mlp_params + classifier_params; }

  std::string to_text() const;
  std::string to_json() const;
};

/// Counts parameters by enumerating an instantiated model and FLOPs for one
/// forward pass over `length` snippets.
ComplexityReport report_complexity(const ModelConfig& cfg, std::size_t input_dim, std::size_t length);

}  // namespace tcape
