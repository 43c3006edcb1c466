#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "tcape/graph.hpp"
#include "tcape/rng.hpp"

namespace tcape::tca {

enum class Norm { none, power, l2, power_l2 };

struct TcaConfig {
  std::size_t hidden_dim = 128;  // D_h, width of the query/key projections
  std::size_t value_dim = 128;   // D_v, width of f_v (f_h maps back to D)
  std::size_t window = 9;        // local window w, in snippets
  Norm norm = Norm::power_l2;
  bool dpe = true;
  /// When set, α is this constant instead of the learnable parameter.
  std::optional<double> fixed_alpha;
  double ln_eps = 1e-5;
};

struct TcaParams {
  Parameter wq, bq, wk, bk, wv, bv, wh, bh;
  Parameter alpha, gamma, beta;
  Parameter ln_gain, ln_shift;

  std::vector<Parameter*> list();
  std::vector<const Parameter*> list() const;
  std::size_t input_dim() const { return wq.value.dims()[0]; }
};

/// Linear weights uniform in ±1/√fan_in, biases zero, α = 0.5, γ = β = 0.1.
TcaParams init_params(std::size_t input_dim, const TcaConfig& cfg, CounterRng& rng);

/// Intermediate attention maps, captured for inspection.
struct TcaTrace {
  Tensor similarity;
  Tensor global_attention;
  Tensor local_attention;
  Tensor global_out;
  Tensor local_out;
};

/// T×T matrix G_ij = exp(−|γ(i−j)² + β|) as a graph node.
Var dpe(Graph& g, std::size_t length, Var gamma, Var beta);
Tensor dpe_matrix(std::size_t length, double gamma, double beta);

/// M = f_q(x)·f_k(x)ᵀ, plus G when DPE is enabled.
Var similarity(Graph& g, Var x, const TcaParams& p, const TcaConfig& cfg);

/// Row mask (1 = visible) for the local window around each snippet.
std::vector<unsigned char> window_mask(std::size_t length, std::size_t window);

/// softmax(M/√D_h)·values; `attention` receives the map when non-null.
Var global_branch(Var m, Var values, std::size_t hidden_dim, Tensor* attention = nullptr);
/// Same as global_branch with entries outside the window masked to −∞.
Var local_branch(Var m, Var values, std::size_t hidden_dim, std::size_t window,
                 Tensor* attention = nullptr);

/// Norm applied to the fused features before f_h.
Var normalize(Var x, Norm norm);

/// X^c = LN(x + f_h(Norm(α·X^g + (1−α)·X^l))).
Var fuse(Graph& g, Var xg, Var xl, Var x, const TcaParams& p, const TcaConfig& cfg);

Var forward(Graph& g, Var x, const TcaParams& p, const TcaConfig& cfg, TcaTrace* trace = nullptr);

/// Graph-free helpers for inspection and tests.
Tensor similarity(const Tensor& x, const TcaParams& p, const TcaConfig& cfg);
Tensor forward(const Tensor& x, const TcaParams& p, const TcaConfig& cfg, TcaTrace* trace = nullptr);

}  // namespace tcape::tca
