#include "tcape/tca.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tcape/error.hpp"
#include "tcape/ops.hpp"

namespace tcape::tca {
namespace {

constexpr double kDpeFloor = std::numeric_limits<double>::min();

Parameter uniform_param(std::string name, Tensor::Shape dims, std::size_t fan_in, CounterRng& rng) {
  Tensor t(std::move(dims));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.storage()) v = rng.uniform(-bound, bound);
  return {std::move(name), std::move(t)};
}

Parameter filled(std::string name, Tensor::Shape dims, double v) {
  return {std::move(name), Tensor(std::move(dims), v)};
}

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

}  // namespace

std::vector<Parameter*> TcaParams::list() {
  return {&wq, &bq, &wk, &bk, &wv, &bv, &wh, &bh, &alpha, &gamma, &beta, &ln_gain, &ln_shift};
}

std::vector<const Parameter*> TcaParams::list() const {
  return {&wq, &bq, &wk, &bk, &wv, &bv, &wh, &bh, &alpha, &gamma, &beta, &ln_gain, &ln_shift};
}

TcaParams init_params(std::size_t d, const TcaConfig& cfg, CounterRng& rng) {
  if (cfg.hidden_dim == 0 || cfg.value_dim == 0) throw Error("tca: hidden and value widths must be positive");
  const std::size_t dh = cfg.hidden_dim, dv = cfg.value_dim;
  TcaParams p;
  p.wq = uniform_param("tca.wq", {d, dh}, d, rng);
  p.bq = filled("tca.bq", {dh}, 0.0);
  p.wk = uniform_param("tca.wk", {d, dh}, d, rng);
  p.bk = filled("tca.bk", {dh}, 0.0);
  p.wv = uniform_param("tca.wv", {d, dv}, d, rng);
  p.bv = filled("tca.bv", {dv}, 0.0);
  p.wh = uniform_param("tca.wh", {dv, d}, dv, rng);
  p.bh = filled("tca.bh", {d}, 0.0);
  p.alpha = filled("tca.alpha", {1}, 0.5);
  p.gamma = filled("tca.gamma", {1}, 0.1);
  p.beta = filled("tca.beta", {1}, 0.1);
  p.ln_gain = filled("tca.ln_gain", {d}, 1.0);
  p.ln_shift = filled("tca.ln_shift", {d}, 0.0);
  return p;
}

Tensor dpe_matrix(std::size_t length, double gamma, double beta) {
  Tensor g({length, length});
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = 0; j < length; ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      // Far pairs would underflow to zero; keep them strictly positive.
      g(i, j) = std::max(std::exp(-std::fabs(gamma * d * d + beta)), kDpeFloor);
    }
  }
  return g;
}

Var dpe(Graph& g, std::size_t length, Var gamma, Var beta) {
  Tensor out = dpe_matrix(length, gamma.value()[0], beta.value()[0]);
  const auto ig = gamma.id, ib = beta.id;
  return g.record("dpe", std::move(out), {gamma, beta}, [ig, ib, length](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    const Tensor& y = g.value(self);
    const double gam = g.value(ig)[0], bet = g.value(ib)[0];
    double dgam = 0.0, dbet = 0.0;
    for (std::size_t i = 0; i < length; ++i) {
      for (std::size_t j = 0; j < length; ++j) {
        const double d2 = (static_cast<double>(i) - static_cast<double>(j)) *
                          (static_cast<double>(i) - static_cast<double>(j));
        if (y(i, j) == kDpeFloor) continue;
        const double common = -gy(i, j) * y(i, j) * sign(gam * d2 + bet);
        dgam += common * d2;
        dbet += common;
      }
    }
    if (g.needs_grad(ig)) g.grad(ig)[0] += dgam;
    if (g.needs_grad(ib)) g.grad(ib)[0] += dbet;
  });
}

Var similarity(Graph& g, Var x, const TcaParams& p, const TcaConfig& cfg) {
  if (x.value().rank() != 2 || x.value().cols() != p.input_dim()) {
    throw ShapeError("tca: input " + x.value().shape_string() + " does not match feature width " +
                     std::to_string(p.input_dim()));
  }
  const Var q = ops::linear(x, g.parameter(p.wq), g.parameter(p.bq));
  const Var k = ops::linear(x, g.parameter(p.wk), g.parameter(p.bk));
  Var m = ops::matmul_bt(q, k);
  if (cfg.dpe) m = ops::add(m, dpe(g, x.value().rows(), g.parameter(p.gamma), g.parameter(p.beta)));
  return m;
}

std::vector<unsigned char> window_mask(std::size_t length, std::size_t window) {
  if (window == 0) throw Error("tca: window must be at least 1");
  const std::size_t half = window / 2;
  std::vector<unsigned char> mask(length * length, 0);
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(i + half, length - 1);
    for (std::size_t j = lo; j <= hi; ++j) mask[i * length + j] = 1;
  }
  return mask;
}

Var global_branch(Var m, Var values, std::size_t hidden_dim, Tensor* attention) {
  const Var a = ops::softmax_rows(ops::scale(m, 1.0 / std::sqrt(static_cast<double>(hidden_dim))));
  if (attention) *attention = a.value();
  return ops::matmul(a, values);
}

Var local_branch(Var m, Var values, std::size_t hidden_dim, std::size_t window, Tensor* attention) {
  const auto mask = window_mask(m.value().rows(), window);
  const Var a = ops::softmax_rows(ops::scale(m, 1.0 / std::sqrt(static_cast<double>(hidden_dim))), &mask);
  if (attention) *attention = a.value();
  return ops::matmul(a, values);
}

Var normalize(Var x, Norm norm) {
  switch (norm) {
    case Norm::none: return x;
    case Norm::power: return ops::unary(x, ops::Unary::sqrt_signed);
    case Norm::l2: return ops::l2_normalize_rows(x);
    case Norm::power_l2: return ops::l2_normalize_rows(ops::unary(x, ops::Unary::sqrt_signed));
  }
  return x;
}

Var fuse(Graph& g, Var xg, Var xl, Var x, const TcaParams& p, const TcaConfig& cfg) {
  if (!xg.value().same_shape(xl.value())) {
    throw ShapeError("tca fuse: branch shapes differ " + xg.value().shape_string() + " vs " +
                     xl.value().shape_string());
  }
  Var fused;
  if (cfg.fixed_alpha) {
    const double a = *cfg.fixed_alpha;
    fused = ops::add(ops::scale(xg, a), ops::scale(xl, 1.0 - a));
  } else {
    fused = ops::add(xl, ops::scale_by(ops::sub(xg, xl), g.parameter(p.alpha)));
  }
  const Var h = ops::linear(normalize(fused, cfg.norm), g.parameter(p.wh), g.parameter(p.bh));
  return ops::layer_norm(ops::add(x, h), g.parameter(p.ln_gain), g.parameter(p.ln_shift), cfg.ln_eps);
}

Var forward(Graph& g, Var x, const TcaParams& p, const TcaConfig& cfg, TcaTrace* trace) {
  const Var m = similarity(g, x, p, cfg);
  const Var v = ops::linear(x, g.parameter(p.wv), g.parameter(p.bv));
  const Var xg = global_branch(m, v, cfg.hidden_dim, trace ? &trace->global_attention : nullptr);
  const Var xl = local_branch(m, v, cfg.hidden_dim, cfg.window, trace ? &trace->local_attention : nullptr);
  if (trace) {
    trace->similarity = m.value();
    trace->global_out = xg.value();
    trace->local_out = xl.value();
  }
  return fuse(g, xg, xl, x, p, cfg);
}

Tensor similarity(const Tensor& x, const TcaParams& p, const TcaConfig& cfg) {
  Graph g(Graph::Mode::inference);
  return similarity(g, g.constant(x), p, cfg).value();
}

Tensor forward(const Tensor& x, const TcaParams& p, const TcaConfig& cfg, TcaTrace* trace) {
  Graph g(Graph::Mode::inference);
  return forward(g, g.constant(x), p, cfg, trace).value();
}

}  // namespace tcape::tca
