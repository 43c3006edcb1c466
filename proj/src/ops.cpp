#include "tcape/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "tcape/error.hpp"

namespace tcape::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

MapC view(const Tensor& t) {
  return MapC(t.data().data(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}
Map view(Tensor& t) {
  return Map(t.data().data(), static_cast<Eigen::Index>(t.rows()),
             static_cast<Eigen::Index>(t.cols()));
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + t.shape_string());
  }
}

void accumulate(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ: " + a.shape_string() + " · " +
                     b.shape_string());
  }
  Tensor out({a.rows(), b.cols()});
  view(out).noalias() = view(a) * view(b);
  return out;
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_bt: inner dimensions differ: " + a.shape_string() + " · " +
                     b.shape_string() + "ᵀ");
  }
  Tensor out({a.rows(), b.rows()});
  view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

Var matmul(Var a, Var b) {
  Graph& g = *a.graph;
  Tensor out = matmul(a.value(), b.value());
  const auto ia = a.id, ib = b.id;
  return g.record("matmul", std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (g.needs_grad(ia)) view(g.grad(ia)).noalias() += view(gy) * view(g.value(ib)).transpose();
    if (g.needs_grad(ib)) view(g.grad(ib)).noalias() += view(g.value(ia)).transpose() * view(gy);
  });
}

Var matmul_bt(Var a, Var b) {
  Graph& g = *a.graph;
  Tensor out = matmul_bt(a.value(), b.value());
  const auto ia = a.id, ib = b.id;
  return g.record("matmul_bt", std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (g.needs_grad(ia)) view(g.grad(ia)).noalias() += view(gy) * view(g.value(ib));
    if (g.needs_grad(ib)) view(g.grad(ib)).noalias() += view(gy).transpose() * view(g.value(ia));
  });
}

Var add(Var a, Var b) {
  require_same("add", a.value(), b.value());
  Tensor out = a.value();
  accumulate(out, b.value());
  const auto ia = a.id, ib = b.id;
  return a.graph->record("add", std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (g.needs_grad(ia)) accumulate(g.grad(ia), gy);
    if (g.needs_grad(ib)) accumulate(g.grad(ib), gy);
  });
}

Var sub(Var a, Var b) {
  require_same("sub", a.value(), b.value());
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  const auto ia = a.id, ib = b.id;
  return a.graph->record("sub", std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (g.needs_grad(ia)) accumulate(g.grad(ia), gy);
    if (g.needs_grad(ib)) {
      auto d = g.grad(ib).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= gy[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same("mul", a.value(), b.value());
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  const auto ia = a.id, ib = b.id;
  return a.graph->record("mul", std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (g.needs_grad(ia)) {
      auto d = g.grad(ia).data();
      const auto& bv = g.value(ib);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gy[i] * bv[i];
    }
    if (g.needs_grad(ib)) {
      auto d = g.grad(ib).data();
      const auto& av = g.value(ia);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gy[i] * av[i];
    }
  });
}

Var add_row(Var x, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.size() != xv.cols()) {
    throw ShapeError("add_row: bias " + bv.shape_string() + " does not match columns of " +
                     xv.shape_string());
  }
  Tensor out = xv;
  const std::size_t r = xv.rows(), c = xv.cols();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) += bv[j];
  const auto ix = x.id, ib = bias.id;
  return x.graph->record("add_row", std::move(out), {x, bias},
                         [ix, ib, r, c](Graph& g, std::size_t self) {
                           const Tensor& gy = g.grad(self);
                           if (g.needs_grad(ix)) accumulate(g.grad(ix), gy);
                           if (g.needs_grad(ib)) {
                             Tensor& gb = g.grad(ib);
                             for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < c; ++j) gb[j] += gy(i, j);
                           }
                         });
}

Var scale(Var x, double c) {
  Tensor out = x.value();
  for (double& v : out.storage()) v *= c;
  const auto ix = x.id;
  return x.graph->record("scale", std::move(out), {x}, [ix, c](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    auto d = g.grad(ix).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += c * gy[i];
  });
}

Var add_scalar(Var x, double c) {
  Tensor out = x.value();
  for (double& v : out.storage()) v += c;
  const auto ix = x.id;
  return x.graph->record("add_scalar", std::move(out), {x}, [ix](Graph& g, std::size_t self) {
    accumulate(g.grad(ix), g.grad(self));
  });
}

Var scale_by(Var x, Var s) {
  if (s.value().size() != 1) {
    throw ShapeError("scale_by: factor must be scalar, got " + s.value().shape_string());
  }
  const double sv = s.value()[0];
  Tensor out = x.value();
  for (double& v : out.storage()) v *= sv;
  const auto ix = x.id, is = s.id;
  return x.graph->record("scale_by", std::move(out), {x, s}, [ix, is](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    const Tensor& xv = g.value(ix);
    if (g.needs_grad(ix)) {
      const double sv = g.value(is)[0];
      auto d = g.grad(ix).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += sv * gy[i];
    }
    if (g.needs_grad(is)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < xv.size(); ++i) acc += gy[i] * xv[i];
      g.grad(is)[0] += acc;
    }
  });
}

constexpr double kInvSqrt2 = 1.0 / std::numbers::sqrt2;

double apply_unary(Unary kind, double v) {
  switch (kind) {
    case Unary::gelu:
      return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    case Unary::sigmoid:
      return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    case Unary::exp:
      return std::exp(v);
    case Unary::abs:
      return std::fabs(v);
    case Unary::sqrt_signed:
      return v < 0 ? -std::sqrt(-v) : std::sqrt(v);
    case Unary::log:
      return std::log(v);
  }
  return v;
}

// Derivative at input v with forward output y.
double unary_derivative(Unary kind, double v, double y) {
  switch (kind) {
    case Unary::gelu: {
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi * kInvSqrt2;
      return cdf + v * pdf;
    }
    case Unary::sigmoid:
      return y * (1.0 - y);
    case Unary::exp:
      return y;
    case Unary::abs:
      return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
    case Unary::sqrt_signed:
      // Unbounded at 0; the subgradient 0 keeps the tape finite.
      return v == 0.0 ? 0.0 : 0.5 / std::sqrt(std::fabs(v));
    case Unary::log:
      return 1.0 / v;
  }
  return 0.0;
}

Var unary(Var x, Unary kind) {
  Tensor out = x.value();
  for (double& v : out.storage()) v = apply_unary(kind, v);
  const auto ix = x.id;
  static constexpr const char* names[] = {"gelu", "sigmoid", "exp", "abs", "sqrt_signed", "log"};
  return x.graph->record(names[static_cast<int>(kind)], std::move(out), {x},
                         [ix, kind](Graph& g, std::size_t self) {
                           const Tensor& gy = g.grad(self);
                           const Tensor& xv = g.value(ix);
                           const Tensor& yv = g.value(self);
                           auto d = g.grad(ix).data();
                           for (std::size_t i = 0; i < d.size(); ++i)
                             d[i] += gy[i] * unary_derivative(kind, xv[i], yv[i]);
                         });
}

Var linear(Var x, Var weight, Var bias) { return add_row(matmul(x, weight), bias); }

Var softmax_rows(Var x, const std::vector<unsigned char>* mask) {
  const Tensor& xv = x.value();
  require_matrix("softmax_rows", xv);
  if (mask && mask->size() != xv.size()) {
    throw ShapeError("softmax_rows: mask size " + std::to_string(mask->size()) +
                     " does not match " + xv.shape_string());
  }
  const std::size_t r = xv.rows(), c = xv.cols();
  Tensor out({r, c}, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    auto live = [&](std::size_t j) {
      return (!mask || (*mask)[i * c + j]) && xv(i, j) != -std::numeric_limits<double>::infinity();
    };
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (live(j)) mx = std::max(mx, xv(i, j));
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw Error("softmax_rows: fully masked row " + std::to_string(i));
    }
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (!live(j)) continue;
      out(i, j) = std::exp(xv(i, j) - mx);
      z += out(i, j);
    }
    for (std::size_t j = 0; j < c; ++j) out(i, j) /= z;
  }
  const auto ix = x.id;
  return x.graph->record("softmax_rows", std::move(out), {x}, [ix, r, c](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    const Tensor& y = g.value(self);
    Tensor& gx = g.grad(ix);
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += gy(i, j) * y(i, j);
      for (std::size_t j = 0; j < c; ++j) gx(i, j) += y(i, j) * (gy(i, j) - dot);
    }
  });
}

Var log_softmax_rows(Var x) {
  const Tensor& xv = x.value();
  require_matrix("log_softmax_rows", xv);
  const std::size_t r = xv.rows(), c = xv.cols();
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, xv(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(xv(i, j) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out(i, j) = xv(i, j) - lse;
  }
  const auto ix = x.id;
  return x.graph->record("log_softmax_rows", std::move(out), {x},
                         [ix, r, c](Graph& g, std::size_t self) {
                           const Tensor& gy = g.grad(self);
                           const Tensor& y = g.value(self);
                           Tensor& gx = g.grad(ix);
                           for (std::size_t i = 0; i < r; ++i) {
                             double s = 0.0;
                             for (std::size_t j = 0; j < c; ++j) s += gy(i, j);
                             for (std::size_t j = 0; j < c; ++j)
                               gx(i, j) += gy(i, j) - std::exp(y(i, j)) * s;
                           }
                         });
}

Var conv1d(Var x, Var kernel, Var bias, Padding padding) {
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  require_matrix("conv1d", xv);
  if (kv.rank() != 3 || kv.dims()[1] != xv.cols()) {
    throw ShapeError("conv1d: kernel " + kv.shape_string() + " incompatible with input " +
                     xv.shape_string());
  }
  const std::size_t T = xv.rows(), cin = xv.cols();
  const std::size_t K = kv.dims()[0], cout = kv.dims()[2];
  if (bias.value().size() != cout) {
    throw ShapeError("conv1d: bias " + bias.value().shape_string() + " expected [" +
                     std::to_string(cout) + "]");
  }
  if (K == 0) throw ShapeError("conv1d: empty kernel");
  std::size_t left = 0;
  std::size_t out_len = T;
  switch (padding) {
    case Padding::same: left = (K - 1) / 2; break;
    case Padding::causal: left = K - 1; break;
    case Padding::valid:
      if (K > T) {
        throw ShapeError("conv1d: kernel width " + std::to_string(K) +
                         " exceeds sequence length " + std::to_string(T) + " without padding");
      }
      out_len = T - K + 1;
      break;
  }
  // Output row t, tap k reads input row t + k − left when it is in range.
  auto range = [left, T, out_len](std::size_t k, std::size_t& t0, std::size_t& t1) {
    const long lo = static_cast<long>(left) - static_cast<long>(k);
    const long start = std::max<long>(0, lo);
    const long end = std::min<long>(static_cast<long>(out_len), static_cast<long>(T) + lo);
    t0 = static_cast<std::size_t>(start);
    t1 = static_cast<std::size_t>(std::max(start, end));
  };
  Tensor out({out_len, cout});
  auto ov = view(out);
  for (std::size_t t = 0; t < out_len; ++t)
    for (std::size_t o = 0; o < cout; ++o) out(t, o) = bias.value()[o];
  const auto xm = view(xv);
  for (std::size_t k = 0; k < K; ++k) {
    std::size_t t0, t1;
    range(k, t0, t1);
    if (t0 >= t1) continue;
    const MapC wk(kv.data().data() + k * cin * cout, static_cast<Eigen::Index>(cin),
                  static_cast<Eigen::Index>(cout));
    const auto n = static_cast<Eigen::Index>(t1 - t0);
    const auto src = static_cast<Eigen::Index>(t0 + k - left);
    ov.middleRows(static_cast<Eigen::Index>(t0), n).noalias() += xm.middleRows(src, n) * wk;
  }
  const auto ix = x.id, ik = kernel.id, ib = bias.id;
  return x.graph->record(
      "conv1d", std::move(out), {x, kernel, bias},
      [=](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        const auto gym = view(gy);
        const Tensor& xv = g.value(ix);
        const Tensor& kv = g.value(ik);
        const auto xm = view(xv);
        for (std::size_t k = 0; k < K; ++k) {
          std::size_t t0, t1;
          range(k, t0, t1);
          if (t0 >= t1) continue;
          const auto n = static_cast<Eigen::Index>(t1 - t0);
          const auto src = static_cast<Eigen::Index>(t0 + k - left);
          const auto dst = static_cast<Eigen::Index>(t0);
          if (g.needs_grad(ix)) {
            const MapC wk(kv.data().data() + k * cin * cout, static_cast<Eigen::Index>(cin),
                          static_cast<Eigen::Index>(cout));
            view(g.grad(ix)).middleRows(src, n).noalias() += gym.middleRows(dst, n) * wk.transpose();
          }
          if (g.needs_grad(ik)) {
            Map gk(g.grad(ik).data().data() + k * cin * cout, static_cast<Eigen::Index>(cin),
                   static_cast<Eigen::Index>(cout));
            gk.noalias() += xm.middleRows(src, n).transpose() * gym.middleRows(dst, n);
          }
        }
        if (g.needs_grad(ib)) {
          Tensor& gb = g.grad(ib);
          for (std::size_t t = 0; t < out_len; ++t)
            for (std::size_t o = 0; o < cout; ++o) gb[o] += gy(t, o);
        }
      });
}

Var dropout(Var x, double rate, bool training, CounterRng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw Error("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> factor(x.value().size());
  for (double& f : factor) f = rng.uniform() >= rate ? keep_scale : 0.0;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
  const auto ix = x.id;
  return x.graph->record("dropout", std::move(out), {x},
                         [ix, factor = std::move(factor)](Graph& g, std::size_t self) {
                           const Tensor& gy = g.grad(self);
                           auto d = g.grad(ix).data();
                           for (std::size_t i = 0; i < d.size(); ++i) d[i] += gy[i] * factor[i];
                         });
}

Var l2_normalize_rows(Var x) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  Tensor out = xv;
  std::vector<double> norms(r);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (double v : xv.row(i)) s += v * v;
    norms[i] = std::sqrt(s);
    if (norms[i] > 0.0)
      for (double& v : out.row(i)) v /= norms[i];
  }
  const auto ix = x.id;
  return x.graph->record("l2_normalize_rows", std::move(out), {x},
                         [ix, r, c, norms = std::move(norms)](Graph& g, std::size_t self) {
                           const Tensor& gy = g.grad(self);
                           const Tensor& y = g.value(self);
                           Tensor& gx = g.grad(ix);
                           for (std::size_t i = 0; i < r; ++i) {
                             if (norms[i] == 0.0) continue;
                             double dot = 0.0;
                             for (std::size_t j = 0; j < c; ++j) dot += y(i, j) * gy(i, j);
                             for (std::size_t j = 0; j < c; ++j)
                               gx(i, j) += (gy(i, j) - y(i, j) * dot) / norms[i];
                           }
                         });
}

Var layer_norm(Var x, Var gain, Var shift, double eps) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  if (gain.value().size() != c || shift.value().size() != c) {
    throw ShapeError("layer_norm: affine width mismatch for " + xv.shape_string());
  }
  Tensor xhat({r, c});
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (double v : xv.row(i)) mu += v;
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (double v : xv.row(i)) var += (v - mu) * (v - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) xhat(i, j) = (xv(i, j) - mu) * inv_std[i];
  }
  Tensor out({r, c});
  const Tensor& gv = gain.value();
  const Tensor& sv = shift.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = xhat(i, j) * gv[j] + sv[j];
  const auto ix = x.id, ig = gain.id, is = shift.id;
  return x.graph->record(
      "layer_norm", std::move(out), {x, gain, shift},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        const Tensor& gv = g.value(ig);
        if (g.needs_grad(ig)) {
          Tensor& gg = g.grad(ig);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gg[j] += gy(i, j) * xhat(i, j);
        }
        if (g.needs_grad(is)) {
          Tensor& gs = g.grad(is);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gs[j] += gy(i, j);
        }
        if (g.needs_grad(ix)) {
          Tensor& gx = g.grad(ix);
          const double n = static_cast<double>(c);
          for (std::size_t i = 0; i < r; ++i) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double d = gy(i, j) * gv[j];
              s1 += d;
              s2 += d * xhat(i, j);
            }
            for (std::size_t j = 0; j < c; ++j) {
              const double d = gy(i, j) * gv[j];
              gx(i, j) += inv_std[i] / n * (n * d - s1 - xhat(i, j) * s2);
            }
          }
        }
      });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const auto ix = x.id;
  return x.graph->record("sum", Tensor::scalar(s), {x}, [ix](Graph& g, std::size_t self) {
    const double gy = g.grad(self)[0];
    for (double& d : g.grad(ix).storage()) d += gy;
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), 1.0 / n);
}

Var mean_rows(Var x) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  if (r == 0) throw ShapeError("mean_rows: no rows");
  Tensor out({c}, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += xv(i, j);
  for (double& v : out.storage()) v /= static_cast<double>(r);
  const auto ix = x.id;
  return x.graph->record("mean_rows", std::move(out), {x}, [ix, r, c](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad(ix);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx(i, j) += gy[j] / static_cast<double>(r);
  });
}

Var topk_mean(Var x, std::size_t k) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.size();
  if (k == 0 || k > n) {
    throw ShapeError("topk_mean: k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return xv[a] > xv[b]; });
  idx.resize(k);
  double s = 0.0;
  for (auto i : idx) s += xv[i];
  const auto ix = x.id;
  return x.graph->record("topk_mean", Tensor::scalar(s / static_cast<double>(k)), {x},
                         [ix, idx = std::move(idx)](Graph& g, std::size_t self) {
                           const double gy = g.grad(self)[0] / static_cast<double>(idx.size());
                           Tensor& gx = g.grad(ix);
                           for (auto i : idx) gx[i] += gy;
                         });
}

Var gather(Var x, std::vector<std::pair<std::size_t, std::size_t>> at) {
  const Tensor& xv = x.value();
  Tensor out({at.size()});
  for (std::size_t i = 0; i < at.size(); ++i) {
    if (at[i].first >= xv.rows() || at[i].second >= xv.cols()) {
      throw ShapeError("gather: index out of range for " + xv.shape_string());
    }
    out[i] = xv(at[i].first, at[i].second);
  }
  const auto ix = x.id;
  return x.graph->record("gather", std::move(out), {x},
                         [ix, at = std::move(at)](Graph& g, std::size_t self) {
                           const Tensor& gy = g.grad(self);
                           Tensor& gx = g.grad(ix);
                           for (std::size_t i = 0; i < at.size(); ++i)
                             gx(at[i].first, at[i].second) += gy[i];
                         });
}

Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  const std::size_t c = rows.front().value().size();
  Tensor out({rows.size(), c});
  std::vector<Var> inputs;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor& rv = rows[i].value();
    if (rv.size() != c) {
      throw ShapeError("stack_rows: row " + std::to_string(i) + " has shape " + rv.shape_string());
    }
    std::copy(rv.data().begin(), rv.data().end(), out.row(i).begin());
    inputs.push_back(rows[i]);
    ids.push_back(rows[i].id);
  }
  return rows.front().graph->record("stack_rows", std::move(out), std::move(inputs),
                                    [ids = std::move(ids), c](Graph& g, std::size_t self) {
                                      const Tensor& gy = g.grad(self);
                                      for (std::size_t i = 0; i < ids.size(); ++i) {
                                        if (!g.needs_grad(ids[i])) continue;
                                        Tensor& gr = g.grad(ids[i]);
                                        for (std::size_t j = 0; j < c; ++j) gr[j] += gy(i, j);
                                      }
                                    });
}

Var reshape(Var x, Tensor::Shape dims) {
  Tensor out = x.value().reshaped(std::move(dims));
  const auto ix = x.id;
  return x.graph->record("reshape", std::move(out), {x}, [ix](Graph& g, std::size_t self) {
    accumulate(g.grad(ix), g.grad(self));
  });
}

Var column(Var x, std::size_t j) {
  const Tensor& xv = x.value();
  require_matrix("column", xv);
  if (j >= xv.cols()) throw ShapeError("column: index out of range for " + xv.shape_string());
  const std::size_t r = xv.rows();
  Tensor out({r});
  for (std::size_t i = 0; i < r; ++i) out[i] = xv(i, j);
  const auto ix = x.id;
  return x.graph->record("column", std::move(out), {x}, [ix, j, r](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad(ix);
    for (std::size_t i = 0; i < r; ++i) gx(i, j) += gy[i];
  });
}

}  // namespace tcape::ops
