#include "umafd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "umafd/errors.hpp"
#include "umafd/kernels.hpp"

namespace umafd::ops {
namespace {

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const Var& x, std::size_t rank, const char* op) {
  if (x.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(x.shape()));
  }
}

Node& in(Node& self, std::size_t i) { return *self.inputs[i]; }

}  // namespace

Var constant(Tensor t) { return Var(std::move(t), false); }

Var detach(const Var& x) { return Var(x.value(), false); }

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (in(self, k).requires_grad) in(self, k).accumulate(self.grad.values());
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (in(self, 0).requires_grad) in(self, 0).accumulate(self.grad.values());
    if (in(self, 1).requires_grad) {
      std::vector<double> g(self.grad.size());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = -self.grad[i];
      in(self, 1).accumulate(g);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& target = in(self, k);
      if (!target.requires_grad) continue;
      const Tensor& other = in(self, 1 - k).value;
      std::vector<double> g(self.grad.size());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * other[i];
      target.accumulate(g);
    }
  });
}

Var scale(const Var& x, double s) {
  Tensor out = x.value();
  for (auto& v : out.values()) v *= s;
  return make_result(std::move(out), {x}, [s](Node& self) {
    std::vector<double> g(self.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * s;
    in(self, 0).accumulate(g);
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return make_result(std::move(out), {x}, [](Node& self) {
    std::vector<double> g(self.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.value[i] > 0.0 ? self.grad[i] : 0.0;
    in(self, 0).accumulate(g);
  });
}

Var leaky_relu(const Var& x, double slope) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : slope * v;
  return make_result(std::move(out), {x}, [slope](Node& self) {
    std::vector<double> g(self.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.value[i] > 0.0 ? self.grad[i] : slope * self.grad[i];
    in(self, 0).accumulate(g);
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return make_result(Tensor::scalar(s), {x}, [](Node& self) {
    std::vector<double> g(in(self, 0).value.size(), self.grad[0]);
    in(self, 0).accumulate(g);
  });
}

Var mean(const Var& x) {
  if (x.size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Var conv3d(const Var& x, const Var& weight, const Var& bias, std::array<std::size_t, 3> stride) {
  require_rank(x, 5, "conv3d input");
  require_rank(weight, 5, "conv3d weight");
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (ws[1] != xs[1]) {
    throw ShapeError("conv3d: input has " + std::to_string(xs[1]) + " channels, weight expects " +
                     std::to_string(ws[1]));
  }
  if (bias.size() != ws[0]) throw ShapeError("conv3d: bias size does not match output channels");

  kernels::Conv3dGeometry g;
  g.in_channels = xs[1];
  g.out_channels = ws[0];
  g.in_dims = {xs[2], xs[3], xs[4]};
  g.kernel = {ws[2], ws[3], ws[4]};
  g.stride = stride;

  const std::size_t n = xs[0];
  const std::size_t in_sz = g.in_channels * g.in_volume();
  const std::size_t out_sz = g.out_channels * g.out_volume();
  Tensor out(Shape{n, g.out_channels, g.out_dim(0), g.out_dim(1), g.out_dim(2)});
  for (std::size_t s = 0; s < n; ++s) {
    kernels::conv3d_forward(g, x.value().values().subspan(s * in_sz, in_sz), weight.value().values(),
                            bias.value().values(), out.values().subspan(s * out_sz, out_sz));
  }
  return make_result(std::move(out), {x, weight, bias}, [g, n, in_sz, out_sz](Node& self) {
    Node& xn = in(self, 0);
    Node& wn = in(self, 1);
    Node& bn = in(self, 2);
    std::vector<double> dw(g.weight_size(), 0.0);
    std::vector<double> db(g.out_channels, 0.0);
    std::vector<double> dx(xn.requires_grad ? n * in_sz : 0);
    for (std::size_t s = 0; s < n; ++s) {
      std::span<double> dxs = xn.requires_grad ? std::span<double>(dx.data() + s * in_sz, in_sz) : std::span<double>{};
      kernels::conv3d_backward(g, xn.value.values().subspan(s * in_sz, in_sz), wn.value.values(),
                               self.grad.values().subspan(s * out_sz, out_sz), dxs, dw, db);
    }
    if (xn.requires_grad) xn.accumulate(dx);
    if (wn.requires_grad) wn.accumulate(dw);
    if (bn.requires_grad) bn.accumulate(db);
  });
}

Var global_avg_pool(const Var& x) {
  if (x.shape().size() < 3) throw ShapeError("global_avg_pool: expected (N, C, ...) input");
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  const std::size_t vol = x.size() / (n * c);
  Tensor out(Shape{n, c});
  const double* src = x.value().ptr();
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < vol; ++k) s += src[i * vol + k];
    out[i] = s / static_cast<double>(vol);
  }
  return make_result(std::move(out), {x}, [vol](Node& self) {
    Node& xn = in(self, 0);
    std::vector<double> g(xn.value.size());
    const double inv = 1.0 / static_cast<double>(vol);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      std::fill_n(g.begin() + static_cast<long>(i * vol), vol, self.grad[i] * inv);
    }
    xn.accumulate(g);
  });
}

Var global_max_pool(const Var& x) {
  if (x.shape().size() < 3) throw ShapeError("global_max_pool: expected (N, C, ...) input");
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  const std::size_t vol = x.size() / (n * c);
  Tensor out(Shape{n, c});
  std::vector<std::size_t> argmax(n * c);
  const double* src = x.value().ptr();
  for (std::size_t i = 0; i < n * c; ++i) {
    std::size_t best = i * vol;
    for (std::size_t k = 1; k < vol; ++k) {
      if (src[i * vol + k] > src[best]) best = i * vol + k;
    }
    argmax[i] = best;
    out[i] = src[best];
  }
  return make_result(std::move(out), {x}, [argmax = std::move(argmax)](Node& self) {
    Node& xn = in(self, 0);
    for (std::size_t i = 0; i < argmax.size(); ++i) xn.accumulate_at(argmax[i], self.grad[i]);
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t n = x.shape()[0], d_in = x.shape()[1], d_out = weight.shape()[0];
  if (weight.shape()[1] != d_in) {
    throw ShapeError("linear: input width " + std::to_string(d_in) + " but weight is " + shape_str(weight.shape()));
  }
  if (bias.size() != d_out) throw ShapeError("linear: bias size does not match output width");
  Tensor out(Shape{n, d_out});
  const double* xv = x.value().ptr();
  const double* wv = weight.value().ptr();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t o = 0; o < d_out; ++o) {
      double acc = bias.value()[o];
      for (std::size_t i = 0; i < d_in; ++i) acc += wv[o * d_in + i] * xv[s * d_in + i];
      out[s * d_out + o] = acc;
    }
  }
  return make_result(std::move(out), {x, weight, bias}, [n, d_in, d_out](Node& self) {
    Node& xn = in(self, 0);
    Node& wn = in(self, 1);
    Node& bn = in(self, 2);
    const double* g = self.grad.ptr();
    if (xn.requires_grad) {
      std::vector<double> dx(n * d_in, 0.0);
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t o = 0; o < d_out; ++o)
          for (std::size_t i = 0; i < d_in; ++i) dx[s * d_in + i] += g[s * d_out + o] * wn.value[o * d_in + i];
      xn.accumulate(dx);
    }
    if (wn.requires_grad) {
      std::vector<double> dw(d_out * d_in, 0.0);
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t o = 0; o < d_out; ++o)
          for (std::size_t i = 0; i < d_in; ++i) dw[o * d_in + i] += g[s * d_out + o] * xn.value[s * d_in + i];
      wn.accumulate(dw);
    }
    if (bn.requires_grad) {
      std::vector<double> db(d_out, 0.0);
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t o = 0; o < d_out; ++o) db[o] += g[s * d_out + o];
      bn.accumulate(db);
    }
  });
}

Var concat_cols(const Var& a, const Var& b) {
  require_rank(a, 2, "concat_cols");
  require_rank(b, 2, "concat_cols");
  const std::size_t n = a.shape()[0], p = a.shape()[1], q = b.shape()[1];
  if (b.shape()[0] != n) throw ShapeError("concat_cols: row counts differ");
  Tensor out(Shape{n, p + q});
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(a.value().ptr() + s * p, p, out.ptr() + s * (p + q));
    std::copy_n(b.value().ptr() + s * q, q, out.ptr() + s * (p + q) + p);
  }
  return make_result(std::move(out), {a, b}, [n, p, q](Node& self) {
    if (in(self, 0).requires_grad) {
      std::vector<double> g(n * p);
      for (std::size_t s = 0; s < n; ++s) std::copy_n(self.grad.ptr() + s * (p + q), p, g.data() + s * p);
      in(self, 0).accumulate(g);
    }
    if (in(self, 1).requires_grad) {
      std::vector<double> g(n * q);
      for (std::size_t s = 0; s < n; ++s) std::copy_n(self.grad.ptr() + s * (p + q) + p, q, g.data() + s * q);
      in(self, 1).accumulate(g);
    }
  });
}

Var concat_rows(const Var& a, const Var& b) {
  if (a.shape().empty() || b.shape().empty()) throw ShapeError("concat_rows: scalar input");
  Shape tail_a(a.shape().begin() + 1, a.shape().end());
  Shape tail_b(b.shape().begin() + 1, b.shape().end());
  if (tail_a != tail_b) throw ShapeError("concat_rows: trailing shapes differ");
  Shape s = a.shape();
  s[0] += b.shape()[0];
  std::vector<double> v(a.value().vec());
  v.insert(v.end(), b.value().vec().begin(), b.value().vec().end());
  const std::size_t na = a.size();
  return make_result(Tensor(std::move(s), std::move(v)), {a, b}, [na](Node& self) {
    if (in(self, 0).requires_grad) in(self, 0).accumulate(self.grad.values().subspan(0, na));
    if (in(self, 1).requires_grad) in(self, 1).accumulate(self.grad.values().subspan(na));
  });
}

Var softmax_rows(const Var& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t n = x.shape()[0], k = x.shape()[1];
  Tensor out(x.shape());
  for (std::size_t s = 0; s < n; ++s) {
    const double* row = x.value().ptr() + s * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < k; ++j) out[s * k + j] = std::exp(row[j] - mx) / z;
  }
  return make_result(std::move(out), {x}, [n, k](Node& self) {
    std::vector<double> g(n * k);
    for (std::size_t s = 0; s < n; ++s) {
      double inner = 0.0;
      for (std::size_t j = 0; j < k; ++j) inner += self.grad[s * k + j] * self.value[s * k + j];
      for (std::size_t j = 0; j < k; ++j) g[s * k + j] = self.value[s * k + j] * (self.grad[s * k + j] - inner);
    }
    in(self, 0).accumulate(g);
  });
}

Var column(const Var& x, std::size_t col) {
  require_rank(x, 2, "column");
  const std::size_t n = x.shape()[0], k = x.shape()[1];
  if (col >= k) throw ShapeError("column index out of range");
  Tensor out(Shape{n});
  for (std::size_t s = 0; s < n; ++s) out[s] = x.value()[s * k + col];
  return make_result(std::move(out), {x}, [n, k, col](Node& self) {
    for (std::size_t s = 0; s < n; ++s) in(self, 0).accumulate_at(s * k + col, self.grad[s]);
  });
}

Var convex_mix(const Var& r, const Var& d, const Var& coeffs) {
  require_same(r, d, "convex_mix");
  const std::size_t n = r.shape().at(0);
  if (coeffs.shape() != Shape{n, 2}) throw ShapeError("convex_mix: coefficients must be (N, 2)");
  const std::size_t row = r.value().row_size();
  Tensor out(r.shape());
  for (std::size_t s = 0; s < n; ++s) {
    const double a_r = coeffs.value()[2 * s];
    for (std::size_t i = s * row; i < (s + 1) * row; ++i) {
      out[i] = d.value()[i] + a_r * (r.value()[i] - d.value()[i]);
    }
  }
  return make_result(std::move(out), {r, d, coeffs}, [n, row](Node& self) {
    Node& rn = in(self, 0);
    Node& dn = in(self, 1);
    Node& cn = in(self, 2);
    std::vector<double> gr(rn.requires_grad ? n * row : 0), gd(dn.requires_grad ? n * row : 0);
    for (std::size_t s = 0; s < n; ++s) {
      // the value reads only a_r, so a_d gets no derivative and d is weighted by 1 - a_r
      const double a_r = cn.value[2 * s];
      double sr = 0.0;
      for (std::size_t i = s * row; i < (s + 1) * row; ++i) {
        const double g = self.grad[i];
        if (rn.requires_grad) gr[i] = a_r * g;
        if (dn.requires_grad) gd[i] = (1.0 - a_r) * g;
        sr += g * (rn.value[i] - dn.value[i]);
      }
      if (cn.requires_grad) cn.accumulate_at(2 * s, sr);
    }
    if (rn.requires_grad) rn.accumulate(gr);
    if (dn.requires_grad) dn.accumulate(gd);
  });
}

Var row_norms(const Var& x, double eps) {
  const std::size_t n = x.shape().at(0);
  const std::size_t row = x.value().row_size();
  Tensor out(Shape{n});
  for (std::size_t s = 0; s < n; ++s) {
    double acc = 0.0;
    for (std::size_t i = s * row; i < (s + 1) * row; ++i) acc += x.value()[i] * x.value()[i];
    out[s] = std::sqrt(acc + eps);
  }
  return make_result(std::move(out), {x}, [n, row](Node& self) {
    Node& xn = in(self, 0);
    std::vector<double> g(n * row, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      if (self.value[s] == 0.0) continue;
      const double f = self.grad[s] / self.value[s];
      for (std::size_t i = s * row; i < (s + 1) * row; ++i) g[i] = f * xn.value[i];
    }
    xn.accumulate(g);
  });
}

Var grl(const Var& x, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("gradient reversal lambda must be > 0");
  return make_result(x.value(), {x}, [lambda](Node& self) {
    std::vector<double> g(self.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = -lambda * self.grad[i];
    in(self, 0).accumulate(g);
  });
}

Var stack_scalars(const std::vector<Var>& xs) {
  Tensor out(Shape{xs.size()});
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i].value().item();
  return make_result(std::move(out), xs, [](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      if (self.inputs[i]->requires_grad) self.inputs[i]->accumulate_at(0, self.grad[i]);
    }
  });
}

Var dot(const Var& a, const Var& b) {
  if (a.size() != b.size()) throw ShapeError("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.value()[i] * b.value()[i];
  return make_result(Tensor::scalar(s), {a, b}, [](Node& self) {
    const double g = self.grad[0];
    for (std::size_t k = 0; k < 2; ++k) {
      Node& target = in(self, k);
      if (!target.requires_grad) continue;
      const Tensor& other = in(self, 1 - k).value;
      std::vector<double> d(other.size());
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = g * other[i];
      target.accumulate(d);
    }
  });
}

}  // namespace umafd::ops
