#include "unimom/diff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "unimom/error.hpp"
#include "unimom/simd/kernels.hpp"

namespace unimom::diff {
namespace {

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw Error("operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw Error("operation mixes Vars from different tapes");
  return t;
}

std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

Shape strip_leading_ones(const Shape& s) {
  auto it = std::find_if(s.begin(), s.end(), [](std::size_t d) { return d != 1; });
  return Shape(it, s.end());
}

bool is_suffix(const Shape& small, const Shape& big) {
  const Shape s = strip_leading_ones(small);
  if (s.size() > big.size()) return false;
  return std::equal(s.rbegin(), s.rend(), big.rbegin());
}

// Output shape of a broadcasting binary op, or ShapeError naming both shapes.
Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return a;
  const std::size_t na = element_count(a);
  const std::size_t nb = element_count(b);
  if (nb == 1 || (na >= nb && is_suffix(b, a))) return a;
  if (na == 1 || (nb > na && is_suffix(a, b))) return b;
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " +
                   to_string(b));
}

enum class BinaryKind { kAdd, kSub, kMul, kDiv };

Var binary(const Var& a, const Var& b, BinaryKind kind, const char* name) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Shape out_shape = broadcast_shape(av.shape(), bv.shape(), name);
  const std::size_t n = element_count(out_shape);
  const std::size_t na = av.size();
  const std::size_t nb = bv.size();
  if (kind == BinaryKind::kDiv) {
    for (double d : bv.values()) {
      if (d == 0.0) throw DomainError("div: division by exact zero");
    }
  }
  Tensor out(out_shape);
  double* o = out.data();
  const double* x = av.data();
  const double* y = bv.data();
  const bool same = na == n && nb == n;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = same ? x[i] : x[i % na];
    const double v = same ? y[i] : y[i % nb];
    switch (kind) {
      case BinaryKind::kAdd: o[i] = u + v; break;
      case BinaryKind::kSub: o[i] = u - v; break;
      case BinaryKind::kMul: o[i] = u * v; break;
      case BinaryKind::kDiv: o[i] = u / v; break;
    }
  }
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [ia, ib, kind, n, na, nb](Tape& t, std::size_t self) {
    const double* g = t.grad(self).data();
    const double* x = t.value(ia).data();
    const double* y = t.value(ib).data();
    if (t.needs_grad(ia)) {
      double* ga = t.grad(ia).data();
      for (std::size_t i = 0; i < n; ++i) {
        const double v = y[i % nb];
        switch (kind) {
          case BinaryKind::kAdd:
          case BinaryKind::kSub: ga[i % na] += g[i]; break;
          case BinaryKind::kMul: ga[i % na] += g[i] * v; break;
          case BinaryKind::kDiv: ga[i % na] += g[i] / v; break;
        }
      }
    }
    if (t.needs_grad(ib)) {
      double* gb = t.grad(ib).data();
      for (std::size_t i = 0; i < n; ++i) {
        const double u = x[i % na];
        const double v = y[i % nb];
        switch (kind) {
          case BinaryKind::kAdd: gb[i % nb] += g[i]; break;
          case BinaryKind::kSub: gb[i % nb] -= g[i]; break;
          case BinaryKind::kMul: gb[i % nb] += g[i] * u; break;
          case BinaryKind::kDiv: gb[i % nb] -= g[i] * u / (v * v); break;
        }
      }
    }
  });
}

// Elementwise op whose derivative is expressed through input x and output y.
template <typename F, typename D>
Var unary(const Var& a, F f, D dfdx) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {ia}, [ia, dfdx](Tape& t, std::size_t self) {
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    const double* g = t.grad(self).data();
    double* gx = t.grad(ia).data();
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * dfdx(x[i], y[i]);
  });
}

void check_offsets(std::span<const std::size_t> offsets, std::size_t rows, const char* op) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != rows) {
    throw ShapeError(std::string(op) + ": segment offsets must start at 0 and end at " +
                     std::to_string(rows));
  }
  for (std::size_t d = 0; d + 1 < offsets.size(); ++d) {
    if (offsets[d + 1] <= offsets[d]) {
      throw ShapeError(std::string(op) + ": segment " + std::to_string(d) + " is empty");
    }
  }
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got shape " +
                     to_string(t.shape()));
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0]) {
    throw ShapeError("matmul: incompatible shapes " + to_string(av.shape()) + " and " +
                     to_string(bv.shape()));
  }
  const std::size_t m = av.shape()[0];
  const std::size_t k = av.shape()[1];
  const std::size_t n = bv.shape()[1];
  Tensor out(Shape{m, n});
  simd::active_kernels().gemm_nn(m, n, k, av.data(), bv.data(), out.data());
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [ia, ib, m, n, k](Tape& t, std::size_t self) {
    const auto& kern = simd::active_kernels();
    const double* g = t.grad(self).data();
    if (t.needs_grad(ia)) kern.gemm_nt(m, k, n, g, t.value(ib).data(), t.grad(ia).data());
    if (t.needs_grad(ib)) kern.gemm_tn(k, n, m, t.value(ia).data(), g, t.grad(ib).data());
  });
}

Var add(const Var& a, const Var& b) { return binary(a, b, BinaryKind::kAdd, "add"); }
Var sub(const Var& a, const Var& b) { return binary(a, b, BinaryKind::kSub, "sub"); }
Var mul(const Var& a, const Var& b) { return binary(a, b, BinaryKind::kMul, "mul"); }
Var div(const Var& a, const Var& b) { return binary(a, b, BinaryKind::kDiv, "div"); }

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var mul_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  }
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(const Var& a) {
  for (double v : a.value().values()) {
    if (v < 0.0) throw DomainError("sqrt: negative input " + std::to_string(v));
  }
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var abs(const Var& a) {
  return unary(a, [](double x) { return std::fabs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var map(const Var& a, std::function<double(double)> f, std::function<double(double)> df) {
  return unary(a, f, [df](double x, double) { return df(x); });
}

Var softmax(const Var& a) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t cols = last_dim(av.shape());
  const std::size_t rows = av.size() / cols;
  Tensor out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * cols;
    double* y = out.data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sum += (y[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) y[c] /= sum;
  }
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {ia}, [ia, rows, cols](Tape& t, std::size_t self) {
    const double* y = t.value(self).data();
    const double* g = t.grad(self).data();
    double* gx = t.grad(ia).data();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t o = r * cols;
      double dotp = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dotp += g[o + c] * y[o + c];
      for (std::size_t c = 0; c < cols; ++c) gx[o + c] += y[o + c] * (g[o + c] - dotp);
    }
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape& tape = tape_of(parts.front());
  const Shape& first = parts.front().shape();
  const Shape lead(first.begin(), first.empty() ? first.end() : first.end() - 1);
  std::vector<std::size_t> widths;
  std::vector<std::size_t> ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.tape() != &tape) throw Error("concat: Vars from different tapes");
    const Shape& s = p.shape();
    const Shape l(s.begin(), s.empty() ? s.end() : s.end() - 1);
    if (l != lead) {
      throw ShapeError("concat: incompatible shapes " + to_string(first) + " and " + to_string(s));
    }
    widths.push_back(last_dim(s));
    ids.push_back(p.id());
    total += widths.back();
  }
  const std::size_t rows = element_count(lead);
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const double* src = parts[k].value().data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(src + r * widths[k], widths[k], out.data() + r * total + offset);
    }
    offset += widths[k];
  }
  return tape.record(std::move(out), ids, [ids, widths, rows, total](Tape& t, std::size_t self) {
    const double* g = t.grad(self).data();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.needs_grad(ids[k])) {
        double* gk = t.grad(ids[k]).data();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < widths[k]; ++c) gk[r * widths[k] + c] += g[r * total + offset + c];
        }
      }
      offset += widths[k];
    }
  });
}

Var slice(const Var& a, std::size_t begin, std::size_t end) {
  Tape& tape = tape_of(a);
  const Shape& s = a.shape();
  const std::size_t cols = last_dim(s);
  if (begin >= end || end > cols) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of bounds for shape " + to_string(s));
  }
  const std::size_t rows = a.value().size() / cols;
  const std::size_t width = end - begin;
  Shape out_shape = s.empty() ? Shape{} : Shape(s.begin(), s.end() - 1);
  out_shape.push_back(width);
  Tensor out(out_shape);
  const double* src = a.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(src + r * cols + begin, width, out.data() + r * width);
  }
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {ia}, [ia, rows, cols, begin, width](Tape& t, std::size_t self) {
    const double* g = t.grad(self).data();
    double* gx = t.grad(ia).data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < width; ++c) gx[r * cols + begin + c] += g[r * width + c];
    }
  });
}

Var mean(const Var& a) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  double sum = 0.0;
  for (double v : av.values()) sum += v;
  const std::size_t n = av.size();
  const std::size_t ia = a.id();
  return tape.record(Tensor::scalar(sum / static_cast<double>(n)), {ia},
                     [ia, n](Tape& t, std::size_t self) {
                       const double g = t.grad(self)[0] / static_cast<double>(n);
                       for (double& v : t.grad(ia).values()) v += g;
                     });
}

Var std_dev(const Var& a, double floor) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t n = av.size();
  double mu = 0.0;
  for (double v : av.values()) mu += v;
  mu /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : av.values()) ss += (v - mu) * (v - mu);
  const double sd = std::sqrt(ss / static_cast<double>(n));
  const bool floored = !(sd > floor);
  const std::size_t ia = a.id();
  return tape.record(Tensor::scalar(floored ? floor : sd), {ia},
                     [ia, n, mu, sd, floored](Tape& t, std::size_t self) {
                       if (floored || sd == 0.0) return;
                       const double g = t.grad(self)[0];
                       const double* x = t.value(ia).data();
                       double* gx = t.grad(ia).data();
                       const double scale = g / (static_cast<double>(n) * sd);
                       for (std::size_t i = 0; i < n; ++i) gx[i] += scale * (x[i] - mu);
                     });
}

Var row_sum(const Var& a) {
  Tape& tape = tape_of(a);
  require_rank2(a.value(), "row_sum");
  const std::size_t m = a.shape()[0];
  const std::size_t n = a.shape()[1];
  Tensor out(Shape{m, 1});
  const double* x = a.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += x[i * n + j];
    out[i] = s;
  }
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {ia}, [ia, m, n](Tape& t, std::size_t self) {
    const double* g = t.grad(self).data();
    double* gx = t.grad(ia).data();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i];
    }
  });
}

Var scale_rows(const Var& x, const Var& s) {
  Tape& tape = tape_of(x, s);
  require_rank2(x.value(), "scale_rows");
  const std::size_t m = x.shape()[0];
  const std::size_t n = x.shape()[1];
  if (s.value().size() != m || (s.value().rank() == 2 && s.shape()[1] != 1)) {
    throw ShapeError("scale_rows: incompatible shapes " + to_string(x.shape()) + " and " +
                     to_string(s.shape()));
  }
  Tensor out(Shape{m, n});
  const double* xv = x.value().data();
  const double* sv = s.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] * sv[i];
  }
  const std::size_t ix = x.id();
  const std::size_t is = s.id();
  return tape.record(std::move(out), {ix, is}, [ix, is, m, n](Tape& t, std::size_t self) {
    const double* g = t.grad(self).data();
    const double* xv = t.value(ix).data();
    const double* sv = t.value(is).data();
    if (t.needs_grad(ix)) {
      double* gx = t.grad(ix).data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i * n + j] * sv[i];
      }
    }
    if (t.needs_grad(is)) {
      double* gs = t.grad(is).data();
      const auto& kern = simd::active_kernels();
      for (std::size_t i = 0; i < m; ++i) gs[i] += kern.dot(n, g + i * n, xv + i * n);
    }
  });
}

Var segment_mean(const Var& x, std::span<const std::size_t> offsets) {
  Tape& tape = tape_of(x);
  require_rank2(x.value(), "segment_mean");
  const std::size_t m = x.shape()[0];
  const std::size_t n = x.shape()[1];
  check_offsets(offsets, m, "segment_mean");
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  const std::size_t segs = off.size() - 1;
  Tensor out(Shape{segs, n});
  const double* xv = x.value().data();
  for (std::size_t d = 0; d < segs; ++d) {
    const double inv = 1.0 / static_cast<double>(off[d + 1] - off[d]);
    for (std::size_t r = off[d]; r < off[d + 1]; ++r) {
      for (std::size_t j = 0; j < n; ++j) out[d * n + j] += xv[r * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[d * n + j] *= inv;
  }
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {ix}, [ix, off, n](Tape& t, std::size_t self) {
    const double* g = t.grad(self).data();
    double* gx = t.grad(ix).data();
    for (std::size_t d = 0; d + 1 < off.size(); ++d) {
      const double inv = 1.0 / static_cast<double>(off[d + 1] - off[d]);
      for (std::size_t r = off[d]; r < off[d + 1]; ++r) {
        for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += g[d * n + j] * inv;
      }
    }
  });
}

Var segment_std(const Var& x, std::span<const std::size_t> offsets, double floor) {
  Tape& tape = tape_of(x);
  require_rank2(x.value(), "segment_std");
  const std::size_t m = x.shape()[0];
  const std::size_t n = x.shape()[1];
  check_offsets(offsets, m, "segment_std");
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  const std::size_t segs = off.size() - 1;
  std::vector<double> mu(segs * n, 0.0);
  std::vector<double> sd(segs * n, 0.0);
  Tensor out(Shape{segs, n});
  const double* xv = x.value().data();
  for (std::size_t d = 0; d < segs; ++d) {
    const double cnt = static_cast<double>(off[d + 1] - off[d]);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t r = off[d]; r < off[d + 1]; ++r) s += xv[r * n + j];
      const double mean_v = s / cnt;
      double ss = 0.0;
      for (std::size_t r = off[d]; r < off[d + 1]; ++r) {
        ss += (xv[r * n + j] - mean_v) * (xv[r * n + j] - mean_v);
      }
      mu[d * n + j] = mean_v;
      sd[d * n + j] = std::sqrt(ss / cnt);
      out[d * n + j] = sd[d * n + j] > floor ? sd[d * n + j] : floor;
    }
  }
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {ix}, [ix, off, n, mu, sd, floor](Tape& t, std::size_t self) {
    const double* g = t.grad(self).data();
    const double* xv = t.value(ix).data();
    double* gx = t.grad(ix).data();
    for (std::size_t d = 0; d + 1 < off.size(); ++d) {
      const double cnt = static_cast<double>(off[d + 1] - off[d]);
      for (std::size_t j = 0; j < n; ++j) {
        const double s = sd[d * n + j];
        if (!(s > floor) || s == 0.0) continue;
        const double scale = g[d * n + j] / (cnt * s);
        for (std::size_t r = off[d]; r < off[d + 1]; ++r) {
          gx[r * n + j] += scale * (xv[r * n + j] - mu[d * n + j]);
        }
      }
    }
  });
}

namespace {

struct LstmSaved {
  std::vector<double> gates;  // steps*R x 4H, post-activation (i, f, g, o)
  std::vector<double> cell;   // steps*R x H
  std::vector<double> hidden; // steps*R x H
};

inline double sigm(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Var lstm_sequence(const Var& x, const Var& wx, const Var& wh, const Var& bias, std::size_t steps,
                  bool return_sequence) {
  Tape& tape = tape_of(x, wx);
  if (wh.tape() != &tape || bias.tape() != &tape) throw Error("lstm_sequence: mixed tapes");
  const Tensor& xv = x.value();
  const Tensor& wxv = wx.value();
  const Tensor& whv = wh.value();
  const Tensor& bv = bias.value();
  require_rank2(xv, "lstm_sequence");
  require_rank2(wxv, "lstm_sequence");
  require_rank2(whv, "lstm_sequence");
  const std::size_t in = xv.shape()[1];
  const std::size_t hid = whv.shape()[0];
  const std::size_t g4 = 4 * hid;
  if (steps == 0 || xv.shape()[0] % steps != 0) {
    throw ShapeError("lstm_sequence: " + std::to_string(xv.shape()[0]) +
                     " input rows are not divisible into " + std::to_string(steps) + " steps");
  }
  if (wxv.shape()[0] != in || wxv.shape()[1] != g4 || whv.shape()[1] != g4 || bv.size() != g4) {
    throw ShapeError("lstm_sequence: weight shapes " + to_string(wxv.shape()) + ", " +
                     to_string(whv.shape()) + ", " + to_string(bv.shape()) +
                     " do not match input " + to_string(xv.shape()));
  }
  const std::size_t batch = xv.shape()[0] / steps;
  const auto& kern = simd::active_kernels();

  const bool keep = tape.any_requires_grad({x, wx, wh, bias});
  auto saved = std::make_shared<LstmSaved>();
  const std::size_t rows = steps * batch;

  // Pre-activations: x * wx + bias for all steps at once.
  std::vector<double> z(rows * g4);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(bv.data(), g4, z.data() + r * g4);
  kern.gemm_nn(rows, g4, in, xv.data(), wxv.data(), z.data());

  std::vector<double> h_prev(batch * hid, 0.0);
  std::vector<double> c_prev(batch * hid, 0.0);
  std::vector<double> h_cur(batch * hid);
  std::vector<double> c_cur(batch * hid);
  if (keep) {
    saved->gates.resize(rows * g4);
    saved->cell.resize(rows * hid);
    saved->hidden.resize(rows * hid);
  }
  Tensor out(return_sequence ? Shape{rows, hid} : Shape{batch, hid});

  for (std::size_t t = 0; t < steps; ++t) {
    double* zt = z.data() + t * batch * g4;
    if (t > 0) kern.gemm_nn(batch, g4, hid, h_prev.data(), whv.data(), zt);
    for (std::size_t r = 0; r < batch; ++r) {
      double* zr = zt + r * g4;
      for (std::size_t j = 0; j < hid; ++j) {
        const double ig = sigm(zr[j]);
        const double fg = sigm(zr[hid + j]);
        const double gg = std::tanh(zr[2 * hid + j]);
        const double og = sigm(zr[3 * hid + j]);
        const double c = fg * c_prev[r * hid + j] + ig * gg;
        c_cur[r * hid + j] = c;
        h_cur[r * hid + j] = og * std::tanh(c);
        zr[j] = ig;
        zr[hid + j] = fg;
        zr[2 * hid + j] = gg;
        zr[3 * hid + j] = og;
      }
    }
    if (keep) {
      std::copy(zt, zt + batch * g4, saved->gates.data() + t * batch * g4);
      std::copy(c_cur.begin(), c_cur.end(), saved->cell.data() + t * batch * hid);
      std::copy(h_cur.begin(), h_cur.end(), saved->hidden.data() + t * batch * hid);
    }
    if (return_sequence) std::copy(h_cur.begin(), h_cur.end(), out.data() + t * batch * hid);
    std::swap(h_prev, h_cur);
    std::swap(c_prev, c_cur);
  }
  if (!return_sequence) std::copy(h_prev.begin(), h_prev.end(), out.data());

  const std::size_t ix = x.id(), iwx = wx.id(), iwh = wh.id(), ib = bias.id();
  return tape.record(
      std::move(out), {ix, iwx, iwh, ib},
      [saved, ix, iwx, iwh, ib, steps, batch, hid, in, return_sequence](Tape& t, std::size_t self) {
        const auto& kern = simd::active_kernels();
        const std::size_t g4 = 4 * hid;
        const double* gout = t.grad(self).data();
        const double* xv = t.value(ix).data();
        const double* wxv = t.value(iwx).data();
        const double* whv = t.value(iwh).data();
        double* gx = t.needs_grad(ix) ? t.grad(ix).data() : nullptr;
        double* gwx = t.needs_grad(iwx) ? t.grad(iwx).data() : nullptr;
        double* gwh = t.needs_grad(iwh) ? t.grad(iwh).data() : nullptr;
        double* gb = t.needs_grad(ib) ? t.grad(ib).data() : nullptr;

        std::vector<double> dh(batch * hid, 0.0);
        std::vector<double> dh_next(batch * hid, 0.0);
        std::vector<double> dc_next(batch * hid, 0.0);
        std::vector<double> dz(batch * g4);
        for (std::size_t step = steps; step-- > 0;) {
          const double* gates = saved->gates.data() + step * batch * g4;
          const double* cell = saved->cell.data() + step * batch * hid;
          const double* cell_prev = step > 0 ? saved->cell.data() + (step - 1) * batch * hid : nullptr;
          for (std::size_t k = 0; k < batch * hid; ++k) dh[k] = dh_next[k];
          if (return_sequence) {
            const double* go = gout + step * batch * hid;
            for (std::size_t k = 0; k < batch * hid; ++k) dh[k] += go[k];
          } else if (step + 1 == steps) {
            for (std::size_t k = 0; k < batch * hid; ++k) dh[k] += gout[k];
          }
          for (std::size_t r = 0; r < batch; ++r) {
            const double* gr = gates + r * g4;
            double* dzr = dz.data() + r * g4;
            for (std::size_t j = 0; j < hid; ++j) {
              const std::size_t k = r * hid + j;
              const double ig = gr[j], fg = gr[hid + j], gg = gr[2 * hid + j], og = gr[3 * hid + j];
              const double tc = std::tanh(cell[k]);
              const double dc = dh[k] * og * (1.0 - tc * tc) + dc_next[k];
              const double cp = cell_prev ? cell_prev[k] : 0.0;
              dzr[j] = dc * gg * ig * (1.0 - ig);
              dzr[hid + j] = dc * cp * fg * (1.0 - fg);
              dzr[2 * hid + j] = dc * ig * (1.0 - gg * gg);
              dzr[3 * hid + j] = dh[k] * tc * og * (1.0 - og);
              dc_next[k] = dc * fg;
            }
          }
          if (gb) {
            for (std::size_t r = 0; r < batch; ++r) kern.axpy(g4, 1.0, dz.data() + r * g4, gb);
          }
          if (gwx) kern.gemm_tn(in, g4, batch, xv + step * batch * in, dz.data(), gwx);
          if (gx) kern.gemm_nt(batch, in, g4, dz.data(), wxv, gx + step * batch * in);
          std::fill(dh_next.begin(), dh_next.end(), 0.0);
          if (step > 0) {
            const double* h_prev = saved->hidden.data() + (step - 1) * batch * hid;
            if (gwh) kern.gemm_tn(hid, g4, batch, h_prev, dz.data(), gwh);
            kern.gemm_nt(batch, hid, g4, dz.data(), whv, dh_next.data());
          }
        }
      });
}

}  // namespace unimom::diff
