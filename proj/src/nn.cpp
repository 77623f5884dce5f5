#include "fundmatch/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fundmatch/errors.hpp"
#include "fundmatch/rng.hpp"
#include "fundmatch/textio.hpp"

namespace fundmatch::nn {

Tensor Tensor::row(const std::vector<double>& values) {
  Tensor t(1, values.size());
  t.v = values;
  return t;
}

std::string Tensor::shape_string() const {
  return "(" + std::to_string(rows) + " x " + std::to_string(cols) + ")";
}

bool Tensor::all_finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

void gemm_nn(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows, k = a.cols, n = b.cols;
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a.row_ptr(i);
    double* oi = out.row_ptr(i);
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double c = ai[kk];
      if (c == 0.0) continue;
      const double* bk = b.row_ptr(kk);
      for (std::size_t j = 0; j < n; ++j) oi[j] += c * bk[j];
    }
  }
}

void gemm_nt(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows, k = a.cols, n = b.rows;
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a.row_ptr(i);
    double* oi = out.row_ptr(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b.row_ptr(j);
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
      oi[j] += acc;
    }
  }
}

void gemm_tn(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.cols, k = a.rows, n = b.cols;
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* ak = a.row_ptr(kk);
    const double* bk = b.row_ptr(kk);
    for (std::size_t i = 0; i < m; ++i) {
      const double c = ak[i];
      if (c == 0.0) continue;
      double* oi = out.row_ptr(i);
      for (std::size_t j = 0; j < n; ++j) oi[j] += c * bk[j];
    }
  }
}

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw DataError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                  b.shape_string());
}

}  // namespace

Var Tape::push(Tensor value, bool requires_grad, std::function<void()> back,
               const char* op_name) {
  if (check_finite_ && !value.all_finite())
    throw NumericError(std::string(op_name) + ": non-finite value in output");
  Node node;
  node.val = std::move(value);
  node.requires_grad = requires_grad;
  node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad_buf(std::uint32_t id) {
  Node& node = nodes_[id];
  if (node.grad.numel() == 0) node.grad = Tensor(node.val.rows, node.val.cols);
  return node.grad;
}

const Tensor& Tape::grad(Var x) const {
  const Node& node = nodes_[x.id];
  if (node.grad.numel() == 0)
    throw DataError("grad: no gradient recorded for this var (run backward first)");
  return node.grad;
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr, "constant"); }

Var Tape::leaf(const Tensor& value) { return push(value, true, nullptr, "leaf"); }

Var Tape::matmul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.cols != bv.rows) shape_error("matmul", av, bv);
  Tensor out(av.rows, bv.cols);
  gemm_nn(av, bv, out);
  bool track = rg(a) || rg(b);
  auto back = [this, a, b, out_id = nodes_.size()]() {
    const Tensor& g = nodes_[out_id].grad;
    if (rg(a)) gemm_nt(g, value(b), grad_buf(a.id));
    if (rg(b)) gemm_tn(value(a), g, grad_buf(b.id));
  };
  return push(std::move(out), track, track ? std::function<void()>(back) : nullptr, "matmul");
}

Var Tape::linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

Var Tape::add(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) shape_error("add", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += bv.v[i];
  bool track = rg(a) || rg(b);
  auto back = [this, a, b, out_id = nodes_.size()]() {
    const Tensor& g = nodes_[out_id].grad;
    for (Var p : {a, b}) {
      if (!rg(p)) continue;
      Tensor& pg = grad_buf(p.id);
      for (std::size_t i = 0; i < g.v.size(); ++i) pg.v[i] += g.v[i];
    }
  };
  return push(std::move(out), track, track ? std::function<void()>(back) : nullptr, "add");
}

Var Tape::add_row(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (bv.rows != 1 || bv.cols != av.cols) shape_error("add_row", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.rows; ++i) {
    double* oi = out.row_ptr(i);
    for (std::size_t j = 0; j < out.cols; ++j) oi[j] += bv.v[j];
  }
  bool track = rg(a) || rg(b);
  auto back = [this, a, b, out_id = nodes_.size()]() {
    const Tensor& g = nodes_[out_id].grad;
    if (rg(a)) {
      Tensor& ag = grad_buf(a.id);
      for (std::size_t i = 0; i < g.v.size(); ++i) ag.v[i] += g.v[i];
    }
    if (rg(b)) {
      Tensor& bg = grad_buf(b.id);
      for (std::size_t i = 0; i < g.rows; ++i) {
        const double* gi = g.row_ptr(i);
        for (std::size_t j = 0; j < g.cols; ++j) bg.v[j] += gi[j];
      }
    }
  };
  return push(std::move(out), track, track ? std::function<void()>(back) : nullptr, "add_row");
}

Var Tape::mul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) shape_error("mul", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= bv.v[i];
  bool track = rg(a) || rg(b);
  auto back = [this, a, b, out_id = nodes_.size()]() {
    const Tensor& g = nodes_[out_id].grad;
    if (rg(a)) {
      Tensor& ag = grad_buf(a.id);
      const Tensor& bv2 = value(b);
      for (std::size_t i = 0; i < g.v.size(); ++i) ag.v[i] += g.v[i] * bv2.v[i];
    }
    if (rg(b)) {
      Tensor& bg = grad_buf(b.id);
      const Tensor& av2 = value(a);
      for (std::size_t i = 0; i < g.v.size(); ++i) bg.v[i] += g.v[i] * av2.v[i];
    }
  };
  return push(std::move(out), track, track ? std::function<void()>(back) : nullptr, "mul");
}

Var Tape::scale(Var a, double c) {
  Tensor out = value(a);
  for (double& x : out.v) x *= c;
  bool track = rg(a);
  auto back = [this, a, c, out_id = nodes_.size()]() {
    const Tensor& g = nodes_[out_id].grad;
    Tensor& ag = grad_buf(a.id);
    for (std::size_t i = 0; i < g.v.size(); ++i) ag.v[i] += c * g.v[i];
  };
  return push(std::move(out), track, track ? std::function<void()>(back) : nullptr, "scale");
}

Var Tape::tanh(Var a) {
  Tensor out = value(a);
  for (double& x : out.v) x = std::tanh(x);
  bool track = rg(a);
  auto back = [this, a, out_id = nodes_.size()]() {
    const Tensor& g = nodes_[out_id].grad;
    const Tensor& y = nodes_[out_id].val;
    Tensor& ag = grad_buf(a.id);
    for (std::size_t i = 0; i < g.v.size(); ++i) ag.v[i] += g.v[i] * (1.0 - y.v[i] * y.v[i]);
  };
  return push(std::move(out), track, track ? std::function<void()>(back) : nullptr, "tanh");
}

Var Tape::sigmoid(Var a) {
  Tensor out = value(a);
  for (double& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
  bool track = rg(a);
  auto back = [this, a, out_id = nodes_.size()]() {
    const Tensor& g = nodes_[out_id].grad;
    const Tensor& y = nodes_[out_id].val;
    Tensor& ag = grad_buf(a.id);
    for (std::size_t i = 0; i < g.v.size(); ++i) ag.v[i] += g.v[i] * y.v[i] * (1.0 - y.v[i]);
  };
  return push(std::move(out), track, track ? std::function<void()>(back) : nullptr, "sigmoid");
}

Var Tape::softmax(Var a, int axis) {
  if (axis != 0 && axis != 1) throw DataError("softmax: axis must be 0 or 1");
  const Tensor& av = value(a);
  Tensor out(av.rows, av.cols);
  // max-subtraction keeps exp in range
  if (axis == 1) {
    for (std::size_t i = 0; i < av.rows; ++i) {
      const double* xi = av.row_ptr(i);
      double* oi = out.row_ptr(i);
      double mx = xi[0];
      for (std::size_t j = 1; j < av.cols; ++j) mx = std::max(mx, xi[j]);
      double sum = 0.0;
      for (std::size_t j = 0; j < av.cols; ++j) sum += (oi[j] = std::exp(xi[j] - mx));
      for (std::size_t j = 0; j < av.cols; ++j) oi[j] /= sum;
    }
  } else {
    for (std::size_t j = 0; j < av.cols; ++j) {
      double mx = av.at(0, j);
      for (std::size_t i = 1; i < av.rows; ++i) mx = std::max(mx, av.at(i, j));
      double sum = 0.0;
      for (std::size_t i = 0; i < av.rows; ++i) sum += (out.at(i, j) = std::exp(av.at(i, j) - mx));
      for (std::size_t i = 0; i < av.rows; ++i) out.at(i, j) /= sum;
    }
  }
  bool track = rg(a);
  auto back = [this, a, axis, out_id = nodes_.size()]() {
    const Tensor& g = nodes_[out_id].grad;
    const Tensor& y = nodes_[out_id].val;
    Tensor& ag = grad_buf(a.id);
    if (axis == 1) {
      for (std::size_t i = 0; i < y.rows; ++i) {
        const double* yi = y.row_ptr(i);
        const double* gi = g.row_ptr(i);
        double dot = 0.0;
        for (std::size_t j = 0; j < y.cols; ++j) dot += yi[j] * gi[j];
        double* agi = ag.row_ptr(i);
        for (std::size_t j = 0; j < y.cols; ++j) agi[j] += yi[j] * (gi[j] - dot);
      }
    } else {
      for (std::size_t j = 0; j < y.cols; ++j) {
        double dot = 0.0;
        for (std::size_t i = 0; i < y.rows; ++i) dot += y.at(i, j) * g.at(i, j);
        for (std::size_t i = 0; i < y.rows; ++i)
          ag.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
      }
    }
  };
  return push(std::move(out), track, track ? std::function<void()>(back) : nullptr, "softmax");
}

Var Tape::mean_pool(Var a, int axis) {
  if (axis != 0 && axis != 1) throw DataError("mean_pool: axis must be 0 or 1");
  const Tensor& av = value(a);
  Tensor out = axis == 0 ? Tensor(1, av.cols) : Tensor(av.rows, 1);
  if (axis == 0) {
    for (std::size_t i = 0; i < av.rows; ++i)
      for (std::size_t j = 0; j < av.cols; ++j) out.v[j] += av.at(i, j);
    for (double& x : out.v) x /= static_cast<double>(av.rows);
  } else {
    for (std::size_t i = 0; i < av.rows; ++i) {
      const double* ai = av.row_ptr(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < av.cols; ++j) acc += ai[j];
      out.v[i] = acc / static_cast<double>(av.cols);
    }
  }
  bool track = rg(a);
  auto back = [this, a, axis, out_id = nodes_.size()]() {
    const Tensor& g = nodes_[out_id].grad;
    Tensor& ag = grad_buf(a.id);
    if (axis == 0) {
      const double inv = 1.0 / static_cast<double>(ag.rows);
      for (std::size_t i = 0; i < ag.rows; ++i)
        for (std::size_t j = 0; j < ag.cols; ++j) ag.at(i, j) += g.v[j] * inv;
    } else {
      const double inv = 1.0 / static_cast<double>(ag.cols);
      for (std::size_t i = 0; i < ag.rows; ++i)
        for (std::size_t j = 0; j < ag.cols; ++j) ag.at(i, j) += g.v[i] * inv;
    }
  };
  return push(std::move(out), track, track ? std::function<void()>(back) : nullptr, "mean_pool");
}

Var Tape::mean_vars(const std::vector<Var>& xs) {
  if (xs.empty()) throw DataError("mean_vars: empty input");
  const Tensor& first = value(xs[0]);
  Tensor out(first.rows, first.cols);
  bool track = false;
  for (Var x : xs) {
    const Tensor& xv = value(x);
    if (!xv.same_shape(first)) shape_error("mean_vars", first, xv);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += xv.v[i];
    track = track || rg(x);
  }
  const double inv = 1.0 / static_cast<double>(xs.size());
  for (double& x : out.v) x *= inv;
  auto back = [this, xs, inv, out_id = nodes_.size()]() {
    const Tensor& g = nodes_[out_id].grad;
    for (Var x : xs) {
      if (!rg(x)) continue;
      Tensor& xg = grad_buf(x.id);
      for (std::size_t i = 0; i < g.v.size(); ++i) xg.v[i] += g.v[i] * inv;
    }
  };
  return push(std::move(out), track, track ? std::function<void()>(back) : nullptr, "mean_vars");
}

Var Tape::concat(const std::vector<Var>& xs, int axis) {
  if (xs.empty()) throw DataError("concat: empty input");
  if (axis != 0 && axis != 1) throw DataError("concat: axis must be 0 or 1");
  const Tensor& first = value(xs[0]);
  std::size_t rows = first.rows, cols = first.cols;
  bool track = false;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const Tensor& t = value(xs[i]);
    if (axis == 0) {
      if (t.cols != cols) shape_error("concat", first, t);
      rows += t.rows;
    } else {
      if (t.rows != rows) shape_error("concat", first, t);
      cols += t.cols;
    }
  }
  for (Var x : xs) track = track || rg(x);

  Tensor out(rows, cols);
  if (axis == 0) {
    std::size_t r = 0;
    for (Var x : xs) {
      const Tensor& t = value(x);
      std::memcpy(out.row_ptr(r), t.v.data(), t.v.size() * sizeof(double));
      r += t.rows;
    }
  } else {
    std::size_t c = 0;
    for (Var x : xs) {
      const Tensor& t = value(x);
      for (std::size_t i = 0; i < rows; ++i)
        std::memcpy(out.row_ptr(i) + c, t.row_ptr(i), t.cols * sizeof(double));
      c += t.cols;
    }
  }
  auto back = [this, xs, axis, out_id = nodes_.size()]() {
    const Tensor& g = nodes_[out_id].grad;
    std::size_t offset = 0;
    for (Var x : xs) {
      const Tensor& t = value(x);
      if (rg(x)) {
        Tensor& xg = grad_buf(x.id);
        if (axis == 0) {
          for (std::size_t i = 0; i < t.rows; ++i)
            for (std::size_t j = 0; j < t.cols; ++j) xg.at(i, j) += g.at(offset + i, j);
        } else {
          for (std::size_t i = 0; i < t.rows; ++i)
            for (std::size_t j = 0; j < t.cols; ++j) xg.at(i, j) += g.at(i, offset + j);
        }
      }
      offset += axis == 0 ? t.rows : t.cols;
    }
  };
  return push(std::move(out), track, track ? std::function<void()>(back) : nullptr, "concat");
}

Var Tape::slice_cols(Var a, std::size_t c0, std::size_t c1) {
  const Tensor& av = value(a);
  if (c0 >= c1 || c1 > av.cols)
    throw DataError("slice_cols: range [" + std::to_string(c0) + ", " + std::to_string(c1) +
                    ") out of bounds for " + av.shape_string());
  Tensor out(av.rows, c1 - c0);
  for (std::size_t i = 0; i < av.rows; ++i)
    std::memcpy(out.row_ptr(i), av.row_ptr(i) + c0, (c1 - c0) * sizeof(double));
  bool track = rg(a);
  auto back = [this, a, c0, out_id = nodes_.size()]() {
    const Tensor& g = nodes_[out_id].grad;
    Tensor& ag = grad_buf(a.id);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) ag.at(i, c0 + j) += g.at(i, j);
  };
  return push(std::move(out), track, track ? std::function<void()>(back) : nullptr, "slice_cols");
}

Var Tape::slice_rows(Var a, std::size_t r0, std::size_t r1) {
  const Tensor& av = value(a);
  if (r0 >= r1 || r1 > av.rows)
    throw DataError("slice_rows: range [" + std::to_string(r0) + ", " + std::to_string(r1) +
                    ") out of bounds for " + av.shape_string());
  Tensor out(r1 - r0, av.cols);
  std::memcpy(out.v.data(), av.row_ptr(r0), out.v.size() * sizeof(double));
  bool track = rg(a);
  auto back = [this, a, r0, out_id = nodes_.size()]() {
    const Tensor& g = nodes_[out_id].grad;
    Tensor& ag = grad_buf(a.id);
    for (std::size_t i = 0; i < g.rows; ++i) {
      double* dst = ag.row_ptr(r0 + i);
      const double* src = g.row_ptr(i);
      for (std::size_t j = 0; j < g.cols; ++j) dst[j] += src[j];
    }
  };
  return push(std::move(out), track, track ? std::function<void()>(back) : nullptr, "slice_rows");
}

Var Tape::gather_rows(Var a, std::vector<std::uint32_t> rows) {
  const Tensor& av = value(a);
  for (std::uint32_t r : rows)
    if (r >= av.rows)
      throw DataError("gather_rows: row " + std::to_string(r) + " out of bounds for " +
                      av.shape_string());
  Tensor out(rows.size(), av.cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::memcpy(out.row_ptr(i), av.row_ptr(rows[i]), av.cols * sizeof(double));
  bool track = rg(a);
  auto back = [this, a, rows = std::move(rows), out_id = nodes_.size()]() {
    const Tensor& g = nodes_[out_id].grad;
    Tensor& ag = grad_buf(a.id);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double* dst = ag.row_ptr(rows[i]);
      const double* src = g.row_ptr(i);
      for (std::size_t j = 0; j < g.cols; ++j) dst[j] += src[j];
    }
  };
  return push(std::move(out), track, track ? std::function<void()>(back) : nullptr, "gather_rows");
}

Var Tape::rowwise_dot(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) shape_error("rowwise_dot", av, bv);
  Tensor out(av.rows, 1);
  for (std::size_t i = 0; i < av.rows; ++i) {
    const double* ai = av.row_ptr(i);
    const double* bi = bv.row_ptr(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < av.cols; ++j) acc += ai[j] * bi[j];
    out.v[i] = acc;
  }
  bool track = rg(a) || rg(b);
  auto back = [this, a, b, out_id = nodes_.size()]() {
    const Tensor& g = nodes_[out_id].grad;
    const Tensor& av2 = value(a);
    const Tensor& bv2 = value(b);
    if (rg(a)) {
      Tensor& ag = grad_buf(a.id);
      for (std::size_t i = 0; i < av2.rows; ++i)
        for (std::size_t j = 0; j < av2.cols; ++j) ag.at(i, j) += g.v[i] * bv2.at(i, j);
    }
    if (rg(b)) {
      Tensor& bg = grad_buf(b.id);
      for (std::size_t i = 0; i < av2.rows; ++i)
        for (std::size_t j = 0; j < av2.cols; ++j) bg.at(i, j) += g.v[i] * av2.at(i, j);
    }
  };
  return push(std::move(out), track, track ? std::function<void()>(back) : nullptr, "rowwise_dot");
}

Var Tape::scale_rows(Var a, Var s) {
  const Tensor& av = value(a);
  const Tensor& sv = value(s);
  if (sv.rows != av.rows || sv.cols != 1) shape_error("scale_rows", av, sv);
  Tensor out = av;
  for (std::size_t i = 0; i < av.rows; ++i) {
    double* oi = out.row_ptr(i);
    for (std::size_t j = 0; j < av.cols; ++j) oi[j] *= sv.v[i];
  }
  bool track = rg(a) || rg(s);
  auto back = [this, a, s, out_id = nodes_.size()]() {
    const Tensor& g = nodes_[out_id].grad;
    const Tensor& av2 = value(a);
    const Tensor& sv2 = value(s);
    if (rg(a)) {
      Tensor& ag = grad_buf(a.id);
      for (std::size_t i = 0; i < av2.rows; ++i)
        for (std::size_t j = 0; j < av2.cols; ++j) ag.at(i, j) += g.at(i, j) * sv2.v[i];
    }
    if (rg(s)) {
      Tensor& sg = grad_buf(s.id);
      for (std::size_t i = 0; i < av2.rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < av2.cols; ++j) acc += g.at(i, j) * av2.at(i, j);
        sg.v[i] += acc;
      }
    }
  };
  return push(std::move(out), track, track ? std::function<void()>(back) : nullptr, "scale_rows");
}

Var Tape::clamp(Var a, double lo, double hi) {
  if (!(lo < hi)) throw DataError("clamp: lo must be < hi");
  const Tensor& av = value(a);
  Tensor out = av;
  for (double& x : out.v) x = std::min(hi, std::max(lo, x));
  bool track = rg(a);
  auto back = [this, a, lo, hi, out_id = nodes_.size()]() {
    const Tensor& g = nodes_[out_id].grad;
    const Tensor& av2 = value(a);
    Tensor& ag = grad_buf(a.id);
    for (std::size_t i = 0; i < g.v.size(); ++i)
      if (av2.v[i] > lo && av2.v[i] < hi) ag.v[i] += g.v[i];
  };
  return push(std::move(out), track, track ? std::function<void()>(back) : nullptr, "clamp");
}

Var Tape::bce_each(Var probs, const std::vector<double>& labels) {
  const Tensor& pv = value(probs);
  if (pv.cols != 1 || pv.rows != labels.size())
    throw DataError("bce_each: probs " + pv.shape_string() + " vs " +
                    std::to_string(labels.size()) + " labels");
  for (double y : labels)
    if (y != 0.0 && y != 1.0)
      throw DataError("bce_each: label " + format_double(y) + " not in {0, 1}");
  for (double p : pv.v)
    if (!(p > 0.0 && p < 1.0))
      throw NumericError("bce_each: probability " + format_double(p) +
                         " outside (0, 1); clamp first");
  Tensor out(pv.rows, 1);
  for (std::size_t i = 0; i < pv.rows; ++i)
    out.v[i] = labels[i] > 0.5 ? -std::log(pv.v[i]) : -std::log(1.0 - pv.v[i]);
  bool track = rg(probs);
  auto back = [this, probs, labels, out_id = nodes_.size()]() {
    const Tensor& g = nodes_[out_id].grad;
    const Tensor& pv2 = value(probs);
    Tensor& pg = grad_buf(probs.id);
    for (std::size_t i = 0; i < pv2.rows; ++i) {
      const double p = pv2.v[i];
      const double d = labels[i] > 0.5 ? -1.0 / p : 1.0 / (1.0 - p);
      pg.v[i] += g.v[i] * d;
    }
  };
  return push(std::move(out), track, track ? std::function<void()>(back) : nullptr, "bce_each");
}

void Tape::backward(Var loss) {
  if (ran_backward_) throw DataError("backward: tape already differentiated");
  ran_backward_ = true;
  const Tensor& lv = value(loss);
  if (lv.numel() != 1) throw DataError("backward: loss must be scalar, got " + lv.shape_string());
  if (!nodes_[loss.id].requires_grad)
    throw DataError("backward: loss does not depend on any tracked leaf");
  grad_buf(loss.id).v[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || !node.back) continue;
    if (node.grad.numel() == 0) continue;  // not on a path to the loss
    node.back();
  }
}

std::size_t ParamStore::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw DataError("param store: duplicate parameter '" + name + "'");
  index_.emplace(name, names_.size());
  names_.push_back(name);
  grads_.emplace_back(init.rows, init.cols);
  values_.push_back(std::move(init));
  return names_.size() - 1;
}

std::size_t ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("param store: unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grads() {
  for (Tensor& g : grads_) std::fill(g.v.begin(), g.v.end(), 0.0);
}

std::size_t ParamStore::total_coordinates() const {
  std::size_t n = 0;
  for (const Tensor& t : values_) n += t.numel();
  return n;
}

void Adam::step(ParamStore& params) {
  if (m_.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Tensor& v = params.value(i);
      m_.emplace_back(v.rows, v.cols);
      v_.emplace_back(v.rows, v.cols);
    }
  }
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = params.value(i);
    const Tensor& g = params.grad(i);
    if (!g.all_finite())
      throw NumericError("adam: non-finite gradient for parameter '" + params.name(i) + "'");
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t k = 0; k < theta.v.size(); ++k) {
      m.v[k] = config_.beta1 * m.v[k] + (1.0 - config_.beta1) * g.v[k];
      v.v[k] = config_.beta2 * v.v[k] + (1.0 - config_.beta2) * g.v[k] * g.v[k];
      const double mhat = m.v[k] / c1;
      const double vhat = v.v[k] / c2;
      theta.v[k] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

double grad_check(const std::function<double()>& loss, ParamStore& params,
                  int probe_count, double epsilon, std::uint64_t seed) {
  if (!(epsilon > 0.0)) throw DataError("grad_check: epsilon must be > 0");
  if (probe_count < 1) throw DataError("grad_check: probe_count must be >= 1");
  const std::size_t total = params.total_coordinates();
  if (total == 0) throw DataError("grad_check: no parameters");
  std::mt19937_64 rng(seed);
  double max_rel = 0.0;
  for (int probe = 0; probe < probe_count; ++probe) {
    std::size_t flat = uniform_below(rng, total);
    std::size_t pi = 0;
    while (flat >= params.value(pi).numel()) flat -= params.value(pi++).numel();
    double& coord = params.value(pi).v[flat];
    const double saved = coord;
    coord = saved + epsilon;
    const double up = loss();
    coord = saved - epsilon;
    const double down = loss();
    coord = saved;
    const double fd = (up - down) / (2.0 * epsilon);
    const double analytic = params.grad(pi).v[flat];
    const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-6});
    const double rel = std::abs(fd - analytic) / denom;
    if (std::abs(fd) < 1e-9 && std::abs(analytic) < 1e-9) continue;
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

std::string save_checkpoint(const ParamStore& params, const std::string& config_document) {
  std::string out = "fundmatch-checkpoint v1\n";
  out += "config " + std::to_string(config_document.size()) + "\n";
  out += config_document;
  out += "\nparams " + std::to_string(params.size()) + "\n";
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& t = params.value(i);
    out += params.name(i) + " " + std::to_string(t.rows) + " " + std::to_string(t.cols) + "\n";
    for (std::size_t k = 0; k < t.v.size(); ++k) {
      if (k) out += ' ';
      out += format_double(t.v[k]);
    }
    out += '\n';
  }
  return out;
}

namespace {

std::string take_line(const std::string& text, std::size_t& pos) {
  std::size_t end = text.find('\n', pos);
  if (end == std::string::npos) throw DataError("checkpoint: truncated");
  std::string line = text.substr(pos, end - pos);
  pos = end + 1;
  return line;
}

}  // namespace

std::string load_checkpoint(const std::string& text, ParamStore& params_out) {
  std::size_t pos = 0;
  if (take_line(text, pos) != "fundmatch-checkpoint v1")
    throw DataError("checkpoint: bad magic line (expected fundmatch-checkpoint v1)");
  std::string config_header = take_line(text, pos);
  if (config_header.rfind("config ", 0) != 0) throw DataError("checkpoint: missing config block");
  auto config_len = parse_int(std::string_view(config_header).substr(7));
  if (!config_len || *config_len < 0 || pos + *config_len > text.size())
    throw DataError("checkpoint: bad config length");
  std::string config = text.substr(pos, *config_len);
  pos += *config_len;
  if (pos >= text.size() || text[pos] != '\n') throw DataError("checkpoint: bad config framing");
  ++pos;
  std::string params_header = take_line(text, pos);
  if (params_header.rfind("params ", 0) != 0) throw DataError("checkpoint: missing params block");
  auto count = parse_int(std::string_view(params_header).substr(7));
  if (!count || *count < 0) throw DataError("checkpoint: bad params count");
  for (long long i = 0; i < *count; ++i) {
    auto header = split(take_line(text, pos), ' ');
    if (header.size() != 3) throw DataError("checkpoint: bad parameter header");
    auto rows = parse_int(header[1]);
    auto cols = parse_int(header[2]);
    if (!rows || !cols || *rows < 1 || *cols < 1)
      throw DataError("checkpoint: bad shape for '" + header[0] + "'");
    Tensor t(static_cast<std::size_t>(*rows), static_cast<std::size_t>(*cols));
    auto values = split(take_line(text, pos), ' ');
    if (values.size() != t.v.size())
      throw DataError("checkpoint: '" + header[0] + "' has " + std::to_string(values.size()) +
                      " values, expected " + std::to_string(t.v.size()));
    for (std::size_t k = 0; k < values.size(); ++k) {
      auto x = parse_real(values[k]);
      if (!x) throw DataError("checkpoint: bad value '" + values[k] + "'");
      t.v[k] = *x;
    }
    params_out.add(header[0], std::move(t));
  }
  return config;
}

}  // namespace fundmatch::nn
