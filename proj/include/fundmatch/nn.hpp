#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace fundmatch::nn {

// Dense row-major 2-D tensor of doubles. Vectors are (1 x n) rows or
// (n x 1) columns; scalars are (1 x 1).
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

  static Tensor scalar(double x) {
    Tensor t(1, 1);
    t.v[0] = x;
    return t;
  }
  static Tensor row(const std::vector<double>& values);

  std::size_t numel() const { return rows * cols; }
  double& at(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
  double* row_ptr(std::size_t i) { return v.data() + i * cols; }
  const double* row_ptr(std::size_t i) const { return v.data() + i * cols; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_string() const;
  bool all_finite() const;
};

// Raw accumulate helpers (out must be preshaped).
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& out);  // out += a * b
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& out);  // out += a * b^T
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& out);  // out += a^T * b

struct Var {
  std::uint32_t id = 0;
};

// Reverse-mode tape. Build a computation with the op methods, then call
// backward(loss) once; gradients of tracked leaves are read with grad().
// Every op validates shapes up front and (optionally) checks outputs for
// non-finite values.
class Tape {
public:
  explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}

  Var constant(Tensor value);             // not differentiated through
  Var leaf(const Tensor& value);          // gradient tracked

  Var matmul(Var a, Var b);
  Var linear(Var x, Var w, Var b);        // x*w + row-broadcast b
  Var add(Var a, Var b);
  Var add_row(Var a, Var b);              // a (m x n) + b (1 x n)
  Var mul(Var a, Var b);                  // elementwise
  Var scale(Var a, double c);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var softmax(Var a, int axis);           // axis 1 = within each row
  Var mean_pool(Var a, int axis);         // axis 0 -> (1 x n), axis 1 -> (m x 1)
  Var mean_vars(const std::vector<Var>& xs);  // elementwise mean of same-shape vars
  Var concat(const std::vector<Var>& xs, int axis);
  Var slice_cols(Var a, std::size_t c0, std::size_t c1);
  Var slice_rows(Var a, std::size_t r0, std::size_t r1);
  Var gather_rows(Var a, std::vector<std::uint32_t> rows);
  Var rowwise_dot(Var a, Var b);          // (m x k, m x k) -> (m x 1)
  Var scale_rows(Var a, Var s);           // row i of a times s(i, 0)
  Var clamp(Var a, double lo, double hi);
  // Per-example binary cross-entropy; probs (m x 1) must already sit inside
  // (0, 1), labels must be 0 or 1.
  Var bce_each(Var probs, const std::vector<double>& labels);

  void backward(Var loss);

  const Tensor& value(Var x) const { return nodes_[x.id].val; }
  const Tensor& grad(Var x) const;
  // False when the var was never on a path to the loss.
  bool has_grad(Var x) const { return nodes_[x.id].grad.numel() != 0; }
  std::size_t node_count() const { return nodes_.size(); }

private:
  struct Node {
    Tensor val;
    Tensor grad;
    bool requires_grad = false;
    std::function<void()> back;
  };

  Var push(Tensor value, bool requires_grad, std::function<void()> back,
           const char* op_name);
  Tensor& grad_buf(std::uint32_t id);
  bool rg(Var x) const { return nodes_[x.id].requires_grad; }

  std::vector<Node> nodes_;
  bool check_finite_;
  bool ran_backward_ = false;
};

// Named trainable tensors with gradient buffers.
class ParamStore {
public:
  std::size_t add(const std::string& name, Tensor init);
  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor& value(std::size_t i) { return values_[i]; }
  const Tensor& value(std::size_t i) const { return values_[i]; }
  Tensor& grad(std::size_t i) { return grads_[i]; }
  const Tensor& grad(std::size_t i) const { return grads_[i]; }
  Tensor& value(const std::string& name) { return values_[index_of(name)]; }

  void zero_grads();
  std::size_t total_coordinates() const;

private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. step() consumes the gradients currently in the
// store; a non-finite gradient aborts with the parameter name.
class Adam {
public:
  explicit Adam(const AdamConfig& config) : config_(config) {}

  void step(ParamStore& params);
  long step_count() const { return step_; }

private:
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long step_ = 0;
};

// Central-difference check of the analytic gradients currently stored in
// `params` against `loss` (a pure re-evaluation at the current values).
// Probes `probe_count` random coordinates; returns the max relative error.
double grad_check(const std::function<double()>& loss, ParamStore& params,
                  int probe_count, double epsilon, std::uint64_t seed = 1);

// Versioned text checkpoint: every parameter plus an opaque config document
// supplied by the caller. Values round-trip exactly.
std::string save_checkpoint(const ParamStore& params, const std::string& config_document);
// Returns the embedded config document; params_out receives the arrays.
std::string load_checkpoint(const std::string& text, ParamStore& params_out);

}  // namespace fundmatch::nn
