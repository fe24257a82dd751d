#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace necti::numkit {

// Computation runs in double precision; model files store float32.
using Real = double;

// Dense row-major tensor. Rank-1 tensors behave as a single row.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, Real fill = 0);
  static Tensor matrix(std::size_t rows, std::size_t cols, Real fill = 0);
  static Tensor from_rows(std::size_t rows, std::size_t cols, std::vector<Real> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::vector<Real>& values() { return data_; }
  const std::vector<Real>& values() const { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }
  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  std::span<Real> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const Real> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  void fill(Real value);
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<Real> data_;
};

struct Parameter {
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;
};

// Named trainable tensors with gradients and Adam moments. Names iterate in
// sorted order.
class ParamStore {
 public:
  // Throws necti::Error on a duplicate name.
  Parameter& add(const std::string& name, Tensor init);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::map<std::string, Parameter>& params() { return params_; }
  const std::map<std::string, Parameter>& params() const { return params_; }

  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t step) { step_ = step; }

  void zero_grad();
  Real grad_norm() const;
  // Rescales all gradients so their global L2 norm is at most max_norm.
  // Returns the norm before clipping.
  Real clip_grad_norm(Real max_norm);
  std::size_t n_values() const;

 private:
  std::map<std::string, Parameter> params_;
  std::uint64_t step_ = 0;
};

// Adam with bias correction; zeroes gradients and increments the step.
void adam_step(ParamStore& store, Real lr, Real beta1 = 0.9, Real beta2 = 0.999,
               Real eps = 1e-8);

struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

// Tape of operations over 2-D values. Parameters are referenced, not
// copied; backward() accumulates into the owning Parameter's gradient.
class Graph {
 public:
  // Gradients are recorded only for parameters of `trainable`; parameters
  // of any other store are read as constants.
  explicit Graph(bool training = false, std::uint64_t seed = 0, ParamStore* trainable = nullptr);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool training() const { return training_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Tensor value);
  Var param(const ParamStore& store, const std::string& name);
  // Rows of an embedding table; gradients scatter back into the table.
  Var lookup(const ParamStore& store, const std::string& name, std::span<const int> rows);

  Var matmul(Var a, Var b);
  // a * transpose(b)
  Var matmul_nt(Var a, Var b);
  Var add(Var a, Var b);
  Var add_row(Var a, Var row);  // adds a 1 x c row to every row of a
  Var add_col(Var a, Var col);  // adds an r x 1 column to every column of a
  Var mul(Var a, Var b);
  Var scale(Var a, Real factor);
  Var tanh(Var a);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_cols(Var a, std::size_t begin, std::size_t count);
  Var slice_rows(Var a, std::size_t begin, std::size_t count);
  Var gather_rows(Var a, std::vector<int> rows);
  Var transpose(Var a);
  // Inverted dropout: identity unless training and p > 0.
  Var dropout(Var a, Real p);
  // Concatenates each run of `width` consecutive rows into one row.
  Var windows(Var a, std::size_t width);
  // Column-wise maximum over rows, giving 1 x c.
  Var max_rows(Var a);
  Var sum(Var a);
  // Sum over rows of -log softmax(row)[gold[row]]; 1 x 1.
  Var cross_entropy_rows(Var logits, std::vector<int> gold);
  // out[i][l] = sum_k left[i][l * k_dim + k] * right[i][k]; right is m x k_dim.
  Var pair_bilinear(Var left, Var right, std::size_t n_labels);

  const Tensor& value(Var v) const;
  Real scalar(Var v) const { return value(v)[0]; }
  // Gradient of the last backward() target with respect to v (zeros when v
  // did not contribute). Parameters report through their ParamStore entry.
  const Tensor& grad(Var v);

  // Throws necti::Error unless v is a finite 1 x 1 value.
  void backward(Var v);
  // Throws necti::Error naming `what` when v holds NaN or Inf.
  void check_finite(Var v, const std::string& what) const;

 private:
  struct Node {
    Tensor value;
    const Tensor* shared = nullptr;
    Tensor grad;
    Tensor* external_grad = nullptr;
    bool needs_grad = false;
    std::function<void()> backward;
  };

  Node& node(Var v) { return nodes_.at(v.id); }
  const Node& node(Var v) const { return nodes_.at(v.id); }
  Var push(Tensor value, bool needs_grad);
  Tensor& grad_of(Var v);
  bool needs(Var v) const { return node(v).needs_grad; }

  bool training_;
  std::mt19937_64 rng_;
  ParamStore* trainable_;
  std::deque<Node> nodes_;
};

struct GradCheckResult {
  Real max_rel_error = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  Real analytic = 0;
  Real numeric = 0;
  std::size_t n_checked = 0;
};

// Compares backward() gradients of the scalar built by `f` against central
// differences for every coordinate of every parameter (or at most
// `max_per_param` evenly strided ones). Relative error is
// |a - n| / max(|a|, |n|, 1e-6). `f` must be deterministic.
GradCheckResult grad_check(const std::function<Var(Graph&)>& f, ParamStore& store,
                           Real epsilon = 1e-4, std::size_t max_per_param = SIZE_MAX);

}  // namespace necti::numkit
