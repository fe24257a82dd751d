#include "necti/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "necti/core.hpp"

namespace necti::numkit {

namespace {

[[noreturn]] void shape_error(const std::string& op, const Tensor& a, const Tensor& b) {
  throw Error(op + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

// c += a * b
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const Real* pa = a.data();
  const Real* pb = b.data();
  Real* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    Real* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = pa[i * k + p];
      if (av == 0) continue;
      const Real* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c += a * transpose(b)
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  const Real* pa = a.data();
  const Real* pb = b.data();
  Real* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const Real* brow = pb + j * k;
      Real acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      pc[i * n + j] += acc;
    }
  }
}

// c += transpose(a) * b
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const Real* pa = a.data();
  const Real* pb = b.data();
  Real* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    const Real* brow = pb + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = pa[i * k + p];
      if (av == 0) continue;
      Real* crow = pc + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, Real fill) : shape_(std::move(shape)) {
  std::size_t n = 1;
  for (auto d : shape_) n *= d;
  data_.assign(n, fill);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, Real fill) {
  return Tensor({rows, cols}, fill);
}

Tensor Tensor::from_rows(std::size_t rows, std::size_t cols, std::vector<Real> data) {
  if (data.size() != rows * cols) throw Error("tensor data does not match shape");
  Tensor t;
  t.shape_ = {rows, cols};
  t.data_ = std::move(data);
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 0;
  return shape_.size() == 1 ? 1 : shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 0;
  return shape_.back();
}

void Tensor::fill(Real value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << ']';
  return os.str();
}

Parameter& ParamStore::add(const std::string& name, Tensor init) {
  if (params_.count(name)) throw Error("duplicate parameter '" + name + "'");
  Parameter p;
  p.grad = Tensor(init.shape());
  p.m = Tensor(init.shape());
  p.v = Tensor(init.shape());
  p.value = std::move(init);
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.grad.fill(0);
}

Real ParamStore::grad_norm() const {
  Real total = 0;
  for (const auto& [name, p] : params_) {
    for (Real g : p.grad.values()) total += g * g;
  }
  return std::sqrt(total);
}

Real ParamStore::clip_grad_norm(Real max_norm) {
  Real norm = grad_norm();
  if (norm > max_norm) {
    Real factor = max_norm / norm;
    for (auto& [name, p] : params_) {
      for (Real& g : p.grad.values()) g *= factor;
    }
  }
  return norm;
}

std::size_t ParamStore::n_values() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

void adam_step(ParamStore& store, Real lr, Real beta1, Real beta2, Real eps) {
  store.set_step(store.step() + 1);
  const Real t = static_cast<Real>(store.step());
  const Real correction1 = 1 - std::pow(beta1, t);
  const Real correction2 = 1 - std::pow(beta2, t);
  for (auto& [name, p] : store.params()) {
    Real* w = p.value.data();
    Real* g = p.grad.data();
    Real* m = p.m.data();
    Real* v = p.v.data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      m[i] = beta1 * m[i] + (1 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1 - beta2) * g[i] * g[i];
      const Real m_hat = m[i] / correction1;
      const Real v_hat = v[i] / correction2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
      g[i] = 0;
    }
  }
}

Graph::Graph(bool training, std::uint64_t seed, ParamStore* trainable)
    : training_(training), rng_(seed), trainable_(trainable) {}

Var Graph::push(Tensor value, bool needs_grad) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tensor& Graph::value(Var v) const {
  const Node& n = node(v);
  return n.shared ? *n.shared : n.value;
}

Tensor& Graph::grad_of(Var v) {
  Node& n = node(v);
  if (n.external_grad) return *n.external_grad;
  if (n.grad.size() != value(v).size() || n.grad.shape() != value(v).shape()) {
    n.grad = Tensor(value(v).shape());
  }
  return n.grad;
}

const Tensor& Graph::grad(Var v) { return grad_of(v); }

Var Graph::constant(Tensor value) { return push(std::move(value), false); }

Var Graph::param(const ParamStore& store, const std::string& name) {
  const bool record = trainable_ == &store;
  Var v = push(Tensor(), record);
  Node& n = node(v);
  if (record) {
    Parameter& parameter = trainable_->at(name);
    n.shared = &parameter.value;
    n.external_grad = &parameter.grad;
  } else {
    n.shared = &store.at(name).value;
  }
  return v;
}

Var Graph::lookup(const ParamStore& store, const std::string& name, std::span<const int> rows) {
  const Parameter& table = store.at(name);
  const std::size_t cols = table.value.cols();
  Tensor out = Tensor::matrix(rows.size(), cols);
  std::vector<int> idx(rows.begin(), rows.end());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= table.value.rows()) {
      throw Error("lookup: row " + std::to_string(idx[r]) + " out of range");
    }
    std::copy_n(table.value.data() + idx[r] * cols, cols, out.data() + r * cols);
  }
  const bool record = trainable_ == &store;
  Var v = push(std::move(out), record);
  if (!record) return v;
  Tensor* table_grad = &trainable_->at(name).grad;
  node(v).backward = [this, v, table_grad, idx = std::move(idx), cols]() {
    const Tensor& g = grad_of(v);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      Real* dst = table_grad->data() + idx[r] * cols;
      const Real* src = g.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
  };
  return v;
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.cols() != vb.rows()) shape_error("matmul", va, vb);
  Tensor out = Tensor::matrix(va.rows(), vb.cols());
  gemm_nn(va, vb, out);
  Var v = push(std::move(out), needs(a) || needs(b));
  if (needs(v)) {
    node(v).backward = [this, v, a, b]() {
      const Tensor& g = grad_of(v);
      if (needs(a)) gemm_nt(g, value(b), grad_of(a));
      if (needs(b)) gemm_tn(value(a), g, grad_of(b));
    };
  }
  return v;
}

Var Graph::matmul_nt(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.cols() != vb.cols()) shape_error("matmul_nt", va, vb);
  Tensor out = Tensor::matrix(va.rows(), vb.rows());
  gemm_nt(va, vb, out);
  Var v = push(std::move(out), needs(a) || needs(b));
  if (needs(v)) {
    node(v).backward = [this, v, a, b]() {
      const Tensor& g = grad_of(v);
      if (needs(a)) gemm_nn(g, value(b), grad_of(a));
      if (needs(b)) gemm_tn(g, value(a), grad_of(b));
    };
  }
  return v;
}

Var Graph::add(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_error("add", va, vb);
  Tensor out = Tensor::matrix(va.rows(), va.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  Var v = push(std::move(out), needs(a) || needs(b));
  if (needs(v)) {
    node(v).backward = [this, v, a, b]() {
      const Tensor& g = grad_of(v);
      for (Var x : {a, b}) {
        if (!needs(x)) continue;
        Tensor& gx = grad_of(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
    };
  }
  return v;
}

Var Graph::add_row(Var a, Var row) {
  const Tensor& va = value(a);
  const Tensor& vr = value(row);
  if (vr.size() != va.cols()) shape_error("add_row", va, vr);
  Tensor out = Tensor::matrix(va.rows(), va.cols());
  const std::size_t c = va.cols();
  for (std::size_t i = 0; i < va.rows(); ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = va[i * c + j] + vr[j];
  }
  Var v = push(std::move(out), needs(a) || needs(row));
  if (needs(v)) {
    node(v).backward = [this, v, a, row, c]() {
      const Tensor& g = grad_of(v);
      if (needs(a)) {
        Tensor& ga = grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (needs(row)) {
        Tensor& gr = grad_of(row);
        for (std::size_t i = 0; i < g.size(); ++i) gr[i % c] += g[i];
      }
    };
  }
  return v;
}

Var Graph::add_col(Var a, Var col) {
  const Tensor& va = value(a);
  const Tensor& vc = value(col);
  if (vc.size() != va.rows()) shape_error("add_col", va, vc);
  Tensor out = Tensor::matrix(va.rows(), va.cols());
  const std::size_t c = va.cols();
  for (std::size_t i = 0; i < va.rows(); ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = va[i * c + j] + vc[i];
  }
  Var v = push(std::move(out), needs(a) || needs(col));
  if (needs(v)) {
    node(v).backward = [this, v, a, col, c]() {
      const Tensor& g = grad_of(v);
      if (needs(a)) {
        Tensor& ga = grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (needs(col)) {
        Tensor& gc = grad_of(col);
        for (std::size_t i = 0; i < g.size(); ++i) gc[i / c] += g[i];
      }
    };
  }
  return v;
}

Var Graph::mul(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_error("mul", va, vb);
  Tensor out = Tensor::matrix(va.rows(), va.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  Var v = push(std::move(out), needs(a) || needs(b));
  if (needs(v)) {
    node(v).backward = [this, v, a, b]() {
      const Tensor& g = grad_of(v);
      if (needs(a)) {
        Tensor& ga = grad_of(a);
        const Tensor& vb = value(b);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
      }
      if (needs(b)) {
        Tensor& gb = grad_of(b);
        const Tensor& va = value(a);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
      }
    };
  }
  return v;
}

Var Graph::scale(Var a, Real factor) {
  const Tensor& va = value(a);
  Tensor out = Tensor::matrix(va.rows(), va.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * factor;
  Var v = push(std::move(out), needs(a));
  if (needs(v)) {
    node(v).backward = [this, v, a, factor]() {
      const Tensor& g = grad_of(v);
      Tensor& ga = grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    };
  }
  return v;
}

Var Graph::tanh(Var a) {
  const Tensor& va = value(a);
  Tensor out = Tensor::matrix(va.rows(), va.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(va[i]);
  Var v = push(std::move(out), needs(a));
  if (needs(v)) {
    node(v).backward = [this, v, a]() {
      const Tensor& g = grad_of(v);
      const Tensor& y = value(v);
      Tensor& ga = grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1 - y[i] * y[i]);
    };
  }
  return v;
}

Var Graph::relu(Var a) {
  const Tensor& va = value(a);
  Tensor out = Tensor::matrix(va.rows(), va.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] > 0 ? va[i] : 0;
  Var v = push(std::move(out), needs(a));
  if (needs(v)) {
    node(v).backward = [this, v, a]() {
      const Tensor& g = grad_of(v);
      const Tensor& x = value(a);
      Tensor& ga = grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > 0) ga[i] += g[i];
      }
    };
  }
  return v;
}

Var Graph::sigmoid(Var a) {
  const Tensor& va = value(a);
  Tensor out = Tensor::matrix(va.rows(), va.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1 / (1 + std::exp(-va[i]));
  Var v = push(std::move(out), needs(a));
  if (needs(v)) {
    node(v).backward = [this, v, a]() {
      const Tensor& g = grad_of(v);
      const Tensor& y = value(v);
      Tensor& ga = grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1 - y[i]);
    };
  }
  return v;
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t cols = 0;
  bool any = false;
  for (Var p : parts) {
    if (value(p).rows() != rows) shape_error("concat_cols", value(parts[0]), value(p));
    cols += value(p).cols();
    any = any || needs(p);
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& vp = value(p);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(vp.data() + r * vp.cols(), vp.cols(), out.data() + r * cols + offset);
    }
    offset += vp.cols();
  }
  Var v = push(std::move(out), any);
  if (any) {
    node(v).backward = [this, v, parts, rows, cols]() {
      const Tensor& g = grad_of(v);
      std::size_t offset = 0;
      for (Var p : parts) {
        const std::size_t pc = value(p).cols();
        if (needs(p)) {
          Tensor& gp = grad_of(p);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < pc; ++c) gp[r * pc + c] += g[r * cols + offset + c];
          }
        }
        offset += pc;
      }
    };
  }
  return v;
}

Var Graph::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("concat_rows: no inputs");
  const std::size_t cols = value(parts[0]).cols();
  std::size_t rows = 0;
  bool any = false;
  for (Var p : parts) {
    if (value(p).cols() != cols) shape_error("concat_rows", value(parts[0]), value(p));
    rows += value(p).rows();
    any = any || needs(p);
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& vp = value(p);
    std::copy_n(vp.data(), vp.size(), out.data() + offset);
    offset += vp.size();
  }
  Var v = push(std::move(out), any);
  if (any) {
    node(v).backward = [this, v, parts]() {
      const Tensor& g = grad_of(v);
      std::size_t offset = 0;
      for (Var p : parts) {
        const std::size_t n = value(p).size();
        if (needs(p)) {
          Tensor& gp = grad_of(p);
          for (std::size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
        }
        offset += n;
      }
    };
  }
  return v;
}

Var Graph::slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& va = value(a);
  if (begin + count > va.cols()) throw Error("slice_cols: range out of bounds");
  const std::size_t rows = va.rows(), cols = va.cols();
  Tensor out = Tensor::matrix(rows, count);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(va.data() + r * cols + begin, count, out.data() + r * count);
  }
  Var v = push(std::move(out), needs(a));
  if (needs(v)) {
    node(v).backward = [this, v, a, begin, count, rows, cols]() {
      const Tensor& g = grad_of(v);
      Tensor& ga = grad_of(a);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < count; ++c) ga[r * cols + begin + c] += g[r * count + c];
      }
    };
  }
  return v;
}

Var Graph::slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& va = value(a);
  if (begin + count > va.rows()) throw Error("slice_rows: range out of bounds");
  const std::size_t cols = va.cols();
  Tensor out = Tensor::matrix(count, cols);
  std::copy_n(va.data() + begin * cols, count * cols, out.data());
  Var v = push(std::move(out), needs(a));
  if (needs(v)) {
    node(v).backward = [this, v, a, begin, cols]() {
      const Tensor& g = grad_of(v);
      Tensor& ga = grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[begin * cols + i] += g[i];
    };
  }
  return v;
}

Var Graph::gather_rows(Var a, std::vector<int> rows) {
  const Tensor& va = value(a);
  const std::size_t cols = va.cols();
  Tensor out = Tensor::matrix(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || static_cast<std::size_t>(rows[r]) >= va.rows()) {
      throw Error("gather_rows: row out of range");
    }
    std::copy_n(va.data() + rows[r] * cols, cols, out.data() + r * cols);
  }
  Var v = push(std::move(out), needs(a));
  if (needs(v)) {
    node(v).backward = [this, v, a, rows = std::move(rows), cols]() {
      const Tensor& g = grad_of(v);
      Tensor& ga = grad_of(a);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) ga[rows[r] * cols + c] += g[r * cols + c];
      }
    };
  }
  return v;
}

Var Graph::transpose(Var a) {
  const Tensor& va = value(a);
  const std::size_t rows = va.rows(), cols = va.cols();
  Tensor out = Tensor::matrix(cols, rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = va[r * cols + c];
  }
  Var v = push(std::move(out), needs(a));
  if (needs(v)) {
    node(v).backward = [this, v, a, rows, cols]() {
      const Tensor& g = grad_of(v);
      Tensor& ga = grad_of(a);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[c * rows + r];
      }
    };
  }
  return v;
}

Var Graph::dropout(Var a, Real p) {
  if (!training_ || p <= 0) return a;
  if (p >= 1) throw Error("dropout probability must be below 1");
  const Tensor& va = value(a);
  Tensor mask = Tensor::matrix(va.rows(), va.cols());
  std::uniform_real_distribution<Real> uniform(0.0, 1.0);
  const Real keep_scale = 1 / (1 - p);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = uniform(rng_) < p ? 0 : keep_scale;
  Var m = constant(std::move(mask));
  return mul(a, m);
}

Var Graph::windows(Var a, std::size_t width) {
  const Tensor& va = value(a);
  if (width == 0 || va.rows() < width) throw Error("windows: not enough rows");
  const std::size_t cols = va.cols();
  const std::size_t out_rows = va.rows() - width + 1;
  Tensor out = Tensor::matrix(out_rows, width * cols);
  for (std::size_t r = 0; r < out_rows; ++r) {
    std::copy_n(va.data() + r * cols, width * cols, out.data() + r * width * cols);
  }
  Var v = push(std::move(out), needs(a));
  if (needs(v)) {
    node(v).backward = [this, v, a, width, cols, out_rows]() {
      const Tensor& g = grad_of(v);
      Tensor& ga = grad_of(a);
      for (std::size_t r = 0; r < out_rows; ++r) {
        for (std::size_t i = 0; i < width * cols; ++i) ga[r * cols + i] += g[r * width * cols + i];
      }
    };
  }
  return v;
}

Var Graph::max_rows(Var a) {
  const Tensor& va = value(a);
  const std::size_t rows = va.rows(), cols = va.cols();
  if (rows == 0) throw Error("max_rows: empty input");
  Tensor out = Tensor::matrix(1, cols);
  std::vector<std::size_t> argmax(cols, 0);
  for (std::size_t c = 0; c < cols; ++c) {
    Real best = va[c];
    for (std::size_t r = 1; r < rows; ++r) {
      if (va[r * cols + c] > best) {
        best = va[r * cols + c];
        argmax[c] = r;
      }
    }
    out[c] = best;
  }
  Var v = push(std::move(out), needs(a));
  if (needs(v)) {
    node(v).backward = [this, v, a, argmax = std::move(argmax), cols]() {
      const Tensor& g = grad_of(v);
      Tensor& ga = grad_of(a);
      for (std::size_t c = 0; c < cols; ++c) ga[argmax[c] * cols + c] += g[c];
    };
  }
  return v;
}

Var Graph::sum(Var a) {
  const Tensor& va = value(a);
  Real total = std::accumulate(va.values().begin(), va.values().end(), Real{0});
  Var v = push(Tensor::matrix(1, 1, total), needs(a));
  if (needs(v)) {
    node(v).backward = [this, v, a]() {
      const Real g = grad_of(v)[0];
      Tensor& ga = grad_of(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    };
  }
  return v;
}

Var Graph::cross_entropy_rows(Var logits, std::vector<int> gold) {
  const Tensor& x = value(logits);
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gold.size() != rows) throw Error("cross_entropy_rows: gold size mismatch");
  Tensor probs = Tensor::matrix(rows, cols);
  Real total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (gold[r] < 0 || static_cast<std::size_t>(gold[r]) >= cols) {
      throw Error("cross_entropy_rows: gold index out of range");
    }
    Real mx = x[r * cols];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, x[r * cols + c]);
    Real z = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      probs[r * cols + c] = std::exp(x[r * cols + c] - mx);
      z += probs[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) probs[r * cols + c] /= z;
    total += -(x[r * cols + gold[r]] - mx - std::log(z));
  }
  Var v = push(Tensor::matrix(1, 1, total), needs(logits));
  if (needs(v)) {
    node(v).backward = [this, v, logits, probs = std::move(probs), gold = std::move(gold), cols]() {
      const Real g = grad_of(v)[0];
      Tensor& gx = grad_of(logits);
      for (std::size_t i = 0; i < probs.size(); ++i) gx[i] += g * probs[i];
      for (std::size_t r = 0; r < gold.size(); ++r) gx[r * cols + gold[r]] -= g;
    };
  }
  return v;
}

Var Graph::pair_bilinear(Var left, Var right, std::size_t n_labels) {
  const Tensor& l = value(left);
  const Tensor& r = value(right);
  const std::size_t m = r.rows(), k = r.cols();
  if (l.rows() != m || l.cols() != n_labels * k) shape_error("pair_bilinear", l, r);
  Tensor out = Tensor::matrix(m, n_labels);
  for (std::size_t i = 0; i < m; ++i) {
    const Real* rrow = r.data() + i * k;
    for (std::size_t lab = 0; lab < n_labels; ++lab) {
      const Real* lrow = l.data() + i * n_labels * k + lab * k;
      Real acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += lrow[p] * rrow[p];
      out[i * n_labels + lab] = acc;
    }
  }
  Var v = push(std::move(out), needs(left) || needs(right));
  if (needs(v)) {
    node(v).backward = [this, v, left, right, m, k, n_labels]() {
      const Tensor& g = grad_of(v);
      const Tensor& l = value(left);
      const Tensor& r = value(right);
      if (needs(left)) {
        Tensor& gl = grad_of(left);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t lab = 0; lab < n_labels; ++lab) {
            const Real gv = g[i * n_labels + lab];
            Real* dst = gl.data() + i * n_labels * k + lab * k;
            const Real* rrow = r.data() + i * k;
            for (std::size_t p = 0; p < k; ++p) dst[p] += gv * rrow[p];
          }
        }
      }
      if (needs(right)) {
        Tensor& gr = grad_of(right);
        for (std::size_t i = 0; i < m; ++i) {
          Real* dst = gr.data() + i * k;
          for (std::size_t lab = 0; lab < n_labels; ++lab) {
            const Real gv = g[i * n_labels + lab];
            const Real* lrow = l.data() + i * n_labels * k + lab * k;
            for (std::size_t p = 0; p < k; ++p) dst[p] += gv * lrow[p];
          }
        }
      }
    };
  }
  return v;
}

void Graph::check_finite(Var v, const std::string& what) const {
  if (!value(v).all_finite()) throw Error("non-finite values in " + what);
}

void Graph::backward(Var v) {
  const Tensor& out = value(v);
  if (out.size() != 1) throw Error("backward: target must be a scalar");
  check_finite(v, "loss");
  if (!needs(v)) return;
  grad_of(v)[0] += 1;
  for (std::size_t i = v.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.backward) continue;
    if (n.grad.size() == 0 && !n.external_grad) continue;  // received no gradient
    n.backward();
  }
}

GradCheckResult grad_check(const std::function<Var(Graph&)>& f, ParamStore& store, Real epsilon,
                           std::size_t max_per_param) {
  store.zero_grad();
  {
    Graph g(false, 0, &store);
    Var loss = f(g);
    g.backward(loss);
  }
  std::map<std::string, Tensor> analytic;
  for (const auto& [name, p] : store.params()) analytic.emplace(name, p.grad);
  store.zero_grad();

  auto evaluate = [&]() {
    Graph g(false);
    return g.scalar(f(g));
  };

  GradCheckResult result;
  for (auto& [name, p] : store.params()) {
    const std::size_t n = p.value.size();
    const std::size_t stride = max_per_param >= n ? 1 : (n + max_per_param - 1) / max_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      const Real saved = p.value[i];
      p.value[i] = saved + epsilon;
      const Real plus = evaluate();
      p.value[i] = saved - epsilon;
      const Real minus = evaluate();
      p.value[i] = saved;
      const Real numeric = (plus - minus) / (2 * epsilon);
      const Real a = analytic.at(name)[i];
      const Real denom = std::max({std::abs(a), std::abs(numeric), Real{1e-6}});
      const Real rel = std::abs(a - numeric) / denom;
      ++result.n_checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = name;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace necti::numkit
