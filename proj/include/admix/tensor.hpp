#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "admix/rng.hpp"

#ifdef ADMIX_WITH_CBLAS
#include <cblas.h>
#endif

namespace admix {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (const auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

// Integer matrix carrying token ids (rows x cols, row-major).
struct IdMat {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<int32_t> v;

  IdMat() = default;
  IdMat(int64_t r, int64_t c, int32_t fill = 0)
      : rows(r), cols(c), v(static_cast<size_t>(r * c), fill) {}

  int32_t& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
  int32_t at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols + c)]; }
};

// Boolean matrix (padding masks and friends).
struct BoolMat {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<uint8_t> v;

  BoolMat() = default;
  BoolMat(int64_t r, int64_t c, bool fill = false)
      : rows(r), cols(c), v(static_cast<size_t>(r * c), fill ? 1 : 0) {}

  uint8_t& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
  bool at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols + c)] != 0; }
  int64_t count_true() const {
    int64_t n = 0;
    for (const auto b : v) n += b;
    return n;
  }
};

namespace detail {

// Thread-local switch: when off, ops skip building the backward graph
// (used by decoding and other pure-inference paths).
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

#ifdef ADMIX_WITH_CBLAS
inline void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha,
                 const double* a, int64_t lda, const double* b, int64_t ldb, double beta,
                 double* c, int64_t ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb), beta,
              c, static_cast<int>(ldc));
}

inline void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha,
                 const float* a, int64_t lda, const float* b, int64_t ldb, float beta, float* c,
                 int64_t ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb), beta,
              c, static_cast<int>(ldc));
}
#else
template <class Real>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, Real alpha, const Real* a,
          int64_t lda, const Real* b, int64_t ldb, Real beta, Real* c, int64_t ldc) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      Real acc = 0;
      for (int64_t p = 0; p < k; ++p) {
        const Real av = trans_a ? a[p * lda + i] : a[i * lda + p];
        const Real bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
        acc += av * bv;
      }
      c[i * ldc + j] = beta * c[i * ldc + j] + alpha * acc;
    }
  }
}
#endif

}  // namespace detail

struct NoGradGuard {
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Dense tensor with reverse-mode automatic differentiation. Value semantics
// over a shared node: copies alias the same storage and graph record. A
// scalar is represented by an empty shape (numel 1).
template <class Real>
class TensorT {
 public:
  struct Node {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;
    bool requires_grad = false;
    std::string name;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    void ensure_grad() {
      if (grad.size() != value.size()) grad.assign(value.size(), Real(0));
    }
  };

  TensorT() = default;

  explicit TensorT(Shape shape, Real fill = Real(0)) : node_(std::make_shared<Node>()) {
    node_->shape = std::move(shape);
    node_->value.assign(static_cast<size_t>(numel(node_->shape)), fill);
  }

  TensorT(Shape shape, std::vector<Real> data) : node_(std::make_shared<Node>()) {
    if (numel(shape) != static_cast<int64_t>(data.size()))
      throw std::runtime_error("tensor: data size " + std::to_string(data.size()) +
                               " does not match shape " + shape_str(shape));
    node_->shape = std::move(shape);
    node_->value = std::move(data);
  }

  static TensorT scalar(Real v) { return TensorT(Shape{}, std::vector<Real>{v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t size() const { return static_cast<int64_t>(node_->value.size()); }
  int64_t dim(size_t i) const { return node_->shape[i]; }

  std::vector<Real>& data() { return node_->value; }
  const std::vector<Real>& data() const { return node_->value; }
  std::vector<Real>& grad() { return node_->grad; }
  const std::vector<Real>& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }

  Real item() const {
    if (size() != 1) throw std::runtime_error("tensor: item() on non-scalar " + shape_str(shape()));
    return node_->value[0];
  }

  const std::string& name() const { return node_->name; }
  TensorT& set_name(std::string n) {
    node_->name = std::move(n);
    return *this;
  }

  bool requires_grad() const { return node_->requires_grad; }
  TensorT& set_requires_grad(bool b) {
    node_->requires_grad = b;
    return *this;
  }

  void zero_grad() { node_->grad.clear(); }

  // Value copy detached from the graph. Gradients do not flow through it.
  TensorT detach() const {
    TensorT out(node_->shape, node_->value);
    return out;
  }

  std::shared_ptr<Node> node() const { return node_; }

  // Reverse pass from a scalar. The backward graph is released afterwards so
  // intermediate buffers are reclaimed once the result tensor goes away.
  void backward() {
    if (size() != 1)
      throw std::runtime_error("backward: loss must be scalar, got " + shape_str(shape()));
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    topo(node_.get(), seen, order);
    node_->ensure_grad();
    node_->grad[0] = Real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward) n->backward(*n);
    }
    for (Node* n : order) {
      n->backward = nullptr;
      n->parents.clear();
    }
  }

  // Internal: wire a new op result into the graph.
  static TensorT make_op(Shape shape, std::vector<Real> value,
                         std::vector<std::shared_ptr<Node>> parents,
                         std::function<void(Node&)> backward) {
    TensorT out(std::move(shape), std::move(value));
    if (detail::grad_mode()) {
      bool need = false;
      for (const auto& p : parents)
        if (p->requires_grad) need = true;
      if (need) {
        out.node_->requires_grad = true;
        out.node_->parents = std::move(parents);
        out.node_->backward = std::move(backward);
      }
    }
    return out;
  }

 private:
  static void topo(Node* n, std::unordered_set<Node*>& seen, std::vector<Node*>& order) {
    if (!n || seen.count(n)) return;
    seen.insert(n);
    // explicit stack to survive deep graphs
    struct Frame {
      Node* node;
      size_t next;
    };
    std::vector<Frame> stack{{n, 0}};
    seen.insert(n);
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < f.node->parents.size()) {
        Node* p = f.node->parents[f.next++].get();
        if (p && !seen.count(p)) {
          seen.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node> node_;
};

namespace detail {

template <class Real>
void check_same_shape(const TensorT<Real>& a, const TensorT<Real>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::runtime_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and scalar ops
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> add(const TensorT<Real>& a, const TensorT<Real>& b) {
  using T = TensorT<Real>;
  // same shape, or b is a vector broadcast over the last axis (bias add)
  const bool bias = b.shape().size() == 1 && !a.shape().empty() &&
                    a.shape().back() == b.shape()[0] && a.shape() != b.shape();
  if (!bias) detail::check_same_shape(a, b, "add");
  std::vector<Real> out(a.data());
  const int64_t n = static_cast<int64_t>(out.size());
  if (bias) {
    const int64_t c = b.shape()[0];
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] += b.data()[static_cast<size_t>(i % c)];
  } else {
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] += b.data()[static_cast<size_t>(i)];
  }
  auto an = a.node(), bn = b.node();
  return T::make_op(a.shape(), std::move(out), {an, bn}, [an, bn, bias](typename T::Node& o) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      if (bias) {
        const size_t c = bn->value.size();
        for (size_t i = 0; i < o.grad.size(); ++i) bn->grad[i % c] += o.grad[i];
      } else {
        for (size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] += o.grad[i];
      }
    }
  });
}

template <class Real>
TensorT<Real> sub(const TensorT<Real>& a, const TensorT<Real>& b) {
  using T = TensorT<Real>;
  detail::check_same_shape(a, b, "sub");
  std::vector<Real> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
  auto an = a.node(), bn = b.node();
  return T::make_op(a.shape(), std::move(out), {an, bn}, [an, bn](typename T::Node& o) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] -= o.grad[i];
    }
  });
}

template <class Real>
TensorT<Real> mul(const TensorT<Real>& a, const TensorT<Real>& b) {
  using T = TensorT<Real>;
  detail::check_same_shape(a, b, "mul");
  std::vector<Real> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
  auto an = a.node(), bn = b.node();
  return T::make_op(a.shape(), std::move(out), {an, bn}, [an, bn](typename T::Node& o) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] += o.grad[i] * an->value[i];
    }
  });
}

template <class Real>
TensorT<Real> scale(const TensorT<Real>& a, double c) {
  using T = TensorT<Real>;
  std::vector<Real> out(a.data());
  const Real rc = static_cast<Real>(c);
  for (auto& v : out) v *= rc;
  auto an = a.node();
  return T::make_op(a.shape(), std::move(out), {an}, [an, rc](typename T::Node& o) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] * rc;
  });
}

// Per-row scale of a tensor whose leading axis indexes rows ([B, ...]).
template <class Real>
TensorT<Real> scale_rows(const TensorT<Real>& a, const std::vector<Real>& row_factors) {
  using T = TensorT<Real>;
  if (a.shape().empty() || a.shape()[0] != static_cast<int64_t>(row_factors.size()))
    throw std::runtime_error("scale_rows: leading axis " + shape_str(a.shape()) +
                             " does not match " + std::to_string(row_factors.size()) + " factors");
  const int64_t stride = numel(a.shape()) / a.shape()[0];
  std::vector<Real> out(a.data());
  for (int64_t r = 0; r < a.shape()[0]; ++r) {
    const Real f = row_factors[static_cast<size_t>(r)];
    for (int64_t i = 0; i < stride; ++i) out[static_cast<size_t>(r * stride + i)] *= f;
  }
  auto an = a.node();
  auto factors = row_factors;
  return T::make_op(a.shape(), std::move(out), {an}, [an, factors, stride](typename T::Node& o) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t r = 0; r < factors.size(); ++r)
      for (int64_t i = 0; i < stride; ++i) {
        const size_t k = r * static_cast<size_t>(stride) + static_cast<size_t>(i);
        an->grad[k] += o.grad[k] * factors[r];
      }
  });
}

template <class Real>
TensorT<Real> elem_log(const TensorT<Real>& a) {
  using T = TensorT<Real>;
  std::vector<Real> out(a.data());
  for (auto& v : out) v = std::log(v);
  auto an = a.node();
  return T::make_op(a.shape(), std::move(out), {an}, [an](typename T::Node& o) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] / an->value[i];
  });
}

template <class Real>
TensorT<Real> elem_exp(const TensorT<Real>& a) {
  using T = TensorT<Real>;
  std::vector<Real> out(a.data());
  for (auto& v : out) v = std::exp(v);
  auto an = a.node();
  return T::make_op(a.shape(), std::move(out), {an}, [an](typename T::Node& o) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] * o.value[i];
  });
}

template <class Real>
TensorT<Real> relu(const TensorT<Real>& a) {
  using T = TensorT<Real>;
  std::vector<Real> out(a.data());
  for (auto& v : out) v = v > Real(0) ? v : Real(0);
  auto an = a.node();
  return T::make_op(a.shape(), std::move(out), {an}, [an](typename T::Node& o) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < o.grad.size(); ++i)
      if (an->value[i] > Real(0)) an->grad[i] += o.grad[i];
  });
}

// max(x, floor). Clamped entries get zero gradient.
template <class Real>
TensorT<Real> clamp_min(const TensorT<Real>& a, double floor) {
  using T = TensorT<Real>;
  const Real f = static_cast<Real>(floor);
  std::vector<Real> out(a.data());
  for (auto& v : out) v = v > f ? v : f;
  auto an = a.node();
  return T::make_op(a.shape(), std::move(out), {an}, [an, f](typename T::Node& o) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < o.grad.size(); ++i)
      if (an->value[i] > f) an->grad[i] += o.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> sum_all(const TensorT<Real>& a) {
  using T = TensorT<Real>;
  Real s = 0;
  for (const auto v : a.data()) s += v;
  auto an = a.node();
  return T::make_op(Shape{}, {s}, {an}, [an](typename T::Node& o) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    const Real g = o.grad[0];
    for (auto& v : an->grad) v += g;
  });
}

template <class Real>
TensorT<Real> sum_last(const TensorT<Real>& a) {
  using T = TensorT<Real>;
  if (a.shape().empty()) throw std::runtime_error("sum_last: need at least one axis");
  const int64_t c = a.shape().back();
  const int64_t rows = numel(a.shape()) / c;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  std::vector<Real> out(static_cast<size_t>(rows), Real(0));
  for (int64_t r = 0; r < rows; ++r) {
    Real s = 0;
    for (int64_t i = 0; i < c; ++i) s += a.data()[static_cast<size_t>(r * c + i)];
    out[static_cast<size_t>(r)] = s;
  }
  auto an = a.node();
  return T::make_op(std::move(out_shape), std::move(out), {an}, [an, c](typename T::Node& o) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t r = 0; r < o.grad.size(); ++r) {
      const Real g = o.grad[r];
      for (int64_t i = 0; i < c; ++i) an->grad[r * static_cast<size_t>(c) + static_cast<size_t>(i)] += g;
    }
  });
}

// Mean over the last axis, keeping the reduced axis with extent 1.
template <class Real>
TensorT<Real> mean_last_keepdim(const TensorT<Real>& a) {
  auto s = sum_last(a);
  auto m = scale(s, 1.0 / static_cast<double>(a.shape().back()));
  Shape shp = a.shape();
  shp.back() = 1;
  return reshape(m, shp);
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> reshape(const TensorT<Real>& a, Shape new_shape) {
  using T = TensorT<Real>;
  if (numel(new_shape) != numel(a.shape()))
    throw std::runtime_error("reshape: cannot view " + shape_str(a.shape()) + " as " +
                             shape_str(new_shape));
  auto an = a.node();
  return T::make_op(std::move(new_shape), a.data(), {an}, [an](typename T::Node& o) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
  });
}

namespace detail {

inline std::vector<int64_t> row_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[static_cast<size_t>(i)] = st[static_cast<size_t>(i + 1)] * s[static_cast<size_t>(i + 1)];
  return st;
}

// Copy with two axes exchanged; fills `out` (sized already).
template <class Real>
void transpose_copy(const Shape& in_shape, const std::vector<Real>& in, size_t ax_a, size_t ax_b,
                    std::vector<Real>& out) {
  Shape out_shape = in_shape;
  std::swap(out_shape[ax_a], out_shape[ax_b]);
  const auto in_st = row_strides(in_shape);
  const auto out_st = row_strides(out_shape);
  const size_t rank = in_shape.size();
  const int64_t n = numel(in_shape);
  std::vector<int64_t> idx(rank, 0);
  for (int64_t flat = 0; flat < n; ++flat) {
    // decompose flat index in input space
    int64_t rem = flat;
    for (size_t d = 0; d < rank; ++d) {
      idx[d] = rem / in_st[d];
      rem %= in_st[d];
    }
    std::swap(idx[ax_a], idx[ax_b]);
    int64_t off = 0;
    for (size_t d = 0; d < rank; ++d) off += idx[d] * out_st[d];
    out[static_cast<size_t>(off)] = in[static_cast<size_t>(flat)];
  }
}

}  // namespace detail

template <class Real>
TensorT<Real> transpose(const TensorT<Real>& a, size_t ax_a, size_t ax_b) {
  using T = TensorT<Real>;
  const size_t rank = a.shape().size();
  if (ax_a >= rank || ax_b >= rank)
    throw std::runtime_error("transpose: axis out of range for " + shape_str(a.shape()));
  Shape out_shape = a.shape();
  std::swap(out_shape[ax_a], out_shape[ax_b]);
  std::vector<Real> out(a.data().size());
  detail::transpose_copy(a.shape(), a.data(), ax_a, ax_b, out);
  auto an = a.node();
  Shape saved = out_shape;
  return T::make_op(std::move(out_shape), std::move(out), {an},
                    [an, saved, ax_a, ax_b](typename T::Node& o) {
                      if (!an->requires_grad) return;
                      an->ensure_grad();
                      std::vector<Real> tmp(o.grad.size());
                      detail::transpose_copy(saved, o.grad, ax_a, ax_b, tmp);
                      for (size_t i = 0; i < tmp.size(); ++i) an->grad[i] += tmp[i];
                    });
}

// ---------------------------------------------------------------------------
// Matmul: a is [..., m, k]; b is [k, n] or [..., k, n] with matching batch.
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> matmul(const TensorT<Real>& a, const TensorT<Real>& b) {
  using T = TensorT<Real>;
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2)
    throw std::runtime_error("matmul: need rank >= 2, got " + shape_str(as) + " and " +
                             shape_str(bs));
  const int64_t m = as[as.size() - 2];
  const int64_t k = as[as.size() - 1];
  const int64_t kb = bs[bs.size() - 2];
  const int64_t n = bs[bs.size() - 1];
  const bool b_is_mat = bs.size() == 2;
  if (k != kb)
    throw std::runtime_error("matmul: inner extents differ, " + shape_str(as) + " x " +
                             shape_str(bs));
  if (!b_is_mat && !std::equal(as.begin(), as.end() - 2, bs.begin(), bs.end() - 2))
    throw std::runtime_error("matmul: batch extents differ, " + shape_str(as) + " x " +
                             shape_str(bs));
  const int64_t batch = numel(as) / (m * k);
  Shape out_shape(as.begin(), as.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<Real> out(static_cast<size_t>(batch * m * n), Real(0));
  for (int64_t g = 0; g < batch; ++g) {
    const Real* pa = a.data().data() + g * m * k;
    const Real* pb = b.data().data() + (b_is_mat ? 0 : g * k * n);
    detail::gemm(false, false, m, n, k, Real(1), pa, k, pb, n, Real(0),
                 out.data() + g * m * n, n);
  }
  auto an = a.node(), bn = b.node();
  return T::make_op(std::move(out_shape), std::move(out), {an, bn},
                    [an, bn, m, n, k, batch, b_is_mat](typename T::Node& o) {
                      if (an->requires_grad) {
                        an->ensure_grad();
                        // dA = dC * B^T
                        for (int64_t g = 0; g < batch; ++g) {
                          const Real* pc = o.grad.data() + g * m * n;
                          const Real* pb = bn->value.data() + (b_is_mat ? 0 : g * k * n);
                          detail::gemm(false, true, m, k, n, Real(1), pc, n, pb, n, Real(1),
                                       an->grad.data() + g * m * k, k);
                        }
                      }
                      if (bn->requires_grad) {
                        bn->ensure_grad();
                        // dB = A^T * dC (accumulated over batch when b is a matrix)
                        for (int64_t g = 0; g < batch; ++g) {
                          const Real* pa = an->value.data() + g * m * k;
                          const Real* pc = o.grad.data() + g * m * n;
                          detail::gemm(true, false, k, n, m, Real(1), pa, k, pc, n, Real(1),
                                       bn->grad.data() + (b_is_mat ? 0 : g * k * n), n);
                        }
                      }
                    });
}

// ---------------------------------------------------------------------------
// Softmax family (last axis)
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> softmax(const TensorT<Real>& a) {
  using T = TensorT<Real>;
  if (a.shape().empty()) throw std::runtime_error("softmax: need at least one axis");
  const int64_t c = a.shape().back();
  const int64_t rows = numel(a.shape()) / c;
  std::vector<Real> out(a.data().size());
  for (int64_t r = 0; r < rows; ++r) {
    const Real* x = a.data().data() + r * c;
    Real* y = out.data() + r * c;
    Real mx = x[0];
    for (int64_t i = 1; i < c; ++i) mx = std::max(mx, x[i]);
    Real s = 0;
    for (int64_t i = 0; i < c; ++i) {
      y[i] = std::exp(x[i] - mx);
      s += y[i];
    }
    const Real inv = Real(1) / s;
    for (int64_t i = 0; i < c; ++i) y[i] *= inv;
  }
  auto an = a.node();
  return T::make_op(a.shape(), std::move(out), {an}, [an, c](typename T::Node& o) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    const int64_t rows = static_cast<int64_t>(o.value.size()) / c;
    for (int64_t r = 0; r < rows; ++r) {
      const Real* y = o.value.data() + r * c;
      const Real* dy = o.grad.data() + r * c;
      Real dot = 0;
      for (int64_t i = 0; i < c; ++i) dot += dy[i] * y[i];
      Real* dx = an->grad.data() + r * c;
      for (int64_t i = 0; i < c; ++i) dx[i] += y[i] * (dy[i] - dot);
    }
  });
}

template <class Real>
TensorT<Real> log_softmax(const TensorT<Real>& a) {
  using T = TensorT<Real>;
  if (a.shape().empty()) throw std::runtime_error("log_softmax: need at least one axis");
  const int64_t c = a.shape().back();
  const int64_t rows = numel(a.shape()) / c;
  std::vector<Real> out(a.data().size());
  for (int64_t r = 0; r < rows; ++r) {
    const Real* x = a.data().data() + r * c;
    Real* y = out.data() + r * c;
    Real mx = x[0];
    for (int64_t i = 1; i < c; ++i) mx = std::max(mx, x[i]);
    Real s = 0;
    for (int64_t i = 0; i < c; ++i) s += std::exp(x[i] - mx);
    const Real lse = mx + std::log(s);
    for (int64_t i = 0; i < c; ++i) y[i] = x[i] - lse;
  }
  auto an = a.node();
  return T::make_op(a.shape(), std::move(out), {an}, [an, c](typename T::Node& o) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    const int64_t rows = static_cast<int64_t>(o.value.size()) / c;
    for (int64_t r = 0; r < rows; ++r) {
      const Real* y = o.value.data() + r * c;
      const Real* dy = o.grad.data() + r * c;
      Real s = 0;
      for (int64_t i = 0; i < c; ++i) s += dy[i];
      Real* dx = an->grad.data() + r * c;
      for (int64_t i = 0; i < c; ++i) dx[i] += dy[i] - std::exp(y[i]) * s;
    }
  });
}

// ---------------------------------------------------------------------------
// Layer norm over the last axis with learned gain/bias.
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> layer_norm(const TensorT<Real>& x, const TensorT<Real>& gain,
                         const TensorT<Real>& bias, double eps = 1e-5) {
  using T = TensorT<Real>;
  const int64_t c = x.shape().back();
  if (gain.shape() != Shape{c} || bias.shape() != Shape{c})
    throw std::runtime_error("layer_norm: gain/bias must be " + shape_str({c}));
  const int64_t rows = numel(x.shape()) / c;
  std::vector<Real> out(x.data().size());
  std::vector<Real> inv_sigma(static_cast<size_t>(rows));
  std::vector<Real> mean(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const Real* px = x.data().data() + r * c;
    Real mu = 0;
    for (int64_t i = 0; i < c; ++i) mu += px[i];
    mu /= static_cast<Real>(c);
    Real var = 0;
    for (int64_t i = 0; i < c; ++i) var += (px[i] - mu) * (px[i] - mu);
    var /= static_cast<Real>(c);
    const Real is = Real(1) / std::sqrt(var + static_cast<Real>(eps));
    mean[static_cast<size_t>(r)] = mu;
    inv_sigma[static_cast<size_t>(r)] = is;
    Real* py = out.data() + r * c;
    for (int64_t i = 0; i < c; ++i)
      py[i] = (px[i] - mu) * is * gain.data()[static_cast<size_t>(i)] + bias.data()[static_cast<size_t>(i)];
  }
  auto xn = x.node(), gn = gain.node(), bn = bias.node();
  return T::make_op(x.shape(), std::move(out), {xn, gn, bn},
                    [xn, gn, bn, c, mean, inv_sigma](typename T::Node& o) {
                      const int64_t rows = static_cast<int64_t>(o.value.size()) / c;
                      if (xn->requires_grad) xn->ensure_grad();
                      if (gn->requires_grad) gn->ensure_grad();
                      if (bn->requires_grad) bn->ensure_grad();
                      for (int64_t r = 0; r < rows; ++r) {
                        const Real* px = xn->value.data() + r * c;
                        const Real* dy = o.grad.data() + r * c;
                        const Real mu = mean[static_cast<size_t>(r)];
                        const Real is = inv_sigma[static_cast<size_t>(r)];
                        Real sum_dxhat = 0, sum_dxhat_xhat = 0;
                        for (int64_t i = 0; i < c; ++i) {
                          const Real xhat = (px[i] - mu) * is;
                          const Real dxhat = dy[i] * gn->value[static_cast<size_t>(i)];
                          sum_dxhat += dxhat;
                          sum_dxhat_xhat += dxhat * xhat;
                          if (gn->requires_grad) gn->grad[static_cast<size_t>(i)] += dy[i] * xhat;
                          if (bn->requires_grad) bn->grad[static_cast<size_t>(i)] += dy[i];
                        }
                        if (xn->requires_grad) {
                          Real* dx = xn->grad.data() + r * c;
                          const Real inv_c = Real(1) / static_cast<Real>(c);
                          for (int64_t i = 0; i < c; ++i) {
                            const Real xhat = (px[i] - mu) * is;
                            const Real dxhat = dy[i] * gn->value[static_cast<size_t>(i)];
                            dx[i] += is * (dxhat - inv_c * sum_dxhat - xhat * inv_c * sum_dxhat_xhat);
                          }
                        }
                      }
                    });
}

// ---------------------------------------------------------------------------
// Gather / pick / select
// ---------------------------------------------------------------------------

// Embedding lookup: rows of `table` [V, d] gathered by `ids` [B, L] -> [B, L, d].
template <class Real>
TensorT<Real> gather_rows(const TensorT<Real>& table, const IdMat& ids) {
  using T = TensorT<Real>;
  if (table.shape().size() != 2)
    throw std::runtime_error("gather_rows: table must be [V, d], got " + shape_str(table.shape()));
  const int64_t v = table.shape()[0];
  const int64_t d = table.shape()[1];
  const int64_t n = ids.rows * ids.cols;
  std::vector<Real> out(static_cast<size_t>(n * d));
  for (int64_t i = 0; i < n; ++i) {
    const int32_t id = ids.v[static_cast<size_t>(i)];
    if (id < 0 || id >= v)
      throw std::runtime_error("gather_rows: id " + std::to_string(id) + " out of range [0," +
                               std::to_string(v) + ")");
    std::copy_n(table.data().data() + static_cast<int64_t>(id) * d, d, out.data() + i * d);
  }
  auto tn = table.node();
  auto idv = ids.v;
  return T::make_op({ids.rows, ids.cols, d}, std::move(out), {tn},
                    [tn, idv, d](typename T::Node& o) {
                      if (!tn->requires_grad) return;
                      tn->ensure_grad();
                      const int64_t n = static_cast<int64_t>(idv.size());
                      for (int64_t i = 0; i < n; ++i) {
                        Real* dst = tn->grad.data() + static_cast<int64_t>(idv[static_cast<size_t>(i)]) * d;
                        const Real* src = o.grad.data() + i * d;
                        for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
                      }
                    });
}

// Class pick along the last axis: x [B, L, V] with ids [B, L] -> [B, L].
template <class Real>
TensorT<Real> pick_last(const TensorT<Real>& x, const IdMat& ids) {
  using T = TensorT<Real>;
  if (x.shape().size() != 3 || x.shape()[0] != ids.rows || x.shape()[1] != ids.cols)
    throw std::runtime_error("pick_last: got tensor " + shape_str(x.shape()) + " with ids [" +
                             std::to_string(ids.rows) + "," + std::to_string(ids.cols) + "]");
  const int64_t v = x.shape()[2];
  const int64_t n = ids.rows * ids.cols;
  std::vector<Real> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const int32_t id = ids.v[static_cast<size_t>(i)];
    if (id < 0 || id >= v)
      throw std::runtime_error("pick_last: id " + std::to_string(id) + " out of range [0," +
                               std::to_string(v) + ")");
    out[static_cast<size_t>(i)] = x.data()[static_cast<size_t>(i * v + id)];
  }
  auto xn = x.node();
  auto idv = ids.v;
  return T::make_op({ids.rows, ids.cols}, std::move(out), {xn}, [xn, idv, v](typename T::Node& o) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < idv.size(); ++i)
      xn->grad[i * static_cast<size_t>(v) + static_cast<size_t>(idv[i])] += o.grad[i];
  });
}

// Row select: out[b,l,:] = mask[b,l] ? a[b,l,:] : b[b,l,:]. Mask is constant.
template <class Real>
TensorT<Real> where_rows(const BoolMat& mask, const TensorT<Real>& a, const TensorT<Real>& b) {
  using T = TensorT<Real>;
  detail::check_same_shape(a, b, "where_rows");
  if (a.shape().size() != 3 || a.shape()[0] != mask.rows || a.shape()[1] != mask.cols)
    throw std::runtime_error("where_rows: tensor " + shape_str(a.shape()) +
                             " does not match mask [" + std::to_string(mask.rows) + "," +
                             std::to_string(mask.cols) + "]");
  const int64_t d = a.shape()[2];
  std::vector<Real> out(a.data().size());
  const int64_t n = mask.rows * mask.cols;
  for (int64_t i = 0; i < n; ++i) {
    const auto* src = (mask.v[static_cast<size_t>(i)] ? a.data().data() : b.data().data()) + i * d;
    std::copy_n(src, d, out.data() + i * d);
  }
  auto an = a.node(), bn = b.node();
  auto mv = mask.v;
  return T::make_op(a.shape(), std::move(out), {an, bn}, [an, bn, mv, d](typename T::Node& o) {
    const int64_t n = static_cast<int64_t>(mv.size());
    if (an->requires_grad) an->ensure_grad();
    if (bn->requires_grad) bn->ensure_grad();
    for (int64_t i = 0; i < n; ++i) {
      auto* tgt = mv[static_cast<size_t>(i)] ? (an->requires_grad ? an->grad.data() : nullptr)
                                             : (bn->requires_grad ? bn->grad.data() : nullptr);
      if (!tgt) continue;
      const Real* src = o.grad.data() + i * d;
      for (int64_t j = 0; j < d; ++j) tgt[i * d + j] += src[j];
    }
  });
}

// ---------------------------------------------------------------------------
// Constants and parameter helpers
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> constant(Shape shape, std::vector<Real> data) {
  return TensorT<Real>(std::move(shape), std::move(data));
}

template <class Real>
TensorT<Real> parameter(Shape shape, Rng& rng, double stddev, std::string name) {
  TensorT<Real> t(shape);
  for (auto& v : t.data()) v = static_cast<Real>(rng.normal(0.0, stddev));
  t.set_requires_grad(true);
  t.set_name(std::move(name));
  return t;
}

}  // namespace admix
