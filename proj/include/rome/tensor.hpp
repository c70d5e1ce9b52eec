#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "rome/error.hpp"

namespace rome {

inline std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

/// Dense row-major tensor. The scalar type S is fixed for a whole
/// computation (float for training, double for gradient checks). The
/// data and grad buffers are shared so that tensors act as cheap handles
/// into one underlying storage.
template <class S>
struct Tensor {
  std::vector<int64_t> shape;
  std::shared_ptr<std::vector<S>> data;
  std::shared_ptr<std::vector<S>> grad;  // allocated iff requires_grad
  bool requires_grad = false;

  Tensor() : data(std::make_shared<std::vector<S>>()) {}

  explicit Tensor(std::vector<int64_t> sh) : shape(std::move(sh)) {
    int64_t n = 1;
    for (int64_t e : shape) {
      if (e <= 0) throw ShapeError("Tensor: extents must be positive, got " + shape_str(shape));
      n *= e;
    }
    data = std::make_shared<std::vector<S>>(static_cast<size_t>(n), S(0));
  }

  static Tensor zeros(std::vector<int64_t> sh) { return Tensor(std::move(sh)); }

  static Tensor full(std::vector<int64_t> sh, S v) {
    Tensor t(std::move(sh));
    std::fill(t.data->begin(), t.data->end(), v);
    return t;
  }

  static Tensor scalar(S v) { return full({1}, v); }

  static Tensor from_vector(std::vector<int64_t> sh, std::vector<S> vals) {
    Tensor t(std::move(sh));
    if (vals.size() != t.data->size())
      throw ShapeError("Tensor::from_vector: " + std::to_string(vals.size()) +
                       " values for shape " + shape_str(t.shape));
    *t.data = std::move(vals);
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data->size()); }
  int64_t rank() const { return static_cast<int64_t>(shape.size()); }
  bool is_scalar() const { return numel() == 1; }

  S* ptr() { return data->data(); }
  const S* ptr() const { return data->data(); }
  S* gptr() { return grad ? grad->data() : nullptr; }
  const S* gptr() const { return grad ? grad->data() : nullptr; }

  S& at(int64_t i) { return (*data)[static_cast<size_t>(i)]; }
  S at(int64_t i) const { return (*data)[static_cast<size_t>(i)]; }
  S& at2(int64_t r, int64_t c) { return (*data)[static_cast<size_t>(r * shape[1] + c)]; }
  S at2(int64_t r, int64_t c) const { return (*data)[static_cast<size_t>(r * shape[1] + c)]; }

  void enable_grad() {
    requires_grad = true;
    if (!grad) grad = std::make_shared<std::vector<S>>(data->size(), S(0));
  }

  void zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), S(0));
  }

  bool all_finite() const {
    for (S v : *data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

/// Linear record of the primitive operations of one forward pass.
/// Backward replays the record once, in reverse execution order, so
/// gradient accumulation order is fixed and runs are bit-reproducible.
template <class S>
class Tape {
 public:
  void record(std::function<void()> back_fn, const Tensor<S>& out) {
    ops_.push_back(std::move(back_fn));
    out_grads_.push_back(out.grad);
  }

  size_t size() const { return ops_.size(); }

  /// Clears the gradients of every op output recorded on this tape
  /// (leaf parameters are the caller's responsibility).
  void zero_out_grads() {
    for (auto& g : out_grads_)
      if (g) std::fill(g->begin(), g->end(), S(0));
  }

  void replay_backward() {
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> ops_;
  std::vector<std::shared_ptr<std::vector<S>>> out_grads_;
};

namespace detail {

template <class S>
inline bool track(const Tape<S>* tape, std::initializer_list<const Tensor<S>*> ins) {
  if (!tape) return false;
  for (const Tensor<S>* t : ins)
    if (t->requires_grad) return true;
  return false;
}

template <class S>
inline void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape != b.shape)
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
}

inline int64_t prod(const std::vector<int64_t>& v, size_t from, size_t to) {
  int64_t p = 1;
  for (size_t i = from; i < to; ++i) p *= v[i];
  return p;
}

}  // namespace detail

/// Propagates the seed gradient of a scalar loss back through the tape.
/// Every requires_grad tensor touched by the recorded ops accumulates its
/// contribution; untouched parameters keep their (zero) gradient.
template <class S>
inline void backward(const Tensor<S>& loss, Tape<S>& tape) {
  if (!loss.is_scalar())
    throw ValueError("backward: loss must be scalar, got shape " + shape_str(loss.shape));
  if (!loss.requires_grad) return;  // loss does not depend on any tracked tensor
  tape.zero_out_grads();
  (*loss.grad)[0] = S(1);
  tape.replay_backward();
}

// ---------------------------------------------------------------------------
// Primitive operations. Each takes an optional tape; with a tape and at
// least one requires_grad input, the output tracks gradients and the
// standard backward rule is recorded.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b, std::type_identity_t<Tape<S>*> tape) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape) + " x " +
                     shape_str(b.shape));
  const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor<S> c({m, n});
  const S* pa = a.ptr();
  const S* pb = b.ptr();
  S* pc = c.ptr();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t kk = 0; kk < k; ++kk) {
      const S av = pa[i * k + kk];
      if (av == S(0)) continue;
      const S* brow = pb + kk * n;
      S* crow = pc + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  if (detail::track(tape, {&a, &b})) {
    c.enable_grad();
    Tensor<S> A = a, B = b, C = c;
    tape->record(
        [A, B, C, m, k, n]() {
          const S* dc = C.gptr();
          if (A.requires_grad) {
            S* da = A.grad->data();
            const S* pb2 = B.ptr();
            // dA += dC . B^T
            for (int64_t i = 0; i < m; ++i)
              for (int64_t j = 0; j < n; ++j) {
                const S d = dc[i * n + j];
                if (d == S(0)) continue;
                for (int64_t kk = 0; kk < k; ++kk) da[i * k + kk] += d * pb2[kk * n + j];
              }
          }
          if (B.requires_grad) {
            S* db = B.grad->data();
            const S* pa2 = A.ptr();
            // dB += A^T . dC
            for (int64_t kk = 0; kk < k; ++kk)
              for (int64_t i = 0; i < m; ++i) {
                const S av = pa2[i * k + kk];
                if (av == S(0)) continue;
                for (int64_t j = 0; j < n; ++j) db[kk * n + j] += av * dc[i * n + j];
              }
          }
        },
        c);
  }
  return c;
}

namespace detail {

template <class S, class Fwd, class Bwd>
Tensor<S> binary_elementwise(const Tensor<S>& a, const Tensor<S>& b, Tape<S>* tape,
                             const char* name, Fwd fwd, Bwd bwd) {
  require_same_shape(a, b, name);
  Tensor<S> c(a.shape);
  const S* pa = a.ptr();
  const S* pb = b.ptr();
  S* pc = c.ptr();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) pc[i] = fwd(pa[i], pb[i]);
  if (track(tape, {&a, &b})) {
    c.enable_grad();
    Tensor<S> A = a, B = b, C = c;
    tape->record(
        [A, B, C, n, bwd]() {
          const S* dc = C.gptr();
          S* da = A.requires_grad ? A.grad->data() : nullptr;
          S* db = B.requires_grad ? B.grad->data() : nullptr;
          const S* pa2 = A.ptr();
          const S* pb2 = B.ptr();
          const S* pc2 = C.ptr();
          for (int64_t i = 0; i < n; ++i) bwd(i, dc[i], pa2, pb2, pc2, da, db);
        },
        c);
  }
  return c;
}

}  // namespace detail

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b, std::type_identity_t<Tape<S>*> tape) {
  return detail::binary_elementwise(
      a, b, tape, "add", [](S x, S y) { return x + y; },
      [](int64_t i, S d, const S*, const S*, const S*, S* da, S* db) {
        if (da) da[i] += d;
        if (db) db[i] += d;
      });
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b, std::type_identity_t<Tape<S>*> tape) {
  return detail::binary_elementwise(
      a, b, tape, "sub", [](S x, S y) { return x - y; },
      [](int64_t i, S d, const S*, const S*, const S*, S* da, S* db) {
        if (da) da[i] += d;
        if (db) db[i] -= d;
      });
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b, std::type_identity_t<Tape<S>*> tape) {
  return detail::binary_elementwise(
      a, b, tape, "mul", [](S x, S y) { return x * y; },
      [](int64_t i, S d, const S* pa, const S* pb, const S*, S* da, S* db) {
        if (da) da[i] += d * pb[i];
        if (db) db[i] += d * pa[i];
      });
}

template <class S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b, std::type_identity_t<Tape<S>*> tape) {
  return detail::binary_elementwise(
      a, b, tape, "div", [](S x, S y) { return x / y; },
      [](int64_t i, S d, const S*, const S* pb, const S* pc, S* da, S* db) {
        if (da) da[i] += d / pb[i];
        if (db) db[i] -= d * pc[i] / pb[i];
      });
}

namespace detail {

template <class S, class Fwd, class Bwd>
Tensor<S> unary_elementwise(const Tensor<S>& a, Tape<S>* tape, Fwd fwd, Bwd bwd) {
  Tensor<S> c(a.shape);
  const S* pa = a.ptr();
  S* pc = c.ptr();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) pc[i] = fwd(pa[i]);
  if (track(tape, {&a})) {
    c.enable_grad();
    Tensor<S> A = a, C = c;
    tape->record(
        [A, C, n, bwd]() {
          const S* dc = C.gptr();
          S* da = A.grad->data();
          const S* pa2 = A.ptr();
          const S* pc2 = C.ptr();
          for (int64_t i = 0; i < n; ++i) da[i] += bwd(dc[i], pa2[i], pc2[i]);
        },
        c);
  }
  return c;
}

}  // namespace detail

template <class S>
Tensor<S> scalar_mul(const Tensor<S>& a, S k, std::type_identity_t<Tape<S>*> tape) {
  return detail::unary_elementwise(
      a, tape, [k](S x) { return k * x; }, [k](S d, S, S) { return d * k; });
}

template <class S>
Tensor<S> tanh_t(const Tensor<S>& a, std::type_identity_t<Tape<S>*> tape) {
  return detail::unary_elementwise(
      a, tape, [](S x) { return std::tanh(x); },
      [](S d, S, S y) { return d * (S(1) - y * y); });
}

template <class S>
Tensor<S> sigmoid_t(const Tensor<S>& a, std::type_identity_t<Tape<S>*> tape) {
  return detail::unary_elementwise(
      a, tape,
      [](S x) {
        if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
        const S e = std::exp(x);
        return e / (S(1) + e);
      },
      [](S d, S, S y) { return d * y * (S(1) - y); });
}

template <class S>
Tensor<S> relu_t(const Tensor<S>& a, std::type_identity_t<Tape<S>*> tape) {
  return detail::unary_elementwise(
      a, tape, [](S x) { return x > S(0) ? x : S(0); },
      [](S d, S x, S) { return x > S(0) ? d : S(0); });
}

template <class S>
Tensor<S> sqrt_t(const Tensor<S>& a, std::type_identity_t<Tape<S>*> tape) {
  return detail::unary_elementwise(
      a, tape, [](S x) { return std::sqrt(x); },
      [](S d, S, S y) { return d / (S(2) * y); });
}

/// Row-major reinterpretation; shares the underlying buffers, records
/// nothing (the identity backward is implied by the shared grad buffer).
template <class S>
Tensor<S> reshape(const Tensor<S>& a, std::vector<int64_t> new_shape) {
  int64_t n = 1;
  for (int64_t e : new_shape) {
    if (e <= 0) throw ShapeError("reshape: extents must be positive, got " + shape_str(new_shape));
    n *= e;
  }
  if (n != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape) + " as " + shape_str(new_shape));
  Tensor<S> c;
  c.shape = std::move(new_shape);
  c.data = a.data;
  c.grad = a.grad;
  c.requires_grad = a.requires_grad;
  return c;
}

template <class S>
Tensor<S> transpose(const Tensor<S>& a, std::type_identity_t<Tape<S>*> tape) {
  if (a.rank() != 2) throw ShapeError("transpose: expects rank 2, got " + shape_str(a.shape));
  const int64_t r = a.shape[0], c0 = a.shape[1];
  Tensor<S> c({c0, r});
  const S* pa = a.ptr();
  S* pc = c.ptr();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c0; ++j) pc[j * r + i] = pa[i * c0 + j];
  if (detail::track(tape, {&a})) {
    c.enable_grad();
    Tensor<S> A = a, C = c;
    tape->record(
        [A, C, r, c0]() {
          const S* dc = C.gptr();
          S* da = A.grad->data();
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c0; ++j) da[i * c0 + j] += dc[j * r + i];
        },
        c);
  }
  return c;
}

/// Concatenation along `axis` of tensors agreeing on every other extent.
template <class S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int64_t axis, std::type_identity_t<Tape<S>*> tape) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const int64_t rank = parts[0].rank();
  if (axis < 0 || axis >= rank)
    throw ShapeError("concat: axis " + std::to_string(axis) + " invalid for rank " +
                     std::to_string(rank));
  std::vector<int64_t> out_shape = parts[0].shape;
  int64_t axis_total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank)
      throw ShapeError("concat: rank mismatch " + shape_str(parts[0].shape) + " vs " +
                       shape_str(p.shape));
    for (int64_t d = 0; d < rank; ++d)
      if (d != axis && p.shape[d] != out_shape[d])
        throw ShapeError("concat: extent mismatch " + shape_str(parts[0].shape) + " vs " +
                         shape_str(p.shape));
    axis_total += p.shape[axis];
  }
  out_shape[axis] = axis_total;
  Tensor<S> c(out_shape);
  const int64_t outer = detail::prod(out_shape, 0, static_cast<size_t>(axis));
  const int64_t inner = detail::prod(out_shape, static_cast<size_t>(axis) + 1, out_shape.size());
  S* pc = c.ptr();
  int64_t offset = 0;  // running start along the axis
  for (const auto& p : parts) {
    const int64_t ext = p.shape[axis];
    const S* pp = p.ptr();
    for (int64_t o = 0; o < outer; ++o)
      std::copy(pp + o * ext * inner, pp + (o + 1) * ext * inner,
                pc + (o * axis_total + offset) * inner);
    offset += ext;
  }
  bool any_rg = false;
  for (const auto& p : parts)
    if (p.requires_grad) any_rg = true;
  if (tape && any_rg) {
    c.enable_grad();
    std::vector<Tensor<S>> ps = parts;
    Tensor<S> C = c;
    tape->record(
        [ps, C, outer, inner, axis_total, axis]() {
          const S* dc = C.gptr();
          int64_t off = 0;
          for (const auto& p : ps) {
            const int64_t ext = p.shape[axis];
            if (p.requires_grad) {
              S* dp = p.grad->data();
              for (int64_t o = 0; o < outer; ++o) {
                const S* src = dc + (o * axis_total + off) * inner;
                S* dst = dp + o * ext * inner;
                for (int64_t i = 0; i < ext * inner; ++i) dst[i] += src[i];
              }
            }
            off += ext;
          }
        },
        c);
  }
  return c;
}

/// Contiguous sub-range [start, end) along `axis`; copies.
template <class S>
Tensor<S> slice(const Tensor<S>& a, int64_t axis, int64_t start, int64_t end, std::type_identity_t<Tape<S>*> tape) {
  if (axis < 0 || axis >= a.rank())
    throw ShapeError("slice: axis " + std::to_string(axis) + " invalid for " + shape_str(a.shape));
  if (start < 0 || end > a.shape[axis] || start >= end)
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(end) +
                     ") invalid for axis extent " + std::to_string(a.shape[axis]));
  std::vector<int64_t> out_shape = a.shape;
  out_shape[axis] = end - start;
  Tensor<S> c(out_shape);
  const int64_t outer = detail::prod(a.shape, 0, static_cast<size_t>(axis));
  const int64_t inner = detail::prod(a.shape, static_cast<size_t>(axis) + 1, a.shape.size());
  const int64_t in_ext = a.shape[axis], out_ext = end - start;
  const S* pa = a.ptr();
  S* pc = c.ptr();
  for (int64_t o = 0; o < outer; ++o)
    std::copy(pa + (o * in_ext + start) * inner, pa + (o * in_ext + end) * inner,
              pc + o * out_ext * inner);
  if (detail::track(tape, {&a})) {
    c.enable_grad();
    Tensor<S> A = a, C = c;
    tape->record(
        [A, C, outer, inner, in_ext, out_ext, start]() {
          const S* dc = C.gptr();
          S* da = A.grad->data();
          for (int64_t o = 0; o < outer; ++o) {
            S* dst = da + (o * in_ext + start) * inner;
            const S* src = dc + o * out_ext * inner;
            for (int64_t i = 0; i < out_ext * inner; ++i) dst[i] += src[i];
          }
        },
        c);
  }
  return c;
}

/// Sum of all elements, as a [1] tensor.
template <class S>
Tensor<S> reduce_sum(const Tensor<S>& a, std::type_identity_t<Tape<S>*> tape) {
  Tensor<S> c({1});
  S acc = S(0);
  const S* pa = a.ptr();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) acc += pa[i];
  c.at(0) = acc;
  if (detail::track(tape, {&a})) {
    c.enable_grad();
    Tensor<S> A = a, C = c;
    tape->record(
        [A, C, n]() {
          const S d = (*C.grad)[0];
          S* da = A.grad->data();
          for (int64_t i = 0; i < n; ++i) da[i] += d;
        },
        c);
  }
  return c;
}

/// Maximum along `axis` (axis removed from the shape). Backward routes the
/// gradient to the first maximal index, which makes ties deterministic.
template <class S>
Tensor<S> reduce_max(const Tensor<S>& a, int64_t axis, std::type_identity_t<Tape<S>*> tape) {
  if (axis < 0 || axis >= a.rank())
    throw ShapeError("reduce_max: axis " + std::to_string(axis) + " invalid for " +
                     shape_str(a.shape));
  std::vector<int64_t> out_shape;
  for (int64_t d = 0; d < a.rank(); ++d)
    if (d != axis) out_shape.push_back(a.shape[d]);
  if (out_shape.empty()) out_shape.push_back(1);  // vector -> scalar
  const int64_t outer = detail::prod(a.shape, 0, static_cast<size_t>(axis));
  const int64_t inner = detail::prod(a.shape, static_cast<size_t>(axis) + 1, a.shape.size());
  const int64_t ext = a.shape[axis];
  Tensor<S> c(out_shape);
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(outer * inner));
  const S* pa = a.ptr();
  S* pc = c.ptr();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      S best = pa[(o * ext) * inner + i];
      int64_t best_k = 0;
      for (int64_t k = 1; k < ext; ++k) {
        const S v = pa[(o * ext + k) * inner + i];
        if (v > best) {
          best = v;
          best_k = k;
        }
      }
      pc[o * inner + i] = best;
      (*argmax)[static_cast<size_t>(o * inner + i)] = best_k;
    }
  if (detail::track(tape, {&a})) {
    c.enable_grad();
    Tensor<S> A = a, C = c;
    tape->record(
        [A, C, argmax, outer, inner, ext]() {
          const S* dc = C.gptr();
          S* da = A.grad->data();
          for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < inner; ++i) {
              const int64_t k = (*argmax)[static_cast<size_t>(o * inner + i)];
              da[(o * ext + k) * inner + i] += dc[o * inner + i];
            }
        },
        c);
  }
  return c;
}

/// Broadcast add of a row vector onto every row of a matrix.
template <class S>
Tensor<S> add_rowvec(const Tensor<S>& m, const Tensor<S>& v, std::type_identity_t<Tape<S>*> tape) {
  if (m.rank() != 2 || v.rank() != 1 || m.shape[1] != v.shape[0])
    throw ShapeError("add_rowvec: shapes " + shape_str(m.shape) + " + " + shape_str(v.shape));
  const int64_t rows = m.shape[0], cols = m.shape[1];
  Tensor<S> c(m.shape);
  const S* pm = m.ptr();
  const S* pv = v.ptr();
  S* pc = c.ptr();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < cols; ++j) pc[r * cols + j] = pm[r * cols + j] + pv[j];
  if (detail::track(tape, {&m, &v})) {
    c.enable_grad();
    Tensor<S> M = m, V = v, C = c;
    tape->record(
        [M, V, C, rows, cols]() {
          const S* dc = C.gptr();
          if (M.requires_grad) {
            S* dm = M.grad->data();
            for (int64_t i = 0; i < rows * cols; ++i) dm[i] += dc[i];
          }
          if (V.requires_grad) {
            S* dv = V.grad->data();
            for (int64_t r = 0; r < rows; ++r)
              for (int64_t j = 0; j < cols; ++j) dv[j] += dc[r * cols + j];
          }
        },
        c);
  }
  return c;
}

/// Row lookup: out[t, :] = table[indices[t], :]. Backward scatter-adds into
/// the table rows, so embedding tables are trainable.
template <class S>
Tensor<S> gather_rows(const Tensor<S>& table, const std::vector<int64_t>& indices, std::type_identity_t<Tape<S>*> tape) {
  if (table.rank() != 2) throw ShapeError("gather_rows: table must be rank 2, got " + shape_str(table.shape));
  if (indices.empty()) throw ValueError("gather_rows: empty index list");
  const int64_t rows = table.shape[0], d = table.shape[1];
  for (int64_t i : indices)
    if (i < 0 || i >= rows)
      throw ValueError("gather_rows: index " + std::to_string(i) + " out of range [0, " +
                       std::to_string(rows) + ")");
  Tensor<S> c({static_cast<int64_t>(indices.size()), d});
  const S* pt = table.ptr();
  S* pc = c.ptr();
  for (size_t t = 0; t < indices.size(); ++t)
    std::copy(pt + indices[t] * d, pt + (indices[t] + 1) * d, pc + static_cast<int64_t>(t) * d);
  if (detail::track(tape, {&table})) {
    c.enable_grad();
    Tensor<S> T = table, C = c;
    auto idx = std::make_shared<std::vector<int64_t>>(indices);
    tape->record(
        [T, C, idx, d]() {
          const S* dc = C.gptr();
          S* dt = T.grad->data();
          for (size_t t = 0; t < idx->size(); ++t) {
            const int64_t r = (*idx)[t];
            for (int64_t j = 0; j < d; ++j) dt[r * d + j] += dc[static_cast<int64_t>(t) * d + j];
          }
        },
        c);
  }
  return c;
}

/// Softmax along `axis`, computed with max subtraction. Total on finite
/// inputs; non-finite input is an error.
template <class S>
Tensor<S> softmax(const Tensor<S>& a, int64_t axis, std::type_identity_t<Tape<S>*> tape) {
  if (axis < 0 || axis >= a.rank())
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(a.shape));
  if (!a.all_finite()) throw ValueError("softmax: non-finite input");
  const int64_t outer = detail::prod(a.shape, 0, static_cast<size_t>(axis));
  const int64_t inner = detail::prod(a.shape, static_cast<size_t>(axis) + 1, a.shape.size());
  const int64_t ext = a.shape[axis];
  Tensor<S> c(a.shape);
  const S* pa = a.ptr();
  S* pc = c.ptr();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      S mx = pa[(o * ext) * inner + i];
      for (int64_t k = 1; k < ext; ++k) mx = std::max(mx, pa[(o * ext + k) * inner + i]);
      S denom = S(0);
      for (int64_t k = 0; k < ext; ++k) {
        const S e = std::exp(pa[(o * ext + k) * inner + i] - mx);
        pc[(o * ext + k) * inner + i] = e;
        denom += e;
      }
      for (int64_t k = 0; k < ext; ++k) pc[(o * ext + k) * inner + i] /= denom;
    }
  if (detail::track(tape, {&a})) {
    c.enable_grad();
    Tensor<S> A = a, C = c;
    tape->record(
        [A, C, outer, inner, ext]() {
          const S* dc = C.gptr();
          const S* pc2 = C.ptr();
          S* da = A.grad->data();
          for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < inner; ++i) {
              S dot = S(0);
              for (int64_t k = 0; k < ext; ++k) {
                const int64_t off = (o * ext + k) * inner + i;
                dot += dc[off] * pc2[off];
              }
              for (int64_t k = 0; k < ext; ++k) {
                const int64_t off = (o * ext + k) * inner + i;
                da[off] += pc2[off] * (dc[off] - dot);
              }
            }
        },
        c);
  }
  return c;
}

/// Layer normalization over the last axis: zero-mean unit-variance per row
/// (biased variance, eps inside the sqrt), then gain (.) x + bias.
template <class S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias, S eps,
                     std::type_identity_t<Tape<S>*> tape) {
  if (x.rank() < 1) throw ShapeError("layer_norm: rank 0 input");
  const int64_t d = x.shape.back();
  if (gain.rank() != 1 || bias.rank() != 1 || gain.shape[0] != d || bias.shape[0] != d)
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape) + "/" + shape_str(bias.shape) +
                     " do not match last axis of " + shape_str(x.shape));
  const int64_t rows = x.numel() / d;
  Tensor<S> c(x.shape);
  auto xhat = std::make_shared<std::vector<S>>(static_cast<size_t>(x.numel()));
  auto inv_sigma = std::make_shared<std::vector<S>>(static_cast<size_t>(rows));
  const S* px = x.ptr();
  const S* pg = gain.ptr();
  const S* pb = bias.ptr();
  S* pc = c.ptr();
  for (int64_t r = 0; r < rows; ++r) {
    const S* row = px + r * d;
    S mean = S(0);
    for (int64_t j = 0; j < d; ++j) mean += row[j];
    mean /= S(d);
    S var = S(0);
    for (int64_t j = 0; j < d; ++j) {
      const S dv = row[j] - mean;
      var += dv * dv;
    }
    var /= S(d);
    const S inv = S(1) / std::sqrt(var + eps);
    (*inv_sigma)[static_cast<size_t>(r)] = inv;
    for (int64_t j = 0; j < d; ++j) {
      const S xh = (row[j] - mean) * inv;
      (*xhat)[static_cast<size_t>(r * d + j)] = xh;
      pc[r * d + j] = pg[j] * xh + pb[j];
    }
  }
  if (detail::track(tape, {&x, &gain, &bias})) {
    c.enable_grad();
    Tensor<S> X = x, G = gain, B = bias, C = c;
    tape->record(
        [X, G, B, C, xhat, inv_sigma, rows, d]() {
          const S* dc = C.gptr();
          const S* pg2 = G.ptr();
          for (int64_t r = 0; r < rows; ++r) {
            const S* dyr = dc + r * d;
            const S* xh = xhat->data() + r * d;
            if (G.requires_grad) {
              S* dg = G.grad->data();
              for (int64_t j = 0; j < d; ++j) dg[j] += dyr[j] * xh[j];
            }
            if (B.requires_grad) {
              S* db = B.grad->data();
              for (int64_t j = 0; j < d; ++j) db[j] += dyr[j];
            }
            if (X.requires_grad) {
              S* dx = X.grad->data() + r * d;
              S mean_dxh = S(0), mean_dxh_xh = S(0);
              for (int64_t j = 0; j < d; ++j) {
                const S dxh = dyr[j] * pg2[j];
                mean_dxh += dxh;
                mean_dxh_xh += dxh * xh[j];
              }
              mean_dxh /= S(d);
              mean_dxh_xh /= S(d);
              const S inv = (*inv_sigma)[static_cast<size_t>(r)];
              for (int64_t j = 0; j < d; ++j) {
                const S dxh = dyr[j] * pg2[j];
                dx[j] += inv * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
              }
            }
          }
        },
        c);
  }
  return c;
}

// Convenience compositions (not primitives; they expand into taped ops).

/// Dot product of two equal-length vectors as a [1] tensor.
template <class S>
Tensor<S> dot(const Tensor<S>& a, const Tensor<S>& b, std::type_identity_t<Tape<S>*> tape) {
  return reduce_sum(mul(a, b, tape), tape);
}

/// Mean of all elements as a [1] tensor.
template <class S>
Tensor<S> mean_all(const Tensor<S>& a, std::type_identity_t<Tape<S>*> tape) {
  return scalar_mul(reduce_sum(a, tape), S(1) / S(a.numel()), tape);
}

/// Stack [D] vectors into a [N x D] matrix.
template <class S>
Tensor<S> stack_rows(const std::vector<Tensor<S>>& rows, std::type_identity_t<Tape<S>*> tape) {
  if (rows.empty()) throw ShapeError("stack_rows: no inputs");
  std::vector<Tensor<S>> as_rows;
  as_rows.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.rank() != 1) throw ShapeError("stack_rows: expects vectors, got " + shape_str(r.shape));
    as_rows.push_back(reshape(r, {1, r.shape[0]}));
  }
  return concat(as_rows, 0, tape);
}

}  // namespace rome
