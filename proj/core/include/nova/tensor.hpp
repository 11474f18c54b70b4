#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "nova/common.hpp"
#include "nova/rng.hpp"

namespace nova {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename T>
class Tape;

// Dense row-major tensor. Value semantics over a shared storage block;
// gradients live next to the values and are only allocated for tensors that
// participate in differentiation.
template <typename T>
class Tensor {
 public:
  struct Storage {
    Shape shape;
    std::vector<T> v;
    std::vector<T> g;
    bool requires_grad = false;
    bool from_op = false;
    const void* producer = nullptr;  // tape that recorded the producing op
  };

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : st_(std::make_shared<Storage>()) {
    if (numel(shape) != values.size())
      throw ShapeError("tensor data size " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    st_->shape = std::move(shape);
    st_->v = std::move(values);
    set_requires_grad(requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::size_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    std::size_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
  }

  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  static Tensor randn(Shape shape, Rng& rng, T stddev = T(1),
                      bool requires_grad = false) {
    std::size_t n = numel(shape);
    std::vector<T> v(n);
    for (std::size_t i = 0; i < n; ++i)
      v[i] = static_cast<T>(rng.normal()) * stddev;
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  bool defined() const { return st_ != nullptr; }
  const Shape& shape() const { return st_->shape; }
  std::size_t rank() const { return st_->shape.size(); }
  std::size_t dim(std::size_t i) const { return st_->shape[i]; }
  std::size_t size() const { return st_->v.size(); }

  // Rank-2 helpers; most of the model works on [rows x cols] slabs.
  std::size_t rows() const { return st_->shape.empty() ? 0 : st_->shape[0]; }
  std::size_t cols() const {
    std::size_t c = 1;
    for (std::size_t i = 1; i < st_->shape.size(); ++i) c *= st_->shape[i];
    return c;
  }

  T* data() { return st_->v.data(); }
  const T* data() const { return st_->v.data(); }
  std::vector<T>& values() { return st_->v; }
  const std::vector<T>& values() const { return st_->v; }

  bool requires_grad() const { return st_ && st_->requires_grad; }

  // Leaf-only switch; op outputs get their flag from the recording op.
  void set_requires_grad(bool rg) {
    st_->requires_grad = rg;
    if (rg && st_->g.size() != st_->v.size()) st_->g.assign(st_->v.size(), T(0));
  }

  std::vector<T>& grad() { return st_->g; }
  const std::vector<T>& grad() const { return st_->g; }
  void zero_grad() { std::fill(st_->g.begin(), st_->g.end(), T(0)); }

  T item() const {
    if (size() != 1) throw ContractError("item() on non-scalar tensor");
    return st_->v[0];
  }

  Tensor clone() const {
    Tensor c(st_->shape, st_->v, false);
    return c;
  }

  bool same_storage(const Tensor& o) const { return st_ == o.st_; }

  std::shared_ptr<Storage> impl() const { return st_; }

 private:
  std::shared_ptr<Storage> st_;

  friend class Tape<T>;
};

// Reverse-mode tape: nodes are appended in execution order and walked in
// reverse. Leaf gradients accumulate across backward() calls; intermediate
// gradients are reset at the start of every sweep.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }

  void record(std::shared_ptr<typename Tensor<T>::Storage> out,
              std::function<void()> back) {
    out->from_op = true;
    out->producer = this;
    out->requires_grad = true;
    out->g.assign(out->v.size(), T(0));
    nodes_.push_back(Node{std::move(out), std::move(back)});
  }

  // Seeds d(loss)/d(loss) = seed and propagates. `loss` must be a scalar
  // produced by an op recorded on this tape.
  void backward(const Tensor<T>& loss, T seed = T(1)) {
    if (!loss.defined() || loss.size() != 1)
      throw ContractError("backward: loss must be a defined scalar");
    auto st = loss.impl();
    if (!st->from_op || st->producer != this)
      throw ContractError("backward: loss was not produced on this tape");
    for (auto& n : nodes_) std::fill(n.out->g.begin(), n.out->g.end(), T(0));
    st->g[0] = seed;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back();
  }

 private:
  struct Node {
    std::shared_ptr<typename Tensor<T>::Storage> out;
    std::function<void()> back;
  };
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Kernels. Fixed-order accumulation so results are reproducible run to run.
// ---------------------------------------------------------------------------
namespace detail {

template <typename T>
inline T dot_span(const T* a, const T* b, std::size_t n) {
  constexpr std::size_t kBytes = 32;
  constexpr std::size_t kW = kBytes / sizeof(T);
  typedef T Vec __attribute__((vector_size(kBytes)));
  Vec acc0{}, acc1{};
  std::size_t i = 0;
  for (; i + 2 * kW <= n; i += 2 * kW) {
    Vec x0, x1, y0, y1;
    std::memcpy(&x0, a + i, kBytes);
    std::memcpy(&y0, b + i, kBytes);
    std::memcpy(&x1, a + i + kW, kBytes);
    std::memcpy(&y1, b + i + kW, kBytes);
    acc0 += x0 * y0;
    acc1 += x1 * y1;
  }
  Vec acc = acc0 + acc1;
  T s = T(0);
  for (std::size_t l = 0; l < kW; ++l) s += acc[l];
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
inline void axpy(T a, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Work threshold below which row-parallel dispatch is not worth a thread.
inline constexpr std::size_t kParallelMinFlops = 1u << 21;

// C[m x n] (+)= A[m x k] * B[k x n]
template <typename T, bool Acc>
void mm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
           std::size_t n) {
  std::size_t min_rows = m;
  if (m * k * n >= kParallelMinFlops && m > 1)
    min_rows = std::max<std::size_t>(1, kParallelMinFlops / (k * n));
  parallel_rows(m, min_rows, [=](std::size_t i) {
    T* crow = c + i * n;
    if constexpr (!Acc) std::fill(crow, crow + n, T(0));
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) axpy(arow[p], b + p * n, crow, n);
  });
}

// C[m x n] (+)= A[m x k] * B[n x k]^T   (row-row dot products)
template <typename T, bool Acc>
void mm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
           std::size_t n) {
  std::size_t min_rows = m;
  if (m * k * n >= kParallelMinFlops && m > 1)
    min_rows = std::max<std::size_t>(1, kParallelMinFlops / (k * n));
  parallel_rows(m, min_rows, [=](std::size_t i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      T s = dot_span(arow, b + j * k, k);
      if constexpr (Acc)
        crow[j] += s;
      else
        crow[j] = s;
    }
  });
}

// C[k x n] (+)= A[m x k]^T * B[m x n]
template <typename T, bool Acc>
void mm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
           std::size_t n) {
  if constexpr (!Acc) std::fill(c, c + k * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (std::size_t j = 0; j < k; ++j) axpy(arow[j], brow, c + j * n, n);
  }
}

template <typename T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
bool want_grad(Tape<T>* tape, std::initializer_list<const Tensor<T>*> ins) {
  if (!tape) return false;
  for (const Tensor<T>* t : ins)
    if ((*t).requires_grad()) return true;
  return false;
}

template <typename T>
inline void accum(typename Tensor<T>::Storage& st, std::size_t i, T v) {
  st.g[i] += v;
}

}  // namespace detail

// Boolean attention mask, rows attend to columns where at(i,j) is true.
struct BoolMask {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint8_t> m;

  BoolMask() = default;
  BoolMask(std::size_t r, std::size_t c, std::uint8_t fill = 0)
      : rows(r), cols(c), m(r * c, fill) {}

  bool at(std::size_t i, std::size_t j) const { return m[i * cols + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v) {
    m[i * cols + j] = v ? 1 : 0;
  }
  static BoolMask all_true(std::size_t r, std::size_t c) {
    return BoolMask(r, c, 1);
  }
};

// ---------------------------------------------------------------------------
// Differentiable ops. Every op takes the tape first (nullptr = plain eval).
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out = Tensor<T>::zeros({m, n});
  detail::mm_nn<T, false>(a.data(), b.data(), out.data(), m, k, n);
  if (detail::want_grad(tape, {&a, &b})) {
    auto as = a.impl(), bs = b.impl(), os = out.impl();
    tape->record(os, [as, bs, os, m, k, n]() {
      if (as->requires_grad)
        detail::mm_nt<T, true>(os->g.data(), bs->v.data(), as->g.data(), m, n, k);
      if (bs->requires_grad)
        detail::mm_tn<T, true>(as->v.data(), os->g.data(), bs->g.data(), m, k, n);
    });
  }
  return out;
}

// a * b^T with b given row-major [n x k].
template <typename T>
Tensor<T> matmul_nt(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw ShapeError("matmul_nt: incompatible shapes " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()) + "^T");
  std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor<T> out = Tensor<T>::zeros({m, n});
  detail::mm_nt<T, false>(a.data(), b.data(), out.data(), m, k, n);
  if (detail::want_grad(tape, {&a, &b})) {
    auto as = a.impl(), bs = b.impl(), os = out.impl();
    tape->record(os, [as, bs, os, m, k, n]() {
      if (as->requires_grad)
        detail::mm_nn<T, true>(os->g.data(), bs->v.data(), as->g.data(), m, n, k);
      if (bs->requires_grad)
        detail::mm_tn<T, true>(os->g.data(), as->v.data(), bs->g.data(), m, n, k);
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::size_t n = a.size();
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (detail::want_grad(tape, {&a, &b})) {
    auto as = a.impl(), bs = b.impl(), os = out.impl();
    tape->record(os, [as, bs, os, n]() {
      if (as->requires_grad)
        for (std::size_t i = 0; i < n; ++i) as->g[i] += os->g[i];
      if (bs->requires_grad)
        for (std::size_t i = 0; i < n; ++i) bs->g[i] += os->g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::size_t n = a.size();
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (detail::want_grad(tape, {&a, &b})) {
    auto as = a.impl(), bs = b.impl(), os = out.impl();
    tape->record(os, [as, bs, os, n]() {
      if (as->requires_grad)
        for (std::size_t i = 0; i < n; ++i) as->g[i] += os->g[i];
      if (bs->requires_grad)
        for (std::size_t i = 0; i < n; ++i) bs->g[i] -= os->g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::size_t n = a.size();
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (detail::want_grad(tape, {&a, &b})) {
    auto as = a.impl(), bs = b.impl(), os = out.impl();
    tape->record(os, [as, bs, os, n]() {
      if (as->requires_grad)
        for (std::size_t i = 0; i < n; ++i) as->g[i] += os->g[i] * bs->v[i];
      if (bs->requires_grad)
        for (std::size_t i = 0; i < n; ++i) bs->g[i] += os->g[i] * as->v[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& a, T c) {
  std::size_t n = a.size();
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * c;
  if (detail::want_grad(tape, {&a})) {
    auto as = a.impl(), os = out.impl();
    tape->record(os, [as, os, c, n]() {
      for (std::size_t i = 0; i < n; ++i) as->g[i] += os->g[i] * c;
    });
  }
  return out;
}

// x[R x d] + row-broadcast bias[d]
template <typename T>
Tensor<T> add_rowwise(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& b) {
  std::size_t r = x.rows(), d = x.cols();
  if (b.size() != d)
    throw ShapeError("add_rowwise: bias size " + std::to_string(b.size()) +
                     " vs row width " + std::to_string(d));
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < d; ++j)
      out.data()[i * d + j] = x.data()[i * d + j] + b.data()[j];
  if (detail::want_grad(tape, {&x, &b})) {
    auto xs = x.impl(), bs = b.impl(), os = out.impl();
    tape->record(os, [xs, bs, os, r, d]() {
      if (xs->requires_grad)
        for (std::size_t i = 0; i < r * d; ++i) xs->g[i] += os->g[i];
      if (bs->requires_grad)
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < d; ++j) bs->g[j] += os->g[i * d + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> silu(Tape<T>* tape, const Tensor<T>& x) {
  std::size_t n = x.size();
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    T s = detail::sigmoid(x.data()[i]);
    out.data()[i] = x.data()[i] * s;
  }
  if (detail::want_grad(tape, {&x})) {
    auto xs = x.impl(), os = out.impl();
    tape->record(os, [xs, os, n]() {
      for (std::size_t i = 0; i < n; ++i) {
        T v = xs->v[i];
        T s = detail::sigmoid(v);
        xs->g[i] += os->g[i] * (s * (T(1) + v * (T(1) - s)));
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  Tensor<T> out(std::move(shape), x.values());
  if (detail::want_grad(tape, {&x})) {
    auto xs = x.impl(), os = out.impl();
    std::size_t n = x.size();
    tape->record(os, [xs, os, n]() {
      for (std::size_t i = 0; i < n; ++i) xs->g[i] += os->g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_rows(Tape<T>* tape, const Tensor<T>& x, std::size_t start,
                     std::size_t len) {
  std::size_t r = x.rows(), d = x.cols();
  if (start + len > r) throw ShapeError("slice_rows: out of range");
  Shape shape = x.shape();
  shape[0] = len;
  Tensor<T> out = Tensor<T>::zeros(shape);
  std::copy(x.data() + start * d, x.data() + (start + len) * d, out.data());
  if (detail::want_grad(tape, {&x})) {
    auto xs = x.impl(), os = out.impl();
    tape->record(os, [xs, os, start, len, d]() {
      for (std::size_t i = 0; i < len * d; ++i)
        xs->g[start * d + i] += os->g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_cols(Tape<T>* tape, const Tensor<T>& x, std::size_t start,
                     std::size_t len) {
  if (x.rank() != 2) throw ShapeError("slice_cols: rank-2 tensor required");
  std::size_t r = x.dim(0), d = x.dim(1);
  if (start + len > d) throw ShapeError("slice_cols: out of range");
  Tensor<T> out = Tensor<T>::zeros({r, len});
  for (std::size_t i = 0; i < r; ++i)
    std::copy(x.data() + i * d + start, x.data() + i * d + start + len,
              out.data() + i * len);
  if (detail::want_grad(tape, {&x})) {
    auto xs = x.impl(), os = out.impl();
    tape->record(os, [xs, os, r, d, start, len]() {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < len; ++j)
          xs->g[i * d + start + j] += os->g[i * len + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_rows(Tape<T>* tape, const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  std::size_t d = parts[0].cols(), total = 0;
  for (const auto& p : parts) {
    if (p.cols() != d) throw ShapeError("concat_rows: column mismatch");
    total += p.rows();
  }
  Shape shape = parts[0].shape();
  shape[0] = total;
  Tensor<T> out = Tensor<T>::zeros(shape);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data(), p.data() + p.size(), out.data() + off);
    off += p.size();
  }
  bool rec = false;
  if (tape)
    for (const auto& p : parts) rec = rec || p.requires_grad();
  if (rec) {
    std::vector<std::shared_ptr<typename Tensor<T>::Storage>> ins;
    for (const auto& p : parts) ins.push_back(p.impl());
    auto os = out.impl();
    tape->record(os, [ins, os]() {
      std::size_t off2 = 0;
      for (const auto& in : ins) {
        std::size_t n = in->v.size();
        if (in->requires_grad)
          for (std::size_t i = 0; i < n; ++i) in->g[i] += os->g[off2 + i];
        off2 += n;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_cols(Tape<T>* tape, const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  std::size_t r = parts[0].rows(), total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != r)
      throw ShapeError("concat_cols: row mismatch");
    total += p.dim(1);
  }
  Tensor<T> out = Tensor<T>::zeros({r, total});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::size_t d = p.dim(1);
    for (std::size_t i = 0; i < r; ++i)
      std::copy(p.data() + i * d, p.data() + (i + 1) * d,
                out.data() + i * total + off);
    off += d;
  }
  bool rec = false;
  if (tape)
    for (const auto& p : parts) rec = rec || p.requires_grad();
  if (rec) {
    std::vector<std::shared_ptr<typename Tensor<T>::Storage>> ins;
    for (const auto& p : parts) ins.push_back(p.impl());
    auto os = out.impl();
    tape->record(os, [ins, os, r, total]() {
      std::size_t off2 = 0;
      for (const auto& in : ins) {
        std::size_t d = in->v.size() / r;
        if (in->requires_grad)
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < d; ++j)
              in->g[i * d + j] += os->g[i * total + off2 + j];
        off2 += d;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> gather_rows(Tape<T>* tape, const Tensor<T>& x,
                      const std::vector<std::size_t>& idx) {
  std::size_t r = x.rows(), d = x.cols();
  for (std::size_t i : idx)
    if (i >= r) throw ShapeError("gather_rows: index out of range");
  Shape shape = x.shape();
  shape[0] = idx.size();
  Tensor<T> out = Tensor<T>::zeros(shape);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy(x.data() + idx[i] * d, x.data() + (idx[i] + 1) * d,
              out.data() + i * d);
  if (detail::want_grad(tape, {&x})) {
    auto xs = x.impl(), os = out.impl();
    tape->record(os, [xs, os, idx, d]() {
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
          xs->g[idx[i] * d + j] += os->g[i * d + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& x) {
  std::size_t n = x.size();
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s += x.data()[i];
  Tensor<T> out = Tensor<T>::scalar(s);
  if (detail::want_grad(tape, {&x})) {
    auto xs = x.impl(), os = out.impl();
    tape->record(os, [xs, os, n]() {
      T g = os->g[0];
      for (std::size_t i = 0; i < n; ++i) xs->g[i] += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(Tape<T>* tape, const Tensor<T>& x) {
  std::size_t n = x.size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s += x.data()[i];
  Tensor<T> out = Tensor<T>::scalar(s / static_cast<T>(n));
  if (detail::want_grad(tape, {&x})) {
    auto xs = x.impl(), os = out.impl();
    tape->record(os, [xs, os, n]() {
      T g = os->g[0] / static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i) xs->g[i] += g;
    });
  }
  return out;
}

// Row-wise softmax with exact zeros at masked entries. The row max is taken
// over unmasked entries only, so masked values can never influence the
// result, not even at the bit level.
template <typename T>
Tensor<T> softmax_masked(Tape<T>* tape, const Tensor<T>& x,
                         const BoolMask& mask) {
  std::size_t r = x.rows(), c = x.cols();
  if (mask.rows != r || mask.cols != c)
    throw ShapeError("softmax_masked: mask shape mismatch");
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const T* xr = x.data() + i * c;
    T* yr = out.data() + i * c;
    T mx = -std::numeric_limits<T>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < c; ++j)
      if (mask.at(i, j)) {
        any = true;
        mx = std::max(mx, xr[j]);
      }
    if (!any)
      throw DomainError("softmax_masked: fully masked row " +
                        std::to_string(i));
    T s = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      if (mask.at(i, j)) {
        yr[j] = std::exp(xr[j] - mx);
        s += yr[j];
      } else {
        yr[j] = T(0);
      }
    }
    T inv = T(1) / s;
    for (std::size_t j = 0; j < c; ++j) yr[j] *= inv;
  }
  if (detail::want_grad(tape, {&x})) {
    auto xs = x.impl(), os = out.impl();
    tape->record(os, [xs, os, r, c]() {
      for (std::size_t i = 0; i < r; ++i) {
        const T* y = os->v.data() + i * c;
        const T* g = os->g.data() + i * c;
        T dot = T(0);
        for (std::size_t j = 0; j < c; ++j) dot += y[j] * g[j];
        for (std::size_t j = 0; j < c; ++j)
          xs->g[i * c + j] += y[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

namespace detail {

// Shared forward/backward for layer norm; gain/bias may be null (then the
// op is the parameter-free row normalization).
template <typename T>
Tensor<T> layer_norm_impl(Tape<T>* tape, const Tensor<T>& x,
                          const Tensor<T>* gain, const Tensor<T>* bias,
                          T eps) {
  if (eps <= T(0)) throw ContractError("layer_norm: eps must be positive");
  std::size_t r = x.rows(), d = x.cols();
  if (d < 1) throw ShapeError("layer_norm: empty rows");
  if (gain && gain->size() != d)
    throw ShapeError("layer_norm: gain size mismatch");
  if (bias && bias->size() != d)
    throw ShapeError("layer_norm: bias size mismatch");

  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto xhat = std::make_shared<std::vector<T>>(r * d);
  auto inv_std = std::make_shared<std::vector<T>>(r);
  for (std::size_t i = 0; i < r; ++i) {
    const T* xr = x.data() + i * d;
    T mu = T(0);
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) {
      T c = xr[j] - mu;
      var += c * c;
    }
    var /= static_cast<T>(d);
    T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    T* yr = out.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      T h = (xr[j] - mu) * is;
      (*xhat)[i * d + j] = h;
      yr[j] = gain ? gain->data()[j] * h + bias->data()[j] : h;
    }
  }

  bool rec = tape && (x.requires_grad() || (gain && gain->requires_grad()) ||
                      (bias && bias->requires_grad()));
  if (rec) {
    auto xs = x.impl(), os = out.impl();
    auto gs = gain ? gain->impl() : nullptr;
    auto bs = bias ? bias->impl() : nullptr;
    tape->record(os, [xs, os, gs, bs, xhat, inv_std, r, d]() {
      for (std::size_t i = 0; i < r; ++i) {
        const T* g = os->g.data() + i * d;
        const T* h = xhat->data() + i * d;
        if (xs->requires_grad) {
          // d/dx of (x - mu)/sqrt(var+eps), chain through gain.
          T mean_gh = T(0), mean_ghh = T(0);
          for (std::size_t j = 0; j < d; ++j) {
            T gj = gs ? g[j] * gs->v[j] : g[j];
            mean_gh += gj;
            mean_ghh += gj * h[j];
          }
          mean_gh /= static_cast<T>(d);
          mean_ghh /= static_cast<T>(d);
          T is = (*inv_std)[i];
          for (std::size_t j = 0; j < d; ++j) {
            T gj = gs ? g[j] * gs->v[j] : g[j];
            xs->g[i * d + j] += is * (gj - mean_gh - h[j] * mean_ghh);
          }
        }
        if (gs && gs->requires_grad)
          for (std::size_t j = 0; j < d; ++j) gs->g[j] += g[j] * h[j];
        if (bs && bs->requires_grad)
          for (std::size_t j = 0; j < d; ++j) bs->g[j] += g[j];
      }
    });
  }
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> layer_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, T eps) {
  return detail::layer_norm_impl(tape, x, &gain, &bias, eps);
}

// Per-row normalization without learned affine.
template <typename T>
Tensor<T> normalize_rows(Tape<T>* tape, const Tensor<T>& x, T eps) {
  return detail::layer_norm_impl<T>(tape, x, nullptr, nullptr, eps);
}

}  // namespace nova
