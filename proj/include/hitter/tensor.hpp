#pragma once

// Dense fp32 tensors with reverse-mode autodiff on a linear tape, plus Adam.
// The scalar type is a template parameter; production code uses float and
// test oracles instantiate the same ops with double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hitter/common.hpp"
#include "hitter/rng.hpp"

namespace hitter {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Global toggle for the NaN/Inf scan after every forward op.
inline bool& finite_checks() {
  static bool enabled = true;
  return enabled;
}

template <typename T>
struct TensorDataT {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until the tape touches this tensor
  bool requires_grad = false;
};

template <typename T>
class TensorT {
 public:
  TensorT() = default;

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    TensorT t;
    t.d_ = std::make_shared<TensorDataT<T>>();
    t.d_->shape = std::move(shape);
    t.d_->value.assign(static_cast<size_t>(shape_numel(t.d_->shape)), T(0));
    t.d_->requires_grad = requires_grad;
    return t;
  }

  static TensorT full(Shape shape, T v) {
    TensorT t = zeros(std::move(shape));
    std::fill(t.d_->value.begin(), t.d_->value.end(), v);
    return t;
  }

  static TensorT from_values(Shape shape, std::vector<T> v) {
    if (shape_numel(shape) != static_cast<int64_t>(v.size()))
      throw ShapeError("from_values: " + shape_str(shape) + " does not hold " +
                       std::to_string(v.size()) + " values");
    TensorT t;
    t.d_ = std::make_shared<TensorDataT<T>>();
    t.d_->shape = std::move(shape);
    t.d_->value = std::move(v);
    return t;
  }

  static TensorT scalar(T v) { return from_values({1}, {v}); }

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  int64_t dim(int i) const { return d_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(d_->value.size()); }
  // Row/column view of the trailing dimension; used by 2-D kernels.
  int64_t cols() const { return d_->shape.empty() ? 1 : d_->shape.back(); }
  int64_t rows() const { return cols() == 0 ? 0 : numel() / cols(); }

  std::vector<T>& values() { return d_->value; }
  const std::vector<T>& values() const { return d_->value; }
  T* data() { return d_->value.data(); }
  const T* data() const { return d_->value.data(); }

  bool requires_grad() const { return d_ && d_->requires_grad; }
  void set_requires_grad(bool b) { d_->requires_grad = b; }

  bool has_grad() const { return d_ && !d_->grad.empty(); }
  std::vector<T>& grad() {
    ensure_grad();
    return d_->grad;
  }
  const std::vector<T>& grad() const { return d_->grad; }
  void ensure_grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->value.size(), T(0));
  }
  void zero_grad() {
    if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), T(0));
  }

  T item() const {
    if (numel() != 1) throw ShapeError("item: tensor is not scalar");
    return d_->value[0];
  }

  // Identity of the underlying storage; weight tying is checked against this.
  const void* storage_id() const { return d_.get(); }

  bool same_storage(const TensorT& o) const { return d_ == o.d_; }

 private:
  std::shared_ptr<TensorDataT<T>> d_;
};

// Linear tape: ops are appended in execution order, which is a topological
// order of the DAG, so one reverse sweep visits every op exactly once and
// accumulated += gradients handle shared subexpressions.
template <typename T>
class TapeT {
 public:
  void record(std::function<void()> backward_step) {
    steps_.push_back(std::move(backward_step));
  }

  size_t size() const { return steps_.size(); }
  void clear() { steps_.clear(); }

  void backward(TensorT<T>& loss) {
    if (loss.numel() != 1)
      throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (!loss.requires_grad())
      throw ShapeError("backward: loss does not require grad");
    loss.ensure_grad();
    loss.grad()[0] += T(1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> steps_;
};

namespace detail {

template <typename T>
inline void check_finite(const TensorT<T>& t, const char* op) {
  if (!finite_checks()) return;
  for (const T v : t.values()) {
    if (!std::isfinite(static_cast<double>(v)))
      throw NumericError(std::string(op) + " produced a non-finite value");
  }
}

template <typename T>
inline bool track(const TapeT<T>* tape, std::initializer_list<bool> reqs) {
  if (!tape) return false;
  for (bool r : reqs)
    if (r) return true;
  return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise ops

template <typename T>
TensorT<T> add(TapeT<T>* tape, TensorT<T> a, TensorT<T> b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  TensorT<T> out = TensorT<T>::zeros(a.shape());
  const int64_t n = a.numel();
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  detail::check_finite(out, "add");
  if (detail::track(tape, {a.requires_grad(), b.requires_grad()})) {
    out.set_requires_grad(true);
    out.ensure_grad();
    if (a.requires_grad()) a.ensure_grad();
    if (b.requires_grad()) b.ensure_grad();
    tape->record([a, b, out]() mutable {
      const T* g = out.grad().data();
      const int64_t n2 = out.numel();
      if (a.requires_grad()) {
        T* ga = a.grad().data();
        for (int64_t i = 0; i < n2; ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        T* gb = b.grad().data();
        for (int64_t i = 0; i < n2; ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> mul(TapeT<T>* tape, TensorT<T> a, TensorT<T> b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  TensorT<T> out = TensorT<T>::zeros(a.shape());
  const int64_t n = a.numel();
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  detail::check_finite(out, "mul");
  if (detail::track(tape, {a.requires_grad(), b.requires_grad()})) {
    out.set_requires_grad(true);
    out.ensure_grad();
    if (a.requires_grad()) a.ensure_grad();
    if (b.requires_grad()) b.ensure_grad();
    tape->record([a, b, out]() mutable {
      const T* g = out.grad().data();
      const int64_t n2 = out.numel();
      if (a.requires_grad()) {
        T* ga = a.grad().data();
        const T* pb2 = b.data();
        for (int64_t i = 0; i < n2; ++i) ga[i] += g[i] * pb2[i];
      }
      if (b.requires_grad()) {
        T* gb = b.grad().data();
        const T* pa2 = a.data();
        for (int64_t i = 0; i < n2; ++i) gb[i] += g[i] * pa2[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> scale(TapeT<T>* tape, TensorT<T> a, T c) {
  TensorT<T> out = TensorT<T>::zeros(a.shape());
  const int64_t n = a.numel();
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * c;
  detail::check_finite(out, "scale");
  if (detail::track(tape, {a.requires_grad()})) {
    out.set_requires_grad(true);
    out.ensure_grad();
    a.ensure_grad();
    tape->record([a, out, c]() mutable {
      const T* g = out.grad().data();
      T* ga = a.grad().data();
      const int64_t n2 = out.numel();
      for (int64_t i = 0; i < n2; ++i) ga[i] += g[i] * c;
    });
  }
  return out;
}

// x: [rows, d] (any leading shape), bias: [d], broadcast over rows.
template <typename T>
TensorT<T> add_bias(TapeT<T>* tape, TensorT<T> x, TensorT<T> bias) {
  const int64_t d = x.cols();
  if (bias.rank() != 1 || bias.dim(0) != d)
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " vs cols " + std::to_string(d));
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  const int64_t rows = x.rows();
  const T* px = x.data();
  const T* pb = bias.data();
  T* po = out.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < d; ++j) po[r * d + j] = px[r * d + j] + pb[j];
  detail::check_finite(out, "add_bias");
  if (detail::track(tape, {x.requires_grad(), bias.requires_grad()})) {
    out.set_requires_grad(true);
    out.ensure_grad();
    if (x.requires_grad()) x.ensure_grad();
    if (bias.requires_grad()) bias.ensure_grad();
    tape->record([x, bias, out, rows, d]() mutable {
      const T* g = out.grad().data();
      if (x.requires_grad()) {
        T* gx = x.grad().data();
        const int64_t n2 = rows * d;
        for (int64_t i = 0; i < n2; ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        T* gb = bias.grad().data();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// matrix products

namespace detail {

// c[m,n] += a[m,k] * b[k,n], ikj order so the inner loop streams rows.
template <typename T>
void gemm_accum(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (int64_t l = 0; l < k; ++l) {
      const T av = arow[l];
      if (av == T(0)) continue;
      const T* brow = b + l * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,n] += a[m,k] * b[n,k]^T; dot products over contiguous rows.
template <typename T>
void gemm_nt_accum(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      double acc = 0.0;
      for (int64_t l = 0; l < k; ++l) acc += static_cast<double>(arow[l]) * static_cast<double>(brow[l]);
      crow[j] += static_cast<T>(acc);
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
template <typename T>
void gemm_tn_accum(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (int64_t l = 0; l < k; ++l) {
      const T av = arow[l];
      if (av == T(0)) continue;
      T* crow = c + l * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

template <typename T>
TensorT<T> matmul(TapeT<T>* tape, TensorT<T> a, TensorT<T> b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: expects rank-2 operands");
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  TensorT<T> out = TensorT<T>::zeros({m, n});
  detail::gemm_accum(a.data(), b.data(), out.data(), m, k, n);
  detail::check_finite(out, "matmul");
  if (detail::track(tape, {a.requires_grad(), b.requires_grad()})) {
    out.set_requires_grad(true);
    out.ensure_grad();
    if (a.requires_grad()) a.ensure_grad();
    if (b.requires_grad()) b.ensure_grad();
    tape->record([a, b, out, m, k, n]() mutable {
      const T* g = out.grad().data();
      if (a.requires_grad())  // dA += dC * B^T
        detail::gemm_nt_accum(g, b.data(), a.grad().data(), m, n, k);
      if (b.requires_grad())  // dB += A^T * dC
        detail::gemm_tn_accum(a.data(), g, b.grad().data(), m, k, n);
    });
  }
  return out;
}

// a[m,k] x b[n,k]^T -> [m,n]; scoring against an embedding table.
template <typename T>
TensorT<T> matmul_nt(TapeT<T>* tape, TensorT<T> a, TensorT<T> b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul_nt: expects rank-2 operands");
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k)
    throw ShapeError("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  TensorT<T> out = TensorT<T>::zeros({m, n});
  detail::gemm_nt_accum(a.data(), b.data(), out.data(), m, k, n);
  detail::check_finite(out, "matmul_nt");
  if (detail::track(tape, {a.requires_grad(), b.requires_grad()})) {
    out.set_requires_grad(true);
    out.ensure_grad();
    if (a.requires_grad()) a.ensure_grad();
    if (b.requires_grad()) b.ensure_grad();
    tape->record([a, b, out, m, k, n]() mutable {
      const T* g = out.grad().data();
      if (a.requires_grad())  // dA += dC * B
        detail::gemm_accum(g, b.data(), a.grad().data(), m, n, k);
      if (b.requires_grad())  // dB += dC^T * A
        detail::gemm_tn_accum(g, a.data(), b.grad().data(), m, n, k);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// row gathering / assembly

template <typename T>
TensorT<T> gather_rows(TapeT<T>* tape, TensorT<T> x, std::vector<int64_t> ids) {
  const int64_t d = x.cols();
  const int64_t nrows = x.rows();
  TensorT<T> out = TensorT<T>::zeros({static_cast<int64_t>(ids.size()), d});
  const T* px = x.data();
  T* po = out.data();
  for (size_t i = 0; i < ids.size(); ++i) {
    const int64_t r = ids[i];
    if (r < 0 || r >= nrows)
      throw IndexError("gather_rows: id " + std::to_string(r) + " out of [0," + std::to_string(nrows) + ")");
    std::copy(px + r * d, px + (r + 1) * d, po + static_cast<int64_t>(i) * d);
  }
  if (detail::track(tape, {x.requires_grad()})) {
    out.set_requires_grad(true);
    out.ensure_grad();
    x.ensure_grad();
    tape->record([x, out, ids = std::move(ids), d]() mutable {
      const T* g = out.grad().data();
      T* gx = x.grad().data();
      for (size_t i = 0; i < ids.size(); ++i) {
        const int64_t r = ids[i];
        const T* src = g + static_cast<int64_t>(i) * d;
        T* dst = gx + r * d;
        for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> concat_rows(TapeT<T>* tape, std::vector<TensorT<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const int64_t d = parts[0].cols();
  int64_t total = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    if (p.cols() != d) throw ShapeError("concat_rows: column mismatch");
    total += p.rows();
    any_grad = any_grad || p.requires_grad();
  }
  TensorT<T> out = TensorT<T>::zeros({total, d});
  T* po = out.data();
  int64_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data(), p.data() + p.numel(), po + off * d);
    off += p.rows();
  }
  if (tape && any_grad) {
    out.set_requires_grad(true);
    out.ensure_grad();
    for (auto& p : parts)
      if (p.requires_grad()) p.ensure_grad();
    tape->record([parts, out, d]() mutable {
      const T* g = out.grad().data();
      int64_t off2 = 0;
      for (auto& p : parts) {
        if (p.requires_grad()) {
          T* gp = p.grad().data();
          const T* src = g + off2 * d;
          const int64_t n2 = p.numel();
          for (int64_t i = 0; i < n2; ++i) gp[i] += src[i];
        }
        off2 += p.rows();
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// normalization / activations

template <typename T>
TensorT<T> layer_norm(TapeT<T>* tape, TensorT<T> x, TensorT<T> gain, TensorT<T> bias, T eps) {
  const int64_t d = x.cols();
  if (d < 1) throw ShapeError("layer_norm: empty rows");
  if (eps <= T(0)) throw ConfigError("layer_norm: eps must be positive");
  if (gain.numel() != d || bias.numel() != d)
    throw ShapeError("layer_norm: gain/bias must have " + std::to_string(d) + " elements");
  const int64_t rows = x.rows();
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  // cached per-row statistics for backward
  std::vector<T> inv_std(static_cast<size_t>(rows));
  std::vector<T> xhat(static_cast<size_t>(rows * d));
  const T* px = x.data();
  const T* pg = gain.data();
  const T* pb = bias.data();
  T* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* row = px + r * d;
    double mean = 0.0;
    for (int64_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    inv_std[static_cast<size_t>(r)] = is;
    for (int64_t j = 0; j < d; ++j) {
      const T xh = static_cast<T>((row[j] - mean)) * is;
      xhat[static_cast<size_t>(r * d + j)] = xh;
      po[r * d + j] = xh * pg[j] + pb[j];
    }
  }
  detail::check_finite(out, "layer_norm");
  if (detail::track(tape, {x.requires_grad(), gain.requires_grad(), bias.requires_grad()})) {
    out.set_requires_grad(true);
    out.ensure_grad();
    if (x.requires_grad()) x.ensure_grad();
    if (gain.requires_grad()) gain.ensure_grad();
    if (bias.requires_grad()) bias.ensure_grad();
    tape->record([x, gain, bias, out, rows, d, inv_std = std::move(inv_std),
                  xhat = std::move(xhat)]() mutable {
      const T* g = out.grad().data();
      const T* pg2 = gain.data();
      for (int64_t r = 0; r < rows; ++r) {
        const T* grow = g + r * d;
        const T* xh = xhat.data() + r * d;
        if (gain.requires_grad()) {
          T* gg = gain.grad().data();
          for (int64_t j = 0; j < d; ++j) gg[j] += grow[j] * xh[j];
        }
        if (bias.requires_grad()) {
          T* gb = bias.grad().data();
          for (int64_t j = 0; j < d; ++j) gb[j] += grow[j];
        }
        if (x.requires_grad()) {
          double sum_gy = 0.0, sum_gy_xh = 0.0;
          for (int64_t j = 0; j < d; ++j) {
            const double gy = static_cast<double>(grow[j]) * pg2[j];
            sum_gy += gy;
            sum_gy_xh += gy * xh[j];
          }
          const double mean_gy = sum_gy / d;
          const double mean_gy_xh = sum_gy_xh / d;
          T* gx = x.grad().data() + r * d;
          const T is = inv_std[static_cast<size_t>(r)];
          for (int64_t j = 0; j < d; ++j) {
            const double gy = static_cast<double>(grow[j]) * pg2[j];
            gx[j] += static_cast<T>((gy - mean_gy - xh[j] * mean_gy_xh) * is);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> gelu(TapeT<T>* tape, TensorT<T> x) {
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  const int64_t n = x.numel();
  const T* px = x.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) {
    const double v = px[i];
    po[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)));
  }
  detail::check_finite(out, "gelu");
  if (detail::track(tape, {x.requires_grad()})) {
    out.set_requires_grad(true);
    out.ensure_grad();
    x.ensure_grad();
    tape->record([x, out]() mutable {
      const T* g = out.grad().data();
      const T* px2 = x.data();
      T* gx = x.grad().data();
      const int64_t n2 = out.numel();
      constexpr double inv_sqrt_2pi = 0.3989422804014327;
      for (int64_t i = 0; i < n2; ++i) {
        const double v = px2[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        gx[i] += g[i] * static_cast<T>(cdf + v * pdf);
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> relu(TapeT<T>* tape, TensorT<T> x) {
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  const int64_t n = x.numel();
  const T* px = x.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = px[i] > T(0) ? px[i] : T(0);
  detail::check_finite(out, "relu");
  if (detail::track(tape, {x.requires_grad()})) {
    out.set_requires_grad(true);
    out.ensure_grad();
    x.ensure_grad();
    tape->record([x, out]() mutable {
      const T* g = out.grad().data();
      const T* px2 = x.data();
      T* gx = x.grad().data();
      const int64_t n2 = out.numel();
      for (int64_t i = 0; i < n2; ++i)
        if (px2[i] > T(0)) gx[i] += g[i];
    });
  }
  return out;
}

// Row-wise softmax over the trailing dimension, stabilized by the row max.
template <typename T>
TensorT<T> softmax_row(TapeT<T>* tape, TensorT<T> x) {
  const int64_t n = x.cols();
  if (n < 1) throw ShapeError("softmax_row: empty rows");
  const int64_t rows = x.rows();
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* row = px + r * n;
    T mx = row[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      const double e = std::exp(static_cast<double>(row[j] - mx));
      po[r * n + j] = static_cast<T>(e);
      denom += e;
    }
    const double inv = 1.0 / denom;
    for (int64_t j = 0; j < n; ++j) po[r * n + j] = static_cast<T>(po[r * n + j] * inv);
  }
  detail::check_finite(out, "softmax_row");
  if (detail::track(tape, {x.requires_grad()})) {
    out.set_requires_grad(true);
    out.ensure_grad();
    x.ensure_grad();
    tape->record([x, out, rows, n]() mutable {
      const T* g = out.grad().data();
      const T* p = out.data();
      T* gx = x.grad().data();
      for (int64_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (int64_t j = 0; j < n; ++j) dot += static_cast<double>(g[r * n + j]) * p[r * n + j];
        for (int64_t j = 0; j < n; ++j)
          gx[r * n + j] += static_cast<T>(p[r * n + j] * (static_cast<double>(g[r * n + j]) - dot));
      }
    });
  }
  return out;
}

// Inverted dropout: train mode zeroes with probability p and scales survivors
// by 1/(1-p); eval mode is the identity (returns the same tensor handle).
template <typename T>
TensorT<T> dropout_mask(TapeT<T>* tape, TensorT<T> x, double p, Mode mode, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must be in [0,1)");
  if (mode == Mode::Eval || p == 0.0) return x;
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  const int64_t n = x.numel();
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(static_cast<size_t>(n));
  const T* px = x.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) {
    const T m = rng.uniform01() < p ? T(0) : keep_scale;
    mask[static_cast<size_t>(i)] = m;
    po[i] = px[i] * m;
  }
  detail::check_finite(out, "dropout");
  if (detail::track(tape, {x.requires_grad()})) {
    out.set_requires_grad(true);
    out.ensure_grad();
    x.ensure_grad();
    tape->record([x, out, mask = std::move(mask)]() mutable {
      const T* g = out.grad().data();
      T* gx = x.grad().data();
      const int64_t n2 = out.numel();
      for (int64_t i = 0; i < n2; ++i) gx[i] += g[i] * mask[static_cast<size_t>(i)];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// losses / reductions

template <typename T>
TensorT<T> sum_all(TapeT<T>* tape, TensorT<T> x) {
  double acc = 0.0;
  for (const T v : x.values()) acc += v;
  TensorT<T> out = TensorT<T>::scalar(static_cast<T>(acc));
  detail::check_finite(out, "sum_all");
  if (detail::track(tape, {x.requires_grad()})) {
    out.set_requires_grad(true);
    out.ensure_grad();
    x.ensure_grad();
    tape->record([x, out]() mutable {
      const T g = out.grad()[0];
      T* gx = x.grad().data();
      const int64_t n2 = x.numel();
      for (int64_t i = 0; i < n2; ++i) gx[i] += g;
    });
  }
  return out;
}

// Mean over the batch of -sum_k q_k log softmax(z)_k with
// q = (1-eps)*onehot(target) + eps/K.
template <typename T>
TensorT<T> cross_entropy_smoothed(TapeT<T>* tape, TensorT<T> logits,
                                  const std::vector<int64_t>& targets, double eps) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be [B,K]");
  if (eps < 0.0 || eps >= 1.0) throw ConfigError("cross_entropy: smoothing must be in [0,1)");
  const int64_t b = logits.dim(0), k = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != b)
    throw ShapeError("cross_entropy: batch size mismatch");
  for (const int64_t t : targets)
    if (t < 0 || t >= k)
      throw IndexError("cross_entropy: target " + std::to_string(t) + " out of [0," + std::to_string(k) + ")");
  const T* pz = logits.data();
  double total = 0.0;
  for (int64_t r = 0; r < b; ++r) {
    const T* row = pz + r * k;
    double mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double denom = 0.0, zsum = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      denom += std::exp(static_cast<double>(row[j]) - mx);
      zsum += row[j];
    }
    const double lse = std::log(denom) + mx;
    total += lse - (1.0 - eps) * row[targets[static_cast<size_t>(r)]] -
             (eps / static_cast<double>(k)) * zsum;
  }
  TensorT<T> out = TensorT<T>::scalar(static_cast<T>(total / static_cast<double>(b)));
  detail::check_finite(out, "cross_entropy_smoothed");
  if (detail::track(tape, {logits.requires_grad()})) {
    out.set_requires_grad(true);
    out.ensure_grad();
    logits.ensure_grad();
    tape->record([logits, out, targets, eps, b, k]() mutable {
      const T g = out.grad()[0];
      const T* pz2 = logits.data();
      T* gz = logits.grad().data();
      const double inv_b = 1.0 / static_cast<double>(b);
      const double uniform_q = eps / static_cast<double>(k);
      for (int64_t r = 0; r < b; ++r) {
        const T* row = pz2 + r * k;
        double mx = row[0];
        for (int64_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double denom = 0.0;
        for (int64_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
        const double inv_denom = 1.0 / denom;
        const int64_t t = targets[static_cast<size_t>(r)];
        for (int64_t j = 0; j < k; ++j) {
          const double p = std::exp(static_cast<double>(row[j]) - mx) * inv_denom;
          const double q = uniform_q + (j == t ? 1.0 - eps : 0.0);
          gz[r * k + j] += static_cast<T>(static_cast<double>(g) * inv_b * (p - q));
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// self-attention over ragged sequences

// Ragged layout: sequence s owns rows [offsets[s], offsets[s+1]).
struct SeqLayout {
  std::vector<int64_t> offsets;  // size = seqs + 1, offsets[0] == 0

  int64_t seqs() const { return static_cast<int64_t>(offsets.size()) - 1; }
  int64_t len(int64_t s) const { return offsets[static_cast<size_t>(s + 1)] - offsets[static_cast<size_t>(s)]; }
  int64_t total() const { return offsets.back(); }

  static SeqLayout uniform(int64_t seqs, int64_t len) {
    SeqLayout l;
    l.offsets.resize(static_cast<size_t>(seqs) + 1);
    for (int64_t s = 0; s <= seqs; ++s) l.offsets[static_cast<size_t>(s)] = s * len;
    return l;
  }
};

// Scaled dot-product self-attention per sequence and head. Sequences contain
// only valid rows (padding is excluded upstream), so no key mask is needed.
// Probability sums and context vectors accumulate in double so that results
// are stable under any permutation of the rows inside a sequence.
template <typename T>
TensorT<T> self_attention(TapeT<T>* tape, TensorT<T> q, TensorT<T> k, TensorT<T> v,
                          const SeqLayout& layout, int64_t heads, double attn_dropout,
                          Mode mode, Rng& rng) {
  if (q.shape() != k.shape() || q.shape() != v.shape())
    throw ShapeError("self_attention: q/k/v shapes differ");
  if (q.rank() != 2) throw ShapeError("self_attention: expects [N,d]");
  const int64_t n = q.dim(0), d = q.dim(1);
  if (d % heads != 0) throw ConfigError("self_attention: d not divisible by heads");
  if (layout.total() != n) throw ShapeError("self_attention: layout covers " +
                                            std::to_string(layout.total()) + " rows, input has " +
                                            std::to_string(n));
  const int64_t dh = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool drop = (mode == Mode::Train && attn_dropout > 0.0);
  if (attn_dropout < 0.0 || attn_dropout >= 1.0) throw ConfigError("self_attention: dropout in [0,1)");
  const T drop_scale = static_cast<T>(drop ? 1.0 / (1.0 - attn_dropout) : 1.0);

  // probs stored per (seq, head): L*L block; prob_off[s] indexes the flat buffer
  const int64_t nseq = layout.seqs();
  std::vector<int64_t> prob_off(static_cast<size_t>(nseq) + 1, 0);
  for (int64_t s = 0; s < nseq; ++s) {
    const int64_t l = layout.len(s);
    prob_off[static_cast<size_t>(s + 1)] = prob_off[static_cast<size_t>(s)] + heads * l * l;
  }
  std::vector<T> probs(static_cast<size_t>(prob_off.back()));          // post-softmax
  std::vector<T> probs_eff;                                            // post-dropout
  if (drop) probs_eff.assign(static_cast<size_t>(prob_off.back()), T(0));

  TensorT<T> out = TensorT<T>::zeros({n, d});
  const T* pq = q.data();
  const T* pk = k.data();
  const T* pv = v.data();
  T* po = out.data();
  std::vector<double> scores;
  std::vector<double> ctx(static_cast<size_t>(dh));
  for (int64_t s = 0; s < nseq; ++s) {
    const int64_t base = layout.offsets[static_cast<size_t>(s)];
    const int64_t l = layout.len(s);
    scores.resize(static_cast<size_t>(l));
    for (int64_t h = 0; h < heads; ++h) {
      const int64_t hd = h * dh;
      T* pblock = probs.data() + prob_off[static_cast<size_t>(s)] + h * l * l;
      T* pblock_eff = drop ? probs_eff.data() + prob_off[static_cast<size_t>(s)] + h * l * l : pblock;
      for (int64_t i = 0; i < l; ++i) {
        const T* qi = pq + (base + i) * d + hd;
        double mx = -1e300;
        for (int64_t j = 0; j < l; ++j) {
          const T* kj = pk + (base + j) * d + hd;
          double dot = 0.0;
          for (int64_t c = 0; c < dh; ++c) dot += static_cast<double>(qi[c]) * kj[c];
          scores[static_cast<size_t>(j)] = dot * inv_scale;
          mx = std::max(mx, scores[static_cast<size_t>(j)]);
        }
        double denom = 0.0;
        for (int64_t j = 0; j < l; ++j) {
          const double e = std::exp(scores[static_cast<size_t>(j)] - mx);
          scores[static_cast<size_t>(j)] = e;
          denom += e;
        }
        const double inv_denom = 1.0 / denom;
        for (int64_t j = 0; j < l; ++j)
          pblock[i * l + j] = static_cast<T>(scores[static_cast<size_t>(j)] * inv_denom);
        if (drop) {
          for (int64_t j = 0; j < l; ++j)
            pblock_eff[i * l + j] =
                rng.uniform01() < attn_dropout ? T(0) : pblock[i * l + j] * drop_scale;
        }
        std::fill(ctx.begin(), ctx.end(), 0.0);
        for (int64_t j = 0; j < l; ++j) {
          const double pj = pblock_eff[i * l + j];
          if (pj == 0.0) continue;
          const T* vj = pv + (base + j) * d + hd;
          for (int64_t c = 0; c < dh; ++c) ctx[static_cast<size_t>(c)] += pj * vj[c];
        }
        T* oi = po + (base + i) * d + hd;
        for (int64_t c = 0; c < dh; ++c) oi[c] = static_cast<T>(ctx[static_cast<size_t>(c)]);
      }
    }
  }
  detail::check_finite(out, "self_attention");

  if (detail::track(tape, {q.requires_grad(), k.requires_grad(), v.requires_grad()})) {
    out.set_requires_grad(true);
    out.ensure_grad();
    if (q.requires_grad()) q.ensure_grad();
    if (k.requires_grad()) k.ensure_grad();
    if (v.requires_grad()) v.ensure_grad();
    SeqLayout lay = layout;
    tape->record([q, k, v, out, lay = std::move(lay), heads, dh, inv_scale, drop, drop_scale,
                  probs = std::move(probs), probs_eff = std::move(probs_eff),
                  prob_off = std::move(prob_off)]() mutable {
      const int64_t d = q.dim(1);
      const T* pq2 = q.data();
      const T* pk2 = k.data();
      const T* pv2 = v.data();
      const T* g = out.grad().data();
      T* gq = q.requires_grad() ? q.grad().data() : nullptr;
      T* gk = k.requires_grad() ? k.grad().data() : nullptr;
      T* gv = v.requires_grad() ? v.grad().data() : nullptr;
      std::vector<double> dp, ds;
      for (int64_t s = 0; s < lay.seqs(); ++s) {
        const int64_t base = lay.offsets[static_cast<size_t>(s)];
        const int64_t l = lay.len(s);
        dp.resize(static_cast<size_t>(l));
        ds.resize(static_cast<size_t>(l));
        for (int64_t h = 0; h < heads; ++h) {
          const int64_t hd = h * dh;
          const T* pblock = probs.data() + prob_off[static_cast<size_t>(s)] + h * l * l;
          const T* pblock_eff = drop ? probs_eff.data() + prob_off[static_cast<size_t>(s)] + h * l * l : pblock;
          for (int64_t i = 0; i < l; ++i) {
            const T* gi = g + (base + i) * d + hd;
            // dV and the gradient through the (possibly dropped) probs
            for (int64_t j = 0; j < l; ++j) {
              const T* vj = pv2 + (base + j) * d + hd;
              double acc = 0.0;
              for (int64_t c = 0; c < dh; ++c) acc += static_cast<double>(gi[c]) * vj[c];
              const double p_eff = pblock_eff[i * l + j];
              dp[static_cast<size_t>(j)] = acc;  // d(out_i)/d(p_eff_ij)
              if (gv && p_eff != 0.0) {
                T* gvj = gv + (base + j) * d + hd;
                for (int64_t c = 0; c < dh; ++c) gvj[c] += static_cast<T>(p_eff * gi[c]);
              }
            }
            // through dropout: d p_eff / d p = scale where kept, 0 where dropped.
            // A zero p_eff with nonzero p means the element was dropped; when
            // p itself is zero the factor is irrelevant (dV and ds vanish).
            if (drop) {
              for (int64_t j = 0; j < l; ++j) {
                const bool kept = pblock_eff[i * l + j] != T(0) || pblock[i * l + j] == T(0);
                dp[static_cast<size_t>(j)] *= kept ? static_cast<double>(drop_scale) : 0.0;
              }
            }
            // softmax backward
            double dot = 0.0;
            for (int64_t j = 0; j < l; ++j) dot += dp[static_cast<size_t>(j)] * pblock[i * l + j];
            for (int64_t j = 0; j < l; ++j)
              ds[static_cast<size_t>(j)] =
                  (dp[static_cast<size_t>(j)] - dot) * pblock[i * l + j] * inv_scale;
            if (gq) {
              T* gqi = gq + (base + i) * d + hd;
              for (int64_t j = 0; j < l; ++j) {
                const double dsj = ds[static_cast<size_t>(j)];
                if (dsj == 0.0) continue;
                const T* kj = pk2 + (base + j) * d + hd;
                for (int64_t c = 0; c < dh; ++c) gqi[c] += static_cast<T>(dsj * kj[c]);
              }
            }
            if (gk) {
              const T* qi = pq2 + (base + i) * d + hd;
              for (int64_t j = 0; j < l; ++j) {
                const double dsj = ds[static_cast<size_t>(j)];
                if (dsj == 0.0) continue;
                T* gkj = gk + (base + j) * d + hd;
                for (int64_t c = 0; c < dh; ++c) gkj[c] += static_cast<T>(dsj * qi[c]);
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adam

enum class AdamStyle { Decoupled, Coupled };

template <typename T>
struct AdamConfigT {
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  AdamStyle style = AdamStyle::Decoupled;
};

template <typename T>
struct AdamStateT {
  struct Slot {
    std::vector<T> m, v;
  };
  std::vector<Slot> slots;
  int64_t step = 0;
};

// One optimizer update over a parameter group. Decoupled style applies
// weight decay directly to the parameter (scaled by lr) before the Adam
// delta; coupled style folds wd*param into the gradient first. Parameters
// flagged decay_exempt skip weight decay entirely.
template <typename T>
void adam_step(std::vector<TensorT<T>>& params, const std::vector<bool>& decay_exempt,
               AdamStateT<T>& state, T lr, T weight_decay,
               const AdamConfigT<T>& cfg = AdamConfigT<T>{}) {
  if (lr < T(0)) throw ConfigError("adam_step: lr must be non-negative");
  if (state.slots.empty()) {
    state.slots.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.slots[i].m.assign(params[i].values().size(), T(0));
      state.slots[i].v.assign(params[i].values().size(), T(0));
    }
  }
  if (state.slots.size() != params.size())
    throw ShapeError("adam_step: state has " + std::to_string(state.slots.size()) +
                     " slots for " + std::to_string(params.size()) + " params");
  if (decay_exempt.size() != params.size())
    throw ShapeError("adam_step: decay_exempt size mismatch");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), t);
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), t);
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& slot = state.slots[i];
    if (slot.m.size() != p.values().size())
      throw ShapeError("adam_step: accumulator shape mismatch at param " + std::to_string(i));
    const T wd = decay_exempt[i] ? T(0) : weight_decay;
    T* pv = p.data();
    const T* pg = p.has_grad() ? p.grad().data() : nullptr;
    const int64_t n = p.numel();
    for (int64_t j = 0; j < n; ++j) {
      T g = pg ? pg[j] : T(0);
      if (cfg.style == AdamStyle::Coupled) g += wd * pv[j];
      else if (wd != T(0)) pv[j] -= lr * wd * pv[j];
      slot.m[static_cast<size_t>(j)] = cfg.beta1 * slot.m[static_cast<size_t>(j)] + (T(1) - cfg.beta1) * g;
      slot.v[static_cast<size_t>(j)] = cfg.beta2 * slot.v[static_cast<size_t>(j)] + (T(1) - cfg.beta2) * g * g;
      const double mhat = slot.m[static_cast<size_t>(j)] / bc1;
      const double vhat = slot.v[static_cast<size_t>(j)] / bc2;
      pv[j] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + static_cast<double>(cfg.eps)));
    }
  }
}

// Global gradient-norm clipping; returns the pre-clip norm.
template <typename T>
double clip_grad_norm(std::vector<TensorT<T>>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params)
    if (p.has_grad())
      for (const T g : p.grad()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& p : params)
      if (p.has_grad())
        for (T& g : p.grad()) g *= s;
  }
  return norm;
}

using Tensor = TensorT<float>;
using Tape = TapeT<float>;
using AdamState = AdamStateT<float>;
using AdamConfig = AdamConfigT<float>;

}  // namespace hitter
