#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "swingrade/tensor.hpp"

namespace swingrade {

namespace detail {

// C[M x N] += A[M x K] * B[K x N]
inline void mm_nn(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M x N] += A[M x K] * B^T where B is stored [N x K]
inline void mm_nt(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[M x N] += A^T * B where A is stored [K x M], B is [K x N]
inline void mm_tn(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      double av = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// Builds an op node, or a plain leaf when no input tracks gradients (or a
/// NoGradGuard is active). `backward` reads the node's grad and accumulates
/// into the parents.
inline Tensor make_op(Shape shape, std::vector<double> data,
                      std::initializer_list<Tensor> inputs,
                      std::function<void(Node&)> backward) {
  bool track = !no_grad_flag();
  if (track) {
    bool any = false;
    for (const Tensor& t : inputs) any = any || t.requires_grad();
    track = any;
  }
  Tensor out = Tensor::from(std::move(shape), std::move(data), false);
  if (track) {
    Node* n = out.node().get();
    n->requires_grad = true;
    n->is_leaf = false;
    for (const Tensor& t : inputs) n->parents.push_back(t.node());
    n->backward_fn = std::move(backward);
  }
  return out;
}

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

inline void check_axis(const Tensor& x, std::size_t axis, const char* op) {
  if (axis >= x.rank()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(x.shape()));
  }
}

struct AxisSplit {
  std::size_t outer, extent, inner;
};

inline AxisSplit axis_split(const Shape& s, std::size_t axis) {
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("add", a, b);
  std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
  Node* an = a.node().get();
  Node* bn = b.node().get();
  return detail::make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& o) {
    if (an->requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
    if (bn->requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] += o.grad[i];
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("sub", a, b);
  std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
  Node* an = a.node().get();
  Node* bn = b.node().get();
  return detail::make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& o) {
    if (an->requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
    if (bn->requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] -= o.grad[i];
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("mul", a, b);
  std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
  Node* an = a.node().get();
  Node* bn = b.node().get();
  return detail::make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& o) {
    if (an->requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] * bn->data[i];
    if (bn->requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] += o.grad[i] * an->data[i];
  });
}

/// Scalar-tensor product, the one permitted broadcast.
inline Tensor scale(const Tensor& a, double s) {
  std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
  Node* an = a.node().get();
  return detail::make_op(a.shape(), std::move(out), {a}, [an, s](Node& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] * s;
  });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }

namespace detail {
inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace detail

inline Tensor sigmoid(const Tensor& a) {
  std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = detail::sigmoid_scalar(a[i]);
  Node* an = a.node().get();
  return detail::make_op(a.shape(), std::move(out), {a}, [an](Node& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      double y = o.data[i];
      an->grad[i] += o.grad[i] * y * (1.0 - y);
    }
  });
}

/// Exact (erf-based) gelu.
inline Tensor gelu(const Tensor& a) {
  std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = a[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * detail::kInvSqrt2));
  }
  Node* an = a.node().get();
  return detail::make_op(a.shape(), std::move(out), {a}, [an](Node& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      double x = an->data[i];
      double cdf = 0.5 * (1.0 + std::erf(x * detail::kInvSqrt2));
      double pdf = detail::kInvSqrt2Pi * std::exp(-0.5 * x * x);
      an->grad[i] += o.grad[i] * (cdf + x * pdf);
    }
  });
}

inline Tensor relu(const Tensor& a) {
  std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  Node* an = a.node().get();
  return detail::make_op(a.shape(), std::move(out), {a}, [an](Node& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      if (an->data[i] > 0.0) an->grad[i] += o.grad[i];
  });
}

inline Tensor log_op(const Tensor& a) {
  std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log(a[i]);
  Node* an = a.node().get();
  return detail::make_op(a.shape(), std::move(out), {a}, [an](Node& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] / an->data[i];
  });
}

/// Clamp to [lo, hi]; gradient passes only where the input is inside.
inline Tensor clamp(const Tensor& a, double lo, double hi) {
  std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::min(hi, std::max(lo, a[i]));
  Node* an = a.node().get();
  return detail::make_op(a.shape(), std::move(out), {a}, [an, lo, hi](Node& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      if (an->data[i] >= lo && an->data[i] <= hi) an->grad[i] += o.grad[i];
  });
}

// ---------------------------------------------------------------------------
// matrix products
// ---------------------------------------------------------------------------

/// 2-D matrix product. dA = G B^T, dB = A^T G.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  std::vector<double> out(m * n, 0.0);
  detail::mm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  Node* an = a.node().get();
  Node* bn = b.node().get();
  return detail::make_op({m, n}, std::move(out), {a, b}, [an, bn, m, k, n](Node& o) {
    if (an->requires_grad)
      detail::mm_nt(o.grad.data(), bn->data.data(), an->grad.data(), m, n, k);
    if (bn->requires_grad)
      detail::mm_tn(an->data.data(), o.grad.data(), bn->grad.data(), k, m, n);
  });
}

/// Batched matrix product over the leading axis. With trans_b, b is
/// [B x N x K] and each batch computes A B^T.
inline Tensor bmm(const Tensor& a, const Tensor& b, bool trans_b = false) {
  if (a.rank() != 3 || b.rank() != 3 || a.extent(0) != b.extent(0)) {
    throw DimensionError("bmm: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  std::size_t batches = a.extent(0), m = a.extent(1), k = a.extent(2);
  std::size_t n = trans_b ? b.extent(1) : b.extent(2);
  std::size_t bk = trans_b ? b.extent(2) : b.extent(1);
  if (bk != k) {
    throw DimensionError("bmm: inner extent mismatch " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(batches * m * n, 0.0);
  for (std::size_t bi = 0; bi < batches; ++bi) {
    const double* ap = a.data().data() + bi * m * k;
    const double* bp = b.data().data() + bi * k * n;
    double* cp = out.data() + bi * m * n;
    if (trans_b)
      detail::mm_nt(ap, bp, cp, m, k, n);
    else
      detail::mm_nn(ap, bp, cp, m, k, n);
  }
  Node* an = a.node().get();
  Node* bn = b.node().get();
  return detail::make_op({batches, m, n}, std::move(out), {a, b},
                         [an, bn, batches, m, k, n, trans_b](Node& o) {
    for (std::size_t bi = 0; bi < batches; ++bi) {
      const double* g = o.grad.data() + bi * m * n;
      const double* ap = an->data.data() + bi * m * k;
      const double* bp = bn->data.data() + bi * k * n;
      if (an->requires_grad) {
        double* da = an->grad.data() + bi * m * k;
        if (trans_b)
          detail::mm_nn(g, bp, da, m, n, k);  // G * B
        else
          detail::mm_nt(g, bp, da, m, n, k);  // G * B^T
      }
      if (bn->requires_grad) {
        double* db = bn->grad.data() + bi * k * n;
        if (trans_b)
          detail::mm_tn(g, ap, db, n, m, k);  // G^T * A  -> [N x K]
        else
          detail::mm_tn(ap, g, db, k, m, n);  // A^T * G  -> [K x N]
      }
    }
  });
}

// ---------------------------------------------------------------------------
// normalizations and reductions
// ---------------------------------------------------------------------------

/// Numerically stable softmax along `axis` (max subtraction).
inline Tensor softmax(const Tensor& x, std::size_t axis) {
  detail::check_axis(x, axis, "softmax");
  auto [outer, extent, inner] = detail::axis_split(x.shape(), axis);
  std::vector<double> out(x.numel());
  const auto& in = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      std::size_t base = o * extent * inner + i;
      double mx = in[base];
      for (std::size_t e = 1; e < extent; ++e) mx = std::max(mx, in[base + e * inner]);
      double sum = 0.0;
      for (std::size_t e = 0; e < extent; ++e) {
        double v = std::exp(in[base + e * inner] - mx);
        out[base + e * inner] = v;
        sum += v;
      }
      double inv = 1.0 / sum;
      for (std::size_t e = 0; e < extent; ++e) out[base + e * inner] *= inv;
    }
  }
  Node* xn = x.node().get();
  std::size_t ou = outer, ex = extent, in_ = inner;
  return detail::make_op(x.shape(), std::move(out), {x}, [xn, ou, ex, in_](Node& o) {
    // dx_e = y_e * (g_e - sum_e' g y)
    for (std::size_t b = 0; b < ou; ++b) {
      for (std::size_t i = 0; i < in_; ++i) {
        std::size_t base = b * ex * in_ + i;
        double dot = 0.0;
        for (std::size_t e = 0; e < ex; ++e)
          dot += o.grad[base + e * in_] * o.data[base + e * in_];
        for (std::size_t e = 0; e < ex; ++e) {
          std::size_t idx = base + e * in_;
          xn->grad[idx] += o.data[idx] * (o.grad[idx] - dot);
        }
      }
    }
  });
}

/// Zero-mean unit-variance normalization along `axis` (population variance,
/// denominator sqrt(var + eps)). Learned affine, where wanted, is applied by
/// the caller as explicit rowvec ops.
inline Tensor layer_normalize(const Tensor& x, std::size_t axis, double eps = 1e-12) {
  detail::check_axis(x, axis, "layer_normalize");
  if (eps <= 0.0) throw ContractError("layer_normalize: eps must be positive");
  auto [outer, extent, inner] = detail::axis_split(x.shape(), axis);
  std::vector<double> out(x.numel());
  std::vector<double> inv_sigma(outer * inner);
  const auto& in = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      std::size_t base = o * extent * inner + i;
      double mean = 0.0;
      for (std::size_t e = 0; e < extent; ++e) mean += in[base + e * inner];
      mean /= static_cast<double>(extent);
      double var = 0.0;
      for (std::size_t e = 0; e < extent; ++e) {
        double d = in[base + e * inner] - mean;
        var += d * d;
      }
      var /= static_cast<double>(extent);
      double inv = 1.0 / std::sqrt(var + eps);
      inv_sigma[o * inner + i] = inv;
      for (std::size_t e = 0; e < extent; ++e)
        out[base + e * inner] = (in[base + e * inner] - mean) * inv;
    }
  }
  Node* xn = x.node().get();
  std::size_t ou = outer, ex = extent, in_ = inner;
  return detail::make_op(x.shape(), std::move(out), {x},
                         [xn, ou, ex, in_, s = std::move(inv_sigma)](Node& o) {
    // dx = (g - mean(g) - y * mean(g*y)) / sigma
    double invn = 1.0 / static_cast<double>(ex);
    for (std::size_t b = 0; b < ou; ++b) {
      for (std::size_t i = 0; i < in_; ++i) {
        std::size_t base = b * ex * in_ + i;
        double gm = 0.0, gym = 0.0;
        for (std::size_t e = 0; e < ex; ++e) {
          std::size_t idx = base + e * in_;
          gm += o.grad[idx];
          gym += o.grad[idx] * o.data[idx];
        }
        gm *= invn;
        gym *= invn;
        double inv = s[b * in_ + i];
        for (std::size_t e = 0; e < ex; ++e) {
          std::size_t idx = base + e * in_;
          xn->grad[idx] += (o.grad[idx] - gm - o.data[idx] * gym) * inv;
        }
      }
    }
  });
}

/// Row-wise L2 normalization along the last axis: y = x / max(||x||, eps).
/// A rank-1 tensor is a single row, the plain vector form.
inline Tensor l2_normalize(const Tensor& x, double eps = 1e-12) {
  if (eps <= 0.0) throw ContractError("l2_normalize: eps must be positive");
  std::size_t d = x.shape().back();
  std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  std::vector<double> inv_norm(rows);
  std::vector<bool> floored(rows);
  const auto& in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += in[r * d + j] * in[r * d + j];
    double nrm = std::sqrt(sq);
    bool fl = nrm < eps;
    double denom = fl ? eps : nrm;
    inv_norm[r] = 1.0 / denom;
    floored[r] = fl;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = in[r * d + j] * inv_norm[r];
  }
  Node* xn = x.node().get();
  return detail::make_op(x.shape(), std::move(out), {x},
                         [xn, rows, d, inv = std::move(inv_norm),
                          fl = std::move(floored)](Node& o) {
    for (std::size_t r = 0; r < rows; ++r) {
      if (fl[r]) {
        // below the floor the map is linear: x / eps
        for (std::size_t j = 0; j < d; ++j) xn->grad[r * d + j] += o.grad[r * d + j] * inv[r];
        continue;
      }
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += o.grad[r * d + j] * o.data[r * d + j];
      for (std::size_t j = 0; j < d; ++j) {
        std::size_t idx = r * d + j;
        xn->grad[idx] += (o.grad[idx] - o.data[idx] * dot) * inv[r];
      }
    }
  });
}

/// Forward identity; contributes exactly zero gradient to the ancestors of x.
inline Tensor stop_gradient(const Tensor& x) {
  return Tensor::from(x.shape(), x.data(), false);
}

inline Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Node* xn = x.node().get();
  return detail::make_op({1}, {s}, {x}, [xn](Node& o) {
    double g = o.grad[0];
    for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g;
  });
}

inline Tensor mean_over_axis(const Tensor& x, std::size_t axis) {
  detail::check_axis(x, axis, "mean_over_axis");
  auto [outer, extent, inner] = detail::axis_split(x.shape(), axis);
  Shape os;
  for (std::size_t i = 0; i < x.rank(); ++i)
    if (i != axis) os.push_back(x.shape()[i]);
  if (os.empty()) os.push_back(1);
  std::vector<double> out(outer * inner, 0.0);
  const auto& in = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t e = 0; e < extent; ++e)
      for (std::size_t i = 0; i < inner; ++i)
        out[o * inner + i] += in[(o * extent + e) * inner + i];
  double invn = 1.0 / static_cast<double>(extent);
  for (auto& v : out) v *= invn;
  Node* xn = x.node().get();
  std::size_t ou = outer, ex = extent, in_ = inner;
  return detail::make_op(std::move(os), std::move(out), {x}, [xn, ou, ex, in_, invn](Node& o) {
    for (std::size_t b = 0; b < ou; ++b)
      for (std::size_t e = 0; e < ex; ++e)
        for (std::size_t i = 0; i < in_; ++i)
          xn->grad[(b * ex + e) * in_ + i] += o.grad[b * in_ + i] * invn;
  });
}

// ---------------------------------------------------------------------------
// structural ops (value-preserving rearrangements; gradients route additively)
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(new_shape));
  }
  Node* xn = x.node().get();
  return detail::make_op(std::move(new_shape), x.data(), {x}, [xn](Node& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i];
  });
}

inline Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  if (perm.size() != x.rank()) {
    throw DimensionError("permute: order length " + std::to_string(perm.size()) +
                         " does not match rank of " + shape_str(x.shape()));
  }
  std::size_t r = x.rank();
  Shape os(r);
  for (std::size_t i = 0; i < r; ++i) os[i] = x.shape()[perm[i]];
  // strides of the input, gathered in output order
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r - 1; i > 0; --i) in_strides[i - 1] = in_strides[i] * x.shape()[i];
  std::vector<std::size_t> gather(r);
  for (std::size_t i = 0; i < r; ++i) gather[i] = in_strides[perm[i]];
  std::size_t n = x.numel();
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t p = 0; p < n; ++p) {
    map[p] = src;
    for (std::size_t a = r; a-- > 0;) {
      idx[a]++;
      src += gather[a];
      if (idx[a] < os[a]) break;
      src -= gather[a] * os[a];
      idx[a] = 0;
    }
  }
  std::vector<double> out(n);
  const auto& in = x.data();
  for (std::size_t p = 0; p < n; ++p) out[p] = in[map[p]];
  Node* xn = x.node().get();
  return detail::make_op(std::move(os), std::move(out), {x},
                         [xn, m = std::move(map)](Node& o) {
    for (std::size_t p = 0; p < o.grad.size(); ++p) xn->grad[m[p]] += o.grad[p];
  });
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  detail::check_axis(parts[0], axis, "concat");
  Shape os = parts[0].shape();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != os.size()) {
      throw DimensionError("concat: rank mismatch " + shape_str(p.shape()) + " vs " +
                           shape_str(os));
    }
    for (std::size_t i = 0; i < os.size(); ++i) {
      if (i != axis && p.shape()[i] != os[i]) {
        throw DimensionError("concat: shape mismatch off axis: " + shape_str(p.shape()) +
                             " vs " + shape_str(os));
      }
    }
    total += p.extent(axis);
  }
  os[axis] = total;
  auto [outer, extent, inner] = detail::axis_split(os, axis);
  std::vector<double> out(shape_numel(os));
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    std::size_t pe = p.extent(axis);
    const auto& in = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(in.begin() + o * pe * inner, in.begin() + (o + 1) * pe * inner,
                out.begin() + (o * extent + off) * inner);
    }
    off += pe;
  }
  std::vector<Node*> nodes;
  std::vector<std::size_t> extents;
  for (const Tensor& p : parts) {
    nodes.push_back(p.node().get());
    extents.push_back(p.extent(axis));
  }
  // make_op takes an initializer_list; register parents manually for the
  // variadic case
  Tensor outt = Tensor::from(std::move(os), std::move(out), false);
  bool track = !detail::no_grad_flag();
  if (track) {
    bool any = false;
    for (const Tensor& p : parts) any = any || p.requires_grad();
    track = any;
  }
  if (track) {
    Node* n = outt.node().get();
    n->requires_grad = true;
    n->is_leaf = false;
    for (const Tensor& p : parts) n->parents.push_back(p.node());
    std::size_t ou = outer, ex = extent, in_ = inner;
    n->backward_fn = [nodes, extents, ou, ex, in_](Node& o) {
      std::size_t off2 = 0;
      for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
        std::size_t pe = extents[pi];
        if (nodes[pi]->requires_grad) {
          auto& pg = nodes[pi]->grad;
          for (std::size_t b = 0; b < ou; ++b) {
            const double* src = o.grad.data() + (b * ex + off2) * in_;
            double* dst = pg.data() + b * pe * in_;
            for (std::size_t i = 0; i < pe * in_; ++i) dst[i] += src[i];
          }
        }
        off2 += pe;
      }
    };
  }
  return outt;
}

/// Contiguous sub-range along an axis.
inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
  detail::check_axis(x, axis, "slice");
  if (start + len > x.extent(axis)) {
    throw DimensionError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") exceeds extent " +
                         std::to_string(x.extent(axis)));
  }
  auto [outer, extent, inner] = detail::axis_split(x.shape(), axis);
  Shape os = x.shape();
  os[axis] = len;
  std::vector<double> out(outer * len * inner);
  const auto& in = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy(in.begin() + (o * extent + start) * inner,
              in.begin() + (o * extent + start + len) * inner, out.begin() + o * len * inner);
  }
  Node* xn = x.node().get();
  std::size_t ou = outer, ex = extent, in_ = inner;
  return detail::make_op(std::move(os), std::move(out), {x},
                         [xn, ou, ex, in_, start, len](Node& o) {
    for (std::size_t b = 0; b < ou; ++b) {
      double* dst = xn->grad.data() + (b * ex + start) * in_;
      const double* src = o.grad.data() + b * len * in_;
      for (std::size_t i = 0; i < len * in_; ++i) dst[i] += src[i];
    }
  });
}

inline std::vector<Tensor> split(const Tensor& x, std::size_t axis, std::size_t parts) {
  detail::check_axis(x, axis, "split");
  if (parts == 0 || x.extent(axis) % parts != 0) {
    throw DimensionError("split: extent " + std::to_string(x.extent(axis)) +
                         " not divisible into " + std::to_string(parts) + " parts");
  }
  std::size_t step = x.extent(axis) / parts;
  std::vector<Tensor> out;
  out.reserve(parts);
  for (std::size_t p = 0; p < parts; ++p) out.push_back(slice(x, axis, p * step, step));
  return out;
}

/// Repeats x n times along a new leading axis. Gradient sums over the copies.
inline Tensor tile_leading(const Tensor& x, std::size_t n) {
  std::size_t sz = x.numel();
  Shape os;
  os.push_back(n);
  for (std::size_t d : x.shape()) os.push_back(d);
  std::vector<double> out(n * sz);
  for (std::size_t r = 0; r < n; ++r)
    std::copy(x.data().begin(), x.data().end(), out.begin() + r * sz);
  Node* xn = x.node().get();
  return detail::make_op(std::move(os), std::move(out), {x}, [xn, n, sz](Node& o) {
    for (std::size_t r = 0; r < n; ++r) {
      const double* g = o.grad.data() + r * sz;
      for (std::size_t i = 0; i < sz; ++i) xn->grad[i] += g[i];
    }
  });
}

/// Row gather from a [R x H] table; gradient scatter-adds into the table.
inline Tensor embedding_select(const Tensor& table, const std::vector<std::size_t>& indices) {
  if (table.rank() != 2) {
    throw DimensionError("embedding_select: table must be rank 2, got " +
                         shape_str(table.shape()));
  }
  std::size_t rows = table.extent(0), h = table.extent(1);
  std::vector<double> out(indices.size() * h);
  for (std::size_t m = 0; m < indices.size(); ++m) {
    if (indices[m] >= rows) throw DimensionError("embedding_select: index out of range");
    std::copy(table.data().begin() + indices[m] * h, table.data().begin() + (indices[m] + 1) * h,
              out.begin() + m * h);
  }
  Node* tn = table.node().get();
  return detail::make_op({indices.size(), h}, std::move(out), {table},
                         [tn, idx = indices, h](Node& o) {
    for (std::size_t m = 0; m < idx.size(); ++m) {
      double* dst = tn->grad.data() + idx[m] * h;
      const double* src = o.grad.data() + m * h;
      for (std::size_t j = 0; j < h; ++j) dst[j] += src[j];
    }
  });
}

/// Toroidal roll of the two spatial axes of a [B x H x W x C] map: content
/// moves down by dy and right by dx (negative values move up/left).
inline Tensor cyclic_shift(const Tensor& map, long long dy, long long dx) {
  if (map.rank() != 4) {
    throw DimensionError("cyclic_shift: expected [B,H,W,C], got " + shape_str(map.shape()));
  }
  std::size_t b = map.extent(0), h = map.extent(1), w = map.extent(2), c = map.extent(3);
  auto wrap = [](long long v, std::size_t n) {
    long long m = static_cast<long long>(n);
    return static_cast<std::size_t>(((v % m) + m) % m);
  };
  std::vector<double> out(map.numel());
  const auto& in = map.data();
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t y = 0; y < h; ++y) {
      std::size_t ty = wrap(static_cast<long long>(y) + dy, h);
      for (std::size_t x = 0; x < w; ++x) {
        std::size_t tx = wrap(static_cast<long long>(x) + dx, w);
        std::copy(in.begin() + ((bi * h + y) * w + x) * c,
                  in.begin() + ((bi * h + y) * w + x + 1) * c,
                  out.begin() + ((bi * h + ty) * w + tx) * c);
      }
    }
  }
  Node* xn = map.node().get();
  return detail::make_op(map.shape(), std::move(out), {map}, [xn, b, h, w, c, dy, dx](Node& o) {
    auto wrapb = [](long long v, std::size_t n) {
      long long m = static_cast<long long>(n);
      return static_cast<std::size_t>(((v % m) + m) % m);
    };
    for (std::size_t bi = 0; bi < b; ++bi) {
      for (std::size_t y = 0; y < h; ++y) {
        std::size_t ty = wrapb(static_cast<long long>(y) + dy, h);
        for (std::size_t x = 0; x < w; ++x) {
          std::size_t tx = wrapb(static_cast<long long>(x) + dx, w);
          const double* src = o.grad.data() + ((bi * h + ty) * w + tx) * c;
          double* dst = xn->grad.data() + ((bi * h + y) * w + x) * c;
          for (std::size_t ci = 0; ci < c; ++ci) dst[ci] += src[ci];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// explicit row-vector alignment (no implicit broadcasting)
// ---------------------------------------------------------------------------

/// x[..., d] + v[d], v added to every row.
inline Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  std::size_t d = v.numel();
  if (v.rank() != 1 || x.shape().back() != d) {
    throw DimensionError("add_rowvec: " + shape_str(x.shape()) + " vs " + shape_str(v.shape()));
  }
  std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x[r * d + j] + v[j];
  Node* xn = x.node().get();
  Node* vn = v.node().get();
  return detail::make_op(x.shape(), std::move(out), {x, v}, [xn, vn, rows, d](Node& o) {
    if (xn->requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i];
    if (vn->requires_grad)
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) vn->grad[j] += o.grad[r * d + j];
  });
}

/// x[..., d] * v[d] elementwise per row.
inline Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
  std::size_t d = v.numel();
  if (v.rank() != 1 || x.shape().back() != d) {
    throw DimensionError("mul_rowvec: " + shape_str(x.shape()) + " vs " + shape_str(v.shape()));
  }
  std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x[r * d + j] * v[j];
  Node* xn = x.node().get();
  Node* vn = v.node().get();
  return detail::make_op(x.shape(), std::move(out), {x, v}, [xn, vn, rows, d](Node& o) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        std::size_t idx = r * d + j;
        if (xn->requires_grad) xn->grad[idx] += o.grad[idx] * vn->data[j];
        if (vn->requires_grad) vn->grad[j] += o.grad[idx] * xn->data[idx];
      }
    }
  });
}

}  // namespace swingrade
