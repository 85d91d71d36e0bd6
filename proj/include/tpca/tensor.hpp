#pragma once

// Dense tensors with first-index-fastest storage, matrix unfoldings and
// contractions. Modes are zero-based throughout the library.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tpca/error.hpp"

namespace tpca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Shape = std::vector<std::size_t>;
using ModeSet = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (k) out += ",";
    out += std::to_string(shape[k]);
  }
  return out + ")";
}

/// Arbitrary-order dense real array. Entry (i_0, ..., i_{N-1}) lives at
/// i_0 + d_0 i_1 + d_0 d_1 i_2 + ... in the flat buffer. An empty shape is an
/// order-0 tensor holding one scalar.
class DenseTensor {
 public:
  DenseTensor() : data_(1, 0.0) {}

  explicit DenseTensor(Shape shape) : shape_(std::move(shape)) {
    check_shape();
    data_.assign(shape_size(shape_), 0.0);
  }

  DenseTensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    detail::require(data_.size() == shape_size(shape_),
                    "tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_string(shape_));
    for (double x : data_) {
      detail::require(std::isfinite(x), "tensor entries must be finite");
    }
  }

  static DenseTensor from_vector(const Vector& v, Shape shape) {
    return DenseTensor(std::move(shape), std::vector<double>(v.data(), v.data() + v.size()));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t order() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t k) const { return shape_.at(k); }

  std::size_t stride(std::size_t k) const {
    std::size_t s = 1;
    for (std::size_t i = 0; i < k; ++i) s *= shape_[i];
    return s;
  }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  Eigen::Map<const Vector> flat() const { return {data_.data(), static_cast<Eigen::Index>(data_.size())}; }
  Eigen::Map<Vector> flat() { return {data_.data(), static_cast<Eigen::Index>(data_.size())}; }

  double& operator()(std::span<const std::size_t> idx) { return data_[offset(idx)]; }
  double operator()(std::span<const std::size_t> idx) const { return data_[offset(idx)]; }
  double& at(std::initializer_list<std::size_t> idx) {
    return data_[offset(std::span<const std::size_t>(idx.begin(), idx.size()))];
  }
  double at(std::initializer_list<std::size_t> idx) const {
    return data_[offset(std::span<const std::size_t>(idx.begin(), idx.size()))];
  }

  /// Value of an order-0 tensor.
  double scalar() const {
    detail::require(shape_.empty(), "scalar() on a tensor of order " + std::to_string(order()));
    return data_[0];
  }

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  void check_shape() const {
    for (std::size_t d : shape_) detail::require(d > 0, "tensor mode sizes must be positive");
  }

  std::size_t offset(std::span<const std::size_t> idx) const {
    detail::require(idx.size() == shape_.size(), "index order does not match tensor order");
    std::size_t off = 0, s = 1;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      detail::require(idx[k] < shape_[k], "tensor index out of range");
      off += idx[k] * s;
      s *= shape_[k];
    }
    return off;
  }

  Shape shape_;
  std::vector<double> data_;
};

inline Vector vec(const DenseTensor& t) { return t.flat(); }

inline double hs_norm(const DenseTensor& t) { return t.flat().norm(); }

/// Reorders modes: mode i of the result is mode `order[i]` of `t`.
inline DenseTensor permute(const DenseTensor& t, const std::vector<std::size_t>& order) {
  const std::size_t n = t.order();
  detail::require(order.size() == n, "permutation length does not match tensor order");
  std::vector<bool> seen(n, false);
  for (std::size_t m : order) {
    detail::require(m < n && !seen[m], "invalid mode permutation");
    seen[m] = true;
  }
  Shape out_shape(n);
  std::vector<std::size_t> in_stride(n);
  for (std::size_t i = 0; i < n; ++i) {
    out_shape[i] = t.dim(order[i]);
    in_stride[i] = t.stride(order[i]);
  }
  DenseTensor out(out_shape);
  auto src = t.data();
  auto dst = out.data();
  if (n == 0) {
    dst[0] = src[0];
    return out;
  }
  std::vector<std::size_t> idx(n, 0);
  std::size_t in_off = 0;
  const std::size_t inner = out_shape[0];
  const std::size_t inner_stride = in_stride[0];
  for (std::size_t pos = 0; pos < dst.size(); pos += inner) {
    for (std::size_t i = 0; i < inner; ++i) dst[pos + i] = src[in_off + i * inner_stride];
    for (std::size_t k = 1; k < n; ++k) {
      if (++idx[k] < out_shape[k]) {
        in_off += in_stride[k];
        break;
      }
      in_off -= (out_shape[k] - 1) * in_stride[k];
      idx[k] = 0;
    }
  }
  return out;
}

namespace detail {

inline std::vector<std::size_t> cyclic_order(std::size_t n, std::size_t k) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = (k + i) % n;
  return order;
}

inline std::vector<std::size_t> inverse_permutation(const std::vector<std::size_t>& p) {
  std::vector<std::size_t> inv(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) inv[p[i]] = i;
  return inv;
}

inline ModeSet checked_subset(ModeSet s, std::size_t n) {
  std::sort(s.begin(), s.end());
  detail::require(!s.empty(), "mode subset must be nonempty");
  detail::require(std::adjacent_find(s.begin(), s.end()) == s.end(), "mode subset has duplicates");
  detail::require(s.back() < n, "mode subset refers to a mode out of range");
  detail::require(s.size() < n, "mode subset must be a proper subset");
  return s;
}

inline std::vector<std::size_t> group_order(const ModeSet& s, std::size_t n) {
  std::vector<std::size_t> order(s.begin(), s.end());
  for (std::size_t k = 0; k < n; ++k) {
    if (!std::binary_search(s.begin(), s.end(), k)) order.push_back(k);
  }
  return order;
}

}  // namespace detail

inline ModeSet complement(const ModeSet& s, std::size_t n) {
  ModeSet out;
  for (std::size_t k = 0; k < n; ++k) {
    if (std::find(s.begin(), s.end(), k) == s.end()) out.push_back(k);
  }
  return out;
}

/// Mode-k unfolding: d_k rows; columns run over modes k+1, ..., N-1, 0, ...,
/// k-1 with the first of these varying fastest.
inline Matrix unfold(const DenseTensor& t, std::size_t k) {
  detail::require(k < t.order(), "unfold: mode " + std::to_string(k) + " out of range for order " +
                                     std::to_string(t.order()));
  const DenseTensor p = permute(t, detail::cyclic_order(t.order(), k));
  const auto rows = static_cast<Eigen::Index>(t.dim(k));
  return Eigen::Map<const Matrix>(p.data().data(), rows, static_cast<Eigen::Index>(t.size()) / rows);
}

/// Inverse of unfold for a tensor of the given shape.
inline DenseTensor fold(const Matrix& m, std::size_t k, const Shape& shape) {
  detail::require(k < shape.size(), "fold: mode out of range");
  detail::require(static_cast<std::size_t>(m.rows()) == shape[k] &&
                      static_cast<std::size_t>(m.size()) == shape_size(shape),
                  "fold: matrix " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                      " does not match shape " + shape_string(shape));
  const auto order = detail::cyclic_order(shape.size(), k);
  Shape cyc(shape.size());
  for (std::size_t i = 0; i < order.size(); ++i) cyc[i] = shape[order[i]];
  DenseTensor c(cyc, std::vector<double>(m.data(), m.data() + m.size()));
  return permute(c, detail::inverse_permutation(order));
}

/// Unfolding along a group of modes: rows run over the modes of `s` in
/// increasing order, columns over the complement in increasing order, lowest
/// mode fastest on both sides.
inline Matrix unfold_group(const DenseTensor& t, const ModeSet& s) {
  const ModeSet sorted = detail::checked_subset(s, t.order());
  std::size_t rows = 1;
  for (std::size_t k : sorted) rows *= t.dim(k);
  const DenseTensor p = permute(t, detail::group_order(sorted, t.order()));
  return Eigen::Map<const Matrix>(p.data().data(), static_cast<Eigen::Index>(rows),
                                  static_cast<Eigen::Index>(t.size() / rows));
}

inline DenseTensor fold_group(const Matrix& m, const ModeSet& s, const Shape& shape) {
  const ModeSet sorted = detail::checked_subset(s, shape.size());
  const auto order = detail::group_order(sorted, shape.size());
  Shape grouped(shape.size());
  for (std::size_t i = 0; i < order.size(); ++i) grouped[i] = shape[order[i]];
  detail::require(static_cast<std::size_t>(m.size()) == shape_size(shape), "fold_group: size mismatch");
  DenseTensor g(grouped, std::vector<double>(m.data(), m.data() + m.size()));
  return permute(g, detail::inverse_permutation(order));
}

/// t x_k U: sums mode k of t against the rows of U; the new mode k has size
/// cols(U).
inline DenseTensor mode_product(const DenseTensor& t, std::size_t k, const Matrix& u) {
  detail::require(k < t.order(), "mode_product: mode out of range");
  detail::require(static_cast<std::size_t>(u.rows()) == t.dim(k),
                  "mode_product: U has " + std::to_string(u.rows()) + " rows, mode size is " +
                      std::to_string(t.dim(k)));
  Shape out_shape = t.shape();
  out_shape[k] = static_cast<std::size_t>(u.cols());
  const Matrix m = u.transpose() * unfold(t, k);
  return fold(m, k, out_shape);
}

/// Contracts a single mode against a vector; the mode disappears.
inline DenseTensor contract_mode(const DenseTensor& t, std::size_t k, const Eigen::Ref<const Vector>& v) {
  detail::require(k < t.order(), "contract: mode out of range");
  detail::require(static_cast<std::size_t>(v.size()) == t.dim(k), "contract: vector length does not match mode " +
                                                                       std::to_string(k));
  const std::size_t pre = t.stride(k);
  const std::size_t dk = t.dim(k);
  const std::size_t post = t.size() / (pre * dk);
  Shape out_shape = t.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(k));
  DenseTensor out(out_shape);
  auto src = t.data();
  auto dst = out.data();
  for (std::size_t q = 0; q < post; ++q) {
    double* o = dst.data() + q * pre;
    for (std::size_t i = 0; i < dk; ++i) {
      const double w = v[static_cast<Eigen::Index>(i)];
      const double* s = src.data() + (q * dk + i) * pre;
      for (std::size_t p = 0; p < pre; ++p) o[p] += w * s[p];
    }
  }
  return out;
}

struct ModeVector {
  std::size_t mode;
  Eigen::Ref<const Vector> vec;
};

/// Simultaneous contraction of several modes; remaining modes keep their
/// relative order.
inline DenseTensor contract_modes(const DenseTensor& t, const std::vector<ModeVector>& assignments) {
  std::vector<std::size_t> idx(assignments.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return assignments[a].mode > assignments[b].mode; });
  for (std::size_t i = 1; i < idx.size(); ++i) {
    detail::require(assignments[idx[i]].mode != assignments[idx[i - 1]].mode, "contract_modes: duplicate mode");
  }
  if (idx.empty()) return t;
  DenseTensor cur = contract_mode(t, assignments[idx[0]].mode, assignments[idx[0]].vec);
  for (std::size_t i = 1; i < idx.size(); ++i) {
    cur = contract_mode(cur, assignments[idx[i]].mode, assignments[idx[i]].vec);
  }
  return cur;
}

/// v_0 ⊗ v_1 ⊗ ... ⊗ v_{N-1}.
inline DenseTensor outer(const std::vector<Vector>& vectors) {
  Shape shape;
  for (const auto& v : vectors) shape.push_back(static_cast<std::size_t>(v.size()));
  std::vector<double> data{1.0};
  for (const auto& v : vectors) {
    std::vector<double> next(data.size() * static_cast<std::size_t>(v.size()));
    for (Eigen::Index m = 0; m < v.size(); ++m) {
      for (std::size_t i = 0; i < data.size(); ++i) next[i + data.size() * static_cast<std::size_t>(m)] = data[i] * v[m];
    }
    data = std::move(next);
  }
  return DenseTensor(std::move(shape), std::move(data));
}

/// Columnwise Kronecker product: column j is vec(m_0.col(j) ⊗ ... ⊗ m_last.col(j))
/// with m_0's index varying fastest.
inline Matrix khatri_rao(const std::vector<std::reference_wrapper<const Matrix>>& mats) {
  detail::require(!mats.empty(), "khatri_rao: no matrices");
  const Eigen::Index r = mats.front().get().cols();
  Eigen::Index rows = 1;
  for (const auto& m : mats) {
    detail::require(m.get().cols() == r, "khatri_rao: column counts differ");
    rows *= m.get().rows();
  }
  Matrix out(rows, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    Vector col = Vector::Ones(1);
    for (const auto& m : mats) {
      const auto& a = m.get();
      Vector next(col.size() * a.rows());
      for (Eigen::Index i = 0; i < a.rows(); ++i) next.segment(i * col.size(), col.size()) = col * a(i, j);
      col = std::move(next);
    }
    out.col(j) = col;
  }
  return out;
}

}  // namespace tpca
