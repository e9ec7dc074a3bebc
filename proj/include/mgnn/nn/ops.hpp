#pragma once

// Small dense building blocks shared by the graph and temporal models. Row
// layout throughout: one sample per row, channels along columns.

#include <cmath>

#include "mgnn/core.hpp"
#include "mgnn/random.hpp"

namespace mgnn::nn {

/// ELU with alpha = 1.
template <typename Derived>
auto elu(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([](S v) { return v > S(0) ? v : std::expm1(v); });
}

/// ELU derivative written in terms of the ELU output y: 1 for y > 0, y + 1 otherwise.
template <typename Derived>
auto elu_grad_from_output(const Eigen::MatrixBase<Derived>& y) {
  using S = typename Derived::Scalar;
  return y.unaryExpr([](S v) { return v > S(0) ? S(1) : v + S(1); });
}

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

/// Row-wise max-subtracted softmax.
template <typename Derived>
Matrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& z) {
  using S = typename Derived::Scalar;
  Matrix<S> out = z.colwise() - z.rowwise().maxCoeff();
  out = out.array().exp().matrix();
  out.array().colwise() /= out.rowwise().sum().array();
  return out;
}

/// Row-wise log-softmax.
template <typename Derived>
Matrix<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& z) {
  using S = typename Derived::Scalar;
  const Vector<S> mx = z.rowwise().maxCoeff();
  Matrix<S> shifted = z.colwise() - mx;
  const Vector<S> lse = shifted.array().exp().rowwise().sum().log().matrix();
  return shifted.colwise() - lse;
}

/// Backward of a row-wise softmax given its output s and upstream ds.
template <typename S>
Matrix<S> softmax_rows_backward(const Matrix<S>& s, const Matrix<S>& ds) {
  const Vector<S> dot = (s.array() * ds.array()).rowwise().sum().matrix();
  return (s.array() * (ds.colwise() - dot).array()).matrix();
}

template <typename S>
struct LayerNormCache {
  Matrix<S> xhat;
  Vector<S> inv_std;  // one per row
};

/// Per-row layer norm over the channel axis (biased variance).
template <typename S>
Matrix<S> layer_norm(const Matrix<S>& x, const Vector<S>& gamma, const Vector<S>& beta, S eps,
                     LayerNormCache<S>* cache = nullptr) {
  const Index d = x.cols();
  const Vector<S> mean = x.rowwise().mean();
  Matrix<S> centered = x.colwise() - mean;
  const Vector<S> var = centered.array().square().rowwise().sum().matrix() / S(d);
  const Vector<S> inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix<S> xhat = centered.array().colwise() * inv_std.array();
  Matrix<S> y = (xhat.array().rowwise() * gamma.transpose().array()).matrix().rowwise() + beta.transpose();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = inv_std;
  }
  return y;
}

/// Returns dx; accumulates into dgamma and dbeta.
template <typename S>
Matrix<S> layer_norm_backward(const Matrix<S>& dy, const Vector<S>& gamma, const LayerNormCache<S>& c,
                              Vector<S>& dgamma, Vector<S>& dbeta) {
  dgamma += (dy.array() * c.xhat.array()).colwise().sum().matrix().transpose();
  dbeta += dy.colwise().sum().transpose();
  const Matrix<S> dxhat = dy.array().rowwise() * gamma.transpose().array();
  const Vector<S> m1 = dxhat.rowwise().mean();
  const Vector<S> m2 = (dxhat.array() * c.xhat.array()).rowwise().mean().matrix();
  Matrix<S> dx = dxhat.colwise() - m1;
  dx -= (c.xhat.array().colwise() * m2.array()).matrix();
  return dx.array().colwise() * c.inv_std.array();
}

/// Glorot/Xavier uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <typename S>
Matrix<S> xavier_uniform(Index rows, Index cols, Index fan_in, Index fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix<S> w(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) w(i, j) = static_cast<S>(rng.uniform(-a, a));
  return w;
}

}  // namespace mgnn::nn
