#pragma once

#include <stdexcept>

#include "milatp/types.hpp"

namespace milatp {

/// Row-wise layer normalization with learned gain and bias, shared across
/// rows. Each row (one instance feature vector) is shifted to zero mean and
/// scaled to unit variance before the affine map.
template <class T>
struct LayerNorm {
  Vec<T> gain;
  Vec<T> bias;
  Vec<T> grad_gain;
  Vec<T> grad_bias;
  T eps = T(1e-5);

  struct Cache {
    Mat<T> xhat;      // normalized rows before the affine map
    Vec<T> inv_std;   // per-row 1/sqrt(var + eps)
  };

  LayerNorm() = default;
  explicit LayerNorm(Index dim) { reset(dim); }

  void reset(Index dim) {
    gain = Vec<T>::Ones(dim);
    bias = Vec<T>::Zero(dim);
    grad_gain = Vec<T>::Zero(dim);
    grad_bias = Vec<T>::Zero(dim);
  }

  Index dim() const { return gain.size(); }

  Mat<T> forward(const Mat<T>& x, Cache* cache = nullptr) const {
    if (x.cols() != gain.size())
      throw std::invalid_argument("LayerNorm: feature dim mismatch");
    const T inv_d = T(1) / static_cast<T>(x.cols());
    Mat<T> xhat(x.rows(), x.cols());
    Vec<T> inv_std(x.rows());
    for (Index r = 0; r < x.rows(); ++r) {
      const T mu = x.row(r).mean();
      const auto centered = x.row(r).array() - mu;
      const T var = centered.square().sum() * inv_d;
      const T is = T(1) / std::sqrt(var + eps);
      xhat.row(r) = (centered * is).matrix();
      inv_std[r] = is;
    }
    Mat<T> y = xhat;
    y.array().rowwise() *= gain.transpose().array();
    y.array().rowwise() += bias.transpose().array();
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->inv_std = std::move(inv_std);
    }
    return y;
  }

  /// Accumulates gain/bias gradients and returns d(loss)/d(input).
  Mat<T> backward(const Mat<T>& dy, const Cache& cache) {
    if (dy.rows() != cache.xhat.rows() || dy.cols() != cache.xhat.cols())
      throw std::invalid_argument("LayerNorm: gradient shape mismatch");
    grad_gain +=
        (dy.array() * cache.xhat.array()).colwise().sum().matrix().transpose();
    grad_bias += dy.colwise().sum().transpose();

    const T inv_d = T(1) / static_cast<T>(dy.cols());
    Mat<T> dx(dy.rows(), dy.cols());
    for (Index r = 0; r < dy.rows(); ++r) {
      const auto dxhat = dy.row(r).array() * gain.transpose().array();
      const T m1 = dxhat.sum() * inv_d;
      const T m2 = (dxhat * cache.xhat.row(r).array()).sum() * inv_d;
      dx.row(r) = (cache.inv_std[r] *
                   (dxhat - m1 - cache.xhat.row(r).array() * m2))
                      .matrix();
    }
    return dx;
  }

  void zero_grads() {
    grad_gain.setZero();
    grad_bias.setZero();
  }
};

}  // namespace milatp
