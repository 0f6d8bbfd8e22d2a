#pragma once

#include <cmath>
#include <random>
#include <stdexcept>

#include "milatp/types.hpp"

namespace milatp {

/// Trainable parameters of the gated attention scorer: a projection V
/// followed by a tanh nonlinearity and a scoring vector w. The attention
/// weight of instance n is softmax_n(w' tanh(V h_n')).
template <class T>
struct AttentionParams {
  Mat<T> V;  // hidden x feature_dim
  Vec<T> w;  // hidden
  Mat<T> grad_V;
  Vec<T> grad_w;

  AttentionParams() = default;
  AttentionParams(int hidden, int feature_dim) {
    V.setZero(hidden, feature_dim);
    w.setZero(hidden);
    grad_V.setZero(hidden, feature_dim);
    grad_w.setZero(hidden);
  }

  void init(std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / (V.rows() + V.cols()));
    std::uniform_real_distribution<double> uni(-limit, limit);
    for (Index i = 0; i < V.size(); ++i)
      V.data()[i] = static_cast<T>(uni(rng));
    // Small but nonzero so both V and w receive gradient from step one.
    std::normal_distribution<double> norm(0.0, 0.02);
    for (Index i = 0; i < w.size(); ++i)
      w[i] = static_cast<T>(norm(rng));
  }

  void zero_grads() {
    grad_V.setZero();
    grad_w.setZero();
  }
};

template <class T>
struct AttentionCache {
  Mat<T> features;  // N x D
  Mat<T> gate;      // N x hidden, tanh(V h')
  Vec<T> weights;   // N, softmax scores
};

template <class T>
struct PooledFeature {
  Vec<T> z;
  Vec<T> attention;  // empty for non-attention aggregators
};

/// Attention-weighted aggregation of a bag of instance features
/// (rows of `features`). Returns the aggregated embedding and the softmax
/// weights, which are non-negative and sum to one.
template <class T>
PooledFeature<T> attention_pool(const Mat<T>& features,
                                const AttentionParams<T>& params,
                                AttentionCache<T>* cache = nullptr) {
  if (features.rows() < 1)
    throw std::invalid_argument("attention_pool: empty bag");
  if (features.cols() != params.V.cols())
    throw std::invalid_argument("attention_pool: feature dim mismatch");
  if (!features.allFinite())
    throw std::runtime_error("attention_pool: non-finite instance features");

  const Mat<T> gate = (features * params.V.transpose()).array().tanh();
  Vec<T> scores = gate * params.w;
  scores.array() -= scores.maxCoeff();  // stable softmax
  Vec<T> a = scores.array().exp();
  a /= a.sum();

  PooledFeature<T> out;
  out.z = features.transpose() * a;
  out.attention = a;
  if (cache) {
    cache->features = features;
    cache->gate = gate;
    cache->weights = a;
  }
  return out;
}

/// Backward pass of attention_pool; accumulates parameter gradients and
/// returns d(loss)/d(features).
template <class T>
Mat<T> attention_pool_backward(AttentionParams<T>& params,
                               const AttentionCache<T>& cache,
                               const Vec<T>& dz) {
  const Mat<T>& H = cache.features;
  const Vec<T>& a = cache.weights;

  // z = H' a contributes both directly and through the softmax scores.
  Mat<T> dH = a * dz.transpose();
  const Vec<T> da = H * dz;
  const T mix = a.dot(da);
  const Vec<T> ds = a.array() * (da.array() - mix);

  const Mat<T> dgate =
      (ds * params.w.transpose()).array() * (T(1) - cache.gate.array().square());
  params.grad_w.noalias() += cache.gate.transpose() * ds;
  params.grad_V.noalias() += dgate.transpose() * H;
  dH.noalias() += dgate * params.V;
  return dH;
}

/// Elementwise sum of instance features.
template <class T>
PooledFeature<T> sum_pool(const Mat<T>& features) {
  if (features.rows() < 1) throw std::invalid_argument("sum_pool: empty bag");
  PooledFeature<T> out;
  out.z = features.colwise().sum().transpose();
  return out;
}

template <class T>
Mat<T> sum_pool_backward(Index n_instances, const Vec<T>& dz) {
  Mat<T> dH(n_instances, dz.size());
  dH.rowwise() = dz.transpose();
  return dH;
}

/// Concatenation of instance features in bag order; the bag size must be
/// fixed by configuration, which callers enforce.
template <class T>
PooledFeature<T> concat_pool(const Mat<T>& features) {
  if (features.rows() < 1)
    throw std::invalid_argument("concat_pool: empty bag");
  PooledFeature<T> out;
  const Index n = features.rows(), d = features.cols();
  out.z.resize(n * d);
  for (Index i = 0; i < n; ++i)
    out.z.segment(i * d, d) = features.row(i).transpose();
  return out;
}

template <class T>
Mat<T> concat_pool_backward(Index n_instances, Index feature_dim,
                            const Vec<T>& dz) {
  if (dz.size() != n_instances * feature_dim)
    throw std::invalid_argument("concat_pool_backward: size mismatch");
  Mat<T> dH(n_instances, feature_dim);
  for (Index i = 0; i < n_instances; ++i)
    dH.row(i) = dz.segment(i * feature_dim, feature_dim).transpose();
  return dH;
}

}  // namespace milatp
