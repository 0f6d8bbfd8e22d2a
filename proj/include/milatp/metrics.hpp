#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include "milatp/types.hpp"

namespace milatp {

template <class T>
T mean_absolute_error(const Vec<T>& truth, const Vec<T>& pred) {
  if (truth.size() != pred.size())
    throw std::invalid_argument("mean_absolute_error: size mismatch");
  if (truth.size() == 0)
    throw std::invalid_argument("mean_absolute_error: empty input");
  return (pred - truth).template lpNorm<1>() / static_cast<T>(truth.size());
}

/// Pearson correlation coefficient. Undefined (fewer than two samples, or a
/// degenerate zero-variance input) is reported as nullopt rather than NaN.
template <class T>
std::optional<T> pearson(const Vec<T>& x, const Vec<T>& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("pearson: size mismatch");
  const Index n = x.size();
  if (n < 2) return std::nullopt;
  const T mx = x.mean(), my = y.mean();
  const Vec<T> dx = x.array() - mx;
  const Vec<T> dy = y.array() - my;
  const T sxx = dx.squaredNorm(), syy = dy.squaredNorm();
  if (sxx <= T(0) || syy <= T(0)) return std::nullopt;
  return dx.dot(dy) / std::sqrt(sxx * syy);
}

}  // namespace milatp
