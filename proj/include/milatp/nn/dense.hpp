#pragma once

#include <cmath>
#include <random>
#include <stdexcept>

#include "milatp/types.hpp"

namespace milatp {

template <class T>
struct Dense {
  Mat<T> weight;  // out x in
  Vec<T> bias;
  Mat<T> grad_weight;
  Vec<T> grad_bias;

  Dense() = default;
  Dense(int in, int out) {
    weight.setZero(out, in);
    bias.setZero(out);
    grad_weight.setZero(out, in);
    grad_bias.setZero(out);
  }

  void init_he(std::mt19937_64& rng) {
    const double sd = std::sqrt(2.0 / weight.cols());
    std::normal_distribution<double> dist(0.0, sd);
    for (Index i = 0; i < weight.size(); ++i)
      weight.data()[i] = static_cast<T>(dist(rng));
    bias.setZero();
  }

  Vec<T> forward(const Vec<T>& x) const {
    if (x.size() != weight.cols())
      throw std::invalid_argument("Dense: input size mismatch");
    return weight * x + bias;
  }

  Vec<T> backward(const Vec<T>& x, const Vec<T>& dy) {
    grad_weight.noalias() += dy * x.transpose();
    grad_bias += dy;
    return weight.transpose() * dy;
  }

  void zero_grads() {
    grad_weight.setZero();
    grad_bias.setZero();
  }
};

template <class T>
Vec<T> relu(const Vec<T>& x) {
  return x.cwiseMax(T(0));
}

template <class T>
Mat<T> relu(const Mat<T>& x) {
  return x.cwiseMax(T(0));
}

/// d(relu)/dx applied to an upstream gradient, masked by the forward input.
template <class T, class D>
D relu_backward(const D& x, const D& dy) {
  return ((x.array() > T(0)).template cast<T>() * dy.array()).matrix();
}

template <class T>
Vec<T> sigmoid(const Vec<T>& x) {
  return (T(1) / (T(1) + (-x.array()).exp())).matrix();
}

}  // namespace milatp
