#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "milatp/types.hpp"

namespace milatp {

/// Named view over one trainable tensor and its gradient accumulator.
/// The pointed-to storage is owned by the model; shape is recorded for
/// checkpointing.
template <class T>
struct ParamRef {
  std::string name;
  T* value = nullptr;
  T* grad = nullptr;
  Index size = 0;
  std::vector<Index> shape;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are keyed by registry order,
/// so the same parameter list must be passed to every step.
template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<ParamRef<T>>& params, double lr) {
    if (m_.empty()) allocate(params);
    if (m_.size() != params.size())
      throw std::invalid_argument("adam: parameter registry changed size");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    for (size_t i = 0; i < params.size(); ++i) {
      const ParamRef<T>& p = params[i];
      if (m_[i].size() != p.size)
        throw std::invalid_argument("adam: parameter size changed: " + p.name);
      Eigen::Map<Vec<T>> value(p.value, p.size);
      Eigen::Map<const Vec<T>> grad(p.grad, p.size);
      m_[i] = b1 * m_[i] + (T(1) - b1) * grad;
      v_[i].array() = b2 * v_[i].array() + (T(1) - b2) * grad.array().square();
      value.array() -=
          static_cast<T>(lr) * (m_[i].array() / T(bc1)) /
          ((v_[i].array() / T(bc2)).sqrt() + static_cast<T>(cfg_.eps));
    }
  }

  long steps_taken() const { return t_; }

 private:
  void allocate(const std::vector<ParamRef<T>>& params) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const ParamRef<T>& p : params) {
      m_.push_back(Vec<T>::Zero(p.size));
      v_.push_back(Vec<T>::Zero(p.size));
    }
  }

  AdamConfig cfg_;
  std::vector<Vec<T>> m_, v_;
  long t_ = 0;
};

}  // namespace milatp
