#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "milatp/codec.hpp"
#include "milatp/types.hpp"

namespace milatp {

struct LossConfig {
  double alpha = 0.5;        ///< mix between encoding loss and scalar loss
  double decay_w = 0.9;      ///< position-weight decay factor
  double epoch_scale = 30.0; ///< epochs per unit shift of the weight ramp
  double bce_clamp = 1e-7;   ///< probability clamp keeping BCE finite

  void validate(std::vector<std::string>& errors) const {
    if (!(alpha >= 0.0 && alpha <= 1.0))
      errors.push_back("loss: alpha must lie in [0, 1]");
    if (!(decay_w > 0.0 && decay_w < 1.0))
      errors.push_back("loss: decay_w must lie in (0, 1)");
    if (!(epoch_scale > 0.0))
      errors.push_back("loss: epoch_scale must be positive");
  }
};

/// Per-position loss weights for the encoded target.
///
/// W[i] = sigmoid(epoch / epoch_scale - ln(1/w - 1))^i, so at epoch 0 the
/// weights are the geometric sequence w^i and every position relaxes
/// towards weight 1 as training proceeds. Position 0 (the most significant
/// bit) always has weight exactly 1.
template <class T>
Vec<T> position_weights(int epoch, const LossConfig& cfg, int dim) {
  if (!(cfg.decay_w > 0.0 && cfg.decay_w < 1.0))
    throw std::domain_error("position_weights: decay_w outside (0, 1)");
  if (dim < 1) throw std::invalid_argument("position_weights: dim < 1");
  const double base =
      1.0 / (1.0 + std::exp(std::log(1.0 / cfg.decay_w - 1.0) -
                            static_cast<double>(epoch) / cfg.epoch_scale));
  Vec<T> w(dim);
  for (int i = 0; i < dim; ++i)
    w[i] = static_cast<T>(std::pow(base, static_cast<double>(i)));
  return w;
}

namespace detail {

template <class T>
T clamped_bce(T x, T y, T eps, T* dx) {
  const T lo = eps, hi = T(1) - eps;
  const T xc = std::min(std::max(x, lo), hi);
  // The gradient uses the clamped probability everywhere, so a saturated
  // prediction still receives a restoring signal instead of going silent.
  if (dx) *dx = (xc - y) / (xc * (T(1) - xc));
  return -(y * std::log(xc) + (T(1) - y) * std::log(T(1) - xc));
}

}  // namespace detail

/// Weighted loss of one encoded prediction against one encoded target:
/// binary cross-entropy per bit plus squared error on the fraction, each
/// scaled by its position weight, normalized by the encoded dimension.
///
/// `weights` may have bits.size() entries (bits only, no fraction term) or
/// bits.size() + 1 entries (last entry weighs the fraction term). When
/// `grad` is given it receives d(loss)/d(pred components).
template <class T>
T encoding_loss(const AtpCode<T>& pred, const AtpCode<T>& target,
                const Vec<T>& weights, AtpCode<T>* grad = nullptr,
                T bce_clamp = T(1e-7)) {
  const int n_bits = static_cast<int>(pred.bits.size());
  if (target.bits.size() != n_bits)
    throw std::invalid_argument("encoding_loss: pred/target bit mismatch");
  const int dim = static_cast<int>(weights.size());
  const bool with_fraction = (dim == n_bits + 1);
  if (!with_fraction && dim != n_bits)
    throw std::invalid_argument(
        "encoding_loss: weights must cover bits or bits + fraction");

  if (grad) {
    grad->bits = Vec<T>::Zero(n_bits);
    grad->fraction = T(0);
  }
  const T inv_dim = T(1) / static_cast<T>(dim);
  T acc = T(0);
  for (int j = 0; j < n_bits; ++j) {
    T dx = T(0);
    acc += weights[j] *
           detail::clamped_bce(pred.bits[j], target.bits[j], bce_clamp,
                               grad ? &dx : nullptr);
    if (grad) grad->bits[j] = inv_dim * weights[j] * dx;
  }
  if (with_fraction) {
    const T diff = pred.fraction - target.fraction;
    acc += weights[dim - 1] * diff * diff;
    if (grad) grad->fraction = inv_dim * weights[dim - 1] * T(2) * diff;
  }
  return acc * inv_dim;
}

/// Squared error of one normalized prediction.
template <class T>
T scalar_loss(T pred_norm, T target_norm) {
  const T d = pred_norm - target_norm;
  return d * d;
}

/// Mean squared error over a batch of normalized values.
template <class T>
T scalar_loss(const Vec<T>& pred_norm, const Vec<T>& target_norm) {
  if (pred_norm.size() != target_norm.size())
    throw std::invalid_argument("scalar_loss: size mismatch");
  return (pred_norm - target_norm).squaredNorm() /
         static_cast<T>(pred_norm.size());
}

template <class T>
struct CompositeParts {
  T total = T(0);
  T cls = T(0);  ///< encoding branch before the alpha mix
  T reg = T(0);  ///< scalar branch before the alpha mix
};

/// Composite objective for one sample:
///   alpha * encoding_loss + (1 - alpha) * (soft_decode - normalized target)^2
/// `cls` and `reg` report the two branches before mixing. When `grad` is
/// given it receives d(total)/d(pred components).
template <class T>
CompositeParts<T> composite_loss(const AtpCode<T>& pred, T target_atp,
                                 int epoch, const LossConfig& loss_cfg,
                                 const CodecConfig& codec_cfg,
                                 AtpCode<T>* grad = nullptr) {
  const auto target = encode_atp(target_atp, codec_cfg);
  const int dim = codec_cfg.code_dim();
  const Vec<T> w = position_weights<T>(epoch, loss_cfg, dim);

  AtpCode<T> cls_grad;
  const T cls = encoding_loss(pred, target, w, grad ? &cls_grad : nullptr,
                              static_cast<T>(loss_cfg.bce_clamp));

  const T u = soft_decode(pred, codec_cfg);
  const T t = normalize_atp(target_atp, codec_cfg);
  const T reg = scalar_loss(u, t);

  const T alpha = static_cast<T>(loss_cfg.alpha);
  CompositeParts<T> parts;
  parts.cls = cls;
  parts.reg = reg;
  parts.total = alpha * cls + (T(1) - alpha) * reg;

  if (grad) {
    const int n_bits = codec_cfg.bit_count();
    grad->bits = alpha * cls_grad.bits;
    grad->fraction = alpha * cls_grad.fraction;
    // soft_decode is flat where its clamp is active.
    const T raw = (code_integer_value(pred.bits) + pred.fraction) *
                  static_cast<T>(codec_cfg.r_bin) /
                  static_cast<T>(codec_cfg.atp_max);
    if (raw > T(0) && raw < T(1)) {
      const T outer = (T(1) - alpha) * T(2) * (u - t);
      const T scale =
          static_cast<T>(codec_cfg.r_bin) / static_cast<T>(codec_cfg.atp_max);
      for (int j = 0; j < n_bits; ++j)
        grad->bits[j] += outer * scale * static_cast<T>(1L << (n_bits - 1 - j));
      grad->fraction += outer * scale;
    }
  }
  return parts;
}

/// Batch composite loss: mean of the per-sample terms. Per-sample gradients
/// (each already including the 1/N batch factor) are appended to `grads`
/// when it is non-null.
template <class T>
CompositeParts<T> composite_loss_batch(const std::vector<AtpCode<T>>& preds,
                                       const std::vector<T>& target_atp,
                                       int epoch, const LossConfig& loss_cfg,
                                       const CodecConfig& codec_cfg,
                                       std::vector<AtpCode<T>>* grads = nullptr) {
  if (preds.size() != target_atp.size())
    throw std::invalid_argument("composite_loss_batch: size mismatch");
  if (preds.empty())
    throw std::invalid_argument("composite_loss_batch: empty batch");
  const T inv_n = T(1) / static_cast<T>(preds.size());
  CompositeParts<T> acc;
  if (grads) grads->clear();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    AtpCode<T> g;
    const auto parts =
        composite_loss(preds[i], target_atp[i], epoch, loss_cfg, codec_cfg,
                       grads ? &g : nullptr);
    acc.total += inv_n * parts.total;
    acc.cls += inv_n * parts.cls;
    acc.reg += inv_n * parts.reg;
    if (grads) {
      g.bits *= inv_n;
      g.fraction *= inv_n;
      grads->push_back(std::move(g));
    }
  }
  return acc;
}

}  // namespace milatp
