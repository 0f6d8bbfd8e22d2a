#pragma once

#include <cmath>
#include <random>
#include <stdexcept>

#include "milatp/nn/feature_map.hpp"
#include "milatp/types.hpp"

namespace milatp {

enum class PadMode { zero, reflect };

namespace detail {

inline Index reflect101(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

}  // namespace detail

/// 2D convolution over channels-major feature maps, computed as im2col
/// followed by a single GEMM. Weight layout: out_ch x (in_ch * k * k) with
/// the column index (c * k + ky) * k + kx.
template <class T>
struct Conv2d {
  int in_ch = 0;
  int out_ch = 0;
  int ksize = 3;
  int stride = 1;
  int pad = 1;
  PadMode pad_mode = PadMode::zero;

  Mat<T> weight;
  Vec<T> bias;
  Mat<T> grad_weight;
  Vec<T> grad_bias;

  struct Cache {
    Mat<T> cols;
    Index in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  };

  Conv2d() = default;
  Conv2d(int in, int out, int k, int s, PadMode mode)
      : in_ch(in), out_ch(out), ksize(k), stride(s), pad(k / 2),
        pad_mode(mode) {
    weight.setZero(out_ch, in_ch * ksize * ksize);
    bias.setZero(out_ch);
    grad_weight.setZero(out_ch, in_ch * ksize * ksize);
    grad_bias.setZero(out_ch);
  }

  /// Kaiming-normal weights for ReLU fan-in, zero bias.
  void init_he(std::mt19937_64& rng) {
    const double sd = std::sqrt(2.0 / (in_ch * ksize * ksize));
    std::normal_distribution<double> dist(0.0, sd);
    for (Index i = 0; i < weight.size(); ++i)
      weight.data()[i] = static_cast<T>(dist(rng));
    bias.setZero();
  }

  Index out_extent(Index in) const {
    return (in + 2 * pad - ksize) / stride + 1;
  }

  void im2col(const Mat<T>& x, Index h, Index w, Mat<T>& cols) const {
    const Index oh = out_extent(h), ow = out_extent(w);
    cols.resize(static_cast<Index>(in_ch) * ksize * ksize, oh * ow);
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        const Index j = oy * ow + ox;
        for (int ky = 0; ky < ksize; ++ky) {
          for (int kx = 0; kx < ksize; ++kx) {
            Index iy = oy * stride - pad + ky;
            Index ix = ox * stride - pad + kx;
            bool inside = iy >= 0 && iy < h && ix >= 0 && ix < w;
            if (!inside && pad_mode == PadMode::reflect) {
              iy = detail::reflect101(iy, h);
              ix = detail::reflect101(ix, w);
              inside = true;
            }
            const Index rbase = static_cast<Index>(ky) * ksize + kx;
            if (inside) {
              const Index pos = iy * w + ix;
              for (int c = 0; c < in_ch; ++c)
                cols(static_cast<Index>(c) * ksize * ksize + rbase, j) =
                    x(c, pos);
            } else {
              for (int c = 0; c < in_ch; ++c)
                cols(static_cast<Index>(c) * ksize * ksize + rbase, j) = T(0);
            }
          }
        }
      }
    }
  }

  FeatureMap<T> forward(const FeatureMap<T>& x, Cache* cache = nullptr) const {
    if (x.channels() != in_ch)
      throw std::invalid_argument("Conv2d: input channel mismatch");
    Mat<T> cols;
    im2col(x.data, x.h, x.w, cols);
    FeatureMap<T> y;
    y.h = out_extent(x.h);
    y.w = out_extent(x.w);
    y.data.noalias() = weight * cols;
    y.data.colwise() += bias;
    if (cache) {
      cache->cols = std::move(cols);
      cache->in_h = x.h;
      cache->in_w = x.w;
      cache->out_h = y.h;
      cache->out_w = y.w;
    }
    return y;
  }

  /// Accumulates weight/bias gradients; returns the input gradient unless
  /// `want_dx` is false (the first layer of a network can skip it).
  FeatureMap<T> backward(const FeatureMap<T>& dy, const Cache& cache,
                         bool want_dx = true) {
    grad_weight.noalias() += dy.data * cache.cols.transpose();
    grad_bias.noalias() += dy.data.rowwise().sum();

    FeatureMap<T> dx;
    if (!want_dx) return dx;
    const Mat<T> dcols = weight.transpose() * dy.data;
    dx.h = cache.in_h;
    dx.w = cache.in_w;
    dx.data.setZero(in_ch, cache.in_h * cache.in_w);
    const Index ow = cache.out_w;
    for (Index oy = 0; oy < cache.out_h; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        const Index j = oy * ow + ox;
        for (int ky = 0; ky < ksize; ++ky) {
          for (int kx = 0; kx < ksize; ++kx) {
            Index iy = oy * stride - pad + ky;
            Index ix = ox * stride - pad + kx;
            bool inside =
                iy >= 0 && iy < cache.in_h && ix >= 0 && ix < cache.in_w;
            if (!inside) {
              if (pad_mode == PadMode::zero) continue;
              iy = detail::reflect101(iy, cache.in_h);
              ix = detail::reflect101(ix, cache.in_w);
            }
            const Index pos = iy * cache.in_w + ix;
            const Index rbase = static_cast<Index>(ky) * ksize + kx;
            for (int c = 0; c < in_ch; ++c)
              dx.data(c, pos) +=
                  dcols(static_cast<Index>(c) * ksize * ksize + rbase, j);
          }
        }
      }
    }
    return dx;
  }

  void zero_grads() {
    grad_weight.setZero();
    grad_bias.setZero();
  }
};

}  // namespace milatp
