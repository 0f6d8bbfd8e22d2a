#pragma once

#include <random>
#include <stdexcept>
#include <vector>

#include "milatp/nn/conv.hpp"
#include "milatp/nn/dense.hpp"
#include "milatp/nn/feature_map.hpp"

namespace milatp {

/// Pre-activation residual stage:
///   y = shortcut(x) + conv2(relu(conv1(relu(x))))
/// The shortcut is the identity when shape is preserved, otherwise a 1x1
/// strided projection. With the branch weights zeroed, a shape-preserving
/// stage reproduces its input exactly.
template <class T>
struct ResidualStage {
  Conv2d<T> conv1;
  Conv2d<T> conv2;
  Conv2d<T> proj;
  bool has_proj = false;

  struct Cache {
    FeatureMap<T> x;   // stage input, relu mask for conv1
    FeatureMap<T> u;   // conv1 output, relu mask for conv2
    typename Conv2d<T>::Cache c1, c2, cp;
  };

  ResidualStage() = default;
  ResidualStage(int in, int out, int stride, PadMode mode)
      : conv1(in, out, 3, stride, mode),
        conv2(out, out, 3, 1, mode),
        has_proj(in != out || stride != 1) {
    if (has_proj) proj = Conv2d<T>(in, out, 1, stride, mode);
  }

  void init(std::mt19937_64& rng) {
    conv1.init_he(rng);
    conv2.init_he(rng);
    if (has_proj) proj.init_he(rng);
  }

  FeatureMap<T> forward(const FeatureMap<T>& x, Cache* cache = nullptr) const {
    FeatureMap<T> a1{relu<T>(x.data), x.h, x.w};
    FeatureMap<T> u = conv1.forward(a1, cache ? &cache->c1 : nullptr);
    FeatureMap<T> a2{relu<T>(u.data), u.h, u.w};
    FeatureMap<T> y = conv2.forward(a2, cache ? &cache->c2 : nullptr);
    if (has_proj)
      y.data += proj.forward(x, cache ? &cache->cp : nullptr).data;
    else
      y.data += x.data;
    if (cache) {
      cache->x = x;
      cache->u = u;
    }
    return y;
  }

  FeatureMap<T> backward(const FeatureMap<T>& dy, const Cache& cache) {
    FeatureMap<T> da2 = conv2.backward(dy, cache.c2);
    FeatureMap<T> du{relu_backward<T>(cache.u.data, da2.data), da2.h, da2.w};
    FeatureMap<T> da1 = conv1.backward(du, cache.c1);
    FeatureMap<T> dx{relu_backward<T>(cache.x.data, da1.data), da1.h, da1.w};
    if (has_proj)
      dx.data += proj.backward(dy, cache.cp).data;
    else
      dx.data += dy.data;
    return dx;
  }

  void zero_grads() {
    conv1.zero_grads();
    conv2.zero_grads();
    if (has_proj) proj.zero_grads();
  }
};

struct BackboneConfig {
  std::vector<int> channels{32, 64, 128, 256};
  PadMode pad_mode = PadMode::zero;
};

/// Strided stem convolution followed by one downsampling residual stage per
/// channel entry and a final ReLU, for a total stride of 2^(stages + 1).
template <class T>
struct Backbone {
  Conv2d<T> stem;
  std::vector<ResidualStage<T>> stages;

  struct Cache {
    typename Conv2d<T>::Cache stem_cache;
    std::vector<typename ResidualStage<T>::Cache> stage_caches;
    FeatureMap<T> pre_out;  // relu mask for the final activation
  };

  Backbone() = default;
  explicit Backbone(const BackboneConfig& cfg) {
    if (cfg.channels.empty())
      throw std::invalid_argument("backbone: channels must be non-empty");
    stem = Conv2d<T>(1, cfg.channels[0], 3, 2, cfg.pad_mode);
    int prev = cfg.channels[0];
    for (int c : cfg.channels) {
      if (c < 1)
        throw std::invalid_argument("backbone: channel counts must be positive");
      stages.emplace_back(prev, c, 2, cfg.pad_mode);
      prev = c;
    }
  }

  int out_channels() const {
    return stages.empty() ? stem.out_ch : stages.back().conv2.out_ch;
  }

  Index total_stride() const {
    Index s = stem.stride;
    for (const auto& st : stages) s *= st.conv1.stride;
    return s;
  }

  /// Side length of the output map for a square input of the given size.
  Index map_extent(Index in) const {
    Index e = stem.out_extent(in);
    for (const auto& st : stages) e = st.conv1.out_extent(e);
    return e;
  }

  void init(std::mt19937_64& rng) {
    stem.init_he(rng);
    for (auto& st : stages) st.init(rng);
  }

  FeatureMap<T> forward(const FeatureMap<T>& image,
                        Cache* cache = nullptr) const {
    if (cache) cache->stage_caches.resize(stages.size());
    FeatureMap<T> x = stem.forward(image, cache ? &cache->stem_cache : nullptr);
    for (size_t i = 0; i < stages.size(); ++i)
      x = stages[i].forward(x, cache ? &cache->stage_caches[i] : nullptr);
    if (cache) cache->pre_out = x;
    x.data = relu<T>(x.data);
    return x;
  }

  /// Propagates the gradient of the final feature map back through every
  /// stage, accumulating parameter gradients. The gradient with respect to
  /// the input image is not materialized.
  void backward(const FeatureMap<T>& d_out, const Cache& cache) {
    FeatureMap<T> g{relu_backward<T>(cache.pre_out.data, d_out.data),
                    d_out.h, d_out.w};
    for (size_t i = stages.size(); i-- > 0;)
      g = stages[i].backward(g, cache.stage_caches[i]);
    stem.backward(g, cache.stem_cache, /*want_dx=*/false);
  }

  void zero_grads() {
    stem.zero_grads();
    for (auto& st : stages) st.zero_grads();
  }
};

}  // namespace milatp
