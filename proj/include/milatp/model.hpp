#pragma once

#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "milatp/codec.hpp"
#include "milatp/image.hpp"
#include "milatp/nn/adam.hpp"
#include "milatp/nn/attention.hpp"
#include "milatp/nn/backbone.hpp"
#include "milatp/nn/dense.hpp"
#include "milatp/nn/norm.hpp"
#include "milatp/types.hpp"

namespace milatp {

/// How a well image is decomposed into instances: a fixed grid of image
/// patches, or the positions of a learned convolutional feature map.
enum class InstanceScheme { mesh, learned };

enum class Aggregator { attention, sum, concat };

inline const char* scheme_name(InstanceScheme s) {
  return s == InstanceScheme::mesh ? "mesh" : "learned";
}

inline std::optional<InstanceScheme> parse_scheme(const std::string& s) {
  if (s == "mesh") return InstanceScheme::mesh;
  if (s == "learned") return InstanceScheme::learned;
  return std::nullopt;
}

inline const char* aggregator_name(Aggregator a) {
  switch (a) {
    case Aggregator::attention: return "attention";
    case Aggregator::sum: return "sum";
    default: return "concat";
  }
}

inline std::optional<Aggregator> parse_aggregator(const std::string& s) {
  if (s == "attention") return Aggregator::attention;
  if (s == "sum") return Aggregator::sum;
  if (s == "concat") return Aggregator::concat;
  return std::nullopt;
}

inline const char* pad_mode_name(PadMode m) {
  return m == PadMode::zero ? "zero" : "reflect";
}

inline std::optional<PadMode> parse_pad_mode(const std::string& s) {
  if (s == "zero") return PadMode::zero;
  if (s == "reflect") return PadMode::reflect;
  return std::nullopt;
}

struct ModelConfig {
  InstanceScheme scheme = InstanceScheme::learned;
  Aggregator aggregator = Aggregator::attention;
  int resolution = 256;
  int grid_rows = 8;
  int grid_cols = 8;
  std::vector<int> channels{32, 64, 128, 256};
  int attention_hidden = 128;
  int head_hidden = 256;
  PadMode pad_mode = PadMode::zero;

  std::vector<std::string> validate() const {
    std::vector<std::string> errors;
    if (resolution < 2)
      errors.push_back("model.resolution must be at least 2");
    if (scheme == InstanceScheme::mesh) {
      if (grid_rows < 1 || grid_cols < 1)
        errors.push_back("model.grid dimensions must be positive");
      else if (resolution % grid_rows != 0 || resolution % grid_cols != 0)
        errors.push_back("model.resolution " + std::to_string(resolution) +
                         " is not divisible by the " +
                         std::to_string(grid_rows) + "x" +
                         std::to_string(grid_cols) + " grid");
    }
    if (channels.empty())
      errors.push_back("model.channels must be non-empty");
    for (int c : channels)
      if (c < 1) {
        errors.push_back("model.channels entries must be positive");
        break;
      }
    if (attention_hidden < 1)
      errors.push_back("model.attention_hidden must be positive");
    if (head_hidden < 1)
      errors.push_back("model.head_hidden must be positive");
    return errors;
  }

  void require_valid() const {
    const auto errors = validate();
    if (!errors.empty())
      throw std::invalid_argument("invalid model config: " + errors.front());
  }
};

enum class InstanceProvenance { mesh_patch, map_position };

/// A well image decomposed into instances: one feature row per instance.
template <class T>
struct InstanceBag {
  Mat<T> features;  // n_instances x feature_dim
  InstanceProvenance provenance = InstanceProvenance::map_position;
  Index grid_h = 0;  // spatial arrangement of the instances
  Index grid_w = 0;
};

template <class T>
struct BagPrediction {
  Vec<T> code;        // probabilistic code, entries in (0, 1)
  T atp_estimate = T(0);  // hard-decoded physical value
  Vec<T> embedding;   // pooled bag feature
  Vec<T> attention;   // per-instance weights; empty for sum/concat
  Index grid_h = 0;   // instance arrangement matching `attention`
  Index grid_w = 0;
};

/// Splits a square image into a row-major grid of equally sized patches.
inline std::vector<ImageF> make_mesh_instances(const ImageF& img, int rows,
                                               int cols) {
  if (rows < 1 || cols < 1)
    throw std::invalid_argument("make_mesh_instances: grid must be positive");
  if (img.rows() % rows != 0 || img.cols() % cols != 0)
    throw std::invalid_argument(
        "make_mesh_instances: image " + std::to_string(img.rows()) + "x" +
        std::to_string(img.cols()) + " is not divisible by the " +
        std::to_string(rows) + "x" + std::to_string(cols) + " grid");
  const Index ph = img.rows() / rows, pw = img.cols() / cols;
  std::vector<ImageF> patches;
  patches.reserve(static_cast<size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      patches.push_back(img.block(r * ph, c * pw, ph, pw));
  return patches;
}

/// Multi-instance regression model: a shared convolutional backbone embeds
/// each instance, an aggregator pools the bag into one feature, and a
/// two-layer head emits the probabilistic code.
template <class T>
class MilModel {
 public:
  struct ForwardCache {
    std::vector<typename Backbone<T>::Cache> patch_caches;
    std::vector<Index> patch_positions;  // spatial size of each patch map
    typename Backbone<T>::Cache map_cache;
    InstanceBag<T> bag;
    typename LayerNorm<T>::Cache norm_cache;
    AttentionCache<T> attn_cache;
    Vec<T> z;       // pooled embedding
    typename LayerNorm<T>::Cache head_norm_cache;
    Vec<T> zn;      // normalized head input
    Vec<T> h1;      // first head layer, pre-activation
    Vec<T> a1;      // relu(h1)
    Vec<T> logits;  // second head layer, pre-sigmoid
    Vec<T> code;    // sigmoid output
  };

  MilModel() = default;
  MilModel(const ModelConfig& cfg, const CodecConfig& codec)
      : cfg_(cfg), codec_(codec) {
    cfg_.require_valid();
    codec_.require_valid();
    backbone_ = Backbone<T>(BackboneConfig{cfg_.channels, cfg_.pad_mode});
    norm_ = LayerNorm<T>(feature_dim());
    if (cfg_.aggregator == Aggregator::attention)
      attn_ = AttentionParams<T>(cfg_.attention_hidden, feature_dim());
    head_norm_ = LayerNorm<T>(embedding_dim());
    head1_ = Dense<T>(static_cast<int>(embedding_dim()), cfg_.head_hidden);
    head2_ = Dense<T>(cfg_.head_hidden, codec_.code_dim());
  }

  const ModelConfig& config() const { return cfg_; }
  const CodecConfig& codec() const { return codec_; }

  Index feature_dim() const { return backbone_.out_channels(); }

  Index instance_count() const {
    if (cfg_.scheme == InstanceScheme::mesh)
      return static_cast<Index>(cfg_.grid_rows) * cfg_.grid_cols;
    const Index e = backbone_.map_extent(cfg_.resolution);
    return e * e;
  }

  Index embedding_dim() const {
    if (cfg_.aggregator == Aggregator::concat)
      return instance_count() * feature_dim();
    return feature_dim();
  }

  void init(unsigned long long seed) {
    std::mt19937_64 rng(seed);
    backbone_.init(rng);
    norm_.reset(feature_dim());
    if (cfg_.aggregator == Aggregator::attention) attn_.init(rng);
    head_norm_.reset(embedding_dim());
    head1_.init_he(rng);
    head2_.init_he(rng);
    // Start the output layer small so the code begins near chance instead
    // of a confidently wrong pattern.
    head2_.weight *= T(0.1);
  }

  /// Embeds the instances of one preprocessed image into a bag.
  InstanceBag<T> extract_instances(const ImageF& img,
                                   ForwardCache* cache = nullptr) const {
    if (img.rows() != cfg_.resolution || img.cols() != cfg_.resolution)
      throw std::invalid_argument(
          "model: expected a " + std::to_string(cfg_.resolution) + "x" +
          std::to_string(cfg_.resolution) + " image, got " +
          std::to_string(img.rows()) + "x" + std::to_string(img.cols()));

    InstanceBag<T> bag;
    if (cfg_.scheme == InstanceScheme::mesh) {
      const auto patches =
          make_mesh_instances(img, cfg_.grid_rows, cfg_.grid_cols);
      const Index n = static_cast<Index>(patches.size());
      bag.features.resize(n, feature_dim());
      bag.provenance = InstanceProvenance::mesh_patch;
      bag.grid_h = cfg_.grid_rows;
      bag.grid_w = cfg_.grid_cols;
      if (cache) {
        cache->patch_caches.resize(patches.size());
        cache->patch_positions.resize(patches.size());
      }
      for (Index i = 0; i < n; ++i) {
        const FeatureMap<T> in = map_from_image<T>(patches[i]);
        const FeatureMap<T> out = backbone_.forward(
            in, cache ? &cache->patch_caches[i] : nullptr);
        bag.features.row(i) =
            out.data.rowwise().mean().transpose();  // global average pool
        if (cache) cache->patch_positions[i] = out.data.cols();
      }
    } else {
      const FeatureMap<T> in = map_from_image<T>(img);
      const FeatureMap<T> out =
          backbone_.forward(in, cache ? &cache->map_cache : nullptr);
      bag.features = out.data.transpose();
      bag.provenance = InstanceProvenance::map_position;
      bag.grid_h = out.h;
      bag.grid_w = out.w;
    }
    if (cache) cache->bag = bag;
    return bag;
  }

  /// Pools an instance bag and runs the prediction head.
  BagPrediction<T> predict_bag(const InstanceBag<T>& bag,
                               ForwardCache* cache = nullptr) const {
    if (bag.features.rows() != instance_count())
      throw std::invalid_argument("model: bag has " +
                                  std::to_string(bag.features.rows()) +
                                  " instances, expected " +
                                  std::to_string(instance_count()));
    // Normalizing each instance vector keeps the pooled scale bounded no
    // matter how deep the backbone is; attention and the heads then operate
    // in a well-conditioned range.
    const Mat<T> normed =
        norm_.forward(bag.features, cache ? &cache->norm_cache : nullptr);
    PooledFeature<T> pooled;
    switch (cfg_.aggregator) {
      case Aggregator::attention:
        pooled = attention_pool(normed, attn_,
                                cache ? &cache->attn_cache : nullptr);
        break;
      case Aggregator::sum:
        pooled = sum_pool(normed);
        break;
      case Aggregator::concat:
        pooled = concat_pool(normed);
        break;
    }
    // Sum and concat pooling scale with the bag size, so the head first
    // standardizes its input; every aggregator then feeds the same
    // well-conditioned range into the dense layers.
    const Vec<T> zn =
        head_norm_
            .forward(pooled.z.transpose(),
                     cache ? &cache->head_norm_cache : nullptr)
            .row(0)
            .transpose();
    const Vec<T> h1 = head1_.forward(zn);
    const Vec<T> a1 = relu<T>(h1);
    const Vec<T> logits = head2_.forward(a1);
    const Vec<T> code = sigmoid<T>(logits);
    if (!code.allFinite())
      throw std::runtime_error("model: non-finite prediction");
    if (cache) {
      cache->z = pooled.z;
      cache->zn = zn;
      cache->h1 = h1;
      cache->a1 = a1;
      cache->logits = logits;
      cache->code = code;
    }

    BagPrediction<T> pred;
    pred.code = code;
    pred.atp_estimate = hard_decode(code, codec_);
    pred.embedding = pooled.z;
    pred.attention = pooled.attention;
    pred.grid_h = bag.grid_h;
    pred.grid_w = bag.grid_w;
    return pred;
  }

  BagPrediction<T> forward(const ImageF& img,
                           ForwardCache* cache = nullptr) const {
    return predict_bag(extract_instances(img, cache), cache);
  }

  /// Accumulates parameter gradients given d(loss)/d(code).
  void backward(const Vec<T>& dcode, const ForwardCache& cache) {
    // Sigmoid derivative from the pre-activation. The rounded output would
    // give exactly zero once a unit saturates; exp(-|l|)/(1+exp(-|l|))^2
    // stays positive far beyond that point.
    const Vec<T> t = (-cache.logits.array().abs()).exp().matrix();
    const Vec<T> dlogits =
        (dcode.array() * t.array() / (T(1) + t.array()).square()).matrix();
    const Vec<T> da1 = head2_.backward(cache.a1, dlogits);
    const Vec<T> dh1 = relu_backward<T>(cache.h1, da1);
    const Vec<T> dzn = head1_.backward(cache.zn, dh1);
    const Vec<T> dz = head_norm_
                          .backward(dzn.transpose(), cache.head_norm_cache)
                          .row(0)
                          .transpose();

    const Index n = cache.bag.features.rows();
    Mat<T> dH;
    switch (cfg_.aggregator) {
      case Aggregator::attention:
        dH = attention_pool_backward(attn_, cache.attn_cache, dz);
        break;
      case Aggregator::sum:
        dH = sum_pool_backward<T>(n, dz);
        break;
      case Aggregator::concat:
        dH = concat_pool_backward<T>(n, feature_dim(), dz);
        break;
    }
    dH = norm_.backward(dH, cache.norm_cache);

    if (cfg_.scheme == InstanceScheme::mesh) {
      for (Index i = 0; i < n; ++i) {
        const Index positions = cache.patch_positions[i];
        FeatureMap<T> dmap;
        dmap.h = cache.patch_caches[i].pre_out.h;
        dmap.w = cache.patch_caches[i].pre_out.w;
        dmap.data.resize(feature_dim(), positions);
        dmap.data.colwise() =
            dH.row(i).transpose() / static_cast<T>(positions);
        backbone_.backward(dmap, cache.patch_caches[i]);
      }
    } else {
      FeatureMap<T> dmap;
      dmap.h = cache.map_cache.pre_out.h;
      dmap.w = cache.map_cache.pre_out.w;
      dmap.data = dH.transpose();
      backbone_.backward(dmap, cache.map_cache);
    }
  }

  void zero_grads() {
    backbone_.zero_grads();
    norm_.zero_grads();
    if (cfg_.aggregator == Aggregator::attention) attn_.zero_grads();
    head_norm_.zero_grads();
    head1_.zero_grads();
    head2_.zero_grads();
  }

  /// Flat registry of every trainable tensor, in a stable order.
  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    auto add_mat = [&out](const std::string& name, Mat<T>& v, Mat<T>& g) {
      out.push_back({name, v.data(), g.data(), v.size(), {v.rows(), v.cols()}});
    };
    auto add_vec = [&out](const std::string& name, Vec<T>& v, Vec<T>& g) {
      out.push_back({name, v.data(), g.data(), v.size(), {v.size()}});
    };
    auto add_conv = [&](const std::string& name, Conv2d<T>& c) {
      add_mat(name + ".weight", c.weight, c.grad_weight);
      add_vec(name + ".bias", c.bias, c.grad_bias);
    };
    add_conv("stem", backbone_.stem);
    for (size_t i = 0; i < backbone_.stages.size(); ++i) {
      const std::string base = "stage" + std::to_string(i);
      add_conv(base + ".conv1", backbone_.stages[i].conv1);
      add_conv(base + ".conv2", backbone_.stages[i].conv2);
      if (backbone_.stages[i].has_proj)
        add_conv(base + ".proj", backbone_.stages[i].proj);
    }
    add_vec("norm.gain", norm_.gain, norm_.grad_gain);
    add_vec("norm.bias", norm_.bias, norm_.grad_bias);
    if (cfg_.aggregator == Aggregator::attention) {
      add_mat("attention.V", attn_.V, attn_.grad_V);
      add_vec("attention.w", attn_.w, attn_.grad_w);
    }
    add_vec("head_norm.gain", head_norm_.gain, head_norm_.grad_gain);
    add_vec("head_norm.bias", head_norm_.bias, head_norm_.grad_bias);
    add_mat("head1.weight", head1_.weight, head1_.grad_weight);
    add_vec("head1.bias", head1_.bias, head1_.grad_bias);
    add_mat("head2.weight", head2_.weight, head2_.grad_weight);
    add_vec("head2.bias", head2_.bias, head2_.grad_bias);
    return out;
  }

 private:
  ModelConfig cfg_;
  CodecConfig codec_;
  Backbone<T> backbone_;
  LayerNorm<T> norm_;
  LayerNorm<T> head_norm_;
  AttentionParams<T> attn_;
  Dense<T> head1_;
  Dense<T> head2_;
};

}  // namespace milatp
