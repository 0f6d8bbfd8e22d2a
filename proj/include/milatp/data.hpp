#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "milatp/types.hpp"

namespace milatp {

struct WellSample {
  std::string image_path;
  double atp = 0.0;
  std::string group_id;  // empty when the manifest has no groups
};

struct DatasetManifest {
  std::vector<WellSample> samples;
  double atp_max = 0.0;  // largest atp present

  bool has_groups() const {
    for (const auto& s : samples)
      if (!s.group_id.empty()) return true;
    return false;
  }
};

/// Parses a CSV manifest with header `image_path,atp[,group_id]`.
/// Relative image paths are resolved against the manifest's directory.
/// Throws std::runtime_error naming the offending row on malformed input,
/// negative atp, or a missing image file.
DatasetManifest load_manifest(const std::string& path);

/// Writes a manifest; image paths are emitted as given.
void save_manifest(const DatasetManifest& m, const std::string& path);

inline long bin_index(double atp, double r_bin) {
  return static_cast<long>(std::floor(atp / r_bin));
}

struct SamplerConfig {
  int batch_size = 15;
  double r_bin = 20000.0;
  unsigned long long seed = 0;

  std::vector<std::string> validate() const {
    std::vector<std::string> errors;
    if (batch_size < 1)
      errors.push_back("sampler.batch_size must be at least 1");
    if (!(r_bin > 0.0))
      errors.push_back("sampler.r_bin must be positive");
    return errors;
  }
};

/// Stratified batch stream giving every non-empty ATP bin equal draw
/// pressure. Each batch shuffles the list of non-empty bins and walks it
/// round-robin, drawing one uniformly random member per visited bin, until
/// batch_size indices are collected. Draws are with replacement across
/// batches.
class BalancedBatchSampler {
 public:
  BalancedBatchSampler(const DatasetManifest& manifest,
                       const SamplerConfig& cfg)
      : cfg_(cfg), rng_(cfg.seed) {
    if (manifest.samples.empty())
      throw std::invalid_argument("sampler: empty manifest");
    const auto errors = cfg.validate();
    if (!errors.empty())
      throw std::invalid_argument("sampler: " + errors.front());
    std::vector<long> keys;
    for (size_t i = 0; i < manifest.samples.size(); ++i) {
      const long b = bin_index(manifest.samples[i].atp, cfg.r_bin);
      size_t slot = 0;
      for (; slot < keys.size(); ++slot)
        if (keys[slot] == b) break;
      if (slot == keys.size()) {
        keys.push_back(b);
        bins_.emplace_back();
      }
      bins_[slot].push_back(static_cast<Index>(i));
    }
  }

  size_t bin_count() const { return bins_.size(); }

  std::vector<Index> next_batch() {
    std::vector<size_t> order(bins_.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng_);
    std::vector<Index> batch;
    batch.reserve(cfg_.batch_size);
    size_t cursor = 0;
    while (static_cast<int>(batch.size()) < cfg_.batch_size) {
      const auto& bin = bins_[order[cursor % order.size()]];
      std::uniform_int_distribution<size_t> pick(0, bin.size() - 1);
      batch.push_back(bin[pick(rng_)]);
      ++cursor;
    }
    return batch;
  }

 private:
  SamplerConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<std::vector<Index>> bins_;
};

/// Materializes a fixed number of batches; convenience for tests.
inline std::vector<std::vector<Index>> balanced_batches(
    const DatasetManifest& manifest, const SamplerConfig& cfg,
    int n_batches) {
  BalancedBatchSampler sampler(manifest, cfg);
  std::vector<std::vector<Index>> out;
  out.reserve(n_batches);
  for (int i = 0; i < n_batches; ++i) out.push_back(sampler.next_batch());
  return out;
}

}  // namespace milatp
