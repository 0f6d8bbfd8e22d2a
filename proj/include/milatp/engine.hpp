#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "milatp/data.hpp"
#include "milatp/image.hpp"
#include "milatp/loss.hpp"
#include "milatp/model.hpp"

namespace milatp {

struct TrainConfig {
  int epochs = 200;
  double lr = 0.002;
  double lr_decay_factor = 0.1;
  int lr_decay_period = 10;  // epochs between decays
  double lr_floor = 1e-6;
  int batch_size = 15;
  double val_fraction = 0.1;  // stratified holdout when no val manifest
  unsigned long long seed = 0;
  LossConfig loss;
  CodecConfig codec;
  ModelConfig model;
  AugmentConfig augment;

  std::vector<std::string> validate() const {
    std::vector<std::string> errors;
    if (epochs < 1) errors.push_back("train.epochs must be at least 1");
    if (!(lr > 0.0)) errors.push_back("train.lr must be positive");
    if (!(lr_decay_factor > 0.0) || lr_decay_factor > 1.0)
      errors.push_back("train.lr_decay_factor must be in (0, 1]");
    if (lr_decay_period < 1)
      errors.push_back("train.lr_decay_period must be at least 1");
    if (lr_floor < 0.0)
      errors.push_back("train.lr_floor must be non-negative");
    if (batch_size < 1)
      errors.push_back("train.batch_size must be at least 1");
    if (val_fraction < 0.0 || val_fraction > 0.5)
      errors.push_back("train.val_fraction must be in [0, 0.5]");
    loss.validate(errors);
    codec.validate(errors);
    for (const auto& e : model.validate()) errors.push_back(e);
    return errors;
  }
};

/// Stepped learning-rate schedule with a floor.
inline double lr_at(int epoch, const TrainConfig& cfg) {
  double value = cfg.lr;
  for (int k = 0; k < epoch / cfg.lr_decay_period; ++k)
    value *= cfg.lr_decay_factor;
  return std::max(value, cfg.lr_floor);
}

/// Deterministic stratified-by-bin split into (train, holdout) index lists.
std::pair<std::vector<Index>, std::vector<Index>> stratified_split(
    const DatasetManifest& manifest, double r_bin, double holdout_fraction,
    unsigned long long seed);

struct HistoryRow {
  int epoch = 0;
  double lr = 0.0;
  double loss_total = 0.0;
  double loss_cls = 0.0;
  double loss_reg = 0.0;
  double val_mae = 0.0;
};

struct TrainResult {
  std::vector<HistoryRow> history;
  double best_val_mae = 0.0;
  int best_epoch = 0;
  std::string best_checkpoint;
  std::string last_checkpoint;
  std::string history_path;
};

/// Runs the full training loop and writes best.ckpt, last.ckpt, and
/// history.csv into out_dir. When no validation manifest is supplied a
/// stratified holdout is carved from the training manifest. Aborts with the
/// offending batch's sample ids when the loss turns non-finite.
TrainResult train(const DatasetManifest& train_manifest,
                  const std::optional<DatasetManifest>& val_manifest,
                  const TrainConfig& cfg, const std::string& out_dir,
                  std::ostream* log = nullptr);

struct PerSampleEval {
  std::string id;
  std::string group_id;
  double truth = 0.0;
  double prediction = 0.0;
  double abs_error = 0.0;
};

struct EvalReport {
  double mae = 0.0;
  std::optional<double> pearson;  // undefined for degenerate inputs
  std::vector<std::pair<std::string, std::optional<double>>> per_group;
  std::vector<PerSampleEval> per_sample;
};

EvalReport evaluate(const MilModel<float>& model,
                    const DatasetManifest& manifest);

/// JSON report plus a per-sample CSV `id,truth,prediction,abs_error`.
void write_eval_report(const EvalReport& report, const std::string& json_path,
                       const std::string& csv_path);

struct PredictionRow {
  std::string path;
  bool ok = false;
  double estimate = 0.0;
  std::string error;  // populated when !ok
};

/// Per-file failures are reported in the row; the batch continues.
std::vector<PredictionRow> predict(const MilModel<float>& model,
                                   const std::vector<std::string>& paths);

}  // namespace milatp
