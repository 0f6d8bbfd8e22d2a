#include "milatp/engine.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "milatp/checkpoint.hpp"
#include "milatp/metrics.hpp"
#include "milatp/nn/adam.hpp"
#include "milatp/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace milatp {

std::pair<std::vector<Index>, std::vector<Index>> stratified_split(
    const DatasetManifest& manifest, double r_bin, double holdout_fraction,
    unsigned long long seed) {
  std::map<long, std::vector<Index>> bins;
  for (size_t i = 0; i < manifest.samples.size(); ++i)
    bins[bin_index(manifest.samples[i].atp, r_bin)].push_back(
        static_cast<Index>(i));

  std::mt19937_64 rng(seed);
  std::vector<Index> train_idx, holdout_idx;
  for (auto& [bin, members] : bins) {
    std::shuffle(members.begin(), members.end(), rng);
    size_t n_hold = static_cast<size_t>(
        std::floor(holdout_fraction * static_cast<double>(members.size())));
    if (n_hold == 0 && members.size() >= 2 && holdout_fraction > 0.0)
      n_hold = 1;
    for (size_t k = 0; k < members.size(); ++k)
      (k < n_hold ? holdout_idx : train_idx).push_back(members[k]);
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(holdout_idx.begin(), holdout_idx.end());
  return {train_idx, holdout_idx};
}

namespace {

ImageF load_preprocessed(const std::string& path, int resolution) {
  return preprocess(load_image(path), resolution);
}

AtpCode<double> code_from_output(const Vec<float>& code) {
  AtpCode<double> c;
  const Index b = code.size();
  c.bits = code.head(b - 1).cast<double>();
  c.fraction = static_cast<double>(code[b - 1]);
  return c;
}

Vec<float> flatten_scaled(const AtpCode<double>& g, double scale) {
  Vec<float> out(g.bits.size() + 1);
  out.head(g.bits.size()) = (g.bits * scale).cast<float>();
  out[g.bits.size()] = static_cast<float>(g.fraction * scale);
  return out;
}

double mae_on(const MilModel<float>& model,
              const std::vector<ImageF>& images,
              const std::vector<double>& truths) {
  double total = 0.0;
  for (size_t i = 0; i < images.size(); ++i)
    total +=
        std::abs(static_cast<double>(model.forward(images[i]).atp_estimate) -
                 truths[i]);
  return total / static_cast<double>(images.size());
}

void write_history(const std::string& path,
                   const std::vector<HistoryRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw std::runtime_error("train: cannot write history " + path);
  out << "epoch,lr,loss_total,loss_cls,loss_reg,val_mae\n";
  out << std::setprecision(12);
  for (const auto& r : rows)
    out << r.epoch << ',' << r.lr << ',' << r.loss_total << ',' << r.loss_cls
        << ',' << r.loss_reg << ',' << r.val_mae << '\n';
}

}  // namespace

TrainResult train(const DatasetManifest& train_manifest,
                  const std::optional<DatasetManifest>& val_manifest,
                  const TrainConfig& cfg, const std::string& out_dir,
                  std::ostream* log) {
  {
    const auto errors = cfg.validate();
    if (!errors.empty()) {
      std::ostringstream msg;
      msg << "train: invalid config:";
      for (const auto& e : errors) msg << "\n  - " << e;
      throw std::invalid_argument(msg.str());
    }
  }
  if (train_manifest.atp_max > cfg.codec.atp_max)
    throw std::invalid_argument(
        "train: manifest atp_max " + std::to_string(train_manifest.atp_max) +
        " exceeds codec atp_max " + std::to_string(cfg.codec.atp_max));
  if (val_manifest && val_manifest->atp_max > cfg.codec.atp_max)
    throw std::invalid_argument(
        "train: validation manifest atp_max exceeds codec atp_max");
  fs::create_directories(out_dir);

  // Resolve the train/validation sample lists.
  std::vector<const WellSample*> train_samples, val_samples;
  if (val_manifest) {
    for (const auto& s : train_manifest.samples) train_samples.push_back(&s);
    for (const auto& s : val_manifest->samples) val_samples.push_back(&s);
  } else {
    const auto [tr, va] = stratified_split(train_manifest, cfg.codec.r_bin,
                                           cfg.val_fraction, cfg.seed + 17);
    for (Index i : tr) train_samples.push_back(&train_manifest.samples[i]);
    for (Index i : va) val_samples.push_back(&train_manifest.samples[i]);
  }
  if (train_samples.empty())
    throw std::invalid_argument("train: no training samples after split");

  // Preprocess once; the cache is reused every epoch.
  std::vector<ImageF> train_images, val_images;
  std::vector<double> train_atps, val_atps;
  for (const auto* s : train_samples) {
    train_images.push_back(
        load_preprocessed(s->image_path, cfg.model.resolution));
    train_atps.push_back(s->atp);
  }
  for (const auto* s : val_samples) {
    val_images.push_back(
        load_preprocessed(s->image_path, cfg.model.resolution));
    val_atps.push_back(s->atp);
  }

  DatasetManifest sampler_view;
  for (const auto* s : train_samples) sampler_view.samples.push_back(*s);
  sampler_view.atp_max = train_manifest.atp_max;
  SamplerConfig sampler_cfg;
  sampler_cfg.batch_size = cfg.batch_size;
  sampler_cfg.r_bin = cfg.codec.r_bin;
  sampler_cfg.seed = cfg.seed + 1;
  BalancedBatchSampler sampler(sampler_view, sampler_cfg);

  MilModel<float> model(cfg.model, cfg.codec);
  model.init(cfg.seed);
  auto params = model.params();
  Adam<float> adam;

  const int batches_per_epoch = static_cast<int>(
      (train_samples.size() + cfg.batch_size - 1) / cfg.batch_size);

  TrainResult result;
  result.best_val_mae = std::numeric_limits<double>::infinity();
  result.best_checkpoint = (fs::path(out_dir) / "best.ckpt").string();
  result.last_checkpoint = (fs::path(out_dir) / "last.ckpt").string();
  result.history_path = (fs::path(out_dir) / "history.csv").string();

  MilModel<float>::ForwardCache cache;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    double sum_total = 0.0, sum_cls = 0.0, sum_reg = 0.0;
    long n_samples = 0;

    for (int b = 0; b < batches_per_epoch; ++b) {
      const auto batch = sampler.next_batch();
      model.zero_grads();
      const double inv_batch = 1.0 / static_cast<double>(batch.size());
      for (size_t slot = 0; slot < batch.size(); ++slot) {
        const Index id = batch[slot];
        ImageF img = train_images[id];
        if (cfg.augment.enabled) {
          const long counter =
              (static_cast<long>(epoch) * batches_per_epoch + b) *
                  cfg.batch_size +
              static_cast<long>(slot);
          img = augment(img, cfg.augment, well_seed(cfg.seed + 2, counter));
        }
        model.forward(img, &cache);
        const AtpCode<double> pred = code_from_output(cache.code);
        AtpCode<double> grad;
        const CompositeParts<double> parts = composite_loss(
            pred, train_atps[id], epoch, cfg.loss, cfg.codec, &grad);
        if (!std::isfinite(parts.total)) {
          std::ostringstream msg;
          msg << "train: non-finite loss at epoch " << epoch << " batch " << b
              << "; sample ids:";
          for (Index sid : batch) msg << ' ' << sid;
          throw std::runtime_error(msg.str());
        }
        sum_total += parts.total;
        sum_cls += parts.cls;
        sum_reg += parts.reg;
        ++n_samples;
        model.backward(flatten_scaled(grad, inv_batch), cache);
      }
      adam.step(params, lr);
    }

    HistoryRow row;
    row.epoch = epoch;
    row.lr = lr;
    row.loss_total = sum_total / static_cast<double>(n_samples);
    row.loss_cls = sum_cls / static_cast<double>(n_samples);
    row.loss_reg = sum_reg / static_cast<double>(n_samples);
    row.val_mae = val_images.empty()
                      ? mae_on(model, train_images, train_atps)
                      : mae_on(model, val_images, val_atps);
    result.history.push_back(row);

    save_model(result.last_checkpoint, model);
    if (row.val_mae < result.best_val_mae) {
      result.best_val_mae = row.val_mae;
      result.best_epoch = epoch;
      save_model(result.best_checkpoint, model);
    }
    write_history(result.history_path, result.history);

    if (log)
      (*log) << "epoch " << epoch << " lr " << lr << " loss "
             << row.loss_total << " (cls " << row.loss_cls << ", reg "
             << row.loss_reg << ") val_mae " << row.val_mae << std::endl;
  }
  return result;
}

EvalReport evaluate(const MilModel<float>& model,
                    const DatasetManifest& manifest) {
  if (manifest.samples.empty())
    throw std::invalid_argument("evaluate: empty manifest");

  EvalReport report;
  Vec<double> truths(manifest.samples.size());
  Vec<double> preds(manifest.samples.size());
  for (size_t i = 0; i < manifest.samples.size(); ++i) {
    const auto& s = manifest.samples[i];
    const ImageF img =
        load_preprocessed(s.image_path, model.config().resolution);
    const double estimate =
        static_cast<double>(model.forward(img).atp_estimate);
    truths[static_cast<Index>(i)] = s.atp;
    preds[static_cast<Index>(i)] = estimate;
    PerSampleEval row;
    row.id = s.image_path;
    row.group_id = s.group_id;
    row.truth = s.atp;
    row.prediction = estimate;
    row.abs_error = std::abs(estimate - s.atp);
    report.per_sample.push_back(std::move(row));
  }
  report.mae = mean_absolute_error(preds, truths);
  report.pearson = pearson(preds, truths);

  if (manifest.has_groups()) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<Index>> groups;
    for (size_t i = 0; i < manifest.samples.size(); ++i) {
      const std::string& g = manifest.samples[i].group_id;
      if (!groups.count(g)) order.push_back(g);
      groups[g].push_back(static_cast<Index>(i));
    }
    for (const auto& g : order) {
      const auto& members = groups[g];
      Vec<double> t(members.size()), p(members.size());
      for (size_t k = 0; k < members.size(); ++k) {
        t[static_cast<Index>(k)] = truths[members[k]];
        p[static_cast<Index>(k)] = preds[members[k]];
      }
      report.per_group.emplace_back(g, pearson(p, t));
    }
  }
  return report;
}

void write_eval_report(const EvalReport& report, const std::string& json_path,
                       const std::string& csv_path) {
  json doc;
  doc["mae"] = report.mae;
  doc["pearson"] =
      report.pearson ? json(*report.pearson) : json(nullptr);
  doc["per_group_pearson"] = json::object();
  for (const auto& [group, rho] : report.per_group)
    doc["per_group_pearson"][group] = rho ? json(*rho) : json(nullptr);
  doc["per_sample"] = json::array();
  for (const auto& s : report.per_sample) {
    json row;
    row["id"] = s.id;
    if (!s.group_id.empty()) row["group_id"] = s.group_id;
    row["truth"] = s.truth;
    row["prediction"] = s.prediction;
    row["abs_error"] = s.abs_error;
    doc["per_sample"].push_back(row);
  }
  std::ofstream out(json_path, std::ios::trunc);
  if (!out)
    throw std::runtime_error("evaluate: cannot write " + json_path);
  out << doc.dump(2) << '\n';

  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv)
    throw std::runtime_error("evaluate: cannot write " + csv_path);
  csv << "id,truth,prediction,abs_error\n";
  csv << std::setprecision(12);
  for (const auto& s : report.per_sample)
    csv << s.id << ',' << s.truth << ',' << s.prediction << ','
        << s.abs_error << '\n';
}

std::vector<PredictionRow> predict(const MilModel<float>& model,
                                   const std::vector<std::string>& paths) {
  std::vector<PredictionRow> rows;
  for (const auto& path : paths) {
    PredictionRow row;
    row.path = path;
    try {
      const ImageF img =
          load_preprocessed(path, model.config().resolution);
      row.estimate = static_cast<double>(model.forward(img).atp_estimate);
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace milatp
