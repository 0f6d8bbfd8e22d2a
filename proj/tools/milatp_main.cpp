#include <glob.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "milatp/checkpoint.hpp"
#include "milatp/config.hpp"
#include "milatp/engine.hpp"
#include "milatp/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace milatp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Defaults, then the config file, then --set overrides; collects every
/// structural and semantic error before giving up.
RunConfig resolve_config(const std::string& config_path,
                         const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in)
      throw std::runtime_error("config: cannot open " + config_path);
    try {
      in >> doc;
    } catch (const json::parse_error& e) {
      throw std::runtime_error("config: " + config_path + ": " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(&doc, o);

  std::vector<std::string> errors;
  RunConfig cfg = run_config_from_json(doc, &errors);
  for (const auto& e : cfg.validate()) errors.push_back(e);
  if (!errors.empty()) {
    std::ostringstream msg;
    msg << "invalid configuration (" << errors.size() << " error"
        << (errors.size() == 1 ? "" : "s") << "):";
    for (const auto& e : errors) msg << "\n  - " << e;
    throw std::invalid_argument(msg.str());
  }
  return cfg;
}

void echo_config(const RunConfig& cfg, const std::string& dir) {
  std::ofstream out(fs::path(dir) / "config_echo.json");
  if (!out)
    throw std::runtime_error("cannot write config echo into " + dir);
  out << run_config_to_json(cfg).dump(2) << '\n';
}

std::vector<std::string> expand_images(const std::vector<std::string>& args) {
  std::vector<std::string> paths;
  for (const auto& a : args) {
    if (a.find_first_of("*?[") == std::string::npos) {
      paths.push_back(a);
      continue;
    }
    glob_t g{};
    const int rc = glob(a.c_str(), GLOB_TILDE, nullptr, &g);
    if (rc == 0)
      for (size_t i = 0; i < g.gl_pathc; ++i)
        paths.emplace_back(g.gl_pathv[i]);
    globfree(&g);
  }
  return paths;
}

int run_synth(const std::string& out_dir, int n,
              const std::string& config_path,
              const std::vector<std::string>& overrides,
              std::optional<unsigned long long> seed) {
  if (n < 1) {
    std::cerr << "synth: n must be >= 1\n";
    return kExitUsage;
  }
  RunConfig cfg = resolve_config(config_path, overrides);
  if (seed) cfg.synth.seed = *seed;
  const DatasetManifest manifest =
      synthesize_dataset(n, cfg.synth, out_dir);
  echo_config(cfg, out_dir);
  std::cout << (fs::path(out_dir) / "manifest.csv").string() << "\n";
  std::cerr << "synth: wrote " << manifest.samples.size() << " wells, atp range [0, "
            << manifest.atp_max << "]\n";
  return kExitOk;
}

int run_train(const std::string& train_csv, const std::string& val_csv,
              const std::string& config_path,
              const std::vector<std::string>& overrides,
              std::optional<unsigned long long> seed,
              const std::string& out_dir) {
  RunConfig cfg = resolve_config(config_path, overrides);
  if (seed) cfg.train.seed = *seed;

  const DatasetManifest train_manifest = load_manifest(train_csv);
  std::optional<DatasetManifest> val_manifest;
  if (!val_csv.empty()) val_manifest = load_manifest(val_csv);

  fs::create_directories(out_dir);
  echo_config(cfg, out_dir);
  const TrainResult result =
      train(train_manifest, val_manifest, cfg.train, out_dir, &std::cerr);
  std::cout << "best checkpoint: " << result.best_checkpoint << " (epoch "
            << result.best_epoch << ", val MAE " << result.best_val_mae
            << ")\n";
  std::cout << "history: " << result.history_path << "\n";
  return kExitOk;
}

int run_eval(const std::string& ckpt, const std::string& data_csv,
             const std::string& out_file) {
  const MilModel<float> model = load_model(ckpt);
  const DatasetManifest manifest = load_manifest(data_csv);
  const EvalReport report = evaluate(model, manifest);

  fs::path json_path(out_file);
  fs::path csv_path(out_file);
  csv_path.replace_extension(".csv");
  if (csv_path == json_path) csv_path += ".per_sample.csv";
  if (const fs::path dir = json_path.parent_path(); !dir.empty())
    fs::create_directories(dir);
  write_eval_report(report, json_path.string(), csv_path.string());

  std::ostringstream line;
  line << "MAE=" << report.mae << " PEARSON=";
  if (report.pearson)
    line << *report.pearson;
  else
    line << "undefined";
  std::cout << line.str() << "\n";
  return kExitOk;
}

int run_predict(const std::string& ckpt,
                const std::vector<std::string>& image_args,
                const std::string& out_csv) {
  const std::vector<std::string> paths = expand_images(image_args);
  if (paths.empty()) {
    std::cerr << "predict: no images match the given paths\n";
    return kExitRuntime;
  }
  const MilModel<float> model = load_model(ckpt);
  const auto rows = predict(model, paths);

  if (const fs::path dir = fs::path(out_csv).parent_path(); !dir.empty())
    fs::create_directories(dir);
  std::ofstream out(out_csv, std::ios::trunc);
  if (!out) {
    std::cerr << "predict: cannot write " << out_csv << "\n";
    return kExitRuntime;
  }
  out << "image_path,atp_estimate,error\n";
  out.precision(12);
  int failures = 0;
  for (const auto& r : rows) {
    if (r.ok) {
      out << r.path << ',' << r.estimate << ",\n";
    } else {
      std::string note = r.error;
      for (auto& ch : note)
        if (ch == ',' || ch == '\n') ch = ';';
      out << r.path << ",," << note << "\n";
      ++failures;
    }
  }
  if (failures > 0)
    std::cerr << "predict: " << failures << " of " << rows.size()
              << " images failed\n";
  if (failures == static_cast<int>(rows.size())) return kExitRuntime;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "milatp: estimate ATP bioluminescence from well-plate microscopy "
      "images with attention-based multi-instance regression"};
  app.require_subcommand(1);

  std::string config_path, out_dir, train_csv, val_csv, ckpt, data_csv,
      out_file, out_csv;
  std::vector<std::string> overrides, image_args;
  std::optional<unsigned long long> seed;
  int n = 0;

  auto add_config_opts = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path,
                    "JSON config file (defaults apply when omitted)");
    cmd->add_option("--set", overrides,
                    "Override a config field, e.g. --set model.resolution=128")
        ->type_name("KEY=VALUE");
    cmd->add_option("--seed", seed, "Random seed (wins over the config file)");
  };

  CLI::App* synth =
      app.add_subcommand("synth", "Generate a synthetic well dataset");
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--n", n, "Number of wells")->required();
  add_config_opts(synth);

  CLI::App* train_cmd =
      app.add_subcommand("train", "Train a model on a manifest");
  train_cmd->add_option("--train", train_csv, "Training manifest CSV")
      ->required();
  train_cmd->add_option("--val", val_csv,
                        "Validation manifest CSV (stratified holdout when "
                        "omitted)");
  train_cmd->add_option("--out", out_dir, "Output directory")->required();
  add_config_opts(train_cmd);

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  eval_cmd->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--data", data_csv, "Manifest CSV")->required();
  eval_cmd->add_option("--out", out_file, "Report JSON path")->required();

  CLI::App* predict_cmd =
      app.add_subcommand("predict", "Estimate ATP for image files");
  predict_cmd->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  predict_cmd
      ->add_option("--images", image_args,
                   "Image paths or glob patterns")
      ->required();
  predict_cmd->add_option("--out", out_csv, "Output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed())
      return run_synth(out_dir, n, config_path, overrides, seed);
    if (train_cmd->parsed())
      return run_train(train_csv, val_csv, config_path, overrides, seed,
                       out_dir);
    if (eval_cmd->parsed()) return run_eval(ckpt, data_csv, out_file);
    if (predict_cmd->parsed())
      return run_predict(ckpt, image_args, out_csv);
  } catch (const std::invalid_argument& e) {
    std::cerr << argv[0] << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << argv[0] << ": " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
