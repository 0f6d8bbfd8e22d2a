#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "milatp/checkpoint.hpp"
#include "milatp/config.hpp"

using namespace milatp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("milatp_ckpt_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.scheme = InstanceScheme::learned;
  cfg.aggregator = Aggregator::attention;
  cfg.resolution = 32;
  cfg.channels = {4, 8};
  cfg.attention_hidden = 8;
  cfg.head_hidden = 16;
  return cfg;
}

ImageF random_image(Index h, Index w, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  ImageF img(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) img(y, x) = unit(rng);
  return img;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("checkpoint raw container round-trips exactly") {
  TempDir dir;
  CheckpointData data;
  data.config_json = R"({"free":"form"})";
  CheckpointTensor a;
  a.name = "layer.weight";
  a.shape = {2, 3};
  a.values = {1.0f, -2.5f, 3.25f, 0.0f, 1e-30f, 6.5e8f};
  CheckpointTensor b;
  b.name = "layer.bias";
  b.shape = {3};
  b.values = {0.1f, 0.2f, 0.3f};
  data.tensors = {a, b};

  const auto path = (dir.path / "raw.ckpt").string();
  write_checkpoint_file(path, data);
  const CheckpointData back = read_checkpoint_file(path);
  CHECK(back.config_json == data.config_json);
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.tensors[0].name == "layer.weight");
  CHECK(back.tensors[0].shape == std::vector<Index>{2, 3});
  CHECK(back.tensors[0].values == a.values);
  CHECK(back.tensors[1].values == b.values);
}

TEST_CASE("model save/load restores weights and behavior bit-for-bit") {
  TempDir dir;
  MilModel<float> model(tiny_model_config(), CodecConfig{});
  model.init(17);
  const auto path = (dir.path / "model.ckpt").string();
  save_model(path, model);

  MilModel<float> loaded = load_model(path);
  CHECK(model_to_json(loaded.config()) == model_to_json(model.config()));
  CHECK(codec_to_json(loaded.codec()) == codec_to_json(model.codec()));

  auto p0 = model.params();
  auto p1 = loaded.params();
  REQUIRE(p0.size() == p1.size());
  for (size_t i = 0; i < p0.size(); ++i) {
    CHECK(p0[i].name == p1[i].name);
    REQUIRE(p0[i].size == p1[i].size);
    for (Index k = 0; k < p0[i].size; ++k)
      CHECK(p0[i].value[k] == p1[i].value[k]);
  }

  const ImageF img = random_image(32, 32, 3);
  const auto out0 = model.forward(img);
  const auto out1 = loaded.forward(img);
  CHECK(out0.atp_estimate == out1.atp_estimate);
  CHECK((out0.code - out1.code).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("checkpoint reader rejects foreign and damaged files") {
  TempDir dir;

  const auto missing = (dir.path / "absent.ckpt").string();
  CHECK_THROWS_WITH_AS(read_checkpoint_file(missing),
                       doctest::Contains("cannot open"), std::runtime_error);

  const auto garbage = dir.path / "garbage.ckpt";
  spit(garbage, "definitely not a checkpoint");
  CHECK_THROWS_WITH_AS(read_checkpoint_file(garbage.string()),
                       doctest::Contains("not a checkpoint file"),
                       std::runtime_error);

  MilModel<float> model(tiny_model_config(), CodecConfig{});
  model.init(1);
  const auto good = dir.path / "good.ckpt";
  save_model(good.string(), model);
  const std::string bytes = slurp(good);

  const auto truncated = dir.path / "short.ckpt";
  spit(truncated, bytes.substr(0, bytes.size() - 10));
  CHECK_THROWS_WITH_AS(read_checkpoint_file(truncated.string()),
                       doctest::Contains("truncated"), std::runtime_error);

  std::string wrong_version = bytes;
  wrong_version[8] = 2;  // version field follows the 8-byte magic
  const auto versioned = dir.path / "v2.ckpt";
  spit(versioned, wrong_version);
  CHECK_THROWS_WITH_AS(read_checkpoint_file(versioned.string()),
                       doctest::Contains("unsupported version 2"),
                       std::runtime_error);
}

TEST_CASE("load_model reports config and tensor mismatches") {
  TempDir dir;
  MilModel<float> model(tiny_model_config(), CodecConfig{});
  model.init(5);
  const auto good = dir.path / "good.ckpt";
  save_model(good.string(), model);

  CheckpointData data = read_checkpoint_file(good.string());

  {
    CheckpointData bad = data;
    bad.config_json = "not json";
    const auto p = dir.path / "badcfg.ckpt";
    write_checkpoint_file(p.string(), bad);
    CHECK_THROWS_WITH_AS(load_model(p.string()),
                         doctest::Contains("malformed config echo"),
                         std::runtime_error);
  }
  {
    CheckpointData bad = data;
    bad.tensors.pop_back();
    const auto p = dir.path / "fewer.ckpt";
    write_checkpoint_file(p.string(), bad);
    CHECK_THROWS_WITH_AS(load_model(p.string()),
                         doctest::Contains("model expects"),
                         std::runtime_error);
  }
  {
    CheckpointData bad = data;
    bad.tensors[0].name = "imposter";
    const auto p = dir.path / "renamed.ckpt";
    write_checkpoint_file(p.string(), bad);
    CHECK_THROWS_WITH_AS(load_model(p.string()),
                         doctest::Contains("is named imposter"),
                         std::runtime_error);
  }
  {
    CheckpointData bad = data;
    bad.tensors[0].values.push_back(0.0f);
    const auto p = dir.path / "resized.ckpt";
    write_checkpoint_file(p.string(), bad);
    CHECK_THROWS_WITH_AS(load_model(p.string()),
                         doctest::Contains("mismatched shape"),
                         std::runtime_error);
  }
}

TEST_CASE("param registry names are stable and unique") {
  MilModel<float> model(tiny_model_config(), CodecConfig{});
  model.init(2);
  std::vector<std::string> names;
  for (const auto& p : model.params()) names.push_back(p.name);
  CHECK(names.front() == "stem.weight");
  std::vector<std::string> sorted = names;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  bool has_attention = false;
  for (const auto& n : names) has_attention |= (n == "attention.V");
  CHECK(has_attention);
}
