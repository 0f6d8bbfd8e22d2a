#include "milatp/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "milatp/config.hpp"

using json = nlohmann::json;

namespace milatp {

namespace {

constexpr char kMagic[8] = {'M', 'I', 'L', 'A', 'T', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in)
    throw std::runtime_error("checkpoint: " + path + " is truncated");
  return v;
}

std::string read_bytes(std::ifstream& in, std::uint64_t n,
                       const std::string& path) {
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in)
    throw std::runtime_error("checkpoint: " + path + " is truncated");
  return s;
}

}  // namespace

void write_checkpoint_file(const std::string& path,
                           const CheckpointData& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint64_t>(data.config_json.size()));
  out.write(data.config_json.data(),
            static_cast<std::streamsize>(data.config_json.size()));
  write_pod(out, static_cast<std::uint32_t>(data.tensors.size()));
  for (const auto& t : data.tensors) {
    write_pod(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_pod(out, static_cast<std::uint32_t>(t.shape.size()));
    for (Index d : t.shape) write_pod(out, static_cast<std::uint64_t>(d));
    write_pod(out, static_cast<std::uint64_t>(t.values.size()));
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(float)));
  }
  if (!out)
    throw std::runtime_error("checkpoint: write failed for " + path);
}

CheckpointData read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: " + path +
                             " is not a checkpoint file");
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: " + path +
                             " has unsupported version " +
                             std::to_string(version));
  CheckpointData data;
  const auto json_len = read_pod<std::uint64_t>(in, path);
  data.config_json = read_bytes(in, json_len, path);
  const auto n_tensors = read_pod<std::uint32_t>(in, path);
  data.tensors.resize(n_tensors);
  for (auto& t : data.tensors) {
    const auto name_len = read_pod<std::uint32_t>(in, path);
    t.name = read_bytes(in, name_len, path);
    const auto ndim = read_pod<std::uint32_t>(in, path);
    t.shape.resize(ndim);
    for (auto& d : t.shape)
      d = static_cast<Index>(read_pod<std::uint64_t>(in, path));
    const auto count = read_pod<std::uint64_t>(in, path);
    t.values.resize(count);
    in.read(reinterpret_cast<char*>(t.values.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!in)
      throw std::runtime_error("checkpoint: " + path + " is truncated");
  }
  return data;
}

void save_model(const std::string& path, MilModel<float>& model) {
  CheckpointData data;
  json cfg;
  cfg["codec"] = codec_to_json(model.codec());
  cfg["model"] = model_to_json(model.config());
  data.config_json = cfg.dump();
  for (const auto& p : model.params()) {
    CheckpointTensor t;
    t.name = p.name;
    t.shape = p.shape;
    t.values.assign(p.value, p.value + p.size);
    data.tensors.push_back(std::move(t));
  }
  write_checkpoint_file(path, data);
}

MilModel<float> load_model(const std::string& path) {
  const CheckpointData data = read_checkpoint_file(path);
  json cfg = json::parse(data.config_json, nullptr, false);
  if (cfg.is_discarded() || !cfg.is_object() || !cfg.contains("codec") ||
      !cfg.contains("model"))
    throw std::runtime_error("checkpoint: " + path +
                             " has a malformed config echo");
  CodecConfig codec;
  ModelConfig model_cfg;
  std::vector<std::string> errors;
  codec_from_json(cfg["codec"], &codec, &errors);
  model_from_json(cfg["model"], &model_cfg, &errors);
  if (!errors.empty())
    throw std::runtime_error("checkpoint: " + path + " config echo: " +
                             errors.front());

  MilModel<float> model(model_cfg, codec);
  auto params = model.params();
  if (params.size() != data.tensors.size())
    throw std::runtime_error(
        "checkpoint: " + path + " holds " +
        std::to_string(data.tensors.size()) + " tensors, model expects " +
        std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& t = data.tensors[i];
    auto& p = params[i];
    if (t.name != p.name)
      throw std::runtime_error("checkpoint: " + path + " tensor " +
                               std::to_string(i) + " is named " + t.name +
                               ", model expects " + p.name);
    if (static_cast<Index>(t.values.size()) != p.size || t.shape != p.shape)
      throw std::runtime_error("checkpoint: " + path + " tensor " + t.name +
                               " has mismatched shape");
    std::memcpy(p.value, t.values.data(), t.values.size() * sizeof(float));
  }
  return model;
}

}  // namespace milatp
