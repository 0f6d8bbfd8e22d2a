#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "milatp/engine.hpp"
#include "milatp/synth.hpp"

namespace milatp {

/// Everything a run needs, mirrored one-to-one by the JSON config file
/// sections: codec, model, loss, train, augment, synth.
struct RunConfig {
  TrainConfig train;  // owns codec/model/loss/augment
  SynthConfig synth;

  std::vector<std::string> validate() const {
    auto errors = train.validate();
    for (const auto& e : synth.validate()) errors.push_back(e);
    return errors;
  }
};

nlohmann::json codec_to_json(const CodecConfig& c);
nlohmann::json model_to_json(const ModelConfig& c);
nlohmann::json loss_to_json(const LossConfig& c);
nlohmann::json augment_to_json(const AugmentConfig& c);
nlohmann::json synth_to_json(const SynthConfig& c);
nlohmann::json run_config_to_json(const RunConfig& c);

/// Strict parsers: unknown keys and type mismatches are collected into
/// `errors` with their dotted paths; fields absent from the document keep
/// the defaults already present in the output struct.
void codec_from_json(const nlohmann::json& j, CodecConfig* out,
                     std::vector<std::string>* errors);
void model_from_json(const nlohmann::json& j, ModelConfig* out,
                     std::vector<std::string>* errors);
void loss_from_json(const nlohmann::json& j, LossConfig* out,
                    std::vector<std::string>* errors);
void augment_from_json(const nlohmann::json& j, AugmentConfig* out,
                       std::vector<std::string>* errors);
void synth_from_json(const nlohmann::json& j, SynthConfig* out,
                     std::vector<std::string>* errors);

/// Parses a full run config document. Collects every structural error
/// (unknown key, wrong type, unparseable enum) instead of stopping at the
/// first; returns defaults for anything not mentioned.
RunConfig run_config_from_json(const nlohmann::json& j,
                               std::vector<std::string>* errors);

/// Loads and strictly parses a JSON config file. Throws std::runtime_error
/// listing every error found.
RunConfig load_run_config(const std::string& path);

/// Applies one `section.key=value` override onto a JSON document. The value
/// is parsed as JSON when possible (numbers, booleans, arrays), otherwise
/// taken as a string. Throws std::invalid_argument on a malformed
/// assignment.
void apply_override(nlohmann::json* doc, const std::string& assignment);

}  // namespace milatp
