#include "milatp/config.hpp"

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <type_traits>

using json = nlohmann::json;

namespace milatp {

namespace {

/// Reads fields out of one JSON object, recording consumed keys so that
/// anything left over can be flagged as unknown.
class SectionReader {
 public:
  SectionReader(const json& j, std::string prefix,
                std::vector<std::string>* errors)
      : j_(j), prefix_(std::move(prefix)), errors_(errors) {
    if (!j_.is_object())
      errors_->push_back(prefix_.empty() ? "config root must be an object"
                                         : prefix_ + " must be an object");
  }

  template <class T>
  void number(const char* key, T* out) {
    const json* v = fetch(key);
    if (!v) return;
    if constexpr (std::is_integral_v<T>) {
      if (!v->is_number_integer()) {
        type_error(key, "an integer");
        return;
      }
    } else {
      if (!v->is_number()) {
        type_error(key, "a number");
        return;
      }
    }
    *out = v->get<T>();
  }

  void boolean(const char* key, bool* out) {
    const json* v = fetch(key);
    if (!v) return;
    if (!v->is_boolean()) {
      type_error(key, "a boolean");
      return;
    }
    *out = v->get<bool>();
  }

  void int_list(const char* key, std::vector<int>* out) {
    const json* v = fetch(key);
    if (!v) return;
    if (!v->is_array()) {
      type_error(key, "an array of integers");
      return;
    }
    std::vector<int> parsed;
    for (const auto& e : *v) {
      if (!e.is_number_integer()) {
        type_error(key, "an array of integers");
        return;
      }
      parsed.push_back(e.get<int>());
    }
    *out = std::move(parsed);
  }

  template <class Enum>
  void enum_field(const char* key, Enum* out,
                  std::optional<Enum> (*parse)(const std::string&),
                  const char* choices) {
    const json* v = fetch(key);
    if (!v) return;
    if (!v->is_string()) {
      type_error(key, "a string");
      return;
    }
    const auto parsed = parse(v->get<std::string>());
    if (!parsed) {
      errors_->push_back(path(key) + ": \"" + v->get<std::string>() +
                         "\" is not one of " + choices);
      return;
    }
    *out = *parsed;
  }

  void finish() {
    if (!j_.is_object()) return;
    for (const auto& item : j_.items())
      if (!consumed_.count(item.key()))
        errors_->push_back("unknown key " + path(item.key().c_str()));
  }

 private:
  const json* fetch(const char* key) {
    consumed_.insert(key);
    if (!j_.is_object()) return nullptr;
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const {
    return prefix_.empty() ? key : prefix_ + "." + key;
  }

  void type_error(const char* key, const char* expected) {
    errors_->push_back(path(key) + ": expected " + expected);
  }

  const json& j_;
  std::string prefix_;
  std::vector<std::string>* errors_;
  std::set<std::string> consumed_;
};

}  // namespace

json codec_to_json(const CodecConfig& c) {
  return json{{"atp_max", c.atp_max}, {"r_bin", c.r_bin}, {"n_bits", c.n_bits}};
}

json model_to_json(const ModelConfig& c) {
  return json{{"scheme", scheme_name(c.scheme)},
              {"aggregator", aggregator_name(c.aggregator)},
              {"resolution", c.resolution},
              {"grid_rows", c.grid_rows},
              {"grid_cols", c.grid_cols},
              {"channels", c.channels},
              {"attention_hidden", c.attention_hidden},
              {"head_hidden", c.head_hidden},
              {"pad_mode", pad_mode_name(c.pad_mode)}};
}

json loss_to_json(const LossConfig& c) {
  return json{{"alpha", c.alpha},
              {"decay_w", c.decay_w},
              {"epoch_scale", c.epoch_scale},
              {"bce_clamp", c.bce_clamp}};
}

json augment_to_json(const AugmentConfig& c) {
  return json{{"enabled", c.enabled},
              {"flip_prob", c.flip_prob},
              {"brightness_frac", c.brightness_frac},
              {"max_rotation_deg", c.max_rotation_deg}};
}

json synth_to_json(const SynthConfig& c) {
  return json{{"image_size", c.image_size},
              {"organoids_min", c.organoids_min},
              {"organoids_max", c.organoids_max},
              {"radius_min", c.radius_min},
              {"radius_max", c.radius_max},
              {"viability_min", c.viability_min},
              {"viability_max", c.viability_max},
              {"atp_per_area", c.atp_per_area},
              {"impurities_min", c.impurities_min},
              {"impurities_max", c.impurities_max},
              {"vacuoles_min", c.vacuoles_min},
              {"vacuoles_max", c.vacuoles_max},
              {"noise_sigma", c.noise_sigma},
              {"well_radius_frac", c.well_radius_frac},
              {"group_size", c.group_size},
              {"seed", c.seed}};
}

json run_config_to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  json train{{"epochs", t.epochs},
             {"lr", t.lr},
             {"lr_decay_factor", t.lr_decay_factor},
             {"lr_decay_period", t.lr_decay_period},
             {"lr_floor", t.lr_floor},
             {"batch_size", t.batch_size},
             {"val_fraction", t.val_fraction},
             {"seed", t.seed}};
  return json{{"codec", codec_to_json(t.codec)},
              {"model", model_to_json(t.model)},
              {"loss", loss_to_json(t.loss)},
              {"train", train},
              {"augment", augment_to_json(t.augment)},
              {"synth", synth_to_json(c.synth)}};
}

void codec_from_json(const json& j, CodecConfig* out,
                     std::vector<std::string>* errors) {
  SectionReader r(j, "codec", errors);
  r.number("atp_max", &out->atp_max);
  r.number("r_bin", &out->r_bin);
  r.number("n_bits", &out->n_bits);
  r.finish();
}

void model_from_json(const json& j, ModelConfig* out,
                     std::vector<std::string>* errors) {
  SectionReader r(j, "model", errors);
  r.enum_field("scheme", &out->scheme, parse_scheme, "mesh|learned");
  r.enum_field("aggregator", &out->aggregator, parse_aggregator,
               "attention|sum|concat");
  r.number("resolution", &out->resolution);
  r.number("grid_rows", &out->grid_rows);
  r.number("grid_cols", &out->grid_cols);
  r.int_list("channels", &out->channels);
  r.number("attention_hidden", &out->attention_hidden);
  r.number("head_hidden", &out->head_hidden);
  r.enum_field("pad_mode", &out->pad_mode, parse_pad_mode, "zero|reflect");
  r.finish();
}

void loss_from_json(const json& j, LossConfig* out,
                    std::vector<std::string>* errors) {
  SectionReader r(j, "loss", errors);
  r.number("alpha", &out->alpha);
  r.number("decay_w", &out->decay_w);
  r.number("epoch_scale", &out->epoch_scale);
  r.number("bce_clamp", &out->bce_clamp);
  r.finish();
}

void augment_from_json(const json& j, AugmentConfig* out,
                       std::vector<std::string>* errors) {
  SectionReader r(j, "augment", errors);
  r.boolean("enabled", &out->enabled);
  r.number("flip_prob", &out->flip_prob);
  r.number("brightness_frac", &out->brightness_frac);
  r.number("max_rotation_deg", &out->max_rotation_deg);
  r.finish();
}

void synth_from_json(const json& j, SynthConfig* out,
                     std::vector<std::string>* errors) {
  SectionReader r(j, "synth", errors);
  r.number("image_size", &out->image_size);
  r.number("organoids_min", &out->organoids_min);
  r.number("organoids_max", &out->organoids_max);
  r.number("radius_min", &out->radius_min);
  r.number("radius_max", &out->radius_max);
  r.number("viability_min", &out->viability_min);
  r.number("viability_max", &out->viability_max);
  r.number("atp_per_area", &out->atp_per_area);
  r.number("impurities_min", &out->impurities_min);
  r.number("impurities_max", &out->impurities_max);
  r.number("vacuoles_min", &out->vacuoles_min);
  r.number("vacuoles_max", &out->vacuoles_max);
  r.number("noise_sigma", &out->noise_sigma);
  r.number("well_radius_frac", &out->well_radius_frac);
  r.number("group_size", &out->group_size);
  r.number("seed", &out->seed);
  r.finish();
}

RunConfig run_config_from_json(const json& j,
                               std::vector<std::string>* errors) {
  RunConfig cfg;
  if (!j.is_object()) {
    errors->push_back("config root must be an object");
    return cfg;
  }
  static const std::set<std::string> sections{"codec", "model", "loss",
                                             "train", "augment", "synth"};
  for (const auto& item : j.items())
    if (!sections.count(item.key()))
      errors->push_back("unknown key " + item.key());

  if (j.contains("codec"))
    codec_from_json(j["codec"], &cfg.train.codec, errors);
  if (j.contains("model"))
    model_from_json(j["model"], &cfg.train.model, errors);
  if (j.contains("loss")) loss_from_json(j["loss"], &cfg.train.loss, errors);
  if (j.contains("augment"))
    augment_from_json(j["augment"], &cfg.train.augment, errors);
  if (j.contains("synth")) synth_from_json(j["synth"], &cfg.synth, errors);
  if (j.contains("train")) {
    SectionReader r(j["train"], "train", errors);
    TrainConfig* t = &cfg.train;
    r.number("epochs", &t->epochs);
    r.number("lr", &t->lr);
    r.number("lr_decay_factor", &t->lr_decay_factor);
    r.number("lr_decay_period", &t->lr_decay_period);
    r.number("lr_floor", &t->lr_floor);
    r.number("batch_size", &t->batch_size);
    r.number("val_fraction", &t->val_fraction);
    r.number("seed", &t->seed);
    r.finish();
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config: " + path + ": " + e.what());
  }
  std::vector<std::string> errors;
  RunConfig cfg = run_config_from_json(doc, &errors);
  if (!errors.empty()) {
    std::ostringstream msg;
    msg << "config: " << path << " has " << errors.size() << " error(s):";
    for (const auto& e : errors) msg << "\n  - " << e;
    throw std::runtime_error(msg.str());
  }
  return cfg;
}

void apply_override(json* doc, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override \"" + assignment +
                                "\" is not of the form section.key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  json* node = doc;
  size_t start = 0;
  while (true) {
    const size_t dot = path.find('.', start);
    const std::string part =
        path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty())
      throw std::invalid_argument("override \"" + assignment +
                                  "\" has an empty path segment");
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*node)[part] = parsed.is_discarded() ? json(value) : parsed;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

}  // namespace milatp
