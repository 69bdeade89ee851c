#include <cmath>
#include <set>

#include "mrinet/architectures.hpp"
#include "mrinet/atomic_file.hpp"
#include "mrinet/errors.hpp"
#include "mrinet/training.hpp"

namespace mrinet {

using nlohmann::json;

std::string_view to_string(BackboneMode mode) {
  return mode == BackboneMode::frozen ? "frozen" : "finetune";
}

PreprocessMode TrainConfig::effective_preprocessing() const {
  return preprocessing ? *preprocessing : parse_preprocess_mode(default_preprocessing(model));
}

void TrainConfig::validate() const {
  const auto &ids = model_ids();
  if (std::find(ids.begin(), ids.end(), model) == ids.end())
    throw ConfigError("model: unknown id '" + model + "'");
  if (!(adam.learning_rate > 0) || !std::isfinite(adam.learning_rate))
    throw ConfigError("learning_rate must be > 0");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1))
    throw ConfigError("beta1 must lie in [0, 1)");
  if (!(adam.beta2 >= 0 && adam.beta2 < 1))
    throw ConfigError("beta2 must lie in [0, 1)");
  if (!(adam.epsilon > 0) || !std::isfinite(adam.epsilon))
    throw ConfigError("epsilon must be > 0");
  if (batch_size < 1)
    throw ConfigError("batch_size must be >= 1");
  if (eval_batch_size < 1)
    throw ConfigError("eval_batch_size must be >= 1");
  if (epochs < 1)
    throw ConfigError("epochs must be >= 1");
  if (input_height < 32 || input_width < 32)
    throw ConfigError("input_size must be at least 32x32");
  augment_params.validate();
  if (init_weights_scope != "backbone" && init_weights_scope != "all")
    throw ConfigError("init_weights_scope must be 'backbone' or 'all'");
}

namespace {

const std::set<std::string> top_keys{
    "model",          "learning_rate", "beta1",          "beta2",         "epsilon",
    "batch_size",     "epochs",        "seed",           "backbone_mode", "batchnorm_mode",
    "augment",        "preprocessing", "input_size",     "eval_batch_size", "data_root",
    "train_manifest", "val_manifest",  "output_dir",     "init_weights",  "init_weights_scope",
    "resume"};
const std::set<std::string> augment_keys{"enabled", "rotation_max_deg", "shift_max_frac",
                                         "zoom_max_frac", "hflip_prob"};

void reject_unknown(const json &j, const std::set<std::string> &allowed, const std::string &where) {
  for (const auto &[key, value] : j.items())
    if (!allowed.count(key))
      throw ConfigError("unknown key '" + where + key + "'");
}

double number(const json &j, const std::string &key) {
  if (!j.is_number())
    throw ConfigError(key + " must be a number");
  return j.get<double>();
}

std::size_t count(const json &j, const std::string &key) {
  if (!j.is_number_unsigned())
    throw ConfigError(key + " must be a non-negative integer");
  return j.get<std::size_t>();
}

std::string text(const json &j, const std::string &key) {
  if (!j.is_string())
    throw ConfigError(key + " must be a string");
  return j.get<std::string>();
}

} // namespace

TrainConfig config_from_json(const json &j) {
  if (!j.is_object())
    throw ConfigError("config must be a JSON object");
  reject_unknown(j, top_keys, "");
  TrainConfig c;
  if (j.contains("model"))
    c.model = text(j["model"], "model");
  if (j.contains("learning_rate"))
    c.adam.learning_rate = number(j["learning_rate"], "learning_rate");
  if (j.contains("beta1"))
    c.adam.beta1 = number(j["beta1"], "beta1");
  if (j.contains("beta2"))
    c.adam.beta2 = number(j["beta2"], "beta2");
  if (j.contains("epsilon"))
    c.adam.epsilon = number(j["epsilon"], "epsilon");
  if (j.contains("batch_size"))
    c.batch_size = count(j["batch_size"], "batch_size");
  if (j.contains("eval_batch_size"))
    c.eval_batch_size = count(j["eval_batch_size"], "eval_batch_size");
  if (j.contains("epochs"))
    c.epochs = count(j["epochs"], "epochs");
  if (j.contains("seed"))
    c.seed = count(j["seed"], "seed");
  if (j.contains("backbone_mode")) {
    const auto m = text(j["backbone_mode"], "backbone_mode");
    if (m != "finetune" && m != "frozen")
      throw ConfigError("backbone_mode must be 'finetune' or 'frozen'");
    c.backbone_mode = m == "frozen" ? BackboneMode::frozen : BackboneMode::finetune;
  }
  if (j.contains("batchnorm_mode")) {
    const auto m = text(j["batchnorm_mode"], "batchnorm_mode");
    if (m != "train" && m != "infer")
      throw ConfigError("batchnorm_mode must be 'train' or 'infer'");
    c.batchnorm_mode = m == "infer" ? Mode::infer : Mode::train;
  }
  if (j.contains("augment")) {
    const auto &a = j["augment"];
    if (!a.is_object())
      throw ConfigError("augment must be an object");
    reject_unknown(a, augment_keys, "augment.");
    if (a.contains("enabled")) {
      if (!a["enabled"].is_boolean())
        throw ConfigError("augment.enabled must be a boolean");
      c.augment = a["enabled"].get<bool>();
    }
    auto &p = c.augment_params;
    if (a.contains("rotation_max_deg"))
      p.rotation_max_deg = number(a["rotation_max_deg"], "augment.rotation_max_deg");
    if (a.contains("shift_max_frac"))
      p.shift_max_frac = number(a["shift_max_frac"], "augment.shift_max_frac");
    if (a.contains("zoom_max_frac"))
      p.zoom_max_frac = number(a["zoom_max_frac"], "augment.zoom_max_frac");
    if (a.contains("hflip_prob"))
      p.hflip_prob = number(a["hflip_prob"], "augment.hflip_prob");
  }
  if (j.contains("preprocessing"))
    c.preprocessing = parse_preprocess_mode(text(j["preprocessing"], "preprocessing"));
  if (j.contains("input_size")) {
    const auto &s = j["input_size"];
    if (!s.is_array() || s.size() != 2)
      throw ConfigError("input_size must be [height, width]");
    c.input_height = count(s[0], "input_size[0]");
    c.input_width = count(s[1], "input_size[1]");
  }
  for (auto [key, field] : {std::pair{"data_root", &c.data_root},
                            {"train_manifest", &c.train_manifest},
                            {"val_manifest", &c.val_manifest},
                            {"output_dir", &c.output_dir},
                            {"init_weights", &c.init_weights},
                            {"init_weights_scope", &c.init_weights_scope},
                            {"resume", &c.resume}})
    if (j.contains(key))
      *field = text(j[key], key);
  c.validate();
  return c;
}

json config_to_json(const TrainConfig &c) {
  return json{
      {"model", c.model},
      {"learning_rate", c.adam.learning_rate},
      {"beta1", c.adam.beta1},
      {"beta2", c.adam.beta2},
      {"epsilon", c.adam.epsilon},
      {"batch_size", c.batch_size},
      {"eval_batch_size", c.eval_batch_size},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"backbone_mode", std::string(to_string(c.backbone_mode))},
      {"batchnorm_mode", c.batchnorm_mode == Mode::infer ? "infer" : "train"},
      {"augment",
       {{"enabled", c.augment},
        {"rotation_max_deg", c.augment_params.rotation_max_deg},
        {"shift_max_frac", c.augment_params.shift_max_frac},
        {"zoom_max_frac", c.augment_params.zoom_max_frac},
        {"hflip_prob", c.augment_params.hflip_prob}}},
      {"preprocessing", std::string(to_string(c.effective_preprocessing()))},
      {"input_size", {c.input_height, c.input_width}},
      {"data_root", c.data_root},
      {"train_manifest", c.train_manifest},
      {"val_manifest", c.val_manifest},
      {"output_dir", c.output_dir},
      {"init_weights", c.init_weights},
      {"init_weights_scope", c.init_weights_scope},
      {"resume", c.resume}};
}

TrainConfig load_config(const std::filesystem::path &file) {
  std::string text_;
  try {
    text_ = read_file(file);
  } catch (const IoError &e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  json j;
  try {
    j = json::parse(text_);
  } catch (const json::parse_error &e) {
    throw ConfigError(file.string() + ": invalid JSON: " + e.what());
  }
  TrainConfig c = config_from_json(j);
  const auto base = file.parent_path();
  for (std::string *p : {&c.data_root, &c.train_manifest, &c.val_manifest, &c.output_dir,
                         &c.init_weights, &c.resume})
    if (!p->empty() && std::filesystem::path(*p).is_relative())
      *p = (base / *p).lexically_normal().string();
  return c;
}

} // namespace mrinet
