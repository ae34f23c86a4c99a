#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reidaug/reidaug.hpp"

namespace reidaug::cli {

using Json = nlohmann::ordered_json;

struct SyntheticDataConfig {
  int train_ids = 16;
  int test_ids = 16;
  int images_per_id = 8;
  int cameras = 2;
  int test_first_id = 1000;
};

struct DataConfig {
  std::string source = "synthetic"; // "synthetic" | "directory"
  std::string train_dir;
  std::string query_dir;
  std::string gallery_dir;
  int height = 32; // corpus resolution; directory images are resized to it
  int width = 16;
  SyntheticDataConfig synthetic;
};

struct AugmentConfig {
  std::int64_t m = 0;
  std::string restorer = "gan"; // "gan" | "original"
  int grid_columns = 8;
};

struct EvalConfig {
  bool occlude_queries = true;
  bool exclude_same_id_same_cam = true;
  std::vector<int> junk_ids{-1};
  std::string query_mode = "single";
  std::string no_match = "exclude";
  std::string pooling = "mean";
  bool rerank = false;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "reidaug_out";
  DataConfig data;
  OcclusionConfig occlusion;
  gan::GanTrainConfig gan;
  bool gan_resume = true;
  AugmentConfig augment;
  baseline::BaselineTrainConfig baseline;
  std::string baseline_train_set = "augmented"; // "augmented" | "real"
  EvalConfig eval;
  eval::RerankParams rerank;
  std::vector<std::int64_t> sensitivity_m{0};
};

namespace detail {

inline const char *fill_name(FillMode f) {
  switch (f) {
  case FillMode::black:
    return "black";
  case FillMode::white:
    return "white";
  case FillMode::channel_mean:
    break;
  }
  return "channel_mean";
}

} // namespace detail

/// Full, resolved configuration as JSON (also the schema for validation).
inline Json to_json(const RunConfig &c) {
  Json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["data"] = {{"source", c.data.source},
               {"train_dir", c.data.train_dir},
               {"query_dir", c.data.query_dir},
               {"gallery_dir", c.data.gallery_dir},
               {"height", c.data.height},
               {"width", c.data.width},
               {"synthetic",
                {{"train_ids", c.data.synthetic.train_ids},
                 {"test_ids", c.data.synthetic.test_ids},
                 {"images_per_id", c.data.synthetic.images_per_id},
                 {"cameras", c.data.synthetic.cameras},
                 {"test_first_id", c.data.synthetic.test_first_id}}}};
  j["occlusion"] = {{"area_ratio_min", c.occlusion.area_ratio_min},
                    {"area_ratio_max", c.occlusion.area_ratio_max},
                    {"aspect_min", c.occlusion.aspect_min},
                    {"aspect_max", c.occlusion.aspect_max},
                    {"fill", detail::fill_name(c.occlusion.fill)}};
  const auto &g = c.gan;
  j["gan"] = {{"epochs", g.epochs},
              {"batch_size", g.batch_size},
              {"learning_rate", g.learning_rate},
              {"beta1", g.adam_beta1},
              {"beta2", g.adam_beta2},
              {"lambda_l2", g.lambda_l2},
              {"lambda_adv", g.lambda_adv},
              {"adversarial_mode", g.adversarial_mode == gan::AdversarialMode::saturating ? "saturating"
                                                                                         : "non_saturating"},
              {"resample_occlusion", g.resample_occlusion},
              {"height", g.image_height},
              {"width", g.image_width},
              {"depth", g.generator.depth},
              {"base_channels", g.generator.base_channels},
              {"output_activation", g.generator.output_activation == gan::OutputActivation::tanh_scaled ? "tanh"
                                                                                                       : "sigmoid"},
              {"disc_base_channels", g.discriminator.base_channels},
              {"conditional", g.discriminator.conditional},
              {"resume", c.gan_resume}};
  j["augment"] = {{"m", c.augment.m}, {"restorer", c.augment.restorer}, {"grid_columns", c.augment.grid_columns}};
  const auto &b = c.baseline;
  j["baseline"] = {{"epochs", b.epochs},
                   {"batch_size", b.batch_size},
                   {"learning_rate", b.learning_rate},
                   {"lr_step_epochs", b.lr_step_epochs},
                   {"lr_decay", b.lr_decay},
                   {"momentum", b.momentum},
                   {"weight_decay", b.weight_decay},
                   {"dropout", b.net.dropout},
                   {"feature_dim", b.net.feature_dim},
                   {"stage_channels", b.net.stage_channels},
                   {"train_set", c.baseline_train_set}};
  j["eval"] = {{"occlude_queries", c.eval.occlude_queries},
               {"exclude_same_id_same_cam", c.eval.exclude_same_id_same_cam},
               {"junk_ids", c.eval.junk_ids},
               {"query_mode", c.eval.query_mode},
               {"no_match", c.eval.no_match},
               {"pooling", c.eval.pooling},
               {"rerank", c.eval.rerank}};
  j["rerank"] = {{"k1", c.rerank.k1}, {"k2", c.rerank.k2}, {"lambda", c.rerank.lambda}};
  j["sensitivity"] = {{"m_values", c.sensitivity_m}};
  return j;
}

namespace detail {

inline bool compatible(const Json &schema, const Json &value) {
  if (schema.is_number_float())
    return value.is_number();
  if (schema.is_number_unsigned())
    return value.is_number_unsigned() || (value.is_number_integer() && value.get<std::int64_t>() >= 0);
  if (schema.is_number_integer())
    return value.is_number_integer();
  return schema.type() == value.type();
}

inline const char *type_name(const Json &schema) {
  if (schema.is_number_float())
    return "a number";
  if (schema.is_number_unsigned())
    return "a non-negative integer";
  if (schema.is_number_integer())
    return "an integer";
  if (schema.is_boolean())
    return "a boolean";
  if (schema.is_string())
    return "a string";
  if (schema.is_array())
    return "an array";
  return "an object";
}

/// Merges `patch` into `base`, rejecting keys or types the schema does not know.
inline void merge_checked(Json &base, const Json &patch, const std::string &prefix) {
  if (!patch.is_object())
    throw ConfigError("config: " + (prefix.empty() ? std::string("top level") : prefix) + " must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key()))
      throw ConfigError("config: unknown key '" + key + "'");
    Json &slot = base[it.key()];
    if (slot.is_object()) {
      merge_checked(slot, it.value(), key);
    } else {
      if (!compatible(slot, it.value()))
        throw ConfigError("config: key '" + key + "' must be " + type_name(slot));
      if (slot.is_array()) {
        for (const auto &v : it.value())
          if (!slot.empty() && !compatible(slot.front(), v))
            throw ConfigError("config: elements of '" + key + "' must be " + type_name(slot.front()));
      }
      slot = it.value();
    }
  }
}

template <typename E>
E pick(const std::string &key, const std::string &value, std::initializer_list<std::pair<const char *, E>> options) {
  std::string allowed;
  for (const auto &[name, v] : options) {
    if (value == name)
      return v;
    allowed += (allowed.empty() ? "" : ", ") + std::string(name);
  }
  throw ConfigError("config: '" + key + "' must be one of: " + allowed + " (got '" + value + "')");
}

} // namespace detail

/// Reads a resolved JSON document (already schema-checked) into a RunConfig and validates it.
inline RunConfig from_json(const Json &j) {
  RunConfig c;
  c.seed = j["seed"].get<std::uint64_t>();
  c.output_dir = j["output_dir"].get<std::string>();

  const auto &d = j["data"];
  c.data.source = detail::pick<std::string>("data.source", d["source"].get<std::string>(),
                                            {{"synthetic", "synthetic"}, {"directory", "directory"}});
  c.data.train_dir = d["train_dir"].get<std::string>();
  c.data.query_dir = d["query_dir"].get<std::string>();
  c.data.gallery_dir = d["gallery_dir"].get<std::string>();
  c.data.height = d["height"].get<int>();
  c.data.width = d["width"].get<int>();
  const auto &s = d["synthetic"];
  c.data.synthetic = {s["train_ids"].get<int>(), s["test_ids"].get<int>(), s["images_per_id"].get<int>(),
                      s["cameras"].get<int>(), s["test_first_id"].get<int>()};

  const auto &o = j["occlusion"];
  c.occlusion.area_ratio_min = o["area_ratio_min"].get<double>();
  c.occlusion.area_ratio_max = o["area_ratio_max"].get<double>();
  c.occlusion.aspect_min = o["aspect_min"].get<double>();
  c.occlusion.aspect_max = o["aspect_max"].get<double>();
  c.occlusion.fill = detail::pick<FillMode>(
      "occlusion.fill", o["fill"].get<std::string>(),
      {{"channel_mean", FillMode::channel_mean}, {"black", FillMode::black}, {"white", FillMode::white}});

  const auto &g = j["gan"];
  c.gan.epochs = g["epochs"].get<int>();
  c.gan.batch_size = g["batch_size"].get<std::size_t>();
  c.gan.learning_rate = g["learning_rate"].get<double>();
  c.gan.adam_beta1 = g["beta1"].get<double>();
  c.gan.adam_beta2 = g["beta2"].get<double>();
  c.gan.lambda_l2 = g["lambda_l2"].get<double>();
  c.gan.lambda_adv = g["lambda_adv"].get<double>();
  c.gan.adversarial_mode = detail::pick<gan::AdversarialMode>(
      "gan.adversarial_mode", g["adversarial_mode"].get<std::string>(),
      {{"saturating", gan::AdversarialMode::saturating}, {"non_saturating", gan::AdversarialMode::non_saturating}});
  c.gan.resample_occlusion = g["resample_occlusion"].get<bool>();
  c.gan.image_height = g["height"].get<std::size_t>();
  c.gan.image_width = g["width"].get<std::size_t>();
  c.gan.generator.depth = g["depth"].get<std::size_t>();
  c.gan.generator.base_channels = g["base_channels"].get<std::size_t>();
  c.gan.generator.output_activation = detail::pick<gan::OutputActivation>(
      "gan.output_activation", g["output_activation"].get<std::string>(),
      {{"tanh", gan::OutputActivation::tanh_scaled}, {"sigmoid", gan::OutputActivation::sigmoid_scaled}});
  c.gan.discriminator.base_channels = g["disc_base_channels"].get<std::size_t>();
  c.gan.discriminator.conditional = g["conditional"].get<bool>();
  c.gan_resume = g["resume"].get<bool>();

  const auto &a = j["augment"];
  c.augment.m = a["m"].get<std::int64_t>();
  c.augment.restorer = detail::pick<std::string>("augment.restorer", a["restorer"].get<std::string>(),
                                                 {{"gan", "gan"}, {"original", "original"}});
  c.augment.grid_columns = a["grid_columns"].get<int>();

  const auto &b = j["baseline"];
  c.baseline.epochs = b["epochs"].get<int>();
  c.baseline.batch_size = b["batch_size"].get<std::size_t>();
  c.baseline.learning_rate = b["learning_rate"].get<double>();
  c.baseline.lr_step_epochs = b["lr_step_epochs"].get<int>();
  c.baseline.lr_decay = b["lr_decay"].get<double>();
  c.baseline.momentum = b["momentum"].get<double>();
  c.baseline.weight_decay = b["weight_decay"].get<double>();
  c.baseline.net.dropout = b["dropout"].get<double>();
  c.baseline.net.feature_dim = b["feature_dim"].get<std::size_t>();
  c.baseline.net.stage_channels = b["stage_channels"].get<std::vector<std::size_t>>();
  c.baseline.net.input_height = static_cast<std::size_t>(std::max(c.data.height, 0));
  c.baseline.net.input_width = static_cast<std::size_t>(std::max(c.data.width, 0));
  c.baseline.seed = c.seed;
  c.gan.seed = c.seed;
  c.occlusion.seed = c.seed;
  c.baseline_train_set = detail::pick<std::string>("baseline.train_set", b["train_set"].get<std::string>(),
                                                   {{"augmented", "augmented"}, {"real", "real"}});

  const auto &e = j["eval"];
  c.eval.occlude_queries = e["occlude_queries"].get<bool>();
  c.eval.exclude_same_id_same_cam = e["exclude_same_id_same_cam"].get<bool>();
  c.eval.junk_ids = e["junk_ids"].get<std::vector<int>>();
  c.eval.query_mode = detail::pick<std::string>("eval.query_mode", e["query_mode"].get<std::string>(),
                                                {{"single", "single"}, {"multi", "multi"}});
  c.eval.no_match = detail::pick<std::string>("eval.no_match", e["no_match"].get<std::string>(),
                                              {{"exclude", "exclude"}, {"score_zero", "score_zero"}});
  c.eval.pooling = detail::pick<std::string>("eval.pooling", e["pooling"].get<std::string>(),
                                             {{"mean", "mean"}, {"max", "max"}});
  c.eval.rerank = e["rerank"].get<bool>();

  const auto &r = j["rerank"];
  c.rerank.k1 = r["k1"].get<int>();
  c.rerank.k2 = r["k2"].get<int>();
  c.rerank.lambda = r["lambda"].get<double>();
  c.sensitivity_m = j["sensitivity"]["m_values"].get<std::vector<std::int64_t>>();
  return c;
}

/// Rejects invalid values before any work starts; messages name the offending key.
inline void validate(const RunConfig &c) {
  auto fail = [](const std::string &key, const std::string &why) { throw ConfigError("config: " + key + " " + why); };
  if (c.output_dir.empty())
    fail("output_dir", "must not be empty");
  if (c.data.source == "directory") {
    if (c.data.train_dir.empty())
      fail("data.train_dir", "is required for directory data");
    if (c.data.query_dir.empty())
      fail("data.query_dir", "is required for directory data");
    if (c.data.gallery_dir.empty())
      fail("data.gallery_dir", "is required for directory data");
  }
  if (c.data.height < 8 || c.data.width < 8)
    fail("data.height/width", "must be >= 8");
  const auto &s = c.data.synthetic;
  if (s.train_ids < 2 || s.test_ids < 1 || s.images_per_id < 1)
    fail("data.synthetic", "needs train_ids >= 2, test_ids >= 1, images_per_id >= 1");
  if (s.cameras < 2)
    fail("data.synthetic.cameras", "must be >= 2 (query and gallery use different cameras)");
  if (s.test_first_id < s.train_ids)
    fail("data.synthetic.test_first_id", "must not overlap the training identities");

  const auto &o = c.occlusion;
  if (!(o.area_ratio_min > 0.0 && o.area_ratio_min <= 1.0))
    fail("occlusion.area_ratio_min", "must be in (0,1]");
  if (!(o.area_ratio_max > 0.0 && o.area_ratio_max <= 1.0))
    fail("occlusion.area_ratio_max", "must be in (0,1]");
  if (o.area_ratio_min > o.area_ratio_max)
    fail("occlusion.area_ratio_min", "must not exceed occlusion.area_ratio_max");
  if (!(o.aspect_min > 0.0 && o.aspect_min <= o.aspect_max))
    fail("occlusion.aspect_min", "must be > 0 and <= occlusion.aspect_max");

  const auto &g = c.gan;
  if (!(g.learning_rate > 0.0))
    fail("gan.learning_rate", "must be > 0");
  if (g.epochs < 1)
    fail("gan.epochs", "must be >= 1");
  if (g.batch_size < 1)
    fail("gan.batch_size", "must be >= 1");
  if (!(g.adam_beta1 >= 0.0 && g.adam_beta1 < 1.0) || !(g.adam_beta2 >= 0.0 && g.adam_beta2 < 1.0))
    fail("gan.beta1/beta2", "must be in [0,1)");
  if (g.lambda_l2 < 0.0 || g.lambda_adv < 0.0 || (g.lambda_l2 == 0.0 && g.lambda_adv == 0.0))
    fail("gan.lambda_l2/lambda_adv", "must be >= 0 and not both 0");
  if ((g.image_height == 0) != (g.image_width == 0))
    fail("gan.height/width", "must both be set or both be 0");
  if (g.generator.depth < 1 || g.generator.depth > 6)
    fail("gan.depth", "must be in [1,6]");
  if (g.generator.base_channels < 1 || g.discriminator.base_channels < 1)
    fail("gan.base_channels", "must be >= 1");

  if (c.augment.m < 0)
    fail("augment.m", "must be >= 0");
  if (c.augment.grid_columns < 1)
    fail("augment.grid_columns", "must be >= 1");
  for (auto m : c.sensitivity_m)
    if (m < 0)
      fail("sensitivity.m_values", "must all be >= 0");
  if (c.sensitivity_m.empty())
    fail("sensitivity.m_values", "must not be empty");

  const auto &b = c.baseline;
  if (!(b.learning_rate > 0.0))
    fail("baseline.learning_rate", "must be > 0");
  if (b.epochs < 1)
    fail("baseline.epochs", "must be >= 1");
  if (b.batch_size < 2)
    fail("baseline.batch_size", "must be >= 2");
  if (b.lr_step_epochs < 1 || !(b.lr_decay > 0.0))
    fail("baseline.lr_step_epochs/lr_decay", "must be positive");
  if (!(b.momentum >= 0.0 && b.momentum < 1.0))
    fail("baseline.momentum", "must be in [0,1)");
  if (b.weight_decay < 0.0)
    fail("baseline.weight_decay", "must be >= 0");
  if (!(b.net.dropout >= 0.0 && b.net.dropout < 1.0))
    fail("baseline.dropout", "must be in [0,1)");
  if (b.net.feature_dim < 1 || b.net.stage_channels.empty())
    fail("baseline.feature_dim/stage_channels", "must be non-empty");
  for (auto ch : b.net.stage_channels)
    if (ch < 1)
      fail("baseline.stage_channels", "entries must be >= 1");

  if (!(c.rerank.k2 >= 1 && c.rerank.k1 > c.rerank.k2))
    fail("rerank.k1/k2", "need k1 > k2 >= 1");
  if (!(c.rerank.lambda >= 0.0 && c.rerank.lambda <= 1.0))
    fail("rerank.lambda", "must be in [0,1]");
}

/// Parses a `key.path=value` override; the value is JSON when it parses, otherwise a string.
inline Json override_patch(const std::string &assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("config: override '" + assignment + "' is not of the form key=value");
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded())
    value = text;
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty())
      throw ConfigError("config: override key '" + path + "' has an empty component");
    parts.push_back(part);
  }
  Json patch = value;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it)
    patch = Json{{*it, patch}};
  return patch;
}

/// Defaults <- config text <- overrides, schema-checked and validated.
inline RunConfig resolve_config(const std::string &config_text, const std::vector<std::string> &overrides) {
  Json resolved = to_json(RunConfig{});
  Json file = Json::parse(config_text, nullptr, false);
  if (file.is_discarded())
    throw ConfigError("config: file is not valid JSON");
  detail::merge_checked(resolved, file, "");
  for (const auto &o : overrides)
    detail::merge_checked(resolved, override_patch(o), "");
  RunConfig c;
  try {
    c = from_json(resolved);
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

inline RunConfig load_config(const std::filesystem::path &file, const std::vector<std::string> &overrides) {
  std::ifstream in(file);
  if (!in)
    throw IoError("cannot read config file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return resolve_config(ss.str(), overrides);
}

} // namespace reidaug::cli
