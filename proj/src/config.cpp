#include "lrstat/config.hpp"

#include <fstream>
#include <functional>
#include <map>

namespace lrstat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Handler = std::function<void(const json&, const std::string&)>;

void read_section(const json& j, const std::string& where, const std::map<std::string, Handler>& fields) {
  if (!j.is_object()) throw ConfigError((where.empty() ? std::string("config") : where) + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    const auto it = fields.find(key);
    const std::string path = where.empty() ? key : where + "." + key;
    if (it == fields.end()) throw ConfigError("unknown config key '" + path + "'");
    try {
      it->second(value, path);
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + path + "': " + e.what());
    }
  }
}

template <typename T>
Handler set(T& target) {
  return [&target](const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("config key '" + path + "': expected a boolean");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) throw ConfigError("config key '" + path + "': expected a non-negative integer");
    } else if constexpr (std::is_arithmetic_v<T>) {
      if (!v.is_number()) throw ConfigError("config key '" + path + "': expected a number");
    }
    target = v.get<T>();
  };
}

void read_weights(const json& j, const std::string& where, LossWeights& w) {
  read_section(j, where, {{"ce", set(w.ce)},
                          {"sat", set(w.sat)},
                          {"tat", set(w.tat)},
                          {"sat_blocks", set(w.sat_blocks)},
                          {"tat_layers", set(w.tat_layers)}});
}

void read_train(const json& j, const std::string& where, TrainConfig& t) {
  read_section(j, where,
               {{"epochs", set(t.epochs)},
                {"batch_size", set(t.batch_size)},
                {"momentum", set(t.momentum)},
                {"base_lr", set(t.base_lr)},
                {"warmup_epochs", set(t.warmup_epochs)},
                {"lr_decay_every", set(t.lr_decay_every)},
                {"lr_decay_factor", set(t.lr_decay_factor)},
                {"weight_mode",
                 [&t](const json& v, const std::string&) { t.weight_mode = weight_mode_from_string(v.get<std::string>()); }},
                {"weights", [&t](const json& v, const std::string& p) { read_weights(v, p, t.weights); }},
                {"rolling",
                 [&t](const json& v, const std::string& p) {
                   read_section(v, p,
                                {{"spatial", set(t.rolling.spatial)},
                                 {"temporal", set(t.rolling.temporal)},
                                 {"period", set(t.rolling.period)}});
                 }},
                {"distance",
                 [&t](const json& v, const std::string&) { t.distance = distance_from_string(v.get<std::string>()); }},
                {"clip_gradients", set(t.clip_gradients)},
                {"clip_threshold", set(t.clip_threshold)},
                {"val_fraction", set(t.val_fraction)},
                {"keep_best", set(t.keep_best)}});
}

void read_model(const json& j, const std::string& where, BackboneConfig& m) {
  read_section(j, where,
               {{"widths", set(m.widths)},
                {"kernel", set(m.kernel)},
                {"segments", set(m.segments)},
                {"tam_hidden", set(m.tam_hidden)}});
}

}  // namespace

PipelineConfig::PipelineConfig() {
  pretrain_train.weights.ce = 0.0;
  pretrain_train.weights.sat = 0.5;
  pretrain_train.weights.tat = 0.5;
  pretrain_train.val_fraction = 0.0;
  pretrain_train.keep_best = false;
  finalize();
}

void PipelineConfig::finalize() {
  data.seed = seed;
  degrade.seed = seed;
  teacher_train.seed = seed;
  pretrain_train.seed = seed;
  student_train.seed = seed;
  // The teacher sees the same 3:4 field of view as the degraded student input.
  const Frame probe(Shape{data.height, data.width, 1}, 0.0);
  const Frame cropped = center_crop(probe, degrade.aspect_h, degrade.aspect_w);
  teacher_model.in_channels = 1;
  teacher_model.in_h = cropped.dim(0);
  teacher_model.in_w = cropped.dim(1);
  teacher_model.num_classes = data.num_classes;
  student_model.in_channels = 1;
  student_model.in_h = degrade.target_h;
  student_model.in_w = degrade.target_w;
  student_model.num_classes = data.num_classes;
}

void PipelineConfig::validate() const {
  data.validate();
  degrade.validate();
  teacher_model.validate();
  student_model.validate();
  teacher_train.validate();
  student_train.validate();
  if (pretrain) {
    pretrain_train.validate();
    if (pretrain_train.weights.ce != 0.0) throw ConfigError("pretrain.train.weights.ce must be 0");
  }
  if (teacher_model.blocks() != student_model.blocks() ||
      teacher_model.feature_dim() != student_model.feature_dim() ||
      teacher_model.segments != student_model.segments || teacher_model.tam_hidden != student_model.tam_hidden) {
    throw ConfigError("teacher and student models must share block count, feature width, segments and tam_hidden");
  }
  if (degrade.target_h > teacher_model.in_h || degrade.target_w > teacher_model.in_w) {
    throw ConfigError("degrade target must not exceed the cropped high-resolution size");
  }
}

PipelineConfig parse_config(const json& j) {
  PipelineConfig c;
  read_section(
      j, "",
      {{"seed", set(c.seed)},
       {"data",
        [&c](const json& v, const std::string& p) {
          auto& d = c.data;
          read_section(v, p,
                       {{"num_classes", set(d.num_classes)},
                        {"clips_per_class", set(d.clips_per_class)},
                        {"test_clips_per_class", set(d.test_clips_per_class)},
                        {"unlabeled_clips", set(d.unlabeled_clips)},
                        {"frames", set(d.frames)},
                        {"height", set(d.height)},
                        {"width", set(d.width)},
                        {"position_jitter", set(d.position_jitter)},
                        {"pixel_noise", set(d.pixel_noise)}});
        }},
       {"degrade",
        [&c](const json& v, const std::string& p) {
          auto& d = c.degrade;
          read_section(v, p,
                       {{"target_h", set(d.target_h)},
                        {"target_w", set(d.target_w)},
                        {"blur_sigma", set(d.blur_sigma)},
                        {"noise_sigma", set(d.noise_sigma)}});
        }},
       {"teacher",
        [&c](const json& v, const std::string& p) {
          read_section(v, p,
                       {{"model", [&c](const json& m, const std::string& q) { read_model(m, q, c.teacher_model); }},
                        {"train", [&c](const json& t, const std::string& q) { read_train(t, q, c.teacher_train); }}});
        }},
       {"pretrain",
        [&c](const json& v, const std::string& p) {
          read_section(v, p,
                       {{"enabled", set(c.pretrain)},
                        {"train", [&c](const json& t, const std::string& q) { read_train(t, q, c.pretrain_train); }}});
        }},
       {"student",
        [&c](const json& v, const std::string& p) {
          read_section(v, p,
                       {{"model", [&c](const json& m, const std::string& q) { read_model(m, q, c.student_model); }},
                        {"train", [&c](const json& t, const std::string& q) { read_train(t, q, c.student_train); }}});
        }},
       {"visualize", [&c](const json& v, const std::string& p) {
          read_section(v, p, {{"clips", set(c.visualize_clips)}});
        }}});
  c.finalize();
  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

json to_json(const SyntheticSpec& d) {
  return {{"num_classes", d.num_classes},         {"clips_per_class", d.clips_per_class},
          {"test_clips_per_class", d.test_clips_per_class}, {"unlabeled_clips", d.unlabeled_clips},
          {"frames", d.frames},                   {"height", d.height},
          {"width", d.width},                     {"position_jitter", d.position_jitter},
          {"pixel_noise", d.pixel_noise},         {"seed", d.seed}};
}

json to_json(const DegradeConfig& d) {
  return {{"target_h", d.target_h},       {"target_w", d.target_w}, {"blur_sigma", d.blur_sigma},
          {"noise_sigma", d.noise_sigma}, {"seed", d.seed},         {"aspect_h", d.aspect_h},
          {"aspect_w", d.aspect_w}};
}

json to_json(const BackboneConfig& m) {
  return {{"in_channels", m.in_channels}, {"in_h", m.in_h},
          {"in_w", m.in_w},               {"widths", m.widths},
          {"kernel", m.kernel},           {"num_classes", m.num_classes},
          {"segments", m.segments},       {"tam_hidden", m.tam_hidden}};
}

json to_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"momentum", t.momentum},
          {"base_lr", t.base_lr},
          {"warmup_epochs", t.warmup_epochs},
          {"lr_decay_every", t.lr_decay_every},
          {"lr_decay_factor", t.lr_decay_factor},
          {"weight_mode", to_string(t.weight_mode)},
          {"weights",
           {{"ce", t.weights.ce},
            {"sat", t.weights.sat},
            {"tat", t.weights.tat},
            {"sat_blocks", t.weights.sat_blocks},
            {"tat_layers", t.weights.tat_layers}}},
          {"rolling", {{"spatial", t.rolling.spatial}, {"temporal", t.rolling.temporal}, {"period", t.rolling.period}}},
          {"distance", to_string(t.distance)},
          {"clip_gradients", t.clip_gradients},
          {"clip_threshold", t.clip_threshold},
          {"val_fraction", t.val_fraction},
          {"keep_best", t.keep_best},
          {"seed", t.seed}};
}

json to_json(const PipelineConfig& c) {
  return {{"seed", c.seed},
          {"data", to_json(c.data)},
          {"degrade", to_json(c.degrade)},
          {"teacher", {{"model", to_json(c.teacher_model)}, {"train", to_json(c.teacher_train)}}},
          {"pretrain", {{"enabled", c.pretrain}, {"train", to_json(c.pretrain_train)}}},
          {"student", {{"model", to_json(c.student_model)}, {"train", to_json(c.student_train)}}},
          {"visualize", {{"clips", c.visualize_clips}}}};
}

}  // namespace lrstat
