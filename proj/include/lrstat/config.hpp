#pragma once

// Composite experiment configuration, read from JSON with one object per stage.
// Every key is checked; an unknown key is an error naming its full path.

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "lrstat/backbone.hpp"
#include "lrstat/degrade.hpp"
#include "lrstat/synthetic.hpp"
#include "lrstat/training.hpp"

namespace lrstat {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  SyntheticSpec data;
  DegradeConfig degrade;
  BackboneConfig teacher_model;
  TrainConfig teacher_train;
  bool pretrain = false;
  TrainConfig pretrain_train;
  BackboneConfig student_model;
  TrainConfig student_train;
  std::size_t visualize_clips = 2;

  PipelineConfig();

  /// Propagates the seed to every stage and derives input geometry and class
  /// count of both networks from the data and degradation sections.
  void finalize();
  void validate() const;
};

/// Parses a config; absent keys keep their defaults. The result is finalized.
PipelineConfig parse_config(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);

/// Canonical JSON of the effective configuration (all keys, defaults filled).
nlohmann::json to_json(const PipelineConfig& c);
nlohmann::json to_json(const SyntheticSpec& s);
nlohmann::json to_json(const DegradeConfig& d);
nlohmann::json to_json(const BackboneConfig& m);
nlohmann::json to_json(const TrainConfig& t);

}  // namespace lrstat
