#pragma once

// End-to-end run: generate -> degrade -> train teacher -> pretrain (optional)
// -> baseline student and attention-transfer student -> evaluate -> visualize.
//
// Every stage writes into its own directory under the output root and finishes
// by recording stage.json with a hash of its configuration and inputs. A rerun
// skips any stage whose recorded hash still matches.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrstat/config.hpp"
#include "lrstat/training.hpp"

namespace lrstat {

class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& cause)
      : std::runtime_error("stage '" + stage + "' failed: " + cause), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct Report {
  EvalResult teacher;
  EvalResult baseline;
  EvalResult stat;
  std::size_t lr_height = 0;
  std::size_t lr_width = 0;
  std::vector<std::string> skipped;  // stages reused from a previous run
  nlohmann::json to_json() const;
};

/// Clips shaped for a model: unchanged when they already match its input,
/// otherwise center cropped to 3:4 when that produces the expected size.
std::vector<PreparedClip> fit_clips(std::span<const VideoClip> clips, const BackboneConfig& model);

using StageLog = std::function<void(const std::string&)>;

Report run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir, const StageLog& log = {});

}  // namespace lrstat
