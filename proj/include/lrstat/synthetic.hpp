#pragma once

// Synthetic activity clips whose class is a temporal pattern. Classes come in
// time-reversed pairs, so both members of a pair draw frames from the same
// distribution and only the ordering tells them apart.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lrstat/dataset.hpp"
#include "lrstat/video.hpp"

namespace lrstat {

struct SyntheticSpec {
  std::size_t num_classes = 8;  // at most 8
  std::size_t clips_per_class = 40;
  std::size_t test_clips_per_class = 10;
  std::size_t unlabeled_clips = 0;
  std::size_t frames = 16;
  std::size_t height = 64;
  std::size_t width = 64;
  /// Maximum displacement of the pattern center, in pixels.
  double position_jitter = 6.0;
  /// Additive per-frame sensor noise before 8-bit quantization.
  double pixel_noise = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
};

std::vector<std::string> synthetic_class_names(std::size_t num_classes);

/// One clip; deterministic in (spec.seed, label, stream, index).
VideoClip synthetic_clip(const SyntheticSpec& spec, std::size_t label, std::uint64_t stream, std::size_t index);

struct SyntheticSplits {
  std::vector<VideoClip> train;
  std::vector<VideoClip> test;
  std::vector<VideoClip> unlabeled;
};

/// Frames are quantized to 8 bits so in-memory clips equal what gen_synthetic writes.
SyntheticSplits synthetic_dataset(const SyntheticSpec& spec);

Manifest gen_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace lrstat
