#pragma once

// High-resolution to low-resolution degradation:
// center crop -> lens blur -> average downsample -> Gaussian noise.

#include <cstddef>
#include <cstdint>

#include "lrstat/rng.hpp"
#include "lrstat/video.hpp"

namespace lrstat {

struct DegradeConfig {
  std::size_t target_h = 12;
  std::size_t target_w = 16;
  double blur_sigma = 1.0;    // in high-resolution pixels
  double noise_sigma = 0.01;  // intensity units, applied at the target resolution
  std::uint64_t seed = 0;
  std::size_t aspect_h = 3;
  std::size_t aspect_w = 4;

  void validate() const;
};

/// Largest centered window with exactly aspect_h:aspect_w, extents rounded down.
Frame center_crop(const Frame& f, std::size_t aspect_h, std::size_t aspect_w);

/// Separable truncated Gaussian (radius ceil(3 sigma), reflect padding). sigma 0 is the identity.
Frame lens_blur(const Frame& f, double sigma);

/// Exact area-weighted mean over each output footprint. Rejects upsampling.
Frame average_downsample(const Frame& f, std::size_t target_h, std::size_t target_w);

/// Adds N(0, sigma^2) per value in row-major order, then clamps to [0, 1].
Frame gaussian_noise(const Frame& f, double sigma, Rng& rng);

/// Noise stream for one frame; depends only on (seed, clip id, frame index).
std::uint64_t frame_noise_seed(std::uint64_t seed, const std::string& clip_id, std::size_t frame_index);

Frame degrade_frame(const Frame& f, const DegradeConfig& cfg, Rng& rng);

/// Degrades every frame with the same configuration. Frames are processed in
/// parallel; the per-frame seeding makes the result independent of scheduling.
VideoClip degrade_clip(const VideoClip& clip, const DegradeConfig& cfg);

}  // namespace lrstat
