#pragma once

// Small block-structured convolutional feature extractor with a temporal
// attention module and a linear classifier head.
//
// Block b: conv (k x k, stride 1, same padding) -> bias -> relu -> 2x2 average
// pool. The pool is applied only when both spatial extents are even, so a
// 12x16 input yields 6x8, 3x4, 3x4, 3x4 and never an empty map.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lrstat/attention.hpp"
#include "lrstat/rng.hpp"
#include "lrstat/video.hpp"

namespace lrstat {

struct BackboneConfig {
  std::size_t in_channels = 1;
  std::size_t in_h = 12;
  std::size_t in_w = 16;
  std::vector<std::size_t> widths{16, 32, 64, 128};
  std::size_t kernel = 3;
  std::size_t num_classes = 8;
  std::size_t segments = 4;
  std::size_t tam_hidden = kTamHidden;

  std::size_t blocks() const { return widths.size(); }
  std::size_t feature_dim() const { return widths.back(); }
  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

struct BlockGeometry {
  std::size_t in_channels, out_channels;
  std::size_t in_h, in_w;
  bool pooled;
  std::size_t out_h, out_w;
};

std::vector<BlockGeometry> block_geometry(const BackboneConfig& cfg);

/// All trainable tensors of one network (backbone, classifier head, TAM).
struct ModelParams {
  BackboneConfig config;
  std::vector<Tensor> conv_w;  // [C_out x C_in x k x k]
  std::vector<Tensor> conv_b;  // [C_out]
  Tensor head_w;               // [D x classes]
  Tensor head_b;               // [1 x classes]
  Tensor tam_fc1_w;            // [K*D x hidden]
  Tensor tam_fc1_b;            // [1 x hidden]
  Tensor tam_fc2_w;            // [hidden x K]
  Tensor tam_fc2_b;            // [1 x K]

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::vector<std::string> names() const;
  /// FNV-1a over every parameter value, in tensors() order.
  std::uint64_t checksum() const;
};

/// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases.
ModelParams init_model(const BackboneConfig& cfg, std::uint64_t seed);

/// Graph leaves for one forward pass.
struct ModelVars {
  std::vector<Var> conv_w, conv_b;
  Var head_w, head_b;
  TamVars tam;

  /// Same order as ModelParams::tensors().
  std::vector<Var> all() const;
};

ModelVars make_vars(const ModelParams& p, bool requires_grad);

enum class SampleMode { TrainRandom, TestCenter };

struct SegmentSample {
  std::vector<std::size_t> frame_indices;
  SampleMode mode = SampleMode::TestCenter;
};

/// Splits [0, frame_count) into K contiguous segments (the first
/// frame_count % K segments get one extra frame) and picks one frame per
/// segment: uniformly at random, or the middle frame start + len / 2.
SegmentSample segment_sample(std::size_t frame_count, std::size_t k, SampleMode mode, Rng* rng = nullptr);
SegmentSample segment_sample(const VideoClip& clip, std::size_t k, SampleMode mode, Rng* rng = nullptr);

/// Outputs of every block for one segment, shallow to deep.
struct BlockActivations {
  std::vector<Var> blocks;
  Var feature;  // [D], spatial mean of the last block
};

struct BackboneOutput {
  std::vector<BlockActivations> segments;
  Var features;  // [K x D]
};

/// Block outputs and pooled feature for a single [C x H x W] frame.
BlockActivations frame_forward(const Tensor& frame, const ModelVars& vars, const BackboneConfig& cfg);

/// frames: one [C x H x W] tensor per segment.
BackboneOutput backbone_forward(std::span<const Tensor> frames, const ModelVars& vars,
                                const BackboneConfig& cfg);

struct ModelOutput {
  Var logits;  // [1 x classes]
  TamOutput tam;
  BackboneOutput backbone;
};

ModelOutput model_forward(std::span<const Tensor> frames, const ModelVars& vars, const BackboneConfig& cfg);

/// Binary checkpoint: magic, version, JSON header (config and tensor shapes),
/// then little-endian doubles. Round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& p);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace lrstat
