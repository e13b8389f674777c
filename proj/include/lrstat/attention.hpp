#pragma once

// Spatial and temporal attention, and the transfer losses built on them.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lrstat/autodiff.hpp"

namespace lrstat {

/// Distance between normalized attention vectors.
enum class DistanceKind {
  Squared,    // ||a - b||_2^2 (default)
  Euclidean,  // ||a - b||_2
};

std::string to_string(DistanceKind kind);
DistanceKind distance_from_string(const std::string& name);

/// Overall (CE, SAT, TAT) weights plus the per-block and per-layer inner weights.
struct LossWeights {
  double ce = 1.0 / 3.0;
  double sat = 1.0 / 3.0;
  double tat = 1.0 / 3.0;
  std::vector<double> sat_blocks{0.25, 0.25, 0.25, 0.25};
  std::vector<double> tat_layers{0.5, 0.5};

  /// Non-negative entries; each group sums to 1 within 1e-12.
  void validate() const;
};

/// Per-position sum of absolute channel activations: [C x H x W] -> [H x W].
Var spatial_attention(const Var& activation);

/// Row-major flattening of a map followed by L2 normalization.
Var attention_vector(const Var& map);

/// Area-average pooling of a teacher map [H_T x W_T] onto a student grid.
Tensor align_teacher_map(const Tensor& teacher_map, std::size_t student_h, std::size_t student_w);

/// Distance between a normalized student vector and a fixed target.
Var attention_distance(const Var& student_vec, const Tensor& target_vec, DistanceKind kind);

/// Normalized teacher attention vectors, one per block, already aligned to the
/// student grid. Constants: no gradient flows into the teacher.
struct TeacherSpatialTargets {
  std::vector<Tensor> vectors;
};

TeacherSpatialTargets teacher_spatial_targets(std::span<const Var> teacher_blocks,
                                              std::span<const Var> student_blocks);
/// Same, given only the student block shapes ([C x H x W] each).
TeacherSpatialTargets teacher_spatial_targets(std::span<const Var> teacher_blocks,
                                              std::span<const Shape> student_block_shapes);

/// Weighted spatial attention transfer loss over paired block outputs.
Var sat_loss(std::span<const Var> student_blocks, const TeacherSpatialTargets& targets,
             std::span<const double> block_weights, DistanceKind kind = DistanceKind::Squared);
Var sat_loss(std::span<const Var> student_blocks, std::span<const Var> teacher_blocks,
             std::span<const double> block_weights, DistanceKind kind = DistanceKind::Squared);

inline constexpr std::size_t kTamHidden = 64;

/// Temporal attention module parameters. K segments of D features.
struct TamVars {
  Var fc1_w;  // [K*D x hidden]
  Var fc1_b;  // [1 x hidden]
  Var fc2_w;  // [hidden x K]
  Var fc2_b;  // [1 x K]
};

struct TemporalAttention {
  Var hidden;   // [1 x hidden], after relu
  Var logits;   // [1 x K]
  Var weights;  // [1 x K], softmax of logits
};

struct TamOutput {
  TemporalAttention attention;
  Var video_feature;  // [1 x D]
};

/// hidden = relu(concat(features) W1 + b1); weights = softmax(hidden W2 + b2);
/// video_feature = weights * features.
TamOutput tam_forward(const Var& segment_features, const TamVars& params);

/// Weighted distance between the normalized hidden and logit outputs of two TAMs.
Var tat_loss(const TemporalAttention& student, const TemporalAttention& teacher,
             std::span<const double> layer_weights, DistanceKind kind = DistanceKind::Squared);

/// W_CE * ce + W_SAT * sat + W_TAT * tat.
Var total_loss(const Var& ce, const Var& sat, const Var& tat, const LossWeights& w);

}  // namespace lrstat
