#pragma once

// Teacher training, label-free attention pretraining, and student training
// under the combined CE + SAT + TAT objective.
//
// Batches fan out across samples with OpenMP; each sample builds its own graph
// and the per-sample gradients are summed in sample-index order, so results do
// not depend on the thread count.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lrstat/attention.hpp"
#include "lrstat/backbone.hpp"

namespace lrstat {

enum class WeightMode { Fixed, Rolling };

std::string to_string(WeightMode mode);
WeightMode weight_mode_from_string(const std::string& name);

/// Per-block SAT weights and per-layer TAT weights cycled every `period` epochs.
struct RollingSchedule {
  std::vector<std::vector<double>> spatial{
      {0.4, 0.3, 0.2, 0.1}, {0.3, 0.4, 0.2, 0.1}, {0.2, 0.3, 0.4, 0.1}, {0.1, 0.2, 0.3, 0.4}};
  // Listed as (66%, 33%) and (33%, 66%); renormalized to sum to one.
  std::vector<std::vector<double>> temporal{{2.0 / 3.0, 1.0 / 3.0}, {1.0 / 3.0, 2.0 / 3.0}};
  std::size_t period = 10;

  void validate() const;
};

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  double momentum = 0.9;
  double base_lr = 0.001;
  std::size_t warmup_epochs = 5;
  std::size_t lr_decay_every = 20;
  double lr_decay_factor = 10.0;
  WeightMode weight_mode = WeightMode::Fixed;
  /// Fixed mode: all weights. Rolling mode: the overall (ce, sat, tat) triple.
  LossWeights weights;
  RollingSchedule rolling;
  DistanceKind distance = DistanceKind::Squared;
  bool clip_gradients = false;
  double clip_threshold = 10.0;
  double val_fraction = 0.2;
  /// Return the parameters of the epoch with the best validation prec@1.
  bool keep_best = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Linear warm-up from base/warmup to base over [0, warmup), then a step decay
/// by `lr_decay_factor` every `lr_decay_every` epochs counted from the end of
/// warm-up.
double lr_at(std::size_t epoch, const TrainConfig& cfg);

struct InnerWeights {
  std::vector<double> sat_blocks;
  std::vector<double> tat_layers;
};

/// Spatial vector floor(epoch / period) mod 4, temporal floor(epoch / period) mod 2.
InnerWeights rolling_weights_at(std::size_t epoch, const RollingSchedule& sched);

/// Loss weights in effect for an epoch under the configured mode.
LossWeights weights_at(std::size_t epoch, const TrainConfig& cfg);

/// Classical momentum: v <- momentum * v + g; p <- p - lr * v.
void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr, double momentum,
              std::span<Tensor> velocity);

struct EvalResult {
  double prec1 = 0.0;
  double prec5 = 0.0;
  std::size_t count = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  LossWeights weights;
  double loss_total = 0.0;
  double loss_ce = 0.0;
  double loss_sat = 0.0;
  double loss_tat = 0.0;
  std::optional<EvalResult> validation;
  double wall_seconds = 0.0;
};

struct Metrics {
  std::vector<EpochMetrics> epochs;
  std::optional<std::size_t> best_epoch;
};

/// A clip converted to model input: one [C x H x W] tensor per frame.
struct PreparedClip {
  std::string id;
  std::optional<std::size_t> label;
  std::vector<Tensor> frames;
};

/// Optional 3:4-style center crop applied before conversion (teacher inputs).
struct InputPrep {
  bool center_crop = false;
  std::size_t aspect_h = 3;
  std::size_t aspect_w = 4;
};

PreparedClip prepare_clip(const VideoClip& clip, const InputPrep& prep = {});
std::vector<PreparedClip> prepare_clips(std::span<const VideoClip> clips, const InputPrep& prep = {});

/// Teacher outputs for every frame of every clip: normalized attention vectors
/// aligned to the student grid, plus the pooled feature. The teacher is frozen,
/// so these are exact constants for the whole student run.
struct TeacherFrame {
  TeacherSpatialTargets spatial;
  Tensor feature;  // [D]
};

struct TeacherCache {
  ModelParams teacher;
  std::vector<std::vector<TeacherFrame>> frames;  // [clip][frame]
};

TeacherCache build_teacher_cache(const ModelParams& teacher, std::span<const PreparedClip> hr_clips,
                                 const BackboneConfig& student_cfg);

/// Teacher-side targets for one segment sample.
struct TeacherSample {
  std::vector<const TeacherSpatialTargets*> spatial;  // one per segment
  TemporalAttention temporal;
};

TeacherSample teacher_sample(const TeacherCache& cache, std::size_t clip_index, const SegmentSample& s);

struct SampleOutcome {
  double ce = 0.0;
  double sat = 0.0;
  double tat = 0.0;
  double total = 0.0;
  std::vector<Tensor> grads;  // ModelParams::tensors() order
};

/// One forward/backward pass. CE needs a label; SAT and TAT need a teacher
/// sample. SAT is averaged over segments. Terms with zero weight are skipped and
/// reported as 0.
SampleOutcome sample_step(const ModelParams& student, const PreparedClip& clip, const SegmentSample& s,
                          const TeacherSample* teacher, const LossWeights& w, DistanceKind distance,
                          bool use_ce);

/// Deterministic seeded split: the first round(n * fraction) shuffled indices validate.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_val(std::size_t n, double fraction,
                                                                              std::uint64_t seed);

struct TrainResult {
  ModelParams params;
  Metrics metrics;
};

/// Cross-entropy training (teacher on HR clips, or the CE-only student baseline).
TrainResult train_supervised(const BackboneConfig& model, std::span<const PreparedClip> clips, const TrainConfig& cfg,
                             const ModelParams* init = nullptr);

inline TrainResult train_teacher(const BackboneConfig& model, std::span<const PreparedClip> hr_clips,
                                 const TrainConfig& cfg) {
  return train_supervised(model, hr_clips, cfg);
}

/// Student training against a frozen teacher. lr_clips[i] must pair with the
/// teacher cache entry i (same id, label and frame count).
TrainResult train_student_stat(const TeacherCache& teacher, std::span<const PreparedClip> hr_clips,
                               std::span<const PreparedClip> lr_clips, const BackboneConfig& student_model,
                               const TrainConfig& cfg, const ModelParams* init = nullptr);

/// Label-free training of the student with W_CE = 0 (SAT + TAT only).
TrainResult pretrain_unsupervised(const TeacherCache& teacher, std::span<const PreparedClip> hr_clips,
                                  std::span<const PreparedClip> lr_clips, const BackboneConfig& student_model,
                                  const TrainConfig& cfg, const ModelParams* init = nullptr);

/// Top-n membership of the true label; ties rank the lower class index first.
bool in_top_n(std::span<const double> logits, std::size_t label, std::size_t n);

/// Test-center sampling; prec@1 and prec@5 over labeled clips.
EvalResult evaluate(const ModelParams& params, std::span<const PreparedClip> clips);

/// Test-center video-level feature of a clip, [D].
Tensor video_embedding(const ModelParams& params, const PreparedClip& clip);

/// CSV, one row per epoch. Header:
/// epoch,lr,w_ce,w_sat,w_tat,sat_w0..sat_w{B-1},tat_w0,tat_w1,loss_total,loss_ce,loss_sat,loss_tat,val_prec1,val_prec5
/// Wall time is excluded so that the file is reproducible byte for byte.
void write_metrics_csv(const std::filesystem::path& path, const Metrics& m);
void write_timing_csv(const std::filesystem::path& path, const Metrics& m);

}  // namespace lrstat
