#include "lrstat/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <stdexcept>

#include "lrstat/degrade.hpp"

namespace lrstat {

std::string to_string(WeightMode mode) { return mode == WeightMode::Fixed ? "fixed" : "rolling"; }

WeightMode weight_mode_from_string(const std::string& name) {
  if (name == "fixed") return WeightMode::Fixed;
  if (name == "rolling") return WeightMode::Rolling;
  throw std::invalid_argument("unknown weight mode '" + name + "' (expected fixed|rolling)");
}

void RollingSchedule::validate() const {
  if (period == 0) throw std::invalid_argument("rolling schedule: period must be positive");
  if (spatial.empty() || temporal.empty()) throw std::invalid_argument("rolling schedule: empty rotation list");
  for (const auto* list : {&spatial, &temporal}) {
    for (const auto& v : *list) {
      double s = 0.0;
      for (double x : v) s += x;
      if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("rolling schedule: weight vector does not sum to 1");
    }
  }
}

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("train: epochs must be positive");
  if (warmup_epochs >= epochs) throw std::invalid_argument("train: warmup_epochs must be smaller than epochs");
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
  if (!(base_lr > 0.0) || !(lr_decay_factor > 0.0) || lr_decay_every == 0) {
    throw std::invalid_argument("train: learning-rate parameters must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train: momentum must be in [0, 1)");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw std::invalid_argument("train: val_fraction must be in [0, 1)");
  if (clip_gradients && !(clip_threshold > 0.0)) throw std::invalid_argument("train: clip_threshold must be positive");
  weights.validate();
  if (weight_mode == WeightMode::Rolling) rolling.validate();
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch < cfg.warmup_epochs) {
    return cfg.base_lr * static_cast<double>(epoch + 1) / static_cast<double>(cfg.warmup_epochs);
  }
  const std::size_t steps = (epoch - cfg.warmup_epochs) / cfg.lr_decay_every;
  return cfg.base_lr / std::pow(cfg.lr_decay_factor, static_cast<double>(steps));
}

InnerWeights rolling_weights_at(std::size_t epoch, const RollingSchedule& sched) {
  const std::size_t phase = epoch / sched.period;
  return {sched.spatial[phase % sched.spatial.size()], sched.temporal[phase % sched.temporal.size()]};
}

LossWeights weights_at(std::size_t epoch, const TrainConfig& cfg) {
  LossWeights w = cfg.weights;
  if (cfg.weight_mode == WeightMode::Rolling) {
    auto inner = rolling_weights_at(epoch, cfg.rolling);
    w.sat_blocks = std::move(inner.sat_blocks);
    w.tat_layers = std::move(inner.tat_layers);
  }
  return w;
}

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr, double momentum,
              std::span<Tensor> velocity) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw ShapeError("sgd_step: parameter, gradient and velocity counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(*params[i], grads[i], "sgd_step");
    require_same_shape(*params[i], velocity[i], "sgd_step");
    auto p = params[i]->data();
    auto v = velocity[i].data();
    const auto g = grads[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = momentum * v[j] + g[j];
      p[j] -= lr * v[j];
    }
  }
}

PreparedClip prepare_clip(const VideoClip& clip, const InputPrep& prep) {
  clip.validate();
  PreparedClip out{clip.id, clip.label, {}};
  out.frames.reserve(clip.frames.size());
  for (const auto& f : clip.frames) {
    out.frames.push_back(frame_to_chw(prep.center_crop ? center_crop(f, prep.aspect_h, prep.aspect_w) : f));
  }
  return out;
}

std::vector<PreparedClip> prepare_clips(std::span<const VideoClip> clips, const InputPrep& prep) {
  std::vector<PreparedClip> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back(prepare_clip(c, prep));
  return out;
}

namespace {

template <typename F>
void parallel_for(std::size_t n, F&& body) {
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<Shape> student_block_shapes(const BackboneConfig& cfg) {
  std::vector<Shape> s;
  for (const auto& g : block_geometry(cfg)) s.push_back(Shape{g.out_channels, g.out_h, g.out_w});
  return s;
}

std::vector<Tensor> gather_frames(const PreparedClip& clip, const SegmentSample& s) {
  std::vector<Tensor> frames;
  frames.reserve(s.frame_indices.size());
  for (auto i : s.frame_indices) frames.push_back(clip.frames.at(i));
  return frames;
}

}  // namespace

TeacherCache build_teacher_cache(const ModelParams& teacher, std::span<const PreparedClip> hr_clips,
                                 const BackboneConfig& student_cfg) {
  if (teacher.config.blocks() != student_cfg.blocks() || teacher.config.feature_dim() != student_cfg.feature_dim() ||
      teacher.config.segments != student_cfg.segments || teacher.config.tam_hidden != student_cfg.tam_hidden) {
    throw ShapeError("teacher and student must share block count, feature width, K and TAM width");
  }
  const auto shapes = student_block_shapes(student_cfg);
  TeacherCache cache{teacher, std::vector<std::vector<TeacherFrame>>(hr_clips.size())};
  const ModelVars vars = make_vars(teacher, false);
  parallel_for(hr_clips.size(), [&](std::size_t c) {
    auto& out = cache.frames[c];
    out.reserve(hr_clips[c].frames.size());
    for (const auto& f : hr_clips[c].frames) {
      const BlockActivations acts = frame_forward(f, vars, teacher.config);
      try {
        out.push_back({teacher_spatial_targets(acts.blocks, shapes), acts.feature.value()});
      } catch (const DegenerateInputError& e) {
        throw DegenerateInputError("teacher on clip '" + hr_clips[c].id + "': " + e.what());
      }
    }
  });
  return cache;
}

TeacherSample teacher_sample(const TeacherCache& cache, std::size_t clip_index, const SegmentSample& s) {
  const auto& frames = cache.frames.at(clip_index);
  TeacherSample t;
  std::vector<Var> feats;
  for (auto i : s.frame_indices) {
    t.spatial.push_back(&frames.at(i).spatial);
    feats.push_back(Var::constant(frames.at(i).feature));
  }
  const auto& p = cache.teacher;
  const TamVars tam{Var::constant(p.tam_fc1_w), Var::constant(p.tam_fc1_b), Var::constant(p.tam_fc2_w),
                    Var::constant(p.tam_fc2_b)};
  t.temporal = tam_forward(stack(feats), tam).attention;
  return t;
}

SampleOutcome sample_step(const ModelParams& student, const PreparedClip& clip, const SegmentSample& s,
                          const TeacherSample* teacher, const LossWeights& w, DistanceKind distance, bool use_ce) {
  const ModelVars vars = make_vars(student, true);
  const auto frames = gather_frames(clip, s);
  const ModelOutput out = model_forward(frames, vars, student.config);

  Var ce = Var::constant(Tensor::scalar(0.0));
  if (use_ce) {
    if (!clip.label) throw std::invalid_argument("clip '" + clip.id + "' has no label for cross-entropy");
    ce = cross_entropy(out.logits, *clip.label);
  }
  Var sat = Var::constant(Tensor::scalar(0.0));
  Var tat = Var::constant(Tensor::scalar(0.0));
  // A term with zero weight is not evaluated, so a CE-only run through this path never
  // touches attention maps (which would throw on a dead block) and logs 0 for it.
  if (teacher != nullptr && w.sat != 0.0) {
    const std::size_t k = out.backbone.segments.size();
    for (std::size_t seg = 0; seg < k; ++seg) {
      sat = add(sat, sat_loss(out.backbone.segments[seg].blocks, *teacher->spatial[seg], w.sat_blocks, distance));
    }
    sat = scale(sat, 1.0 / static_cast<double>(k));
  }
  if (teacher != nullptr && w.tat != 0.0) tat = tat_loss(out.tam.attention, teacher->temporal, w.tat_layers, distance);
  const Var total = total_loss(ce, sat, tat, w);
  backward(total);

  SampleOutcome r{ce.item(), sat.item(), tat.item(), total.item(), {}};
  for (const auto& v : vars.all()) r.grads.push_back(v.grad());
  return r;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_val(std::size_t n, double fraction,
                                                                              std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(Rng::derive(seed, {0x5917}));
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
  if (n_val >= n) n_val = n - 1;
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {train, val};
}

namespace {

struct Job {
  const BackboneConfig& model;
  std::span<const PreparedClip> clips;
  const TeacherCache* teacher = nullptr;
  bool use_ce = true;
  const TrainConfig& cfg;
  const ModelParams* init = nullptr;
};

void clip_global_norm(std::vector<Tensor>& grads, double threshold) {
  double ss = 0.0;
  for (const auto& g : grads) {
    for (double v : g.data()) ss += v * v;
  }
  const double norm = std::sqrt(ss);
  if (norm <= threshold) return;
  const double f = threshold / norm;
  for (auto& g : grads) {
    for (auto& v : g.data()) v *= f;
  }
}

TrainResult run_training(const Job& job) {
  const TrainConfig& cfg = job.cfg;
  cfg.validate();
  job.model.validate();
  if (job.clips.empty()) throw std::invalid_argument("training: empty dataset");
  for (const auto& c : job.clips) {
    if (job.use_ce && !c.label) throw std::invalid_argument("training: clip '" + c.id + "' is unlabeled");
    if (job.use_ce && *c.label >= job.model.num_classes) {
      throw std::invalid_argument("training: clip '" + c.id + "' label exceeds class count");
    }
  }

  ModelParams params = job.init ? *job.init : init_model(job.model, Rng::derive(cfg.seed, {0x1a17}));
  if (!(params.config == job.model)) throw std::invalid_argument("training: initial parameters have another shape");

  std::vector<std::size_t> train_idx, val_idx;
  if (job.use_ce && cfg.val_fraction > 0.0) {
    std::tie(train_idx, val_idx) = split_train_val(job.clips.size(), cfg.val_fraction, cfg.seed);
  } else {
    for (std::size_t i = 0; i < job.clips.size(); ++i) train_idx.push_back(i);
  }
  std::vector<PreparedClip> val_clips;
  for (auto i : val_idx) val_clips.push_back(job.clips[i]);

  std::vector<Tensor> velocity;
  for (const Tensor* t : std::as_const(params).tensors()) velocity.push_back(Tensor::zeros(t->shape()));

  TrainResult result{params, {}};
  std::optional<ModelParams> best;
  double best_prec = -1.0;
  const std::size_t k = job.model.segments;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const LossWeights w = weights_at(epoch, cfg);
    const double lr = lr_at(epoch, cfg);

    std::vector<std::size_t> order = train_idx;
    Rng shuffle(Rng::derive(cfg.seed, {0x5eed, epoch}));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    EpochMetrics em;
    em.epoch = epoch;
    em.lr = lr;
    em.weights = w;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, order.size() - start);
      std::vector<SampleOutcome> outcomes(b);
      parallel_for(b, [&](std::size_t i) {
        const std::size_t idx = order[start + i];
        const PreparedClip& clip = job.clips[idx];
        Rng rng(Rng::derive(cfg.seed, {0x5a3b, epoch, idx}));
        const SegmentSample s = segment_sample(clip.frames.size(), k, SampleMode::TrainRandom, &rng);
        std::optional<TeacherSample> ts;
        if (job.teacher) ts = teacher_sample(*job.teacher, idx, s);
        outcomes[i] = sample_step(params, clip, s, ts ? &*ts : nullptr, w, cfg.distance, job.use_ce);
      });

      std::vector<Tensor> grads = std::move(outcomes[0].grads);
      for (std::size_t i = 1; i < b; ++i) {
        for (std::size_t t = 0; t < grads.size(); ++t) {
          auto dst = grads[t].data();
          const auto src = outcomes[i].grads[t].data();
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
      }
      const double inv = 1.0 / static_cast<double>(b);
      for (auto& g : grads) {
        for (auto& v : g.data()) v *= inv;
      }
      if (cfg.clip_gradients) clip_global_norm(grads, cfg.clip_threshold);
      const auto ptrs = params.tensors();
      sgd_step(ptrs, grads, lr, cfg.momentum, velocity);

      for (const auto& o : outcomes) {
        em.loss_ce += o.ce;
        em.loss_sat += o.sat;
        em.loss_tat += o.tat;
        em.loss_total += o.total;
      }
    }
    const double n = static_cast<double>(order.size());
    em.loss_ce /= n;
    em.loss_sat /= n;
    em.loss_tat /= n;
    em.loss_total /= n;

    if (!val_clips.empty()) {
      em.validation = evaluate(params, val_clips);
      if (em.validation->prec1 > best_prec) {
        best_prec = em.validation->prec1;
        best = params;
        result.metrics.best_epoch = epoch;
      }
    }
    em.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.metrics.epochs.push_back(std::move(em));
  }

  result.params = (cfg.keep_best && best) ? std::move(*best) : std::move(params);
  if (!(cfg.keep_best && best)) result.metrics.best_epoch.reset();
  return result;
}

void check_pairs(const TeacherCache& teacher, std::span<const PreparedClip> hr, std::span<const PreparedClip> lr) {
  if (hr.size() != lr.size() || teacher.frames.size() != lr.size()) {
    throw std::invalid_argument("student training: unpaired data (" + std::to_string(hr.size()) + " HR clips, " +
                                std::to_string(lr.size()) + " LR clips, teacher cache of " +
                                std::to_string(teacher.frames.size()) + ")");
  }
  for (std::size_t i = 0; i < lr.size(); ++i) {
    if (hr[i].id != lr[i].id || hr[i].label != lr[i].label || hr[i].frames.size() != lr[i].frames.size() ||
        teacher.frames[i].size() != lr[i].frames.size()) {
      throw std::invalid_argument("student training: clip " + std::to_string(i) + " is unpaired ('" + hr[i].id +
                                  "' vs '" + lr[i].id + "')");
    }
  }
}

}  // namespace

TrainResult train_supervised(const BackboneConfig& model, std::span<const PreparedClip> clips, const TrainConfig& cfg,
                             const ModelParams* init) {
  TrainConfig c = cfg;
  c.weight_mode = WeightMode::Fixed;
  c.weights.ce = 1.0;
  c.weights.sat = 0.0;
  c.weights.tat = 0.0;
  return run_training({model, clips, nullptr, true, c, init});
}

TrainResult train_student_stat(const TeacherCache& teacher, std::span<const PreparedClip> hr_clips,
                               std::span<const PreparedClip> lr_clips, const BackboneConfig& student_model,
                               const TrainConfig& cfg, const ModelParams* init) {
  check_pairs(teacher, hr_clips, lr_clips);
  return run_training({student_model, lr_clips, &teacher, true, cfg, init});
}

TrainResult pretrain_unsupervised(const TeacherCache& teacher, std::span<const PreparedClip> hr_clips,
                                  std::span<const PreparedClip> lr_clips, const BackboneConfig& student_model,
                                  const TrainConfig& cfg, const ModelParams* init) {
  if (cfg.weights.ce != 0.0) throw std::invalid_argument("pretraining: W_CE must be 0 (label-free objective)");
  check_pairs(teacher, hr_clips, lr_clips);
  return run_training({student_model, lr_clips, &teacher, false, cfg, init});
}

bool in_top_n(std::span<const double> logits, std::size_t label, std::size_t n) {
  const double l = logits[label];
  std::size_t rank = 0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (logits[j] > l || (logits[j] == l && j < label)) ++rank;
  }
  return rank < n;
}

EvalResult evaluate(const ModelParams& params, std::span<const PreparedClip> clips) {
  if (clips.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::vector<int> hit1(clips.size()), hit5(clips.size());
  const ModelVars vars = make_vars(params, false);
  parallel_for(clips.size(), [&](std::size_t i) {
    const auto& clip = clips[i];
    if (!clip.label) throw std::invalid_argument("evaluate: clip '" + clip.id + "' is unlabeled");
    const auto s = segment_sample(clip.frames.size(), params.config.segments, SampleMode::TestCenter);
    const auto out = model_forward(gather_frames(clip, s), vars, params.config);
    const auto logits = out.logits.value().data();
    hit1[i] = in_top_n(logits, *clip.label, 1);
    hit5[i] = in_top_n(logits, *clip.label, 5);
  });
  EvalResult r;
  r.count = clips.size();
  for (std::size_t i = 0; i < clips.size(); ++i) {
    r.prec1 += hit1[i];
    r.prec5 += hit5[i];
  }
  r.prec1 /= static_cast<double>(r.count);
  r.prec5 /= static_cast<double>(r.count);
  return r;
}

Tensor video_embedding(const ModelParams& params, const PreparedClip& clip) {
  const ModelVars vars = make_vars(params, false);
  const auto s = segment_sample(clip.frames.size(), params.config.segments, SampleMode::TestCenter);
  const auto out = model_forward(gather_frames(clip, s), vars, params.config);
  return out.tam.video_feature.value().reshaped(Shape{params.config.feature_dim()});
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, const Metrics& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write metrics " + path.string());
  const std::size_t blocks = m.epochs.empty() ? 0 : m.epochs.front().weights.sat_blocks.size();
  out << "epoch,lr,w_ce,w_sat,w_tat";
  for (std::size_t b = 0; b < blocks; ++b) out << ",sat_w" << b;
  out << ",tat_w0,tat_w1,loss_total,loss_ce,loss_sat,loss_tat,val_prec1,val_prec5\n";
  for (const auto& e : m.epochs) {
    out << e.epoch << ',' << fmt(e.lr) << ',' << fmt(e.weights.ce) << ',' << fmt(e.weights.sat) << ','
        << fmt(e.weights.tat);
    for (double v : e.weights.sat_blocks) out << ',' << fmt(v);
    for (double v : e.weights.tat_layers) out << ',' << fmt(v);
    out << ',' << fmt(e.loss_total) << ',' << fmt(e.loss_ce) << ',' << fmt(e.loss_sat) << ',' << fmt(e.loss_tat);
    if (e.validation) {
      out << ',' << fmt(e.validation->prec1) << ',' << fmt(e.validation->prec5);
    } else {
      out << ",,";
    }
    out << '\n';
  }
}

void write_timing_csv(const std::filesystem::path& path, const Metrics& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write timing " + path.string());
  out << "epoch,wall_seconds\n";
  for (const auto& e : m.epochs) out << e.epoch << ',' << fmt(e.wall_seconds) << '\n';
}

}  // namespace lrstat
