#pragma once

// Small synthetic teacher/student setup for training tests.

#include <vector>

#include "lrstat/degrade.hpp"
#include "lrstat/synthetic.hpp"
#include "lrstat/training.hpp"

namespace testutil {

struct SmallSetup {
  lrstat::SyntheticSpec spec;
  lrstat::BackboneConfig teacher_cfg, student_cfg;
  std::vector<lrstat::PreparedClip> hr, lr, hr_test, lr_test;
};

inline SmallSetup small_setup(std::size_t classes = 4, std::size_t per_class = 3, std::uint64_t seed = 0) {
  using namespace lrstat;
  SmallSetup s;
  s.spec.num_classes = classes;
  s.spec.clips_per_class = per_class;
  s.spec.test_clips_per_class = 2;
  s.spec.frames = 8;
  s.spec.height = 32;
  s.spec.width = 32;
  s.spec.position_jitter = 2.0;
  s.spec.seed = seed;
  const SyntheticSplits data = synthetic_dataset(s.spec);

  DegradeConfig d;
  d.target_h = 6;
  d.target_w = 8;
  d.seed = seed;
  auto lr_of = [&](const std::vector<VideoClip>& clips) {
    std::vector<VideoClip> out;
    for (const auto& c : clips) out.push_back(degrade_clip(c, d));
    return prepare_clips(out);
  };
  s.hr = prepare_clips(data.train, {true});
  s.hr_test = prepare_clips(data.test, {true});
  s.lr = lr_of(data.train);
  s.lr_test = lr_of(data.test);

  s.teacher_cfg.in_h = 24;
  s.teacher_cfg.in_w = 32;
  s.teacher_cfg.widths = {4, 6};
  s.teacher_cfg.num_classes = classes;
  s.teacher_cfg.segments = 2;
  s.teacher_cfg.tam_hidden = 16;
  s.student_cfg = s.teacher_cfg;
  s.student_cfg.in_h = 6;
  s.student_cfg.in_w = 8;
  return s;
}

inline lrstat::TrainConfig small_train(std::size_t epochs = 3) {
  lrstat::TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 4;
  c.base_lr = 0.05;
  c.warmup_epochs = 1;
  c.val_fraction = 0.0;
  c.keep_best = false;
  c.weights.sat_blocks = {0.5, 0.5};
  c.rolling.spatial = {{0.75, 0.25}, {0.25, 0.75}};
  return c;
}

}  // namespace testutil
