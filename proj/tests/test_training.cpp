#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "tiny_model.hpp"
#include "helpers.hpp"
#include "lrstat/training.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace lrstat;
using testutil::random_tensor;

namespace {

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_params(const ModelParams& a, const ModelParams& b) {
  const auto x = a.tensors(), y = b.tensors();
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i]->shape() != y[i]->shape()) return false;
    for (std::size_t j = 0; j < x[i]->numel(); ++j) {
      if ((*x[i])[j] != (*y[i])[j]) return false;
    }
  }
  return true;
}

bool same_trace(const Metrics& a, const Metrics& b) {
  if (a.epochs.size() != b.epochs.size()) return false;
  for (std::size_t e = 0; e < a.epochs.size(); ++e) {
    const auto &x = a.epochs[e], &y = b.epochs[e];
    if (x.loss_total != y.loss_total || x.loss_ce != y.loss_ce || x.loss_sat != y.loss_sat || x.loss_tat != y.loss_tat ||
        x.lr != y.lr)
      return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("learning rate schedule") {
    TrainConfig c;
    CHECK(lr_at(0, c) == doctest::Approx(0.0002).epsilon(1e-15));
    CHECK(lr_at(2, c) == doctest::Approx(0.0006).epsilon(1e-15));
    CHECK(lr_at(4, c) == doctest::Approx(0.001).epsilon(1e-15));
    for (std::size_t e = 5; e <= 24; ++e) CHECK(lr_at(e, c) == doctest::Approx(0.001).epsilon(1e-15));
    CHECK(lr_at(25, c) == doctest::Approx(0.0001).epsilon(1e-15));
    c.warmup_epochs = 0;
    CHECK(lr_at(0, c) == doctest::Approx(0.001).epsilon(1e-15));
    CHECK(lr_at(19, c) == doctest::Approx(0.001).epsilon(1e-15));
    CHECK(lr_at(20, c) == doctest::Approx(0.0001).epsilon(1e-15));
    CHECK(lr_at(39, c) == doctest::Approx(0.0001).epsilon(1e-15));
  }

  TEST_CASE("rolling weights") {
    const RollingSchedule r;
    const auto w0 = rolling_weights_at(0, r);
    CHECK(w0.sat_blocks == std::vector<double>{0.4, 0.3, 0.2, 0.1});
    CHECK(w0.tat_layers[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(w0.tat_layers[0] + w0.tat_layers[1] == doctest::Approx(1.0).epsilon(1e-15));
    const auto w10 = rolling_weights_at(10, r);
    CHECK(w10.sat_blocks == std::vector<double>{0.3, 0.4, 0.2, 0.1});
    CHECK(w10.tat_layers[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(rolling_weights_at(9, r).sat_blocks == w0.sat_blocks);
    CHECK(rolling_weights_at(30, r).sat_blocks == std::vector<double>{0.1, 0.2, 0.3, 0.4});
    CHECK(rolling_weights_at(30, r).tat_layers == w10.tat_layers);
    CHECK(rolling_weights_at(40, r).sat_blocks == w0.sat_blocks);
    CHECK(rolling_weights_at(40, r).tat_layers == w0.tat_layers);

    TrainConfig c;
    c.weight_mode = WeightMode::Rolling;
    const LossWeights lw = weights_at(12, c);
    CHECK(lw.sat_blocks == w10.sat_blocks);
    CHECK(lw.ce == c.weights.ce);
    c.weight_mode = WeightMode::Fixed;
    CHECK(weights_at(12, c).sat_blocks == c.weights.sat_blocks);
  }

  TEST_CASE("config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.warmup_epochs = 40;
    CHECK_THROWS(c.validate());
    c = {};
    c.weights.ce = 0.5;
    CHECK_THROWS(c.validate());
    c = {};
    c.momentum = 1.0;
    CHECK_THROWS(c.validate());
    c = {};
    c.rolling.temporal = {{0.66, 0.33}};
    CHECK_NOTHROW(c.validate());  // only checked in rolling mode
    c.weight_mode = WeightMode::Rolling;
    CHECK_THROWS(c.validate());
    CHECK(weight_mode_from_string(to_string(WeightMode::Rolling)) == WeightMode::Rolling);
    CHECK_THROWS(weight_mode_from_string("sometimes"));
  }

  TEST_CASE("sgd with momentum") {
    Tensor p = random_tensor({3}, 1), v(Shape{3});
    const Tensor p0 = p;
    const Tensor g = random_tensor({3}, 2);
    Tensor* ptrs[] = {&p};
    const Tensor zero(Shape{3});
    sgd_step(ptrs, std::span(&zero, 1), 0.1, 0.9, std::span(&v, 1));
    for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == p0[i]);

    sgd_step(ptrs, std::span(&g, 1), 0.1, 0.0, std::span(&v, 1));
    for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(p0[i] - 0.1 * g[i]).epsilon(1e-14));

    p = p0;
    v = Tensor(Shape{3});
    sgd_step(ptrs, std::span(&g, 1), 0.1, 0.9, std::span(&v, 1));
    sgd_step(ptrs, std::span(&g, 1), 0.1, 0.9, std::span(&v, 1));
    for (std::size_t i = 0; i < 3; ++i) CHECK(p0[i] - p[i] == doctest::Approx(0.1 * g[i] * 2.9).epsilon(1e-12));

    const Tensor wrong(Shape{4});
    CHECK_THROWS(sgd_step(ptrs, std::span(&wrong, 1), 0.1, 0.9, std::span(&v, 1)));
  }

  TEST_CASE("train/validation split") {
    const auto [tr, va] = split_train_val(10, 0.2, 3);
    CHECK(tr.size() == 8);
    CHECK(va.size() == 2);
    std::vector<int> seen(10);
    for (auto i : tr) ++seen[i];
    for (auto i : va) ++seen[i];
    for (int s : seen) CHECK(s == 1);
    CHECK(split_train_val(10, 0.2, 3) == split_train_val(10, 0.2, 3));
    CHECK(split_train_val(1, 0.5, 0).first.size() == 1);
  }

  TEST_CASE("ranking and evaluation") {
    const std::vector<double> l{0.1, 0.5, 0.5, -1.0};
    CHECK(in_top_n(l, 1, 1));
    CHECK_FALSE(in_top_n(l, 2, 1));
    CHECK(in_top_n(l, 2, 2));
    CHECK(in_top_n(l, 3, 4));

    // Constant logits: only class 0 wins under the tie rule.
    auto s = testutil::small_setup(4, 2);
    BackboneConfig cfg = s.student_cfg;
    cfg.num_classes = 8;
    ModelParams p = init_model(cfg, 1);
    p.head_w.fill(0.0);
    std::vector<PreparedClip> balanced;
    for (std::size_t c = 0; c < 8; ++c) {
      PreparedClip clip = s.lr[c % s.lr.size()];
      clip.label = c;
      balanced.push_back(clip);
    }
    const EvalResult r = evaluate(p, balanced);
    CHECK(r.prec1 == doctest::Approx(1.0 / 8.0));
    CHECK(r.prec5 == doctest::Approx(5.0 / 8.0));
    CHECK(r.count == 8);

    // Bias that favors each clip's true label makes a perfect classifier.
    std::vector<PreparedClip> one{s.lr[0]};
    p.head_b.fill(0.0);
    p.head_b[*one[0].label] = 1.0;
    const EvalResult perfect = evaluate(p, one);
    CHECK(perfect.prec1 == 1.0);
    CHECK(perfect.prec5 == 1.0);

    cfg.num_classes = 5;
    const ModelParams q = init_model(cfg, 4);
    CHECK(evaluate(q, s.lr).prec5 == 1.0);

    CHECK_THROWS(evaluate(q, std::span<const PreparedClip>{}));
  }

  TEST_CASE("one-clip memorization") {
    auto s = testutil::small_setup(4, 1);
    std::vector<PreparedClip> one{s.hr[1]};
    TrainConfig c = testutil::small_train(60);
    c.batch_size = 1;
    c.base_lr = 0.05;
    const TrainResult r = train_supervised(s.teacher_cfg, one, c);
    CHECK(r.metrics.epochs.back().loss_total < 0.01);
  }

  TEST_CASE("supervised training is deterministic and thread independent") {
    auto s = testutil::small_setup();
    TrainConfig c = testutil::small_train(3);
    c.val_fraction = 0.25;
    c.keep_best = true;
    const TrainResult a = train_supervised(s.student_cfg, s.lr, c);
    const TrainResult b = train_supervised(s.student_cfg, s.lr, c);
    CHECK(same_trace(a.metrics, b.metrics));
    CHECK(same_params(a.params, b.params));
    CHECK(a.metrics.epochs[0].validation.has_value());
    CHECK(a.metrics.best_epoch.has_value());
#ifdef _OPENMP
    const int saved = omp_get_max_threads();
    omp_set_num_threads(3);
    const TrainResult t = train_supervised(s.student_cfg, s.lr, c);
    omp_set_num_threads(saved);
    CHECK(same_trace(a.metrics, t.metrics));
    CHECK(same_params(a.params, t.params));
#endif
  }

  TEST_CASE("errors") {
    auto s = testutil::small_setup();
    const TrainConfig c = testutil::small_train(2);
    CHECK_THROWS(train_supervised(s.student_cfg, std::span<const PreparedClip>{}, c));
    std::vector<PreparedClip> unlabeled{s.lr[0]};
    unlabeled[0].label.reset();
    CHECK_THROWS(train_supervised(s.student_cfg, unlabeled, c));

    const ModelParams teacher = init_model(s.teacher_cfg, 1);
    const TeacherCache cache = build_teacher_cache(teacher, s.hr, s.student_cfg);
    std::vector<PreparedClip> shifted(s.lr.begin() + 1, s.lr.end());
    shifted.push_back(s.lr[0]);
    CHECK_THROWS(train_student_stat(cache, s.hr, shifted, s.student_cfg, c));
    std::vector<PreparedClip> shorter(s.lr.begin(), s.lr.end() - 1);
    CHECK_THROWS(train_student_stat(cache, s.hr, shorter, s.student_cfg, c));
    TrainConfig with_ce = c;
    with_ce.weights.ce = 0.5;
    with_ce.weights.sat = with_ce.weights.tat = 0.25;
    CHECK_THROWS(pretrain_unsupervised(cache, s.hr, s.lr, s.student_cfg, with_ce));
  }

  TEST_CASE("stat with weights (1,0,0) matches the baseline trajectory") {
    auto s = testutil::small_setup();
    TrainConfig c = testutil::small_train(3);
    const TrainResult base = train_supervised(s.student_cfg, s.lr, c);
    ModelParams teacher = init_model(s.teacher_cfg, 2);
    testutil::randomize(teacher, 9);
    const TeacherCache cache = build_teacher_cache(teacher, s.hr, s.student_cfg);
    c.weights.ce = 1.0;
    c.weights.sat = c.weights.tat = 0.0;
    const TrainResult stat = train_student_stat(cache, s.hr, s.lr, s.student_cfg, c);
    CHECK(same_params(base.params, stat.params));
    for (std::size_t e = 0; e < 3; ++e) CHECK(base.metrics.epochs[e].loss_total == stat.metrics.epochs[e].loss_total);
  }

  TEST_CASE("a dead student fails loudly unless attention terms are off") {
    auto s = testutil::small_setup();
    ModelParams teacher = init_model(s.teacher_cfg, 2);
    testutil::randomize(teacher, 9);
    const TeacherCache cache = build_teacher_cache(teacher, s.hr, s.student_cfg);
    ModelParams dead = init_model(s.student_cfg, 3);
    dead.conv_w[0].fill(0.0);
    TrainConfig c = testutil::small_train(1);
    c.warmup_epochs = 0;
    CHECK_THROWS_AS(train_student_stat(cache, s.hr, s.lr, s.student_cfg, c, &dead), DegenerateInputError);
    c.weights.ce = 1.0;
    c.weights.sat = c.weights.tat = 0.0;
    const TrainResult r = train_student_stat(cache, s.hr, s.lr, s.student_cfg, c, &dead);
    CHECK(r.metrics.epochs[0].loss_sat == 0.0);
    CHECK(r.metrics.epochs[0].loss_tat == 0.0);
  }

  TEST_CASE("stat training logs losses and the rolling schedule") {
    auto s = testutil::small_setup();
    ModelParams teacher = init_model(s.teacher_cfg, 2);
    testutil::randomize(teacher, 9);
    const std::uint64_t before = teacher.checksum();
    const TeacherCache cache = build_teacher_cache(teacher, s.hr, s.student_cfg);
    TrainConfig c = testutil::small_train(4);
    c.weight_mode = WeightMode::Rolling;
    c.rolling.period = 2;
    const TrainResult r = train_student_stat(cache, s.hr, s.lr, s.student_cfg, c);
    CHECK(teacher.checksum() == before);
    CHECK(cache.teacher.checksum() == before);
    for (const auto& e : r.metrics.epochs) {
      const auto expect = rolling_weights_at(e.epoch, c.rolling);
      CHECK(e.weights.sat_blocks == expect.sat_blocks);
      CHECK(e.weights.tat_layers == expect.tat_layers);
      CHECK(e.loss_sat > 0.0);
      CHECK(e.loss_tat > 0.0);
      CHECK(e.lr == lr_at(e.epoch, c));
      const double combined = e.weights.ce * e.loss_ce + e.weights.sat * e.loss_sat + e.weights.tat * e.loss_tat;
      CHECK(std::abs(combined - e.loss_total) <= 1e-12);
    }
  }

  TEST_CASE("per-sample loss accounting") {
    auto s = testutil::small_setup();
    ModelParams teacher = init_model(s.teacher_cfg, 2);
    testutil::randomize(teacher, 9);
    ModelParams student = init_model(s.student_cfg, 3);
    testutil::randomize(student, 10);
    const TeacherCache cache = build_teacher_cache(teacher, s.hr, s.student_cfg);
    LossWeights w;
    w.ce = 1.0 / 7.0;
    w.sat = 4.0 / 7.0;
    w.tat = 2.0 / 7.0;
    w.sat_blocks = {0.5, 0.5};
    for (std::size_t i = 0; i < s.lr.size(); ++i) {
      const auto seg = segment_sample(s.lr[i].frames.size(), 2, SampleMode::TestCenter);
      const TeacherSample ts = teacher_sample(cache, i, seg);
      const SampleOutcome o = sample_step(student, s.lr[i], seg, &ts, w, DistanceKind::Squared, true);
      CHECK(std::abs(w.ce * o.ce + w.sat * o.sat + w.tat * o.tat - o.total) <= 1e-12);
      CHECK(o.grads.size() == student.tensors().size());
    }
  }

  TEST_CASE("pretraining from the teacher itself stays at zero loss") {
    auto s = testutil::small_setup();
    ModelParams teacher = init_model(s.teacher_cfg, 2);
    testutil::randomize(teacher, 9);
    const std::uint64_t before = teacher.checksum();
    const TeacherCache cache = build_teacher_cache(teacher, s.hr, s.teacher_cfg);
    TrainConfig c = testutil::small_train(3);
    c.weights.ce = 0.0;
    c.weights.sat = c.weights.tat = 0.5;
    const TrainResult r = pretrain_unsupervised(cache, s.hr, s.hr, s.teacher_cfg, c, &teacher);
    for (const auto& e : r.metrics.epochs) {
      CHECK(e.loss_total < 1e-20);
      CHECK(e.loss_ce == 0.0);
      CHECK_FALSE(e.validation.has_value());
    }
    CHECK(teacher.checksum() == before);
  }

  TEST_CASE("pretraining ignores labels") {
    auto s = testutil::small_setup();
    ModelParams teacher = init_model(s.teacher_cfg, 2);
    testutil::randomize(teacher, 9);
    const TeacherCache cache = build_teacher_cache(teacher, s.hr, s.student_cfg);
    auto hr = s.hr, lr = s.lr;
    for (auto& c : hr) c.label.reset();
    for (auto& c : lr) c.label.reset();
    TrainConfig c = testutil::small_train(2);
    c.weights.ce = 0.0;
    c.weights.sat = c.weights.tat = 0.5;
    const TrainResult r = pretrain_unsupervised(cache, hr, lr, s.student_cfg, c);
    CHECK(r.metrics.epochs.size() == 2);
    CHECK(r.metrics.epochs[0].loss_sat > 0.0);
  }

  TEST_CASE("metrics and timing csv") {
    testutil::TempDir dir("metrics");
    Metrics m;
    EpochMetrics e;
    e.lr = 0.5;
    e.weights.sat_blocks = {0.5, 0.5};
    e.loss_total = 1.25;
    m.epochs.push_back(e);
    e.epoch = 1;
    e.validation = EvalResult{0.5, 1.0, 4};
    m.epochs.push_back(e);
    write_metrics_csv(dir.path / "m.csv", m);
    write_timing_csv(dir.path / "t.csv", m);
    const std::string text = read_text(dir.path / "m.csv");
    std::istringstream lines(text);
    std::string header, row0, row1;
    std::getline(lines, header);
    std::getline(lines, row0);
    std::getline(lines, row1);
    CHECK(header ==
          "epoch,lr,w_ce,w_sat,w_tat,sat_w0,sat_w1,tat_w0,tat_w1,loss_total,loss_ce,loss_sat,loss_tat,val_prec1,val_prec5");
    CHECK(row0.substr(0, 6) == "0,0.5,");
    CHECK(row0.substr(row0.size() - 2) == ",,");
    CHECK(row1.substr(row1.size() - 6) == ",0.5,1");
    CHECK(read_text(dir.path / "t.csv").rfind("epoch,wall_seconds\n", 0) == 0);
  }
}
