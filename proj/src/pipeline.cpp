#include "lrstat/pipeline.hpp"

#include <cstdio>
#include <fstream>

#include "lrstat/dataset.hpp"
#include "lrstat/synthetic.hpp"
#include "lrstat/visualize.hpp"

namespace lrstat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string hash_of(const json& j) { return hex(fnv1a(j.dump())); }

json eval_json(const EvalResult& r) { return {{"prec1", r.prec1}, {"prec5", r.prec5}, {"count", r.count}}; }

EvalResult eval_from_json(const json& j) {
  return {j.at("prec1").get<double>(), j.at("prec5").get<double>(), j.at("count").get<std::size_t>()};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return json::parse(in);
}

class Runner {
 public:
  Runner(fs::path root, StageLog log, Report& report) : root_(std::move(root)), log_(std::move(log)), report_(report) {}

  // Runs `body` unless the stage directory records the same hash.
  void stage(const std::string& name, const std::string& hash, const std::function<void(const fs::path&)>& body) {
    const fs::path dir = root_ / name;
    const fs::path marker = dir / "stage.json";
    try {
      if (fs::exists(marker)) {
        const json m = read_json(marker);
        if (m.value("hash", "") == hash) {
          report_.skipped.push_back(name);
          if (log_) log_("skip " + name + " (hash " + hash + ")");
          return;
        }
      }
      if (log_) log_("run " + name);
      fs::remove_all(dir);
      fs::create_directories(dir);
      body(dir);
      write_json(marker, {{"stage", name}, {"hash", hash}});
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
  }

  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
  StageLog log_;
  Report& report_;
};

void save_training(const fs::path& dir, const std::string& name, const TrainResult& r) {
  save_checkpoint(dir / (name + ".ckpt"), r.params);
  write_metrics_csv(dir / "metrics.csv", r.metrics);
  write_timing_csv(dir / "timing.csv", r.metrics);
}

std::vector<VideoClip> concat(std::vector<VideoClip> a, const std::vector<VideoClip>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

json Report::to_json() const {
  return {{"teacher", eval_json(teacher)},
          {"student_baseline", eval_json(baseline)},
          {"student_stat", eval_json(stat)},
          {"resolution", std::to_string(lr_height) + "x" + std::to_string(lr_width)}};
}

std::vector<PreparedClip> fit_clips(std::span<const VideoClip> clips, const BackboneConfig& model) {
  std::vector<PreparedClip> out;
  out.reserve(clips.size());
  for (const auto& c : clips) {
    c.validate();
    if (c.channels() != model.in_channels) {
      throw ShapeError("clip '" + c.id + "' has " + std::to_string(c.channels()) + " channels, model expects " +
                       std::to_string(model.in_channels));
    }
    if (c.height() == model.in_h && c.width() == model.in_w) {
      out.push_back(prepare_clip(c));
      continue;
    }
    const Frame probe = center_crop(c.frames.front(), 3, 4);
    if (probe.dim(0) != model.in_h || probe.dim(1) != model.in_w) {
      throw ShapeError("clip '" + c.id + "' (" + std::to_string(c.height()) + "x" + std::to_string(c.width()) +
                       ") does not fit a " + std::to_string(model.in_h) + "x" + std::to_string(model.in_w) +
                       " model input");
    }
    out.push_back(prepare_clip(c, InputPrep{true, 3, 4}));
  }
  return out;
}

Report run_pipeline(const PipelineConfig& cfg_in, const fs::path& out_dir, const StageLog& log) {
  PipelineConfig cfg = cfg_in;
  cfg.finalize();
  cfg.validate();
  Report report;
  report.lr_height = cfg.degrade.target_h;
  report.lr_width = cfg.degrade.target_w;
  fs::create_directories(out_dir);
  write_json(out_dir / "config.json", to_json(cfg));
  Runner run(out_dir, log, report);

  const fs::path data_dir = out_dir / "data", lr_dir = out_dir / "lr";
  const std::string h_data = hash_of({{"data", to_json(cfg.data)}});
  run.stage("data", h_data, [&](const fs::path& dir) { gen_synthetic(cfg.data, dir); });

  const std::string h_lr = hash_of({{"up", h_data}, {"degrade", to_json(cfg.degrade)}});
  run.stage("lr", h_lr, [&](const fs::path& dir) { degrade_dataset(data_dir, dir, cfg.degrade); });

  // Loaded lazily: a fully cached rerun touches no frames.
  std::optional<Manifest> hr_m, lr_m;
  auto hr = [&](const std::string& split) {
    if (!hr_m) hr_m = read_manifest(data_dir);
    return load_split(data_dir, *hr_m, split);
  };
  auto lr = [&](const std::string& split) {
    if (!lr_m) lr_m = read_manifest(lr_dir);
    return load_split(lr_dir, *lr_m, split);
  };

  const std::string h_teacher =
      hash_of({{"up", h_data}, {"model", to_json(cfg.teacher_model)}, {"train", to_json(cfg.teacher_train)}});
  run.stage("teacher", h_teacher, [&](const fs::path& dir) {
    const auto clips = fit_clips(hr("train"), cfg.teacher_model);
    save_training(dir, "teacher", train_teacher(cfg.teacher_model, clips, cfg.teacher_train));
  });
  auto teacher_params = [&] { return load_checkpoint(out_dir / "teacher" / "teacher.ckpt"); };

  std::string h_init;
  if (cfg.pretrain) {
    h_init = hash_of({{"up", h_teacher},
                      {"lr", h_lr},
                      {"model", to_json(cfg.student_model)},
                      {"train", to_json(cfg.pretrain_train)}});
    run.stage("pretrain", h_init, [&](const fs::path& dir) {
      const auto hr_clips = fit_clips(concat(hr("train"), hr("unlabeled")), cfg.teacher_model);
      const auto lr_clips = fit_clips(concat(lr("train"), lr("unlabeled")), cfg.student_model);
      const TeacherCache cache = build_teacher_cache(teacher_params(), hr_clips, cfg.student_model);
      save_training(dir, "student",
                    pretrain_unsupervised(cache, hr_clips, lr_clips, cfg.student_model, cfg.pretrain_train));
    });
  }

  TrainConfig baseline_train = cfg.student_train;
  baseline_train.weight_mode = WeightMode::Fixed;
  baseline_train.weights.ce = 1.0;
  baseline_train.weights.sat = 0.0;
  baseline_train.weights.tat = 0.0;
  const std::string h_baseline =
      hash_of({{"up", h_lr}, {"model", to_json(cfg.student_model)}, {"train", to_json(baseline_train)}});
  run.stage("baseline", h_baseline, [&](const fs::path& dir) {
    const auto clips = fit_clips(lr("train"), cfg.student_model);
    save_training(dir, "student", train_supervised(cfg.student_model, clips, baseline_train));
  });

  const std::string h_stat = hash_of({{"up", h_teacher},
                                      {"lr", h_lr},
                                      {"init", h_init},
                                      {"model", to_json(cfg.student_model)},
                                      {"train", to_json(cfg.student_train)}});
  run.stage("stat", h_stat, [&](const fs::path& dir) {
    const auto hr_clips = fit_clips(hr("train"), cfg.teacher_model);
    const auto lr_clips = fit_clips(lr("train"), cfg.student_model);
    const TeacherCache cache = build_teacher_cache(teacher_params(), hr_clips, cfg.student_model);
    std::optional<ModelParams> init;
    if (cfg.pretrain) init = load_checkpoint(out_dir / "pretrain" / "student.ckpt");
    save_training(dir, "student",
                  train_student_stat(cache, hr_clips, lr_clips, cfg.student_model, cfg.student_train,
                                     init ? &*init : nullptr));
  });

  const std::string h_eval = hash_of({{"teacher", h_teacher}, {"baseline", h_baseline}, {"stat", h_stat}});
  run.stage("eval", h_eval, [&](const fs::path& dir) {
    Report r = report;
    const auto hr_test = fit_clips(hr("test"), cfg.teacher_model);
    const auto lr_test = fit_clips(lr("test"), cfg.student_model);
    r.teacher = evaluate(teacher_params(), hr_test);
    r.baseline = evaluate(load_checkpoint(out_dir / "baseline" / "student.ckpt"), lr_test);
    r.stat = evaluate(load_checkpoint(out_dir / "stat" / "student.ckpt"), lr_test);
    write_json(dir / "report.json", r.to_json());
  });
  const json rj = read_json(out_dir / "eval" / "report.json");
  report.teacher = eval_from_json(rj.at("teacher"));
  report.baseline = eval_from_json(rj.at("student_baseline"));
  report.stat = eval_from_json(rj.at("student_stat"));

  const std::string h_vis = hash_of({{"up", h_eval}, {"clips", cfg.visualize_clips}});
  run.stage("visualize", h_vis, [&](const fs::path& dir) {
    const auto hr_test = hr("test");
    const auto lr_test = lr("test");
    const ModelParams teacher = teacher_params();
    const ModelParams stat = load_checkpoint(out_dir / "stat" / "student.ckpt");
    const std::size_t n = std::min(cfg.visualize_clips, lr_test.size());
    for (std::size_t i = 0; i < n; ++i) {
      VideoClip hr_clip = hr_test[i];
      for (auto& f : hr_clip.frames) f = center_crop(f, 3, 4);
      visualize_attention(teacher, hr_clip, dir / lr_test[i].id / "teacher");
      visualize_attention(stat, lr_test[i], dir / lr_test[i].id / "student");
    }
    export_embeddings(stat, lr_test, dir / "embeddings_stat.csv");
    export_embeddings(load_checkpoint(out_dir / "baseline" / "student.ckpt"), lr_test,
                      dir / "embeddings_baseline.csv");
  });

  write_json(out_dir / "report.json", report.to_json());
  return report;
}

}  // namespace lrstat
