// Command-line front end: dataset generation, degradation, training,
// evaluation, visualization, embedding export and the full pipeline.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lrstat/config.hpp"
#include "lrstat/dataset.hpp"
#include "lrstat/kernels.hpp"
#include "lrstat/pipeline.hpp"
#include "lrstat/synthetic.hpp"
#include "lrstat/visualize.hpp"

namespace fs = std::filesystem;
using namespace lrstat;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
};

PipelineConfig effective_config(const Globals& g) {
  PipelineConfig cfg = g.config.empty() ? PipelineConfig{} : load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  cfg.finalize();
  cfg.validate();
  return cfg;
}

fs::path out_or(const Globals& g, const char* fallback) { return g.out.empty() ? fs::path(fallback) : fs::path(g.out); }

std::vector<VideoClip> load_data(const fs::path& root, const std::string& split) {
  const Manifest m = read_manifest(root);
  if (split != "all") return load_split(root, m, split);
  std::vector<VideoClip> v;
  for (const auto& r : m.clips) v.push_back(load_clip(root, r));
  return v;
}

void save_run(const fs::path& dir, const TrainResult& r) {
  fs::create_directories(dir);
  save_checkpoint(dir / "student.ckpt", r.params);
  write_metrics_csv(dir / "metrics.csv", r.metrics);
  write_timing_csv(dir / "timing.csv", r.metrics);
}

std::vector<VideoClip> concat(std::vector<VideoClip> a, const std::vector<VideoClip>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-resolution activity recognition with spatial-temporal attention transfer"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed for every stage (overrides the config)");
  app.add_option("--threads", g.threads, "Worker threads (1 guarantees bit-exact reruns)")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory or file");

  std::string in_dir, hr_dir, lr_dir, data_dir, teacher_ck, init_ck, checkpoint, clip_id, split = "test";
  std::optional<std::size_t> height, width;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset (HR frames + manifest)");

  auto* degrade = app.add_subcommand("degrade", "Degrade a dataset to low resolution");
  degrade->add_option("--in", in_dir, "Source dataset")->required()->check(CLI::ExistingDirectory);
  degrade->add_option("--height", height, "Target height (default from config)");
  degrade->add_option("--width", width, "Target width (default from config)");

  auto* teacher = app.add_subcommand("train-teacher", "Train the teacher on high-resolution clips");
  teacher->add_option("--data", data_dir, "High-resolution dataset")->required()->check(CLI::ExistingDirectory);

  auto* pretrain = app.add_subcommand("pretrain", "Label-free student pretraining from a frozen teacher");
  pretrain->add_option("--teacher", teacher_ck, "Teacher checkpoint")->required()->check(CLI::ExistingFile);
  pretrain->add_option("--hr", hr_dir, "High-resolution dataset")->required()->check(CLI::ExistingDirectory);
  pretrain->add_option("--lr", lr_dir, "Paired low-resolution dataset")->required()->check(CLI::ExistingDirectory);

  auto* student = app.add_subcommand("train-student", "Train a student (CE only without --teacher)");
  student->add_option("--lr", lr_dir, "Low-resolution dataset")->required()->check(CLI::ExistingDirectory);
  student->add_option("--hr", hr_dir, "Paired high-resolution dataset")->check(CLI::ExistingDirectory);
  auto* teacher_opt =
      student->add_option("--teacher", teacher_ck, "Teacher checkpoint")->check(CLI::ExistingFile)->needs("--hr");
  student->get_option("--hr")->needs(teacher_opt);
  student->add_option("--init", init_ck, "Initial student checkpoint (e.g. from pretrain)")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "prec@1 / prec@5 of a checkpoint");
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_dir)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--split", split, "train | test | all");

  auto* vis = app.add_subcommand("visualize", "Attention overlays and temporal bar for one clip");
  vis->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  vis->add_option("--data", data_dir)->required()->check(CLI::ExistingDirectory);
  vis->add_option("--clip", clip_id, "Clip id")->required();

  auto* emb = app.add_subcommand("export-embeddings", "Video-level features as CSV");
  emb->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  emb->add_option("--data", data_dir)->required()->check(CLI::ExistingDirectory);
  emb->add_option("--split", split, "train | test | unlabeled | all");

  auto* pipeline = app.add_subcommand("run-pipeline", "Run every stage, reusing up-to-date outputs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (g.threads) kernels::set_num_threads(*g.threads);
    const PipelineConfig cfg = effective_config(g);

    if (*gen) {
      const Manifest m = gen_synthetic(cfg.data, out_or(g, "data"));
      std::cout << "wrote " << m.clips.size() << " clips to " << out_or(g, "data") << '\n';
    } else if (*degrade) {
      DegradeConfig d = cfg.degrade;
      if (height) d.target_h = *height;
      if (width) d.target_w = *width;
      const Manifest m = degrade_dataset(in_dir, out_or(g, "lr"), d);
      std::cout << "wrote " << m.clips.size() << " clips at " << d.target_h << "x" << d.target_w << '\n';
    } else if (*teacher) {
      const auto clips = fit_clips(load_data(data_dir, "train"), cfg.teacher_model);
      const TrainResult r = train_teacher(cfg.teacher_model, clips, cfg.teacher_train);
      const fs::path dir = out_or(g, "teacher");
      fs::create_directories(dir);
      save_checkpoint(dir / "teacher.ckpt", r.params);
      write_metrics_csv(dir / "metrics.csv", r.metrics);
      write_timing_csv(dir / "timing.csv", r.metrics);
    } else if (*pretrain || (*student && !teacher_ck.empty())) {
      const ModelParams t = load_checkpoint(teacher_ck);
      const std::vector<std::string> splits =
          *pretrain ? std::vector<std::string>{"train", "unlabeled"} : std::vector<std::string>{"train"};
      std::vector<VideoClip> hr, lr;
      for (const auto& s : splits) {
        hr = concat(std::move(hr), load_data(hr_dir, s));
        lr = concat(std::move(lr), load_data(lr_dir, s));
      }
      const auto hr_clips = fit_clips(hr, t.config);
      const auto lr_clips = fit_clips(lr, cfg.student_model);
      const TeacherCache cache = build_teacher_cache(t, hr_clips, cfg.student_model);
      std::optional<ModelParams> init;
      if (!init_ck.empty()) init = load_checkpoint(init_ck);
      const TrainResult r =
          *pretrain ? pretrain_unsupervised(cache, hr_clips, lr_clips, cfg.student_model, cfg.pretrain_train,
                                            init ? &*init : nullptr)
                    : train_student_stat(cache, hr_clips, lr_clips, cfg.student_model, cfg.student_train,
                                         init ? &*init : nullptr);
      save_run(out_or(g, *pretrain ? "pretrain" : "stat"), r);
    } else if (*student) {
      std::optional<ModelParams> init;
      if (!init_ck.empty()) init = load_checkpoint(init_ck);
      const auto clips = fit_clips(load_data(lr_dir, "train"), cfg.student_model);
      save_run(out_or(g, "baseline"), train_supervised(cfg.student_model, clips, cfg.student_train,
                                                       init ? &*init : nullptr));
    } else if (*eval) {
      const ModelParams p = load_checkpoint(checkpoint);
      const EvalResult r = evaluate(p, fit_clips(load_data(data_dir, split), p.config));
      const nlohmann::json j{{"prec1", r.prec1}, {"prec5", r.prec5}, {"count", r.count}};
      std::cout << j.dump() << '\n';
      if (!g.out.empty()) std::ofstream(g.out) << j.dump(1) << '\n';
    } else if (*vis) {
      const ModelParams p = load_checkpoint(checkpoint);
      const Manifest m = read_manifest(data_dir);
      std::optional<VideoClip> clip;
      for (const auto& r : m.clips) {
        if (r.id == clip_id) clip = load_clip(data_dir, r);
      }
      if (!clip) throw std::invalid_argument("no clip '" + clip_id + "' in " + data_dir);
      const PreparedClip fitted = fit_clips(std::span<const VideoClip>(&*clip, 1), p.config).front();
      VideoClip shown{clip->id, clip->label, {}};
      for (const auto& f : fitted.frames) shown.frames.push_back(chw_to_frame(f));
      for (const auto& path : visualize_attention(p, shown, out_or(g, "visualize"))) std::cout << path.string() << '\n';
    } else if (*emb) {
      const ModelParams p = load_checkpoint(checkpoint);
      std::vector<VideoClip> shown;
      for (const auto& c : fit_clips(load_data(data_dir, split), p.config)) {
        VideoClip v{c.id, c.label, {}};
        for (const auto& f : c.frames) v.frames.push_back(chw_to_frame(f));
        shown.push_back(std::move(v));
      }
      export_embeddings(p, shown, out_or(g, "embeddings.csv"));
    } else if (*pipeline) {
      const Report r = run_pipeline(cfg, out_or(g, "run"), [](const std::string& line) { std::cerr << line << '\n'; });
      std::cout << r.to_json().dump(1) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
