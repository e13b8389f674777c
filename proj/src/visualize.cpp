#include "lrstat/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "lrstat/attention.hpp"
#include "lrstat/image_io.hpp"
#include "lrstat/training.hpp"

namespace lrstat {

namespace fs = std::filesystem;

namespace {

// Source coordinate and interpolation weight for output index i.
void corner_coord(std::size_t i, std::size_t in, std::size_t out, std::size_t& lo, std::size_t& hi, double& t) {
  if (in == 1 || out == 1) {
    lo = hi = 0;
    t = 0.0;
    return;
  }
  const double pos = static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
  lo = std::min(static_cast<std::size_t>(std::floor(pos)), in - 1);
  hi = std::min(lo + 1, in - 1);
  t = pos - static_cast<double>(lo);
}

void check_model_input(const ModelParams& params, const VideoClip& clip) {
  clip.validate();
  const auto& c = params.config;
  if (clip.height() != c.in_h || clip.width() != c.in_w || clip.channels() != c.in_channels) {
    throw ShapeError("clip '" + clip.id + "' is " + std::to_string(clip.height()) + "x" +
                     std::to_string(clip.width()) + "x" + std::to_string(clip.channels()) + ", checkpoint expects " +
                     std::to_string(c.in_h) + "x" + std::to_string(c.in_w) + "x" + std::to_string(c.in_channels));
  }
}

}  // namespace

Tensor bilinear_resize(const Tensor& map, std::size_t out_h, std::size_t out_w) {
  if (map.rank() != 2) throw ShapeError("bilinear_resize: expected [h x w], got " + shape_str(map.shape()));
  const std::size_t h = map.dim(0), w = map.dim(1);
  Tensor out(Shape{out_h, out_w}, 0.0);
  for (std::size_t y = 0; y < out_h; ++y) {
    std::size_t y0, y1;
    double ty;
    corner_coord(y, h, out_h, y0, y1, ty);
    for (std::size_t x = 0; x < out_w; ++x) {
      std::size_t x0, x1;
      double tx;
      corner_coord(x, w, out_w, x0, x1, tx);
      const double top = map.at(y0, x0) + tx * (map.at(y0, x1) - map.at(y0, x0));
      const double bottom = map.at(y1, x0) + tx * (map.at(y1, x1) - map.at(y1, x0));
      out.at(y, x) = top + ty * (bottom - top);
    }
  }
  return out;
}

Frame attention_overlay(const Frame& frame, const Tensor& map) {
  if (frame.rank() != 3) throw ShapeError("attention_overlay: frame must be [H x W x C]");
  double peak = 0.0;
  for (double v : map.data()) {
    if (v < 0.0) throw std::invalid_argument("attention_overlay: attention maps are non-negative");
    peak = std::max(peak, v);
  }
  const Tensor up = bilinear_resize(map, frame.dim(0), frame.dim(1));
  Frame out = frame;
  for (std::size_t y = 0; y < frame.dim(0); ++y) {
    for (std::size_t x = 0; x < frame.dim(1); ++x) {
      const double m = peak > 0.0 ? up.at(y, x) / peak : 0.0;
      for (std::size_t c = 0; c < frame.dim(2); ++c) out.at(y, x, c) = frame.at(y, x, c) * m;
    }
  }
  return out;
}

Frame temporal_bar(std::span<const double> weights, std::size_t cell_w, std::size_t cell_h) {
  if (weights.empty() || cell_w == 0 || cell_h == 0) throw std::invalid_argument("temporal_bar: empty bar");
  Frame bar(Shape{cell_h, weights.size() * cell_w, 3}, 0.0);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double w = std::clamp(weights[k], 0.0, 1.0);
    for (std::size_t y = 0; y < cell_h; ++y) {
      for (std::size_t x = k * cell_w; x < (k + 1) * cell_w; ++x) {
        bar.at(y, x, 0) = 1.0;
        bar.at(y, x, 1) = 1.0 - w;
        bar.at(y, x, 2) = 1.0 - w;
      }
    }
  }
  return bar;
}

std::vector<fs::path> visualize_attention(const ModelParams& params, const VideoClip& clip, const fs::path& out_dir) {
  check_model_input(params, clip);
  fs::create_directories(out_dir);
  const ModelVars vars = make_vars(params, false);
  const auto s = segment_sample(clip, params.config.segments, SampleMode::TestCenter);
  std::vector<Tensor> frames;
  for (auto i : s.frame_indices) frames.push_back(frame_to_chw(clip.frames[i]));
  const ModelOutput out = model_forward(frames, vars, params.config);
  const char* ext = clip.channels() == 3 ? "ppm" : "pgm";

  std::vector<fs::path> written;
  char name[64];
  for (std::size_t k = 0; k < s.frame_indices.size(); ++k) {
    const Frame& frame = clip.frames[s.frame_indices[k]];
    std::snprintf(name, sizeof(name), "seg%zu_frame.%s", k, ext);
    write_pnm(out_dir / name, frame, 8);
    written.push_back(out_dir / name);
    const auto& blocks = out.backbone.segments[k].blocks;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const Tensor map = spatial_attention(blocks[b]).value();
      std::snprintf(name, sizeof(name), "seg%zu_block%zu.%s", k, b, ext);
      write_pnm(out_dir / name, attention_overlay(frame, map), 8);
      written.push_back(out_dir / name);
    }
  }
  write_pnm(out_dir / "temporal_bar.ppm", temporal_bar(out.tam.attention.weights.value().data()), 8);
  written.push_back(out_dir / "temporal_bar.ppm");
  return written;
}

void export_embeddings(const ModelParams& params, std::span<const VideoClip> clips, const fs::path& path) {
  std::vector<std::vector<double>> rows(clips.size());
  for (const auto& c : clips) check_model_input(params, c);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const Tensor f = video_embedding(params, prepare_clip(clips[i]));
    rows[i].assign(f.data().begin(), f.data().end());
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "id,label";
  for (std::size_t d = 0; d < params.config.feature_dim(); ++d) out << ",f" << d;
  out << '\n';
  char buf[40];
  for (std::size_t i = 0; i < clips.size(); ++i) {
    out << clips[i].id << ',';
    if (clips[i].label) out << *clips[i].label;
    for (double v : rows[i]) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace lrstat
