#include "lrstat/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "lrstat/rng.hpp"

namespace lrstat {

namespace {

const char* const kClassNames[] = {"grow",  "shrink", "brighten", "darken",
                                   "widen", "narrow", "appear",   "vanish"};

constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kTestStream = 2;
constexpr std::uint64_t kUnlabeledStream = 3;
constexpr int kSupersample = 4;

struct Blob {
  double cx, cy, rx, ry, level;
  bool box;
};

// Coverage-weighted rendering with kSupersample^2 samples per pixel.
void render(Frame& f, double background, const std::vector<Blob>& blobs) {
  const std::size_t h = f.dim(0), w = f.dim(1);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double py = static_cast<double>(y) + (sy + 0.5) / kSupersample;
          const double px = static_cast<double>(x) + (sx + 0.5) / kSupersample;
          double v = background;
          for (const auto& b : blobs) {
            const double dx = (px - b.cx) / b.rx, dy = (py - b.cy) / b.ry;
            const bool inside = b.box ? (std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0) : (dx * dx + dy * dy <= 1.0);
            if (inside) v = b.level;
          }
          acc += v;
        }
      }
      f.at(y, x, 0) = acc / (kSupersample * kSupersample);
    }
  }
}

double quantize8(double v) { return std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5) / 255.0; }

}  // namespace

void SyntheticSpec::validate() const {
  if (num_classes == 0 || num_classes > 8) throw std::invalid_argument("synthetic: num_classes must be in [1, 8]");
  if (frames < 2) throw std::invalid_argument("synthetic: at least 2 frames per clip");
  if (height < 32 || width < 32) throw std::invalid_argument("synthetic: resolution must be at least 32x32");
  if (clips_per_class == 0) throw std::invalid_argument("synthetic: clips_per_class must be positive");
  if (position_jitter < 0.0 || pixel_noise < 0.0) throw std::invalid_argument("synthetic: negative jitter or noise");
}

std::vector<std::string> synthetic_class_names(std::size_t num_classes) {
  if (num_classes > 8) throw std::invalid_argument("synthetic: at most 8 classes");
  return {kClassNames, kClassNames + num_classes};
}

VideoClip synthetic_clip(const SyntheticSpec& spec, std::size_t label, std::uint64_t stream, std::size_t index) {
  if (label >= spec.num_classes) throw std::out_of_range("synthetic: label out of range");
  // Both members of a pair share the geometry stream, and noise is keyed by
  // pattern time, so clip (2p, i) is exactly clip (2p + 1, i) played backwards.
  const std::size_t pattern = label / 2;
  const bool reversed = label % 2 == 1;
  Rng rng(Rng::derive(spec.seed, {stream, pattern, index}));
  // Geometry is expressed relative to the shorter side so the pattern stays
  // inside a centered 3:4 window of a square frame.
  const double unit = static_cast<double>(std::min(spec.height, spec.width)) / 64.0;
  const double cx0 = static_cast<double>(spec.width) / 2.0 + rng.uniform(-1.0, 1.0) * spec.position_jitter * unit;
  const double cy0 = static_cast<double>(spec.height) / 2.0 + rng.uniform(-1.0, 1.0) * spec.position_jitter * unit;
  const double background = rng.uniform(0.0, 0.15);
  const double level = rng.uniform(0.65, 0.95);
  const double r_small = rng.uniform(3.0, 5.0) * unit;
  const double r_large = rng.uniform(12.0, 15.0) * unit;
  const double r_mid = rng.uniform(7.0, 10.0) * unit;
  const double dim = rng.uniform(0.2, 0.3);
  const double bar_h = rng.uniform(3.0, 5.0) * unit;
  const double bar_short = rng.uniform(4.0, 7.0) * unit;
  const double bar_long = rng.uniform(18.0, 22.0) * unit;
  const double blob_r = rng.uniform(3.0, 4.0) * unit;
  const double spread = 9.0 * unit;
  std::vector<std::pair<double, double>> slots;
  for (int i = 0; i < 4; ++i) {
    slots.emplace_back(cx0 + (i % 2 == 0 ? -spread : spread) + rng.uniform(-1.5, 1.5) * unit,
                       cy0 + (i < 2 ? -spread : spread) + rng.uniform(-1.5, 1.5) * unit);
  }
  for (std::size_t i = 4; i > 1; --i) std::swap(slots[i - 1], slots[rng.below(i)]);

  VideoClip clip;
  char id[64];
  const char* prefix = stream == kTrainStream ? "train" : stream == kTestStream ? "test" : "unl";
  if (stream == kUnlabeledStream) {
    std::snprintf(id, sizeof(id), "%s_%04zu", prefix, index);
  } else {
    std::snprintf(id, sizeof(id), "%s_%s_%03zu", prefix, kClassNames[label], index);
  }
  clip.id = id;
  clip.label = label;
  for (std::size_t fi = 0; fi < spec.frames; ++fi) {
    const std::size_t step = reversed ? spec.frames - 1 - fi : fi;
    const double t = static_cast<double>(step) / static_cast<double>(spec.frames - 1);
    std::vector<Blob> blobs;
    switch (pattern) {
      case 0: {
        const double r = r_small + (r_large - r_small) * t;
        blobs.push_back({cx0, cy0, r, r, level, false});
        break;
      }
      case 1:
        blobs.push_back({cx0, cy0, r_mid, r_mid, dim + (level - dim) * t, false});
        break;
      case 2:
        blobs.push_back({cx0, cy0, bar_short + (bar_long - bar_short) * t, bar_h, level, true});
        break;
      default: {
        const auto count = std::min<std::size_t>(4, 1 + static_cast<std::size_t>(std::floor(t * 4.0)));
        for (std::size_t b = 0; b < count; ++b) blobs.push_back({slots[b].first, slots[b].second, blob_r, blob_r, level, false});
        break;
      }
    }
    Frame f(Shape{spec.height, spec.width, 1}, 0.0);
    render(f, background, blobs);
    Rng noise(Rng::derive(spec.seed, {stream, pattern, index, 0x4e, step}));
    for (auto& v : f.data()) v = quantize8(v + spec.pixel_noise * noise.normal());
    clip.frames.push_back(std::move(f));
  }
  return clip;
}

SyntheticSplits synthetic_dataset(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticSplits s;
  for (std::size_t i = 0; i < spec.clips_per_class; ++i) {
    for (std::size_t c = 0; c < spec.num_classes; ++c) s.train.push_back(synthetic_clip(spec, c, kTrainStream, i));
  }
  for (std::size_t i = 0; i < spec.test_clips_per_class; ++i) {
    for (std::size_t c = 0; c < spec.num_classes; ++c) s.test.push_back(synthetic_clip(spec, c, kTestStream, i));
  }
  for (std::size_t i = 0; i < spec.unlabeled_clips; ++i) {
    auto clip = synthetic_clip(spec, i % spec.num_classes, kUnlabeledStream, i);
    clip.label.reset();
    s.unlabeled.push_back(std::move(clip));
  }
  return s;
}

Manifest gen_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
  const SyntheticSplits s = synthetic_dataset(spec);
  Manifest m{"synthetic", synthetic_class_names(spec.num_classes), 8, {}};
  for (const auto& c : s.train) m.clips.push_back(save_clip(out_dir, c, "train", 8));
  for (const auto& c : s.test) m.clips.push_back(save_clip(out_dir, c, "test", 8));
  for (const auto& c : s.unlabeled) m.clips.push_back(save_clip(out_dir, c, "unlabeled", 8));
  write_manifest(out_dir, m);
  return m;
}

}  // namespace lrstat
