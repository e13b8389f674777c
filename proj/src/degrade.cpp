#include "lrstat/degrade.hpp"

#include <algorithm>
#include <exception>
#include <stdexcept>
#include <string>

#include "lrstat/kernels.hpp"

namespace lrstat {

void DegradeConfig::validate() const {
  if (target_h < 1 || target_w < 1) throw std::invalid_argument("degrade: target extents must be >= 1");
  if (!(blur_sigma >= 0.0) || !(noise_sigma >= 0.0)) throw std::invalid_argument("degrade: sigmas must be >= 0");
  if (aspect_h < 1 || aspect_w < 1) throw std::invalid_argument("degrade: aspect ratio terms must be >= 1");
}

namespace {

void clamp_unit(Frame& f) {
  for (auto& v : f.data()) v = std::clamp(v, 0.0, 1.0);
}

void require_frame(const Frame& f, const char* op) {
  if (f.rank() != 3) throw ShapeError(std::string(op) + ": expected [H x W x C], got " + shape_str(f.shape()));
}

}  // namespace

Frame center_crop(const Frame& f, std::size_t aspect_h, std::size_t aspect_w) {
  require_frame(f, "center_crop");
  const std::size_t h = f.dim(0), w = f.dim(1), c = f.dim(2);
  std::size_t ch = w * aspect_h / aspect_w;
  std::size_t cw = w;
  if (ch > h) {
    ch = h;
    cw = h * aspect_w / aspect_h;
  }
  if (ch == 0 || cw == 0) throw ShapeError("center_crop: frame " + shape_str(f.shape()) + " too small for ratio");
  if (ch == h && cw == w) return f;
  const std::size_t y0 = (h - ch) / 2, x0 = (w - cw) / 2;
  Frame out(Shape{ch, cw, c});
  for (std::size_t y = 0; y < ch; ++y) {
    const auto src = f.data().subspan(((y0 + y) * w + x0) * c, cw * c);
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(y * cw * c));
  }
  return out;
}

Frame lens_blur(const Frame& f, double sigma) {
  require_frame(f, "lens_blur");
  if (!(sigma >= 0.0)) throw std::invalid_argument("lens_blur: sigma must be >= 0");
  if (sigma == 0.0) return f;
  Frame out(f.shape());
  kernels::gaussian_blur(f.data(), f.dim(0), f.dim(1), f.dim(2), sigma, out.data());
  clamp_unit(out);
  return out;
}

Frame average_downsample(const Frame& f, std::size_t target_h, std::size_t target_w) {
  require_frame(f, "average_downsample");
  if (target_h == 0 || target_w == 0 || target_h > f.dim(0) || target_w > f.dim(1)) {
    throw ShapeError("average_downsample: cannot resample " + shape_str(f.shape()) + " to " +
                     std::to_string(target_h) + "x" + std::to_string(target_w) + " (upsampling is not supported)");
  }
  Frame out(Shape{target_h, target_w, f.dim(2)});
  kernels::area_resample(f.data(), f.dim(0), f.dim(1), f.dim(2), out.data(), target_h, target_w);
  clamp_unit(out);
  return out;
}

Frame gaussian_noise(const Frame& f, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("gaussian_noise: sigma must be >= 0");
  if (sigma == 0.0) return f;
  Frame out = f;
  for (auto& v : out.data()) v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
  return out;
}

std::uint64_t frame_noise_seed(std::uint64_t seed, const std::string& clip_id, std::size_t frame_index) {
  return Rng::derive(seed, {fnv1a(clip_id), frame_index});
}

Frame degrade_frame(const Frame& f, const DegradeConfig& cfg, Rng& rng) {
  Frame x = center_crop(f, cfg.aspect_h, cfg.aspect_w);
  x = lens_blur(x, cfg.blur_sigma);
  x = average_downsample(x, cfg.target_h, cfg.target_w);
  return gaussian_noise(x, cfg.noise_sigma, rng);
}

VideoClip degrade_clip(const VideoClip& clip, const DegradeConfig& cfg) {
  cfg.validate();
  clip.validate();
  VideoClip out{clip.id, clip.label, std::vector<Frame>(clip.frames.size())};
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(clip.frames.size()); ++i) {
    try {
      Rng rng(frame_noise_seed(cfg.seed, clip.id, static_cast<std::size_t>(i)));
      out.frames[static_cast<std::size_t>(i)] = degrade_frame(clip.frames[static_cast<std::size_t>(i)], cfg, rng);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace lrstat
