#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "lrstat/tensor.hpp"

namespace lrstat {

/// A frame is an [H x W x C] tensor with values in [0, 1].
using Frame = Tensor;

struct VideoClip {
  std::string id;
  std::optional<std::size_t> label;
  std::vector<Frame> frames;

  std::size_t height() const { return frames.at(0).dim(0); }
  std::size_t width() const { return frames.at(0).dim(1); }
  std::size_t channels() const { return frames.at(0).dim(2); }
  /// At least one frame, every frame [H x W x C] with a shared shape.
  void validate() const;
};

/// [H x W x C] -> [C x H x W]
Tensor frame_to_chw(const Frame& f);
/// [C x H x W] -> [H x W x C]
Frame chw_to_frame(const Tensor& t);

}  // namespace lrstat
