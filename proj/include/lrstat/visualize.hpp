#pragma once

// Attention overlays, the temporal attention bar, and feature export.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lrstat/backbone.hpp"
#include "lrstat/video.hpp"

namespace lrstat {

/// Bilinear resize of an [h x w] map with corner alignment (corner samples are
/// reproduced exactly). Extents of 1 replicate.
Tensor bilinear_resize(const Tensor& map, std::size_t out_h, std::size_t out_w);

/// Map scaled by its own maximum to [0, 1], resized to the frame, multiplied
/// into every channel. An all-zero map yields a black frame.
Frame attention_overlay(const Frame& frame, const Tensor& map);

/// One cell per segment; weight 0 is white, weight 1 is pure red
/// (r, g, b) = (1, 1 - w, 1 - w). Returns [cell_h x K*cell_w x 3].
Frame temporal_bar(std::span<const double> weights, std::size_t cell_w = 16, std::size_t cell_h = 8);

/// Writes seg<k>_frame.pgm, seg<k>_block<b>.pgm for each test-center segment
/// and temporal_bar.ppm. Returns the written paths.
std::vector<std::filesystem::path> visualize_attention(const ModelParams& params, const VideoClip& clip,
                                                       const std::filesystem::path& out_dir);

/// CSV with header id,label,f0..f{D-1}; unlabeled clips leave label empty.
void export_embeddings(const ModelParams& params, std::span<const VideoClip> clips,
                       const std::filesystem::path& path);

}  // namespace lrstat
