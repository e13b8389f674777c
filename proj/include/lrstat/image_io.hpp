#pragma once

#include <filesystem>

#include "lrstat/video.hpp"

namespace lrstat {

/// Reads a binary Netpbm image (P5 grayscale or P6 color, 8 or 16 bit) as a
/// frame scaled to [0, 1].
Frame read_pnm(const std::filesystem::path& path);

/// Writes P5 (1 channel) or P6 (3 channels). Values are clamped to [0, 1] and
/// rounded to the nearest level; 16-bit samples are big-endian.
void write_pnm(const std::filesystem::path& path, const Frame& frame, int bit_depth = 8);

}  // namespace lrstat
