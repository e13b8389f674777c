#pragma once

// On-disk datasets: a manifest.json plus one directory of Netpbm frames per clip.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lrstat/degrade.hpp"
#include "lrstat/video.hpp"

namespace lrstat {

inline constexpr const char* kManifestFormat = "lrstat-manifest";
inline constexpr int kManifestVersion = 1;

struct ClipRecord {
  std::string id;
  std::string path;  // relative to the dataset root
  std::optional<std::size_t> label;
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::string split = "train";  // train | test | unlabeled
};

struct Manifest {
  std::string name;
  std::vector<std::string> classes;
  int bit_depth = 8;
  std::vector<ClipRecord> clips;

  /// Labels below the class count, unique ids; with a root, every frame file exists.
  void validate(const std::optional<std::filesystem::path>& root = std::nullopt) const;
  std::vector<ClipRecord> split(const std::string& name) const;
};

std::filesystem::path frame_path(const std::filesystem::path& root, const ClipRecord& rec, std::size_t frame);

Manifest read_manifest(const std::filesystem::path& root);
void write_manifest(const std::filesystem::path& root, const Manifest& m);

VideoClip load_clip(const std::filesystem::path& root, const ClipRecord& rec);
std::vector<VideoClip> load_split(const std::filesystem::path& root, const Manifest& m, const std::string& split);

/// Writes the frames of one clip and returns its record.
ClipRecord save_clip(const std::filesystem::path& root, const VideoClip& clip, const std::string& split, int bit_depth);

/// Degrades every clip of a dataset into a new dataset (16-bit frames).
Manifest degrade_dataset(const std::filesystem::path& in_root, const std::filesystem::path& out_root,
                         const DegradeConfig& cfg);

}  // namespace lrstat
