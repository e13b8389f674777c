#include "lrstat/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "lrstat/image_io.hpp"

namespace lrstat {

namespace fs = std::filesystem;
using nlohmann::json;

void Manifest::validate(const std::optional<fs::path>& root) const {
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("manifest: bit_depth must be 8 or 16");
  std::set<std::string> ids;
  for (const auto& c : clips) {
    if (c.id.empty()) throw std::invalid_argument("manifest: empty clip id");
    if (!ids.insert(c.id).second) throw std::invalid_argument("manifest: duplicate clip id '" + c.id + "'");
    if (c.label && *c.label >= classes.size()) {
      throw std::invalid_argument("manifest: clip '" + c.id + "' label " + std::to_string(*c.label) +
                                  " >= class count " + std::to_string(classes.size()));
    }
    if (c.frames == 0 || c.height == 0 || c.width == 0 || (c.channels != 1 && c.channels != 3)) {
      throw std::invalid_argument("manifest: clip '" + c.id + "' has an invalid frame geometry");
    }
    if (root) {
      for (std::size_t f = 0; f < c.frames; ++f) {
        if (!fs::exists(frame_path(*root, c, f))) {
          throw std::runtime_error("manifest: missing frame " + frame_path(*root, c, f).string());
        }
      }
    }
  }
}

std::vector<ClipRecord> Manifest::split(const std::string& name) const {
  std::vector<ClipRecord> out;
  for (const auto& c : clips) {
    if (c.split == name) out.push_back(c);
  }
  return out;
}

fs::path frame_path(const fs::path& root, const ClipRecord& rec, std::size_t frame) {
  char name[32];
  std::snprintf(name, sizeof(name), "%04zu.%s", frame, rec.channels == 3 ? "ppm" : "pgm");
  return root / rec.path / name;
}

Manifest read_manifest(const fs::path& root) {
  std::ifstream in(root / "manifest.json");
  if (!in) throw std::runtime_error("cannot read " + (root / "manifest.json").string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed manifest " + (root / "manifest.json").string() + ": " + e.what());
  }
  if (j.value("format", "") != kManifestFormat || j.value("version", 0) != kManifestVersion) {
    throw std::runtime_error("unsupported manifest format in " + root.string());
  }
  Manifest m;
  m.name = j.at("name").get<std::string>();
  m.classes = j.at("classes").get<std::vector<std::string>>();
  m.bit_depth = j.at("bit_depth").get<int>();
  for (const auto& c : j.at("clips")) {
    ClipRecord r;
    r.id = c.at("id").get<std::string>();
    r.path = c.at("path").get<std::string>();
    if (!c.at("label").is_null()) r.label = c.at("label").get<std::size_t>();
    r.frames = c.at("frames").get<std::size_t>();
    r.height = c.at("height").get<std::size_t>();
    r.width = c.at("width").get<std::size_t>();
    r.channels = c.at("channels").get<std::size_t>();
    r.split = c.at("split").get<std::string>();
    m.clips.push_back(std::move(r));
  }
  m.validate();
  return m;
}

void write_manifest(const fs::path& root, const Manifest& m) {
  m.validate();
  json j;
  j["format"] = kManifestFormat;
  j["version"] = kManifestVersion;
  j["name"] = m.name;
  j["classes"] = m.classes;
  j["bit_depth"] = m.bit_depth;
  j["clips"] = json::array();
  for (const auto& c : m.clips) {
    j["clips"].push_back({{"id", c.id},
                          {"path", c.path},
                          {"label", c.label ? json(*c.label) : json(nullptr)},
                          {"frames", c.frames},
                          {"height", c.height},
                          {"width", c.width},
                          {"channels", c.channels},
                          {"split", c.split}});
  }
  fs::create_directories(root);
  std::ofstream out(root / "manifest.json");
  if (!out) throw std::runtime_error("cannot write " + (root / "manifest.json").string());
  out << j.dump(1) << '\n';
}

VideoClip load_clip(const fs::path& root, const ClipRecord& rec) {
  VideoClip clip{rec.id, rec.label, {}};
  for (std::size_t f = 0; f < rec.frames; ++f) {
    clip.frames.push_back(read_pnm(frame_path(root, rec, f)));
    const auto& fr = clip.frames.back();
    if (fr.dim(0) != rec.height || fr.dim(1) != rec.width || fr.dim(2) != rec.channels) {
      throw ShapeError("clip '" + rec.id + "' frame " + std::to_string(f) + " is " + shape_str(fr.shape()) +
                       ", manifest says " + std::to_string(rec.height) + "x" + std::to_string(rec.width));
    }
  }
  return clip;
}

std::vector<VideoClip> load_split(const fs::path& root, const Manifest& m, const std::string& split) {
  std::vector<VideoClip> out;
  for (const auto& r : m.split(split)) out.push_back(load_clip(root, r));
  return out;
}

ClipRecord save_clip(const fs::path& root, const VideoClip& clip, const std::string& split, int bit_depth) {
  clip.validate();
  ClipRecord r{clip.id, "clips/" + clip.id, clip.label, clip.frames.size(), clip.height(), clip.width(),
               clip.channels(), split};
  fs::create_directories(root / r.path);
  for (std::size_t f = 0; f < clip.frames.size(); ++f) write_pnm(frame_path(root, r, f), clip.frames[f], bit_depth);
  return r;
}

Manifest degrade_dataset(const fs::path& in_root, const fs::path& out_root, const DegradeConfig& cfg) {
  cfg.validate();
  const Manifest in = read_manifest(in_root);
  Manifest out{in.name + "-" + std::to_string(cfg.target_h) + "x" + std::to_string(cfg.target_w), in.classes, 16, {}};
  for (const auto& rec : in.clips) {
    const VideoClip lr = degrade_clip(load_clip(in_root, rec), cfg);
    out.clips.push_back(save_clip(out_root, lr, rec.split, 16));
  }
  write_manifest(out_root, out);
  return out;
}

}  // namespace lrstat
