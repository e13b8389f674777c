#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "lrstat/backbone.hpp"

namespace lrstat {

namespace {

constexpr char kMagic[8] = {'L', 'R', 'S', 'T', 'A', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t b = 0; b < sizeof(T); ++b) out.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * b)) & 0xff));
}

template <typename T>
T get_le(std::istream& in) {
  std::uint64_t v = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    const int c = in.get();
    if (c == EOF) throw std::runtime_error("checkpoint: unexpected end of file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * b);
  }
  return static_cast<T>(v);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& p) {
  const auto& c = p.config;
  nlohmann::json header = {
      {"format", "lrstat-checkpoint"},
      {"config",
       {{"in_channels", c.in_channels},
        {"in_h", c.in_h},
        {"in_w", c.in_w},
        {"widths", c.widths},
        {"kernel", c.kernel},
        {"num_classes", c.num_classes},
        {"segments", c.segments},
        {"tam_hidden", c.tam_hidden}}},
  };
  const auto names = p.names();
  const auto tensors = p.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    header["tensors"].push_back({{"name", names[i]}, {"shape", tensors[i]->shape()}});
  }
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Tensor* t : tensors) {
    for (double v : t->data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw std::runtime_error(path.string() + " is not an lrstat checkpoint");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint version " + std::to_string(version) + " is not supported");
  }
  const auto len = get_le<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const auto header = nlohmann::json::parse(text);
  const auto& jc = header.at("config");
  BackboneConfig cfg;
  cfg.in_channels = jc.at("in_channels");
  cfg.in_h = jc.at("in_h");
  cfg.in_w = jc.at("in_w");
  cfg.widths = jc.at("widths").get<std::vector<std::size_t>>();
  cfg.kernel = jc.at("kernel");
  cfg.num_classes = jc.at("num_classes");
  cfg.segments = jc.at("segments");
  cfg.tam_hidden = jc.at("tam_hidden");

  ModelParams p = init_model(cfg, 0);
  auto tensors = p.tensors();
  const auto& jt = header.at("tensors");
  if (jt.size() != tensors.size()) throw std::runtime_error("checkpoint: tensor count mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (jt[i].at("shape").get<Shape>() != tensors[i]->shape()) {
      throw std::runtime_error("checkpoint: tensor " + jt[i].at("name").get<std::string>() + " has unexpected shape");
    }
    for (auto& v : tensors[i]->data()) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
  }
  return p;
}

}  // namespace lrstat
