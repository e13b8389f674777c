#include "lrstat/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace lrstat {

void VideoClip::validate() const {
  if (frames.empty()) throw std::invalid_argument("clip '" + id + "' has no frames");
  for (const auto& f : frames) {
    if (f.rank() != 3) throw ShapeError("clip '" + id + "': frame is not [H x W x C]");
    if (f.shape() != frames.front().shape()) {
      throw ShapeError("clip '" + id + "': frame shapes differ " + shape_str(f.shape()) + " vs " +
                       shape_str(frames.front().shape()));
    }
  }
}

Tensor frame_to_chw(const Frame& f) {
  const std::size_t h = f.dim(0), w = f.dim(1), c = f.dim(2);
  Tensor out(Shape{c, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) out[(ch * h + y) * w + x] = f[(y * w + x) * c + ch];
    }
  }
  return out;
}

Frame chw_to_frame(const Tensor& t) {
  const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
  Frame out(Shape{h, w, c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) out[(y * w + x) * c + ch] = t[(ch * h + y) * w + x];
    }
  }
  return out;
}

namespace {

std::size_t read_header_int(std::istream& in, const std::filesystem::path& path) {
  in >> std::ws;
  while (in.peek() == '#') {
    std::string skip;
    std::getline(in, skip);
    in >> std::ws;
  }
  long long v = -1;
  in >> v;
  if (!in || v <= 0) throw std::runtime_error("malformed Netpbm header in " + path.string());
  return static_cast<std::size_t>(v);
}

}  // namespace

Frame read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image " + path.string());
  std::string magic;
  in >> magic;
  std::size_t channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw std::runtime_error("unsupported image format '" + magic + "' in " + path.string());
  }
  const std::size_t w = read_header_int(in, path);
  const std::size_t h = read_header_int(in, path);
  const std::size_t maxval = read_header_int(in, path);
  if (maxval > 65535) throw std::runtime_error("maxval out of range in " + path.string());
  in.get();  // single whitespace before the raster
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  std::string raster(h * w * channels * bytes_per, '\0');
  in.read(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!in) throw std::runtime_error("truncated raster in " + path.string());
  Frame f(Shape{h, w, channels});
  const auto* p = reinterpret_cast<const unsigned char*>(raster.data());
  for (std::size_t i = 0; i < f.numel(); ++i) {
    const unsigned v = bytes_per == 2 ? (unsigned{p[2 * i]} << 8) | p[2 * i + 1] : p[i];
    f[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return f;
}

void write_pnm(const std::filesystem::path& path, const Frame& frame, int bit_depth) {
  if (frame.rank() != 3 || (frame.dim(2) != 1 && frame.dim(2) != 3)) {
    throw ShapeError("write_pnm: expected [H x W x 1|3], got " + shape_str(frame.shape()));
  }
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("write_pnm: bit depth must be 8 or 16");
  const unsigned maxval = bit_depth == 8 ? 255U : 65535U;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image " + path.string());
  out << (frame.dim(2) == 1 ? "P5" : "P6") << '\n'
      << frame.dim(1) << ' ' << frame.dim(0) << '\n'
      << maxval << '\n';
  std::string raster;
  raster.reserve(frame.numel() * (bit_depth / 8));
  for (double v : frame.data()) {
    const double c = std::clamp(v, 0.0, 1.0);
    const auto q = static_cast<unsigned>(std::floor(c * maxval + 0.5));
    if (bit_depth == 16) raster.push_back(static_cast<char>(q >> 8));
    raster.push_back(static_cast<char>(q & 0xffU));
  }
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw std::runtime_error("failed writing image " + path.string());
}

}  // namespace lrstat
