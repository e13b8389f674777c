#pragma once

#include <filesystem>
#include <string>

#include "lrstat/rng.hpp"
#include "lrstat/tensor.hpp"

namespace testutil {

inline lrstat::Tensor random_tensor(lrstat::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  lrstat::Tensor t(std::move(shape));
  lrstat::Rng rng(seed);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Fresh scratch directory under the build tree, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / ("lrstat_test_" + name)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace testutil
