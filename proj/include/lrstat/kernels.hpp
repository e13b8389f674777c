#pragma once

// Raw numeric kernels over contiguous row-major buffers.
//
// Every kernel exists twice: `serial` is the plain reference, `omp` splits the
// outermost independent loop across OpenMP threads. Both visit the
// contributions to each output element in the same order, so their results are
// bit-identical for any thread count. Backward kernels accumulate (+=) into
// their outputs; forward kernels overwrite.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace lrstat::kernels {

struct Conv2dGeometry {
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_h() const { return (in_h + 2 * pad - kernel_h) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - kernel_w) / stride + 1; }
  /// Throws ShapeError with the computed extents when the geometry is invalid.
  void validate() const;
};

struct Pool2dGeometry {
  std::size_t channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t window = 1;
  std::size_t stride = 1;

  std::size_t out_h() const { return (in_h - window) / stride + 1; }
  std::size_t out_w() const { return (in_w - window) / stride + 1; }
  /// Windows must tile each axis exactly: (extent - window) % stride == 0.
  void validate() const;
};

/// Source taps contributing to one output coordinate of an area resample.
struct AreaTaps {
  std::size_t first = 0;
  std::vector<double> weights;
};

/// Exact area-overlap weights for resampling `in` cells onto `out` cells (out <= in).
std::vector<AreaTaps> area_taps(std::size_t in, std::size_t out);

/// Normalized, truncated Gaussian (radius ceil(3 sigma)). sigma must be > 0.
std::vector<double> gaussian_kernel(double sigma);

/// Mirror index into [0, n) without repeating the edge sample.
std::size_t reflect_index(long long i, std::size_t n);

#define LRSTAT_KERNEL_DECLS                                                                    \
  void conv2d_forward(const Conv2dGeometry& g, std::span<const double> in,                    \
                      std::span<const double> kernel, std::span<double> out);                 \
  void conv2d_backward_input(const Conv2dGeometry& g, std::span<const double> grad_out,        \
                             std::span<const double> kernel, std::span<double> grad_in);      \
  void conv2d_backward_kernel(const Conv2dGeometry& g, std::span<const double> grad_out,       \
                              std::span<const double> in, std::span<double> grad_kernel);     \
  /* C[m x n] = op(A) * op(B); op(A) is m x k, op(B) is k x n. */                              \
  void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,          \
            std::span<const double> a, std::span<const double> b, std::span<double> c);       \
  void avgpool2d_forward(const Pool2dGeometry& g, std::span<const double> in,                 \
                         std::span<double> out);                                              \
  void avgpool2d_backward(const Pool2dGeometry& g, std::span<const double> grad_out,          \
                          std::span<double> grad_in);                                         \
  /* Interleaved H x W x C images. */                                                          \
  void area_resample(std::span<const double> src, std::size_t h, std::size_t w,               \
                     std::size_t channels, std::span<double> dst, std::size_t out_h,          \
                     std::size_t out_w);                                                      \
  void gaussian_blur(std::span<const double> src, std::size_t h, std::size_t w,               \
                     std::size_t channels, double sigma, std::span<double> dst);

namespace serial {
LRSTAT_KERNEL_DECLS
}  // namespace serial

namespace omp {
LRSTAT_KERNEL_DECLS
}  // namespace omp

#undef LRSTAT_KERNEL_DECLS

// The library itself always calls the OpenMP variants.
using omp::area_resample;
using omp::avgpool2d_backward;
using omp::avgpool2d_forward;
using omp::conv2d_backward_input;
using omp::conv2d_backward_kernel;
using omp::conv2d_forward;
using omp::gaussian_blur;
using omp::gemm;

/// Caps the OpenMP worker pool (n >= 1).
void set_num_threads(int n);
int max_threads();

}  // namespace lrstat::kernels
