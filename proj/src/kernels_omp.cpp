#include <omp.h>

#include <algorithm>
#include <cstddef>

#include "lrstat/kernels.hpp"

namespace lrstat::kernels {

void set_num_threads(int n) { omp_set_num_threads(std::max(1, n)); }
int max_threads() { return omp_get_max_threads(); }

namespace {

// Output indices o in [lo, hi) whose input tap o * stride + k - pad lands in [0, in).
struct TapRange {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

TapRange valid_outputs(std::size_t k, std::size_t pad, std::size_t stride, std::size_t in,
                       std::size_t out) {
  TapRange r;
  r.lo = k >= pad ? 0 : (pad - k + stride - 1) / stride;
  if (in + pad < k + 1) return {0, 0};
  r.hi = std::min(out, (in - 1 + pad - k) / stride + 1);
  if (r.lo > r.hi) r.lo = r.hi;
  return r;
}

using Index = std::ptrdiff_t;

}  // namespace

namespace omp {

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> in,
                    std::span<const double> kernel, std::span<double> out) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
#pragma omp parallel for schedule(static)
  for (Index co_i = 0; co_i < static_cast<Index>(g.out_channels); ++co_i) {
    const auto co = static_cast<std::size_t>(co_i);
    double* o = out.data() + co * oh * ow;
    std::fill(o, o + oh * ow, 0.0);
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
      const double* plane = in.data() + ci * g.in_h * g.in_w;
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        const TapRange ry = valid_outputs(ky, g.pad, g.stride, g.in_h, oh);
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const TapRange rx = valid_outputs(kx, g.pad, g.stride, g.in_w, ow);
          const double w = kernel[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
          for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
            const double* irow = plane + (oy * g.stride + ky - g.pad) * g.in_w;
            double* orow = o + oy * ow;
            if (g.stride == 1) {
              const double* src = irow + kx - g.pad;
              for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) orow[ox] += w * src[ox];
            } else {
              for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) {
                orow[ox] += w * irow[ox * g.stride + kx - g.pad];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const Conv2dGeometry& g, std::span<const double> grad_out,
                           std::span<const double> kernel, std::span<double> grad_in) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
#pragma omp parallel
  {
    std::vector<double> buf(g.in_h * g.in_w);
#pragma omp for schedule(static)
    for (Index ci_i = 0; ci_i < static_cast<Index>(g.in_channels); ++ci_i) {
      const auto ci = static_cast<std::size_t>(ci_i);
      std::fill(buf.begin(), buf.end(), 0.0);
      for (std::size_t co = 0; co < g.out_channels; ++co) {
        const double* go = grad_out.data() + co * oh * ow;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const TapRange ry = valid_outputs(ky, g.pad, g.stride, g.in_h, oh);
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const TapRange rx = valid_outputs(kx, g.pad, g.stride, g.in_w, ow);
            const double w = kernel[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
            for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
              double* brow = buf.data() + (oy * g.stride + ky - g.pad) * g.in_w;
              const double* grow = go + oy * ow;
              for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) {
                brow[ox * g.stride + kx - g.pad] += w * grow[ox];
              }
            }
          }
        }
      }
      double* gi = grad_in.data() + ci * g.in_h * g.in_w;
      for (std::size_t i = 0; i < buf.size(); ++i) gi[i] += buf[i];
    }
  }
}

void conv2d_backward_kernel(const Conv2dGeometry& g, std::span<const double> grad_out,
                            std::span<const double> in, std::span<double> grad_kernel) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
#pragma omp parallel for schedule(static)
  for (Index co_i = 0; co_i < static_cast<Index>(g.out_channels); ++co_i) {
    const auto co = static_cast<std::size_t>(co_i);
    const double* go = grad_out.data() + co * oh * ow;
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
      const double* plane = in.data() + ci * g.in_h * g.in_w;
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        const TapRange ry = valid_outputs(ky, g.pad, g.stride, g.in_h, oh);
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const TapRange rx = valid_outputs(kx, g.pad, g.stride, g.in_w, ow);
          double s = 0.0;
          for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
            const double* irow = plane + (oy * g.stride + ky - g.pad) * g.in_w;
            const double* grow = go + oy * ow;
            for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) {
              s += grow[ox] * irow[ox * g.stride + kx - g.pad];
            }
          }
          grad_kernel[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] += s;
        }
      }
    }
  }
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c) {
#pragma omp parallel for schedule(static)
  for (Index i_i = 0; i_i < static_cast<Index>(m); ++i_i) {
    const auto i = static_cast<std::size_t>(i_i);
    double* crow = c.data() + i * n;
    std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = trans_a ? a[p * m + i] : a[i * k + p];
      if (trans_b) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
      } else {
        const double* brow = b.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

void avgpool2d_forward(const Pool2dGeometry& g, std::span<const double> in, std::span<double> out) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const double area = static_cast<double>(g.window * g.window);
#pragma omp parallel for schedule(static)
  for (Index c_i = 0; c_i < static_cast<Index>(g.channels); ++c_i) {
    const auto c = static_cast<std::size_t>(c_i);
    const double* plane = in.data() + c * g.in_h * g.in_w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double s = 0.0;
        for (std::size_t dy = 0; dy < g.window; ++dy) {
          const double* row = plane + (oy * g.stride + dy) * g.in_w + ox * g.stride;
          for (std::size_t dx = 0; dx < g.window; ++dx) s += row[dx];
        }
        out[(c * oh + oy) * ow + ox] = s / area;
      }
    }
  }
}

void avgpool2d_backward(const Pool2dGeometry& g, std::span<const double> grad_out,
                        std::span<double> grad_in) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const double area = static_cast<double>(g.window * g.window);
#pragma omp parallel for schedule(static)
  for (Index c_i = 0; c_i < static_cast<Index>(g.channels); ++c_i) {
    const auto c = static_cast<std::size_t>(c_i);
    double* plane = grad_in.data() + c * g.in_h * g.in_w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double share = grad_out[(c * oh + oy) * ow + ox] / area;
        for (std::size_t dy = 0; dy < g.window; ++dy) {
          double* row = plane + (oy * g.stride + dy) * g.in_w + ox * g.stride;
          for (std::size_t dx = 0; dx < g.window; ++dx) row[dx] += share;
        }
      }
    }
  }
}

void area_resample(std::span<const double> src, std::size_t h, std::size_t w, std::size_t channels,
                   std::span<double> dst, std::size_t out_h, std::size_t out_w) {
  const auto ty = area_taps(h, out_h);
  const auto tx = area_taps(w, out_w);
#pragma omp parallel for schedule(static)
  for (Index oy_i = 0; oy_i < static_cast<Index>(out_h); ++oy_i) {
    const auto oy = static_cast<std::size_t>(oy_i);
    const auto& wy = ty[oy];
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const auto& wx = tx[ox];
      for (std::size_t c = 0; c < channels; ++c) {
        const double ref = src[(wy.first * w + wx.first) * channels + c];
        double acc = 0.0;
        for (std::size_t a = 0; a < wy.weights.size(); ++a) {
          const double* row = src.data() + ((wy.first + a) * w + wx.first) * channels + c;
          double r = 0.0;
          for (std::size_t b = 0; b < wx.weights.size(); ++b) r += wx.weights[b] * (row[b * channels] - ref);
          acc += wy.weights[a] * r;
        }
        dst[(oy * out_w + ox) * channels + c] = ref + acc;
      }
    }
  }
}

void gaussian_blur(std::span<const double> src, std::size_t h, std::size_t w, std::size_t channels,
                   double sigma, std::span<double> dst) {
  if (sigma <= 0.0) {
    std::copy(src.begin(), src.end(), dst.begin());
    return;
  }
  const auto k = gaussian_kernel(sigma);
  const auto radius = static_cast<long long>(k.size() / 2);
  std::vector<double> tmp(src.size());
#pragma omp parallel for schedule(static)
  for (Index y_i = 0; y_i < static_cast<Index>(h); ++y_i) {
    const auto y = static_cast<std::size_t>(y_i);
    const double* row = src.data() + y * w * channels;
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double center = row[x * channels + c];
        double acc = 0.0;
        for (long long d = -radius; d <= radius; ++d) {
          const auto sx = reflect_index(static_cast<long long>(x) + d, w);
          acc += k[static_cast<std::size_t>(d + radius)] * (row[sx * channels + c] - center);
        }
        tmp[(y * w + x) * channels + c] = center + acc;
      }
    }
  }
#pragma omp parallel for schedule(static)
  for (Index y_i = 0; y_i < static_cast<Index>(h); ++y_i) {
    const auto y = static_cast<std::size_t>(y_i);
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double center = tmp[(y * w + x) * channels + c];
        double acc = 0.0;
        for (long long d = -radius; d <= radius; ++d) {
          const auto sy = reflect_index(static_cast<long long>(y) + d, h);
          acc += k[static_cast<std::size_t>(d + radius)] * (tmp[(sy * w + x) * channels + c] - center);
        }
        dst[(y * w + x) * channels + c] = center + acc;
      }
    }
  }
}

}  // namespace omp
}  // namespace lrstat::kernels
