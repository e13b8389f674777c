// Serial reference kernels. Written for obviousness rather than speed; the
// OpenMP versions in kernels_omp.cpp are tested against these bit for bit.

#include <cmath>
#include <string>

#include "lrstat/kernels.hpp"
#include "lrstat/tensor.hpp"

namespace lrstat::kernels {

void Conv2dGeometry::validate() const {
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (in_h + 2 * pad < kernel_h || in_w + 2 * pad < kernel_w) {
    throw ShapeError("conv2d: padded input " + std::to_string(in_h + 2 * pad) + "x" +
                     std::to_string(in_w + 2 * pad) + " is smaller than kernel " +
                     std::to_string(kernel_h) + "x" + std::to_string(kernel_w));
  }
}

void Pool2dGeometry::validate() const {
  if (window == 0 || stride == 0) throw ShapeError("avgpool2d: window and stride must be positive");
  if (in_h < window || in_w < window) {
    throw ShapeError("avgpool2d: input " + std::to_string(in_h) + "x" + std::to_string(in_w) +
                     " is smaller than window " + std::to_string(window));
  }
  if ((in_h - window) % stride != 0 || (in_w - window) % stride != 0) {
    throw ShapeError("avgpool2d: window " + std::to_string(window) + " with stride " +
                     std::to_string(stride) + " does not tile input " + std::to_string(in_h) +
                     "x" + std::to_string(in_w));
  }
}

std::vector<AreaTaps> area_taps(std::size_t in, std::size_t out) {
  if (out == 0 || out > in) {
    throw ShapeError("area resample: cannot map " + std::to_string(in) + " cells onto " +
                     std::to_string(out));
  }
  // Work in units of 1/out source cells so every overlap is an integer.
  std::vector<AreaTaps> taps(out);
  for (std::size_t o = 0; o < out; ++o) {
    const std::size_t lo = o * in;
    const std::size_t hi = (o + 1) * in;
    const std::size_t first = lo / out;
    const std::size_t last = (hi - 1) / out;
    taps[o].first = first;
    for (std::size_t s = first; s <= last; ++s) {
      const std::size_t cell_lo = std::max(lo, s * out);
      const std::size_t cell_hi = std::min(hi, (s + 1) * out);
      taps[o].weights.push_back(static_cast<double>(cell_hi - cell_lo) / static_cast<double>(in));
    }
  }
  return taps;
}

std::vector<double> gaussian_kernel(double sigma) {
  const auto radius = static_cast<std::size_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(radius);
    k[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    total += k[i];
  }
  for (auto& v : k) v /= total;
  return k;
}

std::size_t reflect_index(long long i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<long long>(2 * (n - 1));
  long long m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<long long>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

namespace serial {

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> in,
                    std::span<const double> kernel, std::span<double> out) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t co = 0; co < g.out_channels; ++co) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double s = 0.0;
        for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              const long long iy = static_cast<long long>(oy * g.stride + ky) - static_cast<long long>(g.pad);
              const long long ix = static_cast<long long>(ox * g.stride + kx) - static_cast<long long>(g.pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long long>(g.in_h) ||
                  ix >= static_cast<long long>(g.in_w)) {
                continue;
              }
              const double w = kernel[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
              s += w * in[(ci * g.in_h + static_cast<std::size_t>(iy)) * g.in_w + static_cast<std::size_t>(ix)];
            }
          }
        }
        out[(co * oh + oy) * ow + ox] = s;
      }
    }
  }
}

void conv2d_backward_input(const Conv2dGeometry& g, std::span<const double> grad_out,
                           std::span<const double> kernel, std::span<double> grad_in) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    for (std::size_t iy = 0; iy < g.in_h; ++iy) {
      for (std::size_t ix = 0; ix < g.in_w; ++ix) {
        double s = 0.0;
        for (std::size_t co = 0; co < g.out_channels; ++co) {
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              const long long ny = static_cast<long long>(iy + g.pad) - static_cast<long long>(ky);
              const long long nx = static_cast<long long>(ix + g.pad) - static_cast<long long>(kx);
              if (ny < 0 || nx < 0) continue;
              if (ny % static_cast<long long>(g.stride) != 0 || nx % static_cast<long long>(g.stride) != 0) continue;
              const auto oy = static_cast<std::size_t>(ny) / g.stride;
              const auto ox = static_cast<std::size_t>(nx) / g.stride;
              if (oy >= oh || ox >= ow) continue;
              const double w = kernel[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
              s += w * grad_out[(co * oh + oy) * ow + ox];
            }
          }
        }
        grad_in[(ci * g.in_h + iy) * g.in_w + ix] += s;
      }
    }
  }
}

void conv2d_backward_kernel(const Conv2dGeometry& g, std::span<const double> grad_out,
                            std::span<const double> in, std::span<double> grad_kernel) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t co = 0; co < g.out_channels; ++co) {
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          double s = 0.0;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const long long iy = static_cast<long long>(oy * g.stride + ky) - static_cast<long long>(g.pad);
              const long long ix = static_cast<long long>(ox * g.stride + kx) - static_cast<long long>(g.pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long long>(g.in_h) ||
                  ix >= static_cast<long long>(g.in_w)) {
                continue;
              }
              s += grad_out[(co * oh + oy) * ow + ox] *
                   in[(ci * g.in_h + static_cast<std::size_t>(iy)) * g.in_w + static_cast<std::size_t>(ix)];
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
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double bv = trans_b ? b[j * k + p] : b[p * n + j];
        s += av * bv;
      }
      c[i * n + j] = s;
    }
  }
}

void avgpool2d_forward(const Pool2dGeometry& g, std::span<const double> in, std::span<double> out) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const double area = static_cast<double>(g.window * g.window);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double s = 0.0;
        for (std::size_t dy = 0; dy < g.window; ++dy) {
          for (std::size_t dx = 0; dx < g.window; ++dx) {
            s += in[(c * g.in_h + oy * g.stride + dy) * g.in_w + ox * g.stride + dx];
          }
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
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double share = grad_out[(c * oh + oy) * ow + ox] / area;
        for (std::size_t dy = 0; dy < g.window; ++dy) {
          for (std::size_t dx = 0; dx < g.window; ++dx) {
            grad_in[(c * g.in_h + oy * g.stride + dy) * g.in_w + ox * g.stride + dx] += share;
          }
        }
      }
    }
  }
}

// Both resamplers below are written as ref + sum_i w_i * (v_i - ref), which is
// algebraically the weighted mean (weights sum to one) and reproduces constant
// inputs exactly regardless of weight rounding.

void area_resample(std::span<const double> src, std::size_t h, std::size_t w, std::size_t channels,
                   std::span<double> dst, std::size_t out_h, std::size_t out_w) {
  const auto ty = area_taps(h, out_h);
  const auto tx = area_taps(w, out_w);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double ref = src[(ty[oy].first * w + tx[ox].first) * channels + c];
        double acc = 0.0;
        for (std::size_t a = 0; a < ty[oy].weights.size(); ++a) {
          double row = 0.0;
          for (std::size_t b = 0; b < tx[ox].weights.size(); ++b) {
            const double v = src[((ty[oy].first + a) * w + tx[ox].first + b) * channels + c];
            row += tx[ox].weights[b] * (v - ref);
          }
          acc += ty[oy].weights[a] * row;
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
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double center = src[(y * w + x) * channels + c];
        double acc = 0.0;
        for (long long d = -radius; d <= radius; ++d) {
          const auto sx = reflect_index(static_cast<long long>(x) + d, w);
          acc += k[static_cast<std::size_t>(d + radius)] * (src[(y * w + sx) * channels + c] - center);
        }
        tmp[(y * w + x) * channels + c] = center + acc;
      }
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
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

}  // namespace serial
}  // namespace lrstat::kernels
