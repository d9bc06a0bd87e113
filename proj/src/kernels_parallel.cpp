// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstring>
#include <vector>

#include "metaanchor/kernels.hpp"

namespace metaanchor::kernels {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1 << 15;

long long as_ll(std::size_t v) { return static_cast<long long>(v); }

}  // namespace

namespace {

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 8;
constexpr std::size_t kDepthBlock = 256;

// GCC/Clang vector extension; the compiler picks the widest matching registers.
using v4 = double __attribute__((vector_size(4 * sizeof(double))));

inline v4 load4(const double* p) {
  v4 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void add_store4(double* p, v4 v) {
  v += load4(p);
  std::memcpy(p, &v, sizeof v);
}

// c[m,n] += A[m,k] * b[k,n], with A read through `a_at(i, p)`. Register
// tiles of kTileRows x kTileCols accumulate over one depth block at a time;
// column panels are split across threads, so every output element is summed
// in the same order whatever the thread count.
template <class AAt>
void gemm_tiled(std::size_t m, std::size_t n, std::size_t k, AAt a_at, const double* b,
                double* c) {
  const std::size_t panels = (n + kTileCols - 1) / kTileCols;
  const bool par = m * n * k >= kParallelWork && panels > 1;
  for (std::size_t p0 = 0; p0 < k; p0 += kDepthBlock) {
    const std::size_t p1 = std::min(k, p0 + kDepthBlock);
#pragma omp parallel for schedule(static) if (par)
    for (long long jp = 0; jp < as_ll(panels); ++jp) {
      const std::size_t j = static_cast<std::size_t>(jp) * kTileCols;
      const std::size_t nc = std::min(kTileCols, n - j);
      for (std::size_t i = 0; i < m; i += kTileRows) {
        const std::size_t nr = std::min(kTileRows, m - i);
        if (nr == kTileRows && nc == kTileCols) {
          v4 c00{}, c01{}, c10{}, c11{}, c20{}, c21{}, c30{}, c31{};
          for (std::size_t p = p0; p < p1; ++p) {
            const double* br = b + p * n + j;
            const v4 b0 = load4(br), b1 = load4(br + 4);
            const double a0 = a_at(i, p), a1 = a_at(i + 1, p), a2 = a_at(i + 2, p),
                         a3 = a_at(i + 3, p);
            c00 += a0 * b0;
            c01 += a0 * b1;
            c10 += a1 * b0;
            c11 += a1 * b1;
            c20 += a2 * b0;
            c21 += a2 * b1;
            c30 += a3 * b0;
            c31 += a3 * b1;
          }
          add_store4(c + i * n + j, c00);
          add_store4(c + i * n + j + 4, c01);
          add_store4(c + (i + 1) * n + j, c10);
          add_store4(c + (i + 1) * n + j + 4, c11);
          add_store4(c + (i + 2) * n + j, c20);
          add_store4(c + (i + 2) * n + j + 4, c21);
          add_store4(c + (i + 3) * n + j, c30);
          add_store4(c + (i + 3) * n + j + 4, c31);
          continue;
        }
        double acc[kTileRows][kTileCols] = {};
        {
          for (std::size_t p = p0; p < p1; ++p) {
            const double* br = b + p * n + j;
            for (std::size_t r = 0; r < nr; ++r) {
              const double av = a_at(i + r, p);
              for (std::size_t q = 0; q < nc; ++q) acc[r][q] += av * br[q];
            }
          }
        }
        for (std::size_t r = 0; r < nr; ++r) {
          double* cr = c + (i + r) * n + j;
          for (std::size_t q = 0; q < nc; ++q) cr[q] += acc[r][q];
        }
      }
    }
  }
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  const double* ap = a.data();
  gemm_tiled(
      m, n, k, [ap, k](std::size_t i, std::size_t p) { return ap[i * k + p]; }, b.data(), c.data());
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  // Transposing b costs n*k moves against m*n*k multiply-adds.
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  const double* ap = a.data();
  gemm_tiled(
      m, n, k, [ap, k](std::size_t i, std::size_t p) { return ap[i * k + p]; }, bt.data(), c.data());
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  const double* ap = a.data();
  gemm_tiled(
      m, n, k, [ap, m](std::size_t i, std::size_t p) { return ap[p * m + i]; }, b.data(), c.data());
}

void im2col3x3(std::size_t channels, std::size_t height, std::size_t width,
               std::span<const double> input, std::span<double> columns) {
  const std::size_t plane = height * width;
  const bool par = channels * plane * 9 >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (long long r = 0; r < as_ll(channels * 9); ++r) {
    const std::size_t row = static_cast<std::size_t>(r);
    const std::size_t c = row / 9;
    const long long ky = static_cast<long long>(row % 9) / 3 - 1;
    const long long kx = static_cast<long long>(row % 3) - 1;
    const double* src = input.data() + c * plane;
    double* dst = columns.data() + row * plane;
    for (long long y = 0; y < as_ll(height); ++y) {
      const long long iy = y + ky;
      double* out = dst + static_cast<std::size_t>(y) * width;
      if (iy < 0 || iy >= as_ll(height)) {
        std::fill(out, out + width, 0.0);
        continue;
      }
      const double* in = src + static_cast<std::size_t>(iy) * width;
      for (long long x = 0; x < as_ll(width); ++x) {
        const long long ix = x + kx;
        out[x] = (ix < 0 || ix >= as_ll(width)) ? 0.0 : in[ix];
      }
    }
  }
}

void im2row3x3(std::size_t channels, std::size_t height, std::size_t width,
               std::span<const double> input, std::span<double> rows) {
  const std::size_t kdim = channels * 9;
  const bool par = channels * height * width * 9 >= kParallelWork && height > 1;
#pragma omp parallel for schedule(static) if (par)
  for (long long yy = 0; yy < as_ll(height); ++yy) {
    const long long y = yy;
    for (long long x = 0; x < as_ll(width); ++x) {
      double* dst = rows.data() + (static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)) * kdim;
      for (std::size_t c = 0; c < channels; ++c) {
        const double* src = input.data() + c * height * width;
        for (long long ky = -1; ky <= 1; ++ky) {
          const long long iy = y + ky;
          for (long long kx = -1; kx <= 1; ++kx) {
            const long long ix = x + kx;
            const bool inside = iy >= 0 && iy < as_ll(height) && ix >= 0 && ix < as_ll(width);
            *dst++ = inside ? src[static_cast<std::size_t>(iy) * width + static_cast<std::size_t>(ix)] : 0.0;
          }
        }
      }
    }
  }
}

void col2im3x3(std::size_t channels, std::size_t height, std::size_t width,
               std::span<const double> columns, std::span<double> input_grad) {
  const std::size_t plane = height * width;
  const bool par = channels * plane * 9 >= kParallelWork && channels > 1;
  // Each channel owns a disjoint slice of input_grad, so channels run in parallel.
#pragma omp parallel for schedule(static) if (par)
  for (long long cc = 0; cc < as_ll(channels); ++cc) {
    const std::size_t c = static_cast<std::size_t>(cc);
    double* dst = input_grad.data() + c * plane;
    for (std::size_t k = 0; k < 9; ++k) {
      const long long ky = static_cast<long long>(k / 3) - 1;
      const long long kx = static_cast<long long>(k % 3) - 1;
      const double* src = columns.data() + (c * 9 + k) * plane;
      for (long long y = 0; y < as_ll(height); ++y) {
        const long long iy = y + ky;
        if (iy < 0 || iy >= as_ll(height)) continue;
        const double* in = src + static_cast<std::size_t>(y) * width;
        double* out = dst + static_cast<std::size_t>(iy) * width;
        for (long long x = 0; x < as_ll(width); ++x) {
          const long long ix = x + kx;
          if (ix < 0 || ix >= as_ll(width)) continue;
          out[ix] += in[x];
        }
      }
    }
  }
}

void conv3x3_forward(const ConvShape& s, std::span<const double> input,
                     std::span<const double> filters, std::span<const double> bias,
                     std::span<double> output) {
  const std::size_t plane = s.height * s.width;
  std::vector<double> columns(s.in_channels * 9 * plane);
  im2col3x3(s.in_channels, s.height, s.width, input, columns);
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    const double b = bias.empty() ? 0.0 : bias[o];
    std::fill_n(output.data() + o * plane, plane, b);
  }
  gemm_nn(s.out_channels, plane, s.in_channels * 9, filters, columns, output);
}

void conv3x3_backward(const ConvShape& s, std::span<const double> input,
                      std::span<const double> filters, std::span<const double> grad_output,
                      std::span<double> grad_input, std::span<double> grad_filters,
                      std::span<double> grad_bias) {
  const std::size_t plane = s.height * s.width;
  const std::size_t kdim = s.in_channels * 9;
  if (!grad_bias.empty()) {
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      double acc = 0.0;
      const double* g = grad_output.data() + o * plane;
      for (std::size_t i = 0; i < plane; ++i) acc += g[i];
      grad_bias[o] += acc;
    }
  }
  if (!grad_filters.empty()) {
    std::vector<double> rows(plane * kdim);
    im2row3x3(s.in_channels, s.height, s.width, input, rows);
    gemm_nn(s.out_channels, kdim, plane, grad_output, rows, grad_filters);
  }
  if (!grad_input.empty()) {
    std::vector<double> grad_columns(kdim * plane, 0.0);
    gemm_tn(kdim, plane, s.out_channels, filters, grad_output, grad_columns);
    col2im3x3(s.in_channels, s.height, s.width, grad_columns, grad_input);
  }
}

}  // namespace metaanchor::kernels
