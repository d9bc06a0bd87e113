// SPDX-License-Identifier: Apache-2.0
#include "metaanchor/kernels.hpp"

namespace metaanchor::kernels::reference {

namespace {

inline long long idx3(std::size_t c, long long y, long long x, std::size_t h, std::size_t w) {
  return (static_cast<long long>(c) * static_cast<long long>(h) + y) * static_cast<long long>(w) + x;
}

}  // namespace

void conv3x3_forward(const ConvShape& s, std::span<const double> input,
                     std::span<const double> filters, std::span<const double> bias,
                     std::span<double> output) {
  const long long h = static_cast<long long>(s.height);
  const long long w = static_cast<long long>(s.width);
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    for (long long y = 0; y < h; ++y) {
      for (long long x = 0; x < w; ++x) {
        double acc = bias.empty() ? 0.0 : bias[o];
        for (std::size_t c = 0; c < s.in_channels; ++c) {
          for (long long ky = 0; ky < 3; ++ky) {
            for (long long kx = 0; kx < 3; ++kx) {
              const long long iy = y + ky - 1;
              const long long ix = x + kx - 1;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += input[idx3(c, iy, ix, s.height, s.width)] *
                     filters[((o * s.in_channels + c) * 3 + ky) * 3 + kx];
            }
          }
        }
        output[idx3(o, y, x, s.height, s.width)] = acc;
      }
    }
  }
}

void conv3x3_backward(const ConvShape& s, std::span<const double> input,
                      std::span<const double> filters, std::span<const double> grad_output,
                      std::span<double> grad_input, std::span<double> grad_filters,
                      std::span<double> grad_bias) {
  const long long h = static_cast<long long>(s.height);
  const long long w = static_cast<long long>(s.width);
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    for (long long y = 0; y < h; ++y) {
      for (long long x = 0; x < w; ++x) {
        const double g = grad_output[idx3(o, y, x, s.height, s.width)];
        if (!grad_bias.empty()) grad_bias[o] += g;
        for (std::size_t c = 0; c < s.in_channels; ++c) {
          for (long long ky = 0; ky < 3; ++ky) {
            for (long long kx = 0; kx < 3; ++kx) {
              const long long iy = y + ky - 1;
              const long long ix = x + kx - 1;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              const std::size_t f = ((o * s.in_channels + c) * 3 + ky) * 3 + kx;
              const long long i = idx3(c, iy, ix, s.height, s.width);
              if (!grad_filters.empty()) grad_filters[f] += g * input[i];
              if (!grad_input.empty()) grad_input[i] += g * filters[f];
            }
          }
        }
      }
    }
  }
}

void gemm(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
          std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] += acc;
    }
  }
}

}  // namespace metaanchor::kernels::reference
