// SPDX-License-Identifier: Apache-2.0
//
// Raw numeric kernels over contiguous row-major double buffers.
//
// Two implementations live side by side. `kernels::reference` holds the
// straightforward serial loops; they are slow and exist so the tests have an
// independent oracle. The functions directly in `kernels` are the ones the
// rest of the library calls: im2col + blocked GEMM, with OpenMP splitting only
// over independent output rows so results do not depend on the thread count.
//
// All backward kernels accumulate (+=) into their gradient outputs. An empty
// gradient span means "not requested".
#pragma once

#include <cstddef>
#include <span>

namespace metaanchor::kernels {

struct ConvShape {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t input_size() const { return in_channels * height * width; }
  std::size_t output_size() const { return out_channels * height * width; }
  std::size_t filter_size() const { return out_channels * in_channels * 9; }
};

namespace reference {

// 3x3 cross-correlation, stride 1, zero padding 1.
void conv3x3_forward(const ConvShape& shape, std::span<const double> input,
                     std::span<const double> filters, std::span<const double> bias,
                     std::span<double> output);

void conv3x3_backward(const ConvShape& shape, std::span<const double> input,
                      std::span<const double> filters, std::span<const double> grad_output,
                      std::span<double> grad_input, std::span<double> grad_filters,
                      std::span<double> grad_bias);

// c[m,n] += a[m,k] * b[k,n]
void gemm(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
          std::span<const double> b, std::span<double> c);

}  // namespace reference

void conv3x3_forward(const ConvShape& shape, std::span<const double> input,
                     std::span<const double> filters, std::span<const double> bias,
                     std::span<double> output);

void conv3x3_backward(const ConvShape& shape, std::span<const double> input,
                      std::span<const double> filters, std::span<const double> grad_output,
                      std::span<double> grad_input, std::span<double> grad_filters,
                      std::span<double> grad_bias);

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c);

// c[m,n] += a[m,k] * b[n,k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c);

// c[m,n] += a[k,m]^T * b[k,n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c);

// Unfolds a [C,H,W] map into [C*9, H*W] patches for a padded 3x3 window.
void im2col3x3(std::size_t channels, std::size_t height, std::size_t width,
               std::span<const double> input, std::span<double> columns);

// Transposed unfold: [H*W, C*9], one patch per row.
void im2row3x3(std::size_t channels, std::size_t height, std::size_t width,
               std::span<const double> input, std::span<double> rows);

// Adjoint of im2col3x3; accumulates into `input_grad`.
void col2im3x3(std::size_t channels, std::size_t height, std::size_t width,
               std::span<const double> columns, std::span<double> input_grad);

}  // namespace metaanchor::kernels
