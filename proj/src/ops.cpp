// SPDX-License-Identifier: Apache-2.0
#include "metaanchor/ops.hpp"

#include <cmath>
#include <string>

#include "metaanchor/error.hpp"
#include "metaanchor/kernels.hpp"

namespace metaanchor::ops {

namespace {

using detail::grad_sink;
using detail::Node;

void expect_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": " + what + " is undefined");
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got shape " + shape_str(t.shape()));
  }
}

[[noreturn]] void dim_mismatch(const char* op, const std::string& what, std::size_t got,
                               std::size_t want) {
  throw ShapeError(std::string(op) + ": " + what + " is " + std::to_string(got) + ", expected " +
                   std::to_string(want));
}

}  // namespace

Tensor conv2d_3x3(const Tensor& input, const Tensor& filters, const Tensor& bias) {
  expect_rank(input, 3, "conv2d_3x3", "input");
  expect_rank(filters, 4, "conv2d_3x3", "filters");
  kernels::ConvShape s{input.dim(0), filters.dim(0), input.dim(1), input.dim(2)};
  if (filters.dim(1) != s.in_channels) {
    dim_mismatch("conv2d_3x3", "filter input-channel dimension (axis 1)", filters.dim(1),
                 s.in_channels);
  }
  if (filters.dim(2) != 3) dim_mismatch("conv2d_3x3", "filter height (axis 2)", filters.dim(2), 3);
  if (filters.dim(3) != 3) dim_mismatch("conv2d_3x3", "filter width (axis 3)", filters.dim(3), 3);
  if (bias.defined()) {
    expect_rank(bias, 1, "conv2d_3x3", "bias");
    if (bias.dim(0) != s.out_channels) {
      dim_mismatch("conv2d_3x3", "bias length (axis 0)", bias.dim(0), s.out_channels);
    }
  }
  std::vector<double> out(s.output_size());
  kernels::conv3x3_forward(s, input.data(), filters.data(),
                           bias.defined() ? bias.data() : std::span<const double>{}, out);
  return Tensor::make_result(
      {s.out_channels, s.height, s.width}, std::move(out), {input, filters, bias},
      [input, filters, bias, s](const Node& self) {
        kernels::conv3x3_backward(s, input.data(), filters.data(), self.upstream(),
                                  grad_sink(input), grad_sink(filters), grad_sink(bias));
      });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  expect_rank(x, 1, "linear", "x");
  expect_rank(weight, 2, "linear", "weight");
  const std::size_t m = weight.dim(0);
  const std::size_t n = weight.dim(1);
  if (x.dim(0) != n) dim_mismatch("linear", "input length vs weight columns", x.dim(0), n);
  if (bias.defined()) {
    expect_rank(bias, 1, "linear", "bias");
    if (bias.dim(0) != m) dim_mismatch("linear", "bias length vs weight rows", bias.dim(0), m);
  }
  std::vector<double> out(m, 0.0);
  kernels::gemm_nn(m, 1, n, weight.data(), x.data(), out);
  if (bias.defined()) {
    auto b = bias.data();
    for (std::size_t i = 0; i < m; ++i) out[i] = b[i] + out[i];
  }
  return Tensor::make_result({m}, std::move(out), {x, weight, bias},
                             [x, weight, bias, m, n](const Node& self) {
                               auto g = self.upstream();
                               if (auto gw = grad_sink(weight); !gw.empty()) {
                                 kernels::gemm_nn(m, n, 1, g, x.data(), gw);
                               }
                               if (auto gx = grad_sink(x); !gx.empty()) {
                                 kernels::gemm_tn(n, 1, m, weight.data(), g, gx);
                               }
                               if (auto gb = grad_sink(bias); !gb.empty()) {
                                 for (std::size_t i = 0; i < m; ++i) gb[i] += g[i];
                               }
                             });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  expect_rank(a, 2, "matmul", "lhs");
  expect_rank(b, 2, "matmul", "rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) dim_mismatch("matmul", "rhs rows (axis 0)", b.dim(0), k);
  std::vector<double> out(m * n, 0.0);
  kernels::gemm_nn(m, n, k, a.data(), b.data(), out);
  return Tensor::make_result({m, n}, std::move(out), {a, b}, [a, b, m, n, k](const Node& self) {
    auto g = self.upstream();
    if (auto ga = grad_sink(a); !ga.empty()) kernels::gemm_nt(m, k, n, g, b.data(), ga);
    if (auto gb = grad_sink(b); !gb.empty()) kernels::gemm_tn(k, n, m, a.data(), g, gb);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  expect_rank(a, 2, "matmul_nt", "lhs");
  expect_rank(b, 2, "matmul_nt", "rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) dim_mismatch("matmul_nt", "rhs columns (axis 1)", b.dim(1), k);
  std::vector<double> out(m * n, 0.0);
  kernels::gemm_nt(m, n, k, a.data(), b.data(), out);
  return Tensor::make_result({m, n}, std::move(out), {a, b}, [a, b, m, n, k](const Node& self) {
    auto g = self.upstream();
    // out = a b^T: d a = g b, d b = g^T a
    if (auto ga = grad_sink(a); !ga.empty()) kernels::gemm_nn(m, k, n, g, b.data(), ga);
    if (auto gb = grad_sink(b); !gb.empty()) kernels::gemm_tn(n, k, m, g, a.data(), gb);
  });
}

Tensor relu(const Tensor& x) {
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
  return Tensor::make_result(x.shape(), std::move(out), {x}, [x](const Node& self) {
    auto gx = grad_sink(x);
    auto in = x.data();
    auto g = self.upstream();
    // Subgradient at exactly 0 is 0.
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (in[i] > 0.0) gx[i] += g[i];
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-in[i]));
  return Tensor::make_result(x.shape(), std::move(out), {x}, [x](const Node& self) {
    auto gx = grad_sink(x);
    auto g = self.upstream();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double s = self.data[i];
      gx[i] += g[i] * s * (1.0 - s);
    }
  });
}

Tensor global_avg_pool(const Tensor& x) {
  expect_rank(x, 3, "global_avg_pool", "input");
  const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
  if (plane == 0) throw ShapeError("global_avg_pool: empty spatial extent " + shape_str(x.shape()));
  auto in = x.data();
  std::vector<double> out(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += in[ch * plane + i];
    out[ch] = acc / static_cast<double>(plane);
  }
  return Tensor::make_result({c}, std::move(out), {x}, [x, c, plane](const Node& self) {
    auto gx = grad_sink(x);
    auto g = self.upstream();
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < plane; ++i) gx[ch * plane + i] += g[ch] * inv;
    }
  });
}

Tensor avg_pool2x2(const Tensor& x) {
  expect_rank(x, 3, "avg_pool2x2", "input");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 != 0) dim_mismatch("avg_pool2x2", "height (axis 1) mod 2", h % 2, 0);
  if (w % 2 != 0) dim_mismatch("avg_pool2x2", "width (axis 2) mod 2", w % 2, 0);
  const std::size_t oh = h / 2, ow = w / 2;
  auto in = x.data();
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      const double* r0 = in.data() + (ch * h + 2 * y) * w;
      const double* r1 = r0 + w;
      for (std::size_t xx = 0; xx < ow; ++xx) {
        out[(ch * oh + y) * ow + xx] =
            0.25 * (r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]);
      }
    }
  }
  return Tensor::make_result({c, oh, ow}, std::move(out), {x}, [x, c, h, w](const Node& self) {
    auto gx = grad_sink(x);
    auto g = self.upstream();
    const std::size_t oh = h / 2, ow = w / 2;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t xx = 0; xx < ow; ++xx) {
          const double v = 0.25 * g[(ch * oh + y) * ow + xx];
          const std::size_t base = (ch * h + 2 * y) * w + 2 * xx;
          gx[base] += v;
          gx[base + 1] += v;
          gx[base + w] += v;
          gx[base + w + 1] += v;
        }
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " differ");
  }
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [a, b](const Node& self) {
    auto g = self.upstream();
    for (const Tensor* t : {&a, &b}) {
      auto gt = grad_sink(*t);
      for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " differ");
  }
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [a, b](const Node& self) {
    auto g = self.upstream();
    if (auto ga = grad_sink(a); !ga.empty()) {
      auto y = b.data();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (auto gb = grad_sink(b); !gb.empty()) {
      auto x = a.data();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * factor;
  return Tensor::make_result(x.shape(), std::move(out), {x}, [x, factor](const Node& self) {
    auto gx = grad_sink(x);
    auto g = self.upstream();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * factor;
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return Tensor::make_result({}, {acc}, {x}, [x](const Node& self) {
    auto gx = grad_sink(x);
    const double g = self.upstream()[0];
    for (double& v : gx) v += g;
  });
}

Tensor add_n(const std::vector<Tensor>& terms) {
  if (terms.empty()) throw ValueError("add_n: no terms");
  const Shape& shape = terms.front().shape();
  std::vector<double> out(terms.front().numel(), 0.0);
  for (const auto& t : terms) {
    if (t.shape() != shape) {
      throw ShapeError("add_n: shapes " + shape_str(shape) + " and " + shape_str(t.shape()) +
                       " differ");
    }
    auto d = t.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += d[i];
  }
  return Tensor::make_result(shape, std::move(out), terms, [terms](const Node& self) {
    auto g = self.upstream();
    for (const auto& t : terms) {
      auto gt = grad_sink(t);
      for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[i];
    }
  });
}

Tensor add_row_broadcast(const Tensor& x, const Tensor& row) {
  expect_rank(x, 2, "add_row_broadcast", "matrix");
  expect_rank(row, 1, "add_row_broadcast", "row");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (row.dim(0) != c) dim_mismatch("add_row_broadcast", "row length vs columns", row.dim(0), c);
  auto in = x.data();
  auto v = row.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = v[j] + in[i * c + j];
  }
  return Tensor::make_result({r, c}, std::move(out), {x, row}, [x, row, r, c](const Node& self) {
    auto g = self.upstream();
    if (auto gx = grad_sink(x); !gx.empty()) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    }
    if (auto gr = grad_sink(row); !gr.empty()) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) gr[j] += g[i * c + j];
      }
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ValueError("concat_rows: no inputs");
  Shape shape = parts.front().shape();
  if (shape.empty()) throw ShapeError("concat_rows: scalars cannot be concatenated");
  std::size_t rows = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != shape.size() || !std::equal(s.begin() + 1, s.end(), shape.begin() + 1)) {
      throw ShapeError("concat_rows: trailing extents " + shape_str(s) + " do not match " +
                       shape_str(shape));
    }
    rows += s[0];
  }
  shape[0] = rows;
  std::vector<double> out;
  out.reserve(shape_numel(shape));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), parts, [parts](const Node& self) {
    auto g = self.upstream();
    std::size_t offset = 0;
    for (const auto& p : parts) {
      auto gp = grad_sink(p);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
      offset += p.numel();
    }
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  expect_rank(x, 2, "slice_cols", "input");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (begin > end || end > c) {
    throw ShapeError("slice_cols: column range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") outside " + std::to_string(c) + " columns");
  }
  const std::size_t w = end - begin;
  auto in = x.data();
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(in.data() + i * c + begin, w, out.data() + i * w);
  }
  return Tensor::make_result({r, w}, std::move(out), {x}, [x, r, c, begin, w](const Node& self) {
    auto gx = grad_sink(x);
    auto g = self.upstream();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < w; ++j) gx[i * c + begin + j] += g[i * w + j];
    }
  });
}

Tensor slice_flat(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t n = x.numel();
  if (begin > end || end > n) {
    throw ShapeError("slice_flat: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") outside " + std::to_string(n) + " elements");
  }
  auto in = x.data();
  std::vector<double> out(in.begin() + static_cast<std::ptrdiff_t>(begin),
                          in.begin() + static_cast<std::ptrdiff_t>(end));
  return Tensor::make_result({end - begin}, std::move(out), {x}, [x, begin](const Node& self) {
    auto gx = grad_sink(x);
    auto g = self.upstream();
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin + i] += g[i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [x](const Node& self) {
    auto gx = grad_sink(x);
    auto g = self.upstream();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
}

}  // namespace metaanchor::ops
