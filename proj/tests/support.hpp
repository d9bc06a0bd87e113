// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the unit and acceptance tests: random tensors, central
// finite-difference gradient checks, scratch directories, KS statistics.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "metaanchor/tensor.hpp"

namespace testing_support {

using metaanchor::Shape;
using metaanchor::Tensor;

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0, bool requires_grad = false) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(metaanchor::shape_numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from(shape, std::move(v), requires_grad);
}

// Largest per-tensor relative error ||a - n|| / max(||a||, ||n||) between the
// backward() gradient and central differences of `loss` over `params`.
inline double grad_check(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                         double h = 1e-5) {
  for (auto& p : params) p.zero_grad();
  metaanchor::backward(loss());
  double worst = 0.0;
  for (auto& p : params) {
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    std::vector<double> numeric(p.numel());
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double saved = values[i];
      double fp, fm;
      {
        metaanchor::NoGradGuard ng;
        values[i] = saved + h;
        fp = loss().item();
        values[i] = saved - h;
        fm = loss().item();
      }
      values[i] = saved;
      numeric[i] = (fp - fm) / (2.0 * h);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double a = analytic.empty() ? 0.0 : analytic[i];
      diff += (a - numeric[i]) * (a - numeric[i]);
      na += a * a;
      nn += numeric[i] * numeric[i];
    }
    const double denom = std::max(std::sqrt(na), std::sqrt(nn));
    if (denom > 0.0) worst = std::max(worst, std::sqrt(diff) / denom);
  }
  return worst;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("metaanchor_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

// Asymptotic critical value of the KS statistic at alpha = 0.01.
inline double ks_critical_01(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

inline std::string read_file(const std::filesystem::path& p) {
  std::FILE* f = std::fopen(p.c_str(), "rb");
  if (f == nullptr) return {};
  std::string s;
  char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) s.append(buf, got);
  std::fclose(f);
  return s;
}

}  // namespace testing_support
