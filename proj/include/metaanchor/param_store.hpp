// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "metaanchor/tensor.hpp"

namespace metaanchor {

// Named trainable parameters. Iteration is sorted by identifier.
class ParamStore {
 public:
  // Registers a parameter and marks it requires_grad. Throws on duplicates.
  Tensor& add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }
  std::size_t total_elements() const;

  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  // Binary "MANC" format: magic, u32 version, then one record per parameter
  // (u32 name length, UTF-8 name, u32 rank, u64 extents, f64 payload), all
  // little-endian, records in identifier order.
  void save(const std::filesystem::path& path) const;
  static ParamStore load(const std::filesystem::path& path);

  // Copies values from `other` into existing parameters; names and shapes must match.
  void assign_values(const ParamStore& other);

 private:
  std::map<std::string, Tensor> params_;
};

inline constexpr std::uint32_t kParamFormatVersion = 1;

// SGD with classical momentum:
//   v <- momentum * v + grad ; p <- p - lr * v ; grad <- 0
class Sgd {
 public:
  Sgd(double lr, double momentum);

  // Throws NumericError naming the first parameter with a non-finite gradient;
  // in that case no parameter is modified.
  void step(ParamStore& store);

  double lr() const { return lr_; }
  void set_lr(double lr);

 private:
  double lr_;
  double momentum_;
  std::map<std::string, std::vector<double>> velocity_;
};

}  // namespace metaanchor
