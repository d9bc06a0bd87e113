// SPDX-License-Identifier: Apache-2.0
#include "metaanchor/param_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "metaanchor/error.hpp"

namespace metaanchor {

namespace {

constexpr char kMagic[4] = {'M', 'A', 'N', 'C'};

static_assert(std::endian::native == std::endian::little,
              "parameter files are written little-endian; add byte swapping for this target");

template <typename T>
void write_pod(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
bool read_pod(std::istream& is, T& value) {
  return static_cast<bool>(is.read(reinterpret_cast<char*>(&value), sizeof(T)));
}

}  // namespace

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  if (name.empty()) throw ValueError("parameter identifier must be nonempty");
  if (params_.count(name)) throw ValueError("duplicate parameter identifier '" + name + "'");
  if (!value.is_leaf()) value = value.detach();
  value.set_requires_grad(true);
  return params_.emplace(name, std::move(value)).first->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValueError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValueError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

void ParamStore::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(kMagic, 4);
  write_pod<std::uint32_t>(os, kParamFormatVersion);
  for (const auto& [name, t] : params_) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) write_pod<std::uint64_t>(os, e);
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

ParamStore ParamStore::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open parameter file '" + path.string() + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("'" + path.string() + "' is not a parameter file (bad magic)");
  }
  std::uint32_t version = 0;
  if (!read_pod(is, version) || version != kParamFormatVersion) {
    throw IoError("'" + path.string() + "': unsupported format version " + std::to_string(version));
  }
  ParamStore store;
  while (is.peek() != std::char_traits<char>::eof()) {
    std::uint32_t name_len = 0;
    if (!read_pod(is, name_len) || name_len == 0 || name_len > (1u << 16)) {
      throw IoError("'" + path.string() + "': corrupt record header");
    }
    std::string name(name_len, '\0');
    std::uint32_t rank = 0;
    if (!is.read(name.data(), name_len) || !read_pod(is, rank) || rank > 8) {
      throw IoError("'" + path.string() + "': corrupt record for '" + name + "'");
    }
    Shape shape(rank);
    for (auto& e : shape) {
      std::uint64_t v = 0;
      if (!read_pod(is, v)) throw IoError("'" + path.string() + "': truncated extents for " + name);
      e = static_cast<std::size_t>(v);
    }
    std::vector<double> values(shape_numel(shape));
    if (!is.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(double)))) {
      throw IoError("'" + path.string() + "': truncated payload for " + name);
    }
    store.add(name, Tensor::from(std::move(shape), std::move(values)));
  }
  return store;
}

void ParamStore::assign_values(const ParamStore& other) {
  for (auto& [name, t] : params_) {
    const Tensor& src = other.get(name);
    if (src.shape() != t.shape()) {
      throw ShapeError("parameter '" + name + "' has shape " + shape_str(src.shape()) +
                       ", expected " + shape_str(t.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), t.mutable_data().begin());
  }
  if (other.size() != size()) {
    throw ValueError("parameter set mismatch: " + std::to_string(other.size()) + " stored vs " +
                     std::to_string(size()) + " expected");
  }
}

Sgd::Sgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValueError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValueError("momentum must lie in [0,1)");
}

void Sgd::set_lr(double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValueError("learning rate must be positive");
  lr_ = lr;
}

void Sgd::step(ParamStore& store) {
  for (auto& [name, t] : store) {
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + name + "'");
    }
  }
  for (auto& [name, t] : store) {
    auto g = t.grad();
    if (g.empty()) continue;
    auto& v = velocity_[name];
    if (v.size() != g.size()) v.assign(g.size(), 0.0);
    auto p = t.mutable_data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum_ * v[i] + g[i];
      p[i] -= lr_ * v[i];
    }
    t.zero_grad();
  }
}

}  // namespace metaanchor
