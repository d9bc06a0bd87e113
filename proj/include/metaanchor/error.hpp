// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace metaanchor {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents or matrix dimensions that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside an operation's domain (nonpositive box side, empty set, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf reached a place that must stay finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace metaanchor
