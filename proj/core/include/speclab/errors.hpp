#pragma once

#include <stdexcept>
#include <string>

namespace speclab {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Model construction or lookup failure (unknown context, bad row).
class ModelError : public Error {
 public:
  using Error::Error;
};

/// A configured resource cap (table size, enumeration size) was exceeded.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// Mismatched vector dimensions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// The min-kernel is undefined because the two distributions are disjoint.
class DegenerateKernelError : public Error {
 public:
  using Error::Error;
};

/// A fallback distribution flagged as unused (zero rejection mass) was sampled.
class DegenerateFallbackError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument outside a more specific category.
class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

/// Configuration file or override problem; message carries the key path.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace speclab
