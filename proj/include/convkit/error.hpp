#pragma once

#include <stdexcept>
#include <string>

namespace convkit {

// Incompatible tensor shapes or block hyperparameters.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed files, missing blobs, bad labels and the like.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values where finite ones are required (NaN loss, inf gradient).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace convkit
