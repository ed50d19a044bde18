#include "convkit/tensor.hpp"

namespace convkit {

std::string Shape::str() const {
  return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c) +
         "x" + std::to_string(n);
}

}  // namespace convkit
