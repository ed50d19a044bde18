#pragma once

#include <iosfwd>
#include <string>

#include "convkit/tensor.hpp"

namespace convkit {

// Raw tensor blob: four unsigned 64-bit little-endian dims (H, W, C, N)
// followed by H*W*C*N little-endian IEEE-754 float32 values in flat
// (height-fastest) order.
void write_blob(const TensorF& t, std::ostream& os);
void write_blob(const TensorF& t, const std::string& path);

TensorF read_blob(std::istream& is, const std::string& what = "blob");
TensorF read_blob(const std::string& path);

}  // namespace convkit
