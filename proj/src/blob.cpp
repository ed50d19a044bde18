#include "convkit/blob.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace convkit {

namespace {

static_assert(std::numeric_limits<float>::is_iec559, "IEEE-754 float required");

uint64_t to_le64(uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  uint64_t r = 0;
  for (int k = 0; k < 8; ++k) r |= ((v >> (8 * k)) & 0xffULL) << (8 * (7 - k));
  return r;
}

uint32_t to_le32(uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) |
         (v >> 24);
}

}  // namespace

void write_blob(const TensorF& t, std::ostream& os) {
  const Shape& s = t.shape();
  uint64_t dims[4] = {static_cast<uint64_t>(s.h), static_cast<uint64_t>(s.w),
                      static_cast<uint64_t>(s.c), static_cast<uint64_t>(s.n)};
  for (uint64_t d : dims) {
    uint64_t le = to_le64(d);
    os.write(reinterpret_cast<const char*>(&le), 8);
  }
  for (int64_t k = 0; k < t.size(); ++k) {
    uint32_t bits;
    std::memcpy(&bits, &t.data()[k], 4);
    bits = to_le32(bits);
    os.write(reinterpret_cast<const char*>(&bits), 4);
  }
  if (!os) throw DataError("blob write failed");
}

void write_blob(const TensorF& t, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path + " for writing");
  write_blob(t, f);
}

TensorF read_blob(std::istream& is, const std::string& what) {
  uint64_t dims[4];
  for (auto& d : dims) {
    uint64_t le = 0;
    is.read(reinterpret_cast<char*>(&le), 8);
    d = to_le64(le);
  }
  if (!is) throw DataError("truncated blob header in " + what);
  Shape s(static_cast<int64_t>(dims[0]), static_cast<int64_t>(dims[1]),
          static_cast<int64_t>(dims[2]), static_cast<int64_t>(dims[3]));
  if (!s.valid() || s.elems() > (int64_t(1) << 34)) {
    throw DataError("bad blob dimensions in " + what + ": " + s.str());
  }
  TensorF t(s);
  for (int64_t k = 0; k < t.size(); ++k) {
    uint32_t bits = 0;
    is.read(reinterpret_cast<char*>(&bits), 4);
    bits = to_le32(bits);
    std::memcpy(&t.data()[k], &bits, 4);
  }
  if (!is) throw DataError("truncated blob data in " + what);
  return t;
}

TensorF read_blob(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  return read_blob(f, path);
}

}  // namespace convkit
