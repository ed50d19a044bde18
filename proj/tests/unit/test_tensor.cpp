#include <cstdio>
#include <fstream>
#include <sstream>

#include "convkit/blob.hpp"
#include "convkit/rng.hpp"
#include "convkit/tensor.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace convkit;

TEST_CASE("flat order visits height first") {
  // 2x1 column
  TensorF col(Shape(2, 1, 1, 1), {1.f, 2.f});
  CHECK(col.vec() == std::vector<float>{1.f, 2.f});

  // 2x2 with rows (a,c),(b,d): flat order a, b, c, d
  TensorF m(Shape(2, 2, 1, 1));
  m.at(0, 0) = 1.f;  // a
  m.at(1, 0) = 2.f;  // b
  m.at(0, 1) = 3.f;  // c
  m.at(1, 1) = 4.f;  // d
  CHECK(m.vec() == std::vector<float>{1.f, 2.f, 3.f, 4.f});

  // 1x1x2: channels follow spatial dims
  TensorF ch(Shape(1, 1, 2, 1));
  ch.at(0, 0, 0) = 5.f;
  ch.at(0, 0, 1) = 6.f;
  CHECK(ch.vec() == std::vector<float>{5.f, 6.f});
}

TEST_CASE("indexing round trip") {
  Shape s(3, 4, 2, 2);
  TensorF t(s);
  float v = 0.f;
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c)
      for (int64_t j = 0; j < s.w; ++j)
        for (int64_t i = 0; i < s.h; ++i) t.at(i, j, c, n) = v++;
  v = 0.f;
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c)
      for (int64_t j = 0; j < s.w; ++j)
        for (int64_t i = 0; i < s.h; ++i) CHECK(t.at(i, j, c, n) == v++);
}

TEST_CASE("inner product") {
  CHECK(inner(TensorF::filled(Shape(2, 2), 1.f), TensorF::filled(Shape(2, 2), 1.f)) ==
        doctest::Approx(4.f));
  TensorF zero(Shape(3, 2));
  Xoshiro256 rng(7);
  TensorF any = testing::random_uniform<float>(Shape(3, 2), rng);
  CHECK(inner(zero, any) == 0.f);
  TensorF a(Shape(2, 1, 1, 1), {1.f, 2.f});
  TensorF b(Shape(2, 1, 1, 1), {3.f, 4.f});
  CHECK(inner(a, b) == doctest::Approx(11.f));
  CHECK_THROWS_AS(inner(a, zero), ShapeError);
}

TEST_CASE("reshape preserves flat order") {
  TensorF t(Shape(4, 1, 1, 1), {1.f, 2.f, 3.f, 4.f});
  TensorF r = reshaped(t, Shape(2, 2, 1, 1));
  CHECK(r.vec() == t.vec());
  TensorF back = reshaped(r, Shape(4, 1, 1, 1));
  CHECK(back.vec() == t.vec());
  CHECK(back.shape() == t.shape());
  CHECK_THROWS_AS(reshaped(t, Shape(3, 1, 1, 1)), ShapeError);
}

TEST_CASE("reshape to filter-matrix layout") {
  // A 2x2x2 block reshaped to 4x2 must put channel 0's samples in column
  // 0 and channel 1's in column 1, in flat order.
  TensorF t(Shape(2, 2, 2, 1));
  for (int64_t k = 0; k < 8; ++k) t[k] = static_cast<float>(k);
  TensorF m = reshaped(t, Shape(4, 2, 1, 1));
  for (int64_t d = 0; d < 2; ++d) {
    for (int64_t j = 0; j < 2; ++j) {
      for (int64_t i = 0; i < 2; ++i) {
        CHECK(m.at(i + 2 * j, d) == t.at(i, j, d, 0));
      }
    }
  }
}

TEST_CASE("inner equals dot of flattened data for random tensors") {
  Xoshiro256 rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    Shape s(1 + static_cast<int64_t>(rng.below(4)),
            1 + static_cast<int64_t>(rng.below(4)),
            1 + static_cast<int64_t>(rng.below(3)),
            1 + static_cast<int64_t>(rng.below(2)));
    TensorD p = testing::random_uniform<double>(s, rng);
    TensorD y = testing::random_uniform<double>(s, rng);
    double dot = 0;
    for (int64_t k = 0; k < p.size(); ++k) dot += p.vec()[k] * y.vec()[k];
    CHECK(inner(p, y) == doctest::Approx(dot).epsilon(1e-12));
  }
}

TEST_CASE("blob round trip") {
  Xoshiro256 rng(3);
  TensorF t = testing::random_uniform<float>(Shape(3, 2, 4, 2), rng);
  std::stringstream ss;
  write_blob(t, ss);
  TensorF u = read_blob(ss, "test");
  CHECK(u.shape() == t.shape());
  CHECK(u.vec() == t.vec());
}

TEST_CASE("blob header layout") {
  TensorF t(Shape(2, 1, 1, 1), {1.0f, -2.5f});
  std::stringstream ss;
  write_blob(t, ss);
  std::string bytes = ss.str();
  REQUIRE(bytes.size() == 32 + 8);
  // dims as little-endian u64
  CHECK(static_cast<unsigned char>(bytes[0]) == 2);
  for (int k = 1; k < 8; ++k) CHECK(bytes[static_cast<size_t>(k)] == 0);
  CHECK(static_cast<unsigned char>(bytes[8]) == 1);
  CHECK(static_cast<unsigned char>(bytes[16]) == 1);
  CHECK(static_cast<unsigned char>(bytes[24]) == 1);
  // 1.0f little-endian
  CHECK(static_cast<unsigned char>(bytes[32 + 3]) == 0x3f);
  CHECK(static_cast<unsigned char>(bytes[32 + 2]) == 0x80);
}

TEST_CASE("truncated blob raises a data error") {
  TensorF t(Shape(4, 4));
  std::stringstream ss;
  write_blob(t, ss);
  std::string bytes = ss.str().substr(0, 40);
  std::stringstream cut(bytes);
  CHECK_THROWS_AS(read_blob(cut, "cut"), DataError);
}
