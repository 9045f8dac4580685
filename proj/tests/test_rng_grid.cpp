#include <doctest.h>

#include <cmath>

#include "hmpcnn/grid.hpp"
#include "hmpcnn/rng.hpp"

using namespace hmpcnn;

TEST_CASE("streams are deterministic and index-independent") {
  rng::Stream a(42, rng::Tag::sample_pixels, 7);
  rng::Stream b(42, rng::Tag::sample_pixels, 7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  rng::Stream c(42, rng::Tag::sample_pixels, 8);
  rng::Stream d(42, rng::Tag::sample_label, 7);
  rng::Stream e(43, rng::Tag::sample_pixels, 7);
  rng::Stream f(42, rng::Tag::sample_pixels, 7);
  bool all_same_c = true, all_same_d = true, all_same_e = true;
  for (int i = 0; i < 16; ++i) {
    const std::uint64_t v = f.next_u64();
    all_same_c &= (c.next_u64() == v);
    all_same_d &= (d.next_u64() == v);
    all_same_e &= (e.next_u64() == v);
  }
  CHECK_FALSE(all_same_c);
  CHECK_FALSE(all_same_d);
  CHECK_FALSE(all_same_e);
}

TEST_CASE("uniform doubles land in [0,1) with sane mean") {
  rng::Stream st(1, rng::Tag::generic, 0);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double v = st.next_double();
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
    sum += v;
  }
  CHECK(std::abs(sum / 20000 - 0.5) < 0.02);
}

TEST_CASE("gaussian moments") {
  rng::Stream st(2, rng::Tag::generic, 0);
  double s1 = 0.0, s2 = 0.0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double v = st.next_gaussian();
    s1 += v;
    s2 += v * v;
  }
  CHECK(std::abs(s1 / n) < 0.03);
  CHECK(std::abs(s2 / n - 1.0) < 0.05);
}

TEST_CASE("grid validates pixels and dimensions") {
  CHECK_THROWS(ImageGrid(0, 3));
  CHECK_THROWS(ImageGrid(2, 2, {0.0, 0.5, 1.0}));          // wrong count
  CHECK_THROWS(ImageGrid(2, 2, {0.0, 0.5, 1.0, 1.5}));     // out of range
  CHECK_THROWS(ImageGrid(2, 2, {0.0, 0.5, 1.0, std::nan("")}));
  ImageGrid g(2, 3, {0.0, 0.1, 0.2, 0.3, 0.4, 0.5});
  CHECK(g.at(0, 2) == 0.2);
  CHECK(g.at(1, 0) == 0.3);
  CHECK_THROWS(g.set(0, 0, -0.1));
}

TEST_CASE("random grids stay in range") {
  rng::Stream st(3, rng::Tag::generic, 0);
  const ImageGrid u = ImageGrid::random_uniform(5, 7, st);
  const ImageGrid t = ImageGrid::random_texture(5, 7, st);
  for (double v : u.pixels()) CHECK((v >= 0.0 && v <= 1.0));
  for (double v : t.pixels()) CHECK((v >= 0.0 && v <= 1.0));
}
