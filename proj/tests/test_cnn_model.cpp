#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "hmpcnn/cnn_model.hpp"
#include "hmpcnn/io.hpp"
#include "hmpcnn/rng.hpp"

using namespace hmpcnn;

namespace {

ImageGrid random_image(int d1, int d2, std::uint64_t seed, std::uint64_t idx = 0) {
  rng::Stream st(seed, rng::Tag::generic, idx);
  return ImageGrid::random_uniform(d1, d2, st);
}

CnnWeights random_cnn_weights(const CnnArchitecture& arch, std::uint64_t seed) {
  CnnWeights w = zero_cnn_weights(arch);
  rng::Stream st(seed, rng::Tag::generic, 1);
  for (auto& l : w.layers) {
    for (auto& v : l.w) v = st.next_uniform(-0.7, 0.7);
    for (auto& v : l.bias) v = st.next_uniform(-0.3, 0.3);
  }
  for (auto& v : w.out) v = st.next_uniform(-1.0, 1.0);
  return w;
}

FnnWeights random_fnn_weights(const FnnArchitecture& arch, std::uint64_t seed) {
  FnnWeights w = zero_fnn_weights(arch);
  rng::Stream st(seed, rng::Tag::generic, 2);
  for (auto& l : w.layers) {
    for (auto& v : l.w) v = st.next_uniform(-0.8, 0.8);
    for (auto& v : l.bias) v = st.next_uniform(-0.4, 0.4);
  }
  for (auto& v : w.out) v = st.next_uniform(-1.0, 1.0);
  w.out_bias = st.next_uniform(-0.5, 0.5);
  return w;
}

// reference forward pass with explicit zero-extended channel maps instead of
// dropped taps; loop order matches the production kernel so values must be
// bitwise identical
double padded_reference_forward(const CnnArchitecture& arch, const CnnWeights& w,
                                const ImageGrid& img) {
  const int d1 = arch.d1, d2 = arch.d2;
  const int mmax = *std::max_element(arch.filter_sizes.begin(), arch.filter_sizes.end());
  const int e1 = d1 + mmax, e2 = d2 + mmax;  // zero margin on the high side
  auto idx = [&](int s, int i, int j) { return (static_cast<std::size_t>(s) * e1 + i) * e2 + j; };
  std::vector<double> prev(idx(0, 0, 0) + static_cast<std::size_t>(e1) * e2, 0.0);
  for (int i = 0; i < d1; ++i) {
    for (int j = 0; j < d2; ++j) prev[idx(0, i, j)] = img.at(i, j);
  }
  int k_prev = 1;
  for (int l = 0; l < arch.layers(); ++l) {
    const int k = arch.channels[l];
    const int m = arch.filter_sizes[l];
    std::vector<double> cur(static_cast<std::size_t>(k) * e1 * e2, 0.0);
    for (int s2 = 0; s2 < k; ++s2) {
      for (int i = 0; i < d1; ++i) {
        for (int j = 0; j < d2; ++j) {
          double z = w.layers[l].bias[s2];
          for (int s1 = 0; s1 < k_prev; ++s1) {
            for (int t1 = 0; t1 < m; ++t1) {
              for (int t2 = 0; t2 < m; ++t2) {
                // no tap dropping: out-of-grid reads hit explicit zeros
                z += w.layers[l].w[((static_cast<std::size_t>(s2) * k_prev + s1) * m + t1) * m +
                                   t2] *
                     prev[idx(s1, i + t1, j + t2)];
              }
            }
          }
          cur[idx(s2, i, j)] = z > 0.0 ? z : 0.0;
        }
      }
    }
    prev = std::move(cur);
    k_prev = k;
  }
  const int m_last = arch.filter_sizes[arch.layers() - 1];
  bool first = true;
  double best = 0.0;
  for (int i = 0; i + m_last <= d1; ++i) {
    for (int j = 0; j + m_last <= d2; ++j) {
      double v = 0.0;
      for (int s2 = 0; s2 < k_prev; ++s2) v += w.out[s2] * prev[idx(s2, i, j)];
      if (first || v > best) {
        best = v;
        first = false;
      }
    }
  }
  return best;
}

}  // namespace

TEST_CASE("convolutional forward basics") {
  CnnArchitecture arch{4, 4, {2, 3}, {2, 2}};

  SUBCASE("all-zero weights give zero") {
    CnnWeights w = zero_cnn_weights(arch);
    w.out = {1.0, -2.0, 0.5};
    CHECK(cnn_forward(arch, w, random_image(4, 4, 1)) == 0.0);
  }

  SUBCASE("1x1 identity filter reads off the max pixel") {
    CnnArchitecture a1{4, 4, {1}, {1}};
    CnnWeights w = zero_cnn_weights(a1);
    w.layers[0].w[0] = 1.0;
    w.out[0] = 1.0;
    const ImageGrid img = random_image(4, 4, 2);
    const double brute = *std::max_element(img.pixels().begin(), img.pixels().end());
    CHECK(cnn_forward(a1, w, img) == brute);
  }

  SUBCASE("identity stacks of different depth agree") {
    auto identity_stack = [&](int depth) {
      CnnArchitecture a{4, 4, std::vector<int>(depth, 1), std::vector<int>(depth, 1)};
      CnnWeights w = zero_cnn_weights(a);
      for (auto& l : w.layers) l.w[0] = 1.0;
      w.out[0] = 1.0;
      return cnn_forward(a, w, random_image(4, 4, 3));
    };
    CHECK(identity_stack(3) == identity_stack(1));
  }

  SUBCASE("shape mismatches are rejected") {
    CnnWeights w = zero_cnn_weights(arch);
    w.layers[0].w.pop_back();
    CHECK_THROWS(cnn_forward(arch, w, random_image(4, 4, 4)));
    CnnWeights w2 = zero_cnn_weights(arch);
    CHECK_THROWS(cnn_forward(arch, w2, random_image(5, 4, 4)));
  }
}

TEST_CASE("dropped taps equal explicit zero padding bitwise") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    CnnArchitecture arch{5, 6, {3, 2, 4}, {2, 3, 2}};
    const CnnWeights w = random_cnn_weights(arch, seed);
    const ImageGrid img = random_image(5, 6, 100 + seed);
    const double a = cnn_forward(arch, w, img);
    const double b = padded_reference_forward(arch, w, img);
    CHECK(a == b);  // bitwise
  }
}

TEST_CASE("shifting content away from the clipped boundary cannot lower the max") {
  // nonnegative filters, zero biases
  CnnArchitecture arch{6, 6, {2, 2}, {2, 2}};
  CnnWeights w = zero_cnn_weights(arch);
  rng::Stream st(9, rng::Tag::generic, 0);
  for (auto& l : w.layers) {
    for (auto& v : l.w) v = st.next_double();
  }
  for (auto& v : w.out) v = st.next_double();
  for (int rep = 0; rep < 5; ++rep) {
    ImageGrid a(6, 6);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) a.set(i, j, st.next_double());
    }
    ImageGrid b(6, 6);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) b.set(i + 1, j + 1, a.at(i, j));
    }
    CHECK(cnn_forward(arch, w, b) >= cnn_forward(arch, w, a) - 1e-12);
  }
}

TEST_CASE("scalar head evaluates the recursion") {
  FnnArchitecture arch{{2, 2}};

  SUBCASE("zero weights return the output bias") {
    FnnWeights w = zero_fnn_weights(arch);
    w.out_bias = 0.37;
    CHECK(fnn_forward(arch, w, 5.0) == 0.37);
  }

  SUBCASE("pass-through pair reproduces the identity") {
    // sigma(x) - sigma(-x) = x
    FnnArchitecture a{{2}};
    FnnWeights w = zero_fnn_weights(a);
    w.layers[0].w = {1.0, -1.0};
    w.out = {1.0, -1.0};
    for (double z : {-3.5, -1.0, 0.0, 0.25, 7.0}) {
      CHECK(fnn_forward(a, w, z) == z);
    }
  }

  SUBCASE("single relu unit") {
    FnnArchitecture a{{1}};
    FnnWeights w = zero_fnn_weights(a);
    w.layers[0].w = {1.0};
    w.layers[0].bias = {-1.0};
    w.out = {1.0};
    CHECK(fnn_forward(a, w, 3.0) == 2.0);
    CHECK(fnn_forward(a, w, 0.5) == 0.0);
  }
}

TEST_CASE("truncated prediction and the sign classifier") {
  // head that multiplies by 10 so the clamp engages
  CnnArchitecture ca{2, 2, {1}, {1}};
  CnnWeights cw = zero_cnn_weights(ca);
  cw.layers[0].w[0] = 1.0;
  cw.out[0] = 1.0;
  FnnArchitecture fa{{2}};
  FnnWeights fw = zero_fnn_weights(fa);
  fw.layers[0].w = {1.0, -1.0};
  fw.out = {10.0, -10.0};  // 10x identity

  const ImageGrid bright(2, 2, {1.0, 1.0, 1.0, 1.0});
  CHECK(predict(ca, cw, fa, fw, {2.0}, bright) == 2.0);

  fw.out = {-10.0, 10.0};  // -10x
  CHECK(predict(ca, cw, fa, fw, {2.0}, bright) == -2.0);

  fw.out = {-0.3, 0.3};
  CHECK(predict(ca, cw, fa, fw, {2.0}, bright) == doctest::Approx(-0.3));
  CHECK(sign_classify(predict(ca, cw, fa, fw, {2.0}, bright)) == -1);
  CHECK(sign_classify(0.0) == +1);

  Predictor p{ca, fa, cw, fw, {2.0}};
  CHECK(p.classify(bright) == -1);
}

TEST_CASE("output magnitude never exceeds beta") {
  CnnArchitecture ca{4, 4, {3, 2}, {2, 2}};
  FnnArchitecture fa{{4, 4}};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Predictor p{ca, fa, random_cnn_weights(ca, seed), random_fnn_weights(fa, seed), {1.5}};
    for (int rep = 0; rep < 10; ++rep) {
      CHECK(std::abs(p(random_image(4, 4, 200 + seed, rep))) <= 1.5);
    }
  }
}

namespace {

// independent route: assign levels to explicit per-level layer ranges
int filter_level_by_ranges(int s, int level, int q) {
  int start = 1;
  for (int k = 1; k <= level; ++k) {
    const int len = (1 << (2 * (level - k))) * q + 1;
    if (s < start + len) return k;
    start += len;
  }
  return level;
}

}  // namespace

TEST_CASE("filter-size schedule") {
  SUBCASE("worked example: level 2, one block per node") {
    CHECK(conv_layer_count(2, 1) == 7);
    const std::vector<int> expect = {2, 2, 2, 2, 2, 4, 4};
    for (int s = 1; s <= 7; ++s) {
      CHECK((1 << filter_level(s, 2, 1)) == expect[s - 1]);
    }
  }

  SUBCASE("level 1 block count 3 gives 4 layers") {
    CHECK(conv_layer_count(1, 3) == 4);
  }

  SUBCASE("edges and monotonicity") {
    for (int level : {1, 2, 3}) {
      for (int q : {1, 2, 5}) {
        const int l1 = conv_layer_count(level, q);
        CHECK(filter_level(1, level, q) == 1);
        CHECK(filter_level(l1, level, q) == level);
        int prev = 1;
        for (int s = 1; s <= l1; ++s) {
          const int pi = filter_level(s, level, q);
          CHECK(pi >= prev);
          prev = pi;
        }
        CHECK_THROWS(filter_level(0, level, q));
        CHECK_THROWS(filter_level(l1 + 1, level, q));
      }
    }
  }

  SUBCASE("matches an independent range-based route") {
    rng::Stream st(5, rng::Tag::generic, 0);
    for (int trial = 0; trial < 50; ++trial) {
      const int level = 1 + static_cast<int>(st.next_below(4));
      const int q = 1 + static_cast<int>(st.next_below(5));
      const int l1 = conv_layer_count(level, q);
      const int s = 1 + static_cast<int>(st.next_below(static_cast<std::uint64_t>(l1)));
      CHECK(filter_level(s, level, q) == filter_level_by_ranges(s, level, q));
    }
  }
}

TEST_CASE("schedule assembly from the sample size") {
  ScheduleConstants c;
  c.c1 = 1.0;
  c.c2 = 1.0;
  c.c3 = 1.0;
  c.c4 = 6;
  c.c5 = 5;

  SUBCASE("head depth at n=16") {
    const Schedule s = architecture_schedule(16, 1.0, 1, 8, 8, c, 1.0);
    CHECK(s.fnn.layers() == 2);  // ceil(16^{1/4}) = 2
    CHECK(s.beta.beta == doctest::Approx(std::log(16.0)));
  }

  SUBCASE("scale 1 keeps the raw block count") {
    const Schedule s = architecture_schedule(64, 1.0, 1, 8, 8, c, 1.0);
    // q = ceil(64^{1/3}) = 4, L1 = 4 + 1
    CHECK(s.blocks_per_level == 4);
    CHECK(s.cnn.layers() == 5);
    for (int m : s.cnn.filter_sizes) CHECK(m == 2);
    for (int k : s.cnn.channels) CHECK(k == 6);
  }

  SUBCASE("small scales floor at one block") {
    const Schedule s = architecture_schedule(4096, 1.0, 2, 8, 8, c, 0.05);
    CHECK(s.blocks_per_level == 1);
    CHECK(s.cnn.layers() == 7);
    CHECK(s.fnn.layers() >= 1);
    CHECK(s.scale == 0.05);
    // filter sizes bounded by the window and the dims
    for (int m : s.cnn.filter_sizes) CHECK(m <= 4);
  }

  SUBCASE("rejects windows larger than the image") {
    CHECK_THROWS(architecture_schedule(64, 1.0, 3, 4, 4, c, 1.0));
  }
}

TEST_CASE("predictor container round trip with checksum") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "hmpcnn_cnn_io_test";
  fs::create_directories(dir);
  CnnArchitecture ca{4, 4, {3, 2}, {2, 2}};
  FnnArchitecture fa{{4, 3}};
  Predictor p{ca, fa, random_cnn_weights(ca, 5), random_fnn_weights(fa, 6), {3.25}};
  const std::string path = (dir / "weights.bin").string();
  io::save_predictor(p, path);
  const Predictor q = io::load_predictor(path);
  CHECK(q.beta.beta == p.beta.beta);
  CHECK(q.cnn_arch.channels == p.cnn_arch.channels);
  CHECK(q.cnn_arch.filter_sizes == p.cnn_arch.filter_sizes);
  CHECK(q.fnn_arch.widths == p.fnn_arch.widths);
  for (std::size_t l = 0; l < p.cnn.layers.size(); ++l) {
    CHECK(q.cnn.layers[l].w == p.cnn.layers[l].w);  // bit-exact
    CHECK(q.cnn.layers[l].bias == p.cnn.layers[l].bias);
  }
  CHECK(q.fnn.out == p.fnn.out);
  CHECK(q.fnn.out_bias == p.fnn.out_bias);

  // corrupting a payload byte trips the checksum
  std::string bytes = io::read_text(path);
  bytes[bytes.size() / 2] ^= 0x40;
  io::atomic_write_text(path, bytes);
  CHECK_THROWS(io::load_predictor(path));
  fs::remove_all(dir);
}
