#include <doctest.h>

#include <cmath>
#include <vector>

#include "hmpcnn/constructions.hpp"
#include "hmpcnn/training.hpp"

using namespace hmpcnn;

namespace {

double f_logit(double z) { return std::log(z / (1.0 - z)); }

std::vector<double> grid(double lo, double hi, int n) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = lo + (hi - lo) * i / (n - 1);
  return g;
}

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return sxy / sxx;
}

}  // namespace

TEST_CASE("hat functions: values and dual form") {
  for (int K : {6, 12}) {
    for (int k = -1; k <= K + 1; ++k) {
      CHECK(hat_basis_tent(static_cast<double>(k) / K, k, K) == doctest::Approx(1.0));
      for (int j = -2; j <= K + 2; ++j) {
        if (j != k) {
          CHECK(hat_basis_tent(static_cast<double>(j) / K, k, K) ==
                doctest::Approx(0.0).epsilon(1e-12));
        }
      }
      CHECK(hat_basis_tent((2.0 * k + 1.0) / (2.0 * K), k, K) == doctest::Approx(0.5));
    }
    for (double z : grid(-1.0, 2.0, 5000)) {
      for (int k : {-1, 0, 1, K / 2, K, K + 1}) {
        CHECK(std::abs(hat_basis_tent(z, k, K) - hat_basis_relu(z, k, K)) < 1e-12);
      }
    }
  }
}

TEST_CASE("hat basis knots") {
  for (int K : {6, 12, 24, 48}) {
    const HatBasis b = make_hat_basis(K);
    CHECK(b.a(-1) == b.a(0));
    CHECK(b.a(0) == b.a(1));
    CHECK(b.a(1) == doctest::Approx(f_logit(1.0 / K)));
    CHECK(b.a(K) == b.a(K + 1));
    CHECK(b.a(K) == doctest::Approx(f_logit((K - 1.0) / K)));
    for (int k = -1; k <= K; ++k) CHECK(b.a(k + 1) >= b.a(k));
    for (int k = -1; k <= K + 1; ++k) {
      CHECK(std::abs(b.a(k)) <= std::log(K - 1.0) + 1e-12);
      CHECK(std::abs(b.a(k)) <= std::log(K + 1.0));
    }
  }
  CHECK_THROWS(make_hat_basis(5));
}

TEST_CASE("direct link interpolates the logit and vanishes outside") {
  for (int K : {6, 12}) {
    const HatBasis b = make_hat_basis(K);
    // interior knots
    for (int k = 1; k <= K - 1; ++k) {
      CHECK(link_eval_direct(b, static_cast<double>(k) / K) ==
            doctest::Approx(f_logit(static_cast<double>(k) / K)).epsilon(1e-12));
    }
    CHECK(link_eval_direct(b, 1.0 / K) == doctest::Approx(-std::log(K - 1.0)));
    CHECK(link_eval_direct(b, -2.0 / K) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(link_eval_direct(b, 1.0 + 2.0 / K) == doctest::Approx(0.0).epsilon(1e-12));
    if (K % 2 == 0) {
      CHECK(link_eval_direct(b, 0.5) == doctest::Approx(0.0).epsilon(1e-12));
    }
    // flat continuation at both ends
    CHECK(link_eval_direct(b, 0.0) == doctest::Approx(f_logit(1.0 / K)));
    CHECK(link_eval_direct(b, 1.0) == doctest::Approx(f_logit((K - 1.0) / K)));
  }
}

TEST_CASE("direct link is piecewise linear with knots at multiples of 1/K") {
  const int K = 6;
  const HatBasis b = make_hat_basis(K);
  // second difference vanishes inside each knot interval
  for (int seg = -2; seg <= K + 1; ++seg) {
    const double lo = static_cast<double>(seg) / K;
    for (double t : {0.2, 0.5, 0.7}) {
      const double z = lo + t / K;
      const double h = 1e-4 / K;
      const double second = link_eval_direct(b, z - h) - 2.0 * link_eval_direct(b, z) +
                            link_eval_direct(b, z + h);
      CHECK(std::abs(second) < 1e-10);
    }
  }
}

TEST_CASE("layer recursion reproduces the direct form") {
  const int K = 6;
  const HatBasis b = make_hat_basis(K);
  double worst = 0.0;
  for (double z : grid(-1.0, 2.0, 10000)) {
    worst = std::max(worst, std::abs(link_eval_network(b, z) - link_eval_direct(b, z)));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("track identities hold at every layer") {
  const int K = 8;
  const HatBasis b = make_hat_basis(K);
  for (double z : grid(-0.5, 1.5, 101)) {
    const LinkTracks t = link_eval_tracks(b, z);
    REQUIRE(static_cast<int>(t.f1.size()) == K + 3);
    for (int l = 1; l <= K + 3; ++l) {
      CHECK(t.f3[l - 1] - t.f4[l - 1] == doctest::Approx(z).epsilon(1e-14));
      double partial = 0.0;
      for (int k = -1; k <= l - 2; ++k) partial += b.a(k) * hat_basis_tent(z, k, K);
      CHECK(t.f1[l - 1] - t.f2[l - 1] == doctest::Approx(partial).epsilon(1e-11));
    }
  }
}

TEST_CASE("the link stays below log(K+1) everywhere") {
  for (int K : {6, 24}) {
    const HatBasis b = make_hat_basis(K);
    for (double z : grid(-3.0, 4.0, 20000)) {
      CHECK(std::abs(link_eval_network(b, z)) <= std::log(K + 1.0));
    }
  }
}

TEST_CASE("exported head weights realize the same function") {
  for (int K : {6, 12}) {
    const HatBasis b = make_hat_basis(K);
    const ExportedLink e = link_export_fnn(b);
    REQUIRE(e.arch.layers() == K + 3);
    for (int w : e.arch.widths) CHECK(w == 7);
    double worst = 0.0;
    for (double z : grid(-1.0, 2.0, 3000)) {
      worst = std::max(worst, std::abs(fnn_forward(e.arch, e.weights, z) -
                                       link_eval_network(b, z)));
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("loss gap: boundary cases obey the analysed envelopes") {
  for (int K : {6, 12, 24, 48}) {
    const HatBasis b = make_hat_basis(K);
    const double envelope =
        12.0 * std::log(static_cast<double>(K)) / (K - 3.0) + 4.0 * std::log(static_cast<double>(K)) / K;
    // eta identically 0 and identically 1
    const std::vector<double> zeros(64, 0.0), ones(64, 1.0);
    CHECK(link_loss_gap(b, zeros, zeros) <= envelope);
    CHECK(link_loss_gap(b, ones, ones) <= envelope);
    // exact knot point at one half for even K
    const std::vector<double> half(1, 0.5);
    CHECK(link_loss_gap(b, half, half) < 1e-12);
  }
}

TEST_CASE("loss gap with exact posterior decays roughly like 1/K") {
  std::vector<double> logk, loggap;
  for (int K : {6, 12, 24, 48}) {
    const HatBasis b = make_hat_basis(K);
    const std::vector<double> etas = grid(0.0, 1.0, 20001);
    const double gap = link_loss_gap(b, etas, etas);
    logk.push_back(std::log(static_cast<double>(K)));
    loggap.push_back(std::log(gap));
  }
  const double slope = ls_slope(logk, loggap);
  CHECK(slope > -1.3);
  CHECK(slope < -0.7);
}

TEST_CASE("loss gap rejects uncertified approximations") {
  const HatBasis b = make_hat_basis(6);
  const std::vector<double> etas = {0.5};
  const std::vector<double> far = {0.5 + 0.2};  // exceeds 1/K
  CHECK_THROWS(link_loss_gap(b, etas, far));
}

// ---------------------------------------------------------------------------
// compiler
// ---------------------------------------------------------------------------

namespace {

ImageGrid random_image(int d1, int d2, std::uint64_t seed, std::uint64_t idx) {
  rng::Stream st(seed, rng::Tag::generic, idx);
  return ImageGrid::random_uniform(d1, d2, st);
}

}  // namespace

TEST_CASE("node nets evaluate and the mean net is exact") {
  const ScalarMlp mean = mean4_node_net(2, 4);
  const double x[4] = {0.1, 0.4, 0.7, 0.2};
  CHECK(mean.eval(x) == doctest::Approx(0.35).epsilon(1e-15));
}

TEST_CASE("compiled mean tree on a single window is the pixel mean") {
  NodeNetTree tree;
  tree.level = 1;
  tree.nodes.push_back(mean4_node_net(1, 4));
  const CompiledCnn c = compile_hmp_to_cnn(tree, 2, 2);
  CHECK(c.arch.layers() == compiled_layer_count(1, 1));
  CHECK(c.arch.channels[0] == compiled_channel_count(1, 4));
  const ImageGrid img(2, 2, {0.1, 0.4, 0.7, 0.2});
  CHECK(cnn_forward(c.arch, c.weights, img) == doctest::Approx(0.35).epsilon(1e-12));
}

TEST_CASE("compiled tree equals the max over window placements") {
  NodeNetTree tree;
  tree.level = 1;
  rng::Stream st(3, rng::Tag::node_net, 0);
  tree.nodes.push_back(random_node_net(2, 5, st));
  const CompiledCnn c = compile_hmp_to_cnn(tree, 4, 4);
  for (int rep = 0; rep < 20; ++rep) {
    const ImageGrid img = random_image(4, 4, 400, rep);
    double brute = -1e300;
    for (int i = 0; i + 2 <= 4; ++i) {
      for (int j = 0; j + 2 <= 4; ++j) {
        brute = std::max(brute, eval_node_tree_window(tree, img, i, j));
      }
    }
    CHECK(std::abs(cnn_forward(c.arch, c.weights, img) - brute) < 1e-9);
    CHECK(std::abs(eval_node_tree_max_pool(tree, img) - brute) < 1e-15);
  }
}

TEST_CASE("level-2 compilation matches the recursion oracle") {
  const NodeNetTree tree = random_node_tree(2, 2, 6, 909);
  const CompiledCnn c = compile_hmp_to_cnn(tree, 8, 8);
  CHECK(c.arch.layers() == compiled_layer_count(2, 2));      // 5*2+2 = 12
  CHECK(c.arch.channels.size() == 12);
  for (int k : c.arch.channels) CHECK(k == compiled_channel_count(2, 6));  // 12+6
  // filter schedule: level-1 group (4*2+1 = 9 layers) then level-2 group (3)
  for (int s = 1; s <= 12; ++s) {
    CHECK(c.arch.filter_sizes[s - 1] == (s <= 9 ? 2 : 4));
  }
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const ImageGrid img = random_image(8, 8, 500, rep);
    worst = std::max(worst, std::abs(cnn_forward(c.arch, c.weights, img) -
                                     eval_node_tree_max_pool(tree, img)));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("compiler rejects inconsistent trees") {
  NodeNetTree tree;
  tree.level = 1;
  CHECK_THROWS(compile_hmp_to_cnn(tree, 4, 4));  // missing nodes
  tree.nodes.push_back(mean4_node_net(1, 4));
  CHECK_THROWS(compile_hmp_to_cnn(tree, 1, 4));  // window larger than image

  NodeNetTree bad = random_node_tree(2, 1, 4, 2);
  rng::Stream st(4, rng::Tag::node_net, 99);
  bad.nodes[2] = random_node_net(2, 4, st);  // depth mismatch
  CHECK_THROWS(compile_hmp_to_cnn(bad, 8, 8));
}
