#include "hmpcnn/constructions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hmpcnn/detail/net_kernels.hpp"

namespace hmpcnn {

namespace {

double relu(double z) { return z > 0.0 ? z : 0.0; }

double f_logit(double z) { return std::log(z / (1.0 - z)); }

double xlogx(double z) { return z > 0.0 ? z * std::log(z) : 0.0; }

}  // namespace

HatBasis make_hat_basis(int K) {
  if (K < 6) throw std::invalid_argument("make_hat_basis: K must be >= 6");
  HatBasis b;
  b.K = K;
  b.knots.assign(K + 3, 0.0);
  const double lo = f_logit(1.0 / K);
  const double hi = f_logit((K - 1.0) / K);
  b.knots[0] = b.knots[1] = b.knots[2] = lo;  // a_{-1}, a_0, a_1
  for (int k = 2; k <= K - 1; ++k) b.knots[k + 1] = f_logit(static_cast<double>(k) / K);
  b.knots[K + 1] = b.knots[K + 2] = hi;  // a_K, a_{K+1}
  return b;
}

double hat_basis_tent(double z, int k, int K) {
  const double lo = static_cast<double>(k - 1) / K;
  const double mid = static_cast<double>(k) / K;
  const double hi = static_cast<double>(k + 1) / K;
  if (z < lo || z >= hi) return 0.0;
  if (z < mid) return K * (z - lo);
  return K * (hi - z);
}

double hat_basis_relu(double z, int k, int K) {
  const double kk = static_cast<double>(K);
  return relu(kk * z - (k - 1)) - 2.0 * relu(kk * z - k) + relu(kk * z - (k + 1));
}

double link_eval_direct(const HatBasis& basis, double z) {
  double acc = 0.0;
  for (int k = -1; k <= basis.K + 1; ++k) {
    acc += basis.a(k) * hat_basis_tent(z, k, basis.K);
  }
  return acc;
}

LinkTracks link_eval_tracks(const HatBasis& basis, double z) {
  const int K = basis.K;
  LinkTracks t;
  double f1 = basis.a(-1) * hat_basis_relu(z, -1, K);
  double f2 = 0.0;
  double f3 = relu(z);
  double f4 = relu(-z);
  t.f1.push_back(f1);
  t.f2.push_back(f2);
  t.f3.push_back(f3);
  t.f4.push_back(f4);
  for (int l = 2; l <= K + 3; ++l) {
    const double u = f3 - f4;
    const double nf1 = relu(f1 - f2) + basis.a(l - 2) * hat_basis_relu(u, l - 2, K);
    const double nf2 = relu(-(f1 - f2));
    const double nf3 = relu(u);
    const double nf4 = relu(-u);
    f1 = nf1;
    f2 = nf2;
    f3 = nf3;
    f4 = nf4;
    t.f1.push_back(f1);
    t.f2.push_back(f2);
    t.f3.push_back(f3);
    t.f4.push_back(f4);
  }
  return t;
}

double link_eval_network(const HatBasis& basis, double z) {
  const int K = basis.K;
  double f1 = basis.a(-1) * hat_basis_relu(z, -1, K);
  double f2 = 0.0;
  double f3 = relu(z);
  double f4 = relu(-z);
  for (int l = 2; l <= K + 3; ++l) {
    const double u = f3 - f4;
    const double nf1 = relu(f1 - f2) + basis.a(l - 2) * hat_basis_relu(u, l - 2, K);
    const double nf2 = relu(-(f1 - f2));
    const double nf3 = relu(u);
    const double nf4 = relu(-u);
    f1 = nf1;
    f2 = nf2;
    f3 = nf3;
    f4 = nf4;
  }
  return f1 - f2;
}

ExportedLink link_export_fnn(const HatBasis& basis) {
  const int K = basis.K;
  const int depth = K + 3;
  ExportedLink e;
  e.arch.widths.assign(depth, 7);
  e.weights.layers.resize(depth);

  // affine coefficients of the four track values over the previous layer's
  // neurons (dimension 1 before the first layer: the raw input)
  struct Affine {
    std::vector<double> c;
    double b = 0.0;
  };
  Affine f1{{0.0}, 0.0}, f2{{0.0}, 0.0}, f3{{1.0}, 0.0}, f4{{0.0}, 0.0};

  for (int l = 1; l <= depth; ++l) {
    const int prev = l == 1 ? 1 : 7;
    auto& layer = e.weights.layers[l - 1];
    layer.w.assign(static_cast<std::size_t>(7) * prev, 0.0);
    layer.bias.assign(7, 0.0);
    auto set_neuron = [&](int n, const Affine& a, double scale, double bias_shift) {
      for (int p = 0; p < prev; ++p) layer.w[static_cast<std::size_t>(n) * prev + p] = scale * a.c[p];
      layer.bias[n] = scale * a.b + bias_shift;
    };
    auto diff = [&](const Affine& x, const Affine& y) {
      Affine d;
      d.c.resize(prev);
      for (int p = 0; p < prev; ++p) d.c[p] = x.c[p] - y.c[p];
      d.b = x.b - y.b;
      return d;
    };
    const Affine carry = diff(f1, f2);
    const Affine pass = diff(f3, f4);
    const Affine neg_carry = diff(f2, f1);
    const Affine neg_pass = diff(f4, f3);
    // neurons: carry +/-, pass +/-, 3-piece hat gadget on the pass value
    set_neuron(0, carry, 1.0, 0.0);
    set_neuron(1, neg_carry, 1.0, 0.0);
    set_neuron(2, pass, 1.0, 0.0);
    set_neuron(3, neg_pass, 1.0, 0.0);
    const int k = l - 2;  // hat index consumed by this layer
    set_neuron(4, pass, K, -static_cast<double>(k - 1));
    set_neuron(5, pass, K, -static_cast<double>(k));
    set_neuron(6, pass, K, -static_cast<double>(k + 1));
    const double a = basis.a(k);
    f1 = Affine{{1.0, 0.0, 0.0, 0.0, a, -2.0 * a, a}, 0.0};
    f2 = Affine{{0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0}, 0.0};
    f3 = Affine{{0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0}, 0.0};
    f4 = Affine{{0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0}, 0.0};
  }
  const double a_last = basis.a(depth - 2);
  e.weights.out = {1.0, -1.0, 0.0, 0.0, a_last, -2.0 * a_last, a_last};
  e.weights.out_bias = 0.0;
  check_shapes(e.arch, e.weights);
  return e;
}

double link_loss_gap(const HatBasis& basis, const std::vector<double>& etas,
                     const std::vector<double>& gs) {
  if (etas.size() != gs.size() || etas.empty()) {
    throw std::invalid_argument("link_loss_gap: evaluation vectors must match and be nonempty");
  }
  const double eps_cap = 1.0 / basis.K + 1e-12;
  double sup = 0.0;
  for (std::size_t i = 0; i < etas.size(); ++i) {
    const double eta = etas[i];
    if (!(eta >= 0.0 && eta <= 1.0)) {
      throw std::invalid_argument("link_loss_gap: eta outside [0,1]");
    }
    if (std::abs(gs[i] - eta) > eps_cap) {
      throw std::invalid_argument("link_loss_gap: |g-eta| exceeds 1/K on the evaluation set");
    }
    const double fb = link_eval_network(basis, gs[i]);
    const double term1 = std::abs(eta * detail::softplus_neg(fb) - (-xlogx(eta)));
    const double term2 =
        std::abs((1.0 - eta) * detail::softplus_neg(-fb) - (-xlogx(1.0 - eta)));
    sup = std::max(sup, term1 + term2);
  }
  return sup;
}

// ---------------------------------------------------------------------------
// Node-net trees and the CNN compiler
// ---------------------------------------------------------------------------

double ScalarMlp::eval(const double* x) const {
  std::vector<double> cur(x, x + input_dim);
  for (const auto& layer : layers) {
    std::vector<double> next(width);
    const int prev = static_cast<int>(cur.size());
    for (int c = 0; c < width; ++c) {
      double v = layer.bias[c];
      const double* wr = &layer.w[static_cast<std::size_t>(c) * prev];
      for (int p = 0; p < prev; ++p) v += wr[p] * cur[p];
      next[c] = relu(v);
    }
    cur = std::move(next);
  }
  double v = out_bias;
  for (std::size_t c = 0; c < cur.size(); ++c) v += out[c] * cur[c];
  return v;
}

ScalarMlp random_node_net(int hidden_layers, int width, rng::Stream& stream) {
  if (hidden_layers < 1 || width < 1) {
    throw std::invalid_argument("random_node_net: needs >= 1 hidden layer and width >= 1");
  }
  ScalarMlp n;
  n.width = width;
  n.layers.resize(hidden_layers);
  int prev = n.input_dim;
  for (auto& layer : n.layers) {
    const double r = 0.9 / std::sqrt(static_cast<double>(prev));
    layer.w.resize(static_cast<std::size_t>(width) * prev);
    layer.bias.resize(width);
    for (auto& v : layer.w) v = stream.next_uniform(-r, r);
    for (auto& v : layer.bias) v = stream.next_uniform(-0.2, 0.2);
    prev = width;
  }
  const double r = 0.9 / std::sqrt(static_cast<double>(width));
  n.out.resize(width);
  for (auto& v : n.out) v = stream.next_uniform(-r, r);
  n.out_bias = stream.next_uniform(-0.2, 0.2);
  return n;
}

ScalarMlp mean4_node_net(int hidden_layers, int width) {
  if (hidden_layers < 1 || width < 4) {
    throw std::invalid_argument("mean4_node_net: needs >= 1 hidden layer and width >= 4");
  }
  ScalarMlp n;
  n.width = width;
  n.layers.resize(hidden_layers);
  int prev = n.input_dim;
  for (int l = 0; l < hidden_layers; ++l) {
    auto& layer = n.layers[l];
    layer.w.assign(static_cast<std::size_t>(width) * prev, 0.0);
    layer.bias.assign(width, 0.0);
    for (int c = 0; c < 4; ++c) {
      layer.w[static_cast<std::size_t>(c) * prev + c] = 1.0;  // pass nonnegative values through
    }
    prev = width;
  }
  n.out.assign(width, 0.0);
  for (int c = 0; c < 4; ++c) n.out[c] = 0.25;
  n.out_bias = 0.0;
  return n;
}

const ScalarMlp& NodeNetTree::node(int k, int s) const {
  int off = 0;
  for (int kk = 1; kk < k; ++kk) off += 1 << (2 * (level - kk));
  return nodes[off + (s - 1)];
}

NodeNetTree random_node_tree(int level, int hidden_layers, int width, std::uint64_t seed) {
  NodeNetTree t;
  t.level = level;
  const int n = ((1 << (2 * level)) - 1) / 3;
  t.nodes.reserve(n);
  for (int idx = 0; idx < n; ++idx) {
    rng::Stream st(seed, rng::Tag::node_net, static_cast<std::uint64_t>(idx));
    t.nodes.push_back(random_node_net(hidden_layers, width, st));
  }
  return t;
}

namespace {

double eval_tree_node(const NodeNetTree& t, const ImageGrid& img, int k, int s, int i0, int j0) {
  double in[4];
  if (k == 1) {
    in[0] = img.at(i0, j0);
    in[1] = img.at(i0 + 1, j0);
    in[2] = img.at(i0, j0 + 1);
    in[3] = img.at(i0 + 1, j0 + 1);
  } else {
    const int h = 1 << (k - 1);
    const int base = 4 * (s - 1);
    in[0] = eval_tree_node(t, img, k - 1, base + 1, i0, j0);
    in[1] = eval_tree_node(t, img, k - 1, base + 2, i0 + h, j0);
    in[2] = eval_tree_node(t, img, k - 1, base + 3, i0, j0 + h);
    in[3] = eval_tree_node(t, img, k - 1, base + 4, i0 + h, j0 + h);
  }
  return t.node(k, s).eval(in);
}

}  // namespace

double eval_node_tree_window(const NodeNetTree& tree, const ImageGrid& image, int i0, int j0) {
  return eval_tree_node(tree, image, tree.level, 1, i0, j0);
}

double eval_node_tree_max_pool(const NodeNetTree& tree, const ImageGrid& image) {
  const int w = 1 << tree.level;
  if (image.d1() < w || image.d2() < w) {
    throw std::invalid_argument("eval_node_tree_max_pool: image smaller than the window");
  }
  double best = -std::numeric_limits<double>::infinity();
  for (int i0 = 0; i0 + w <= image.d1(); ++i0) {
    for (int j0 = 0; j0 + w <= image.d2(); ++j0) {
      best = std::max(best, eval_node_tree_window(tree, image, i0, j0));
    }
  }
  return best;
}

int compiled_layer_count(int level, int hidden_layers) {
  return ((1 << (2 * level)) - 1) / 3 * hidden_layers + level;
}

int compiled_channel_count(int level, int width) {
  return (2 * (1 << (2 * level)) + 4) / 3 + width;
}

CompiledCnn compile_hmp_to_cnn(const NodeNetTree& tree, int d1, int d2) {
  const int l = tree.level;
  if (l < 1) throw std::invalid_argument("compile_hmp_to_cnn: level must be >= 1");
  if ((1 << l) > std::min(d1, d2)) {
    throw std::invalid_argument("compile_hmp_to_cnn: 2^level exceeds min{d1,d2}");
  }
  const int n_nodes = ((1 << (2 * l)) - 1) / 3;
  if (static_cast<int>(tree.nodes.size()) != n_nodes) {
    throw std::invalid_argument("compile_hmp_to_cnn: wrong node count");
  }
  const int l_net = tree.nodes[0].hidden_layers();
  const int r_net = tree.nodes[0].width;
  for (const auto& n : tree.nodes) {
    if (n.hidden_layers() != l_net || n.width != r_net || n.input_dim != 4) {
      throw std::invalid_argument("compile_hmp_to_cnn: node nets must share (layers,width)");
    }
  }

  const int depth = compiled_layer_count(l, l_net);
  const int k_ch = compiled_channel_count(l, r_net);

  // channel plan: 0 = pixel carry; per node (level-major index t) a +/- pair
  // at 1+2t, 2+2t; one spare zero channel; node-net scratch block on top
  const int hidden_base = 2 + 2 * n_nodes;
  auto node_index = [&](int k, int s) {
    int off = 0;
    for (int kk = 1; kk < k; ++kk) off += 1 << (2 * (l - kk));
    return off + (s - 1);
  };
  auto pair_plus = [&](int k, int s) { return 1 + 2 * node_index(k, s); };
  auto pair_minus = [&](int k, int s) { return 2 + 2 * node_index(k, s); };

  // group k of layers handles level k: 4^(l-k) node nets plus one
  // materialization layer; filter size 2^k throughout the group
  std::vector<int> group_start(l + 2, 0);
  group_start[1] = 1;
  for (int k = 1; k <= l; ++k) {
    group_start[k + 1] = group_start[k] + (1 << (2 * (l - k))) * l_net + 1;
  }
  if (group_start[l + 1] - 1 != depth) {
    throw std::logic_error("compile_hmp_to_cnn: layer plan does not match the depth formula");
  }

  CompiledCnn out;
  out.arch.d1 = d1;
  out.arch.d2 = d2;
  out.arch.channels.assign(depth, k_ch);
  out.arch.filter_sizes.resize(depth);
  for (int k = 1; k <= l; ++k) {
    for (int tau = group_start[k]; tau < group_start[k + 1]; ++tau) {
      out.arch.filter_sizes[tau - 1] = 1 << k;
    }
  }
  out.arch.validate();
  out.weights = zero_cnn_weights(out.arch);

  // materialization layer of node (k,s); folds into the next node's first
  // hidden layer except for the last node of a group
  auto mat_layer = [&](int k, int s) { return group_start[k] + s * l_net; };

  auto set_w = [&](int tau, int s2, int s1, int t1, int t2, double v) {
    const int m = out.arch.filter_sizes[tau - 1];
    const int k_prev = tau == 1 ? 1 : k_ch;
    out.weights.layers[tau - 1]
        .w[((static_cast<std::size_t>(s2) * k_prev + s1) * m + t1) * m + t2] = v;
  };
  auto add_w = [&](int tau, int s2, int s1, int t1, int t2, double v) {
    const int m = out.arch.filter_sizes[tau - 1];
    const int k_prev = tau == 1 ? 1 : k_ch;
    out.weights.layers[tau - 1]
        .w[((static_cast<std::size_t>(s2) * k_prev + s1) * m + t1) * m + t2] += v;
  };
  auto set_bias = [&](int tau, int s2, double v) { out.weights.layers[tau - 1].bias[s2] = v; };

  // pixel carry: identity at every layer (input channel is also index 0)
  for (int tau = 1; tau <= depth; ++tau) set_w(tau, 0, 0, 0, 0, 1.0);

  // pair carries: identity from materialization onward
  for (int k = 1; k <= l; ++k) {
    for (int s = 1; s <= (1 << (2 * (l - k))); ++s) {
      for (int tau = mat_layer(k, s) + 1; tau <= depth; ++tau) {
        set_w(tau, pair_plus(k, s), pair_plus(k, s), 0, 0, 1.0);
        set_w(tau, pair_minus(k, s), pair_minus(k, s), 0, 0, 1.0);
      }
    }
  }

  for (int k = 1; k <= l; ++k) {
    const int h = 1 << (k - 1);
    const int dx[4] = {0, h, 0, h};
    const int dy[4] = {0, 0, h, h};
    for (int s = 1; s <= (1 << (2 * (l - k))); ++s) {
      const ScalarMlp& net = tree.node(k, s);
      for (int j = 1; j <= l_net; ++j) {
        const int tau = group_start[k] + (s - 1) * l_net + (j - 1);
        const MlpLayer& layer = net.layers[j - 1];
        if (j == 1) {
          for (int c = 0; c < r_net; ++c) {
            set_bias(tau, hidden_base + c, layer.bias[c]);
            for (int q = 0; q < 4; ++q) {
              const double w = layer.w[static_cast<std::size_t>(c) * 4 + q];
              if (k == 1) {
                add_w(tau, hidden_base + c, 0, dx[q], dy[q], w);
              } else {
                const int child = 4 * (s - 1) + q + 1;
                add_w(tau, hidden_base + c, pair_plus(k - 1, child), dx[q], dy[q], w);
                add_w(tau, hidden_base + c, pair_minus(k - 1, child), dx[q], dy[q], -w);
              }
            }
          }
        } else {
          for (int c = 0; c < r_net; ++c) {
            set_bias(tau, hidden_base + c, layer.bias[c]);
            for (int p = 0; p < r_net; ++p) {
              set_w(tau, hidden_base + c, hidden_base + p, 0, 0,
                    layer.w[static_cast<std::size_t>(c) * r_net + p]);
            }
          }
        }
      }
      // emit the node value as a relu pair readable by later layers
      const int tau_m = mat_layer(k, s);
      set_bias(tau_m, pair_plus(k, s), net.out_bias);
      set_bias(tau_m, pair_minus(k, s), -net.out_bias);
      for (int c = 0; c < r_net; ++c) {
        set_w(tau_m, pair_plus(k, s), hidden_base + c, 0, 0, net.out[c]);
        set_w(tau_m, pair_minus(k, s), hidden_base + c, 0, 0, -net.out[c]);
      }
    }
  }

  out.weights.out.assign(k_ch, 0.0);
  out.weights.out[pair_plus(l, 1)] = 1.0;
  out.weights.out[pair_minus(l, 1)] = -1.0;
  return out;
}

}  // namespace hmpcnn
