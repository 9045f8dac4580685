#pragma once

#include <cstdint>
#include <vector>

#include "hmpcnn/cnn_model.hpp"
#include "hmpcnn/grid.hpp"
#include "hmpcnn/rng.hpp"

namespace hmpcnn {

// ---------------------------------------------------------------------------
// Piecewise-linear logit link built from hat functions.
//
// For K >= 6, knot values a_{-1..K+1} with a_{-1}=a_0=a_1=f(1/K),
// a_k=f(k/K) for 1<k<K, a_K=a_{K+1}=f(1-1/K), f = logit. The link
// interpolates f at the interior knots, vanishes outside (-2/K, 1+2/K), and
// is bounded by log(K+1). It is realizable exactly as a ReLU network with
// K+3 hidden layers of 7 neurons.
// ---------------------------------------------------------------------------

struct HatBasis {
  int K;
  std::vector<double> knots;  // a_{-1}..a_{K+1}, stored at index k+1

  double a(int k) const { return knots[k + 1]; }
};

HatBasis make_hat_basis(int K);  // throws unless K >= 6

// Tent at knot k/K: 0 outside ((k-1)/K,(k+1)/K), 1 at k/K, linear between.
double hat_basis_tent(double z, int k, int K);
// Same function as sigma(K(z-(k-1)/K)) - 2 sigma(K(z-k/K)) + sigma(K(z-(k+1)/K)).
double hat_basis_relu(double z, int k, int K);

// Direct hat sum: sum_k a_k * B_k(z).
double link_eval_direct(const HatBasis& basis, double z);

// Literal 4-track layer recursion (2 carry tracks, 2 pass-through tracks,
// 3-neuron hat gadget per layer). Equals link_eval_direct up to roundoff.
double link_eval_network(const HatBasis& basis, double z);

// Track values after each layer, for the internal identities
// f3-f4 = z and f1-f2 = sum_{k<=l-2} a_k B_k(z).
struct LinkTracks {
  std::vector<double> f1, f2, f3, f4;  // index 0 = after layer 1
};
LinkTracks link_eval_tracks(const HatBasis& basis, double z);

// The same network exported as explicit scalar-input FNN weights:
// K+3 hidden layers, 7 neurons each.
struct ExportedLink {
  FnnArchitecture arch;
  FnnWeights weights;
};
ExportedLink link_export_fnn(const HatBasis& basis);

// sup over the evaluation pairs (eta_i, g_i) of
// |eta phi(link(g)) - eta phi(f(eta))| + |(1-eta) phi(-link(g)) - (1-eta) phi(-f(eta))|
// with the x*log(x) convention at eta in {0,1}. Requires max|g-eta| <= 1/K.
double link_loss_gap(const HatBasis& basis, const std::vector<double>& etas,
                     const std::vector<double>& gs);

// ---------------------------------------------------------------------------
// Compiler from a tree of 4-ary node networks to an equivalent CNN.
//
// Node nets are scalar-output MLPs on R^4, all sharing (hidden_layers,
// width). The compiled CNN reproduces the max-pooled hierarchical
// composition exactly; see docs/compiler_layout.md for the channel plan.
// ---------------------------------------------------------------------------

struct MlpLayer {
  std::vector<double> w;     // [neuron][prev] flattened
  std::vector<double> bias;  // [neuron]
};

struct ScalarMlp {
  int input_dim = 4;
  int width = 0;
  std::vector<MlpLayer> layers;  // hidden layers
  std::vector<double> out;       // output weights over last hidden layer
  double out_bias = 0.0;

  int hidden_layers() const { return static_cast<int>(layers.size()); }
  double eval(const double* x) const;
};

ScalarMlp random_node_net(int hidden_layers, int width, rng::Stream& stream);

// mean of the 4 inputs, written with ReLU pass-throughs (inputs >= 0)
ScalarMlp mean4_node_net(int hidden_layers, int width);

struct NodeNetTree {
  int level = 1;
  std::vector<ScalarMlp> nodes;  // level-major, same indexing as HmpModel

  const ScalarMlp& node(int k, int s) const;
};

NodeNetTree random_node_tree(int level, int hidden_layers, int width, std::uint64_t seed);

// Reference path: hierarchical recursion at a window anchor / max over anchors.
double eval_node_tree_window(const NodeNetTree& tree, const ImageGrid& image, int i0, int j0);
double eval_node_tree_max_pool(const NodeNetTree& tree, const ImageGrid& image);

struct CompiledCnn {
  CnnArchitecture arch;
  CnnWeights weights;
};

// Emits a CNN with (4^l-1)/3*L_net+l layers, (2*4^l+4)/3+r_net channels per
// layer and filter sizes 2^{pi(s)} whose forward pass equals
// eval_node_tree_max_pool on every [0,1]-valued image.
CompiledCnn compile_hmp_to_cnn(const NodeNetTree& tree, int d1, int d2);

int compiled_layer_count(int level, int hidden_layers);
int compiled_channel_count(int level, int width);

}  // namespace hmpcnn
