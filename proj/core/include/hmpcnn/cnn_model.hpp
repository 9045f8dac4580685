#pragma once

#include <cstdint>
#include <vector>

#include "hmpcnn/grid.hpp"

namespace hmpcnn {

// Convolutional class: L layers of shared-filter convolutions with ReLU and
// zero padding (taps falling off the grid are dropped), followed by a single
// global max-pool over the channel-weighted sums. Filter sizes may differ per
// layer; channel spatial size always stays d1 x d2.
struct CnnArchitecture {
  int d1 = 0, d2 = 0;
  std::vector<int> channels;      // k_1..k_L (k_0 = 1 input channel)
  std::vector<int> filter_sizes;  // M_1..M_L

  int layers() const { return static_cast<int>(channels.size()); }
  void validate() const;  // throws on inconsistent shapes
};

template <class T>
struct ConvLayerWeightsT {
  // filter index [s2][s1][t1][t2] flattened; s2 in [0,k_l), s1 in [0,k_{l-1}),
  // taps t1,t2 in [0,M_l)
  std::vector<T> w;
  std::vector<T> bias;  // [s2]
};

template <class T>
struct CnnWeightsT {
  std::vector<ConvLayerWeightsT<T>> layers;
  std::vector<T> out;  // output weights over the last layer's channels
};

using ConvLayerWeights = ConvLayerWeightsT<double>;
using CnnWeights = CnnWeightsT<double>;

// Scalar-input fully connected head with ReLU activations: the output is an
// affine combination of the last hidden layer.
struct FnnArchitecture {
  std::vector<int> widths;  // k_1..k_L (input width k_0 = 1)

  int layers() const { return static_cast<int>(widths.size()); }
  void validate() const;
};

template <class T>
struct FnnLayerWeightsT {
  std::vector<T> w;     // [neuron][prev] flattened
  std::vector<T> bias;  // [neuron]
};

template <class T>
struct FnnWeightsT {
  std::vector<FnnLayerWeightsT<T>> layers;
  std::vector<T> out;  // output weights over last hidden layer
  T out_bias = T(0);
};

using FnnLayerWeights = FnnLayerWeightsT<double>;
using FnnWeights = FnnWeightsT<double>;

// Hard output clip T_beta: enforces the class bound |g(f(x))| <= beta.
struct TruncationBound {
  double beta;
};

CnnWeights zero_cnn_weights(const CnnArchitecture& arch);
FnnWeights zero_fnn_weights(const FnnArchitecture& arch);

void check_shapes(const CnnArchitecture& arch, const CnnWeights& w);
void check_shapes(const FnnArchitecture& arch, const FnnWeights& w);

// Convolutional forward pass; returns the global max over valid positions of
// the channel-weighted sum. Max ties resolve to the first position in
// first-index-major scan order.
double cnn_forward(const CnnArchitecture& arch, const CnnWeights& weights,
                   const ImageGrid& image);

// ReLU feedforward on a scalar input.
double fnn_forward(const FnnArchitecture& arch, const FnnWeights& weights, double z);

// T_beta(g(f(x)))
double predict(const CnnArchitecture& cnn_arch, const CnnWeights& cnn_w,
               const FnnArchitecture& fnn_arch, const FnnWeights& fnn_w,
               TruncationBound beta, const ImageGrid& image);

// Classifier sign: +1 for z >= 0
inline int sign_classify(double z) { return z >= 0.0 ? +1 : -1; }

// Bundled class member T_beta . g . f
struct Predictor {
  CnnArchitecture cnn_arch;
  FnnArchitecture fnn_arch;
  CnnWeights cnn;
  FnnWeights fnn;
  TruncationBound beta{2.0};

  double operator()(const ImageGrid& image) const {
    return predict(cnn_arch, cnn, fnn_arch, fnn, beta, image);
  }
  int classify(const ImageGrid& image) const { return sign_classify((*this)(image)); }
};

// Architecture schedule derived from the sample size n, smoothness p and
// model level l. The per-level convolutional block count and the head depth
// are q = ceil(c3 * n^{2/(2p+4)}) and ceil(c2 * n^{1/4}); `scale` <= 1
// multiplies both (result floored, clamped at 1) to keep desk-scale training
// feasible, and is recorded in the result.
struct ScheduleConstants {
  double c1 = 1.0;  // beta = c1 * log n
  double c2 = 1.0;  // head depth multiplier
  double c3 = 1.0;  // conv block multiplier
  int c4 = 8;       // conv channels per layer
  int c5 = 8;       // head width
};

struct Schedule {
  CnnArchitecture cnn;
  FnnArchitecture fnn;
  TruncationBound beta{0.0};
  double scale = 1.0;
  int blocks_per_level = 1;  // q after scaling
};

Schedule architecture_schedule(int n, double p, int level, int d1, int d2,
                               const ScheduleConstants& c, double scale = 1.0);

// Filter-size level map: returns the level in {1..l} whose filter size 2^level
// applies at layer s (1-based), for q per-level blocks. Nondecreasing in s.
int filter_level(int s, int level, int q);

int conv_layer_count(int level, int q);  // (4^l-1)/3 * q + l

}  // namespace hmpcnn
