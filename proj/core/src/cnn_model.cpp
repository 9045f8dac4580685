#include "hmpcnn/cnn_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "hmpcnn/detail/net_kernels.hpp"

namespace hmpcnn {

void CnnArchitecture::validate() const {
  if (d1 < 1 || d2 < 1) throw std::invalid_argument("CnnArchitecture: bad dimensions");
  if (channels.empty()) throw std::invalid_argument("CnnArchitecture: needs >= 1 layer");
  if (filter_sizes.size() != channels.size()) {
    throw std::invalid_argument("CnnArchitecture: channel and filter lists differ in length");
  }
  for (int k : channels) {
    if (k < 1) throw std::invalid_argument("CnnArchitecture: channel counts must be positive");
  }
  for (int m : filter_sizes) {
    if (m < 1 || m > std::min(d1, d2)) {
      throw std::invalid_argument("CnnArchitecture: filter sizes must lie in [1, min{d1,d2}]");
    }
  }
}

void FnnArchitecture::validate() const {
  if (widths.empty()) throw std::invalid_argument("FnnArchitecture: needs >= 1 layer");
  for (int k : widths) {
    if (k < 1) throw std::invalid_argument("FnnArchitecture: widths must be positive");
  }
}

CnnWeights zero_cnn_weights(const CnnArchitecture& arch) {
  arch.validate();
  CnnWeights w;
  w.layers.resize(arch.layers());
  int k_prev = 1;
  for (int l = 0; l < arch.layers(); ++l) {
    const int k = arch.channels[l];
    const int m = arch.filter_sizes[l];
    w.layers[l].w.assign(static_cast<std::size_t>(k) * k_prev * m * m, 0.0);
    w.layers[l].bias.assign(k, 0.0);
    k_prev = k;
  }
  w.out.assign(arch.channels.back(), 0.0);
  return w;
}

FnnWeights zero_fnn_weights(const FnnArchitecture& arch) {
  arch.validate();
  FnnWeights w;
  w.layers.resize(arch.layers());
  int prev = 1;
  for (int r = 0; r < arch.layers(); ++r) {
    const int k = arch.widths[r];
    w.layers[r].w.assign(static_cast<std::size_t>(k) * prev, 0.0);
    w.layers[r].bias.assign(k, 0.0);
    prev = k;
  }
  w.out.assign(arch.widths.back(), 0.0);
  w.out_bias = 0.0;
  return w;
}

void check_shapes(const CnnArchitecture& arch, const CnnWeights& w) {
  arch.validate();
  if (static_cast<int>(w.layers.size()) != arch.layers()) {
    throw std::invalid_argument("CnnWeights: layer count mismatch");
  }
  int k_prev = 1;
  for (int l = 0; l < arch.layers(); ++l) {
    const int k = arch.channels[l];
    const int m = arch.filter_sizes[l];
    if (w.layers[l].w.size() != static_cast<std::size_t>(k) * k_prev * m * m ||
        w.layers[l].bias.size() != static_cast<std::size_t>(k)) {
      throw std::invalid_argument("CnnWeights: shape mismatch at layer " + std::to_string(l + 1));
    }
    k_prev = k;
  }
  if (w.out.size() != static_cast<std::size_t>(arch.channels.back())) {
    throw std::invalid_argument("CnnWeights: output weight count mismatch");
  }
}

void check_shapes(const FnnArchitecture& arch, const FnnWeights& w) {
  arch.validate();
  if (static_cast<int>(w.layers.size()) != arch.layers()) {
    throw std::invalid_argument("FnnWeights: layer count mismatch");
  }
  int prev = 1;
  for (int r = 0; r < arch.layers(); ++r) {
    const int k = arch.widths[r];
    if (w.layers[r].w.size() != static_cast<std::size_t>(k) * prev ||
        w.layers[r].bias.size() != static_cast<std::size_t>(k)) {
      throw std::invalid_argument("FnnWeights: shape mismatch at layer " + std::to_string(r + 1));
    }
    prev = k;
  }
  if (w.out.size() != static_cast<std::size_t>(arch.widths.back())) {
    throw std::invalid_argument("FnnWeights: output weight count mismatch");
  }
}

double cnn_forward(const CnnArchitecture& arch, const CnnWeights& weights,
                   const ImageGrid& image) {
  check_shapes(arch, weights);
  if (image.d1() != arch.d1 || image.d2() != arch.d2) {
    throw std::invalid_argument("cnn_forward: image dimensions do not match the architecture");
  }
  detail::CnnCache<double> cache;
  detail::cnn_forward_cached(arch, weights, image, cache);
  return cache.max_value;
}

double fnn_forward(const FnnArchitecture& arch, const FnnWeights& weights, double z) {
  check_shapes(arch, weights);
  detail::FnnCache<double> cache;
  detail::fnn_forward_cached(arch, weights, z, cache);
  return cache.output;
}

double predict(const CnnArchitecture& cnn_arch, const CnnWeights& cnn_w,
               const FnnArchitecture& fnn_arch, const FnnWeights& fnn_w,
               TruncationBound beta, const ImageGrid& image) {
  const double inner = fnn_forward(fnn_arch, fnn_w, cnn_forward(cnn_arch, cnn_w, image));
  if (std::isnan(inner)) return inner;
  return std::min(beta.beta, std::max(-beta.beta, inner));
}

int conv_layer_count(int level, int q) {
  return ((1 << (2 * level)) - 1) / 3 * q + level;
}

int filter_level(int s, int level, int q) {
  if (level < 1 || q < 1) throw std::invalid_argument("filter_level: level and q must be >= 1");
  if (s < 1 || s > conv_layer_count(level, q)) {
    throw std::invalid_argument("filter_level: s out of range");
  }
  int pi = 0;
  for (int i = 1; i <= level; ++i) {
    // threshold i + q * sum_{r=level-i+1}^{level-1} 4^r
    long long tail = 0;
    for (int r = level - i + 1; r <= level - 1; ++r) tail += 1LL << (2 * r);
    if (s >= i + q * tail) ++pi;
  }
  return pi;
}

Schedule architecture_schedule(int n, double p, int level, int d1, int d2,
                               const ScheduleConstants& c, double scale) {
  if (n < 2) throw std::invalid_argument("architecture_schedule: n must be >= 2");
  if (p < 1.0) throw std::invalid_argument("architecture_schedule: p must be >= 1");
  if (level < 1) throw std::invalid_argument("architecture_schedule: level must be >= 1");
  if (!(scale > 0.0 && scale <= 1.0)) {
    throw std::invalid_argument("architecture_schedule: scale must lie in (0,1]");
  }
  if ((1 << level) > std::min(d1, d2)) {
    throw std::invalid_argument("architecture_schedule: 2^level exceeds min{d1,d2}");
  }
  const double nn = static_cast<double>(n);
  const int q_raw = static_cast<int>(std::ceil(c.c3 * std::pow(nn, 2.0 / (2.0 * p + 4.0))));
  const int l2_raw = static_cast<int>(std::ceil(c.c2 * std::pow(nn, 0.25)));
  const int q = std::max(1, static_cast<int>(std::floor(scale * q_raw)));
  const int l2 = std::max(1, static_cast<int>(std::floor(scale * l2_raw)));

  Schedule s;
  s.scale = scale;
  s.blocks_per_level = q;
  const int l1 = conv_layer_count(level, q);
  s.cnn.d1 = d1;
  s.cnn.d2 = d2;
  s.cnn.channels.assign(l1, c.c4);
  s.cnn.filter_sizes.resize(l1);
  for (int layer = 1; layer <= l1; ++layer) {
    s.cnn.filter_sizes[layer - 1] = 1 << filter_level(layer, level, q);
  }
  s.cnn.validate();
  s.fnn.widths.assign(l2, c.c5);
  s.beta.beta = c.c1 * std::log(nn);
  return s;
}

}  // namespace hmpcnn
