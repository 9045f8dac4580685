#pragma once

#include <cstdint>
#include <vector>

#include "hmpcnn/rng.hpp"

namespace hmpcnn {

// Grey-scale image on {1..d1} x {1..d2} with values in [0,1].
// Stored 0-based, first index major: pixel (i,j) at px[i*d2+j].
// Dimensions are fixed at construction; values are validated once.
class ImageGrid {
 public:
  ImageGrid(int d1, int d2);  // all zeros
  ImageGrid(int d1, int d2, std::vector<double> pixels);

  int d1() const { return d1_; }
  int d2() const { return d2_; }

  double at(int i, int j) const { return px_[static_cast<std::size_t>(i) * d2_ + j]; }
  void set(int i, int j, double v);

  const std::vector<double>& pixels() const { return px_; }

  // i.i.d. uniform pixels
  static ImageGrid random_uniform(int d1, int d2, rng::Stream& stream);

  // smooth low-frequency texture: a few random cosine modes squashed to [0,1]
  static ImageGrid random_texture(int d1, int d2, rng::Stream& stream);

 private:
  int d1_, d2_;
  std::vector<double> px_;
};

}  // namespace hmpcnn
