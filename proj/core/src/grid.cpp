#include "hmpcnn/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hmpcnn {

namespace {

void check_dims(int d1, int d2) {
  if (d1 < 1 || d2 < 1) {
    throw std::invalid_argument("ImageGrid: dimensions must be positive, got " +
                                std::to_string(d1) + "x" + std::to_string(d2));
  }
}

void check_value(double v) {
  if (!(v >= 0.0 && v <= 1.0)) {  // NaN fails this too
    throw std::invalid_argument("ImageGrid: pixel value outside [0,1]");
  }
}

}  // namespace

ImageGrid::ImageGrid(int d1, int d2) : d1_(d1), d2_(d2) {
  check_dims(d1, d2);
  px_.assign(static_cast<std::size_t>(d1) * d2, 0.0);
}

ImageGrid::ImageGrid(int d1, int d2, std::vector<double> pixels) : d1_(d1), d2_(d2) {
  check_dims(d1, d2);
  if (pixels.size() != static_cast<std::size_t>(d1) * d2) {
    throw std::invalid_argument("ImageGrid: pixel count does not match dimensions");
  }
  for (double v : pixels) check_value(v);
  px_ = std::move(pixels);
}

void ImageGrid::set(int i, int j, double v) {
  check_value(v);
  px_[static_cast<std::size_t>(i) * d2_ + j] = v;
}

ImageGrid ImageGrid::random_uniform(int d1, int d2, rng::Stream& stream) {
  std::vector<double> px(static_cast<std::size_t>(d1) * d2);
  for (double& v : px) v = stream.next_double();
  return ImageGrid(d1, d2, std::move(px));
}

ImageGrid ImageGrid::random_texture(int d1, int d2, rng::Stream& stream) {
  constexpr int kModes = 3;
  double amp[kModes], fx[kModes], fy[kModes], ph[kModes];
  for (int m = 0; m < kModes; ++m) {
    amp[m] = stream.next_uniform(0.3, 1.0);
    fx[m] = stream.next_uniform(0.5, 2.5);
    fy[m] = stream.next_uniform(0.5, 2.5);
    ph[m] = stream.next_uniform(0.0, 6.283185307179586);
  }
  std::vector<double> px(static_cast<std::size_t>(d1) * d2);
  for (int i = 0; i < d1; ++i) {
    for (int j = 0; j < d2; ++j) {
      double v = 0.0;
      for (int m = 0; m < kModes; ++m) {
        v += amp[m] * std::cos(fx[m] * i + fy[m] * j + ph[m]);
      }
      // squash to (0,1)
      px[static_cast<std::size_t>(i) * d2 + j] = 0.5 + 0.5 * std::tanh(v / kModes);
    }
  }
  return ImageGrid(d1, d2, std::move(px));
}

}  // namespace hmpcnn
