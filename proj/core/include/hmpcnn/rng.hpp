#pragma once

#include <cmath>
#include <cstdint>

namespace hmpcnn::rng {

// splitmix64 finalizer; the only mixing primitive used in the project.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// Stream identifiers. Every random decision in the project draws from a
// Stream keyed by (seed, tag, index), so samples are independent across
// indices and identical regardless of evaluation order or thread count.
enum class Tag : std::uint64_t {
  model_node = 1,
  sample_pixels = 2,
  sample_label = 3,
  risk_draw = 4,
  train_init = 5,
  train_shuffle = 6,
  bootstrap = 7,
  cover_sample = 8,
  audit = 9,
  perturb = 10,
  node_net = 11,
  generic = 12,
};

// Counter-free splitmix64 sequence seeded from (seed, tag, index).
class Stream {
 public:
  Stream(std::uint64_t seed, Tag tag, std::uint64_t index = 0)
      : state_(derive(seed, static_cast<std::uint64_t>(tag), index)) {}

  std::uint64_t next_u64() {
    state_ += kGolden;
    return mix64(state_);
  }

  // uniform on [0,1), 53-bit resolution
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // integer in [0, n)
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // Box-Muller; 1-u keeps the log argument in (0,1].
    const double u1 = 1.0 - next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  static std::uint64_t derive(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
    std::uint64_t s = mix64(seed + kGolden * (tag + 1));
    return mix64(s + kGolden * (index + 1));
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace hmpcnn::rng
