#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hmpcnn/grid.hpp"
#include "hmpcnn/rng.hpp"

namespace hmpcnn {

// Families of 4-ary combiner functions g: R^4 -> [0,1] with analytically
// certified Lipschitz constants (Euclidean metric). Every family maps any
// input into [0,1], hence is bounded by 2 on [-2,2]^4 as well.
enum class NodeFamily {
  constant,
  affine_clamped,      // clamp(a*mean(u)+b, 0, 1), C = |a|/2
  soft_max_blend,      // clamp(lam*(lse_tau(u)-tau*log4) + (1-lam)*mean(u)), C = lam+(1-lam)/2
  radial_bump_mixture, // sum_j w_j exp(-|u-c_j|^2/(2 s_j^2)), C = sum w_j e^{-1/2}/s_j
  hard_max,            // max(u), C = 1
  sharpened,           // logistic(gamma * clamped-logit(inner(u))), C = gamma * C_inner
};

std::string to_string(NodeFamily f);
NodeFamily node_family_from_string(const std::string& s);

struct SmoothNodeFunction {
  NodeFamily family = NodeFamily::constant;
  std::vector<double> params;
  // only used by the sharpened wrapper
  std::shared_ptr<const SmoothNodeFunction> inner;

  double operator()(double x1, double x2, double x3, double x4) const;
  // certified Lipschitz constant wrt the Euclidean distance on R^4
  double lipschitz() const;
  // declared smoothness exponent (metadata; p=1 is what lipschitz() certifies)
  double declared_smoothness() const;

  bool operator==(const SmoothNodeFunction& o) const;
};

// Empirical Lipschitz ratio over sampled pairs from [lo,hi]^4.
double lipschitz_audit(const SmoothNodeFunction& g, double lo, double hi, int pairs,
                       rng::Stream& stream);

// Aposteriori model: eta(x) = max over window placements of a level-l
// hierarchical composition of 4-ary node functions over 2^l x 2^l windows.
class HmpModel {
 public:
  HmpModel(int level, int d1, int d2, std::vector<SmoothNodeFunction> nodes);

  int level() const { return level_; }
  int d1() const { return d1_; }
  int d2() const { return d2_; }
  int window() const { return 1 << level_; }
  int node_count() const { return static_cast<int>(nodes_.size()); }

  // node (k,s): k in 1..level, s in 1..4^(level-k); stored level-major (k=1 first)
  const SmoothNodeFunction& node(int k, int s) const;
  SmoothNodeFunction& node(int k, int s);
  const std::vector<SmoothNodeFunction>& nodes() const { return nodes_; }

  // certified Lipschitz constant: max over nodes
  double lipschitz() const;

  static int expected_node_count(int level);
  static int node_offset(int level, int k, int s);

 private:
  int level_, d1_, d2_;
  std::vector<SmoothNodeFunction> nodes_;
};

// Hierarchical composition f_{l,1} on a full 2^l x 2^l patch.
double eval_hierarchical(const HmpModel& model, const ImageGrid& patch);

// Same recursion on the window of `image` anchored at 0-based (i0,j0).
double eval_window(const HmpModel& model, const ImageGrid& image, int i0, int j0);

// max over all (d1-2^l+1)*(d2-2^l+1) placements
double eval_max_pool(const HmpModel& model, const ImageGrid& image);

// Bayes rule: +1 iff eta >= 1/2
int bayes_classify(double eta);

// log(eta/(1-eta)) clamped to [-clamp_magnitude, clamp_magnitude];
// eta=0 -> -clamp, eta=1 -> +clamp
double logit(double eta, double clamp_magnitude);

inline constexpr double kDefaultLogitClamp = 40.0;

double logistic(double z);

struct ModelSpec {
  int level = 1;
  NodeFamily family = NodeFamily::affine_clamped;
  int d1 = 0, d2 = 0;          // default: 2^level when 0
  double constant_value = 0.5; // constant family only
};

// Deterministic in (spec, seed); node parameters drawn from per-node streams.
HmpModel make_model(const ModelSpec& spec, std::uint64_t seed);

// Copy of `model` with every node's output shifted by a per-node value in
// [-max_shift, max_shift] (constant: value shift; affine: bias shift).
// Only constant/affine families are supported.
HmpModel perturb_model(const HmpModel& model, double max_shift, std::uint64_t seed);

// Root-composition margin sharpening: the root node is post-composed with
// t -> logistic(gamma * logit(t, clamp)). All other nodes are untouched.
HmpModel sharpen_margin(const HmpModel& model, double gamma,
                        double clamp_magnitude = kDefaultLogitClamp);

// sup_{[-2,2]^4 grid} |g_{k,s} - gbar_{k,s}| maximized over nodes.
// Exact for constant and affine families (see docs/model_families.md).
double node_sup_distance(const HmpModel& a, const HmpModel& b, int grid_pts = 21);

struct GapAndBound {
  double gap;      // |m(x) - mbar(x)|
  double bound;    // (2C+1)^l * max node sup-distance
  double sup_dist; // the max node sup-distance used
};

// Perturbation error propagation check: gap <= bound whenever the grid sup
// is exact for the family.
GapAndBound perturbation_gap_and_bound(const HmpModel& model, const HmpModel& perturbed,
                                       const ImageGrid& image, int grid_pts = 21);

}  // namespace hmpcnn
