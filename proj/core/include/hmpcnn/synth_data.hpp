#pragma once

#include <cstdint>
#include <vector>

#include "hmpcnn/grid.hpp"
#include "hmpcnn/hmp_model.hpp"

namespace hmpcnn {

enum class PixelLaw { uniform, smooth_texture };

struct LabeledSample {
  ImageGrid image;
  int label;        // -1 or +1
  double true_eta;  // eval_max_pool of the generating model
};

struct Dataset {
  int d1 = 0, d2 = 0;
  std::uint64_t seed = 0;
  std::uint64_t model_id = 0;  // FNV-1a of the generating model's serialized form
  std::vector<LabeledSample> samples;

  int size() const { return static_cast<int>(samples.size()); }
};

// X ~ i.i.d. pixels from `law`, Y = +1 with probability eta(X). Sample i is a
// pure function of (seed, i): prefixes of a longer run equal shorter runs and
// the result is identical for any thread count.
Dataset sample_dataset(const HmpModel& model, int n, std::uint64_t seed,
                       PixelLaw law = PixelLaw::uniform, int threads = 1);

struct MarginEstimate {
  double p_hat;    // P{ |logit(eta(X))| > threshold }
  double stderr_;  // binomial standard error
  double threshold;
  int n_mc;
};

// Monte Carlo estimate of P{|f_phi*(X)| > 0.5*log n} for the margin condition.
MarginEstimate margin_condition_estimate(const HmpModel& model, int n, int mc,
                                         std::uint64_t seed, int threads = 1);

// Same estimate for an arbitrary threshold F.
MarginEstimate margin_probability(const HmpModel& model, double threshold, int mc,
                                  std::uint64_t seed, int threads = 1);

}  // namespace hmpcnn
