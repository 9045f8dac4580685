#include "hmpcnn/synth_data.hpp"

#include <cmath>
#include <stdexcept>

#include "hmpcnn/parallel.hpp"

namespace hmpcnn {

namespace {

LabeledSample draw_sample(const HmpModel& model, std::uint64_t seed, std::int64_t idx,
                          PixelLaw law) {
  rng::Stream px_stream(seed, rng::Tag::sample_pixels, static_cast<std::uint64_t>(idx));
  ImageGrid image = law == PixelLaw::uniform
                        ? ImageGrid::random_uniform(model.d1(), model.d2(), px_stream)
                        : ImageGrid::random_texture(model.d1(), model.d2(), px_stream);
  const double eta = eval_max_pool(model, image);
  rng::Stream label_stream(seed, rng::Tag::sample_label, static_cast<std::uint64_t>(idx));
  const int label = label_stream.next_double() < eta ? +1 : -1;
  return LabeledSample{std::move(image), label, eta};
}

}  // namespace

Dataset sample_dataset(const HmpModel& model, int n, std::uint64_t seed, PixelLaw law,
                       int threads) {
  if (n < 1) throw std::invalid_argument("sample_dataset: n must be >= 1");
  Dataset ds;
  ds.d1 = model.d1();
  ds.d2 = model.d2();
  ds.seed = seed;
  ds.samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    ds.samples.push_back(LabeledSample{ImageGrid(model.d1(), model.d2()), 0, 0.0});
  }
  parallel_blocks(n, threads, [&](std::int64_t b, std::int64_t e, std::int64_t) {
    for (std::int64_t i = b; i < e; ++i) {
      ds.samples[static_cast<std::size_t>(i)] = draw_sample(model, seed, i, law);
    }
  });
  return ds;
}

MarginEstimate margin_probability(const HmpModel& model, double threshold, int mc,
                                  std::uint64_t seed, int threads) {
  if (mc < 1) throw std::invalid_argument("margin_probability: mc must be >= 1");
  const std::int64_t nblocks = block_count(mc);
  std::vector<std::int64_t> hits(nblocks, 0);
  parallel_blocks(mc, threads, [&](std::int64_t b, std::int64_t e, std::int64_t blk) {
    std::int64_t h = 0;
    for (std::int64_t i = b; i < e; ++i) {
      rng::Stream st(seed, rng::Tag::risk_draw, static_cast<std::uint64_t>(i));
      const ImageGrid x = ImageGrid::random_uniform(model.d1(), model.d2(), st);
      const double eta = eval_max_pool(model, x);
      // true logit: eta in {0,1} exceeds every finite threshold
      const bool far = eta <= 0.0 || eta >= 1.0 ||
                       std::abs(std::log(eta / (1.0 - eta))) > threshold;
      if (far) ++h;
    }
    hits[blk] = h;
  });
  std::int64_t total = 0;
  for (std::int64_t h : hits) total += h;
  const double p = static_cast<double>(total) / mc;
  const double se = std::sqrt(std::max(p * (1.0 - p), 0.0) / mc);
  return MarginEstimate{p, se, threshold, mc};
}

MarginEstimate margin_condition_estimate(const HmpModel& model, int n, int mc,
                                         std::uint64_t seed, int threads) {
  if (n < 2) throw std::invalid_argument("margin_condition_estimate: n must be >= 2");
  return margin_probability(model, 0.5 * std::log(static_cast<double>(n)), mc, seed, threads);
}

}  // namespace hmpcnn
