#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "hmpcnn/io.hpp"
#include "hmpcnn/synth_data.hpp"

using namespace hmpcnn;

namespace {

HmpModel constant_model(double c, int d1 = 4, int d2 = 4) {
  return make_model({1, NodeFamily::constant, d1, d2, c}, 1);
}

}  // namespace

TEST_CASE("label law at the extremes") {
  const Dataset all_pos = sample_dataset(constant_model(1.0), 100, 3);
  for (const auto& s : all_pos.samples) CHECK(s.label == +1);

  const Dataset all_neg = sample_dataset(constant_model(0.0), 100, 3);
  for (const auto& s : all_neg.samples) CHECK(s.label == -1);
}

TEST_CASE("balanced labels stay inside the binomial window") {
  const Dataset ds = sample_dataset(constant_model(0.5), 10000, 99);
  double mean = 0.0;
  for (const auto& s : ds.samples) mean += s.label;
  mean /= ds.size();
  CHECK(std::abs(mean) < 4.0 / std::sqrt(10000.0));  // 4 sigma for +/-1 labels
}

TEST_CASE("sampling is deterministic, prefix-stable and thread-invariant") {
  const HmpModel m = make_model({1, NodeFamily::affine_clamped, 4, 4, 0.5}, 7);
  const Dataset a = sample_dataset(m, 50, 11);
  const Dataset b = sample_dataset(m, 50, 11);
  const Dataset prefix = sample_dataset(m, 20, 11);
  const Dataset threaded = sample_dataset(m, 50, 11, PixelLaw::uniform, 4);
  REQUIRE(a.size() == 50);
  for (int i = 0; i < 50; ++i) {
    CHECK(a.samples[i].label == b.samples[i].label);
    CHECK(a.samples[i].true_eta == b.samples[i].true_eta);
    CHECK(a.samples[i].image.pixels() == b.samples[i].image.pixels());
    CHECK(a.samples[i].image.pixels() == threaded.samples[i].image.pixels());
    CHECK(a.samples[i].label == threaded.samples[i].label);
    if (i < 20) {
      CHECK(a.samples[i].image.pixels() == prefix.samples[i].image.pixels());
      CHECK(a.samples[i].label == prefix.samples[i].label);
      CHECK(a.samples[i].true_eta == prefix.samples[i].true_eta);
    }
  }
}

TEST_CASE("true_eta matches the generating model") {
  const HmpModel m = make_model({2, NodeFamily::soft_max_blend, 6, 6, 0.5}, 13);
  const Dataset ds = sample_dataset(m, 25, 17);
  for (const auto& s : ds.samples) {
    CHECK(s.true_eta == eval_max_pool(m, s.image));
  }
}

TEST_CASE("conditional label frequency tracks eta per bucket") {
  // 10 buckets over eta, 3 binomial standard errors each
  const HmpModel m = make_model({1, NodeFamily::affine_clamped, 6, 6, 0.5}, 23);
  const Dataset ds = sample_dataset(m, 100000, 29, PixelLaw::uniform, 4);
  double count[10] = {0}, pos[10] = {0}, eta_sum[10] = {0};
  for (const auto& s : ds.samples) {
    int b = std::min(9, static_cast<int>(s.true_eta * 10.0));
    count[b] += 1.0;
    eta_sum[b] += s.true_eta;
    if (s.label == +1) pos[b] += 1.0;
  }
  for (int b = 0; b < 10; ++b) {
    if (count[b] < 50) continue;  // skip nearly-empty buckets
    const double mean_eta = eta_sum[b] / count[b];
    const double freq = pos[b] / count[b];
    const double se = std::sqrt(std::max(mean_eta * (1.0 - mean_eta), 1e-6) / count[b]);
    CHECK(std::abs(freq - mean_eta) <= 3.0 * se + 1e-12);
  }
}

TEST_CASE("margin condition estimates for flat and extreme models") {
  const MarginEstimate sure = margin_condition_estimate(constant_model(1.0), 100, 2000, 5);
  CHECK(sure.p_hat == 1.0);
  const MarginEstimate never = margin_condition_estimate(constant_model(0.5), 100, 2000, 5);
  CHECK(never.p_hat == 0.0);
  // threshold is 0.5*log n
  CHECK(sure.threshold == doctest::Approx(0.5 * std::log(100.0)));
}

TEST_CASE("sharpening raises the margin probability") {
  const HmpModel m = make_model({1, NodeFamily::affine_clamped, 8, 8, 0.5}, 31);
  const HmpModel s = sharpen_margin(m, 8.0);
  const MarginEstimate base = margin_probability(m, 2.0, 4000, 7);
  const MarginEstimate sharp = margin_probability(s, 2.0, 4000, 7);
  CHECK(sharp.p_hat >= base.p_hat);
}

TEST_CASE("dataset container and CSV export round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "hmpcnn_synth_test";
  fs::create_directories(dir);
  const HmpModel m = make_model({1, NodeFamily::affine_clamped, 3, 3, 0.5}, 37);
  Dataset ds = sample_dataset(m, 10, 41);
  ds.model_id = io::model_id(m);
  const std::string bin = (dir / "data.bin").string();
  io::save_dataset(ds, bin);
  const Dataset back = io::load_dataset(bin);
  REQUIRE(back.size() == ds.size());
  CHECK(back.seed == ds.seed);
  CHECK(back.model_id == ds.model_id);
  for (int i = 0; i < ds.size(); ++i) {
    CHECK(back.samples[i].label == ds.samples[i].label);
    CHECK(std::abs(back.samples[i].true_eta - ds.samples[i].true_eta) < 1e-6);
    for (std::size_t p = 0; p < ds.samples[i].image.pixels().size(); ++p) {
      CHECK(std::abs(back.samples[i].image.pixels()[p] - ds.samples[i].image.pixels()[p]) <
            1e-6);
    }
  }
  // saving the loaded dataset reproduces the file byte for byte
  const std::string bin2 = (dir / "data2.bin").string();
  io::save_dataset(back, bin2);
  CHECK(io::read_text(bin) == io::read_text(bin2));

  const std::string csv = (dir / "data.csv").string();
  io::export_dataset_csv(ds, csv);
  const std::string text = io::read_text(csv);
  CHECK(text.rfind("sample,label,true_eta,px_0_0", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 11);  // header + 10 rows
  fs::remove_all(dir);
}
