#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmpcnn/cnn_model.hpp"
#include "hmpcnn/synth_data.hpp"

namespace hmpcnn {

// phi(z) = log(1+exp(-z)), numerically stable on both tails
double cross_entropy_phi(double z);
// phi'(z) = -1/(1+exp(z))
double cross_entropy_phi_prime(double z);

// mean of phi(Y_i * F(X_i)) over the dataset
double empirical_xent(const Predictor& predictor, const Dataset& data);

struct Gradients {
  CnnWeights cnn;
  FnnWeights fnn;
};

Gradients zero_gradients(const CnnArchitecture& cnn_arch, const FnnArchitecture& fnn_arch);

// Subgradient of phi(y * T_beta(g(f(x)))) wrt every weight. Conventions:
// ReLU'(0)=0, max ties route to the first attaining position in
// first-index-major scan order, truncation passes zero gradient when
// |g(f(x))| > beta.
Gradients backward(const Predictor& predictor, const ImageGrid& image, int label);

enum class Optimizer { gradient_descent, momentum, adam };

Optimizer optimizer_from_string(const std::string& s);
std::string to_string(Optimizer o);

struct TrainConfig {
  Optimizer optimizer = Optimizer::adam;
  double step_size = 0.01;
  double step_decay = 0.0;    // lr_t = step_size / (1 + step_decay * epoch)
  double momentum = 0.9;      // momentum optimizer only
  int epochs = 200;
  int batch_size = 0;         // 0 = full batch
  int restarts = 1;
  double init_scale = 0.5;    // symmetric uniform, scaled by 1/sqrt(fan_in)
  std::uint64_t seed = 0;
  int float_width = 64;       // 64 (reference) or 32
  int threads = 1;            // restarts run concurrently
  bool grad_check = false;    // spot-check a few coordinates at init
};

struct RestartTrace {
  std::vector<double> losses;  // epoch-start losses, then the final loss
  bool diverged = false;
  double best_loss = 0.0;
};

struct GradCheckSummary {
  int checked = 0;
  int kinks_skipped = 0;
  double max_rel_err = 0.0;
};

struct TrainReport {
  double best_phi_risk = 0.0;   // min over restarts of their best tracked loss
  int chosen_restart = -1;      // -1 means the zero function was never beaten
  std::vector<RestartTrace> restarts;
  double wall_seconds = 0.0;
  int diverged_restarts = 0;
  GradCheckSummary grad_check;
};

struct TrainResult {
  Predictor predictor;
  TrainReport report;
};

// Approximate cross-entropy ERM over the class: multi-restart first-order
// optimization, deterministic in (config.seed, data). The zero function is
// always admitted as a candidate, so the reported risk never exceeds log 2.
// Throws std::runtime_error if every restart diverges.
TrainResult train(const CnnArchitecture& cnn_arch, const FnnArchitecture& fnn_arch,
                  TruncationBound beta, const Dataset& data, const TrainConfig& config);

// Initial weights used by restart r (exposed for tests).
Predictor init_predictor(const CnnArchitecture& cnn_arch, const FnnArchitecture& fnn_arch,
                         TruncationBound beta, double init_scale, std::uint64_t seed,
                         int restart);

}  // namespace hmpcnn
