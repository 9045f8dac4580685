#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hmpcnn/grid.hpp"
#include "hmpcnn/hmp_model.hpp"

namespace hmpcnn {

// Monte Carlo risk evaluation with the label integrated out analytically:
// each draw contributes its conditional expectation given X, so constant-eta
// models are evaluated exactly (zero standard error).
struct RiskReport {
  double r01 = 0.0;         // misclassification risk of the classifier
  double r_star = 0.0;      // Bayes risk E min(eta, 1-eta)
  double excess01 = 0.0;    // mean of the pointwise nonnegative gap
  double rphi = 0.0;        // E[eta phi(F) + (1-eta) phi(-F)]
  double rphi_star = 0.0;   // E of the binary entropy of eta
  double excessphi = 0.0;
  double se01 = 0.0, se_star = 0.0, se_excess01 = 0.0;
  double se_rphi = 0.0, se_rphi_star = 0.0, se_excessphi = 0.0;
  std::int64_t n_mc = 0;
  std::uint64_t seed = 0;
};

using ClassifierFn = std::function<int(const ImageGrid&)>;
using RealFn = std::function<double(const ImageGrid&)>;

RiskReport mc_risks(const ClassifierFn& classifier, const RealFn& realfn,
                    const HmpModel& model, std::int64_t n_mc, std::uint64_t seed,
                    int threads = 1);

struct ComparisonCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;       // rhs - lhs
  double slack_tol = 0.0;   // 3 * propagated standard error
  bool holds = false;       // slack >= -slack_tol
};

// excess01 <= sqrt(excessphi)/sqrt(2)
ComparisonCheck sqrt_comparison_check(const RiskReport& report);

// excess01 <= 2*excessphi + 4*E[phi(Y f_phi*)], the margin-friendly variant
ComparisonCheck linear_comparison_check(const RiskReport& report);

struct MarginBoundCheck {
  double measured = 0.0;     // E[phi(Y f_phi*)] = E of the binary entropy
  double bound = 0.0;        // c8 * F * exp(-F)
  double hypothesis_p = 0.0; // P{|f_phi*| > F}
  double hypothesis_req = 0.0;
  bool vacuous = false;      // hypothesis not certified
  bool holds = false;        // vacuous, or measured <= bound + 3*se
  double se_measured = 0.0;
};

// E[phi(Y f_phi*)] <= c8 * F * exp(-F) whenever P{|f_phi*| > F} >= 1-exp(-F)
MarginBoundCheck margin_entropy_bound_check(const HmpModel& model, double f_tilde, double c8,
                                            std::int64_t n_mc, std::uint64_t seed,
                                            int threads = 1);

// log covering-number bound: c10 * Lmax^2 * log(Lmax*d1*d2) * log(c1*log n/eps)
double covering_bound(double eps, int l1, int l2, int d1, int d2, double c1, double c10, int n);

// Farthest-first greedy cover count of a sampled function family under the
// empirical L1 distance on the given points. Diagnostic only; the count is
// monotone nonincreasing in eps by construction.
using FunctionSampler = std::function<RealFn(int index)>;

int empirical_cover(const FunctionSampler& sampler, const std::vector<ImageGrid>& points,
                    double eps, int budget, std::uint64_t seed);

// Cover counts for several eps against one sampled family (shared traversal).
std::vector<int> empirical_cover_profile(const FunctionSampler& sampler,
                                         const std::vector<ImageGrid>& points,
                                         const std::vector<double>& eps_list, int budget,
                                         std::uint64_t seed);

enum class RateVariant { plain, margin };  // n^{-min(p/(4p+8),1/8)} vs n^{-min(p/(2p+4),1/4)}

double rate_exponent(double p, RateVariant variant);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;  // bootstrap 95% interval
  std::vector<int> excluded;        // grid indices dropped for nonpositive means
};

// Least-squares slope of log(mean excess) vs log n with a bootstrap CI over
// repetitions. excess[i][r] is the r-th repetition at grid point n[i].
SlopeFit fit_rate_slope(const std::vector<double>& ns,
                        const std::vector<std::vector<double>>& excess,
                        std::uint64_t seed, int bootstrap = 1000);

}  // namespace hmpcnn
