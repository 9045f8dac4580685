#include "hmpcnn/risk_bounds.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hmpcnn/detail/net_kernels.hpp"
#include "hmpcnn/parallel.hpp"

namespace hmpcnn {

namespace {

double xlogx(double z) { return z > 0.0 ? z * std::log(z) : 0.0; }

double binary_entropy(double eta) { return -xlogx(eta) - xlogx(1.0 - eta); }

struct Accumulator {
  double sum = 0.0, sumsq = 0.0;
  void add(double v) {
    sum += v;
    sumsq += v * v;
  }
  void merge(const Accumulator& o) {
    sum += o.sum;
    sumsq += o.sumsq;
  }
  double mean(std::int64_t n) const { return sum / n; }
  double stderr_(std::int64_t n) const {
    if (n < 2) return 0.0;
    const double m = mean(n);
    const double var = std::max(0.0, (sumsq - n * m * m) / (n - 1));
    return std::sqrt(var / n);
  }
};

}  // namespace

RiskReport mc_risks(const ClassifierFn& classifier, const RealFn& realfn,
                    const HmpModel& model, std::int64_t n_mc, std::uint64_t seed, int threads) {
  if (n_mc < 1) throw std::invalid_argument("mc_risks: n_mc must be >= 1");
  enum { k01 = 0, kStar, kEx01, kPhi, kPhiStar, kExPhi, kCount };
  const std::int64_t nblocks = block_count(n_mc);
  std::vector<std::array<Accumulator, kCount>> acc(nblocks);

  parallel_blocks(n_mc, threads, [&](std::int64_t b, std::int64_t e, std::int64_t blk) {
    auto& a = acc[blk];
    for (std::int64_t i = b; i < e; ++i) {
      rng::Stream st(seed, rng::Tag::risk_draw, static_cast<std::uint64_t>(i));
      const ImageGrid x = ImageGrid::random_uniform(model.d1(), model.d2(), st);
      const double eta = eval_max_pool(model, x);
      const int label = classifier(x);
      const double f = realfn(x);

      const double a01 = label == -1 ? eta : 1.0 - eta;
      const double astar = std::min(eta, 1.0 - eta);
      const double aphi =
          eta * detail::softplus_neg(f) + (1.0 - eta) * detail::softplus_neg(-f);
      const double aphistar = binary_entropy(eta);
      a[k01].add(a01);
      a[kStar].add(astar);
      a[kEx01].add(a01 - astar);
      a[kPhi].add(aphi);
      a[kPhiStar].add(aphistar);
      a[kExPhi].add(aphi - aphistar);
    }
  });

  std::array<Accumulator, kCount> total;
  for (const auto& a : acc) {
    for (int q = 0; q < kCount; ++q) total[q].merge(a[q]);
  }
  RiskReport r;
  r.n_mc = n_mc;
  r.seed = seed;
  r.r01 = total[k01].mean(n_mc);
  r.r_star = total[kStar].mean(n_mc);
  r.excess01 = total[kEx01].mean(n_mc);
  r.rphi = total[kPhi].mean(n_mc);
  r.rphi_star = total[kPhiStar].mean(n_mc);
  r.excessphi = total[kExPhi].mean(n_mc);
  r.se01 = total[k01].stderr_(n_mc);
  r.se_star = total[kStar].stderr_(n_mc);
  r.se_excess01 = total[kEx01].stderr_(n_mc);
  r.se_rphi = total[kPhi].stderr_(n_mc);
  r.se_rphi_star = total[kPhiStar].stderr_(n_mc);
  r.se_excessphi = total[kExPhi].stderr_(n_mc);
  return r;
}

ComparisonCheck sqrt_comparison_check(const RiskReport& report) {
  ComparisonCheck c;
  c.lhs = report.excess01;
  const double ephi = report.excessphi;
  c.rhs = ephi > 0.0 ? std::sqrt(ephi) / std::sqrt(2.0) : 0.0;
  // two-sided finite difference of the sqrt transform, robust near zero
  const double up = std::sqrt(std::max(0.0, ephi + report.se_excessphi)) / std::sqrt(2.0);
  const double dn = std::sqrt(std::max(0.0, ephi - report.se_excessphi)) / std::sqrt(2.0);
  const double se_rhs = 0.5 * (up - dn);
  c.slack = c.rhs - c.lhs;
  c.slack_tol = 3.0 * (report.se_excess01 + se_rhs);
  c.holds = c.slack >= -c.slack_tol;
  return c;
}

ComparisonCheck linear_comparison_check(const RiskReport& report) {
  ComparisonCheck c;
  c.lhs = report.excess01;
  c.rhs = 2.0 * report.excessphi + 4.0 * report.rphi_star;
  const double se_rhs = 2.0 * report.se_excessphi + 4.0 * report.se_rphi_star;
  c.slack = c.rhs - c.lhs;
  c.slack_tol = 3.0 * (report.se_excess01 + se_rhs);
  c.holds = c.slack >= -c.slack_tol;
  return c;
}

MarginBoundCheck margin_entropy_bound_check(const HmpModel& model, double f_tilde, double c8,
                                            std::int64_t n_mc, std::uint64_t seed, int threads) {
  if (f_tilde <= 0.0) throw std::invalid_argument("margin_entropy_bound_check: F must be > 0");
  const std::int64_t nblocks = block_count(n_mc);
  std::vector<Accumulator> ent(nblocks);
  std::vector<std::int64_t> hits(nblocks, 0);
  parallel_blocks(n_mc, threads, [&](std::int64_t b, std::int64_t e, std::int64_t blk) {
    for (std::int64_t i = b; i < e; ++i) {
      rng::Stream st(seed, rng::Tag::risk_draw, static_cast<std::uint64_t>(i));
      const ImageGrid x = ImageGrid::random_uniform(model.d1(), model.d2(), st);
      const double eta = eval_max_pool(model, x);
      ent[blk].add(binary_entropy(eta));
      const bool far = eta <= 0.0 || eta >= 1.0 ||
                       std::abs(std::log(eta / (1.0 - eta))) > f_tilde;
      if (far) ++hits[blk];
    }
  });
  Accumulator total;
  std::int64_t far_total = 0;
  for (std::int64_t b = 0; b < nblocks; ++b) {
    total.merge(ent[b]);
    far_total += hits[b];
  }
  MarginBoundCheck m;
  m.measured = total.mean(n_mc);
  m.se_measured = total.stderr_(n_mc);
  m.bound = c8 * f_tilde * std::exp(-f_tilde);
  m.hypothesis_p = static_cast<double>(far_total) / n_mc;
  m.hypothesis_req = 1.0 - std::exp(-f_tilde);
  m.vacuous = m.hypothesis_p < m.hypothesis_req;
  m.holds = m.vacuous || m.measured <= m.bound + 3.0 * m.se_measured;
  return m;
}

double covering_bound(double eps, int l1, int l2, int d1, int d2, double c1, double c10, int n) {
  if (!(eps > 0.0 && eps < 1.0)) {
    throw std::invalid_argument("covering_bound: eps must lie in (0,1)");
  }
  if (static_cast<long long>(d1) * d2 <= 1) {
    throw std::invalid_argument("covering_bound: d1*d2 must exceed 1");
  }
  const double beta = c1 * std::log(static_cast<double>(n));
  if (beta < 2.0) {
    throw std::invalid_argument("covering_bound: c1*log n must be >= 2");
  }
  const double lmax = static_cast<double>(std::max(l1, l2));
  return c10 * lmax * lmax * std::log(lmax * d1 * d2) * std::log(beta / eps);
}

namespace {

// Farthest-first traversal radii: r[j] is the distance of the (j+1)-th chosen
// center to the centers before it. Cover count at eps = 1 + #{r[j] >= eps}.
std::vector<double> traversal_radii(const FunctionSampler& sampler,
                                    const std::vector<ImageGrid>& points, int budget,
                                    std::uint64_t seed) {
  if (budget < 1) throw std::invalid_argument("empirical_cover: budget must be >= 1");
  if (points.empty()) throw std::invalid_argument("empirical_cover: needs evaluation points");
  (void)seed;
  const std::size_t np = points.size();
  std::vector<std::vector<double>> values(budget, std::vector<double>(np));
  for (int i = 0; i < budget; ++i) {
    const RealFn f = sampler(i);
    for (std::size_t p = 0; p < np; ++p) values[i][p] = f(points[p]);
  }
  auto dist = [&](int a, int b) {
    double s = 0.0;
    for (std::size_t p = 0; p < np; ++p) s += std::abs(values[a][p] - values[b][p]);
    return s / static_cast<double>(np);
  };
  std::vector<double> min_dist(budget, std::numeric_limits<double>::infinity());
  std::vector<double> radii;
  int current = 0;  // first sampled function seeds the traversal
  for (int step = 1; step < budget; ++step) {
    for (int i = 0; i < budget; ++i) {
      min_dist[i] = std::min(min_dist[i], dist(i, current));
    }
    // strict > gives the first-index tiebreak
    double far_d = -1.0;
    int far_i = -1;
    for (int i = 0; i < budget; ++i) {
      if (min_dist[i] > far_d) {
        far_d = min_dist[i];
        far_i = i;
      }
    }
    if (far_i < 0 || far_d <= 0.0) break;
    radii.push_back(far_d);
    min_dist[far_i] = 0.0;
    current = far_i;
  }
  return radii;
}

}  // namespace

int empirical_cover(const FunctionSampler& sampler, const std::vector<ImageGrid>& points,
                    double eps, int budget, std::uint64_t seed) {
  if (eps <= 0.0) throw std::invalid_argument("empirical_cover: eps must be positive");
  const std::vector<double> radii = traversal_radii(sampler, points, budget, seed);
  int count = 1;
  for (double r : radii) {
    if (r >= eps) ++count;
  }
  return count;
}

std::vector<int> empirical_cover_profile(const FunctionSampler& sampler,
                                         const std::vector<ImageGrid>& points,
                                         const std::vector<double>& eps_list, int budget,
                                         std::uint64_t seed) {
  const std::vector<double> radii = traversal_radii(sampler, points, budget, seed);
  std::vector<int> out;
  out.reserve(eps_list.size());
  for (double eps : eps_list) {
    if (eps <= 0.0) throw std::invalid_argument("empirical_cover: eps must be positive");
    int count = 1;
    for (double r : radii) {
      if (r >= eps) ++count;
    }
    out.push_back(count);
  }
  return out;
}

double rate_exponent(double p, RateVariant variant) {
  if (p < 1.0) throw std::invalid_argument("rate_exponent: p must be >= 1");
  switch (variant) {
    case RateVariant::plain:
      return std::min(p / (4.0 * p + 8.0), 1.0 / 8.0);
    case RateVariant::margin:
      return std::min(p / (2.0 * p + 4.0), 1.0 / 4.0);
  }
  throw std::logic_error("unknown RateVariant");
}

namespace {

struct LineFit {
  double slope, intercept;
};

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

}  // namespace

SlopeFit fit_rate_slope(const std::vector<double>& ns,
                        const std::vector<std::vector<double>>& excess, std::uint64_t seed,
                        int bootstrap) {
  if (ns.size() != excess.size()) {
    throw std::invalid_argument("fit_rate_slope: grid size mismatch");
  }
  for (std::size_t i = 1; i < ns.size(); ++i) {
    if (!(ns[i] > ns[i - 1])) {
      throw std::invalid_argument("fit_rate_slope: n values must be strictly increasing");
    }
  }
  SlopeFit fit;
  std::vector<double> xs, ys;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (excess[i].empty()) throw std::invalid_argument("fit_rate_slope: empty repetition set");
    double m = 0.0;
    for (double v : excess[i]) m += v;
    m /= excess[i].size();
    if (m > 0.0) {
      xs.push_back(std::log(ns[i]));
      ys.push_back(std::log(m));
      kept.push_back(i);
    } else {
      fit.excluded.push_back(static_cast<int>(i));
    }
  }
  if (xs.size() < 3) {
    throw std::invalid_argument("fit_rate_slope: needs >= 3 grid points with positive excess");
  }
  const LineFit base = least_squares(xs, ys);
  fit.slope = base.slope;
  fit.intercept = base.intercept;

  std::vector<double> slopes;
  slopes.reserve(bootstrap);
  for (int b = 0; b < bootstrap; ++b) {
    rng::Stream st(seed, rng::Tag::bootstrap, static_cast<std::uint64_t>(b));
    std::vector<double> bx, by;
    for (std::size_t idx : kept) {
      const auto& reps = excess[idx];
      double m = 0.0;
      for (std::size_t r = 0; r < reps.size(); ++r) {
        m += reps[st.next_below(reps.size())];
      }
      m /= reps.size();
      if (m > 0.0) {
        bx.push_back(std::log(ns[idx]));
        by.push_back(std::log(m));
      }
    }
    if (bx.size() >= 3) slopes.push_back(least_squares(bx, by).slope);
  }
  if (!slopes.empty()) {
    std::sort(slopes.begin(), slopes.end());
    const auto pick = [&](double q) {
      const double pos = q * (slopes.size() - 1);
      const std::size_t lo = static_cast<std::size_t>(pos);
      const std::size_t hi = std::min(lo + 1, slopes.size() - 1);
      const double w = pos - lo;
      return (1.0 - w) * slopes[lo] + w * slopes[hi];
    };
    fit.ci_lo = pick(0.025);
    fit.ci_hi = pick(0.975);
  } else {
    fit.ci_lo = fit.ci_hi = fit.slope;
  }
  return fit;
}

}  // namespace hmpcnn
