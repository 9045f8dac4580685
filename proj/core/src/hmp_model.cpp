#include "hmpcnn/hmp_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hmpcnn {

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

double mean4(double a, double b, double c, double d) { return 0.25 * (a + b + c + d); }

}  // namespace

std::string to_string(NodeFamily f) {
  switch (f) {
    case NodeFamily::constant: return "constant";
    case NodeFamily::affine_clamped: return "affine-clamped";
    case NodeFamily::soft_max_blend: return "soft-max-blend";
    case NodeFamily::radial_bump_mixture: return "radial-bump-mixture";
    case NodeFamily::hard_max: return "hard-max";
    case NodeFamily::sharpened: return "sharpened";
  }
  throw std::logic_error("unknown NodeFamily");
}

NodeFamily node_family_from_string(const std::string& s) {
  if (s == "constant") return NodeFamily::constant;
  if (s == "affine-clamped") return NodeFamily::affine_clamped;
  if (s == "soft-max-blend") return NodeFamily::soft_max_blend;
  if (s == "radial-bump-mixture") return NodeFamily::radial_bump_mixture;
  if (s == "hard-max") return NodeFamily::hard_max;
  if (s == "sharpened") return NodeFamily::sharpened;
  throw std::invalid_argument("unknown node family tag: " + s);
}

double logistic(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double logit(double eta, double clamp_magnitude) {
  if (eta <= 0.0) return -clamp_magnitude;
  if (eta >= 1.0) return clamp_magnitude;
  const double v = std::log(eta / (1.0 - eta));
  return std::min(clamp_magnitude, std::max(-clamp_magnitude, v));
}

int bayes_classify(double eta) { return eta >= 0.5 ? +1 : -1; }

double SmoothNodeFunction::operator()(double x1, double x2, double x3, double x4) const {
  switch (family) {
    case NodeFamily::constant:
      return params[0];
    case NodeFamily::affine_clamped:
      return clamp01(params[0] * mean4(x1, x2, x3, x4) + params[1]);
    case NodeFamily::soft_max_blend: {
      const double lam = params[0];
      const double tau = params[1];
      const double m = std::max(std::max(x1, x2), std::max(x3, x4));
      const double lse =
          m + tau * std::log(std::exp((x1 - m) / tau) + std::exp((x2 - m) / tau) +
                             std::exp((x3 - m) / tau) + std::exp((x4 - m) / tau));
      const double smoothmax = lse - tau * std::log(4.0);
      return clamp01(lam * smoothmax + (1.0 - lam) * mean4(x1, x2, x3, x4));
    }
    case NodeFamily::radial_bump_mixture: {
      const int n_bumps = static_cast<int>(params[0]);
      double v = 0.0;
      for (int j = 0; j < n_bumps; ++j) {
        const double* p = &params[1 + 6 * j];  // w, sigma, c1..c4
        const double w = p[0], sigma = p[1];
        const double dx1 = x1 - p[2], dx2 = x2 - p[3], dx3 = x3 - p[4], dx4 = x4 - p[5];
        const double r2 = dx1 * dx1 + dx2 * dx2 + dx3 * dx3 + dx4 * dx4;
        v += w * std::exp(-r2 / (2.0 * sigma * sigma));
      }
      return v;
    }
    case NodeFamily::hard_max:
      return std::max(std::max(x1, x2), std::max(x3, x4));
    case NodeFamily::sharpened: {
      const double t = (*inner)(x1, x2, x3, x4);
      return logistic(params[0] * logit(t, params[1]));
    }
  }
  throw std::logic_error("unknown NodeFamily");
}

double SmoothNodeFunction::lipschitz() const {
  switch (family) {
    case NodeFamily::constant:
      return 0.0;
    case NodeFamily::affine_clamped:
      return 0.5 * std::abs(params[0]);
    case NodeFamily::soft_max_blend:
      // lse gradient is a softmax vector (L2 norm <= 1), mean has norm 1/2
      return params[0] + (1.0 - params[0]) * 0.5;
    case NodeFamily::radial_bump_mixture: {
      const int n_bumps = static_cast<int>(params[0]);
      double c = 0.0;
      for (int j = 0; j < n_bumps; ++j) {
        const double w = params[1 + 6 * j];
        const double sigma = params[2 + 6 * j];
        c += w * std::exp(-0.5) / sigma;
      }
      return c;
    }
    case NodeFamily::hard_max:
      return 1.0;
    case NodeFamily::sharpened:
      // sup |d logistic(gamma*logit t)/dt| = gamma, attained at t=1/2
      return params[0] * inner->lipschitz();
  }
  throw std::logic_error("unknown NodeFamily");
}

double SmoothNodeFunction::declared_smoothness() const {
  switch (family) {
    case NodeFamily::constant: return 2.0;
    case NodeFamily::radial_bump_mixture: return 2.0;
    default: return 1.0;  // clamp/max kinks
  }
}

bool SmoothNodeFunction::operator==(const SmoothNodeFunction& o) const {
  if (family != o.family || params != o.params) return false;
  if ((inner == nullptr) != (o.inner == nullptr)) return false;
  return inner == nullptr || *inner == *o.inner;
}

double lipschitz_audit(const SmoothNodeFunction& g, double lo, double hi, int pairs,
                       rng::Stream& stream) {
  double worst = 0.0;
  for (int p = 0; p < pairs; ++p) {
    double u[4], v[4];
    for (double& x : u) x = stream.next_uniform(lo, hi);
    for (double& x : v) x = stream.next_uniform(lo, hi);
    double d2 = 0.0;
    for (int i = 0; i < 4; ++i) d2 += (u[i] - v[i]) * (u[i] - v[i]);
    if (d2 == 0.0) continue;
    const double ratio =
        std::abs(g(u[0], u[1], u[2], u[3]) - g(v[0], v[1], v[2], v[3])) / std::sqrt(d2);
    worst = std::max(worst, ratio);
  }
  return worst;
}

int HmpModel::expected_node_count(int level) {
  return ((1 << (2 * level)) - 1) / 3;  // (4^l - 1)/3
}

int HmpModel::node_offset(int level, int k, int s) {
  int off = 0;
  for (int kk = 1; kk < k; ++kk) off += 1 << (2 * (level - kk));
  return off + (s - 1);
}

HmpModel::HmpModel(int level, int d1, int d2, std::vector<SmoothNodeFunction> nodes)
    : level_(level), d1_(d1), d2_(d2), nodes_(std::move(nodes)) {
  if (level < 1) throw std::invalid_argument("HmpModel: level must be >= 1");
  if ((1 << level) > std::min(d1, d2)) {
    throw std::invalid_argument("HmpModel: 2^level must not exceed min{d1,d2}");
  }
  if (static_cast<int>(nodes_.size()) != expected_node_count(level)) {
    throw std::invalid_argument("HmpModel: node count must be (4^l-1)/3");
  }
}

const SmoothNodeFunction& HmpModel::node(int k, int s) const {
  return nodes_[node_offset(level_, k, s)];
}

SmoothNodeFunction& HmpModel::node(int k, int s) {
  return nodes_[node_offset(level_, k, s)];
}

double HmpModel::lipschitz() const {
  double c = 0.0;
  for (const auto& g : nodes_) c = std::max(c, g.lipschitz());
  return c;
}

namespace {

double eval_node(const HmpModel& m, const ImageGrid& img, int k, int s, int i0, int j0) {
  if (k == 1) {
    return m.node(1, s)(img.at(i0, j0), img.at(i0 + 1, j0), img.at(i0, j0 + 1),
                        img.at(i0 + 1, j0 + 1));
  }
  const int h = 1 << (k - 1);
  const int base = 4 * (s - 1);
  // quadrant order: (0,0), (+h,0), (0,+h), (+h,+h)
  return m.node(k, s)(eval_node(m, img, k - 1, base + 1, i0, j0),
                      eval_node(m, img, k - 1, base + 2, i0 + h, j0),
                      eval_node(m, img, k - 1, base + 3, i0, j0 + h),
                      eval_node(m, img, k - 1, base + 4, i0 + h, j0 + h));
}

}  // namespace

double eval_window(const HmpModel& model, const ImageGrid& image, int i0, int j0) {
  const int w = model.window();
  if (i0 < 0 || j0 < 0 || i0 + w > image.d1() || j0 + w > image.d2()) {
    throw std::invalid_argument("eval_window: window out of range");
  }
  return eval_node(model, image, model.level(), 1, i0, j0);
}

double eval_hierarchical(const HmpModel& model, const ImageGrid& patch) {
  const int w = model.window();
  if (patch.d1() != w || patch.d2() != w) {
    throw std::invalid_argument("eval_hierarchical: patch must be exactly 2^l x 2^l");
  }
  return eval_window(model, patch, 0, 0);
}

double eval_max_pool(const HmpModel& model, const ImageGrid& image) {
  const int w = model.window();
  if (image.d1() < w || image.d2() < w) {
    throw std::invalid_argument("eval_max_pool: image smaller than the model window");
  }
  double best = -std::numeric_limits<double>::infinity();
  for (int i0 = 0; i0 + w <= image.d1(); ++i0) {
    for (int j0 = 0; j0 + w <= image.d2(); ++j0) {
      best = std::max(best, eval_window(model, image, i0, j0));
    }
  }
  return best;
}

namespace {

SmoothNodeFunction make_node(NodeFamily family, double constant_value, rng::Stream& st) {
  SmoothNodeFunction g;
  g.family = family;
  switch (family) {
    case NodeFamily::constant:
      g.params = {constant_value};
      break;
    case NodeFamily::affine_clamped: {
      // parameter ranges keep the [-2,2]^4 grid sup exact under bias shifts
      const double a = st.next_uniform(1.0, 2.5);
      const double center = st.next_uniform(0.35, 0.65);
      g.params = {a, center - 0.5 * a};
      break;
    }
    case NodeFamily::soft_max_blend:
      g.params = {st.next_uniform(0.3, 0.9), st.next_uniform(0.05, 0.3)};
      break;
    case NodeFamily::radial_bump_mixture: {
      const int n_bumps = 2 + static_cast<int>(st.next_below(2));
      const double total = st.next_uniform(0.6, 1.0);
      std::vector<double> raw(n_bumps);
      double sum = 0.0;
      for (double& r : raw) {
        r = st.next_uniform(0.2, 1.0);
        sum += r;
      }
      g.params.push_back(n_bumps);
      for (int j = 0; j < n_bumps; ++j) {
        g.params.push_back(total * raw[j] / sum);         // weight
        g.params.push_back(st.next_uniform(0.35, 1.0));   // sigma
        for (int c = 0; c < 4; ++c) g.params.push_back(st.next_double());
      }
      break;
    }
    case NodeFamily::hard_max:
      break;
    case NodeFamily::sharpened:
      throw std::invalid_argument("make_model: sharpened is not a generator family");
  }
  return g;
}

}  // namespace

HmpModel make_model(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.level < 1) throw std::invalid_argument("make_model: level must be >= 1");
  if (spec.family == NodeFamily::constant &&
      !(spec.constant_value >= 0.0 && spec.constant_value <= 1.0)) {
    throw std::invalid_argument("make_model: constant value must lie in [0,1]");
  }
  const int w = 1 << spec.level;
  const int d1 = spec.d1 > 0 ? spec.d1 : w;
  const int d2 = spec.d2 > 0 ? spec.d2 : w;
  const int n = HmpModel::expected_node_count(spec.level);
  std::vector<SmoothNodeFunction> nodes;
  nodes.reserve(n);
  for (int idx = 0; idx < n; ++idx) {
    rng::Stream st(seed, rng::Tag::model_node, static_cast<std::uint64_t>(idx));
    nodes.push_back(make_node(spec.family, spec.constant_value, st));
  }
  return HmpModel(spec.level, d1, d2, std::move(nodes));
}

HmpModel perturb_model(const HmpModel& model, double max_shift, std::uint64_t seed) {
  std::vector<SmoothNodeFunction> nodes = model.nodes();
  for (std::size_t idx = 0; idx < nodes.size(); ++idx) {
    rng::Stream st(seed, rng::Tag::perturb, idx);
    const double delta = st.next_uniform(-max_shift, max_shift);
    switch (nodes[idx].family) {
      case NodeFamily::constant:
        nodes[idx].params[0] = std::min(1.0, std::max(0.0, nodes[idx].params[0] + delta));
        break;
      case NodeFamily::affine_clamped:
        nodes[idx].params[1] += delta;
        break;
      default:
        throw std::invalid_argument(
            "perturb_model: only constant and affine-clamped families are supported");
    }
  }
  return HmpModel(model.level(), model.d1(), model.d2(), std::move(nodes));
}

HmpModel sharpen_margin(const HmpModel& model, double gamma, double clamp_magnitude) {
  if (gamma < 1.0) throw std::invalid_argument("sharpen_margin: gamma must be >= 1");
  std::vector<SmoothNodeFunction> nodes = model.nodes();
  SmoothNodeFunction root;
  root.family = NodeFamily::sharpened;
  root.params = {gamma, clamp_magnitude};
  root.inner = std::make_shared<const SmoothNodeFunction>(
      nodes[HmpModel::node_offset(model.level(), model.level(), 1)]);
  nodes[HmpModel::node_offset(model.level(), model.level(), 1)] = std::move(root);
  return HmpModel(model.level(), model.d1(), model.d2(), std::move(nodes));
}

namespace {

double node_pair_sup(const SmoothNodeFunction& g, const SmoothNodeFunction& h, int grid_pts) {
  const double step = 4.0 / (grid_pts - 1);
  double sup = 0.0;
  double u[4];
  for (int a = 0; a < grid_pts; ++a) {
    u[0] = -2.0 + step * a;
    for (int b = 0; b < grid_pts; ++b) {
      u[1] = -2.0 + step * b;
      for (int c = 0; c < grid_pts; ++c) {
        u[2] = -2.0 + step * c;
        for (int d = 0; d < grid_pts; ++d) {
          u[3] = -2.0 + step * d;
          sup = std::max(sup, std::abs(g(u[0], u[1], u[2], u[3]) - h(u[0], u[1], u[2], u[3])));
        }
      }
    }
  }
  return sup;
}

}  // namespace

double node_sup_distance(const HmpModel& a, const HmpModel& b, int grid_pts) {
  if (grid_pts < 2) throw std::invalid_argument("node_sup_distance: grid_pts must be >= 2");
  double sup = 0.0;
  for (int idx = 0; idx < a.node_count(); ++idx) {
    sup = std::max(sup, node_pair_sup(a.nodes()[idx], b.nodes()[idx], grid_pts));
  }
  return sup;
}

GapAndBound perturbation_gap_and_bound(const HmpModel& model, const HmpModel& perturbed,
                                       const ImageGrid& image, int grid_pts) {
  if (model.level() != perturbed.level() || model.d1() != perturbed.d1() ||
      model.d2() != perturbed.d2()) {
    throw std::invalid_argument("perturbation_gap_and_bound: models must share level and dims");
  }
  const double sup = node_sup_distance(model, perturbed, grid_pts);
  const double c = model.lipschitz();
  const double factor = std::pow(2.0 * c + 1.0, model.level());
  const double gap = std::abs(eval_max_pool(model, image) - eval_max_pool(perturbed, image));
  return {gap, factor * sup, sup};
}

}  // namespace hmpcnn
