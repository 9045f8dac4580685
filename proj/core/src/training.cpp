#include "hmpcnn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "hmpcnn/detail/net_kernels.hpp"
#include "hmpcnn/parallel.hpp"

namespace hmpcnn {

double cross_entropy_phi(double z) { return detail::softplus_neg(z); }
double cross_entropy_phi_prime(double z) { return detail::softplus_neg_prime(z); }

Optimizer optimizer_from_string(const std::string& s) {
  if (s == "gd" || s == "gradient-descent") return Optimizer::gradient_descent;
  if (s == "momentum") return Optimizer::momentum;
  if (s == "adam") return Optimizer::adam;
  throw std::invalid_argument("unknown optimizer: " + s);
}

std::string to_string(Optimizer o) {
  switch (o) {
    case Optimizer::gradient_descent: return "gd";
    case Optimizer::momentum: return "momentum";
    case Optimizer::adam: return "adam";
  }
  throw std::logic_error("unknown Optimizer");
}

double empirical_xent(const Predictor& predictor, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("empirical_xent: dataset is empty");
  double acc = 0.0;
  for (const auto& s : data.samples) {
    acc += cross_entropy_phi(s.label * predictor(s.image));
  }
  return acc / data.size();
}

Gradients zero_gradients(const CnnArchitecture& cnn_arch, const FnnArchitecture& fnn_arch) {
  return Gradients{zero_cnn_weights(cnn_arch), zero_fnn_weights(fnn_arch)};
}

Gradients backward(const Predictor& predictor, const ImageGrid& image, int label) {
  Gradients g = zero_gradients(predictor.cnn_arch, predictor.fnn_arch);
  detail::CnnCache<double> cc;
  detail::FnnCache<double> fc;
  detail::predict_cached(predictor.cnn_arch, predictor.cnn, predictor.fnn_arch, predictor.fnn,
                         predictor.beta.beta, image, cc, fc);
  detail::backward_accumulate(predictor.cnn_arch, predictor.cnn, predictor.fnn_arch,
                              predictor.fnn, predictor.beta.beta, label, cc, fc, g.cnn, g.fnn,
                              1.0);
  return g;
}

namespace {

template <class T, class Fn>
void visit_params2(CnnWeightsT<T>& cw, FnnWeightsT<T>& fw, CnnWeightsT<T>& cg,
                   FnnWeightsT<T>& fg, Fn&& fn) {
  for (std::size_t l = 0; l < cw.layers.size(); ++l) {
    for (std::size_t i = 0; i < cw.layers[l].w.size(); ++i) fn(cw.layers[l].w[i], cg.layers[l].w[i]);
    for (std::size_t i = 0; i < cw.layers[l].bias.size(); ++i)
      fn(cw.layers[l].bias[i], cg.layers[l].bias[i]);
  }
  for (std::size_t i = 0; i < cw.out.size(); ++i) fn(cw.out[i], cg.out[i]);
  for (std::size_t l = 0; l < fw.layers.size(); ++l) {
    for (std::size_t i = 0; i < fw.layers[l].w.size(); ++i) fn(fw.layers[l].w[i], fg.layers[l].w[i]);
    for (std::size_t i = 0; i < fw.layers[l].bias.size(); ++i)
      fn(fw.layers[l].bias[i], fg.layers[l].bias[i]);
  }
  for (std::size_t i = 0; i < fw.out.size(); ++i) fn(fw.out[i], fg.out[i]);
  fn(fw.out_bias, fg.out_bias);
}

template <class T>
std::size_t param_count(const CnnArchitecture& ca, const FnnArchitecture& fa) {
  std::size_t n = 0;
  int k_prev = 1;
  for (int l = 0; l < ca.layers(); ++l) {
    n += static_cast<std::size_t>(ca.channels[l]) * k_prev * ca.filter_sizes[l] *
         ca.filter_sizes[l];
    n += ca.channels[l];
    k_prev = ca.channels[l];
  }
  n += ca.channels.back();
  int prev = 1;
  for (int r = 0; r < fa.layers(); ++r) {
    n += static_cast<std::size_t>(fa.widths[r]) * prev + fa.widths[r];
    prev = fa.widths[r];
  }
  n += fa.widths.back() + 1;
  return n;
}

template <class T>
void zero_like(const CnnArchitecture& ca, const FnnArchitecture& fa, CnnWeightsT<T>& cw,
               FnnWeightsT<T>& fw) {
  cw.layers.assign(ca.layers(), {});
  int k_prev = 1;
  for (int l = 0; l < ca.layers(); ++l) {
    const int k = ca.channels[l];
    const int m = ca.filter_sizes[l];
    cw.layers[l].w.assign(static_cast<std::size_t>(k) * k_prev * m * m, T(0));
    cw.layers[l].bias.assign(k, T(0));
    k_prev = k;
  }
  cw.out.assign(ca.channels.back(), T(0));
  fw.layers.assign(fa.layers(), {});
  int prev = 1;
  for (int r = 0; r < fa.layers(); ++r) {
    const int k = fa.widths[r];
    fw.layers[r].w.assign(static_cast<std::size_t>(k) * prev, T(0));
    fw.layers[r].bias.assign(k, T(0));
    prev = k;
  }
  fw.out.assign(fa.widths.back(), T(0));
  fw.out_bias = T(0);
}

template <class T>
void init_weights(const CnnArchitecture& ca, const FnnArchitecture& fa, double init_scale,
                  rng::Stream& st, CnnWeightsT<T>& cw, FnnWeightsT<T>& fw) {
  zero_like(ca, fa, cw, fw);
  int k_prev = 1;
  for (int l = 0; l < ca.layers(); ++l) {
    const int m = ca.filter_sizes[l];
    const double r = init_scale / std::sqrt(static_cast<double>(k_prev) * m * m);
    for (auto& v : cw.layers[l].w) v = static_cast<T>(st.next_uniform(-r, r));
    for (auto& v : cw.layers[l].bias) v = static_cast<T>(st.next_uniform(-r, r));
    k_prev = ca.channels[l];
  }
  {
    const double r = init_scale / std::sqrt(static_cast<double>(ca.channels.back()));
    for (auto& v : cw.out) v = static_cast<T>(st.next_uniform(-r, r));
  }
  int prev = 1;
  for (int rr = 0; rr < fa.layers(); ++rr) {
    const double r = init_scale / std::sqrt(static_cast<double>(prev));
    for (auto& v : fw.layers[rr].w) v = static_cast<T>(st.next_uniform(-r, r));
    for (auto& v : fw.layers[rr].bias) v = static_cast<T>(st.next_uniform(-r, r));
    prev = fa.widths[rr];
  }
  {
    const double r = init_scale / std::sqrt(static_cast<double>(fa.widths.back()));
    for (auto& v : fw.out) v = static_cast<T>(st.next_uniform(-r, r));
    fw.out_bias = static_cast<T>(st.next_uniform(-r, r));
  }
}

template <class T>
struct OptimizerState {
  std::vector<T> m, v;
  long long step = 0;
};

template <class T>
void apply_update(Optimizer opt, double lr, double momentum, OptimizerState<T>& state,
                  CnnWeightsT<T>& cw, FnnWeightsT<T>& fw, CnnWeightsT<T>& cg,
                  FnnWeightsT<T>& fg) {
  std::size_t idx = 0;
  state.step += 1;
  switch (opt) {
    case Optimizer::gradient_descent:
      visit_params2(cw, fw, cg, fg, [&](T& p, T& g) { p -= static_cast<T>(lr) * g; });
      break;
    case Optimizer::momentum:
      visit_params2(cw, fw, cg, fg, [&](T& p, T& g) {
        state.m[idx] = static_cast<T>(momentum) * state.m[idx] - static_cast<T>(lr) * g;
        p += state.m[idx];
        ++idx;
      });
      break;
    case Optimizer::adam: {
      const T b1 = T(0.9), b2 = T(0.999), eps = T(1e-8);
      const T bc1 = T(1) - static_cast<T>(std::pow(0.9, static_cast<double>(state.step)));
      const T bc2 = T(1) - static_cast<T>(std::pow(0.999, static_cast<double>(state.step)));
      visit_params2(cw, fw, cg, fg, [&](T& p, T& g) {
        state.m[idx] = b1 * state.m[idx] + (T(1) - b1) * g;
        state.v[idx] = b2 * state.v[idx] + (T(1) - b2) * g * g;
        const T mhat = state.m[idx] / bc1;
        const T vhat = state.v[idx] / bc2;
        p -= static_cast<T>(lr) * mhat / (std::sqrt(vhat) + eps);
        ++idx;
      });
      break;
    }
  }
}

template <class T>
void zero_grad(CnnWeightsT<T>& cg, FnnWeightsT<T>& fg) {
  for (auto& l : cg.layers) {
    std::fill(l.w.begin(), l.w.end(), T(0));
    std::fill(l.bias.begin(), l.bias.end(), T(0));
  }
  std::fill(cg.out.begin(), cg.out.end(), T(0));
  for (auto& l : fg.layers) {
    std::fill(l.w.begin(), l.w.end(), T(0));
    std::fill(l.bias.begin(), l.bias.end(), T(0));
  }
  std::fill(fg.out.begin(), fg.out.end(), T(0));
  fg.out_bias = T(0);
}

template <class From, class To>
std::vector<To> cast_vec(const std::vector<From>& v) {
  std::vector<To> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<To>(v[i]);
  return out;
}

template <class From, class To>
void cast_weights(const CnnWeightsT<From>& ci, const FnnWeightsT<From>& fi,
                  CnnWeightsT<To>& co, FnnWeightsT<To>& fo) {
  co.layers.resize(ci.layers.size());
  for (std::size_t l = 0; l < ci.layers.size(); ++l) {
    co.layers[l].w = cast_vec<From, To>(ci.layers[l].w);
    co.layers[l].bias = cast_vec<From, To>(ci.layers[l].bias);
  }
  co.out = cast_vec<From, To>(ci.out);
  fo.layers.resize(fi.layers.size());
  for (std::size_t l = 0; l < fi.layers.size(); ++l) {
    fo.layers[l].w = cast_vec<From, To>(fi.layers[l].w);
    fo.layers[l].bias = cast_vec<From, To>(fi.layers[l].bias);
  }
  fo.out = cast_vec<From, To>(fi.out);
  fo.out_bias = static_cast<To>(fi.out_bias);
}

template <class T>
struct RestartOutcome {
  CnnWeightsT<T> cnn;
  FnnWeightsT<T> fnn;
  RestartTrace trace;
};

// One restart: first-order optimization with a best-so-far snapshot. The
// snapshot (not the last iterate) is what the restart reports.
template <class T>
RestartOutcome<T> run_restart(const CnnArchitecture& ca, const FnnArchitecture& fa, T beta,
                              const Dataset& data, const TrainConfig& cfg, int restart) {
  RestartOutcome<T> out;
  rng::Stream init_stream(cfg.seed, rng::Tag::train_init, static_cast<std::uint64_t>(restart));
  CnnWeightsT<T> cw;
  FnnWeightsT<T> fw;
  init_weights(ca, fa, cfg.init_scale, init_stream, cw, fw);

  CnnWeightsT<T> cg;
  FnnWeightsT<T> fg;
  zero_like(ca, fa, cg, fg);

  OptimizerState<T> state;
  const std::size_t np = param_count<T>(ca, fa);
  if (cfg.optimizer != Optimizer::gradient_descent) {
    state.m.assign(np, T(0));
    state.v.assign(np, T(0));
  }

  const int n = data.size();
  detail::CnnCache<T> cc;
  detail::FnnCache<T> fc;

  auto forward_loss = [&](int i) {
    const auto r = detail::predict_cached(ca, cw, fa, fw, beta, data.samples[i].image, cc, fc);
    return detail::softplus_neg(static_cast<T>(data.samples[i].label) * r.value);
  };

  auto full_loss = [&]() {
    T acc = T(0);
    for (int i = 0; i < n; ++i) acc += forward_loss(i);
    return static_cast<double>(acc) / n;
  };

  CnnWeightsT<T> best_cw = cw;
  FnnWeightsT<T> best_fw = fw;
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  auto consider = [&](double loss) {
    if (std::isfinite(loss) && loss < best) {
      best = loss;
      best_cw = cw;
      best_fw = fw;
    }
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.step_size / (1.0 + cfg.step_decay * epoch);
    double epoch_loss;
    if (cfg.batch_size <= 0) {
      // full batch: loss of the current iterate falls out of the same pass
      zero_grad(cg, fg);
      T acc = T(0);
      for (int i = 0; i < n; ++i) {
        const auto r =
            detail::predict_cached(ca, cw, fa, fw, beta, data.samples[i].image, cc, fc);
        acc += detail::softplus_neg(static_cast<T>(data.samples[i].label) * r.value);
        detail::backward_accumulate(ca, cw, fa, fw, beta, data.samples[i].label, cc, fc, cg, fg,
                                    static_cast<T>(1.0 / n));
      }
      epoch_loss = static_cast<double>(acc) / n;
      out.trace.losses.push_back(epoch_loss);
      if (!std::isfinite(epoch_loss)) {
        out.trace.diverged = true;
        break;
      }
      consider(epoch_loss);
      apply_update(cfg.optimizer, lr, cfg.momentum, state, cw, fw, cg, fg);
    } else {
      epoch_loss = full_loss();
      out.trace.losses.push_back(epoch_loss);
      if (!std::isfinite(epoch_loss)) {
        out.trace.diverged = true;
        break;
      }
      consider(epoch_loss);
      rng::Stream shuffle(cfg.seed, rng::Tag::train_shuffle,
                          (static_cast<std::uint64_t>(restart) << 32) +
                              static_cast<std::uint64_t>(epoch));
      for (int i = n - 1; i > 0; --i) {
        std::swap(order[i], order[shuffle.next_below(static_cast<std::uint64_t>(i + 1))]);
      }
      for (int start = 0; start < n; start += cfg.batch_size) {
        const int stop = std::min(n, start + cfg.batch_size);
        zero_grad(cg, fg);
        for (int t = start; t < stop; ++t) {
          const int i = order[t];
          detail::predict_cached(ca, cw, fa, fw, beta, data.samples[i].image, cc, fc);
          detail::backward_accumulate(ca, cw, fa, fw, beta, data.samples[i].label, cc, fc, cg,
                                      fg, static_cast<T>(1.0 / (stop - start)));
        }
        apply_update(cfg.optimizer, lr, cfg.momentum, state, cw, fw, cg, fg);
      }
    }
  }
  if (!out.trace.diverged) {
    const double final_loss = full_loss();
    out.trace.losses.push_back(final_loss);
    if (!std::isfinite(final_loss)) {
      out.trace.diverged = true;
    } else {
      consider(final_loss);
    }
  }
  out.trace.best_loss = best;
  out.cnn = std::move(best_cw);
  out.fnn = std::move(best_fw);
  return out;
}

GradCheckSummary spot_grad_check(const Predictor& p, const Dataset& data, std::uint64_t seed) {
  GradCheckSummary s;
  const ImageGrid& x = data.samples[0].image;
  const int y = data.samples[0].label;
  Gradients g = backward(p, x, y);
  Predictor probe = p;
  const double h = 1e-5;
  rng::Stream st(seed, rng::Tag::audit, 0);
  auto loss_at = [&]() { return cross_entropy_phi(y * probe(x)); };

  // a handful of coordinates across both weight blocks
  struct Coord {
    double* w;
    double g;
  };
  std::vector<Coord> coords;
  auto collect = [&](std::vector<double>& wv, std::vector<double>& gv) {
    if (wv.empty()) return;
    const std::size_t i = st.next_below(wv.size());
    coords.push_back({&wv[i], gv[i]});
  };
  for (std::size_t l = 0; l < probe.cnn.layers.size(); ++l) {
    collect(probe.cnn.layers[l].w, g.cnn.layers[l].w);
    collect(probe.cnn.layers[l].bias, g.cnn.layers[l].bias);
  }
  collect(probe.cnn.out, g.cnn.out);
  for (std::size_t l = 0; l < probe.fnn.layers.size(); ++l) {
    collect(probe.fnn.layers[l].w, g.fnn.layers[l].w);
    collect(probe.fnn.layers[l].bias, g.fnn.layers[l].bias);
  }
  collect(probe.fnn.out, g.fnn.out);

  for (const auto& c : coords) {
    const double w0 = *c.w;
    *c.w = w0 + h;
    const double up = loss_at();
    *c.w = w0 - h;
    const double dn = loss_at();
    *c.w = w0;
    const double mid = loss_at();
    const double fd = (up - dn) / (2.0 * h);
    const double one_up = (up - mid) / h;
    const double one_dn = (mid - dn) / h;
    if (std::abs(one_up - one_dn) > 1e-6 * std::max({1.0, std::abs(one_up), std::abs(one_dn)})) {
      ++s.kinks_skipped;
      continue;
    }
    const double rel = std::abs(c.g - fd) / std::max({std::abs(fd), std::abs(c.g), 1e-6});
    s.max_rel_err = std::max(s.max_rel_err, rel);
    ++s.checked;
  }
  return s;
}

template <class T>
TrainResult train_impl(const CnnArchitecture& ca, const FnnArchitecture& fa,
                       TruncationBound beta, const Dataset& data, const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  result.report.restarts.resize(cfg.restarts);
  std::vector<RestartOutcome<T>> outcomes(cfg.restarts);

  parallel_blocks(
      cfg.restarts, cfg.threads,
      [&](std::int64_t b, std::int64_t e, std::int64_t) {
        for (std::int64_t r = b; r < e; ++r) {
          outcomes[r] = run_restart<T>(ca, fa, static_cast<T>(beta.beta), data, cfg,
                                       static_cast<int>(r));
        }
      },
      /*block_size=*/1);

  // the zero function is a class member; admit it as a candidate
  double best = std::log(2.0);
  int chosen = -1;
  int diverged = 0;
  for (int r = 0; r < cfg.restarts; ++r) {
    result.report.restarts[r] = outcomes[r].trace;
    if (outcomes[r].trace.diverged) {
      ++diverged;
      continue;
    }
    if (outcomes[r].trace.best_loss < best) {
      best = outcomes[r].trace.best_loss;
      chosen = r;
    }
  }
  if (diverged == cfg.restarts && cfg.restarts > 0) {
    throw std::runtime_error("train: every restart diverged");
  }
  result.report.best_phi_risk = best;
  result.report.chosen_restart = chosen;
  result.report.diverged_restarts = diverged;

  result.predictor.cnn_arch = ca;
  result.predictor.fnn_arch = fa;
  result.predictor.beta = beta;
  if (chosen < 0) {
    result.predictor.cnn = zero_cnn_weights(ca);
    result.predictor.fnn = zero_fnn_weights(fa);
  } else {
    cast_weights<T, double>(outcomes[chosen].cnn, outcomes[chosen].fnn, result.predictor.cnn,
                            result.predictor.fnn);
  }

  if (cfg.grad_check && cfg.float_width == 64) {
    result.report.grad_check =
        spot_grad_check(init_predictor(ca, fa, beta, cfg.init_scale, cfg.seed, 0), data,
                        cfg.seed);
  }
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace

Predictor init_predictor(const CnnArchitecture& cnn_arch, const FnnArchitecture& fnn_arch,
                         TruncationBound beta, double init_scale, std::uint64_t seed,
                         int restart) {
  Predictor p;
  p.cnn_arch = cnn_arch;
  p.fnn_arch = fnn_arch;
  p.beta = beta;
  rng::Stream st(seed, rng::Tag::train_init, static_cast<std::uint64_t>(restart));
  init_weights(cnn_arch, fnn_arch, init_scale, st, p.cnn, p.fnn);
  return p;
}

TrainResult train(const CnnArchitecture& cnn_arch, const FnnArchitecture& fnn_arch,
                  TruncationBound beta, const Dataset& data, const TrainConfig& config) {
  cnn_arch.validate();
  fnn_arch.validate();
  if (data.size() == 0) throw std::invalid_argument("train: dataset is empty");
  if (config.step_size <= 0.0) throw std::invalid_argument("train: step size must be positive");
  if (config.restarts < 1) throw std::invalid_argument("train: restarts must be >= 1");
  if (config.float_width != 64 && config.float_width != 32) {
    throw std::invalid_argument("train: float width must be 32 or 64");
  }
  if (config.float_width == 32) {
    return train_impl<float>(cnn_arch, fnn_arch, beta, data, config);
  }
  return train_impl<double>(cnn_arch, fnn_arch, beta, data, config);
}

}  // namespace hmpcnn
