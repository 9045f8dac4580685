#pragma once

// Templated forward/backward kernels shared by the public forward pass and
// the training loop. T is double on the reference path, float when training
// runs in 32-bit mode.

#include <cmath>
#include <vector>

#include "hmpcnn/cnn_model.hpp"
#include "hmpcnn/grid.hpp"

namespace hmpcnn::detail {

template <class T>
inline T relu(T z) {
  return z > T(0) ? z : T(0);
}

// phi(z) = log(1+exp(-z)), evaluated without overflow on either tail
template <class T>
inline T softplus_neg(T z) {
  if (z >= T(0)) return std::log1p(std::exp(-z));
  return -z + std::log1p(std::exp(z));
}

// phi'(z) = -1/(1+exp(z))
template <class T>
inline T softplus_neg_prime(T z) {
  if (z >= T(0)) {
    const T t = std::exp(-z);
    return -t / (T(1) + t);
  }
  return T(-1) / (T(1) + std::exp(z));
}

template <class T>
struct CnnCache {
  std::vector<std::vector<T>> act;  // act[l-1][(s2*d1+i)*d2+j], l = 1..L
  std::vector<T> input;             // image as T, i-major
  int argmax_i = 0, argmax_j = 0;
  T max_value = T(0);
};

template <class T>
struct FnnCache {
  std::vector<std::vector<T>> h;  // hidden activations per layer
  T input = T(0);
  T output = T(0);
};

// One convolutional layer with dropped-tap zero padding. Tap (t1,t2) of
// position (i,j) reads (i+t1, j+t2); taps off the grid contribute nothing.
// Summation order: s1, then t1, then t2.
template <class T>
void conv_layer_forward(int d1, int d2, int k_prev, int k_cur, int m,
                        const ConvLayerWeightsT<T>& lw, const std::vector<T>& prev,
                        std::vector<T>& cur) {
  cur.assign(static_cast<std::size_t>(k_cur) * d1 * d2, T(0));
  for (int s2 = 0; s2 < k_cur; ++s2) {
    for (int i = 0; i < d1; ++i) {
      const int t1_max = std::min(m, d1 - i);
      for (int j = 0; j < d2; ++j) {
        const int t2_max = std::min(m, d2 - j);
        T z = lw.bias[s2];
        for (int s1 = 0; s1 < k_prev; ++s1) {
          const T* wbase = &lw.w[(static_cast<std::size_t>(s2) * k_prev + s1) *
                                 static_cast<std::size_t>(m) * m];
          const T* pbase = &prev[(static_cast<std::size_t>(s1) * d1 + i) * d2 + j];
          for (int t1 = 0; t1 < t1_max; ++t1) {
            const T* wrow = wbase + static_cast<std::size_t>(t1) * m;
            const T* prow = pbase + static_cast<std::size_t>(t1) * d2;
            for (int t2 = 0; t2 < t2_max; ++t2) {
              z += wrow[t2] * prow[t2];
            }
          }
        }
        cur[(static_cast<std::size_t>(s2) * d1 + i) * d2 + j] = relu(z);
      }
    }
  }
}

template <class T>
void cnn_forward_cached(const CnnArchitecture& arch, const CnnWeightsT<T>& w,
                        const ImageGrid& image, CnnCache<T>& cache) {
  const int d1 = arch.d1, d2 = arch.d2;
  const int n_layers = arch.layers();
  cache.input.resize(image.pixels().size());
  for (std::size_t p = 0; p < cache.input.size(); ++p) {
    cache.input[p] = static_cast<T>(image.pixels()[p]);
  }
  cache.act.resize(n_layers);
  const std::vector<T>* prev = &cache.input;
  int k_prev = 1;
  for (int l = 0; l < n_layers; ++l) {
    conv_layer_forward(d1, d2, k_prev, arch.channels[l], arch.filter_sizes[l], w.layers[l],
                       *prev, cache.act[l]);
    prev = &cache.act[l];
    k_prev = arch.channels[l];
  }
  // global max over valid positions of the channel-weighted sum; ties go to
  // the first position in first-index-major scan order
  const int m_last = arch.filter_sizes[n_layers - 1];
  const int k_last = arch.channels[n_layers - 1];
  const std::vector<T>& top = cache.act[n_layers - 1];
  bool first = true;
  T best = T(0);
  for (int i = 0; i + m_last <= d1; ++i) {
    for (int j = 0; j + m_last <= d2; ++j) {
      T v = T(0);
      for (int s2 = 0; s2 < k_last; ++s2) {
        v += w.out[s2] * top[(static_cast<std::size_t>(s2) * d1 + i) * d2 + j];
      }
      if (first || v > best) {
        best = v;
        cache.argmax_i = i;
        cache.argmax_j = j;
        first = false;
      }
    }
  }
  cache.max_value = best;
}

template <class T>
void fnn_forward_cached(const FnnArchitecture& arch, const FnnWeightsT<T>& w, T z,
                        FnnCache<T>& cache) {
  cache.input = z;
  const int n_layers = arch.layers();
  cache.h.resize(n_layers);
  std::vector<T> cur{z};
  for (int r = 0; r < n_layers; ++r) {
    const int width = arch.widths[r];
    const int prev_width = static_cast<int>(cur.size());
    std::vector<T> next(width);
    for (int c = 0; c < width; ++c) {
      T v = w.layers[r].bias[c];
      const T* wrow = &w.layers[r].w[static_cast<std::size_t>(c) * prev_width];
      for (int p = 0; p < prev_width; ++p) v += wrow[p] * cur[p];
      next[c] = relu(v);
    }
    cache.h[r] = next;
    cur = std::move(next);
  }
  T out = w.out_bias;
  for (std::size_t c = 0; c < cur.size(); ++c) out += w.out[c] * cur[c];
  cache.output = out;
}

template <class T>
struct ForwardResult {
  T pre_trunc = T(0);  // g(f(x))
  T value = T(0);      // T_beta(g(f(x)))
};

template <class T>
ForwardResult<T> predict_cached(const CnnArchitecture& ca, const CnnWeightsT<T>& cw,
                                const FnnArchitecture& fa, const FnnWeightsT<T>& fw, T beta,
                                const ImageGrid& image, CnnCache<T>& cc, FnnCache<T>& fc) {
  cnn_forward_cached(ca, cw, image, cc);
  fnn_forward_cached(fa, fw, cc.max_value, fc);
  ForwardResult<T> r;
  r.pre_trunc = fc.output;
  // keep NaN visible to the loss so diverged restarts are detected
  r.value = std::isnan(fc.output) ? fc.output : std::min(beta, std::max(-beta, fc.output));
  return r;
}

// Accumulates scale * d(phi(y * T_beta(g(f(x)))))/dw into grad_* which must
// have the same shapes as the weights. Conventions: ReLU'(0) = 0, the global
// max routes all gradient to the first attaining position, T_beta has zero
// derivative where |g| > beta.
template <class T>
void backward_accumulate(const CnnArchitecture& ca, const CnnWeightsT<T>& cw,
                         const FnnArchitecture& fa, const FnnWeightsT<T>& fw, T beta,
                         int label, const CnnCache<T>& cc, const FnnCache<T>& fc,
                         CnnWeightsT<T>& grad_cnn, FnnWeightsT<T>& grad_fnn, T scale) {
  const T y = static_cast<T>(label);
  const T f_out = std::min(beta, std::max(-beta, fc.output));
  T d_out = y * softplus_neg_prime(y * f_out) * scale;
  if (std::abs(fc.output) > beta) d_out = T(0);

  // FNN backward (the head always has at least one hidden layer)
  const int n_fnn = fa.layers();
  const std::vector<T>& last = fc.h[n_fnn - 1];
  grad_fnn.out_bias += d_out;
  std::vector<T> dh(last.size());  // gradient wrt current layer activations
  for (std::size_t c = 0; c < last.size(); ++c) {
    grad_fnn.out[c] += d_out * last[c];
    dh[c] = d_out * fw.out[c];
  }
  for (int r = n_fnn - 1; r >= 0; --r) {
    const std::vector<T>& cur = fc.h[r];
    const bool input_layer = (r == 0);
    const std::vector<T>* prev = input_layer ? nullptr : &fc.h[r - 1];
    const int prev_width = input_layer ? 1 : static_cast<int>(prev->size());
    std::vector<T> dprev(prev_width, T(0));
    for (std::size_t c = 0; c < cur.size(); ++c) {
      if (!(cur[c] > T(0))) continue;  // ReLU mask, zero at the kink
      const T g = dh[c];
      grad_fnn.layers[r].bias[c] += g;
      T* wg = &grad_fnn.layers[r].w[c * prev_width];
      const T* wr = &fw.layers[r].w[c * prev_width];
      for (int p = 0; p < prev_width; ++p) {
        wg[p] += g * (input_layer ? fc.input : (*prev)[p]);
        dprev[p] += g * wr[p];
      }
    }
    dh = std::move(dprev);
  }
  const T d_scalar_input = dh[0];

  // max routing: only the attaining position receives gradient
  const int d1 = ca.d1, d2 = ca.d2;
  const int n_cnn = ca.layers();
  const int k_last = ca.channels[n_cnn - 1];
  const int ai = cc.argmax_i, aj = cc.argmax_j;
  std::vector<T> dact(static_cast<std::size_t>(k_last) * d1 * d2, T(0));
  const std::vector<T>& top = cc.act[n_cnn - 1];
  for (int s2 = 0; s2 < k_last; ++s2) {
    const std::size_t pos = (static_cast<std::size_t>(s2) * d1 + ai) * d2 + aj;
    grad_cnn.out[s2] += d_scalar_input * top[pos];
    dact[pos] = d_scalar_input * cw.out[s2];
  }

  // convolutional layers, top down
  for (int l = n_cnn - 1; l >= 0; --l) {
    const int k_cur = ca.channels[l];
    const int k_prev = l == 0 ? 1 : ca.channels[l - 1];
    const int m = ca.filter_sizes[l];
    const std::vector<T>& cur = cc.act[l];
    const std::vector<T>& prev = l == 0 ? cc.input : cc.act[l - 1];
    std::vector<T> dprev(static_cast<std::size_t>(k_prev) * d1 * d2, T(0));
    ConvLayerWeightsT<T>& gl = grad_cnn.layers[l];
    const ConvLayerWeightsT<T>& wl = cw.layers[l];
    for (int s2 = 0; s2 < k_cur; ++s2) {
      for (int i = 0; i < d1; ++i) {
        const int t1_max = std::min(m, d1 - i);
        for (int j = 0; j < d2; ++j) {
          const std::size_t pos = (static_cast<std::size_t>(s2) * d1 + i) * d2 + j;
          if (!(cur[pos] > T(0))) continue;  // ReLU mask
          const T dz = dact[pos];
          if (dz == T(0)) continue;
          gl.bias[s2] += dz;
          const int t2_max = std::min(m, d2 - j);
          for (int s1 = 0; s1 < k_prev; ++s1) {
            const std::size_t wbase =
                (static_cast<std::size_t>(s2) * k_prev + s1) * static_cast<std::size_t>(m) * m;
            const std::size_t pbase = (static_cast<std::size_t>(s1) * d1 + i) * d2 + j;
            for (int t1 = 0; t1 < t1_max; ++t1) {
              for (int t2 = 0; t2 < t2_max; ++t2) {
                const std::size_t wi = wbase + static_cast<std::size_t>(t1) * m + t2;
                const std::size_t pi = pbase + static_cast<std::size_t>(t1) * d2 + t2;
                gl.w[wi] += dz * prev[pi];
                dprev[pi] += dz * wl.w[wi];
              }
            }
          }
        }
      }
    }
    dact = std::move(dprev);
  }
}

}  // namespace hmpcnn::detail
