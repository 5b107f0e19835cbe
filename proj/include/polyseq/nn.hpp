#pragma once

/// Neural building blocks: exactly the layers the generator and discriminator
/// need, each with a hand-written backward pass, plus Adam, gradient-norm
/// clipping, a finite-difference gradient checker, and checkpoint IO.
///
/// The scalar type T is float in training and double in the gradient-check
/// suites (the 64-bit accumulation mode). Scalar loss reductions always
/// accumulate in double so that f32 losses are stable enough for central
/// differences.
///
/// Determinism: every op reduces in a fixed serial order per output element
/// (see tensor.hpp), so results are bitwise reproducible for any thread
/// count. Ops that need randomness (dropout) take an explicit generator.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "polyseq/errors.hpp"
#include "polyseq/rng.hpp"
#include "polyseq/tensor.hpp"

namespace polyseq::nn {

// ---------------------------------------------------------------------------
// Parameters and optimizer.
// ---------------------------------------------------------------------------

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> adam_m;
  Tensor<T> adam_v;
};

/// Ordered, named parameter collection with per-tensor Adam moments and one
/// shared step counter. Parameters live in a deque so references handed out
/// by add() stay valid as more are added.
template <typename T>
class ParamSet {
 public:
  Param<T>& add(const std::string& name, std::vector<int> shape) {
    if (index_.count(name)) raise(Errc::kConfigError, "duplicate parameter " + name);
    params_.push_back(Param<T>{name, Tensor<T>(shape), Tensor<T>(shape), Tensor<T>(shape),
                               Tensor<T>(std::move(shape))});
    index_.emplace(name, params_.size() - 1);
    return params_.back();
  }

  Param<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) raise(Errc::kConfigError, "unknown parameter " + name);
    return params_[it->second];
  }
  const Param<T>& at(const std::string& name) const {
    return const_cast<ParamSet*>(this)->at(name);
  }

  std::deque<Param<T>>& params() { return params_; }
  const std::deque<Param<T>>& params() const { return params_; }

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

  std::int64_t numel() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

  void zero_grads() {
    for (auto& p : params_) p.grad.fill(T(0));
  }

  double grad_norm() const {
    double sq = 0.0;
    for (const auto& p : params_) {
      for (std::int64_t i = 0; i < p.grad.numel(); ++i) {
        double g = static_cast<double>(p.grad[i]);
        sq += g * g;
      }
    }
    return std::sqrt(sq);
  }

  /// Scales all gradients down so their global L2 norm is at most max_norm.
  void clip_grad_norm(double max_norm) {
    double norm = grad_norm();
    if (norm <= max_norm || norm == 0.0) return;
    T scale = static_cast<T>(max_norm / norm);
    for (auto& p : params_) {
      for (std::int64_t i = 0; i < p.grad.numel(); ++i) p.grad[i] *= scale;
    }
  }

  /// Bias-corrected Adam update over all parameters. A NaN/Inf anywhere in
  /// the gradients aborts before any state is touched.
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    for (const auto& p : params_) {
      if (!all_finite(std::span<const T>(p.grad.data(), static_cast<std::size_t>(p.grad.numel())))) {
        raise(Errc::kNonFiniteGradient, "non-finite gradient in " + p.name);
      }
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    for (auto& p : params_) {
      for (std::int64_t i = 0; i < p.value.numel(); ++i) {
        double g = static_cast<double>(p.grad[i]);
        double m = beta1 * static_cast<double>(p.adam_m[i]) + (1.0 - beta1) * g;
        double v = beta2 * static_cast<double>(p.adam_v[i]) + (1.0 - beta2) * g * g;
        p.adam_m[i] = static_cast<T>(m);
        p.adam_v[i] = static_cast<T>(v);
        p.value[i] -= static_cast<T>(lr * (m / bc1) / (std::sqrt(v / bc2) + eps));
      }
    }
  }

 private:
  std::deque<Param<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
  std::int64_t step_ = 0;
};

inline constexpr double kGradClipNorm = 5.0;

// ---------------------------------------------------------------------------
// Layers. Backward passes accumulate (+=) into parameter grads and overwrite
// input grads unless noted.
// ---------------------------------------------------------------------------

/// out[b,:] = table[tokens[b],:]
template <typename T>
void embedding_lookup(std::span<const int> tokens, const Tensor<T>& table, Tensor<T>& out) {
  const int V = table.dim(0), E = table.dim(1);
  const int B = static_cast<int>(tokens.size());
  require_shape(out, {B, E}, "embedding output");
  for (int b = 0; b < B; ++b) {
    int t = tokens[b];
    if (t < 0 || t >= V) {
      raise(Errc::kOutOfRangeToken,
            "token " + std::to_string(t) + " outside vocabulary of " + std::to_string(V));
    }
    std::memcpy(&out.at(b, 0), &table.at(t, 0), sizeof(T) * static_cast<std::size_t>(E));
  }
}

template <typename T>
void embedding_backward(std::span<const int> tokens, const Tensor<T>& dout, Tensor<T>& dtable) {
  const int B = static_cast<int>(tokens.size());
  const int E = dtable.dim(1);
  for (int b = 0; b < B; ++b) {
    const T* src = &dout.at(b, 0);
    T* dst = &dtable.at(tokens[b], 0);
    for (int e = 0; e < E; ++e) dst[e] += src[e];
  }
}

template <typename T>
T sigmoid_scalar(T x) {
  return static_cast<T>(1) / (static_cast<T>(1) + std::exp(-x));
}

/// One LSTM cell step. Gate layout along the 4H axis: input, forget,
/// candidate, output. Pass a cache to enable the backward pass.
template <typename T>
struct LstmStepCache {
  Tensor<T> x, h_prev, c_prev;
  Tensor<T> gates;   // [B,4H], post-activation
  Tensor<T> tanh_c;  // [B,H], tanh of the new cell state
};

template <typename T>
void lstm_step(const Tensor<T>& x, const Tensor<T>& h, const Tensor<T>& c, const Tensor<T>& wx,
               const Tensor<T>& wh, const Tensor<T>& b, Tensor<T>& h_out, Tensor<T>& c_out,
               LstmStepCache<T>* cache = nullptr) {
  const int B = x.dim(0), E = x.dim(1), H = h.dim(1);
  require_shape(wx, {E, 4 * H}, "lstm input weights");
  require_shape(wh, {H, 4 * H}, "lstm recurrent weights");
  require_shape(b, {4 * H}, "lstm bias");
  require_shape(h, {B, H}, "lstm hidden state");
  require_shape(c, {B, H}, "lstm cell state");
  require_shape(h_out, {B, H}, "lstm hidden output");
  require_shape(c_out, {B, H}, "lstm cell output");

  Tensor<T> z({B, 4 * H});
  matmul<T>(B, E, 4 * H, x.data(), wx.data(), z.data(), false);
  matmul<T>(B, H, 4 * H, h.data(), wh.data(), z.data(), true);

  Tensor<T> tanh_c({B, H});
  for (int row = 0; row < B; ++row) {
    T* zr = &z.at(row, 0);
    for (int j = 0; j < 4 * H; ++j) zr[j] += b[j];
    const T* cr = &c.at(row, 0);
    T* co = &c_out.at(row, 0);
    T* ho = &h_out.at(row, 0);
    T* tc = &tanh_c.at(row, 0);
    for (int j = 0; j < H; ++j) {
      T gi = sigmoid_scalar(zr[j]);
      T gf = sigmoid_scalar(zr[H + j]);
      T gg = std::tanh(zr[2 * H + j]);
      T go = sigmoid_scalar(zr[3 * H + j]);
      zr[j] = gi;
      zr[H + j] = gf;
      zr[2 * H + j] = gg;
      zr[3 * H + j] = go;
      T cn = gf * cr[j] + gi * gg;
      co[j] = cn;
      tc[j] = std::tanh(cn);
      ho[j] = go * tc[j];
    }
  }
  if (cache) {
    cache->x = x;
    cache->h_prev = h;
    cache->c_prev = c;
    cache->gates = std::move(z);
    cache->tanh_c = std::move(tanh_c);
  }
}

/// Backward through one step. dh_out/dc_out are the incoming gradients at
/// this step's outputs; dx, dh_prev, dc_prev are overwritten; weight grads
/// accumulate.
template <typename T>
void lstm_step_backward(const LstmStepCache<T>& cache, const Tensor<T>& wx, const Tensor<T>& wh,
                        const Tensor<T>& dh_out, const Tensor<T>& dc_out, Tensor<T>& dwx,
                        Tensor<T>& dwh, Tensor<T>& db, Tensor<T>& dx, Tensor<T>& dh_prev,
                        Tensor<T>& dc_prev) {
  const int B = cache.x.dim(0), E = cache.x.dim(1), H = cache.h_prev.dim(1);
  Tensor<T> dz({B, 4 * H});
  for (int row = 0; row < B; ++row) {
    const T* g = &cache.gates.at(row, 0);
    const T* tc = &cache.tanh_c.at(row, 0);
    const T* cp = &cache.c_prev.at(row, 0);
    const T* dho = &dh_out.at(row, 0);
    const T* dco = &dc_out.at(row, 0);
    T* dzr = &dz.at(row, 0);
    T* dcp = &dc_prev.at(row, 0);
    for (int j = 0; j < H; ++j) {
      T gi = g[j], gf = g[H + j], gg = g[2 * H + j], go = g[3 * H + j];
      T dgo = dho[j] * tc[j];
      T dc = dco[j] + dho[j] * go * (T(1) - tc[j] * tc[j]);
      T dgi = dc * gg;
      T dgf = dc * cp[j];
      T dgg = dc * gi;
      dcp[j] = dc * gf;
      dzr[j] = dgi * gi * (T(1) - gi);
      dzr[H + j] = dgf * gf * (T(1) - gf);
      dzr[2 * H + j] = dgg * (T(1) - gg * gg);
      dzr[3 * H + j] = dgo * go * (T(1) - go);
    }
  }
  for (int j = 0; j < 4 * H; ++j) {
    double acc = static_cast<double>(db[j]);
    for (int row = 0; row < B; ++row) acc += static_cast<double>(dz.at(row, j));
    db[j] = static_cast<T>(acc);
  }
  matmul_transA_accum<T>(B, E, 4 * H, cache.x.data(), dz.data(), dwx.data());
  matmul_transA_accum<T>(B, H, 4 * H, cache.h_prev.data(), dz.data(), dwh.data());
  matmul_transB<T>(B, 4 * H, E, dz.data(), wx.data(), dx.data(), false);
  matmul_transB<T>(B, 4 * H, H, dz.data(), wh.data(), dh_prev.data(), false);
}

/// Valid-padding 1-D convolution over [B,L,E] with filters [W,E,F] and bias
/// [F]; output [B,L-W+1,F]. Internally an im2col + GEMM so the batched
/// forward shares the deterministic row kernel. Activation is the caller's
/// business.
template <typename T>
struct Conv1dCache {
  Tensor<T> cols;  // [B*Lout, W*E]
};

template <typename T>
void conv1d(const Tensor<T>& x, const Tensor<T>& filters, const Tensor<T>& bias, Tensor<T>& out,
            Conv1dCache<T>* cache = nullptr) {
  const int B = x.dim(0), L = x.dim(1), E = x.dim(2);
  const int W = filters.dim(0), F = filters.dim(2);
  require_shape(filters, {W, E, F}, "conv filters");
  require_shape(bias, {F}, "conv bias");
  if (L < W) {
    raise(Errc::kSequenceTooShort, "conv input length " + std::to_string(L) +
                                       " shorter than filter width " + std::to_string(W));
  }
  const int Lout = L - W + 1;
  require_shape(out, {B, Lout, F}, "conv output");

  Tensor<T> cols({B * Lout, W * E});
  for (int b = 0; b < B; ++b) {
    for (int l = 0; l < Lout; ++l) {
      T* row = &cols.at(b * Lout + l, 0);
      std::memcpy(row, &x.at(b, l, 0), sizeof(T) * static_cast<std::size_t>(W * E));
    }
  }
  matmul<T>(static_cast<std::int64_t>(B) * Lout, W * E, F, cols.data(), filters.data(),
            out.data(), false);
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(B) * Lout; ++r) {
    T* o = out.data() + r * F;
    for (int f = 0; f < F; ++f) o[f] += bias[f];
  }
  if (cache) cache->cols = std::move(cols);
}

template <typename T>
void conv1d_backward(const Tensor<T>& filters, const Conv1dCache<T>& cache, const Tensor<T>& dout,
                     Tensor<T>& dfilters, Tensor<T>& dbias, Tensor<T>& dx) {
  const int B = dx.dim(0), L = dx.dim(1), E = dx.dim(2);
  const int W = filters.dim(0), F = filters.dim(2);
  const int Lout = L - W + 1;
  const std::int64_t rows = static_cast<std::int64_t>(B) * Lout;

  for (int f = 0; f < F; ++f) {
    double acc = static_cast<double>(dbias[f]);
    for (std::int64_t r = 0; r < rows; ++r) acc += static_cast<double>(dout[r * F + f]);
    dbias[f] = static_cast<T>(acc);
  }
  matmul_transA_accum<T>(rows, W * E, F, cache.cols.data(), dout.data(), dfilters.data());

  Tensor<T> dcols({static_cast<int>(rows), W * E});
  matmul_transB<T>(rows, F, W * E, dout.data(), filters.data(), dcols.data(), false);
  dx.fill(T(0));
  parallel_for_blocks(B, 1, [&](std::int64_t b0, std::int64_t b1) {
    for (std::int64_t b = b0; b < b1; ++b) {
      for (int l = 0; l < Lout; ++l) {
        const T* row = &dcols.at(static_cast<int>(b) * Lout + l, 0);
        T* xr = &dx.at(static_cast<int>(b), l, 0);
        for (int i = 0; i < W * E; ++i) xr[i] += row[i];
      }
    }
  });
}

template <typename T>
void relu(Tensor<T>& x) {
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    if (x[i] < T(0)) x[i] = T(0);
  }
}

/// In-place, using the post-activation values: dy ⊙= (y > 0).
template <typename T>
void relu_backward(const Tensor<T>& y, Tensor<T>& dy) {
  for (std::int64_t i = 0; i < y.numel(); ++i) {
    if (y[i] <= T(0)) dy[i] = T(0);
  }
}

/// out[b,f] = max over l of x[b,l,f]; first maximum wins ties so the argmax
/// cache is unambiguous.
template <typename T>
void max_over_time(const Tensor<T>& x, Tensor<T>& out, std::vector<int>* argmax = nullptr) {
  const int B = x.dim(0), L = x.dim(1), F = x.dim(2);
  require_shape(out, {B, F}, "pooled output");
  if (argmax) argmax->assign(static_cast<std::size_t>(B) * F, 0);
  for (int b = 0; b < B; ++b) {
    for (int f = 0; f < F; ++f) {
      T best = x.at(b, 0, f);
      int best_l = 0;
      for (int l = 1; l < L; ++l) {
        if (x.at(b, l, f) > best) {
          best = x.at(b, l, f);
          best_l = l;
        }
      }
      out.at(b, f) = best;
      if (argmax) (*argmax)[static_cast<std::size_t>(b) * F + f] = best_l;
    }
  }
}

template <typename T>
void max_over_time_backward(std::span<const int> argmax, const Tensor<T>& dout, Tensor<T>& dx) {
  const int B = dx.dim(0), F = dx.dim(2);
  dx.fill(T(0));
  for (int b = 0; b < B; ++b) {
    for (int f = 0; f < F; ++f) {
      dx.at(b, argmax[static_cast<std::size_t>(b) * F + f], f) += dout.at(b, f);
    }
  }
}

/// out = x·w + b with x [B,I], w [I,O], b [O].
template <typename T>
void dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Tensor<T>& out) {
  const int B = x.dim(0), I = x.dim(1), O = w.dim(1);
  require_shape(w, {I, O}, "dense weights");
  require_shape(b, {O}, "dense bias");
  require_shape(out, {B, O}, "dense output");
  matmul<T>(B, I, O, x.data(), w.data(), out.data(), false);
  for (int row = 0; row < B; ++row) {
    T* o = &out.at(row, 0);
    for (int j = 0; j < O; ++j) o[j] += b[j];
  }
}

template <typename T>
void dense_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dout, Tensor<T>& dw,
                    Tensor<T>& db, Tensor<T>& dx) {
  const int B = x.dim(0), I = x.dim(1), O = w.dim(1);
  for (int j = 0; j < O; ++j) {
    double acc = static_cast<double>(db[j]);
    for (int row = 0; row < B; ++row) acc += static_cast<double>(dout.at(row, j));
    db[j] = static_cast<T>(acc);
  }
  matmul_transA_accum<T>(B, I, O, x.data(), dout.data(), dw.data());
  matmul_transB<T>(B, O, I, dout.data(), w.data(), dx.data(), false);
}

/// Row-wise stable softmax. Probabilities are floored at 1e-38 so downstream
/// log/sampling never sees an exact zero.
template <typename T>
void softmax_rows(const Tensor<T>& logits, Tensor<T>& probs) {
  const int B = logits.dim(0), V = logits.dim(1);
  require_shape(probs, {B, V}, "softmax output");
  for (int b = 0; b < B; ++b) {
    const T* l = &logits.at(b, 0);
    T* p = &probs.at(b, 0);
    double m = static_cast<double>(l[0]);
    for (int v = 1; v < V; ++v) m = std::max(m, static_cast<double>(l[v]));
    double z = 0.0;
    for (int v = 0; v < V; ++v) z += std::exp(static_cast<double>(l[v]) - m);
    for (int v = 0; v < V; ++v) {
      double pv = std::exp(static_cast<double>(l[v]) - m) / z;
      p[v] = static_cast<T>(std::max(pv, 1e-38));
    }
  }
}

/// Fused softmax + cross-entropy over one batch of logits. Returns
/// Σ_b w_b · (−log p(target_b)); when dlogits is given, accumulates
/// w_b · (softmax − onehot) into it. Empty weights mean all-ones.
template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets,
                             std::span<const double> weights, Tensor<T>* dlogits) {
  const int B = logits.dim(0), V = logits.dim(1);
  if (static_cast<int>(targets.size()) != B) {
    raise(Errc::kShapeMismatch, "target count does not match batch");
  }
  if (!weights.empty() && static_cast<int>(weights.size()) != B) {
    raise(Errc::kShapeMismatch, "weight count does not match batch");
  }
  double loss = 0.0;
  for (int b = 0; b < B; ++b) {
    int t = targets[b];
    if (t < 0 || t >= V) {
      raise(Errc::kOutOfRangeToken,
            "target " + std::to_string(t) + " outside vocabulary of " + std::to_string(V));
    }
    const T* l = &logits.at(b, 0);
    double m = static_cast<double>(l[0]);
    for (int v = 1; v < V; ++v) m = std::max(m, static_cast<double>(l[v]));
    double z = 0.0;
    for (int v = 0; v < V; ++v) z += std::exp(static_cast<double>(l[v]) - m);
    double w = weights.empty() ? 1.0 : weights[b];
    loss += w * (std::log(z) - (static_cast<double>(l[t]) - m));
    if (dlogits) {
      T* dl = &dlogits->at(b, 0);
      for (int v = 0; v < V; ++v) {
        double p = std::exp(static_cast<double>(l[v]) - m) / z;
        dl[v] += static_cast<T>(w * (p - (v == t ? 1.0 : 0.0)));
      }
    }
  }
  return loss;
}

template <typename T>
void sigmoid(const Tensor<T>& x, Tensor<T>& y) {
  for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = sigmoid_scalar(x[i]);
}

/// Mean squared error of scores against a constant target:
/// loss = (1/B) Σ (s_b − target)². dscores is overwritten.
template <typename T>
double least_squares_loss(const Tensor<T>& scores, double target, Tensor<T>* dscores) {
  const std::int64_t B = scores.numel();
  double loss = 0.0;
  for (std::int64_t b = 0; b < B; ++b) {
    double d = static_cast<double>(scores[b]) - target;
    loss += d * d;
    if (dscores) (*dscores)[b] = static_cast<T>(2.0 * d / static_cast<double>(B));
  }
  return loss / static_cast<double>(B);
}

/// Inverted dropout, in place. In train mode each element is zeroed with
/// probability rate and survivors are scaled by 1/(1−rate); eval mode is the
/// identity. The mask (already scaled) is stored for the backward pass.
template <typename T>
void dropout(Tensor<T>& x, double rate, bool train, rng::SplitMix64& g,
             Tensor<T>* mask = nullptr) {
  if (!train || rate <= 0.0) {
    if (mask) {
      *mask = Tensor<T>::zeros_like(x);
      mask->fill(T(1));
    }
    return;
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  if (mask) *mask = Tensor<T>::zeros_like(x);
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    T m = g.uniform() < rate ? T(0) : keep_scale;
    x[i] *= m;
    if (mask) (*mask)[i] = m;
  }
}

template <typename T>
void dropout_backward(const Tensor<T>& mask, Tensor<T>& dy) {
  for (std::int64_t i = 0; i < dy.numel(); ++i) dy[i] *= mask[i];
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification.
// ---------------------------------------------------------------------------

struct FdReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int coords_checked = 0;
};

/// Central-difference check of the analytic gradients that loss_fn(true)
/// writes into ps. Samples a random 1% of coordinates (at least min_coords,
/// or all of them when the model is smaller than that) and returns the worst
/// relative error |analytic − numeric| / max(|analytic|, |numeric|, 1e-6).
/// loss_fn(false) must evaluate the same deterministic loss without touching
/// gradients.
template <typename T, typename LossFn>
FdReport finite_diff_check(ParamSet<T>& ps, LossFn&& loss_fn, double epsilon = 1e-3,
                           std::uint64_t seed = 0x5eed, double sample_fraction = 0.01,
                           int min_coords = 50) {
  ps.zero_grads();
  loss_fn(true);
  std::vector<Tensor<T>> analytic;
  for (auto& p : ps.params()) analytic.push_back(p.grad);

  const std::int64_t total = ps.numel();
  std::int64_t want = static_cast<std::int64_t>(static_cast<double>(total) * sample_fraction);
  want = std::min(total, std::max<std::int64_t>(want, min_coords));

  std::vector<std::int64_t> coords(static_cast<std::size_t>(total));
  for (std::int64_t i = 0; i < total; ++i) coords[static_cast<std::size_t>(i)] = i;
  rng::SplitMix64 g(seed);
  rng::shuffle(coords, g);
  coords.resize(static_cast<std::size_t>(want));

  FdReport report;
  for (std::int64_t flat : coords) {
    std::size_t pi = 0;
    std::int64_t off = flat;
    while (off >= ps.params()[pi].value.numel()) {
      off -= ps.params()[pi].value.numel();
      ++pi;
    }
    auto& param = ps.params()[pi];
    T saved = param.value[off];
    param.value[off] = saved + static_cast<T>(epsilon);
    double lp = loss_fn(false);
    param.value[off] = saved - static_cast<T>(epsilon);
    double lm = loss_fn(false);
    param.value[off] = saved;
    double numeric = (lp - lm) / (2.0 * epsilon);
    double a = static_cast<double>(analytic[pi][off]);
    double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
    ++report.coords_checked;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_param = param.name;
      report.worst_index = off;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints.
//
// Layout: magic "PSGN", format version u16 LE, then records until EOF. Each
// record is u32 name length, name bytes, u32 rank, u32 dims[rank], row-major
// little-endian f32 payload. Names beginning with "__" are reserved:
// "__meta.<key>" rank-1 [1] records carry run metadata (vocab size, head
// variant, epoch, ...) up front where a reader finds them first, and
// "__adam_step" carries the optimizer step counter. Adam moments are stored
// under "<param>.adam_m" / "<param>.adam_v".
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {

inline void put_u16(std::ostream& os, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 4);
}

inline void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

inline std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline float get_f32(std::istream& is) {
  std::uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline void write_record(std::ostream& os, const std::string& name,
                         const std::vector<int>& dims, const float* data, std::int64_t n) {
  put_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(os, static_cast<std::uint32_t>(dims.size()));
  for (int d : dims) put_u32(os, static_cast<std::uint32_t>(d));
  for (std::int64_t i = 0; i < n; ++i) put_f32(os, data[i]);
}

}  // namespace detail

struct Checkpoint {
  std::uint16_t version = kCheckpointVersion;
  std::map<std::string, Tensor<float>> records;

  bool has(const std::string& name) const { return records.count(name) > 0; }

  const Tensor<float>& get(const std::string& name) const {
    auto it = records.find(name);
    if (it == records.end()) raise(Errc::kIoError, "checkpoint record missing: " + name);
    return it->second;
  }

  double meta(const std::string& key) const {
    return static_cast<double>(get("__meta." + key)[0]);
  }

  std::optional<double> meta_maybe(const std::string& key) const {
    auto it = records.find("__meta." + key);
    if (it == records.end()) return std::nullopt;
    return static_cast<double>(it->second[0]);
  }
};

template <typename T>
void save_checkpoint(const std::string& path, const ParamSet<T>& ps,
                     const std::map<std::string, double>& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) raise(Errc::kIoError, "cannot write checkpoint " + path);
  os.write("PSGN", 4);
  detail::put_u16(os, kCheckpointVersion);
  for (const auto& [key, value] : meta) {
    float v = static_cast<float>(value);
    detail::write_record(os, "__meta." + key, {1}, &v, 1);
  }
  float step = static_cast<float>(ps.step());
  detail::write_record(os, "__adam_step", {1}, &step, 1);

  std::vector<float> buf;
  auto write_tensor = [&](const std::string& name, const Tensor<T>& t) {
    buf.resize(static_cast<std::size_t>(t.numel()));
    for (std::int64_t i = 0; i < t.numel(); ++i) buf[static_cast<std::size_t>(i)] =
        static_cast<float>(t[i]);
    detail::write_record(os, name, t.shape(), buf.data(), t.numel());
  };
  for (const auto& p : ps.params()) {
    write_tensor(p.name, p.value);
    write_tensor(p.name + ".adam_m", p.adam_m);
    write_tensor(p.name + ".adam_v", p.adam_v);
  }
  if (!os) raise(Errc::kIoError, "short write on checkpoint " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(Errc::kIoError, "cannot read checkpoint " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "PSGN", 4) != 0) {
    raise(Errc::kMalformedHeader, "not a checkpoint file: " + path);
  }
  Checkpoint ckpt;
  ckpt.version = detail::get_u16(is);
  if (ckpt.version != kCheckpointVersion) {
    raise(Errc::kUnsupportedFormat,
          "checkpoint version " + std::to_string(ckpt.version) + " not supported");
  }
  while (true) {
    std::uint32_t name_len = detail::get_u32(is);
    if (is.eof()) break;
    if (name_len == 0 || name_len > 4096) raise(Errc::kMalformedHeader, "bad record name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    std::uint32_t rank = detail::get_u32(is);
    if (rank > 8) raise(Errc::kMalformedHeader, "bad record rank");
    std::vector<int> dims;
    std::int64_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      auto d = static_cast<int>(detail::get_u32(is));
      dims.push_back(d);
      n *= d;
    }
    Tensor<float> t(dims.empty() ? std::vector<int>{1} : dims);
    for (std::int64_t i = 0; i < n; ++i) t[i] = detail::get_f32(is);
    if (!is) raise(Errc::kIoError, "truncated checkpoint record " + name);
    ckpt.records.emplace(std::move(name), std::move(t));
  }
  return ckpt;
}

/// Restores parameter values, Adam moments, and the step counter. Every
/// parameter must be present with a matching shape.
template <typename T>
void load_params(ParamSet<T>& ps, const Checkpoint& ckpt) {
  auto copy_into = [&](const std::string& name, Tensor<T>& dst) {
    const Tensor<float>& src = ckpt.get(name);
    if (src.shape() != dst.shape()) {
      raise(Errc::kShapeMismatch, "checkpoint record " + name + " has shape " + src.shape_str() +
                                      ", model expects " + dst.shape_str());
    }
    for (std::int64_t i = 0; i < src.numel(); ++i) dst[i] = static_cast<T>(src[i]);
  };
  for (auto& p : ps.params()) {
    copy_into(p.name, p.value);
    copy_into(p.name + ".adam_m", p.adam_m);
    copy_into(p.name + ".adam_v", p.adam_v);
  }
  ps.set_step(static_cast<std::int64_t>(ckpt.get("__adam_step")[0]));
}

}  // namespace polyseq::nn
