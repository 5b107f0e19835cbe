#pragma once

/// LSTM language model over token ids, used three ways: maximum-likelihood
/// pretraining with teacher forcing, autoregressive sampling (as the live
/// generator and as the Monte Carlo rollout policy), and policy-gradient
/// updates driven by discriminator rewards.
///
/// Sequence conventions. A sequence is exactly seq_len tokens y_1..y_T. The
/// LSTM consumes one input per position: in UNCONDITIONAL mode the inputs
/// are (start token 0, y_1, ..., y_{T-1}) and all T positions are model
/// decisions; in CONDITIONAL mode y_1 is copied from a real sequence and the
/// inputs are (y_1, ..., y_{T-1}), so decisions are positions 2..T.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "polyseq/errors.hpp"
#include "polyseq/nn.hpp"
#include "polyseq/rng.hpp"
#include "polyseq/tensor.hpp"

namespace polyseq::gen {

inline constexpr int kStartToken = 0;

enum class StartKind { kUnconditional, kConditional };

inline const char* start_kind_name(StartKind k) {
  return k == StartKind::kUnconditional ? "uncond" : "cond";
}

struct GeneratorConfig {
  int vocab_size = 0;
  int embedding_dim = 32;
  int hidden_size = 512;
  int seq_len = 100;
  int batch = 32;
};

/// Per-timestep LSTM states captured during a teacher-forced pass.
/// pre_h[t]/pre_c[t] (t in [1, T-1]) is the state just before the input for
/// position t+1's prediction is consumed — exactly the state a Monte Carlo
/// rollout needs to continue a prefix y_1..y_t.
template <typename T>
struct StateCache {
  std::vector<Tensor<T>> pre_h, pre_c;  // index 0 unused; valid for t = 1..T-1
};

template <typename T>
class Generator {
 public:
  Generator(GeneratorConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
    if (cfg_.vocab_size < 2) raise(Errc::kConfigError, "vocab_size must be at least 2");
    if (cfg_.seq_len < 2) raise(Errc::kConfigError, "seq_len must be at least 2");
    const int V = cfg_.vocab_size, E = cfg_.embedding_dim, H = cfg_.hidden_size;
    ps_.add("embed", {V, E});
    ps_.add("lstm.wx", {E, 4 * H});
    ps_.add("lstm.wh", {H, 4 * H});
    ps_.add("lstm.b", {4 * H});
    ps_.add("out.w", {H, V});
    ps_.add("out.b", {V});

    rng::SplitMix64 g(init_seed);
    ps_.at("embed").value.fill_uniform(T(-0.08), T(0.08), g);
    ps_.at("lstm.wx").value.fill_uniform(T(-0.08), T(0.08), g);
    ps_.at("lstm.wh").value.fill_uniform(T(-0.08), T(0.08), g);
    ps_.at("out.w").value.fill_uniform(T(-0.08), T(0.08), g);
    // Forget-gate bias starts at 1 so early cell states persist.
    auto& b = ps_.at("lstm.b").value;
    for (int j = 0; j < H; ++j) b[H + j] = T(1);
  }

  const GeneratorConfig& config() const { return cfg_; }
  nn::ParamSet<T>& params() { return ps_; }
  const nn::ParamSet<T>& params() const { return ps_; }

  /// One teacher-forced NLL minibatch update at the pretraining rate.
  /// Returns the mean NLL (nats per predicted token) before the update.
  double nll_pretrain_step(std::span<const std::vector<int>> batch, StartKind mode,
                           double lr = 1e-3) {
    double nll = weighted_ce_pass(batch, mode, nullptr, true);
    ps_.clip_grad_norm(nn::kGradClipNorm);
    ps_.adam_step(lr);
    return nll;
  }

  /// Policy-gradient update on sampled sequences: the CE gradient of every
  /// decision is weighted by its (already discounted) reward and normalized
  /// by 1/(B·T). With rewards identically 1 in unconditional mode this is
  /// exactly the NLL gradient. Returns the surrogate loss.
  double policy_gradient_step(std::span<const std::vector<int>> batch, const Tensor<T>& rewards,
                              StartKind mode, double lr = 1e-2) {
    const int B = static_cast<int>(batch.size());
    require_shape(rewards, {B, cfg_.seq_len}, "reward matrix");
    double loss = weighted_ce_pass(batch, mode, &rewards, true);
    ps_.clip_grad_norm(nn::kGradClipNorm);
    ps_.adam_step(lr);
    return loss;
  }

  /// Frozen mean NLL over a corpus of seq_len windows, in nats per predicted
  /// token. No dropout, no updates.
  double evaluate_nll(std::span<const std::vector<int>> corpus, StartKind mode) const {
    if (corpus.empty()) raise(Errc::kEmptyCorpus, "cannot evaluate on an empty corpus");
    auto* self = const_cast<Generator*>(this);
    double total = 0.0;
    std::int64_t rows = 0;
    const int B = cfg_.batch;
    for (std::size_t i = 0; i < corpus.size(); i += static_cast<std::size_t>(B)) {
      std::size_t e = std::min(corpus.size(), i + static_cast<std::size_t>(B));
      auto chunk = corpus.subspan(i, e - i);
      total += self->weighted_ce_pass(chunk, mode, nullptr, false) *
               static_cast<double>(chunk.size());
      rows += static_cast<std::int64_t>(chunk.size());
    }
    return total / static_cast<double>(rows);
  }

  /// Samples n sequences of seq_len tokens. Every row draws from its own
  /// derived RNG stream, so output r is the same no matter how many rows are
  /// requested. CONDITIONAL mode copies position 1 from a random member of
  /// real_pool.
  std::vector<std::vector<int>> sample_sequences(int n, StartKind mode,
                                                 const std::vector<std::vector<int>>& real_pool,
                                                 std::uint64_t seed) const {
    if (n <= 0) return {};
    const int T_ = cfg_.seq_len;
    std::vector<std::vector<int>> seqs(static_cast<std::size_t>(n));
    std::vector<rng::SplitMix64> lane_rngs;
    lane_rngs.reserve(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) {
      lane_rngs.emplace_back(rng::derive_seed(seed, static_cast<std::uint64_t>(r)));
    }

    std::vector<int> last(static_cast<std::size_t>(n), kStartToken);
    int steps = T_;
    if (mode == StartKind::kConditional) {
      if (real_pool.empty()) {
        raise(Errc::kEmptyCorpus, "conditional sampling needs a non-empty real pool");
      }
      rng::SplitMix64 pool_rng(rng::derive_seed(seed, 0x9999AAAAULL));
      for (int r = 0; r < n; ++r) {
        const auto& src = real_pool[pool_rng.below(real_pool.size())];
        last[static_cast<std::size_t>(r)] = src.front();
        seqs[static_cast<std::size_t>(r)].push_back(src.front());
      }
      steps = T_ - 1;
    }

    Tensor<T> h({n, cfg_.hidden_size}), c({n, cfg_.hidden_size});
    auto sampled = sample_from_states(h, c, last, steps, lane_rngs);
    for (int r = 0; r < n; ++r) {
      auto& s = seqs[static_cast<std::size_t>(r)];
      s.insert(s.end(), sampled[static_cast<std::size_t>(r)].begin(),
               sampled[static_cast<std::size_t>(r)].end());
    }
    return seqs;
  }

  /// Completes a prefix y_1..y_t to a full sequence using this model as the
  /// rollout policy. The prefix is kept verbatim; the remaining tokens are
  /// sampled from SplitMix64(seed). t = seq_len returns the prefix untouched
  /// without consuming randomness.
  std::vector<int> rollout_complete(std::span<const int> prefix, StartKind mode,
                                    std::uint64_t seed) const {
    const int T_ = cfg_.seq_len;
    const int t = static_cast<int>(prefix.size());
    if (t < 1) raise(Errc::kSequenceTooShort, "rollout prefix must hold at least one token");
    if (t > T_) raise(Errc::kShapeMismatch, "rollout prefix longer than seq_len");
    std::vector<int> seq(prefix.begin(), prefix.end());
    if (t == T_) return seq;

    Tensor<T> h({1, cfg_.hidden_size}), c({1, cfg_.hidden_size});
    Tensor<T> h2 = h, c2 = c;
    // Replay the inputs that precede the last prefix token.
    std::vector<int> input(1);
    auto feed = [&](int token) {
      input[0] = token;
      step_forward(input, h, c, h2, c2, nullptr);
      std::swap(h, h2);
      std::swap(c, c2);
    };
    if (mode == StartKind::kUnconditional) feed(kStartToken);
    for (int i = 0; i + 1 < t; ++i) feed(prefix[static_cast<std::size_t>(i)]);

    std::vector<rng::SplitMix64> lane_rngs{rng::SplitMix64(seed)};
    std::vector<int> last{prefix.back()};
    auto sampled = sample_from_states(h, c, last, T_ - t, lane_rngs);
    seq.insert(seq.end(), sampled[0].begin(), sampled[0].end());
    return seq;
  }

  /// Teacher-forces the batch and records, for every cut position t in
  /// [1, T-1], the LSTM state a rollout continuation needs.
  StateCache<T> forward_states(std::span<const std::vector<int>> batch, StartKind mode) const {
    const int B = static_cast<int>(batch.size());
    const int T_ = cfg_.seq_len, H = cfg_.hidden_size;
    check_batch(batch);
    StateCache<T> states;
    states.pre_h.assign(static_cast<std::size_t>(T_), Tensor<T>());
    states.pre_c.assign(static_cast<std::size_t>(T_), Tensor<T>());

    Tensor<T> h({B, H}), c({B, H}), h2({B, H}), c2({B, H});
    std::vector<int> input(static_cast<std::size_t>(B));
    auto feed = [&](int pos_or_start) {
      // pos_or_start < 0 feeds the start token to every row; otherwise
      // feeds column pos_or_start of the batch.
      for (int b = 0; b < B; ++b) {
        input[static_cast<std::size_t>(b)] =
            pos_or_start < 0 ? kStartToken
                             : batch[static_cast<std::size_t>(b)][static_cast<std::size_t>(
                                   pos_or_start)];
      }
      step_forward(input, h, c, h2, c2, nullptr);
      std::swap(h, h2);
      std::swap(c, c2);
    };

    if (mode == StartKind::kUnconditional) feed(-1);
    states.pre_h[1] = h;
    states.pre_c[1] = c;
    for (int t = 2; t < T_; ++t) {
      feed(t - 2);  // consume y_{t-1}
      states.pre_h[static_cast<std::size_t>(t)] = h;
      states.pre_c[static_cast<std::size_t>(t)] = c;
    }
    return states;
  }

  /// Batched sampling core. Starting from per-lane states (h0,c0) and the
  /// per-lane token about to be consumed, alternates consume/sample for
  /// `steps` rounds; lane i draws only from lane_rngs[i], so any single lane
  /// replayed alone (same state, token, RNG) reproduces its row bitwise.
  std::vector<std::vector<int>> sample_from_states(const Tensor<T>& h0, const Tensor<T>& c0,
                                                   std::span<const int> last_tokens, int steps,
                                                   std::span<rng::SplitMix64> lane_rngs) const {
    const int L = h0.dim(0), V = cfg_.vocab_size;
    std::vector<std::vector<int>> out(static_cast<std::size_t>(L));
    if (steps <= 0) return out;
    for (auto& o : out) o.reserve(static_cast<std::size_t>(steps));

    Tensor<T> h = h0, c = c0;
    Tensor<T> h2({L, cfg_.hidden_size}), c2({L, cfg_.hidden_size});
    Tensor<T> logits({L, V}), probs({L, V});
    std::vector<int> current(last_tokens.begin(), last_tokens.end());
    for (int s = 0; s < steps; ++s) {
      step_forward(current, h, c, h2, c2, &logits);
      std::swap(h, h2);
      std::swap(c, c2);
      nn::softmax_rows(logits, probs);
      for (int l = 0; l < L; ++l) {
        int tok = rng::sample_categorical(
            std::span<const T>(&probs.at(l, 0), static_cast<std::size_t>(V)),
            lane_rngs[static_cast<std::size_t>(l)]);
        current[static_cast<std::size_t>(l)] = tok;
        out[static_cast<std::size_t>(l)].push_back(tok);
      }
    }
    return out;
  }

 private:
  /// One LSTM step over a batch of token inputs; logits (if wanted) are the
  /// output-layer response of the new hidden state.
  void step_forward(std::span<const int> tokens, const Tensor<T>& h, const Tensor<T>& c,
                    Tensor<T>& h_out, Tensor<T>& c_out, Tensor<T>* logits) const {
    const int B = static_cast<int>(tokens.size());
    Tensor<T> x({B, cfg_.embedding_dim});
    nn::embedding_lookup(tokens, ps_.at("embed").value, x);
    nn::lstm_step(x, h, c, ps_.at("lstm.wx").value, ps_.at("lstm.wh").value,
                  ps_.at("lstm.b").value, h_out, c_out);
    if (logits) nn::dense(h_out, ps_.at("out.w").value, ps_.at("out.b").value, *logits);
  }

  void check_batch(std::span<const std::vector<int>> batch) const {
    if (batch.empty()) raise(Errc::kEmptyCorpus, "empty batch");
    for (const auto& s : batch) {
      if (static_cast<int>(s.size()) != cfg_.seq_len) {
        raise(Errc::kSequenceTooShort, "sequence length " + std::to_string(s.size()) +
                                           ", expected " + std::to_string(cfg_.seq_len));
      }
    }
  }

  /// Shared teacher-forced pass behind NLL training, NLL evaluation, and the
  /// policy gradient. Decision positions get per-row CE weights: all-ones
  /// for NLL (result normalized per decision), rewards[b,t]/(B·T) for the
  /// policy gradient. Returns the loss; with_grads runs full BPTT and fills
  /// parameter gradients.
  double weighted_ce_pass(std::span<const std::vector<int>> batch, StartKind mode,
                          const Tensor<T>* rewards, bool with_grads) {
    check_batch(batch);
    const int B = static_cast<int>(batch.size());
    const int T_ = cfg_.seq_len, H = cfg_.hidden_size, E = cfg_.embedding_dim,
              V = cfg_.vocab_size;
    const bool uncond = mode == StartKind::kUnconditional;
    const int decisions = uncond ? T_ : T_ - 1;
    // Decision step s (0-based) predicts position first_pos + s (1-based).
    const int first_pos = uncond ? 1 : 2;

    const double norm = rewards ? 1.0 / (static_cast<double>(B) * T_)
                                : 1.0 / (static_cast<double>(B) * decisions);

    if (with_grads) ps_.zero_grads();
    std::vector<nn::LstmStepCache<T>> caches(with_grads ? static_cast<std::size_t>(decisions)
                                                        : 0);
    std::vector<Tensor<T>> hs(with_grads ? static_cast<std::size_t>(decisions) : 0);
    std::vector<Tensor<T>> dlogits(with_grads ? static_cast<std::size_t>(decisions) : 0);
    std::vector<std::vector<int>> step_tokens(static_cast<std::size_t>(decisions));

    Tensor<T> h({B, H}), c({B, H}), h2({B, H}), c2({B, H});
    Tensor<T> x({B, E}), logits({B, V});
    std::vector<int> targets(static_cast<std::size_t>(B));
    std::vector<double> weights(static_cast<std::size_t>(B));
    double loss = 0.0;

    for (int s = 0; s < decisions; ++s) {
      const int pos = first_pos + s;  // 1-based position being predicted
      auto& in_tokens = step_tokens[static_cast<std::size_t>(s)];
      in_tokens.resize(static_cast<std::size_t>(B));
      for (int b = 0; b < B; ++b) {
        const auto& seq = batch[static_cast<std::size_t>(b)];
        in_tokens[static_cast<std::size_t>(b)] =
            pos == 1 ? kStartToken : seq[static_cast<std::size_t>(pos - 2)];
        targets[static_cast<std::size_t>(b)] = seq[static_cast<std::size_t>(pos - 1)];
        weights[static_cast<std::size_t>(b)] =
            norm * (rewards ? static_cast<double>(rewards->at(b, pos - 1)) : 1.0);
      }
      nn::embedding_lookup(std::span<const int>(in_tokens), ps_.at("embed").value, x);
      nn::lstm_step(x, h, c, ps_.at("lstm.wx").value, ps_.at("lstm.wh").value,
                    ps_.at("lstm.b").value, h2, c2,
                    with_grads ? &caches[static_cast<std::size_t>(s)] : nullptr);
      std::swap(h, h2);
      std::swap(c, c2);
      nn::dense(h, ps_.at("out.w").value, ps_.at("out.b").value, logits);
      if (with_grads) {
        hs[static_cast<std::size_t>(s)] = h;
        auto& dl = dlogits[static_cast<std::size_t>(s)];
        dl = Tensor<T>({B, V});
        loss += nn::softmax_cross_entropy(logits, targets, weights, &dl);
      } else {
        loss += nn::softmax_cross_entropy(logits, targets, weights,
                                          static_cast<Tensor<T>*>(nullptr));
      }
    }

    if (with_grads) {
      Tensor<T> dh({B, H}), dc({B, H}), dh_prev({B, H}), dc_prev({B, H});
      Tensor<T> dx({B, E}), dh_dense({B, H});
      dh.fill(T(0));
      dc.fill(T(0));
      auto& g_embed = ps_.at("embed").grad;
      auto& g_wx = ps_.at("lstm.wx").grad;
      auto& g_wh = ps_.at("lstm.wh").grad;
      auto& g_b = ps_.at("lstm.b").grad;
      auto& g_ow = ps_.at("out.w").grad;
      auto& g_ob = ps_.at("out.b").grad;
      for (int s = decisions - 1; s >= 0; --s) {
        nn::dense_backward(hs[static_cast<std::size_t>(s)], ps_.at("out.w").value,
                           dlogits[static_cast<std::size_t>(s)], g_ow, g_ob, dh_dense);
        for (std::int64_t i = 0; i < dh.numel(); ++i) dh[i] += dh_dense[i];
        nn::lstm_step_backward(caches[static_cast<std::size_t>(s)], ps_.at("lstm.wx").value,
                               ps_.at("lstm.wh").value, dh, dc, g_wx, g_wh, g_b, dx, dh_prev,
                               dc_prev);
        nn::embedding_backward(std::span<const int>(step_tokens[static_cast<std::size_t>(s)]),
                               dx, g_embed);
        std::swap(dh, dh_prev);
        std::swap(dc, dc_prev);
      }
    }
    return loss;
  }

  GeneratorConfig cfg_;
  nn::ParamSet<T> ps_;
};

/// Exponential blend of the rollout policy toward the live generator:
/// rollout ← rate·rollout + (1−rate)·generator, elementwise per tensor.
template <typename T>
void update_rollout(Generator<T>& rollout, const Generator<T>& generator, double rate = 0.9) {
  auto& rp = rollout.params().params();
  const auto& gp = generator.params().params();
  if (rp.size() != gp.size()) raise(Errc::kShapeMismatch, "rollout/generator parameter mismatch");
  for (std::size_t i = 0; i < rp.size(); ++i) {
    if (rp[i].name != gp[i].name || !rp[i].value.same_shape(gp[i].value)) {
      raise(Errc::kShapeMismatch, "rollout/generator parameter mismatch at " + rp[i].name);
    }
    for (std::int64_t j = 0; j < rp[i].value.numel(); ++j) {
      rp[i].value[j] = static_cast<T>(rate * static_cast<double>(rp[i].value[j]) +
                                      (1.0 - rate) * static_cast<double>(gp[i].value[j]));
    }
  }
}

/// Hard copy of generator parameters into the rollout policy (used once,
/// when adversarial training starts).
template <typename T>
void sync_rollout(Generator<T>& rollout, const Generator<T>& generator) {
  update_rollout(rollout, generator, 0.0);
}

}  // namespace polyseq::gen
