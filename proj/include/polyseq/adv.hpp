#pragma once

/// Adversarial training orchestration: Monte Carlo action-value estimation
/// with a rollout policy, discounting, generator policy-gradient updates,
/// exponential rollout blending, and alternating all-real/all-fake
/// discriminator updates, with a divergence watchdog on top.

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "polyseq/discriminator.hpp"
#include "polyseq/errors.hpp"
#include "polyseq/generator.hpp"
#include "polyseq/rng.hpp"
#include "polyseq/tensor.hpp"

namespace polyseq::adv {

struct AdvConfig {
  int rollouts = 32;                // Monte Carlo completions per (sequence, cut)
  double discount = 0.99;           // γ, applied as γ^(t-1) per position
  double rollout_update_rate = 0.9; // rollout ← rate·rollout + (1-rate)·generator
  int g_steps = 1;
  int d_steps = 5;
  int d_epochs_per_step = 3;
  double g_lr = 0.01;
  double d_lr = 1e-4;
};

/// Action-value matrix Q[b,t]: for t < T the mean discriminator score of N
/// rollout completions of the prefix y_1..y_t, for t = T the score of the
/// sequence itself, then scaled by γ^(t-1). Deterministic given the seed:
/// lane (b,t,n) draws from the stream derive_seed(seed, b, t, n), so any
/// single lane replayed through rollout_complete with that stream yields the
/// identical completion.
template <typename T>
Tensor<T> compute_rewards(const std::vector<std::vector<int>>& batch,
                          const gen::Generator<T>& rollout, disc::Discriminator<T>& d,
                          const AdvConfig& cfg, gen::StartKind mode, std::uint64_t seed,
                          double* mean_score_out = nullptr) {
  const int B = static_cast<int>(batch.size());
  const int T_ = rollout.config().seq_len;
  const int H = rollout.config().hidden_size;
  const int N = cfg.rollouts;
  if (N < 1) raise(Errc::kConfigError, "rollout count must be at least 1");

  Tensor<T> q({B, T_});
  auto states = rollout.forward_states(batch, mode);

  std::vector<std::vector<int>> completed(static_cast<std::size_t>(B) * N);
  for (auto& s : completed) s.reserve(static_cast<std::size_t>(T_));
  std::vector<rng::SplitMix64> lane_rngs;
  std::vector<int> last(static_cast<std::size_t>(B) * N);

  for (int t = 1; t < T_; ++t) {
    const auto& ph = states.pre_h[static_cast<std::size_t>(t)];
    const auto& pc = states.pre_c[static_cast<std::size_t>(t)];
    Tensor<T> h0({B * N, H}), c0({B * N, H});
    lane_rngs.clear();
    for (int b = 0; b < B; ++b) {
      for (int n = 0; n < N; ++n) {
        const int lane = b * N + n;
        std::memcpy(&h0.at(lane, 0), &ph.at(b, 0), sizeof(T) * static_cast<std::size_t>(H));
        std::memcpy(&c0.at(lane, 0), &pc.at(b, 0), sizeof(T) * static_cast<std::size_t>(H));
        last[static_cast<std::size_t>(lane)] = batch[static_cast<std::size_t>(b)][static_cast<std::size_t>(t - 1)];
        lane_rngs.emplace_back(rng::derive_seed(seed, static_cast<std::uint64_t>(b),
                                                static_cast<std::uint64_t>(t),
                                                static_cast<std::uint64_t>(n)));
      }
    }
    auto tails = rollout.sample_from_states(h0, c0, last, T_ - t, lane_rngs);
    for (int lane = 0; lane < B * N; ++lane) {
      auto& seq = completed[static_cast<std::size_t>(lane)];
      const auto& prefix = batch[static_cast<std::size_t>(lane / N)];
      seq.assign(prefix.begin(), prefix.begin() + t);
      seq.insert(seq.end(), tails[static_cast<std::size_t>(lane)].begin(),
                 tails[static_cast<std::size_t>(lane)].end());
    }
    Tensor<T> scores = d.forward(completed, false);
    for (int b = 0; b < B; ++b) {
      double acc = 0.0;
      for (int n = 0; n < N; ++n) acc += static_cast<double>(scores[b * N + n]);
      q.at(b, t - 1) = static_cast<T>(acc / N);
    }
  }

  Tensor<T> terminal = d.forward(batch, false);
  for (int b = 0; b < B; ++b) q.at(b, T_ - 1) = terminal[b];

  double mean_score = 0.0;
  for (int b = 0; b < B; ++b) {
    for (int t = 1; t <= T_; ++t) {
      mean_score += static_cast<double>(q.at(b, t - 1));
      q.at(b, t - 1) *= static_cast<T>(std::pow(cfg.discount, t - 1));
    }
  }
  if (mean_score_out) *mean_score_out = mean_score / (static_cast<double>(B) * T_);
  return q;
}

/// One line of the per-epoch metrics log.
struct EpochMetrics {
  int epoch = 0;
  double mean_reward = 0.0;  // mean discriminator score before discounting
  double g_loss = 0.0;
  double d_loss_real = 0.0;
  double d_loss_fake = 0.0;
  double bleu4 = 0.0;

  std::string tsv() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(6);
    os << epoch << "\t" << mean_reward << "\t" << g_loss << "\t" << d_loss_real << "\t"
       << d_loss_fake << "\t" << bleu4;
    return os.str();
  }
};

/// One adversarial epoch: g_steps × [sample → estimate rewards → policy
/// gradient → blend rollout], then d_steps rounds of fresh real/fake batches,
/// each trained d_epochs_per_step times alternating real and fake updates.
/// bleu4 in the returned record is left 0; the caller owns evaluation.
template <typename T>
EpochMetrics adversarial_epoch(gen::Generator<T>& g, gen::Generator<T>& rollout,
                               disc::Discriminator<T>& d,
                               const std::vector<std::vector<int>>& real_windows,
                               const AdvConfig& cfg, gen::StartKind mode, std::uint64_t seed,
                               int epoch) {
  EpochMetrics metrics;
  metrics.epoch = epoch;
  const int B = g.config().batch;
  const auto e = static_cast<std::uint64_t>(epoch);

  for (int gs = 0; gs < cfg.g_steps; ++gs) {
    auto batch = g.sample_sequences(B, mode, real_windows,
                                    rng::derive_seed(seed, 0xA11, e, static_cast<std::uint64_t>(gs)));
    double mean_score = 0.0;
    Tensor<T> rewards = compute_rewards(batch, rollout, d, cfg, mode,
                                        rng::derive_seed(seed, 0xB22, e, static_cast<std::uint64_t>(gs)),
                                        &mean_score);
    metrics.g_loss += g.policy_gradient_step(batch, rewards, mode, cfg.g_lr);
    metrics.mean_reward += mean_score;
    gen::update_rollout(rollout, g, cfg.rollout_update_rate);
  }
  if (cfg.g_steps > 0) {
    metrics.g_loss /= cfg.g_steps;
    metrics.mean_reward /= cfg.g_steps;
  }

  if (cfg.d_steps > 0 && real_windows.empty()) {
    raise(Errc::kEmptyCorpus, "discriminator updates need real sequences");
  }
  int d_updates = 0;
  for (int ds = 0; ds < cfg.d_steps; ++ds) {
    auto fake = g.sample_sequences(B, mode, real_windows,
                                   rng::derive_seed(seed, 0xC33, e, static_cast<std::uint64_t>(ds)));
    rng::SplitMix64 pick(rng::derive_seed(seed, 0xD44, e, static_cast<std::uint64_t>(ds)));
    std::vector<std::vector<int>> real(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
      real[static_cast<std::size_t>(b)] = real_windows[pick.below(real_windows.size())];
    }
    for (int de = 0; de < cfg.d_epochs_per_step; ++de) {
      metrics.d_loss_real += d.train_step(real, disc::Label::kReal, cfg.d_lr);
      metrics.d_loss_fake += d.train_step(fake, disc::Label::kFake, cfg.d_lr);
      ++d_updates;
    }
  }
  if (d_updates > 0) {
    metrics.d_loss_real /= d_updates;
    metrics.d_loss_fake /= d_updates;
  }
  return metrics;
}

/// Mode-collapse watchdog. Trips when the mean reward sits below the floor
/// for `patience` consecutive epochs, or when validation BLEU falls more
/// than `bleu_drop` below the best value seen (the pretraining peak is the
/// initial best).
class DivergenceMonitor {
 public:
  explicit DivergenceMonitor(double reward_floor = 0.02, int patience = 10,
                             double bleu_drop = 0.3)
      : reward_floor_(reward_floor), patience_(patience), bleu_drop_(bleu_drop) {}

  void set_baseline_bleu(double bleu) { best_bleu_ = bleu; }

  /// Returns a diagnosis when training has diverged, std::nullopt otherwise.
  std::optional<std::string> observe(double mean_reward, std::optional<double> bleu) {
    low_reward_streak_ = mean_reward < reward_floor_ ? low_reward_streak_ + 1 : 0;
    if (low_reward_streak_ >= patience_) {
      std::ostringstream os;
      os << "mean reward below " << reward_floor_ << " for " << low_reward_streak_
         << " consecutive epochs";
      return os.str();
    }
    if (bleu) {
      if (best_bleu_ && *bleu < *best_bleu_ - bleu_drop_) {
        std::ostringstream os;
        os << "validation BLEU fell to " << *bleu << ", more than " << bleu_drop_
           << " below the best " << *best_bleu_;
        return os.str();
      }
      if (!best_bleu_ || *bleu > *best_bleu_) best_bleu_ = *bleu;
    }
    return std::nullopt;
  }

 private:
  double reward_floor_;
  int patience_;
  double bleu_drop_;
  int low_reward_streak_ = 0;
  std::optional<double> best_bleu_;
};

}  // namespace polyseq::adv
