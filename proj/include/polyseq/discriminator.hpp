#pragma once

/// CNN discriminator: token embedding, a stack of valid-padding 1-D
/// convolutions with ReLU, max-over-time pooling, dropout, and one of two
/// heads. The SOFTMAX_CE head is a 2-way softmax trained with cross-entropy;
/// the SIGMOID_LS head is a single sigmoid score trained with squared error
/// against 1 (real) / 0 (fake). Either way the forward pass yields one
/// realness score in [0,1] per sequence, which is what reward estimation
/// consumes. Minibatches are all-real or all-fake, never mixed.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "polyseq/errors.hpp"
#include "polyseq/nn.hpp"
#include "polyseq/rng.hpp"
#include "polyseq/tensor.hpp"

namespace polyseq::disc {

enum class Head { kSoftmaxCe, kSigmoidLs };

inline const char* head_name(Head h) { return h == Head::kSoftmaxCe ? "ce" : "ls"; }

enum class Label { kFake = 0, kReal = 1 };

struct DiscriminatorConfig {
  int vocab_size = 0;
  int embedding_dim = 32;
  int conv_layers = 5;
  int feature_maps = 400;
  int filter_width = 20;
  int seq_len = 100;
  Head head = Head::kSoftmaxCe;
  double dropout = 0.25;

  /// Input span one pooled feature can see; inputs shorter than this leave
  /// no valid convolution output.
  int receptive_field() const { return conv_layers * (filter_width - 1) + 1; }
};

template <typename T>
class Discriminator {
 public:
  Discriminator(DiscriminatorConfig cfg, std::uint64_t init_seed)
      : cfg_(cfg), dropout_rng_(rng::derive_seed(init_seed, 0xD120)) {
    if (cfg_.conv_layers < 1) raise(Errc::kConfigError, "need at least one conv layer");
    if (cfg_.seq_len < cfg_.receptive_field()) {
      raise(Errc::kSequenceTooShort,
            "seq_len " + std::to_string(cfg_.seq_len) + " shorter than receptive field " +
                std::to_string(cfg_.receptive_field()));
    }
    const int V = cfg_.vocab_size, E = cfg_.embedding_dim, F = cfg_.feature_maps,
              W = cfg_.filter_width;
    rng::SplitMix64 g(init_seed);
    auto& embed = ps_.add("embed", {V, E});
    embed.value.fill_uniform(T(-0.08), T(0.08), g);
    for (int layer = 0; layer < cfg_.conv_layers; ++layer) {
      const int in = layer == 0 ? E : F;
      auto& wparam = ps_.add(layer_name(layer) + ".w", {W, in, F});
      // Fan-in scaled init keeps the stacked ReLU activations from
      // exploding layer over layer.
      T s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(W) * in));
      wparam.value.fill_uniform(-s, s, g);
      ps_.add(layer_name(layer) + ".b", {F});
    }
    const int head_out = cfg_.head == Head::kSoftmaxCe ? 2 : 1;
    ps_.add("head.w", {F, head_out}).value.fill_uniform(T(-0.08), T(0.08), g);
    ps_.add("head.b", {head_out});
  }

  const DiscriminatorConfig& config() const { return cfg_; }
  nn::ParamSet<T>& params() { return ps_; }
  const nn::ParamSet<T>& params() const { return ps_; }

  /// Realness scores, one per sequence, each in [0,1]. Scoring (train =
  /// false) is deterministic and row-independent: a sequence's score does
  /// not depend on what else is in the batch.
  Tensor<T> forward(std::span<const std::vector<int>> batch, bool train = false) {
    Cache cache;
    return forward_impl(batch, train, cache);
  }

  /// One optimizer step on an all-real or all-fake minibatch; returns the
  /// head loss before the update.
  double train_step(std::span<const std::vector<int>> batch, Label label, double lr = 1e-4) {
    const int B = static_cast<int>(batch.size());
    Cache cache;
    ps_.zero_grads();
    Tensor<T> scores = forward_impl(batch, true, cache);

    double loss = 0.0;
    Tensor<T> dlogits = Tensor<T>::zeros_like(cache.head_logits);
    if (cfg_.head == Head::kSoftmaxCe) {
      std::vector<int> targets(static_cast<std::size_t>(B), static_cast<int>(label));
      std::vector<double> weights(static_cast<std::size_t>(B), 1.0 / B);
      loss = nn::softmax_cross_entropy(cache.head_logits, targets, weights, &dlogits);
    } else {
      Tensor<T> dscores({B});
      loss = nn::least_squares_loss(scores, label == Label::kReal ? 1.0 : 0.0, &dscores);
      for (int b = 0; b < B; ++b) {
        T s = scores[b];
        dlogits.at(b, 0) = dscores[b] * s * (T(1) - s);
      }
    }

    backward(batch, cache, dlogits);
    ps_.clip_grad_norm(nn::kGradClipNorm);
    ps_.adam_step(lr);
    return loss;
  }

  /// Loss + gradients without the optimizer step; the gradient-check suite
  /// drives this directly.
  double loss_and_grads(std::span<const std::vector<int>> batch, Label label, bool with_grads) {
    const int B = static_cast<int>(batch.size());
    Cache cache;
    if (with_grads) ps_.zero_grads();
    Tensor<T> scores = forward_impl(batch, false, cache);
    double loss = 0.0;
    Tensor<T> dlogits = Tensor<T>::zeros_like(cache.head_logits);
    if (cfg_.head == Head::kSoftmaxCe) {
      std::vector<int> targets(static_cast<std::size_t>(B), static_cast<int>(label));
      std::vector<double> weights(static_cast<std::size_t>(B), 1.0 / B);
      loss = nn::softmax_cross_entropy(cache.head_logits, targets, weights,
                                       with_grads ? &dlogits : nullptr);
    } else {
      Tensor<T> dscores({B});
      loss = nn::least_squares_loss(scores, label == Label::kReal ? 1.0 : 0.0,
                                    with_grads ? &dscores : nullptr);
      if (with_grads) {
        for (int b = 0; b < B; ++b) {
          T s = scores[b];
          dlogits.at(b, 0) = dscores[b] * s * (T(1) - s);
        }
      }
    }
    if (with_grads) backward(batch, cache, dlogits);
    return loss;
  }

 private:
  struct Cache {
    Tensor<T> emb;                               // [B,L,E]
    std::vector<nn::Conv1dCache<T>> conv_caches;
    std::vector<Tensor<T>> conv_outs;            // post-ReLU, per layer
    std::vector<int> argmax;
    Tensor<T> dropout_mask;
    Tensor<T> pooled;                            // [B,F] after dropout
    Tensor<T> head_logits;                       // [B,1] or [B,2]
  };

  static std::string layer_name(int layer) { return "conv" + std::to_string(layer + 1); }

  std::vector<int> flatten_tokens(std::span<const std::vector<int>> batch) const {
    const int L = cfg_.seq_len;
    std::vector<int> flat;
    flat.reserve(batch.size() * static_cast<std::size_t>(L));
    for (const auto& seq : batch) {
      if (static_cast<int>(seq.size()) != L) {
        raise(Errc::kSequenceTooShort, "sequence length " + std::to_string(seq.size()) +
                                           ", discriminator expects " + std::to_string(L));
      }
      flat.insert(flat.end(), seq.begin(), seq.end());
    }
    return flat;
  }

  Tensor<T> forward_impl(std::span<const std::vector<int>> batch, bool train, Cache& cache) {
    if (batch.empty()) raise(Errc::kEmptyCorpus, "empty discriminator batch");
    const int B = static_cast<int>(batch.size());
    const int L = cfg_.seq_len, E = cfg_.embedding_dim, F = cfg_.feature_maps,
              W = cfg_.filter_width;

    std::vector<int> flat = flatten_tokens(batch);
    Tensor<T> emb2d({B * L, E});
    nn::embedding_lookup(std::span<const int>(flat), ps_.at("embed").value, emb2d);
    cache.emb = Tensor<T>({B, L, E});
    std::memcpy(cache.emb.data(), emb2d.data(),
                sizeof(T) * static_cast<std::size_t>(emb2d.numel()));

    cache.conv_caches.resize(static_cast<std::size_t>(cfg_.conv_layers));
    cache.conv_outs.resize(static_cast<std::size_t>(cfg_.conv_layers));
    const Tensor<T>* x = &cache.emb;
    int len = L;
    for (int layer = 0; layer < cfg_.conv_layers; ++layer) {
      len = len - W + 1;
      auto& out = cache.conv_outs[static_cast<std::size_t>(layer)];
      out = Tensor<T>({B, len, F});
      nn::conv1d(*x, ps_.at(layer_name(layer) + ".w").value,
                 ps_.at(layer_name(layer) + ".b").value, out,
                 &cache.conv_caches[static_cast<std::size_t>(layer)]);
      nn::relu(out);
      x = &out;
    }

    cache.pooled = Tensor<T>({B, F});
    nn::max_over_time(*x, cache.pooled, &cache.argmax);
    nn::dropout(cache.pooled, cfg_.dropout, train, dropout_rng_, &cache.dropout_mask);

    const int head_out = cfg_.head == Head::kSoftmaxCe ? 2 : 1;
    cache.head_logits = Tensor<T>({B, head_out});
    nn::dense(cache.pooled, ps_.at("head.w").value, ps_.at("head.b").value, cache.head_logits);

    Tensor<T> scores({B});
    if (cfg_.head == Head::kSoftmaxCe) {
      Tensor<T> probs({B, 2});
      nn::softmax_rows(cache.head_logits, probs);
      for (int b = 0; b < B; ++b) scores[b] = probs.at(b, 1);
    } else {
      for (int b = 0; b < B; ++b) scores[b] = nn::sigmoid_scalar(cache.head_logits.at(b, 0));
    }
    return scores;
  }

  void backward(std::span<const std::vector<int>> batch, Cache& cache, const Tensor<T>& dlogits) {
    const int B = static_cast<int>(batch.size());
    const int F = cfg_.feature_maps;

    Tensor<T> dpooled({B, F});
    nn::dense_backward(cache.pooled, ps_.at("head.w").value, dlogits, ps_.at("head.w").grad,
                       ps_.at("head.b").grad, dpooled);
    nn::dropout_backward(cache.dropout_mask, dpooled);

    auto& last_out = cache.conv_outs[static_cast<std::size_t>(cfg_.conv_layers - 1)];
    Tensor<T> dout = Tensor<T>::zeros_like(last_out);
    nn::max_over_time_backward(cache.argmax, dpooled, dout);

    for (int layer = cfg_.conv_layers - 1; layer >= 0; --layer) {
      auto& out = cache.conv_outs[static_cast<std::size_t>(layer)];
      nn::relu_backward(out, dout);
      const Tensor<T>& input =
          layer == 0 ? cache.emb : cache.conv_outs[static_cast<std::size_t>(layer - 1)];
      Tensor<T> dx = Tensor<T>::zeros_like(input);
      nn::conv1d_backward(ps_.at(layer_name(layer) + ".w").value,
                          cache.conv_caches[static_cast<std::size_t>(layer)], dout,
                          ps_.at(layer_name(layer) + ".w").grad,
                          ps_.at(layer_name(layer) + ".b").grad, dx);
      dout = std::move(dx);
    }

    std::vector<int> flat = flatten_tokens(batch);
    Tensor<T> demb2d({B * cfg_.seq_len, cfg_.embedding_dim});
    std::memcpy(demb2d.data(), dout.data(), sizeof(T) * static_cast<std::size_t>(dout.numel()));
    nn::embedding_backward(std::span<const int>(flat), demb2d, ps_.at("embed").grad);
  }

  DiscriminatorConfig cfg_;
  nn::ParamSet<T> ps_;
  rng::SplitMix64 dropout_rng_;
};

}  // namespace polyseq::disc
