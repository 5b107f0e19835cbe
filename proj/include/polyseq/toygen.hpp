#pragma once

/// Synthetic token-corpus generators for desk-scale experiments. Each
/// grammar has a closed-form entropy rate so language-model convergence can
/// be judged against an analytic target rather than a reference run. Token
/// id 0 is left free everywhere (it is the start token downstream).
///
/// Pieces are generated from per-piece derived RNG streams: piece i of a
/// corpus is the same no matter how many pieces are requested.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "polyseq/errors.hpp"
#include "polyseq/rng.hpp"

namespace polyseq::toy {

struct ToyCorpus {
  std::vector<std::vector<int>> pieces;
  int vocab_size = 0;
  double entropy_rate = 0.0;  // nats per token, asymptotic
};

namespace detail {

inline double h2(double p) { return -p * std::log(p) - (1 - p) * std::log(1 - p); }

}  // namespace detail

/// Deterministic 8-token motif repeated from a random phase. Entropy rate 0:
/// after one token the continuation is fully determined.
inline ToyCorpus make_motif(int n_pieces, int piece_len, std::uint64_t seed) {
  constexpr int kMotif = 8;
  ToyCorpus out;
  out.vocab_size = kMotif + 1;
  out.entropy_rate = 0.0;
  out.pieces.reserve(static_cast<std::size_t>(n_pieces));
  for (int p = 0; p < n_pieces; ++p) {
    rng::SplitMix64 g(rng::derive_seed(seed, static_cast<std::uint64_t>(p)));
    int phase = static_cast<int>(g.below(kMotif));
    std::vector<int> piece(static_cast<std::size_t>(piece_len));
    for (int i = 0; i < piece_len; ++i) piece[static_cast<std::size_t>(i)] = 1 + (phase + i) % kMotif;
    out.pieces.push_back(std::move(piece));
  }
  return out;
}

inline constexpr double kMarkovSwitch = 0.3;

/// Two hidden states with disjoint 8-token uniform emissions (ids 1..8 and
/// 9..16) and switch probability 0.3. The emission reveals the state, so the
/// process is Markov over observations with entropy rate
/// H(0.3) + ln 8 ≈ 2.6903 nats/token.
inline ToyCorpus make_markov2(int n_pieces, int piece_len, std::uint64_t seed) {
  constexpr int kBlock = 8;
  ToyCorpus out;
  out.vocab_size = 2 * kBlock + 1;
  out.entropy_rate = detail::h2(kMarkovSwitch) + std::log(static_cast<double>(kBlock));
  out.pieces.reserve(static_cast<std::size_t>(n_pieces));
  for (int p = 0; p < n_pieces; ++p) {
    rng::SplitMix64 g(rng::derive_seed(seed, static_cast<std::uint64_t>(p)));
    int state = static_cast<int>(g.below(2));
    std::vector<int> piece(static_cast<std::size_t>(piece_len));
    for (int i = 0; i < piece_len; ++i) {
      piece[static_cast<std::size_t>(i)] = 1 + state * kBlock + static_cast<int>(g.below(kBlock));
      if (g.uniform() < kMarkovSwitch) state = 1 - state;
    }
    out.pieces.push_back(std::move(piece));
  }
  return out;
}

/// Four-chord cycle starting at a random phase. Each chord contributes a
/// block of two tokens: a voicing token (3 per chord, probabilities 0.6 /
/// 0.3 / 0.1) followed by a melody token (9 per chord, uniform). Ids: chord
/// c voicing v → 1 + 3c + v (1..12); chord c melody m → 13 + 9c + m
/// (13..48); vocab 49. Entropy rate (H(0.6,0.3,0.1) + ln 9) / 2 ≈ 1.5476
/// nats/token.
inline ToyCorpus make_chordprog(int n_pieces, int piece_len, std::uint64_t seed) {
  constexpr int kChords = 4, kVoicings = 3, kMelody = 9;
  if (piece_len % 2 != 0) raise(Errc::kConfigError, "chordprog pieces need an even length");
  ToyCorpus out;
  out.vocab_size = 1 + kChords * kVoicings + kChords * kMelody;
  const double hv = -(0.6 * std::log(0.6) + 0.3 * std::log(0.3) + 0.1 * std::log(0.1));
  out.entropy_rate = (hv + std::log(static_cast<double>(kMelody))) / 2.0;
  out.pieces.reserve(static_cast<std::size_t>(n_pieces));
  for (int p = 0; p < n_pieces; ++p) {
    rng::SplitMix64 g(rng::derive_seed(seed, static_cast<std::uint64_t>(p)));
    int phase = static_cast<int>(g.below(kChords));
    std::vector<int> piece;
    piece.reserve(static_cast<std::size_t>(piece_len));
    for (int block = 0; block < piece_len / 2; ++block) {
      int chord = (phase + block) % kChords;
      double u = g.uniform();
      int voicing = u < 0.6 ? 0 : (u < 0.9 ? 1 : 2);
      piece.push_back(1 + kVoicings * chord + voicing);
      piece.push_back(1 + kChords * kVoicings + kMelody * chord + static_cast<int>(g.below(kMelody)));
    }
    out.pieces.push_back(std::move(piece));
  }
  return out;
}

inline ToyCorpus make_toy(const std::string& grammar, int n_pieces, int piece_len,
                          std::uint64_t seed) {
  if (grammar == "motif") return make_motif(n_pieces, piece_len, seed);
  if (grammar == "markov2") return make_markov2(n_pieces, piece_len, seed);
  if (grammar == "chordprog") return make_chordprog(n_pieces, piece_len, seed);
  raise(Errc::kConfigError, "unknown toy grammar: " + grammar);
}

}  // namespace polyseq::toy
