#pragma once

/// Evaluation: corpus BLEU-4 of generated sequences against a validation
/// corpus, frozen validation NLL, and corpus statistics (word frequencies
/// and a chord pitch-set histogram).

#include <algorithm>
#include <array>
#include <cstdint>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "polyseq/errors.hpp"
#include "polyseq/generator.hpp"
#include "polyseq/tokenizer.hpp"

namespace polyseq::eval {

struct BleuReport {
  double bleu4 = 0.0;
  double brevity_penalty = 1.0;
  std::array<double, 4> precisions{};  // smoothed modified n-gram precisions
  std::int64_t candidate_tokens = 0;
  std::int64_t reference_tokens = 0;  // sum of per-candidate closest reference lengths

  std::string tsv() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(6);
    os << bleu4 << "\t" << precisions[0] << "\t" << precisions[1] << "\t" << precisions[2]
       << "\t" << precisions[3] << "\t" << brevity_penalty << "\t" << candidate_tokens << "\t"
       << reference_tokens;
    return os.str();
  }

  std::string pretty() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(4);
    os << "BLEU-4 " << bleu4 << " (p1 " << precisions[0] << ", p2 " << precisions[1] << ", p3 "
       << precisions[2] << ", p4 " << precisions[3] << ", BP " << brevity_penalty << ", "
       << candidate_tokens << " candidate / " << reference_tokens << " reference tokens)";
    return os.str();
  }
};

namespace detail {

inline constexpr double kBleuEpsilon = 1e-9;

/// n-grams are packed four 16-bit token ids to a word; maps are kept per n
/// so equal packings of different orders cannot collide.
inline std::uint64_t pack_ngram(std::span<const int> seq, std::size_t start, int n) {
  std::uint64_t key = 0;
  for (int i = 0; i < n; ++i) {
    int tok = seq[start + static_cast<std::size_t>(i)];
    if (tok < 0 || tok > 0xFFFF) {
      raise(Errc::kOutOfRangeToken, "token " + std::to_string(tok) + " exceeds 16-bit BLEU limit");
    }
    key = (key << 16) | static_cast<std::uint64_t>(tok);
  }
  return key;
}

inline void count_ngrams(std::span<const int> seq, int n,
                         std::unordered_map<std::uint64_t, std::int64_t>& counts) {
  if (static_cast<int>(seq.size()) < n) return;
  for (std::size_t s = 0; s + static_cast<std::size_t>(n) <= seq.size(); ++s) {
    ++counts[pack_ngram(seq, s, n)];
  }
}

}  // namespace detail

/// Corpus BLEU-4 with the whole reference corpus as every candidate's
/// multi-reference set. Modified precision clips each candidate n-gram count
/// at the maximum count any single reference gives it; matches and totals
/// are pooled over candidates before the ratio; zero precisions are floored
/// at 1e-9; brevity penalty uses the closest reference length per candidate
/// (ties to the shorter length).
inline BleuReport bleu4(const std::vector<std::vector<int>>& candidates,
                        const std::vector<std::vector<int>>& references) {
  if (candidates.empty() || references.empty()) {
    raise(Errc::kEmptyCorpus, "BLEU needs non-empty candidates and references");
  }

  // Max reference count per n-gram, per order.
  std::array<std::unordered_map<std::uint64_t, std::int64_t>, 4> ref_max;
  {
    std::unordered_map<std::uint64_t, std::int64_t> one;
    for (const auto& ref : references) {
      for (int n = 1; n <= 4; ++n) {
        one.clear();
        detail::count_ngrams(ref, n, one);
        auto& mx = ref_max[static_cast<std::size_t>(n - 1)];
        for (const auto& [key, cnt] : one) {
          auto it = mx.find(key);
          if (it == mx.end() || it->second < cnt) mx[key] = cnt;
        }
      }
    }
  }

  std::vector<int> ref_lengths;
  ref_lengths.reserve(references.size());
  for (const auto& ref : references) ref_lengths.push_back(static_cast<int>(ref.size()));
  std::sort(ref_lengths.begin(), ref_lengths.end());

  std::array<std::int64_t, 4> matches{}, totals{};
  std::int64_t cand_len_sum = 0, ref_len_sum = 0;
  std::unordered_map<std::uint64_t, std::int64_t> cand_counts;
  for (const auto& cand : candidates) {
    const int clen = static_cast<int>(cand.size());
    cand_len_sum += clen;
    // Closest reference length; among ties the shorter one (lower_bound
    // finds the first >= clen, its predecessor is the nearest below).
    auto it = std::lower_bound(ref_lengths.begin(), ref_lengths.end(), clen);
    int best;
    if (it == ref_lengths.end()) {
      best = ref_lengths.back();
    } else if (it == ref_lengths.begin()) {
      best = *it;
    } else {
      int above = *it, below = *(it - 1);
      best = (clen - below <= above - clen) ? below : above;
    }
    ref_len_sum += best;

    for (int n = 1; n <= 4; ++n) {
      cand_counts.clear();
      detail::count_ngrams(cand, n, cand_counts);
      const auto& mx = ref_max[static_cast<std::size_t>(n - 1)];
      for (const auto& [key, cnt] : cand_counts) {
        totals[static_cast<std::size_t>(n - 1)] += cnt;
        auto mit = mx.find(key);
        if (mit != mx.end()) {
          matches[static_cast<std::size_t>(n - 1)] += std::min(cnt, mit->second);
        }
      }
    }
  }

  BleuReport report;
  report.candidate_tokens = cand_len_sum;
  report.reference_tokens = ref_len_sum;
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    double p;
    if (totals[static_cast<std::size_t>(n)] == 0 || matches[static_cast<std::size_t>(n)] == 0) {
      p = detail::kBleuEpsilon;
    } else {
      p = static_cast<double>(matches[static_cast<std::size_t>(n)]) /
          static_cast<double>(totals[static_cast<std::size_t>(n)]);
    }
    report.precisions[static_cast<std::size_t>(n)] = p;
    log_sum += std::log(p);
  }
  report.brevity_penalty =
      cand_len_sum >= ref_len_sum
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len_sum) / static_cast<double>(cand_len_sum));
  report.bleu4 = report.brevity_penalty * std::exp(log_sum / 4.0);
  return report;
}

/// Frozen teacher-forced NLL in nats per predicted token. Thin wrapper so
/// evaluation call sites do not touch training entry points.
template <typename T>
double validation_nll(const gen::Generator<T>& model,
                      const std::vector<std::vector<int>>& corpus, gen::StartKind mode) {
  return model.evaluate_nll(corpus, mode);
}

/// Table-style histogram bucket boundaries for chord pitch-set counts; the
/// top bucket is open above so very frequent sets still land in it.
inline constexpr std::array<std::int64_t, 7> kHistogramLowerBounds = {5000, 2000, 1000, 500,
                                                                      250,  100,  10};

struct CorpusStats {
  std::int64_t piece_count = 0;
  std::int64_t token_count = 0;
  int vocab_size = 0;
  std::vector<std::pair<int, std::int64_t>> top_words;  // (token id, occurrences), descending
  // (pitch-class mask, chord event count), descending by count. An event is
  // one rendered ChordSpan, i.e. a maximal run of words sharing one chord.
  std::vector<std::pair<std::uint16_t, std::int64_t>> chord_sets;

  /// Index into kHistogramLowerBounds for a given chord set, or -1 when the
  /// set is absent or below every bucket.
  int bucket_of(std::uint16_t pc_mask) const {
    for (const auto& [mask, count] : chord_sets) {
      if (mask != pc_mask) continue;
      if (count >= kHistogramLowerBounds[0]) return 0;
      for (std::size_t i = 1; i < kHistogramLowerBounds.size(); ++i) {
        if (count >= kHistogramLowerBounds[i]) return static_cast<int>(i);
      }
      return -1;
    }
    return -1;
  }
};

inline CorpusStats corpus_stats(const std::vector<std::vector<int>>& corpus,
                                const tok::Vocabulary& vocab, int top_k = 20) {
  CorpusStats stats;
  stats.vocab_size = vocab.size();
  std::vector<std::int64_t> word_counts(static_cast<std::size_t>(vocab.size()), 0);
  std::unordered_map<std::uint16_t, std::int64_t> set_counts;
  for (const auto& piece : corpus) {
    ++stats.piece_count;
    stats.token_count += static_cast<std::int64_t>(piece.size());
    for (int id : piece) ++word_counts[static_cast<std::size_t>(id)];
    auto words = vocab.decode(piece);
    auto streams = tok::words_to_streams(words, vocab.chords(), 12 * tok::kQuantaPerQuarter);
    for (const auto& span : streams.chords) {
      ++set_counts[tok::ChordIndex::mask_from_pitches(span.pitches)];
    }
  }
  if (stats.piece_count == 0) return stats;

  std::vector<std::pair<int, std::int64_t>> by_count;
  for (int id = 0; id < vocab.size(); ++id) {
    if (word_counts[static_cast<std::size_t>(id)] > 0) {
      by_count.emplace_back(id, word_counts[static_cast<std::size_t>(id)]);
    }
  }
  std::sort(by_count.begin(), by_count.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (static_cast<int>(by_count.size()) > top_k) by_count.resize(static_cast<std::size_t>(top_k));
  stats.top_words = std::move(by_count);

  stats.chord_sets.assign(set_counts.begin(), set_counts.end());
  std::sort(stats.chord_sets.begin(), stats.chord_sets.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return stats;
}

/// Pitch-class mask for a list of note names, e.g. {"D","F#","A"}.
inline std::uint16_t pc_mask_of_names(const std::vector<std::string>& names) {
  static const std::unordered_map<std::string, int> table = {
      {"C", 0},  {"C#", 1}, {"Db", 1}, {"D", 2},  {"D#", 3}, {"Eb", 3}, {"E", 4},  {"F", 5},
      {"F#", 6}, {"Gb", 6}, {"G", 7},  {"G#", 8}, {"Ab", 8}, {"A", 9},  {"A#", 10}, {"Bb", 10},
      {"B", 11}};
  std::uint16_t mask = 0;
  for (const auto& n : names) {
    auto it = table.find(n);
    if (it == table.end()) raise(Errc::kConfigError, "unknown note name " + n);
    mask = static_cast<std::uint16_t>(mask | (1u << it->second));
  }
  return mask;
}

}  // namespace polyseq::eval
