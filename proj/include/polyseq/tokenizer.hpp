#pragma once

/// Word-token representation of polyphonic music. A piece is cut into
/// segments at the union of melody and chord boundaries on a 1/12-quarter
/// grid; each segment becomes one Word capturing (duration, melody octave,
/// melody pitch class, chord octave, chord pitch-class-set), and Words map to
/// dense integer tokens through a min-count-filtered Vocabulary.
///
/// Two token ids are reserved: 0 is the start token (never produced by
/// encoding) and 1 is the rest token for fully silent time. The rest token
/// carries no duration of its own; each occurrence stands for one grid
/// quantum, so longer silences are runs of rest tokens.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "polyseq/errors.hpp"
#include "polyseq/midi.hpp"

namespace polyseq::tok {

/// Grid resolution: 12 quanta per quarter note (captures sixteenths and
/// triplets), durations clamped to 8 quarter notes.
inline constexpr int kQuantaPerQuarter = 12;
inline constexpr int kMaxDurationQ = 8 * kQuantaPerQuarter;

inline constexpr int kStartId = 0;
inline constexpr int kRestId = 1;
inline constexpr int kReservedIds = 2;

/// Octave convention: MIDI 60 = C4, i.e. octave(p) = p/12 - 1.
inline int octave_of(int pitch) { return pitch / 12 - 1; }
inline int pitch_class_of(int pitch) { return pitch % 12; }

/// Bijection between observed pitch-class sets and dense ids. A set is
/// canonicalized as a 12-bit mask over pitch classes; ids are assigned in
/// first-appearance order.
class ChordIndex {
 public:
  int add(std::uint16_t pc_mask) {
    auto it = mask_to_id_.find(pc_mask);
    if (it != mask_to_id_.end()) return it->second;
    int id = static_cast<int>(masks_.size());
    masks_.push_back(pc_mask);
    mask_to_id_.emplace(pc_mask, id);
    return id;
  }

  std::optional<int> lookup(std::uint16_t pc_mask) const {
    auto it = mask_to_id_.find(pc_mask);
    if (it == mask_to_id_.end()) return std::nullopt;
    return it->second;
  }

  std::uint16_t mask_of(int id) const { return masks_[static_cast<std::size_t>(id)]; }

  std::vector<int> pitch_classes_of(int id) const {
    std::vector<int> pcs;
    std::uint16_t m = mask_of(id);
    for (int pc = 0; pc < 12; ++pc) {
      if (m & (1u << pc)) pcs.push_back(pc);
    }
    return pcs;
  }

  int size() const { return static_cast<int>(masks_.size()); }

  static std::uint16_t mask_from_pitches(std::span<const std::uint8_t> pitches) {
    std::uint16_t m = 0;
    for (auto p : pitches) m = static_cast<std::uint16_t>(m | (1u << (p % 12)));
    return m;
  }

 private:
  std::vector<std::uint16_t> masks_;
  std::unordered_map<std::uint16_t, int> mask_to_id_;
};

/// The structured 5-tuple behind one vocabulary token.
struct Word {
  static constexpr int kNone = -1;  // chord fields: no chord sounding
  static constexpr int kRest = -2;  // melody fields: no melody note sounding

  int duration_q = 1;     // 1..kMaxDurationQ
  int mel_octave = kRest; // -1..9 or kRest
  int mel_pc = kRest;     // 0..11 or kRest
  int chord_octave = kNone;  // octave of the lowest chord note, or kNone
  int chord_set = kNone;     // ChordIndex id, or kNone

  bool melody_rest() const { return mel_pc == kRest; }
  bool has_chord() const { return chord_set != kNone; }
  bool is_rest_word() const { return melody_rest() && !has_chord(); }

  /// The fully silent word behind the reserved rest token.
  static Word rest() { return Word{1, kRest, kRest, kNone, kNone}; }

  static Word from_segment_fields(int duration_q, int mel_pitch, int chord_lowest, int chord_set) {
    Word w;
    w.duration_q = duration_q;
    if (mel_pitch >= 0) {
      w.mel_octave = octave_of(mel_pitch);
      w.mel_pc = pitch_class_of(mel_pitch);
    }
    if (chord_set >= 0) {
      w.chord_octave = octave_of(chord_lowest);
      w.chord_set = chord_set;
    }
    return w;
  }

  /// Packs the tuple into one integer for hashing and canonical ordering.
  std::uint64_t pack() const {
    auto enc = [](int v) { return static_cast<std::uint64_t>(v + 8); };  // lift sentinels >= 0
    return (static_cast<std::uint64_t>(duration_q) << 40) | (enc(mel_octave) << 32) |
           (enc(mel_pc) << 24) | (enc(chord_octave) << 16) |
           static_cast<std::uint64_t>(chord_set + 2);
  }

  bool operator==(const Word& o) const { return pack() == o.pack(); }
};

/// One tile of the piece: a time interval during which the melody and chord
/// states are both constant. Consecutive segments cover the piece with no
/// gaps or overlaps.
struct Segment {
  std::int64_t onset_q = 0;
  int duration_q = 1;
  int mel_pitch = -1;       // MIDI pitch, or -1 for rest
  int chord_lowest = -1;    // lowest sounding chord pitch, or -1
  int chord_set = -1;       // ChordIndex id, or -1
};

/// Counters reported by the quantization/segmentation pipeline.
struct TokenizeStats {
  std::int64_t duration_clamps = 0;   // quantized durations clamped into [1, 96]
  std::int64_t segment_splits = 0;    // segments longer than 96 quanta split up
  std::int64_t notes_collapsed = 0;   // notes whose quantized extent vanished
};

/// Nearest-grid duration in quanta, clamped to [1, kMaxDurationQ].
inline int quantize_duration(std::int64_t ticks, int tpq, TokenizeStats* stats = nullptr) {
  double q = static_cast<double>(ticks) * kQuantaPerQuarter / tpq;
  auto rounded = static_cast<std::int64_t>(std::llround(q));
  if (rounded < 1 || rounded > kMaxDurationQ) {
    if (stats) ++stats->duration_clamps;
  }
  return static_cast<int>(std::clamp<std::int64_t>(rounded, 1, kMaxDurationQ));
}

inline std::int64_t quantize_onset(std::int64_t ticks, int tpq) {
  double q = static_cast<double>(ticks) * kQuantaPerQuarter / tpq;
  return std::max<std::int64_t>(0, std::llround(q));
}

namespace detail {

struct QuantNote {
  std::int64_t onset_q;
  std::int64_t offset_q;
  int pitch;
};

struct QuantChord {
  std::int64_t onset_q;
  std::int64_t offset_q;
  int lowest;
  int set_id;
};

}  // namespace detail

/// Cuts aligned melody/chord streams into segments at the union of all
/// quantized onsets and offsets. Every interval between consecutive cut
/// points becomes one Segment carrying whichever melody note and chord sound
/// during it; intervals with neither are rest segments. Overlapping chord
/// spans (possible in free-form input) are resolved in favor of the latest
/// onset. Throws EmptyPiece when there are no notes at all.
inline std::vector<Segment> segment(const std::vector<midi::TimedNote>& melody,
                                    const std::vector<midi::ChordSpan>& chords,
                                    ChordIndex& chord_index, int tpq,
                                    TokenizeStats* stats = nullptr) {
  if (melody.empty() && chords.empty()) raise(Errc::kEmptyPiece, "no notes to segment");
  if (tpq <= 0) raise(Errc::kInvalidStream, "ticks per quarter must be positive");

  std::vector<detail::QuantNote> mel;
  mel.reserve(melody.size());
  for (const auto& n : melody) {
    std::int64_t on = quantize_onset(n.onset, tpq);
    std::int64_t off = on + quantize_duration(n.duration, tpq, stats);
    mel.push_back({on, off, n.pitch});
  }
  // Re-truncate overlaps that grid rounding may have reintroduced.
  for (std::size_t i = 0; i + 1 < mel.size(); ++i) {
    mel[i].offset_q = std::min(mel[i].offset_q, mel[i + 1].onset_q);
  }
  std::erase_if(mel, [&](const detail::QuantNote& n) {
    if (n.offset_q <= n.onset_q) {
      if (stats) ++stats->notes_collapsed;
      return true;
    }
    return false;
  });

  // Chord extents are quantized without the Word-level duration cap: a chord
  // longer than 96 quanta becomes several tiled Words below, and playback
  // re-merges those into one span, so the full extent must survive here for
  // tokenize(play(tokenize(x))) to agree with tokenize(x).
  std::vector<detail::QuantChord> cho;
  cho.reserve(chords.size());
  for (const auto& c : chords) {
    std::int64_t on = quantize_onset(c.onset, tpq);
    auto dur_q = static_cast<std::int64_t>(
        std::llround(static_cast<double>(c.duration) * kQuantaPerQuarter / tpq));
    if (dur_q < 1) {
      if (stats) ++stats->duration_clamps;
      dur_q = 1;
    }
    int set_id = chord_index.add(ChordIndex::mask_from_pitches(c.pitches));
    cho.push_back({on, on + dur_q, c.pitches.front(), set_id});
  }

  // Resolve overlapping spans (latest onset wins, ties toward the longer
  // span) into a step function of chord state, merging adjacent intervals
  // whose Word fields coincide. Playback reproduces only this merged
  // timeline, so boundaries inside a constant run must not survive either.
  std::vector<detail::QuantChord> runs;
  if (!cho.empty()) {
    std::vector<std::int64_t> pts;
    pts.reserve(cho.size() * 2);
    for (const auto& c : cho) {
      pts.push_back(c.onset_q);
      pts.push_back(c.offset_q);
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      std::int64_t a = pts[i];
      const detail::QuantChord* win = nullptr;
      for (const auto& c : cho) {
        if (!(c.onset_q <= a && a < c.offset_q)) continue;
        if (!win || std::tuple(c.onset_q, c.offset_q, c.set_id, c.lowest) >
                        std::tuple(win->onset_q, win->offset_q, win->set_id, win->lowest)) {
          win = &c;
        }
      }
      if (!win) continue;
      if (!runs.empty() && runs.back().offset_q == a && runs.back().set_id == win->set_id &&
          octave_of(runs.back().lowest) == octave_of(win->lowest)) {
        runs.back().offset_q = pts[i + 1];
      } else {
        runs.push_back({a, pts[i + 1], win->lowest, win->set_id});
      }
    }
  }

  std::vector<std::int64_t> cuts;
  for (const auto& n : mel) {
    cuts.push_back(n.onset_q);
    cuts.push_back(n.offset_q);
  }
  for (const auto& r : runs) {
    cuts.push_back(r.onset_q);
    cuts.push_back(r.offset_q);
  }
  if (cuts.empty()) raise(Errc::kEmptyPiece, "all notes collapsed under quantization");
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::vector<Segment> segments;
  std::size_t mi = 0, ci = 0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    std::int64_t a = cuts[i], b = cuts[i + 1];
    while (mi < mel.size() && mel[mi].offset_q <= a) ++mi;
    int mel_pitch = -1;
    if (mi < mel.size() && mel[mi].onset_q <= a && a < mel[mi].offset_q) mel_pitch = mel[mi].pitch;

    while (ci < runs.size() && runs[ci].offset_q <= a) ++ci;
    int chord_lowest = -1, chord_set = -1;
    if (ci < runs.size() && runs[ci].onset_q <= a && a < runs[ci].offset_q) {
      chord_lowest = runs[ci].lowest;
      chord_set = runs[ci].set_id;
    }

    // Long intervals are tiled into <= 96-quanta chunks so every Word's
    // duration stays on the representable range.
    std::int64_t pos = a;
    while (pos < b) {
      int len = static_cast<int>(std::min<std::int64_t>(b - pos, kMaxDurationQ));
      segments.push_back(Segment{pos, len, mel_pitch, chord_lowest, chord_set});
      pos += len;
      if (pos < b && stats) ++stats->segment_splits;
    }
  }
  return segments;
}

/// Maps segments to Words. Fully silent segments decompose into one rest Word
/// per quantum (the rest token is duration-free); every other segment maps to
/// exactly one Word.
inline std::vector<Word> segments_to_words(const std::vector<Segment>& segments) {
  std::vector<Word> words;
  words.reserve(segments.size());
  for (const auto& s : segments) {
    if (s.mel_pitch < 0 && s.chord_set < 0) {
      for (int i = 0; i < s.duration_q; ++i) words.push_back(Word::rest());
      continue;
    }
    words.push_back(Word::from_segment_fields(s.duration_q, s.mel_pitch, s.chord_lowest,
                                              s.chord_set));
  }
  return words;
}

/// Bijection between admitted Words and dense token ids. Ids 0 and 1 are
/// reserved (start, rest); content Words occupy [2, size()).
class Vocabulary {
 public:
  Vocabulary() = default;

  explicit Vocabulary(ChordIndex chords) : chords_(std::move(chords)) {}

  /// Admits a Word with its corpus count. Rest words are never stored; they
  /// are always the reserved id.
  void admit(const Word& w, std::int64_t count) {
    if (w.is_rest_word()) {
      rest_count_ += count;
      return;
    }
    if (word_to_id_.count(w.pack())) return;
    int id = kReservedIds + static_cast<int>(words_.size());
    word_to_id_.emplace(w.pack(), id);
    words_.push_back(w);
    counts_.push_back(count);
  }

  int size() const { return kReservedIds + static_cast<int>(words_.size()); }

  std::optional<int> id_of(const Word& w) const {
    if (w.is_rest_word()) return kRestId;
    auto it = word_to_id_.find(w.pack());
    if (it == word_to_id_.end()) return std::nullopt;
    return it->second;
  }

  const Word& word_of(int id) const {
    if (id == kRestId) return rest_word_;
    return words_[static_cast<std::size_t>(id - kReservedIds)];
  }

  std::int64_t count_of(int id) const {
    if (id == kRestId) return rest_count_;
    if (id == kStartId) return 0;
    return counts_[static_cast<std::size_t>(id - kReservedIds)];
  }

  const ChordIndex& chords() const { return chords_; }
  ChordIndex& chords() { return chords_; }

  std::vector<int> encode(std::span<const Word> words) const {
    std::vector<int> ids;
    ids.reserve(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
      auto id = id_of(words[i]);
      if (!id) {
        raise(Errc::kOutOfVocabulary,
              "word at position " + std::to_string(i) + " (packed " +
                  std::to_string(words[i].pack()) + ") is not in the vocabulary");
      }
      ids.push_back(*id);
    }
    return ids;
  }

  std::vector<Word> decode(std::span<const int> ids) const {
    std::vector<Word> words;
    words.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      int id = ids[i];
      if (id <= kStartId || id >= size()) {
        raise(Errc::kUnknownToken,
              "token " + std::to_string(id) + " at position " + std::to_string(i));
      }
      words.push_back(word_of(id));
    }
    return words;
  }

 private:
  ChordIndex chords_;
  std::vector<Word> words_;
  std::vector<std::int64_t> counts_;
  std::unordered_map<std::uint64_t, int> word_to_id_;
  std::int64_t rest_count_ = 0;
  Word rest_word_ = Word::rest();
};

struct VocabBuildResult {
  Vocabulary vocab;
  std::vector<int> kept_pieces;      // indices into the input corpus
  std::vector<int> excluded_pieces;
};

/// Builds the vocabulary over a corpus of Word sequences. Words seen fewer
/// than min_count times are inadmissible, and a piece containing any
/// inadmissible Word is excluded entirely (the filter drops music, not
/// tokens). Admitted Words keep their full-corpus counts. Word ids are
/// assigned in canonical packed order so rebuilds are reproducible.
inline VocabBuildResult build_vocab(const std::vector<std::vector<Word>>& corpus,
                                    const ChordIndex& chord_index, int min_count = 10) {
  if (corpus.empty()) raise(Errc::kEmptyCorpus, "no pieces to build a vocabulary from");
  if (min_count < 1) raise(Errc::kConfigError, "min_count must be >= 1");

  std::unordered_map<std::uint64_t, std::int64_t> counts;
  std::unordered_map<std::uint64_t, Word> exemplars;
  for (const auto& piece : corpus) {
    for (const auto& w : piece) {
      auto key = w.pack();
      ++counts[key];
      exemplars.emplace(key, w);
    }
  }

  auto admissible = [&](const Word& w) {
    return w.is_rest_word() || counts.at(w.pack()) >= min_count;
  };

  VocabBuildResult result;
  result.vocab = Vocabulary(chord_index);
  std::unordered_map<std::uint64_t, bool> used_in_kept;
  for (std::size_t pi = 0; pi < corpus.size(); ++pi) {
    bool keep = std::all_of(corpus[pi].begin(), corpus[pi].end(), admissible);
    if (keep) {
      result.kept_pieces.push_back(static_cast<int>(pi));
      for (const auto& w : corpus[pi]) used_in_kept[w.pack()] = true;
    } else {
      result.excluded_pieces.push_back(static_cast<int>(pi));
    }
  }
  if (result.kept_pieces.empty()) {
    raise(Errc::kEmptyVocabulary, "every piece contains a word below min_count");
  }

  std::vector<Word> admitted;
  std::int64_t rest_total = 0;
  for (const auto& [key, word] : exemplars) {
    if (word.is_rest_word()) {
      rest_total += counts.at(key);
      continue;
    }
    if (counts.at(key) >= min_count && used_in_kept.count(key)) admitted.push_back(word);
  }
  std::sort(admitted.begin(), admitted.end(),
            [](const Word& a, const Word& b) { return a.pack() < b.pack(); });
  for (const auto& w : admitted) result.vocab.admit(w, counts.at(w.pack()));
  if (rest_total > 0) result.vocab.admit(Word::rest(), rest_total);
  return result;
}

/// Reconstructed note/chord streams, in ticks.
struct Streams {
  std::vector<midi::TimedNote> melody;
  std::vector<midi::ChordSpan> chords;
  std::int64_t total_quanta = 0;
};

/// Plays a Word sequence back into melody/chord streams. Onsets accumulate
/// from zero; consecutive segments with an identical chord state merge back
/// into one ChordSpan; rest words advance time by one quantum. Chord pitches
/// are reconstructed in close voicing from the lowest note's octave upward.
/// tpq should be a multiple of 12 for an exact grid-to-tick mapping.
inline Streams words_to_streams(std::span<const Word> words, const ChordIndex& chord_index,
                                int tpq) {
  if (tpq <= 0 || tpq % kQuantaPerQuarter != 0) {
    raise(Errc::kInvalidStream, "tpq must be a positive multiple of 12");
  }
  const std::int64_t ticks_per_q = tpq / kQuantaPerQuarter;

  Streams out;
  std::int64_t now_q = 0;
  // Current open chord run: (set, octave, onset_q).
  int open_set = -1, open_octave = 0;
  std::int64_t open_onset_q = 0;

  auto flush_chord = [&](std::int64_t end_q) {
    if (open_set < 0) return;
    midi::ChordSpan span;
    span.onset = open_onset_q * ticks_per_q;
    span.duration = (end_q - open_onset_q) * ticks_per_q;
    int lowest_pc = -1;
    auto pcs = chord_index.pitch_classes_of(open_set);
    lowest_pc = pcs.front();
    int lowest = 12 * (open_octave + 1) + lowest_pc;
    for (int pc : pcs) {
      int p = 12 * (open_octave + 1) + pc;
      if (p < lowest) p += 12;
      span.pitches.push_back(static_cast<std::uint8_t>(p));
    }
    std::sort(span.pitches.begin(), span.pitches.end());
    out.chords.push_back(std::move(span));
    open_set = -1;
  };

  for (const auto& w : words) {
    bool chord_continues = w.has_chord() && w.chord_set == open_set &&
                           w.chord_octave == open_octave && open_set >= 0;
    if (!chord_continues) {
      flush_chord(now_q);
      if (w.has_chord()) {
        open_set = w.chord_set;
        open_octave = w.chord_octave;
        open_onset_q = now_q;
      }
    }
    if (!w.melody_rest()) {
      midi::TimedNote n;
      n.onset = now_q * ticks_per_q;
      n.duration = static_cast<std::int64_t>(w.duration_q) * ticks_per_q;
      n.pitch = static_cast<std::uint8_t>(12 * (w.mel_octave + 1) + w.mel_pc);
      n.velocity = 90;
      out.melody.push_back(n);
    }
    now_q += w.duration_q;
  }
  flush_chord(now_q);
  out.total_quanta = now_q;
  return out;
}

namespace detail {

/// The lowest reconstructed pitch of a chord word. Matches words_to_streams.
inline int chord_lowest_pitch(const ChordIndex& index, int set_id, int octave) {
  return 12 * (octave + 1) + index.pitch_classes_of(set_id).front();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Serialization.
//
// Vocabulary: one line per token id,
//   id<TAB>duration_q<TAB>mel_octave<TAB>mel_pc<TAB>chord_octave<TAB>chord_set_pcs<TAB>count
// with literal R for rest fields, - for none fields, and chord_set_pcs as
// comma-separated pitch classes. Token corpora: one piece per line,
// space-separated decimal ids.
// ---------------------------------------------------------------------------

inline void save_vocab(const Vocabulary& vocab, std::ostream& os) {
  auto field = [](int v, int rest_mark) -> std::string {
    if (v == rest_mark) return rest_mark == Word::kRest ? "R" : "-";
    return std::to_string(v);
  };
  os << kStartId << "\t-\t-\t-\t-\t-\t0\n";
  os << kRestId << "\t1\tR\tR\t-\t-\t" << vocab.count_of(kRestId) << "\n";
  for (int id = kReservedIds; id < vocab.size(); ++id) {
    const Word& w = vocab.word_of(id);
    os << id << "\t" << w.duration_q << "\t" << field(w.mel_octave, Word::kRest) << "\t"
       << field(w.mel_pc, Word::kRest) << "\t";
    if (w.has_chord()) {
      os << w.chord_octave << "\t";
      auto pcs = vocab.chords().pitch_classes_of(w.chord_set);
      for (std::size_t i = 0; i < pcs.size(); ++i) os << (i ? "," : "") << pcs[i];
    } else {
      os << "-\t-";
    }
    os << "\t" << vocab.count_of(id) << "\n";
  }
}

inline void save_vocab(const Vocabulary& vocab, const std::string& path) {
  std::ofstream os(path);
  if (!os) raise(Errc::kIoError, "cannot write " + path);
  save_vocab(vocab, os);
}

inline Vocabulary load_vocab(std::istream& is) {
  Vocabulary vocab;
  std::string line;
  int line_no = 0;
  int expected_id = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id_s, dur_s, moct_s, mpc_s, coct_s, cpcs_s, count_s;
    if (!(std::getline(ls, id_s, '\t') && std::getline(ls, dur_s, '\t') &&
          std::getline(ls, moct_s, '\t') && std::getline(ls, mpc_s, '\t') &&
          std::getline(ls, coct_s, '\t') && std::getline(ls, cpcs_s, '\t') &&
          std::getline(ls, count_s))) {
      raise(Errc::kIoError, "vocabulary line " + std::to_string(line_no) + " malformed");
    }
    int id = std::stoi(id_s);
    if (id != expected_id) {
      raise(Errc::kIoError, "vocabulary ids not contiguous at line " + std::to_string(line_no));
    }
    ++expected_id;
    if (id < kReservedIds) continue;

    Word w;
    w.duration_q = std::stoi(dur_s);
    w.mel_octave = moct_s == "R" ? Word::kRest : std::stoi(moct_s);
    w.mel_pc = mpc_s == "R" ? Word::kRest : std::stoi(mpc_s);
    if (coct_s == "-") {
      w.chord_octave = Word::kNone;
      w.chord_set = Word::kNone;
    } else {
      w.chord_octave = std::stoi(coct_s);
      std::vector<std::uint8_t> pcs;
      std::istringstream ps(cpcs_s);
      std::string pc;
      while (std::getline(ps, pc, ',')) pcs.push_back(static_cast<std::uint8_t>(std::stoi(pc)));
      w.chord_set = vocab.chords().add(ChordIndex::mask_from_pitches(pcs));
    }
    if (vocab.id_of(w)) {
      raise(Errc::kIoError, "duplicate word at vocabulary line " + std::to_string(line_no));
    }
    vocab.admit(w, std::stoll(count_s));
  }
  if (vocab.size() <= kReservedIds) raise(Errc::kEmptyVocabulary, "vocabulary file has no words");
  return vocab;
}

inline Vocabulary load_vocab(const std::string& path) {
  std::ifstream is(path);
  if (!is) raise(Errc::kIoError, "cannot read " + path);
  return load_vocab(is);
}

inline void save_corpus(const std::vector<std::vector<int>>& corpus, const std::string& path) {
  std::ofstream os(path);
  if (!os) raise(Errc::kIoError, "cannot write " + path);
  for (const auto& piece : corpus) {
    for (std::size_t i = 0; i < piece.size(); ++i) os << (i ? " " : "") << piece[i];
    os << "\n";
  }
}

inline std::vector<std::vector<int>> load_corpus(const std::string& path) {
  std::ifstream is(path);
  if (!is) raise(Errc::kIoError, "cannot read " + path);
  std::vector<std::vector<int>> corpus;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<int> piece;
    std::istringstream ls(line);
    int id;
    while (ls >> id) piece.push_back(id);
    corpus.push_back(std::move(piece));
  }
  return corpus;
}

/// Cuts encoded pieces into fixed-length non-overlapping training windows;
/// pieces shorter than seq_len contribute nothing.
inline std::vector<std::vector<int>> slice_windows(const std::vector<std::vector<int>>& corpus,
                                                   int seq_len) {
  std::vector<std::vector<int>> windows;
  for (const auto& piece : corpus) {
    for (std::size_t start = 0; start + static_cast<std::size_t>(seq_len) <= piece.size();
         start += static_cast<std::size_t>(seq_len)) {
      windows.emplace_back(piece.begin() + static_cast<std::ptrdiff_t>(start),
                           piece.begin() + static_cast<std::ptrdiff_t>(start) + seq_len);
    }
  }
  return windows;
}

}  // namespace polyseq::tok
