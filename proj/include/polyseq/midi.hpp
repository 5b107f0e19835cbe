#pragma once

/// Standard MIDI File codec: parses SMF format 0/1 into timed note events,
/// splits a piece into a monophonic melody stream plus a chord-span stream,
/// and renders such streams back to an SMF byte sequence.
///
/// Only note timing and pitch are modeled. Tempo, program and controller
/// events are skipped on input; output uses a fixed tempo of 120 BPM and a
/// fixed velocity of 90.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polyseq/errors.hpp"

namespace polyseq::midi {

/// One parsed note event. Velocity and channel are kept from the file but the
/// downstream token representation discards them.
struct TimedNote {
  std::int64_t onset = 0;     // ticks
  std::int64_t duration = 0;  // ticks, > 0
  std::uint8_t pitch = 0;     // 0..127
  std::uint8_t velocity = 0;  // 0..127
  std::uint8_t channel = 0;   // 0..15

  bool operator==(const TimedNote& o) const {
    return onset == o.onset && duration == o.duration && pitch == o.pitch;
  }
};

struct Track {
  std::string name;
  std::vector<TimedNote> notes;  // sorted by (onset, pitch)
};

struct MidiPiece {
  int ticks_per_quarter = 480;
  std::vector<Track> tracks;
};

/// A set of pitches sounding together for one span of time.
struct ChordSpan {
  std::int64_t onset = 0;
  std::int64_t duration = 0;
  std::vector<std::uint8_t> pitches;  // sorted, unique, non-empty

  bool operator==(const ChordSpan& o) const {
    return onset == o.onset && duration == o.duration && pitches == o.pitches;
  }
};

namespace detail {

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }

  std::uint8_t peek() const {
    if (pos_ >= bytes_.size()) raise(Errc::kMalformedHeader, "unexpected end of data");
    return bytes_[pos_];
  }

  std::uint16_t u16be() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>((bytes_[pos_] << 8) | bytes_[pos_ + 1]);
    pos_ += 2;
    return v;
  }

  std::uint32_t u32be() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }

  /// MIDI variable-length quantity, at most 4 bytes.
  std::uint32_t vlq() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      std::uint8_t b = u8();
      v = (v << 7) | (b & 0x7F);
      if (!(b & 0x80)) return v;
    }
    raise(Errc::kMalformedHeader, "variable-length quantity longer than 4 bytes");
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) raise(Errc::kMalformedHeader, "unexpected end of data");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline void write_u16be(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

inline void write_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void write_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t buf[4];
  int n = 0;
  buf[n++] = static_cast<std::uint8_t>(v & 0x7F);
  while (v >>= 7) buf[n++] = static_cast<std::uint8_t>((v & 0x7F) | 0x80);
  while (n--) out.push_back(buf[n]);
}

inline int channel_message_data_len(std::uint8_t status) {
  switch (status & 0xF0) {
    case 0xC0:
    case 0xD0:
      return 1;
    default:
      return 2;
  }
}

}  // namespace detail

/// Parses an SMF format 0 or 1 file. Note-on with velocity 0 counts as
/// note-off. Note-ons left open at the end of a track are closed there and
/// reported through `warnings`. Tempo/program/controller data is skipped.
/// Throws MalformedHeader on structural damage and UnsupportedFormat on
/// SMF format 2 or SMPTE time division.
inline MidiPiece parse_midi(std::span<const std::uint8_t> bytes,
                            std::vector<std::string>* warnings = nullptr) {
  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(msg);
  };

  detail::ByteReader r(bytes);
  if (r.remaining() < 14) raise(Errc::kMalformedHeader, "file shorter than an MThd chunk");
  auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), "MThd"))
    raise(Errc::kMalformedHeader, "missing MThd magic");
  std::uint32_t hlen = r.u32be();
  if (hlen < 6) raise(Errc::kMalformedHeader, "MThd chunk shorter than 6 bytes");
  std::uint16_t format = r.u16be();
  std::uint16_t ntrks = r.u16be();
  std::uint16_t division = r.u16be();
  r.skip(hlen - 6);
  if (format > 1) raise(Errc::kUnsupportedFormat, "SMF format " + std::to_string(format));
  if (division & 0x8000) raise(Errc::kUnsupportedFormat, "SMPTE time division");
  if (division == 0) raise(Errc::kMalformedHeader, "zero ticks per quarter");

  MidiPiece piece;
  piece.ticks_per_quarter = division;

  for (int ti = 0; ti < ntrks; ++ti) {
    if (r.remaining() == 0) {
      warn("header announces " + std::to_string(ntrks) + " tracks, found " + std::to_string(ti));
      break;
    }
    auto tmagic = r.take(4);
    std::uint32_t tlen = r.u32be();
    if (!std::equal(tmagic.begin(), tmagic.end(), "MTrk")) {
      // The MIDI file format permits unknown chunk types; skip them.
      r.skip(tlen);
      --ti;
      continue;
    }
    detail::ByteReader tr(r.take(tlen));

    Track track;
    std::int64_t now = 0;
    std::uint8_t running_status = 0;
    // Open note-ons per (channel, pitch), matched first-in-first-out.
    std::map<int, std::deque<TimedNote>> open;

    bool ended = false;
    while (!ended && tr.remaining() > 0) {
      now += tr.vlq();
      std::uint8_t b = tr.peek();
      std::uint8_t status;
      if (b & 0x80) {
        status = tr.u8();
      } else {
        if (running_status == 0)
          raise(Errc::kMalformedHeader, "data byte without running status");
        status = running_status;
      }

      if (status == 0xFF) {
        std::uint8_t type = tr.u8();
        std::uint32_t len = tr.vlq();
        auto data = tr.take(len);
        if (type == 0x2F) {
          ended = true;
        } else if (type == 0x03 && track.name.empty()) {
          track.name.assign(data.begin(), data.end());
        }
        running_status = 0;
        continue;
      }
      if (status == 0xF0 || status == 0xF7) {
        std::uint32_t len = tr.vlq();
        tr.skip(len);
        running_status = 0;
        continue;
      }
      if (status < 0x80) raise(Errc::kMalformedHeader, "invalid status byte");

      running_status = status;
      std::uint8_t kind = status & 0xF0;
      std::uint8_t channel = status & 0x0F;
      std::uint8_t d0 = tr.u8();
      std::uint8_t d1 = detail::channel_message_data_len(status) == 2 ? tr.u8() : 0;

      bool is_on = kind == 0x90 && d1 > 0;
      bool is_off = kind == 0x80 || (kind == 0x90 && d1 == 0);
      if (is_on) {
        TimedNote n;
        n.onset = now;
        n.pitch = d0 & 0x7F;
        n.velocity = d1 & 0x7F;
        n.channel = channel;
        open[(channel << 8) | n.pitch].push_back(n);
      } else if (is_off) {
        auto it = open.find((channel << 8) | (d0 & 0x7F));
        if (it == open.end() || it->second.empty()) {
          warn("note-off without matching note-on (pitch " + std::to_string(d0) + ")");
        } else {
          TimedNote n = it->second.front();
          it->second.pop_front();
          n.duration = now - n.onset;
          if (n.duration > 0) {
            track.notes.push_back(n);
          } else {
            warn("zero-length note dropped (pitch " + std::to_string(n.pitch) + ")");
          }
        }
      }
      // Other channel messages carry no note information.
    }

    for (auto& [key, queue] : open) {
      for (TimedNote n : queue) {
        n.duration = now - n.onset;
        warn("note-on without note-off closed at track end (pitch " + std::to_string(n.pitch) +
             ")");
        if (n.duration > 0) track.notes.push_back(n);
      }
    }

    std::sort(track.notes.begin(), track.notes.end(), [](const TimedNote& a, const TimedNote& b) {
      return a.onset != b.onset ? a.onset < b.onset : a.pitch < b.pitch;
    });
    piece.tracks.push_back(std::move(track));
  }
  return piece;
}

/// Manual overrides for track classification. Track indices refer to
/// piece.tracks; channels split a single track by MIDI channel.
struct TrackSplit {
  std::optional<int> melody_track;
  std::optional<int> chord_track;
  std::optional<int> melody_channel;
  std::optional<int> chord_channel;
};

struct Classified {
  std::vector<TimedNote> melody;   // monophonic, sorted by onset
  std::vector<ChordSpan> chords;   // sorted by onset
  double melody_polyphony = 0.0;   // diagnostic: polyphony fraction of each side
  double chord_polyphony = 0.0;
  int melody_notes_dropped = 0;    // same-onset collisions removed from the melody
};

namespace detail {

/// Fraction of total sounding time during which two or more notes overlap.
inline double polyphony_fraction(const std::vector<TimedNote>& notes) {
  if (notes.empty()) return 0.0;
  std::vector<std::pair<std::int64_t, int>> edges;
  edges.reserve(notes.size() * 2);
  for (const auto& n : notes) {
    edges.emplace_back(n.onset, +1);
    edges.emplace_back(n.onset + n.duration, -1);
  }
  std::sort(edges.begin(), edges.end());
  std::int64_t sounding = 0, poly = 0;
  int depth = 0;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    depth += edges[i].second;
    std::int64_t span = edges[i + 1].first - edges[i].first;
    if (depth >= 1) sounding += span;
    if (depth >= 2) poly += span;
  }
  return sounding > 0 ? static_cast<double>(poly) / static_cast<double>(sounding) : 0.0;
}

inline std::vector<TimedNote> monophonize(std::vector<TimedNote> notes, int* dropped) {
  std::sort(notes.begin(), notes.end(), [](const TimedNote& a, const TimedNote& b) {
    return a.onset != b.onset ? a.onset < b.onset : a.pitch < b.pitch;
  });
  std::vector<TimedNote> out;
  for (std::size_t i = 0; i < notes.size(); ++i) {
    // Same-onset collision: keep the highest pitch (the top line).
    if (i + 1 < notes.size() && notes[i + 1].onset == notes[i].onset) {
      if (dropped) ++*dropped;
      continue;
    }
    out.push_back(notes[i]);
  }
  // Truncate each note at the next onset so the stream is strictly monophonic.
  for (std::size_t i = 0; i + 1 < out.size(); ++i) {
    out[i].duration = std::min(out[i].duration, out[i + 1].onset - out[i].onset);
  }
  std::erase_if(out, [](const TimedNote& n) { return n.duration <= 0; });
  return out;
}

inline std::vector<ChordSpan> group_chords(const std::vector<TimedNote>& notes) {
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<std::uint8_t>> groups;
  for (const auto& n : notes) groups[{n.onset, n.duration}].push_back(n.pitch);
  std::vector<ChordSpan> spans;
  spans.reserve(groups.size());
  for (auto& [key, pitches] : groups) {
    std::sort(pitches.begin(), pitches.end());
    pitches.erase(std::unique(pitches.begin(), pitches.end()), pitches.end());
    spans.push_back(ChordSpan{key.first, key.second, std::move(pitches)});
  }
  return spans;
}

}  // namespace detail

/// Splits a parsed piece into a melody note stream and a chord span stream.
///
/// Without an override the piece must have exactly two non-empty tracks; the
/// one with the higher polyphony fraction becomes the chord track. Both
/// tracks reading as polyphonic (fraction >= 0.5), or indistinguishable
/// fractions, is an AmbiguousTracks error that reports the per-track numbers
/// so the caller can override. Simultaneous same-onset same-duration notes on
/// the chord track merge into ChordSpans; melody overlaps are resolved by
/// truncating the earlier note at the next onset.
inline Classified classify_tracks(const MidiPiece& piece, const TrackSplit& split = {}) {
  constexpr double kPolyphonyThreshold = 0.5;

  std::vector<TimedNote> melody_raw, chord_raw;

  if (split.melody_track && split.chord_track) {
    int m = *split.melody_track, c = *split.chord_track;
    if (m < 0 || c < 0 || m >= static_cast<int>(piece.tracks.size()) ||
        c >= static_cast<int>(piece.tracks.size()) || m == c) {
      raise(Errc::kAmbiguousTracks, "track override out of range");
    }
    melody_raw = piece.tracks[static_cast<std::size_t>(m)].notes;
    chord_raw = piece.tracks[static_cast<std::size_t>(c)].notes;
  } else if (split.melody_channel && split.chord_channel) {
    for (const auto& t : piece.tracks) {
      for (const auto& n : t.notes) {
        if (n.channel == *split.melody_channel) melody_raw.push_back(n);
        if (n.channel == *split.chord_channel) chord_raw.push_back(n);
      }
    }
  } else {
    std::vector<const Track*> nonempty;
    for (const auto& t : piece.tracks) {
      if (!t.notes.empty()) nonempty.push_back(&t);
    }
    if (nonempty.size() != 2) {
      raise(Errc::kAmbiguousTracks,
            std::to_string(nonempty.size()) +
                " non-empty tracks; need exactly 2 or an explicit split");
    }
    double f0 = detail::polyphony_fraction(nonempty[0]->notes);
    double f1 = detail::polyphony_fraction(nonempty[1]->notes);
    if ((f0 >= kPolyphonyThreshold && f1 >= kPolyphonyThreshold) || f0 == f1) {
      raise(Errc::kAmbiguousTracks,
            "polyphony fractions " + std::to_string(f0) + " and " + std::to_string(f1));
    }
    const Track* chord_track = f1 > f0 ? nonempty[1] : nonempty[0];
    const Track* melody_track = f1 > f0 ? nonempty[0] : nonempty[1];
    melody_raw = melody_track->notes;
    chord_raw = chord_track->notes;
  }

  Classified out;
  out.melody_polyphony = detail::polyphony_fraction(melody_raw);
  out.chord_polyphony = detail::polyphony_fraction(chord_raw);
  out.melody = detail::monophonize(std::move(melody_raw), &out.melody_notes_dropped);
  out.chords = detail::group_chords(chord_raw);
  return out;
}

/// Renders melody and chord streams to an SMF format 1 byte sequence with two
/// track chunks. Velocity is fixed at 90 and tempo at 120 BPM; parsing the
/// result reproduces the input streams exactly up to those two fields.
inline std::vector<std::uint8_t> render_midi(const std::vector<TimedNote>& melody,
                                             const std::vector<ChordSpan>& chords, int tpq) {
  if (tpq <= 0 || tpq > 0x7FFF) raise(Errc::kInvalidStream, "ticks per quarter out of range");
  for (std::size_t i = 0; i < melody.size(); ++i) {
    const auto& n = melody[i];
    if (n.duration <= 0 || n.onset < 0 || n.pitch > 127)
      raise(Errc::kInvalidStream, "invalid melody note at index " + std::to_string(i));
    if (i > 0 && n.onset < melody[i - 1].onset)
      raise(Errc::kInvalidStream, "melody notes not sorted by onset");
  }
  for (std::size_t i = 0; i < chords.size(); ++i) {
    const auto& c = chords[i];
    if (c.duration <= 0 || c.onset < 0 || c.pitches.empty())
      raise(Errc::kInvalidStream, "invalid chord span at index " + std::to_string(i));
    if (i > 0 && c.onset < chords[i - 1].onset)
      raise(Errc::kInvalidStream, "chord spans not sorted by onset");
  }

  constexpr std::uint8_t kVelocity = 90;
  constexpr std::uint32_t kTempoMicros = 500000;  // 120 BPM

  struct Event {
    std::int64_t tick;
    int order;  // note-offs sort before note-ons at the same tick
    std::uint8_t status;
    std::uint8_t d0, d1;
  };

  auto emit_track = [&](const std::vector<Event>& events, const char* name,
                        bool with_tempo) -> std::vector<std::uint8_t> {
    std::vector<std::uint8_t> body;
    // Track name.
    detail::write_vlq(body, 0);
    body.push_back(0xFF);
    body.push_back(0x03);
    detail::write_vlq(body, static_cast<std::uint32_t>(std::char_traits<char>::length(name)));
    for (const char* p = name; *p; ++p) body.push_back(static_cast<std::uint8_t>(*p));
    if (with_tempo) {
      detail::write_vlq(body, 0);
      body.push_back(0xFF);
      body.push_back(0x51);
      body.push_back(0x03);
      body.push_back(static_cast<std::uint8_t>((kTempoMicros >> 16) & 0xFF));
      body.push_back(static_cast<std::uint8_t>((kTempoMicros >> 8) & 0xFF));
      body.push_back(static_cast<std::uint8_t>(kTempoMicros & 0xFF));
    }
    std::int64_t now = 0;
    for (const auto& e : events) {
      detail::write_vlq(body, static_cast<std::uint32_t>(e.tick - now));
      now = e.tick;
      body.push_back(e.status);
      body.push_back(e.d0);
      body.push_back(e.d1);
    }
    detail::write_vlq(body, 0);
    body.push_back(0xFF);
    body.push_back(0x2F);
    body.push_back(0x00);

    std::vector<std::uint8_t> chunk;
    chunk.insert(chunk.end(), {'M', 'T', 'r', 'k'});
    detail::write_u32be(chunk, static_cast<std::uint32_t>(body.size()));
    chunk.insert(chunk.end(), body.begin(), body.end());
    return chunk;
  };

  auto sort_events = [](std::vector<Event>& ev) {
    std::sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) {
      if (a.tick != b.tick) return a.tick < b.tick;
      if (a.order != b.order) return a.order < b.order;
      return a.d0 < b.d0;
    });
  };

  std::vector<Event> mel_events;
  for (const auto& n : melody) {
    mel_events.push_back({n.onset, 1, 0x90, n.pitch, kVelocity});
    mel_events.push_back({n.onset + n.duration, 0, 0x80, n.pitch, 0});
  }
  sort_events(mel_events);

  std::vector<Event> chord_events;
  for (const auto& c : chords) {
    for (std::uint8_t p : c.pitches) {
      chord_events.push_back({c.onset, 1, 0x91, p, kVelocity});
      chord_events.push_back({c.onset + c.duration, 0, 0x81, p, 0});
    }
  }
  sort_events(chord_events);

  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'M', 'T', 'h', 'd'});
  detail::write_u32be(out, 6);
  detail::write_u16be(out, 1);  // format 1
  detail::write_u16be(out, 2);  // two tracks
  detail::write_u16be(out, static_cast<std::uint16_t>(tpq));
  auto t0 = emit_track(mel_events, "melody", true);
  auto t1 = emit_track(chord_events, "chords", false);
  out.insert(out.end(), t0.begin(), t0.end());
  out.insert(out.end(), t1.begin(), t1.end());
  return out;
}

}  // namespace polyseq::midi
