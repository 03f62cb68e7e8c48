// Copyright 2026 The amt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef AMT_MIDI_HPP
#define AMT_MIDI_HPP

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "amt/notes.hpp"

namespace amt {

/// Malformed Standard MIDI File; the message carries the byte offset.
class parse_error : public std::runtime_error {
 public:
  parse_error(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(offset) +
                           ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

struct MidiParseStats {
  std::size_t dropped_out_of_range = 0;  // pitches outside [21, 108]
  std::size_t dangling_note_ons = 0;     // closed at end of track
  std::size_t zero_length_notes = 0;     // on/off at the same instant
};

namespace detail {

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& bytes, std::size_t pos,
             std::size_t end)
      : bytes_(bytes), pos_(pos), end_(end) {}

  bool done() const { return pos_ >= end_; }
  std::size_t pos() const { return pos_; }

  std::uint8_t u8() {
    if (pos_ >= end_) throw parse_error("unexpected end of track data", pos_);
    return bytes_[pos_++];
  }
  std::uint8_t peek() const {
    if (pos_ >= end_) throw parse_error("unexpected end of track data", pos_);
    return bytes_[pos_];
  }
  void skip(std::size_t n) {
    if (pos_ + n > end_) throw parse_error("event runs past track end", pos_);
    pos_ += n;
  }

  std::uint32_t varint() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint8_t b = u8();
      v = (v << 7) | (b & 0x7F);
      if (!(b & 0x80)) return v;
    }
    throw parse_error("variable-length quantity too long", pos_);
  }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_;
  std::size_t end_;
};

struct RawNote {
  std::uint64_t on_tick;
  std::uint64_t off_tick;
  int pitch;
  int velocity;
};

inline double ticks_to_seconds(
    std::uint64_t tick, const std::vector<std::pair<std::uint64_t, std::uint32_t>>& tempo,
    std::uint32_t division) {
  // piecewise-constant tempo integration; default 500000 us per quarter note
  double seconds = 0.0;
  std::uint64_t prev_tick = 0;
  std::uint32_t uspq = 500000;
  for (const auto& [t, u] : tempo) {
    if (t >= tick) break;
    seconds += static_cast<double>(t - prev_tick) * uspq /
               (1e6 * static_cast<double>(division));
    prev_tick = t;
    uspq = u;
  }
  seconds += static_cast<double>(tick - prev_tick) * uspq /
             (1e6 * static_cast<double>(division));
  return seconds;
}

}  // namespace detail

/// Parses SMF format 0/1 into absolute-seconds note events. Tempo changes
/// from every track apply globally. Note-ons without a matching note-off
/// close at end of track; a re-onset of a sounding pitch closes the previous
/// note at the new onset. Pitches outside the 88-key range are dropped and
/// tallied.
inline NoteSequence parse_notes(const std::string& path,
                                MidiParseStats* stats = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open MIDI file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 14 || std::memcmp(bytes.data(), "MThd", 4) != 0)
    throw parse_error("missing MThd header", 0);
  const std::uint32_t hdr_len = (bytes[4] << 24) | (bytes[5] << 16) |
                                (bytes[6] << 8) | bytes[7];
  if (hdr_len < 6) throw parse_error("malformed MThd length", 4);
  const int format = (bytes[8] << 8) | bytes[9];
  const int ntrks = (bytes[10] << 8) | bytes[11];
  const int division_raw = (bytes[12] << 8) | bytes[13];
  if (format != 0 && format != 1)
    throw parse_error("unsupported SMF format " + std::to_string(format), 8);
  if (division_raw & 0x8000)
    throw parse_error("SMPTE time division is not supported", 12);
  const auto division = static_cast<std::uint32_t>(division_raw);
  if (division == 0) throw parse_error("zero ticks per quarter note", 12);

  std::vector<std::pair<std::uint64_t, std::uint32_t>> tempo;
  std::vector<detail::RawNote> raw;
  MidiParseStats local_stats;

  std::size_t pos = 8 + hdr_len;
  for (int trk = 0; trk < ntrks; ++trk) {
    if (pos + 8 > bytes.size())
      throw parse_error("missing MTrk chunk", pos);
    if (std::memcmp(bytes.data() + pos, "MTrk", 4) != 0)
      throw parse_error("expected MTrk chunk", pos);
    const std::uint32_t trk_len = (bytes[pos + 4] << 24) |
                                  (bytes[pos + 5] << 16) |
                                  (bytes[pos + 6] << 8) | bytes[pos + 7];
    const std::size_t trk_end = pos + 8 + trk_len;
    if (trk_end > bytes.size())
      throw parse_error("track length runs past end of file", pos + 4);
    detail::ByteReader r(bytes, pos + 8, trk_end);

    // (channel << 8 | pitch) -> (tick, velocity) of the open note
    std::map<int, std::pair<std::uint64_t, int>> open;
    std::uint64_t tick = 0;
    std::uint8_t running = 0;
    bool ended = false;
    while (!r.done() && !ended) {
      tick += r.varint();
      std::uint8_t status = r.peek();
      if (status & 0x80) {
        r.u8();
        if (status < 0xF0) running = status;
      } else {
        if (!(running & 0x80))
          throw parse_error("data byte without running status", r.pos());
        status = running;
      }
      const std::uint8_t type = status & 0xF0;
      const int channel = status & 0x0F;
      switch (type) {
        case 0x80:
        case 0x90: {
          const int pitch = r.u8();
          const int vel = r.u8();
          const int key = (channel << 8) | pitch;
          const bool is_on = type == 0x90 && vel > 0;
          if (is_on) {
            auto it = open.find(key);
            if (it != open.end()) {
              // re-onset while sounding: close the previous note here
              raw.push_back({it->second.first, tick, pitch, it->second.second});
              open.erase(it);
            }
            open[key] = {tick, vel};
          } else {
            auto it = open.find(key);
            if (it != open.end()) {
              raw.push_back({it->second.first, tick, pitch, it->second.second});
              open.erase(it);
            }
          }
          break;
        }
        case 0xA0:
        case 0xB0:
        case 0xE0:
          r.skip(2);
          break;
        case 0xC0:
        case 0xD0:
          r.skip(1);
          break;
        case 0xF0: {
          if (status == 0xFF) {
            const std::uint8_t meta = r.u8();
            const std::uint32_t len = r.varint();
            if (meta == 0x51) {
              if (len != 3) throw parse_error("malformed tempo meta", r.pos());
              const std::uint32_t uspq =
                  (r.u8() << 16) | (r.u8() << 8) | r.u8();
              tempo.emplace_back(tick, uspq);
            } else if (meta == 0x2F) {
              r.skip(len);
              ended = true;
            } else {
              r.skip(len);
            }
          } else if (status == 0xF0 || status == 0xF7) {
            r.skip(r.varint());
          } else {
            throw parse_error("unsupported system message", r.pos());
          }
          break;
        }
        default:
          throw parse_error("invalid status byte", r.pos());
      }
    }
    // close dangling note-ons at end of track
    for (const auto& [key, on] : open) {
      raw.push_back({on.first, tick, key & 0xFF, on.second});
      ++local_stats.dangling_note_ons;
    }
    pos = trk_end;
  }

  std::stable_sort(tempo.begin(), tempo.end());
  NoteSequence seq;
  for (const detail::RawNote& n : raw) {
    if (n.pitch < kMinPitch || n.pitch > kMaxPitch) {
      ++local_stats.dropped_out_of_range;
      continue;
    }
    const double onset = detail::ticks_to_seconds(n.on_tick, tempo, division);
    const double offset = detail::ticks_to_seconds(n.off_tick, tempo, division);
    if (offset <= onset) {
      ++local_stats.zero_length_notes;
      continue;
    }
    seq.notes.push_back(NoteEvent{n.pitch, onset, offset,
                                  n.velocity > 0 ? n.velocity : 64});
  }
  seq.normalize();
  if (stats) *stats = local_stats;
  return seq;
}

/// Writes a format-0 SMF at 960 ticks per quarter, 120 bpm; re-reading
/// reproduces onsets and offsets to tick resolution (about half a
/// millisecond).
inline void notes_to_midi(const NoteSequence& seq, const std::string& path) {
  constexpr std::uint32_t kDivision = 960;
  constexpr double kTicksPerSecond = kDivision * 2.0;  // 120 bpm
  struct Ev {
    std::uint64_t tick;
    bool on;
    int pitch;
    int velocity;
  };
  std::vector<Ev> events;
  events.reserve(seq.notes.size() * 2);
  for (const NoteEvent& n : seq.notes) {
    const auto on = static_cast<std::uint64_t>(
        std::llround(n.onset * kTicksPerSecond));
    auto off = static_cast<std::uint64_t>(
        std::llround(n.offset * kTicksPerSecond));
    if (off <= on) off = on + 1;
    events.push_back({on, true, n.pitch, n.velocity});
    events.push_back({off, false, n.pitch, 0});
  }
  std::stable_sort(events.begin(), events.end(), [](const Ev& a, const Ev& b) {
    if (a.tick != b.tick) return a.tick < b.tick;
    if (a.on != b.on) return !a.on;  // offs before ons at the same tick
    return a.pitch < b.pitch;
  });

  std::vector<unsigned char> track;
  auto push_varint = [&](std::uint64_t v) {
    unsigned char buf[5];
    int n = 0;
    do {
      buf[n++] = static_cast<unsigned char>(v & 0x7F);
      v >>= 7;
    } while (v);
    for (int i = n - 1; i >= 0; --i)
      track.push_back(i == 0 ? buf[i] : static_cast<unsigned char>(buf[i] | 0x80));
  };
  // tempo 500000 us/quarter at tick 0
  push_varint(0);
  for (unsigned char b : {0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20}) track.push_back(b);
  std::uint64_t last_tick = 0;
  for (const Ev& e : events) {
    push_varint(e.tick - last_tick);
    last_tick = e.tick;
    track.push_back(e.on ? 0x90 : 0x80);
    track.push_back(static_cast<unsigned char>(e.pitch));
    track.push_back(static_cast<unsigned char>(e.on ? e.velocity : 0));
  }
  push_varint(0);
  for (unsigned char b : {0xFF, 0x2F, 0x00}) track.push_back(b);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot write MIDI file: " + path);
  auto w16 = [&](std::uint16_t v) {
    os.put(static_cast<char>(v >> 8));
    os.put(static_cast<char>(v & 0xFF));
  };
  auto w32 = [&](std::uint32_t v) {
    os.put(static_cast<char>(v >> 24));
    os.put(static_cast<char>((v >> 16) & 0xFF));
    os.put(static_cast<char>((v >> 8) & 0xFF));
    os.put(static_cast<char>(v & 0xFF));
  };
  os.write("MThd", 4);
  w32(6);
  w16(0);  // format 0
  w16(1);  // one track
  w16(kDivision);
  os.write("MTrk", 4);
  w32(static_cast<std::uint32_t>(track.size()));
  os.write(reinterpret_cast<const char*>(track.data()),
           static_cast<std::streamsize>(track.size()));
  if (!os) throw io_error("write failed: " + path);
}

}  // namespace amt

#endif  // AMT_MIDI_HPP
