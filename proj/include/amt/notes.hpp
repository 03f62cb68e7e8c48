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

#ifndef AMT_NOTES_HPP
#define AMT_NOTES_HPP

#include <algorithm>
#include <vector>

#include "amt/tensor.hpp"

namespace amt {

constexpr int kMinPitch = 21;   // piano A0
constexpr int kMaxPitch = 108;  // piano C8

/// One pitched note with absolute times in seconds.
struct NoteEvent {
  int pitch = 60;        // MIDI number in [21, 108]
  double onset = 0.0;    // seconds, >= 0
  double offset = 0.0;   // seconds, > onset
  int velocity = 64;     // [1, 127]

  double duration() const { return offset - onset; }

  friend bool operator==(const NoteEvent&, const NoteEvent&) = default;
};

/// Notes sorted by (onset, pitch) with the covering duration.
struct NoteSequence {
  std::vector<NoteEvent> notes;
  double duration = 0.0;

  void sort() {
    std::stable_sort(notes.begin(), notes.end(),
                     [](const NoteEvent& a, const NoteEvent& b) {
                       if (a.onset != b.onset) return a.onset < b.onset;
                       return a.pitch < b.pitch;
                     });
  }

  /// Sorts and extends duration to cover all offsets.
  void normalize() {
    sort();
    for (const NoteEvent& n : notes)
      duration = std::max(duration, n.offset);
  }

  void validate() const {
    for (const NoteEvent& n : notes) {
      require(n.pitch >= kMinPitch && n.pitch <= kMaxPitch,
              "note pitch outside the 88-key range");
      require(n.onset >= 0.0, "note onset must be >= 0");
      require(n.offset > n.onset, "note offset must exceed its onset");
      require(n.offset <= duration + 1e-9, "note extends past duration");
    }
  }
};

inline int pitch_to_key(int pitch) { return pitch - kMinPitch; }
inline int key_to_pitch(int key) { return key + kMinPitch; }

/// Fundamental frequency of a MIDI pitch (A4 = 440 Hz).
inline double pitch_to_hz(int pitch) {
  return 440.0 * std::pow(2.0, (pitch - 69) / 12.0);
}

}  // namespace amt

#endif  // AMT_NOTES_HPP
