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

#ifndef AMT_ROLLS_HPP
#define AMT_ROLLS_HPP

#include <vector>

#include "amt/mel.hpp"
#include "amt/notes.hpp"

namespace amt {

constexpr double kHopSeconds = 512.0 / 16000.0;
constexpr std::size_t kWindowFrames = 640;

/// T x 88 binary matrix with its frame period.
struct BinaryRoll {
  Tensor values;  // [T, 88], entries in {0, 1}
  double hop_seconds = kHopSeconds;

  std::size_t frames() const { return values.rank() == 2 ? values.dim(0) : 0; }
};

/// Paired onset/frame training targets. Every onset activation is also a
/// frame activation.
struct LabelRolls {
  Tensor onset_roll;  // [T, 88]
  Tensor frame_roll;  // [T, 88]
  double hop_seconds = kHopSeconds;

  std::size_t frames() const {
    return onset_roll.rank() == 2 ? onset_roll.dim(0) : 0;
  }
};

struct RollConfig {
  double hop_seconds = kHopSeconds;
  // onset frame plus following frames; 2 frames (~64 ms) keeps the 50 ms
  // evaluation tolerance representable at frame resolution
  int onset_extent_frames = 2;
};

/// Quantizes note events onto onset/frame rolls. A frame is active when its
/// start time t*hop lies in [onset, offset); the onset lands on
/// floor(onset/hop) and extends per RollConfig. Onset activations are forced
/// into the frame roll so onset implies frame everywhere. Notes reaching past
/// the last frame are truncated and tallied.
inline LabelRolls notes_to_rolls(const NoteSequence& seq, std::size_t n_frames,
                                 const RollConfig& cfg = {},
                                 std::size_t* truncated_tally = nullptr) {
  require(n_frames >= 1, "notes_to_rolls: n_frames must be >= 1");
  LabelRolls out;
  out.hop_seconds = cfg.hop_seconds;
  out.onset_roll = Tensor({n_frames, kNumPitches});
  out.frame_roll = Tensor({n_frames, kNumPitches});
  const double hop = cfg.hop_seconds;
  std::size_t truncated = 0;
  for (const NoteEvent& n : seq.notes) {
    const auto key = static_cast<std::size_t>(pitch_to_key(n.pitch));
    require(key < kNumPitches, "notes_to_rolls: pitch outside 88 keys");
    const auto onset_frame =
        static_cast<std::ptrdiff_t>(std::floor(n.onset / hop));
    if (onset_frame >= static_cast<std::ptrdiff_t>(n_frames)) {
      ++truncated;
      continue;
    }
    // frame roll: start times within [onset, offset)
    std::size_t t = onset_frame < 0 ? 0 : static_cast<std::size_t>(onset_frame);
    bool clipped = false;
    for (; t < n_frames; ++t) {
      const double ft = static_cast<double>(t) * hop;
      if (ft < n.onset) continue;
      if (ft >= n.offset) break;
      out.frame_roll.at(t, key) = 1.0;
    }
    if (t == n_frames && n.offset > static_cast<double>(n_frames) * hop)
      clipped = true;
    // onset roll: onset frame plus extension, forced into the frame roll
    for (int e = 0; e < cfg.onset_extent_frames; ++e) {
      const std::ptrdiff_t of = onset_frame + e;
      if (of < 0 || of >= static_cast<std::ptrdiff_t>(n_frames)) continue;
      out.onset_roll.at(static_cast<std::size_t>(of), key) = 1.0;
      out.frame_roll.at(static_cast<std::size_t>(of), key) = 1.0;
    }
    if (clipped) ++truncated;
  }
  if (truncated_tally) *truncated_tally += truncated;
  return out;
}

/// Rasterizes notes as a plain frame roll (no onset channel, no extension);
/// used to reconstitute a roll from final note events for frame scoring.
inline BinaryRoll notes_to_frame_roll(const NoteSequence& seq,
                                      std::size_t n_frames,
                                      double hop = kHopSeconds) {
  BinaryRoll out;
  out.hop_seconds = hop;
  out.values = Tensor({n_frames, kNumPitches});
  for (const NoteEvent& n : seq.notes) {
    const auto key = static_cast<std::size_t>(pitch_to_key(n.pitch));
    for (std::size_t t = 0; t < n_frames; ++t) {
      const double ft = static_cast<double>(t) * hop;
      if (ft >= n.onset && ft < n.offset) out.values.at(t, key) = 1.0;
    }
  }
  return out;
}

/// Fixed-length training example; frames beyond valid_frames are zero pad.
struct TrainingWindow {
  Tensor spec;        // [window, n_mels]
  Tensor onset_roll;  // [window, 88]
  Tensor frame_roll;  // [window, 88]
  std::size_t valid_frames = 0;
};

/// Cuts a spectrogram/label pair into ceil(T/window) windows, zero-padding
/// the final one. Concatenating the valid regions reconstructs the input.
inline std::vector<TrainingWindow> segment_windows(
    const Spectrogram& spec, const LabelRolls& labels,
    std::size_t window = kWindowFrames) {
  const std::size_t T = spec.frames();
  require(T == labels.frames(),
          "segment_windows: spectrogram and labels disagree on frame count");
  require(window >= 1, "segment_windows: window must be >= 1");
  const std::size_t n_windows = (T + window - 1) / window;
  std::vector<TrainingWindow> out;
  out.reserve(n_windows);
  const std::size_t n_mels = spec.values.dim(1);
  for (std::size_t w = 0; w < n_windows; ++w) {
    TrainingWindow tw;
    tw.spec = Tensor({window, n_mels});
    tw.onset_roll = Tensor({window, kNumPitches});
    tw.frame_roll = Tensor({window, kNumPitches});
    const std::size_t begin = w * window;
    tw.valid_frames = std::min(window, T - begin);
    for (std::size_t t = 0; t < tw.valid_frames; ++t) {
      std::copy(spec.values.data() + (begin + t) * n_mels,
                spec.values.data() + (begin + t + 1) * n_mels,
                tw.spec.data() + t * n_mels);
      std::copy(labels.onset_roll.data() + (begin + t) * kNumPitches,
                labels.onset_roll.data() + (begin + t + 1) * kNumPitches,
                tw.onset_roll.data() + t * kNumPitches);
      std::copy(labels.frame_roll.data() + (begin + t) * kNumPitches,
                labels.frame_roll.data() + (begin + t + 1) * kNumPitches,
                tw.frame_roll.data() + t * kNumPitches);
    }
    out.push_back(std::move(tw));
  }
  return out;
}

}  // namespace amt

#endif  // AMT_ROLLS_HPP
