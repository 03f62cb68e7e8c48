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

#ifndef AMT_SYNTH_HPP
#define AMT_SYNTH_HPP

#include <utility>
#include <vector>

#include "amt/audio.hpp"
#include "amt/notes.hpp"
#include "amt/rng.hpp"

namespace amt {

/// Desk-scale dataset generator settings. Values outside their valid ranges
/// are clamped rather than rejected.
struct SynthParams {
  double min_duration = 8.0;   // seconds per piece
  double max_duration = 12.0;
  double notes_per_second = 1.5;
  double min_note_len = 0.15;
  double max_note_len = 1.0;
  int min_pitch = 36;  // C2..C7 keeps all 8 harmonics well under Nyquist
  int max_pitch = 96;
  int harmonics = 8;
  double decay_tau = 0.3;
  double peak = 0.95;
  // same-pitch notes are kept at least this far apart so annotations stay
  // recoverable at frame resolution
  double same_pitch_gap = 0.15;
};

inline SynthParams clamp_params(SynthParams p) {
  p.min_duration = std::max(1.0, p.min_duration);
  p.max_duration = std::max(p.min_duration, p.max_duration);
  p.notes_per_second = std::max(0.05, p.notes_per_second);
  p.min_note_len = std::max(0.05, p.min_note_len);
  p.max_note_len = std::max(p.min_note_len, p.max_note_len);
  p.min_pitch = std::max(kMinPitch, std::min(p.min_pitch, kMaxPitch));
  p.max_pitch = std::max(p.min_pitch, std::min(p.max_pitch, kMaxPitch));
  p.harmonics = std::max(1, std::min(p.harmonics, 16));
  p.decay_tau = std::max(0.01, p.decay_tau);
  p.peak = std::max(0.05, std::min(p.peak, 1.0));
  p.same_pitch_gap = std::max(0.0, p.same_pitch_gap);
  return p;
}

/// Renders one note as a sum of exponentially decaying harmonics of the
/// fundamental, amplitudes 1/k, hard-gated to [onset, offset).
inline void render_note(const NoteEvent& n, const SynthParams& p,
                        std::vector<double>& out, std::size_t sample_rate) {
  const double f0 = pitch_to_hz(n.pitch);
  const double vel_gain = n.velocity / 127.0;
  const auto begin = static_cast<std::size_t>(n.onset * sample_rate);
  const auto end = std::min(
      out.size(), static_cast<std::size_t>(n.offset * sample_rate));
  const double nyquist = sample_rate / 2.0;
  for (int k = 1; k <= p.harmonics; ++k) {
    const double f = f0 * k;
    if (f >= nyquist) break;
    const double amp = vel_gain / k;
    const double w = 2.0 * 3.14159265358979323846 * f;
    for (std::size_t i = begin; i < end; ++i) {
      const double t = static_cast<double>(i) / sample_rate - n.onset;
      out[i] += amp * std::sin(w * t) * std::exp(-t / p.decay_tau);
    }
  }
}

/// One synthesized piece: annotations exactly match the rendered audio.
inline std::pair<AudioClip, NoteSequence> make_synthetic_piece(
    std::uint64_t seed, std::size_t index, const SynthParams& params = {}) {
  const SynthParams p = clamp_params(params);
  Rng rng = Rng::keyed(seed, "piece/" + std::to_string(index));
  NoteSequence seq;
  seq.duration = rng.uniform(p.min_duration, p.max_duration);
  const auto target = static_cast<std::size_t>(
      std::max<double>(1.0, std::llround(seq.duration * p.notes_per_second)));
  std::vector<double> last_offset(kNumPitches, -1e9);
  for (std::size_t i = 0; i < target; ++i) {
    const double len = rng.uniform(p.min_note_len, p.max_note_len);
    const double onset = rng.uniform(0.0, std::max(0.01, seq.duration - len));
    int pitch = 0;
    bool placed = false;
    for (int attempt = 0; attempt < 8; ++attempt) {
      pitch = static_cast<int>(rng.uniform_int(p.min_pitch, p.max_pitch));
      const auto key = static_cast<std::size_t>(pitch_to_key(pitch));
      if (onset >= last_offset[key] + p.same_pitch_gap) {
        placed = true;
        break;
      }
    }
    if (!placed) continue;
    const double offset = std::min(seq.duration, onset + len);
    const int velocity = static_cast<int>(rng.uniform_int(64, 112));
    seq.notes.push_back(NoteEvent{pitch, onset, offset, velocity});
    const auto key = static_cast<std::size_t>(pitch_to_key(pitch));
    last_offset[key] = std::max(last_offset[key], offset);
  }
  // overlapping placements can still collide in onset order; drop collisions
  seq.sort();
  std::vector<NoteEvent> kept;
  std::vector<double> open_until(kNumPitches, -1e9);
  for (const NoteEvent& n : seq.notes) {
    const auto key = static_cast<std::size_t>(pitch_to_key(n.pitch));
    if (n.onset < open_until[key] + p.same_pitch_gap) continue;
    open_until[key] = n.offset;
    kept.push_back(n);
  }
  seq.notes = std::move(kept);

  AudioClip clip;
  clip.sample_rate = kSampleRate;
  clip.samples.assign(
      static_cast<std::size_t>(seq.duration * kSampleRate), 0.0);
  for (const NoteEvent& n : seq.notes) render_note(n, p, clip.samples, kSampleRate);
  double peak = 0.0;
  for (double v : clip.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    const double g = p.peak / peak;
    for (double& v : clip.samples) v *= g;
  }
  return {std::move(clip), std::move(seq)};
}

/// Deterministic in (seed, n_pieces, params).
inline std::vector<std::pair<AudioClip, NoteSequence>> make_synthetic_dataset(
    std::uint64_t seed, std::size_t n_pieces, const SynthParams& params = {}) {
  require(n_pieces >= 1, "make_synthetic_dataset: n_pieces must be >= 1");
  std::vector<std::pair<AudioClip, NoteSequence>> out;
  out.reserve(n_pieces);
  for (std::size_t i = 0; i < n_pieces; ++i)
    out.push_back(make_synthetic_piece(seed, i, params));
  return out;
}

}  // namespace amt

#endif  // AMT_SYNTH_HPP
