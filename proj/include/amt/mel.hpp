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

#ifndef AMT_MEL_HPP
#define AMT_MEL_HPP

#include <complex>
#include <vector>

#include "amt/audio.hpp"
#include "amt/tensor.hpp"

namespace amt {

/// Normalized log-magnitude Mel spectrogram, entries in [0, 1].
struct Spectrogram {
  Tensor values;             // [T, n_bins]
  double hop_seconds = 0.0;
  std::size_t n_bins = 0;

  std::size_t frames() const { return values.rank() == 2 ? values.dim(0) : 0; }
};

struct MelConfig {
  std::size_t sample_rate = kSampleRate;
  std::size_t n_fft = 2048;
  std::size_t hop = 512;
  std::size_t n_mels = 229;
  double fmin = 30.0;
  double fmax = 8000.0;
  double log_eps = 1e-10;
};

namespace detail {

constexpr double kPi = 3.14159265358979323846;

/// In-place iterative radix-2 FFT; n must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  require((n & (n - 1)) == 0 && n > 0, "fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

/// Reflect-padding index (no edge repetition); n == 1 maps everything to 0.
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (static_cast<std::ptrdiff_t>(n) - 1);
  std::ptrdiff_t k = i % period;
  if (k < 0) k += period;
  if (k >= static_cast<std::ptrdiff_t>(n)) k = period - k;
  return static_cast<std::size_t>(k);
}

inline double hz_to_mel(double f) {
  return 2595.0 * std::log10(1.0 + f / 700.0);
}
inline double mel_to_hz(double m) {
  return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
}

}  // namespace detail

/// Mel frontend with precomputed window and filterbank. Framing is centered:
/// frame t covers samples [t*hop - n_fft/2, t*hop + n_fft/2) of the
/// reflect-padded signal, so frame t aligns with time t*hop. T = 1 +
/// floor(n_samples / hop).
class MelExtractor {
 public:
  explicit MelExtractor(MelConfig cfg = {}) : cfg_(cfg) {
    require(cfg_.n_fft > 0 && (cfg_.n_fft & (cfg_.n_fft - 1)) == 0,
            "mel: n_fft must be a power of two");
    require(cfg_.hop >= 1 && cfg_.n_mels >= 1, "mel: bad config");
    require(cfg_.fmax <= static_cast<double>(cfg_.sample_rate) / 2.0,
            "mel: fmax above Nyquist");
    // periodic Hann window
    window_.resize(cfg_.n_fft);
    double wsum = 0.0;
    for (std::size_t i = 0; i < cfg_.n_fft; ++i) {
      window_[i] = 0.5 * (1.0 - std::cos(2.0 * detail::kPi *
                                         static_cast<double>(i) /
                                         static_cast<double>(cfg_.n_fft)));
      wsum += window_[i];
    }
    // full-scale reference: peak STFT magnitude of a unit sine is wsum / 2
    max_ref_ = wsum / 2.0;
    build_filterbank();
  }

  const MelConfig& config() const { return cfg_; }
  double hop_seconds() const {
    return static_cast<double>(cfg_.hop) / static_cast<double>(cfg_.sample_rate);
  }
  /// Center frequency (Hz) of a Mel bin.
  double bin_center_hz(std::size_t k) const { return centers_hz_[k]; }
  double max_reference() const { return max_ref_; }

  std::size_t frame_count(std::size_t n_samples) const {
    return 1 + n_samples / cfg_.hop;
  }

  Spectrogram operator()(const AudioClip& clip) const {
    require(clip.sample_rate == cfg_.sample_rate,
            "mel: clip sample rate does not match the frontend configuration");
    require(!clip.samples.empty(), "mel: empty clip");
    const std::size_t T = frame_count(clip.samples.size());
    const std::size_t half = cfg_.n_fft / 2;
    const std::size_t n_bins = cfg_.n_fft / 2 + 1;
    Spectrogram out;
    out.values = Tensor({T, cfg_.n_mels});
    out.hop_seconds = hop_seconds();
    out.n_bins = cfg_.n_mels;

    const double log_eps = std::log(cfg_.log_eps);
    const double denom = std::log(max_ref_ + cfg_.log_eps) - log_eps;
    std::vector<std::complex<double>> buf(cfg_.n_fft);
    std::vector<double> mag(n_bins);
    for (std::size_t t = 0; t < T; ++t) {
      const std::ptrdiff_t start =
          static_cast<std::ptrdiff_t>(t * cfg_.hop) -
          static_cast<std::ptrdiff_t>(half);
      for (std::size_t i = 0; i < cfg_.n_fft; ++i) {
        const std::size_t src = detail::reflect_index(
            start + static_cast<std::ptrdiff_t>(i), clip.samples.size());
        buf[i] = {clip.samples[src] * window_[i], 0.0};
      }
      detail::fft_radix2(buf);
      for (std::size_t k = 0; k < n_bins; ++k) mag[k] = std::abs(buf[k]);
      for (std::size_t m = 0; m < cfg_.n_mels; ++m) {
        double acc = 0.0;
        const auto& f = filters_[m];
        for (std::size_t j = 0; j < f.weights.size(); ++j)
          acc += f.weights[j] * mag[f.start + j];
        const double norm = (std::log(acc + cfg_.log_eps) - log_eps) / denom;
        out.values.at(t, m) = std::min(1.0, std::max(0.0, norm));
      }
    }
    return out;
  }

  /// Unnormalized log-Mel value for one magnitude accumulation; exposed for
  /// the monotonicity property test.
  double log_compress(double mel_energy) const {
    return std::log(mel_energy + cfg_.log_eps);
  }

 private:
  struct Filter {
    std::size_t start = 0;
    std::vector<double> weights;
  };

  void build_filterbank() {
    const std::size_t n_bins = cfg_.n_fft / 2 + 1;
    const double mel_lo = detail::hz_to_mel(cfg_.fmin);
    const double mel_hi = detail::hz_to_mel(cfg_.fmax);
    std::vector<double> edges(cfg_.n_mels + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
      edges[i] = detail::mel_to_hz(
          mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                       static_cast<double>(cfg_.n_mels + 1));
    centers_hz_.assign(edges.begin() + 1, edges.end() - 1);
    filters_.resize(cfg_.n_mels);
    const double bin_hz = static_cast<double>(cfg_.sample_rate) /
                          static_cast<double>(cfg_.n_fft);
    for (std::size_t m = 0; m < cfg_.n_mels; ++m) {
      const double f0 = edges[m], f1 = edges[m + 1], f2 = edges[m + 2];
      std::vector<double> w;
      std::size_t start = 0;
      bool started = false;
      for (std::size_t k = 0; k < n_bins; ++k) {
        const double f = bin_hz * static_cast<double>(k);
        double val = 0.0;
        if (f > f0 && f < f2)
          val = f <= f1 ? (f - f0) / (f1 - f0) : (f2 - f) / (f2 - f1);
        if (val > 0.0) {
          if (!started) {
            start = k;
            started = true;
          }
          w.push_back(val);
        } else if (started) {
          break;
        }
      }
      // very narrow filters can fall between FFT bins; keep the nearest bin
      // so no filter is identically zero
      if (w.empty()) {
        start = static_cast<std::size_t>(std::llround(f1 / bin_hz));
        w.push_back(1.0);
      }
      filters_[m] = Filter{start, std::move(w)};
    }
  }

  MelConfig cfg_;
  std::vector<double> window_;
  std::vector<Filter> filters_;
  std::vector<double> centers_hz_;
  double max_ref_ = 1.0;
};

/// One-shot helper with the paper's frontend settings.
inline Spectrogram mel_spectrogram(const AudioClip& clip,
                                   const MelConfig& cfg = {}) {
  return MelExtractor(cfg)(clip);
}

}  // namespace amt

#endif  // AMT_MEL_HPP
