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

#ifndef AMT_AUDIO_HPP
#define AMT_AUDIO_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "amt/tensor.hpp"

namespace amt {

constexpr std::size_t kSampleRate = 16000;

/// Mono audio. After ingestion via load_audio the rate is always 16 kHz.
struct AudioClip {
  std::vector<double> samples;  // amplitudes in [-1, 1]
  std::size_t sample_rate = kSampleRate;

  double duration() const {
    return static_cast<double>(samples.size()) /
           static_cast<double>(sample_rate);
  }
};

// ---------------------------------------------------------------------------
// Resampling: windowed-sinc interpolation with a Blackman window
// ---------------------------------------------------------------------------

inline std::vector<double> resample(const std::vector<double>& x,
                                    std::size_t src_rate,
                                    std::size_t dst_rate) {
  if (src_rate == dst_rate) return x;
  require(src_rate > 0 && dst_rate > 0, "resample: zero rate");
  const double ratio =
      static_cast<double>(dst_rate) / static_cast<double>(src_rate);
  const std::size_t n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(x.size()) * ratio));
  const double fc = std::min(1.0, ratio);  // relative to source Nyquist
  const double half_width = 32.0 / fc;
  std::vector<double> out(n_out, 0.0);
  const auto n_in = static_cast<std::ptrdiff_t>(x.size());
  for (std::size_t i = 0; i < n_out; ++i) {
    const double center = static_cast<double>(i) / ratio;
    const auto lo = static_cast<std::ptrdiff_t>(
        std::ceil(center - half_width));
    const auto hi =
        static_cast<std::ptrdiff_t>(std::floor(center + half_width));
    double acc = 0.0;
    for (std::ptrdiff_t n = std::max<std::ptrdiff_t>(lo, 0);
         n <= std::min(hi, n_in - 1); ++n) {
      const double t = (static_cast<double>(n) - center) * fc;
      double sinc = 1.0;
      if (t != 0.0) {
        const double pt = 3.14159265358979323846 * t;
        sinc = std::sin(pt) / pt;
      }
      const double u = (static_cast<double>(n) - center) / half_width;
      const double w =
          0.42 + 0.5 * std::cos(3.14159265358979323846 * u) +
          0.08 * std::cos(2.0 * 3.14159265358979323846 * u);
      acc += x[static_cast<std::size_t>(n)] * fc * sinc * w;
    }
    out[i] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// PCM WAV reading (8/16/24-bit integer and 32-bit float) and 16-bit writing
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t rd_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t rd_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] |
                                    (static_cast<std::uint16_t>(p[1]) << 8));
}

}  // namespace detail

struct WavData {
  std::vector<std::vector<double>> channels;
  std::size_t sample_rate = 0;
};

inline WavData load_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open WAV file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw io_error("not a RIFF/WAVE file: " + path);

  std::size_t pos = 12;
  int format = -1, channels = 0, bits = 0;
  std::size_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t chunk_len = detail::rd_u32le(hdr + 4);
    const unsigned char* body = hdr + 8;
    if (pos + 8 + chunk_len > bytes.size())
      throw io_error("truncated WAV chunk in " + path);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw io_error("malformed fmt chunk in " + path);
      format = detail::rd_u16le(body);
      channels = detail::rd_u16le(body + 2);
      rate = detail::rd_u32le(body + 4);
      bits = detail::rd_u16le(body + 14);
      if (format == 0xFFFE && chunk_len >= 40)
        format = detail::rd_u16le(body + 24);  // WAVE_FORMAT_EXTENSIBLE
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = body;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);
  }
  if (format < 0 || !data) throw io_error("missing fmt/data chunk: " + path);
  if (channels < 1 || rate == 0)
    throw io_error("invalid WAV format fields: " + path);
  if (format != 1 && format != 3)
    throw io_error("unsupported WAV encoding (PCM or float required): " + path);
  if (format == 1 && bits != 8 && bits != 16 && bits != 24)
    throw io_error("unsupported PCM bit depth: " + path);
  if (format == 3 && bits != 32)
    throw io_error("unsupported float bit depth: " + path);

  const std::size_t bytes_per = static_cast<std::size_t>(bits) / 8;
  const std::size_t frame_size = bytes_per * static_cast<std::size_t>(channels);
  const std::size_t n_frames = data_len / frame_size;
  if (n_frames == 0) throw validation_error("zero-length audio: " + path);

  WavData out;
  out.sample_rate = rate;
  out.channels.assign(static_cast<std::size_t>(channels),
                      std::vector<double>(n_frames));
  for (std::size_t f = 0; f < n_frames; ++f) {
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p =
          data + f * frame_size + static_cast<std::size_t>(c) * bytes_per;
      double v = 0.0;
      if (format == 3) {
        float fv;
        std::memcpy(&fv, p, 4);
        v = fv;
      } else if (bits == 8) {
        v = (static_cast<int>(p[0]) - 128) / 128.0;
      } else if (bits == 16) {
        const auto s = static_cast<std::int16_t>(detail::rd_u16le(p));
        v = s / 32768.0;
      } else {  // 24-bit
        std::int32_t s = static_cast<std::int32_t>(
            p[0] | (static_cast<std::uint32_t>(p[1]) << 8) |
            (static_cast<std::uint32_t>(p[2]) << 16));
        if (s & 0x800000) s |= static_cast<std::int32_t>(0xFF000000);
        v = s / 8388608.0;
      }
      out.channels[static_cast<std::size_t>(c)][f] = v;
    }
  }
  return out;
}

/// Reads a WAV file, averages to mono, and resamples to 16 kHz.
inline AudioClip load_audio(const std::string& path) {
  WavData wav = load_wav(path);
  std::vector<double> mono(wav.channels[0].size(), 0.0);
  const double inv = 1.0 / static_cast<double>(wav.channels.size());
  for (const auto& ch : wav.channels)
    for (std::size_t i = 0; i < mono.size(); ++i) mono[i] += ch[i] * inv;
  AudioClip clip;
  clip.sample_rate = kSampleRate;
  clip.samples = resample(mono, wav.sample_rate, kSampleRate);
  if (clip.samples.empty()) throw validation_error("zero-length audio: " + path);
  return clip;
}

inline void save_wav(const std::string& path, const AudioClip& clip) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot write WAV file: " + path);
  const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
  const std::uint32_t data_len = n * 2;
  auto w32 = [&](std::uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); };
  auto w16 = [&](std::uint16_t v) { os.write(reinterpret_cast<char*>(&v), 2); };
  os.write("RIFF", 4);
  w32(36 + data_len);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  w32(16);
  w16(1);  // PCM
  w16(1);  // mono
  w32(static_cast<std::uint32_t>(clip.sample_rate));
  w32(static_cast<std::uint32_t>(clip.sample_rate * 2));
  w16(2);
  w16(16);
  os.write("data", 4);
  w32(data_len);
  for (std::size_t i = 0; i < n; ++i) {
    double v = std::max(-1.0, std::min(1.0, clip.samples[i]));
    const auto s = static_cast<std::int16_t>(std::lround(v * 32767.0));
    os.write(reinterpret_cast<const char*>(&s), 2);
  }
  if (!os) throw io_error("write failed: " + path);
}

}  // namespace amt

#endif  // AMT_AUDIO_HPP
