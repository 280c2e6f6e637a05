// lfb2vec/wav.hpp

// Copyright 2026  lfb2vec authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef LFB2VEC_WAV_HPP_
#define LFB2VEC_WAV_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "lfb2vec/common.hpp"

namespace lfb2vec {

// Mono audio in [-1, 1].
struct PcmAudio {
  std::vector<double> samples;
  int rate_hz = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / rate_hz;
  }
};

namespace wav_detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace wav_detail

// Reads PCM 8/16/24-bit and 32-bit float RIFF/WAVE. Multi-channel input is
// averaged to mono.
inline PcmAudio read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError("not a RIFF/WAVE file: " + path);

  using wav_detail::read_u16;
  using wav_detail::read_u32;

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_pos = 0, data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    std::uint32_t chunk_len = read_u32(bytes.data() + pos + 4);
    if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0 && chunk_len >= 16) {
      format = read_u16(bytes.data() + pos + 8);
      channels = read_u16(bytes.data() + pos + 10);
      rate = read_u32(bytes.data() + pos + 12);
      bits = read_u16(bytes.data() + pos + 22);
    } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
      data_pos = pos + 8;
      data_len = std::min<std::size_t>(chunk_len, bytes.size() - data_pos);
    }
    pos += 8 + chunk_len + (chunk_len & 1);
  }
  if (rate == 0 || channels == 0 || data_pos == 0)
    throw DataError("missing fmt/data chunk in WAV file: " + path);
  bool float_fmt = format == 3;
  if (format != 1 && !float_fmt)
    throw DataError("unsupported WAV format tag " + std::to_string(format) +
                    " in " + path);
  if (!(bits == 8 || bits == 16 || bits == 24 || (float_fmt && bits == 32)))
    throw DataError("unsupported WAV bit depth " + std::to_string(bits) +
                    " in " + path);

  std::size_t bytes_per_sample = bits / 8;
  std::size_t n_frames = data_len / (bytes_per_sample * channels);
  PcmAudio out;
  out.rate_hz = static_cast<int>(rate);
  out.samples.resize(n_frames);
  const unsigned char* d = bytes.data() + data_pos;
  for (std::size_t f = 0; f < n_frames; ++f) {
    double acc = 0.0;
    for (std::uint16_t ch = 0; ch < channels; ++ch) {
      const unsigned char* s = d + (f * channels + ch) * bytes_per_sample;
      double x = 0.0;
      if (float_fmt) {
        float fv;
        std::memcpy(&fv, s, 4);
        x = fv;
      } else if (bits == 8) {
        x = (static_cast<int>(s[0]) - 128) / 128.0;
      } else if (bits == 16) {
        std::int16_t v = static_cast<std::int16_t>(s[0] | (s[1] << 8));
        x = v / 32768.0;
      } else {  // 24
        std::int32_t v = s[0] | (s[1] << 8) | (s[2] << 16);
        if (v & 0x800000) v |= static_cast<std::int32_t>(0xff000000);
        x = v / 8388608.0;
      }
      acc += x;
    }
    out.samples[f] = acc / channels;
  }
  return out;
}

// Writes mono 16-bit PCM. Samples are clipped to [-1, 1] and rounded half
// away from zero so output bytes are a pure function of the input.
inline void write_wav(const PcmAudio& audio, const std::string& path) {
  std::string body;
  body.reserve(44 + audio.samples.size() * 2);
  using wav_detail::put_u16;
  using wav_detail::put_u32;
  std::uint32_t data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  body += "RIFF";
  put_u32(body, 36 + data_bytes);
  body += "WAVEfmt ";
  put_u32(body, 16);
  put_u16(body, 1);  // PCM
  put_u16(body, 1);  // mono
  put_u32(body, static_cast<std::uint32_t>(audio.rate_hz));
  put_u32(body, static_cast<std::uint32_t>(audio.rate_hz) * 2);
  put_u16(body, 2);
  put_u16(body, 16);
  body += "data";
  put_u32(body, data_bytes);
  for (double x : audio.samples) {
    double c = std::clamp(x, -1.0, 1.0);
    long v = std::lround(c * 32767.0);
    put_u16(body, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write WAV file: " + path);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw DataError("short write on WAV file: " + path);
}

}  // namespace lfb2vec

#endif  // LFB2VEC_WAV_HPP_
