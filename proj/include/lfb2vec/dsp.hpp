// lfb2vec/dsp.hpp

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

// Signal-level preprocessing: band-limited resampling, energy VAD,
// silence-based segmentation with a 20 s cap, and 80-dim log-Mel extraction.

#ifndef LFB2VEC_DSP_HPP_
#define LFB2VEC_DSP_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lfb2vec/common.hpp"
#include "lfb2vec/features.hpp"
#include "lfb2vec/wav.hpp"

namespace lfb2vec {
namespace dsp {

inline constexpr double kPi = 3.14159265358979323846;

struct VadParams {
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  double energy_floor_db = 12.0;   // margin above the adaptive noise floor
  double min_silence_s = 1.0;
  int hangover_frames = 5;
  // Frames at or above this absolute level count as active regardless of the
  // adaptive floor, so constant loud signals are not misread as silence.
  double active_floor_dbfs = -40.0;
};

struct VadRegion {
  enum Kind { kSilence, kActive };
  double start_s = 0.0;
  double end_s = 0.0;
  Kind kind = kActive;
};

struct Segment {
  std::string utt_id;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct LogMelSpec {
  int n_mels = 80;
  double win_ms = 25.0;
  double hop_ms = 10.0;
  int n_fft = 512;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;
  double log_floor = 1e-10;
  int rate_hz = 16000;
  bool mean_normalize = false;  // per-utterance CMVN, off by default
};

// hz -> mel, 2595 * log10(1 + f/700) convention.
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// In-place iterative radix-2 complex FFT; n must be a power of two.
inline void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
  std::size_t n = re.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw NumericalError("fft: size " + std::to_string(n) + " not a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * kPi / static_cast<double>(len);
    double wr = std::cos(ang), wi = std::sin(ang);
    for (std::size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        double ur = re[i + k], ui = im[i + k];
        double vr = re[i + k + len / 2] * cr - im[i + k + len / 2] * ci;
        double vi = re[i + k + len / 2] * ci + im[i + k + len / 2] * cr;
        re[i + k] = ur + vr;
        im[i + k] = ui + vi;
        re[i + k + len / 2] = ur - vr;
        im[i + k + len / 2] = ui - vi;
        double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

// Band-limited sample-rate conversion with a Hann-windowed sinc kernel.
// Same-rate input is returned unchanged.
inline PcmAudio resample(const PcmAudio& in, int target_rate_hz) {
  if (in.rate_hz <= 0 || target_rate_hz <= 0)
    throw DataError("resample: non-positive rate");
  for (double x : in.samples)
    if (!std::isfinite(x)) throw DataError("resample: non-finite sample");
  if (in.rate_hz == target_rate_hz) return in;

  PcmAudio out;
  out.rate_hz = target_rate_hz;
  if (in.samples.empty()) return out;

  double ratio = static_cast<double>(target_rate_hz) / in.rate_hz;
  std::int64_t n_out = std::llround(static_cast<double>(in.samples.size()) * ratio);
  out.samples.resize(static_cast<std::size_t>(n_out));

  const double rolloff = 0.945;
  double fc = 0.5 * std::min(1.0, ratio) * rolloff;  // cycles per input sample
  double half_width = 32.0 / std::min(1.0, ratio);
  std::int64_t n_in = static_cast<std::int64_t>(in.samples.size());
  for (std::int64_t n = 0; n < n_out; ++n) {
    double center = static_cast<double>(n) / ratio;
    std::int64_t k0 = static_cast<std::int64_t>(std::ceil(center - half_width));
    std::int64_t k1 = static_cast<std::int64_t>(std::floor(center + half_width));
    double acc = 0.0;
    for (std::int64_t k = std::max<std::int64_t>(0, k0);
         k <= std::min(n_in - 1, k1); ++k) {
      double t = static_cast<double>(k) - center;
      double sinc = t == 0.0 ? 1.0 : std::sin(2.0 * kPi * fc * t) / (2.0 * kPi * fc * t);
      double win = 0.5 + 0.5 * std::cos(kPi * t / half_width);
      acc += in.samples[static_cast<std::size_t>(k)] * 2.0 * fc * sinc * win;
    }
    out.samples[static_cast<std::size_t>(n)] = acc;
  }
  return out;
}

namespace detail {

// Per-frame mean power in dBFS over win/hop framing; frame t covers samples
// [t*hop, t*hop + win) clipped to the signal.
inline std::vector<double> frame_energies_db(const PcmAudio& audio, double win_ms,
                                             double hop_ms) {
  std::int64_t n = static_cast<std::int64_t>(audio.samples.size());
  std::int64_t win = std::llround(win_ms * 1e-3 * audio.rate_hz);
  std::int64_t hop = std::llround(hop_ms * 1e-3 * audio.rate_hz);
  if (win <= 0 || hop <= 0) throw DataError("bad frame/hop length");
  std::vector<double> out;
  for (std::int64_t start = 0; start < n; start += hop) {
    std::int64_t stop = std::min(n, start + win);
    double e = 0.0;
    for (std::int64_t i = start; i < stop; ++i) {
      double x = audio.samples[static_cast<std::size_t>(i)];
      e += x * x;
    }
    e /= static_cast<double>(stop - start);
    out.push_back(10.0 * std::log10(e + 1e-20));
  }
  return out;
}

}  // namespace detail

// Energy VAD against an adaptive noise floor (10th percentile frame energy)
// with hangover smoothing. Regions tile [0, duration]; every reported silence
// has length >= min_silence_s.
inline std::vector<VadRegion> vad(const PcmAudio& audio, const VadParams& p) {
  if (audio.samples.empty()) throw DataError("vad: empty audio");
  if (p.frame_ms < p.hop_ms) throw DataError("vad: frame_ms < hop_ms");
  if (p.min_silence_s <= 0.0) throw DataError("vad: min_silence_s <= 0");

  std::vector<double> e_db = detail::frame_energies_db(audio, p.frame_ms, p.hop_ms);
  std::int64_t n = static_cast<std::int64_t>(e_db.size());
  std::vector<double> sorted = e_db;
  std::sort(sorted.begin(), sorted.end());
  double noise_floor = sorted[static_cast<std::size_t>(
      (n - 1) / 10)];  // 10th percentile
  double threshold = std::min(noise_floor + p.energy_floor_db, p.active_floor_dbfs);

  std::vector<std::uint8_t> active(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    active[static_cast<std::size_t>(i)] = e_db[static_cast<std::size_t>(i)] >= threshold;
  // hangover: keep frames active for a grace window after speech
  std::int64_t last_active = -1;
  for (std::int64_t i = 0; i < n; ++i) {
    if (active[static_cast<std::size_t>(i)])
      last_active = i;
    else if (last_active >= 0 && i - last_active <= p.hangover_frames)
      active[static_cast<std::size_t>(i)] = 1;
  }

  // silence runs shorter than min_silence_s are folded into active
  double hop_s = p.hop_ms * 1e-3;
  double duration = audio.duration_s();
  std::vector<VadRegion> regions;
  std::int64_t i = 0;
  while (i < n) {
    std::int64_t j = i;
    while (j < n && active[static_cast<std::size_t>(j)] == active[static_cast<std::size_t>(i)]) ++j;
    VadRegion r;
    r.start_s = static_cast<double>(i) * hop_s;
    r.end_s = j == n ? duration : static_cast<double>(j) * hop_s;
    bool silent = !active[static_cast<std::size_t>(i)];
    if (silent && r.end_s - r.start_s < p.min_silence_s) silent = false;
    r.kind = silent ? VadRegion::kSilence : VadRegion::kActive;
    if (!regions.empty() && regions.back().kind == r.kind)
      regions.back().end_s = r.end_s;
    else
      regions.push_back(r);
    i = j;
  }
  return regions;
}

// Excises silence regions and force-splits active spans longer than
// max_len_s. Each split lands on the lowest-energy interior frame boundary
// (ties -> earliest) inside the window that still allows the remainder to be
// covered with ceil(L/max) parts.
inline std::vector<Segment> segment(const PcmAudio& audio,
                                    const std::vector<VadRegion>& regions,
                                    double max_len_s = 20.0,
                                    const std::string& utt_id = "") {
  const double hop_s = 0.01;
  std::vector<double> energy = detail::frame_energies_db(audio, 25.0, 10.0);
  std::vector<Segment> out;

  auto split_span = [&](double a, double b) {
    while (b - a > max_len_s + 1e-9) {
      double len = b - a;
      std::int64_t parts = static_cast<std::int64_t>(std::ceil(len / max_len_s - 1e-12));
      double lo = a + (len - max_len_s * static_cast<double>(parts - 1));
      double hi = a + max_len_s;
      // lowest-energy frame boundary in [lo, hi], strictly inside the span
      std::int64_t k_lo = static_cast<std::int64_t>(std::ceil(lo / hop_s - 1e-9));
      std::int64_t k_hi = static_cast<std::int64_t>(std::floor(hi / hop_s + 1e-9));
      double best_t = hi;
      double best_e = std::numeric_limits<double>::infinity();
      for (std::int64_t k = k_lo; k <= k_hi; ++k) {
        double t = static_cast<double>(k) * hop_s;
        if (t <= a + 1e-9 || t >= b - 1e-9) continue;
        if (k < 0 || k >= static_cast<std::int64_t>(energy.size())) continue;
        double e = energy[static_cast<std::size_t>(k)];
        if (e < best_e) {
          best_e = e;
          best_t = t;
        }
      }
      out.push_back(Segment{utt_id, a, best_t});
      a = best_t;
    }
    out.push_back(Segment{utt_id, a, b});
  };

  double span_start = -1.0, span_end = -1.0;
  for (const VadRegion& r : regions) {
    if (r.kind == VadRegion::kActive) {
      if (span_start < 0.0)
        span_start = r.start_s;
      span_end = r.end_s;
    } else {
      if (span_start >= 0.0) split_span(span_start, span_end);
      span_start = span_end = -1.0;
    }
  }
  if (span_start >= 0.0) split_span(span_start, span_end);
  return out;
}

namespace detail {

struct MelBank {
  // weights[m] over one-sided FFT bins, plus the filter center frequencies
  std::vector<std::vector<double>> weights;
  std::vector<double> center_hz;
};

inline MelBank build_mel_bank(const LogMelSpec& spec) {
  if (spec.fmax_hz > spec.rate_hz / 2.0 + 1e-9)
    throw DataError("logmel: fmax above Nyquist");
  int n_bins = spec.n_fft / 2 + 1;
  double mel_lo = hz_to_mel(spec.fmin_hz);
  double mel_hi = hz_to_mel(spec.fmax_hz);
  std::vector<double> edges(static_cast<std::size_t>(spec.n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(spec.n_mels + 1));
  MelBank bank;
  bank.weights.assign(static_cast<std::size_t>(spec.n_mels),
                      std::vector<double>(static_cast<std::size_t>(n_bins), 0.0));
  bank.center_hz.resize(static_cast<std::size_t>(spec.n_mels));
  double bin_hz = static_cast<double>(spec.rate_hz) / spec.n_fft;
  for (int m = 0; m < spec.n_mels; ++m) {
    double left = edges[static_cast<std::size_t>(m)];
    double center = edges[static_cast<std::size_t>(m) + 1];
    double right = edges[static_cast<std::size_t>(m) + 2];
    bank.center_hz[static_cast<std::size_t>(m)] = center;
    double area_norm = 2.0 / (right - left);  // triangle integrates to 1
    for (int k = 0; k < n_bins; ++k) {
      double f = k * bin_hz;
      double w = 0.0;
      if (f >= left && f <= center && center > left)
        w = (f - left) / (center - left);
      else if (f > center && f <= right && right > center)
        w = (right - f) / (right - center);
      bank.weights[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)] = w * area_norm;
    }
  }
  return bank;
}

}  // namespace detail

// Mel filter center frequencies for a spec; exposed so tests can locate the
// expected peak bin for a pure tone.
inline std::vector<double> mel_center_frequencies(const LogMelSpec& spec) {
  return detail::build_mel_bank(spec).center_hz;
}

// 80-dim log-Mel features: Hann window, zero-padded FFT, area-normalized
// triangular filters, natural log with an absolute floor. Inputs shorter
// than one window yield an empty (0 x n_mels) matrix.
inline FeatureMatrix logmel(const PcmAudio& audio, const LogMelSpec& spec) {
  if (audio.rate_hz != spec.rate_hz)
    throw DataError("logmel: rate " + std::to_string(audio.rate_hz) +
                    " != expected " + std::to_string(spec.rate_hz) +
                    " (resample first)");
  std::int64_t win = std::llround(spec.win_ms * 1e-3 * spec.rate_hz);
  std::int64_t hop = std::llround(spec.hop_ms * 1e-3 * spec.rate_hz);
  if (win > spec.n_fft) throw DataError("logmel: n_fft smaller than window");
  std::int64_t n = static_cast<std::int64_t>(audio.samples.size());
  std::int64_t t_frames = n >= win ? (n - win) / hop + 1 : 0;
  FeatureMatrix out(t_frames, spec.n_mels);
  if (t_frames == 0) return out;

  detail::MelBank bank = detail::build_mel_bank(spec);
  std::vector<double> hann(static_cast<std::size_t>(win));
  for (std::int64_t i = 0; i < win; ++i)
    hann[static_cast<std::size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(win));

  int n_bins = spec.n_fft / 2 + 1;
  std::vector<double> re(static_cast<std::size_t>(spec.n_fft));
  std::vector<double> im(static_cast<std::size_t>(spec.n_fft));
  std::vector<double> power(static_cast<std::size_t>(n_bins));
  for (std::int64_t t = 0; t < t_frames; ++t) {
    std::fill(re.begin(), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    const double* src = audio.samples.data() + t * hop;
    for (std::int64_t i = 0; i < win; ++i)
      re[static_cast<std::size_t>(i)] = src[i] * hann[static_cast<std::size_t>(i)];
    fft_radix2(re, im);
    for (int k = 0; k < n_bins; ++k)
      power[static_cast<std::size_t>(k)] =
          re[static_cast<std::size_t>(k)] * re[static_cast<std::size_t>(k)] +
          im[static_cast<std::size_t>(k)] * im[static_cast<std::size_t>(k)];
    for (int m = 0; m < spec.n_mels; ++m) {
      const std::vector<double>& w = bank.weights[static_cast<std::size_t>(m)];
      double e = 0.0;
      for (int k = 0; k < n_bins; ++k) e += w[static_cast<std::size_t>(k)] * power[static_cast<std::size_t>(k)];
      out.at(t, m) = std::log(e + spec.log_floor);
    }
  }

  if (spec.mean_normalize && t_frames > 0) {
    for (int m = 0; m < spec.n_mels; ++m) {
      double mean = 0.0;
      for (std::int64_t t = 0; t < t_frames; ++t) mean += out.at(t, m);
      mean /= static_cast<double>(t_frames);
      for (std::int64_t t = 0; t < t_frames; ++t) out.at(t, m) -= mean;
    }
  }
  return out;
}

}  // namespace dsp
}  // namespace lfb2vec

#endif  // LFB2VEC_DSP_HPP_
