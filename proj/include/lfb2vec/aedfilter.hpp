// lfb2vec/aedfilter.hpp

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

// Audio-event ingestion and the on-the-fly training filters: speech-filter,
// speech-crop and rand-crop, plus a heuristic annotator that stands in for a
// learned event classifier on synthetic data.

#ifndef LFB2VEC_AEDFILTER_HPP_
#define LFB2VEC_AEDFILTER_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "lfb2vec/common.hpp"
#include "lfb2vec/features.hpp"

namespace lfb2vec {
namespace aed {

// Frames per second of the 10 ms feature hop; crops work in these units.
inline constexpr int kFramesPerSecond = 100;

inline const std::array<std::string, 14>& event_class_names() {
  static const std::array<std::string, 14> names = {
      "alarm",    "bark",     "clapping", "crosstalk", "crowd",
      "crying",   "engine",   "explosion", "gunshot",  "laughter",
      "music",    "screaming", "siren",   "speech"};
  return names;
}

struct AudioEvent {
  std::string cls;  // one of event_class_names()
  double start_s = 0.0;
  double end_s = 0.0;
  double score = 1.0;
};

inline void validate_event(const AudioEvent& e, const std::string& where) {
  const auto& names = event_class_names();
  if (std::find(names.begin(), names.end(), e.cls) == names.end())
    throw DataError(where + ": unknown event class '" + e.cls + "'");
  if (!(e.start_s < e.end_s))
    throw DataError(where + ": event start " + std::to_string(e.start_s) +
                    " not before end " + std::to_string(e.end_s));
  if (e.score < 0.0 || e.score > 1.0)
    throw DataError(where + ": score " + std::to_string(e.score) +
                    " outside [0,1]");
}

struct FilterConfig {
  double speech_score_min = 0.5;
  double rand_crop_min_s = 5.0;  // eligibility threshold for rand-crop
  double rand_crop_len_s = 5.0;
  bool speech_filter = false;
  bool speech_crop = false;
  bool rand_crop = false;
};

// ---- event annotation files (JSONL, one record per utterance) -------------

inline void write_events(const std::map<std::string, std::vector<AudioEvent>>& by_utt,
                         const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write events file: " + path);
  for (const auto& [utt, events] : by_utt) {
    nlohmann::json rec;
    rec["utt_id"] = utt;
    rec["events"] = nlohmann::json::array();
    for (const AudioEvent& e : events)
      rec["events"].push_back({{"class", e.cls},
                               {"start_s", e.start_s},
                               {"end_s", e.end_s},
                               {"score", e.score}});
    out << rec.dump() << "\n";
  }
}

inline std::map<std::string, std::vector<AudioEvent>> load_events(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open events file: " + path);
  std::map<std::string, std::vector<AudioEvent>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": malformed JSON: " + e.what());
    }
    std::string where = path + ":" + std::to_string(line_no);
    std::string utt = rec.at("utt_id").get<std::string>();
    std::vector<AudioEvent> events;
    for (const auto& je : rec.at("events")) {
      AudioEvent e;
      e.cls = je.at("class").get<std::string>();
      e.start_s = je.at("start_s").get<double>();
      e.end_s = je.at("end_s").get<double>();
      e.score = je.at("score").get<double>();
      validate_event(e, where);
      events.push_back(e);
    }
    out[utt] = std::move(events);
  }
  return out;
}

// ---- the three filters -----------------------------------------------------

// keep iff some speech event reaches the score threshold
inline bool speech_filter(const std::vector<AudioEvent>& events,
                          const FilterConfig& cfg) {
  for (const AudioEvent& e : events)
    if (e.cls == "speech" && e.score >= cfg.speech_score_min) return true;
  return false;
}

// Bounding interval of all qualifying speech events, intersected with the
// segment. Callers must run speech_filter first; no qualifying event is a
// precondition violation.
inline std::pair<double, double> speech_crop(const std::vector<AudioEvent>& events,
                                             double seg_start_s, double seg_end_s,
                                             const FilterConfig& cfg) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const AudioEvent& e : events) {
    if (e.cls != "speech" || e.score < cfg.speech_score_min) continue;
    lo = std::min(lo, e.start_s);
    hi = std::max(hi, e.end_s);
  }
  if (!(lo < hi))
    throw DataError("speech_crop: no qualifying speech event (run speech_filter first)");
  return {std::max(lo, seg_start_s), std::min(hi, seg_end_s)};
}

// Identity below the eligibility threshold; otherwise a rand_crop_len_s
// window at a frame-aligned offset drawn uniformly.
inline std::pair<double, double> rand_crop(double seg_len_s, Rng& rng,
                                           const FilterConfig& cfg) {
  if (seg_len_s < cfg.rand_crop_min_s || seg_len_s <= cfg.rand_crop_len_s)
    return {0.0, seg_len_s};
  std::int64_t positions =
      std::llround((seg_len_s - cfg.rand_crop_len_s) * kFramesPerSecond) + 1;
  double start = static_cast<double>(rng.uniform_int(positions)) / kFramesPerSecond;
  return {start, start + cfg.rand_crop_len_s};
}

namespace detail {

inline std::int64_t crop_start_frame(double s) {
  return static_cast<std::int64_t>(std::floor(s * kFramesPerSecond + 1e-9));
}
inline std::int64_t crop_end_frame(double s) {
  return static_cast<std::int64_t>(std::ceil(s * kFramesPerSecond - 1e-9));
}

inline FeatureMatrix crop_frames(const FeatureMatrix& m, std::int64_t a,
                                 std::int64_t b) {
  a = std::clamp<std::int64_t>(a, 0, m.n_frames);
  b = std::clamp<std::int64_t>(b, a, m.n_frames);
  FeatureMatrix out(b - a, m.n_mels);
  std::copy(m.v.begin() + static_cast<std::ptrdiff_t>(a * m.n_mels),
            m.v.begin() + static_cast<std::ptrdiff_t>(b * m.n_mels),
            out.v.begin());
  return out;
}

}  // namespace detail

// Composition speech_filter -> speech_crop -> rand_crop over one segment's
// features; events are segment-relative. nullopt means the segment is
// dropped. Crops are in frame units: start rounded down, end rounded up.
inline std::optional<FeatureMatrix> apply_filters(
    const FeatureMatrix& features, const std::vector<AudioEvent>& events,
    const FilterConfig& cfg, Rng& rng) {
  if (cfg.speech_filter && !speech_filter(events, cfg)) return std::nullopt;

  FeatureMatrix cur = features;
  if (cfg.speech_crop && speech_filter(events, cfg)) {
    double seg_len = static_cast<double>(cur.n_frames) / kFramesPerSecond;
    auto [s, e] = speech_crop(events, 0.0, seg_len, cfg);
    cur = detail::crop_frames(cur, detail::crop_start_frame(s),
                              detail::crop_end_frame(e));
  }
  if (cfg.rand_crop) {
    double seg_len = static_cast<double>(cur.n_frames) / kFramesPerSecond;
    auto [s, e] = rand_crop(seg_len, rng, cfg);
    if (s > 0.0 || e < seg_len)
      cur = detail::crop_frames(cur, detail::crop_start_frame(s),
                                detail::crop_end_frame(e));
  }
  return cur;
}

// ---- heuristic annotator ---------------------------------------------------

// Stand-in for a learned event classifier, tuned for the synthetic corpus:
// frames are classed by total log-Mel energy (silence gate) and by the local
// temporal energy spread plus pooled spectral flatness, which separate
// modulated harmonic stacks (speech) from sustained chords (music) and from
// broadband bursts (noise -> no event). Only speech and music are emitted.
struct AnnotatorParams {
  double silence_margin = 7.0;    // ln units below the utterance peak
  double silence_abs = -9.0;      // absolute ln-energy gate
  double noise_flatness = 0.30;   // instantaneous flatness above this = noise
  double speech_mod_std = 0.45;   // ln-energy std above this = speech
  int context = 15;               // frames each side for pooled statistics
  int smooth = 9;                 // majority-filter width
  double min_event_s = 0.25;
};

inline std::vector<AudioEvent> heuristic_annotate(
    const FeatureMatrix& m, const AnnotatorParams& p = AnnotatorParams{}) {
  std::vector<AudioEvent> out;
  std::int64_t t_frames = m.n_frames, d = m.n_mels;
  if (t_frames == 0) return out;

  std::vector<std::vector<double>> lin(static_cast<std::size_t>(t_frames));
  std::vector<double> loge(static_cast<std::size_t>(t_frames));
  for (std::int64_t t = 0; t < t_frames; ++t) {
    auto& row = lin[static_cast<std::size_t>(t)];
    row.resize(static_cast<std::size_t>(d));
    double total = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      double e = std::exp(m.at(t, j));
      row[static_cast<std::size_t>(j)] = e;
      total += e;
    }
    loge[static_cast<std::size_t>(t)] = std::log(total + 1e-300);
  }
  double peak = *std::max_element(loge.begin(), loge.end());
  double silence_gate = std::min(peak - p.silence_margin, p.silence_abs);

  auto window = [&](std::int64_t t) {
    std::int64_t lo = std::max<std::int64_t>(0, t - p.context);
    std::int64_t hi = std::min<std::int64_t>(t_frames - 1, t + p.context);
    return std::pair<std::int64_t, std::int64_t>(lo, hi);
  };

  // 0 = none, 1 = speech, 2 = music
  std::vector<int> cls(static_cast<std::size_t>(t_frames), 0);
  std::vector<double> conf(static_cast<std::size_t>(t_frames), 0.0);
  for (std::int64_t t = 0; t < t_frames; ++t) {
    if (loge[static_cast<std::size_t>(t)] < silence_gate) continue;
    auto [lo, hi] = window(t);
    double n = static_cast<double>(hi - lo + 1);
    // instantaneous spectral flatness (geometric over arithmetic mean)
    double lg = 0.0, am = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      double e = lin[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)] + 1e-12;
      lg += std::log(e);
      am += e;
    }
    double flat = std::exp(lg / static_cast<double>(d)) / (am / static_cast<double>(d));
    if (flat > p.noise_flatness) continue;  // broadband burst, not emitted
    // temporal modulation: std of framewise log energy over the context
    double mean = 0.0;
    for (std::int64_t u = lo; u <= hi; ++u) mean += loge[static_cast<std::size_t>(u)];
    mean /= n;
    double var = 0.0;
    for (std::int64_t u = lo; u <= hi; ++u) {
      double dlt = loge[static_cast<std::size_t>(u)] - mean;
      var += dlt * dlt;
    }
    double mod = std::sqrt(var / n);
    bool speechish = mod > p.speech_mod_std;
    cls[static_cast<std::size_t>(t)] = speechish ? 1 : 2;
    double margin = std::fabs(mod - p.speech_mod_std);
    conf[static_cast<std::size_t>(t)] = 1.0 / (1.0 + std::exp(-12.0 * margin));
  }

  // majority smoothing
  std::vector<int> smooth = cls;
  std::int64_t half = p.smooth / 2;
  for (std::int64_t t = 0; t < t_frames; ++t) {
    std::array<int, 3> votes{0, 0, 0};
    std::int64_t lo = std::max<std::int64_t>(0, t - half);
    std::int64_t hi = std::min<std::int64_t>(t_frames - 1, t + half);
    for (std::int64_t u = lo; u <= hi; ++u)
      ++votes[static_cast<std::size_t>(cls[static_cast<std::size_t>(u)])];
    int best = 0;
    for (int c = 1; c < 3; ++c)
      if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)]) best = c;
    smooth[static_cast<std::size_t>(t)] = best;
  }

  std::int64_t t = 0;
  while (t < t_frames) {
    std::int64_t u = t;
    while (u < t_frames && smooth[static_cast<std::size_t>(u)] == smooth[static_cast<std::size_t>(t)]) ++u;
    int c = smooth[static_cast<std::size_t>(t)];
    double dur = static_cast<double>(u - t) / kFramesPerSecond;
    if (c != 0 && dur >= p.min_event_s) {
      AudioEvent e;
      e.cls = c == 1 ? "speech" : "music";
      e.start_s = static_cast<double>(t) / kFramesPerSecond;
      e.end_s = static_cast<double>(u) / kFramesPerSecond;
      double s = 0.0;
      int cnt = 0;
      for (std::int64_t w = t; w < u; ++w)
        if (cls[static_cast<std::size_t>(w)] == c) {
          s += conf[static_cast<std::size_t>(w)];
          ++cnt;
        }
      e.score = cnt ? s / cnt : 0.5;
      out.push_back(e);
    }
    t = u;
  }
  return out;
}

}  // namespace aed
}  // namespace lfb2vec

#endif  // LFB2VEC_AEDFILTER_HPP_
