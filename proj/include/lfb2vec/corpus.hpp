// lfb2vec/corpus.hpp

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

// Manifests, synthetic corpus generation and frame-label persistence. Paths
// inside a manifest are relative to the manifest file so corpus trees can be
// moved or compared byte-for-byte.

#ifndef LFB2VEC_CORPUS_HPP_
#define LFB2VEC_CORPUS_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "lfb2vec/aedfilter.hpp"
#include "lfb2vec/common.hpp"
#include "lfb2vec/wav.hpp"

namespace lfb2vec {
namespace corpus {

struct UtteranceEntry {
  std::string id;
  std::string path;  // relative to the manifest's directory
  double duration_s = 0.0;
  std::string lang = "ro";
  std::string split = "train";  // train | dev | test
};

inline void write_manifest(const std::vector<UtteranceEntry>& entries,
                           const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest: " + path);
  for (const UtteranceEntry& e : entries) {
    nlohmann::json rec{{"id", e.id},
                       {"path", e.path},
                       {"duration_s", e.duration_s},
                       {"lang", e.lang},
                       {"split", e.split}};
    out << rec.dump() << "\n";
  }
}

inline std::vector<UtteranceEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  std::vector<UtteranceEntry> entries;
  std::set<std::string> seen;
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
                      ": malformed manifest line: " + e.what());
    }
    UtteranceEntry e;
    try {
      e.id = rec.at("id").get<std::string>();
      e.path = rec.at("path").get<std::string>();
      e.duration_s = rec.at("duration_s").get<double>();
      e.lang = rec.at("lang").get<std::string>();
      e.split = rec.at("split").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": missing or mistyped field: " + ex.what());
    }
    if (e.duration_s < 0.0)
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": negative duration for id '" + e.id + "'");
    if (e.split != "train" && e.split != "dev" && e.split != "test")
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": bad split '" + e.split + "' for id '" + e.id + "'");
    if (!seen.insert(e.id).second)
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": duplicate id '" + e.id + "'");
    entries.push_back(std::move(e));
  }
  return entries;
}

inline std::string resolve_path(const std::string& manifest_path,
                                const std::string& entry_path) {
  std::filesystem::path p(entry_path);
  if (p.is_absolute()) return entry_path;
  return (std::filesystem::path(manifest_path).parent_path() / p).string();
}

// ---- frame-label files (JSONL {utt_id, labels:[u32 per frame]}) -----------

inline void write_labels(const std::map<std::string, std::vector<int>>& by_utt,
                         const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write labels file: " + path);
  for (const auto& [utt, labels] : by_utt) {
    nlohmann::json rec{{"utt_id", utt}, {"labels", labels}};
    out << rec.dump() << "\n";
  }
}

inline std::map<std::string, std::vector<int>> load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open labels file: " + path);
  std::map<std::string, std::vector<int>> out;
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
                      ": malformed labels line: " + e.what());
    }
    out[rec.at("utt_id").get<std::string>()] =
        rec.at("labels").get<std::vector<int>>();
  }
  return out;
}

// ---- synthetic corpus ------------------------------------------------------

struct SyntheticSpec {
  int n_utterances = 8;
  double min_duration_s = 2.0;
  double max_duration_s = 6.0;
  // class mix over region kinds; must sum to 1
  double mix_speech = 0.6;
  double mix_silence = 0.2;
  double mix_music = 0.15;
  double mix_noise = 0.05;
  int n_senone_classes = 0;  // 0 = unlabeled; >= 2 emits frame labels
  std::uint64_t seed = 1;
  std::string lang = "ro";
  double split_train = 1.0;
  double split_dev = 0.0;
  double split_test = 0.0;
};

struct Region {
  enum Kind { kSpeech, kSilence, kMusic, kNoise };
  Kind kind = kSilence;
  double start_s = 0.0;
  double end_s = 0.0;
  int template_id = 0;
};

struct SynthUtterance {
  std::string id;
  PcmAudio audio;
  std::vector<Region> regions;  // partition of [0, duration], no gaps/overlaps
  std::vector<int> labels;      // per log-Mel frame; empty when unlabeled
};

namespace detail {

inline constexpr int kSynthRate = 16000;
inline constexpr int kMusicTemplates = 4;
// Frame arithmetic matching the default log-Mel layout (25 ms / 10 ms @16k).
inline constexpr std::int64_t kWinSamples = 400;
inline constexpr std::int64_t kHopSamples = 160;

inline std::int64_t logmel_frames(std::int64_t n_samples) {
  return n_samples >= kWinSamples ? (n_samples - kWinSamples) / kHopSamples + 1 : 0;
}

// Speech-like source: a harmonic stack with a template-specific fundamental
// and formant, vibrato, amplitude modulation and a slow utterance-level pitch
// contour (rising then falling), which is what the annotator's modulation
// statistic and the contrastive task key on.
struct SpeechTemplate {
  double f0;
  double formant_hz;
  double tilt;
};

inline SpeechTemplate speech_template(int id) {
  SpeechTemplate t;
  t.f0 = 120.0 * std::pow(2.0, static_cast<double>(id) / 5.0);
  t.formant_hz = 620.0 + 240.0 * static_cast<double>(id);
  t.tilt = 0.75 + 0.1 * static_cast<double>(id % 3);
  return t;
}

inline void render_speech(std::vector<double>& out, std::int64_t start,
                          std::int64_t len, int template_id, double utt_len_s,
                          Rng& rng) {
  SpeechTemplate tpl = speech_template(template_id);
  int n_harm = static_cast<int>(5000.0 / tpl.f0);
  std::vector<double> amp(static_cast<std::size_t>(n_harm));
  double norm = 0.0;
  for (int h = 1; h <= n_harm; ++h) {
    double f = tpl.f0 * h;
    double a = std::pow(static_cast<double>(h), -tpl.tilt);
    double fb = (f - tpl.formant_hz) / 260.0;
    a *= 1.0 + 2.5 * std::exp(-fb * fb);
    amp[static_cast<std::size_t>(h - 1)] = a;
    norm += a;
  }
  for (double& a : amp) a *= 0.30 / norm;

  double am_rate = rng.uniform(3.5, 7.0);
  double am_phase = rng.uniform(0.0, 6.283185307179586);
  double vib_phase = rng.uniform(0.0, 6.283185307179586);
  std::vector<double> phase(static_cast<std::size_t>(n_harm), 0.0);
  for (std::size_t h = 0; h < phase.size(); ++h) phase[h] = rng.uniform(0.0, 6.283185307179586);

  for (std::int64_t i = 0; i < len; ++i) {
    double t_abs = static_cast<double>(start + i) / kSynthRate;
    double u = utt_len_s > 0.0 ? t_abs / utt_len_s : 0.0;
    // triangular contour: mirror-symmetric about the utterance midpoint
    double contour = 1.0 + 0.12 * (1.0 - 2.0 * std::fabs(2.0 * u - 1.0));
    double vib = 1.0 + 0.025 * std::sin(2.0 * 3.14159265358979323846 * 5.3 * t_abs + vib_phase);
    double f0 = tpl.f0 * contour * vib;
    double am = 1.0 + 0.45 * std::sin(2.0 * 3.14159265358979323846 * am_rate * t_abs + am_phase);
    double s = 0.0;
    for (int h = 1; h <= n_harm; ++h) {
      std::size_t hi = static_cast<std::size_t>(h - 1);
      phase[hi] += 2.0 * 3.14159265358979323846 * f0 * h / kSynthRate;
      if (f0 * h < 7600.0) s += amp[hi] * std::sin(phase[hi]);
    }
    out[static_cast<std::size_t>(start + i)] = am * s;
  }
}

inline void render_music(std::vector<double>& out, std::int64_t start,
                         std::int64_t len, int template_id, Rng& rng) {
  static const double roots[kMusicTemplates] = {196.0, 233.1, 261.6, 311.1};
  double root = roots[template_id % kMusicTemplates];
  const double ratios[3] = {1.0, 1.25, 1.5};
  double phases[3] = {rng.uniform(0.0, 6.28), rng.uniform(0.0, 6.28),
                      rng.uniform(0.0, 6.28)};
  for (std::int64_t i = 0; i < len; ++i) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
      // sustained chord: fixed pitches, 3 gentle harmonics each
      for (int h = 1; h <= 3; ++h) {
        double f = root * ratios[k] * h;
        s += std::pow(h, -1.0) / 9.0 *
             std::sin(2.0 * 3.14159265358979323846 * f * static_cast<double>(start + i) /
                          kSynthRate +
                      phases[k] * h);
      }
    }
    out[static_cast<std::size_t>(start + i)] = 0.25 * s;
  }
}

inline void render_noise(std::vector<double>& out, std::int64_t start,
                         std::int64_t len, double amp, Rng& rng) {
  for (std::int64_t i = 0; i < len; ++i)
    out[static_cast<std::size_t>(start + i)] = amp * rng.uniform(-1.0, 1.0);
}

inline void fade_edges(std::vector<double>& out, std::int64_t start,
                       std::int64_t len) {
  std::int64_t ramp = std::min<std::int64_t>(len / 2, kSynthRate / 200);  // 5 ms
  for (std::int64_t i = 0; i < ramp; ++i) {
    double g = static_cast<double>(i + 1) / static_cast<double>(ramp + 1);
    out[static_cast<std::size_t>(start + i)] *= g;
    out[static_cast<std::size_t>(start + len - 1 - i)] *= g;
  }
}

}  // namespace detail

inline int synth_speech_templates(const SyntheticSpec& spec) {
  return spec.n_senone_classes >= 2 ? spec.n_senone_classes - 1 : 6;
}

// Draws a region plan for one utterance: kinds i.i.d. from the class mix,
// durations uniform on [1.2, 2.4] s for every kind (so the expected duration
// share of a kind equals its mix fraction), last region truncated to land
// exactly on the target duration.
inline std::vector<Region> plan_regions(double target_dur_s, const SyntheticSpec& spec,
                                        Rng& rng) {
  double sum = spec.mix_speech + spec.mix_silence + spec.mix_music + spec.mix_noise;
  if (std::fabs(sum - 1.0) > 1e-9)
    throw DataError("synthetic class mix sums to " + std::to_string(sum) +
                    ", expected 1");
  int n_templates = synth_speech_templates(spec);
  std::vector<Region> plan;
  double t = 0.0;
  while (t < target_dur_s - 1e-12) {
    double u = rng.uniform();
    Region r;
    if (u < spec.mix_speech)
      r.kind = Region::kSpeech;
    else if (u < spec.mix_speech + spec.mix_silence)
      r.kind = Region::kSilence;
    else if (u < spec.mix_speech + spec.mix_silence + spec.mix_music)
      r.kind = Region::kMusic;
    else
      r.kind = Region::kNoise;
    double dur = rng.uniform(1.2, 2.4);
    r.template_id = r.kind == Region::kSpeech
                        ? static_cast<int>(rng.uniform_int(n_templates))
                        : static_cast<int>(rng.uniform_int(detail::kMusicTemplates));
    r.start_s = t;
    r.end_s = std::min(t + dur, target_dur_s);
    t = r.end_s;
    plan.push_back(r);
  }
  return plan;
}

// Renders one utterance from a region plan. Deterministic given (plan, seed).
inline SynthUtterance render_utterance(const std::string& id,
                                       const std::vector<Region>& plan,
                                       std::uint64_t seed,
                                       int n_senone_classes) {
  SynthUtterance u;
  u.id = id;
  u.regions = plan;
  u.audio.rate_hz = detail::kSynthRate;
  if (plan.empty()) throw DataError("render_utterance: empty region plan");
  double utt_len_s = plan.back().end_s;
  std::int64_t n = std::llround(utt_len_s * detail::kSynthRate);
  u.audio.samples.assign(static_cast<std::size_t>(n), 0.0);

  Rng rng(Rng::derive(seed, fnv1a("render"), fnv1a(id)));
  for (const Region& r : plan) {
    std::int64_t a = std::llround(r.start_s * detail::kSynthRate);
    std::int64_t b = std::llround(r.end_s * detail::kSynthRate);
    b = std::min(b, n);
    if (b <= a) continue;
    switch (r.kind) {
      case Region::kSpeech:
        detail::render_speech(u.audio.samples, a, b - a, r.template_id, utt_len_s, rng);
        break;
      case Region::kMusic:
        detail::render_music(u.audio.samples, a, b - a, r.template_id, rng);
        break;
      case Region::kNoise:
        detail::render_noise(u.audio.samples, a, b - a, 0.12, rng);
        break;
      case Region::kSilence:
        detail::render_noise(u.audio.samples, a, b - a, 1e-4, rng);
        break;
    }
    if (r.kind != Region::kSilence) detail::fade_edges(u.audio.samples, a, b - a);
  }

  if (n_senone_classes >= 2) {
    std::int64_t t_frames = detail::logmel_frames(n);
    u.labels.assign(static_cast<std::size_t>(t_frames), 0);
    for (std::int64_t t = 0; t < t_frames; ++t) {
      double center = (static_cast<double>(t) * detail::kHopSamples +
                       static_cast<double>(detail::kWinSamples) / 2.0) /
                      detail::kSynthRate;
      for (const Region& r : plan)
        if (center >= r.start_s && center < r.end_s) {
          // senone 0 = background; 1..n-1 = speech spectral templates
          if (r.kind == Region::kSpeech)
            u.labels[static_cast<std::size_t>(t)] =
                1 + r.template_id % (n_senone_classes - 1);
          break;
        }
    }
  }
  return u;
}

// Ground-truth events: adjacent same-kind regions merged; only speech and
// music are events (silence and noise are background).
inline std::vector<aed::AudioEvent> regions_to_events(const std::vector<Region>& regions) {
  std::vector<aed::AudioEvent> events;
  for (const Region& r : regions) {
    const char* cls = nullptr;
    if (r.kind == Region::kSpeech) cls = "speech";
    if (r.kind == Region::kMusic) cls = "music";
    if (!cls) continue;
    if (!events.empty() && events.back().cls == cls &&
        std::fabs(events.back().end_s - r.start_s) < 1e-9) {
      events.back().end_s = r.end_s;
    } else {
      events.push_back(aed::AudioEvent{cls, r.start_s, r.end_s, 1.0});
    }
  }
  return events;
}

struct SynthResult {
  std::vector<UtteranceEntry> entries;
  std::map<std::string, std::vector<aed::AudioEvent>> events;
  std::map<std::string, std::vector<int>> labels;
};

// Writes manifest.jsonl, wav/*.wav, events.jsonl and (for labeled specs)
// labels.jsonl under out_dir. Deterministic per (spec.seed); utterance i
// derives its own RNG stream so generation order is irrelevant.
inline SynthResult synth_corpus(const SyntheticSpec& spec, const std::string& out_dir) {
  if (spec.n_utterances <= 0) throw DataError("synth_corpus: zero utterances requested");
  if (spec.n_senone_classes == 1)
    throw DataError("synth_corpus: n_senone_classes must be 0 or >= 2");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "wav", ec);
  if (ec) throw DataError("cannot create output directory " + out_dir + ": " + ec.message());

  int n_train = static_cast<int>(std::llround(spec.split_train * spec.n_utterances));
  int n_dev = static_cast<int>(std::llround(spec.split_dev * spec.n_utterances));

  SynthResult result;
  for (int i = 0; i < spec.n_utterances; ++i) {
    Rng rng(Rng::derive(spec.seed, fnv1a("plan"), static_cast<std::uint64_t>(i)));
    double target = rng.uniform(spec.min_duration_s, spec.max_duration_s);
    char id_buf[32];
    std::snprintf(id_buf, sizeof(id_buf), "utt_%06d", i);
    std::vector<Region> plan = plan_regions(target, spec, rng);
    SynthUtterance u = render_utterance(id_buf, plan, spec.seed, spec.n_senone_classes);

    std::string rel = std::string("wav/") + id_buf + ".wav";
    write_wav(u.audio, (fs::path(out_dir) / rel).string());

    UtteranceEntry e;
    e.id = u.id;
    e.path = rel;
    e.duration_s = u.audio.duration_s();
    e.lang = spec.lang;
    e.split = i < n_train ? "train" : (i < n_train + n_dev ? "dev" : "test");
    result.entries.push_back(e);
    result.events[u.id] = regions_to_events(u.regions);
    if (!u.labels.empty()) result.labels[u.id] = u.labels;
  }
  write_manifest(result.entries, (fs::path(out_dir) / "manifest.jsonl").string());
  aed::write_events(result.events, (fs::path(out_dir) / "events.jsonl").string());
  if (!result.labels.empty())
    write_labels(result.labels, (fs::path(out_dir) / "labels.jsonl").string());
  return result;
}

}  // namespace corpus
}  // namespace lfb2vec

#endif  // LFB2VEC_CORPUS_HPP_
