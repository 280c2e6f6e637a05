// lfb2vec/config.hpp

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

// One JSON config with a section per module. Unknown keys are rejected by
// name; every run logs the fully resolved config and its hash.

#ifndef LFB2VEC_CONFIG_HPP_
#define LFB2VEC_CONFIG_HPP_

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "lfb2vec/aedfilter.hpp"
#include "lfb2vec/common.hpp"
#include "lfb2vec/corpus.hpp"
#include "lfb2vec/dsp.hpp"
#include "lfb2vec/losses.hpp"
#include "lfb2vec/model.hpp"
#include "lfb2vec/optim.hpp"

namespace lfb2vec {
namespace config {

struct DspConfig {
  int target_rate_hz = 16000;
  double max_segment_s = 20.0;
  dsp::VadParams vad;
  dsp::LogMelSpec logmel;
};

struct LossConfig {
  loss::ContrastiveKind kind = loss::ContrastiveKind::kInfoNce;
  double tau = 0.1;
  std::int64_t negatives = 100;
  loss::FlatVariant flat_variant = loss::FlatVariant::kSumForm;
  loss::InfoNceNorm infonce_norm = loss::InfoNceNorm::kMean;
};

struct ModelConfig {
  model::MaskSpec mask;
  model::EncoderSpec encoder;
  model::StreamSpec stream;
};

struct OptimConfig {
  optim::AdamConfig adam;
  double max_lr = 1e-3;
  double warmup_frac = 0.10;
  double floor_lr = 5e-6;
};

enum class TrainMode { kSslSingle, kSslMultihead, kSupervisedSingle, kSupervisedMultihead };

struct TrainerConfig {
  TrainMode mode = TrainMode::kSslSingle;
  std::vector<std::string> languages{"ro"};
  long long steps = 100;
  int batch_size = 4;
  std::uint64_t seed = 1;
  int metrics_every = 10;  // CSV flush cadence
  int workers = 1;
  int n_classes = 0;  // supervised / fine-tune output classes
  // fine-tuning
  long long finetune_steps = 100;
  double stage1_frac = 0.10;
  double lr_first_half = 1.6e-3;
  double lr_second_half = 8e-4;
};

struct GlobalConfig {
  corpus::SyntheticSpec corpus;
  DspConfig dsp;
  aed::FilterConfig aed;
  ModelConfig model;
  LossConfig loss;
  OptimConfig optim;
  TrainerConfig trainer;
};

namespace detail {

// Strict object reader: every key must be consumed by a get() call.
class Section {
 public:
  Section(const nlohmann::json& j, std::string name)
      : j_(j), name_(std::move(name)) {
    if (!j_.is_object())
      throw DataError("config section '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("config key '" + name_ + "." + key + "': " + e.what());
    }
  }

  void get_enum(const char* key, const std::vector<std::pair<std::string, int>>& values,
                int& out) {
    std::string s;
    bool present = j_.contains(key);
    get(key, s);
    if (!present) return;
    for (const auto& [name, v] : values)
      if (name == s) {
        out = v;
        return;
      }
    std::string valid;
    for (const auto& [name, v] : values) valid += (valid.empty() ? "" : ", ") + name;
    throw DataError("config key '" + name_ + "." + key + "': unknown value '" +
                    s + "' (valid: " + valid + ")");
  }

  const nlohmann::json* sub(const char* key) {
    known_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [key, value] : j_.items())
      if (!known_.count(key))
        throw DataError("unknown config key '" + name_ + "." + key + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string name_;
  std::set<std::string> known_;
};

inline void read_corpus(const nlohmann::json& j, corpus::SyntheticSpec& c) {
  Section s(j, "corpus");
  s.get("n_utterances", c.n_utterances);
  s.get("min_duration_s", c.min_duration_s);
  s.get("max_duration_s", c.max_duration_s);
  s.get("mix_speech", c.mix_speech);
  s.get("mix_silence", c.mix_silence);
  s.get("mix_music", c.mix_music);
  s.get("mix_noise", c.mix_noise);
  s.get("n_senone_classes", c.n_senone_classes);
  s.get("seed", c.seed);
  s.get("lang", c.lang);
  s.get("split_train", c.split_train);
  s.get("split_dev", c.split_dev);
  s.get("split_test", c.split_test);
}

inline void read_dsp(const nlohmann::json& j, DspConfig& d) {
  Section s(j, "dsp");
  s.get("target_rate_hz", d.target_rate_hz);
  s.get("max_segment_s", d.max_segment_s);
  if (const nlohmann::json* v = s.sub("vad")) {
    Section sv(*v, "dsp.vad");
    sv.get("frame_ms", d.vad.frame_ms);
    sv.get("hop_ms", d.vad.hop_ms);
    sv.get("energy_floor_db", d.vad.energy_floor_db);
    sv.get("min_silence_s", d.vad.min_silence_s);
    sv.get("hangover_frames", d.vad.hangover_frames);
    sv.get("active_floor_dbfs", d.vad.active_floor_dbfs);
  }
  if (const nlohmann::json* v = s.sub("logmel")) {
    Section sl(*v, "dsp.logmel");
    sl.get("n_mels", d.logmel.n_mels);
    sl.get("win_ms", d.logmel.win_ms);
    sl.get("hop_ms", d.logmel.hop_ms);
    sl.get("n_fft", d.logmel.n_fft);
    sl.get("fmin_hz", d.logmel.fmin_hz);
    sl.get("fmax_hz", d.logmel.fmax_hz);
    sl.get("log_floor", d.logmel.log_floor);
    sl.get("mean_normalize", d.logmel.mean_normalize);
  }
  d.logmel.rate_hz = d.target_rate_hz;
}

inline void read_aed(const nlohmann::json& j, aed::FilterConfig& a) {
  Section s(j, "aed");
  s.get("speech_score_min", a.speech_score_min);
  s.get("rand_crop_min_s", a.rand_crop_min_s);
  s.get("rand_crop_len_s", a.rand_crop_len_s);
  s.get("speech_filter", a.speech_filter);
  s.get("speech_crop", a.speech_crop);
  s.get("rand_crop", a.rand_crop);
}

inline void read_model(const nlohmann::json& j, ModelConfig& m) {
  Section s(j, "model");
  if (const nlohmann::json* v = s.sub("mask")) {
    Section sm(*v, "model.mask");
    sm.get("start_prob", m.mask.start_prob);
    sm.get("span", m.mask.span);
    int policy = m.mask.policy;
    sm.get_enum("policy", {{"zeros", model::MaskSpec::kZeros},
                           {"learned-vector", model::MaskSpec::kLearned}},
                policy);
    m.mask.policy = static_cast<model::MaskSpec::Policy>(policy);
  }
  if (const nlohmann::json* v = s.sub("encoder")) {
    Section se(*v, "model.encoder");
    se.get("n_layers", m.encoder.n_layers);
    se.get("hidden", m.encoder.hidden);
  }
  if (const nlohmann::json* v = s.sub("stream")) {
    Section ss(*v, "model.stream");
    ss.get("chunk_frames", m.stream.chunk_frames);
    ss.get("lookahead_frames", m.stream.lookahead_frames);
  }
}

inline void read_loss(const nlohmann::json& j, LossConfig& l) {
  Section s(j, "loss");
  int kind = static_cast<int>(l.kind);
  s.get_enum("kind", {{"infonce", 0}, {"flatnce", 1}}, kind);
  l.kind = static_cast<loss::ContrastiveKind>(kind);
  s.get("tau", l.tau);
  s.get("negatives", l.negatives);
  int variant = static_cast<int>(l.flat_variant);
  s.get_enum("flat_variant", {{"sum-form", 0}, {"eq2-literal", 1}}, variant);
  l.flat_variant = static_cast<loss::FlatVariant>(variant);
  int norm = static_cast<int>(l.infonce_norm);
  s.get_enum("infonce_norm", {{"mean", 0}, {"sum", 1}}, norm);
  l.infonce_norm = static_cast<loss::InfoNceNorm>(norm);
}

inline void read_optim(const nlohmann::json& j, OptimConfig& o) {
  Section s(j, "optim");
  s.get("beta1", o.adam.beta1);
  s.get("beta2", o.adam.beta2);
  s.get("eps", o.adam.eps);
  s.get("weight_decay", o.adam.weight_decay);
  int mode = o.adam.mode == optim::DecayMode::kCoupled ? 0 : 1;
  s.get_enum("mode", {{"adam", 0}, {"adamw", 1}}, mode);
  o.adam.mode = mode == 0 ? optim::DecayMode::kCoupled : optim::DecayMode::kDecoupled;
  s.get("clip_norm", o.adam.clip_norm);
  s.get("max_lr", o.max_lr);
  s.get("warmup_frac", o.warmup_frac);
  s.get("floor_lr", o.floor_lr);
}

inline void read_trainer(const nlohmann::json& j, TrainerConfig& t) {
  Section s(j, "trainer");
  int mode = static_cast<int>(t.mode);
  s.get_enum("mode", {{"ssl-single", 0},
                      {"ssl-multihead", 1},
                      {"supervised-single", 2},
                      {"supervised-multihead", 3}},
             mode);
  t.mode = static_cast<TrainMode>(mode);
  s.get("languages", t.languages);
  s.get("steps", t.steps);
  s.get("batch_size", t.batch_size);
  s.get("seed", t.seed);
  s.get("metrics_every", t.metrics_every);
  s.get("workers", t.workers);
  s.get("n_classes", t.n_classes);
  s.get("finetune_steps", t.finetune_steps);
  s.get("stage1_frac", t.stage1_frac);
  s.get("lr_first_half", t.lr_first_half);
  s.get("lr_second_half", t.lr_second_half);
}

}  // namespace detail

inline GlobalConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("config root must be a JSON object");
  static const std::set<std::string> sections{"corpus", "dsp", "aed", "model",
                                              "loss", "optim", "trainer"};
  for (const auto& [key, value] : j.items())
    if (!sections.count(key))
      throw DataError("unknown config key '" + key + "'");
  GlobalConfig cfg;
  if (j.contains("corpus")) detail::read_corpus(j.at("corpus"), cfg.corpus);
  if (j.contains("dsp")) detail::read_dsp(j.at("dsp"), cfg.dsp);
  if (j.contains("aed")) detail::read_aed(j.at("aed"), cfg.aed);
  if (j.contains("model")) detail::read_model(j.at("model"), cfg.model);
  if (j.contains("loss")) detail::read_loss(j.at("loss"), cfg.loss);
  if (j.contains("optim")) detail::read_optim(j.at("optim"), cfg.optim);
  if (j.contains("trainer")) detail::read_trainer(j.at("trainer"), cfg.trainer);
  cfg.model.encoder.input_dim = cfg.dsp.logmel.n_mels;
  return cfg;
}

// Fully resolved view (defaults materialized); canonical for hashing/logging.
inline nlohmann::json config_to_json(const GlobalConfig& c) {
  nlohmann::json j;
  j["corpus"] = {{"n_utterances", c.corpus.n_utterances},
                 {"min_duration_s", c.corpus.min_duration_s},
                 {"max_duration_s", c.corpus.max_duration_s},
                 {"mix_speech", c.corpus.mix_speech},
                 {"mix_silence", c.corpus.mix_silence},
                 {"mix_music", c.corpus.mix_music},
                 {"mix_noise", c.corpus.mix_noise},
                 {"n_senone_classes", c.corpus.n_senone_classes},
                 {"seed", c.corpus.seed},
                 {"lang", c.corpus.lang},
                 {"split_train", c.corpus.split_train},
                 {"split_dev", c.corpus.split_dev},
                 {"split_test", c.corpus.split_test}};
  j["dsp"] = {{"target_rate_hz", c.dsp.target_rate_hz},
              {"max_segment_s", c.dsp.max_segment_s},
              {"vad",
               {{"frame_ms", c.dsp.vad.frame_ms},
                {"hop_ms", c.dsp.vad.hop_ms},
                {"energy_floor_db", c.dsp.vad.energy_floor_db},
                {"min_silence_s", c.dsp.vad.min_silence_s},
                {"hangover_frames", c.dsp.vad.hangover_frames},
                {"active_floor_dbfs", c.dsp.vad.active_floor_dbfs}}},
              {"logmel",
               {{"n_mels", c.dsp.logmel.n_mels},
                {"win_ms", c.dsp.logmel.win_ms},
                {"hop_ms", c.dsp.logmel.hop_ms},
                {"n_fft", c.dsp.logmel.n_fft},
                {"fmin_hz", c.dsp.logmel.fmin_hz},
                {"fmax_hz", c.dsp.logmel.fmax_hz},
                {"log_floor", c.dsp.logmel.log_floor},
                {"mean_normalize", c.dsp.logmel.mean_normalize}}}};
  j["aed"] = {{"speech_score_min", c.aed.speech_score_min},
              {"rand_crop_min_s", c.aed.rand_crop_min_s},
              {"rand_crop_len_s", c.aed.rand_crop_len_s},
              {"speech_filter", c.aed.speech_filter},
              {"speech_crop", c.aed.speech_crop},
              {"rand_crop", c.aed.rand_crop}};
  j["model"] = {{"mask",
                 {{"start_prob", c.model.mask.start_prob},
                  {"span", c.model.mask.span},
                  {"policy", c.model.mask.policy == model::MaskSpec::kZeros
                                 ? "zeros"
                                 : "learned-vector"}}},
                {"encoder",
                 {{"n_layers", c.model.encoder.n_layers},
                  {"hidden", c.model.encoder.hidden}}},
                {"stream",
                 {{"chunk_frames", c.model.stream.chunk_frames},
                  {"lookahead_frames", c.model.stream.lookahead_frames}}}};
  j["loss"] = {{"kind", c.loss.kind == loss::ContrastiveKind::kInfoNce ? "infonce"
                                                                       : "flatnce"},
               {"tau", c.loss.tau},
               {"negatives", c.loss.negatives},
               {"flat_variant", c.loss.flat_variant == loss::FlatVariant::kSumForm
                                    ? "sum-form"
                                    : "eq2-literal"},
               {"infonce_norm",
                c.loss.infonce_norm == loss::InfoNceNorm::kMean ? "mean" : "sum"}};
  j["optim"] = {{"beta1", c.optim.adam.beta1},
                {"beta2", c.optim.adam.beta2},
                {"eps", c.optim.adam.eps},
                {"weight_decay", c.optim.adam.weight_decay},
                {"mode", c.optim.adam.mode == optim::DecayMode::kCoupled ? "adam"
                                                                         : "adamw"},
                {"clip_norm", c.optim.adam.clip_norm},
                {"max_lr", c.optim.max_lr},
                {"warmup_frac", c.optim.warmup_frac},
                {"floor_lr", c.optim.floor_lr}};
  const char* mode_names[] = {"ssl-single", "ssl-multihead", "supervised-single",
                              "supervised-multihead"};
  j["trainer"] = {{"mode", mode_names[static_cast<int>(c.trainer.mode)]},
                  {"languages", c.trainer.languages},
                  {"steps", c.trainer.steps},
                  {"batch_size", c.trainer.batch_size},
                  {"seed", c.trainer.seed},
                  {"metrics_every", c.trainer.metrics_every},
                  {"workers", c.trainer.workers},
                  {"n_classes", c.trainer.n_classes},
                  {"finetune_steps", c.trainer.finetune_steps},
                  {"stage1_frac", c.trainer.stage1_frac},
                  {"lr_first_half", c.trainer.lr_first_half},
                  {"lr_second_half", c.trainer.lr_second_half}};
  return j;
}

inline std::string config_hash(const GlobalConfig& c) {
  return hex64(fnv1a(config_to_json(c).dump()));
}

// "--set section.key=value" overrides applied to raw JSON before parsing;
// the value is JSON when it parses, a bare string otherwise.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw UsageError("override must look like section.key=value: " + assignment);
  std::string path = assignment.substr(0, eq);
  std::string value_str = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(value_str);
  } catch (const nlohmann::json::exception&) {
    value = value_str;
  }
  nlohmann::json* node = &j;
  std::size_t pos = 0;
  while (true) {
    std::size_t dot = path.find('.', pos);
    std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (key.empty()) throw UsageError("bad override path: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    node = &(*node)[key];
    pos = dot + 1;
  }
}

inline GlobalConfig load_config(const std::string& path,
                                const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed config " + path + ": " + e.what());
  }
  for (const std::string& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

}  // namespace config
}  // namespace lfb2vec

#endif  // LFB2VEC_CONFIG_HPP_
