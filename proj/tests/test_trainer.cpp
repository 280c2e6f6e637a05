// tests/test_trainer.cpp

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

#include "lfb2vec/trainer.hpp"

#include <cmath>
#include <filesystem>

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "lfb2vec/dsp.hpp"

using lfb2vec::DataError;
using lfb2vec::FeatureMatrix;
using lfb2vec::Rng;
using lfb2vec::Tensor;
using namespace lfb2vec::train;
namespace cfgns = lfb2vec::config;
namespace corpus = lfb2vec::corpus;
using testutil::TempDir;

namespace {

// Builds a small prepared data directory (features + manifest + events +
// labels) straight from the synthetic generator, skipping VAD/segmentation.
struct PreparedData {
  TempDir dir{"data"};
  DataSet data;

  PreparedData(const corpus::SyntheticSpec& spec, bool music_half = false) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir.str()) / "feat");
    std::vector<corpus::UtteranceEntry> entries;
    std::map<std::string, std::vector<lfb2vec::aed::AudioEvent>> events;
    std::map<std::string, std::vector<int>> labels;
    for (int i = 0; i < spec.n_utterances; ++i) {
      Rng rng(Rng::derive(spec.seed, lfb2vec::fnv1a("plan"), static_cast<std::uint64_t>(i)));
      double target = rng.uniform(spec.min_duration_s, spec.max_duration_s);
      std::vector<corpus::Region> plan;
      if (music_half && i % 2 == 0) {
        plan.push_back({corpus::Region::kMusic, 0.0, target, i % 4});
      } else {
        plan = corpus::plan_regions(target, spec, rng);
      }
      char id[32];
      std::snprintf(id, sizeof(id), "utt_%04d", i);
      corpus::SynthUtterance u =
          corpus::render_utterance(id, plan, spec.seed, spec.n_senone_classes);
      FeatureMatrix feats = lfb2vec::dsp::logmel(u.audio, lfb2vec::dsp::LogMelSpec{});
      std::string rel = std::string("feat/") + id + ".lfb";
      lfb2vec::write_features(feats, dir.file(rel));
      corpus::UtteranceEntry e;
      e.id = id;
      e.path = rel;
      e.duration_s = u.audio.duration_s();
      e.lang = spec.lang;
      e.split = "train";
      entries.push_back(e);
      events[id] = corpus::regions_to_events(plan);
      if (!u.labels.empty()) labels[id] = u.labels;
    }
    corpus::write_manifest(entries, dir.file("manifest.jsonl"));
    lfb2vec::aed::write_events(events, dir.file("events.jsonl"));
    if (!labels.empty()) corpus::write_labels(labels, dir.file("labels.jsonl"));
    data = load_dataset(dir.str());
  }
};

cfgns::GlobalConfig desk_config() {
  cfgns::GlobalConfig cfg;
  cfg.model.encoder.n_layers = 1;
  cfg.model.encoder.hidden = 12;
  cfg.model.encoder.input_dim = 80;
  cfg.trainer.batch_size = 2;
  cfg.trainer.steps = 4;
  cfg.trainer.seed = 5;
  cfg.loss.negatives = 12;
  return cfg;
}

bool same_tensors(const std::map<std::string, Tensor>& a,
                  const std::map<std::string, Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, t] : a) {
    auto it = b.find(name);
    if (it == b.end() || !(t.shape == it->second.shape) || t.v != it->second.v)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("checkpoint save/load/save is byte-identical") {
  TempDir dir("ckpt");
  Checkpoint ckpt;
  ckpt.mode = "ssl-single";
  ckpt.config_hash = "deadbeef";
  ckpt.seed = 7;
  ckpt.step = 42;
  Rng rng(3);
  Tensor t(lfb2vec::Shape::matrix(4, 6));
  for (double& x : t.v) x = rng.uniform(-1.0, 1.0);
  ckpt.tensors["enc.l0.fwd.wx"] = t;
  ckpt.tensors["proj.shared.ctx.w"] = Tensor(lfb2vec::Shape::matrix(2, 20), 0.5);
  save_checkpoint(ckpt, dir.file("a.lfck"));
  Checkpoint loaded = load_checkpoint(dir.file("a.lfck"));
  CHECK(loaded.mode == "ssl-single");
  CHECK(loaded.seed == 7);
  CHECK(loaded.step == 42);
  save_checkpoint(loaded, dir.file("b.lfck"));
  CHECK(testutil::same_bytes(dir.file("a.lfck"), dir.file("b.lfck")));
}

TEST_CASE("checkpoint detects payload tampering") {
  TempDir dir("ckpt");
  Checkpoint ckpt;
  ckpt.tensors["w"] = Tensor::vector({1.0, 2.0, 3.0});
  save_checkpoint(ckpt, dir.file("a.lfck"));
  std::string bytes = testutil::read_file(dir.file("a.lfck"));
  bytes[bytes.size() - 5] = static_cast<char>(bytes[bytes.size() - 5] ^ 0x40);
  testutil::write_file(dir.file("a.lfck"), bytes);
  try {
    load_checkpoint(dir.file("a.lfck"));
    FAIL("expected checksum error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("checksum") != std::string::npos);
  }
}

TEST_CASE("checkpoint version mismatch reports both versions") {
  TempDir dir("ckpt");
  Checkpoint ckpt;
  ckpt.version = 99;
  ckpt.tensors["w"] = Tensor::vector({1.0});
  save_checkpoint(ckpt, dir.file("v.lfck"));
  try {
    load_checkpoint(dir.file("v.lfck"));
    FAIL("expected version error");
  } catch (const DataError& e) {
    std::string msg = e.what();
    CHECK(msg.find("99") != std::string::npos);
    CHECK(msg.find("1") != std::string::npos);
  }
}

TEST_CASE("checkpoint prefix load picks out the encoder") {
  TempDir dir("ckpt");
  Checkpoint ckpt;
  ckpt.tensors["enc.l0.fwd.wx"] = Tensor::vector({1.0});
  ckpt.tensors["proj.shared.ctx.w"] = Tensor::vector({2.0});
  save_checkpoint(ckpt, dir.file("p.lfck"));
  Checkpoint enc_only = load_checkpoint(dir.file("p.lfck"), "enc.");
  CHECK(enc_only.tensors.size() == 1);
  CHECK(enc_only.tensors.count("enc.l0.fwd.wx") == 1);
}

TEST_CASE("pretrain with zero steps returns the initialization") {
  corpus::SyntheticSpec spec;
  spec.n_utterances = 3;
  spec.mix_speech = 1.0;
  spec.mix_silence = spec.mix_music = spec.mix_noise = 0.0;
  spec.min_duration_s = 1.5;
  spec.max_duration_s = 2.5;
  spec.seed = 3;
  PreparedData prep(spec);
  cfgns::GlobalConfig cfg = desk_config();
  cfg.trainer.steps = 0;
  TrainResult res = pretrain(prep.data, cfg);
  CHECK(res.metrics.empty());
  lfb2vec::model::ModelParams fresh = lfb2vec::model::init_ssl_model(
      cfg.model.encoder, {kSharedHead}, cfg.model.mask, cfg.trainer.seed);
  CHECK(same_tensors(res.params.tensors, fresh.tensors));
}

TEST_CASE("pretrain is deterministic for equal config and seed") {
  corpus::SyntheticSpec spec;
  spec.n_utterances = 4;
  spec.mix_speech = 1.0;
  spec.mix_silence = spec.mix_music = spec.mix_noise = 0.0;
  spec.min_duration_s = 1.5;
  spec.max_duration_s = 2.5;
  spec.seed = 4;
  PreparedData prep(spec);
  cfgns::GlobalConfig cfg = desk_config();
  TrainResult a = pretrain(prep.data, cfg);
  TrainResult b = pretrain(prep.data, cfg);
  CHECK(same_tensors(a.params.tensors, b.params.tensors));
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i)
    CHECK(a.metrics[i].loss == b.metrics[i].loss);
}

TEST_CASE("pretrain is deterministic across worker counts") {
  corpus::SyntheticSpec spec;
  spec.n_utterances = 4;
  spec.mix_speech = 1.0;
  spec.mix_silence = spec.mix_music = spec.mix_noise = 0.0;
  spec.min_duration_s = 1.5;
  spec.max_duration_s = 2.5;
  spec.seed = 6;
  PreparedData prep(spec);
  cfgns::GlobalConfig cfg = desk_config();
  TrainResult a = pretrain(prep.data, cfg);
  cfg.trainer.workers = 2;
  TrainResult b = pretrain(prep.data, cfg);
  CHECK(same_tensors(a.params.tensors, b.params.tensors));
}

TEST_CASE("ssl training loss decreases on a speech corpus") {
  corpus::SyntheticSpec spec;
  spec.n_utterances = 6;
  spec.mix_speech = 1.0;
  spec.mix_silence = spec.mix_music = spec.mix_noise = 0.0;
  spec.min_duration_s = 2.0;
  spec.max_duration_s = 3.0;
  spec.seed = 11;
  PreparedData prep(spec);
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    cfgns::GlobalConfig cfg = desk_config();
    cfg.trainer.steps = 60;
    cfg.trainer.seed = seed;
    TrainResult res = pretrain(prep.data, cfg);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 15; ++i) {
      head += res.metrics[static_cast<std::size_t>(i)].loss;
      tail += res.metrics[res.metrics.size() - 1 - static_cast<std::size_t>(i)].loss;
    }
    CHECK(tail / 15.0 < head / 15.0);
  }
}

TEST_CASE("filter accounting matches the standalone module count") {
  corpus::SyntheticSpec spec;
  spec.n_utterances = 8;  // half music-only via PreparedData(music_half=true)
  spec.mix_speech = 1.0;
  spec.mix_silence = spec.mix_music = spec.mix_noise = 0.0;
  spec.min_duration_s = 1.5;
  spec.max_duration_s = 2.5;
  spec.seed = 12;
  PreparedData prep(spec, /*music_half=*/true);

  cfgns::GlobalConfig cfg = desk_config();
  cfg.aed.speech_filter = true;
  cfg.trainer.batch_size = 2;
  cfg.trainer.steps = 2;  // exactly one epoch: 4 kept / batch 2

  long long standalone = 0;
  for (const DataItem& item : prep.data.items)
    if (!lfb2vec::aed::speech_filter(item.events, cfg.aed)) ++standalone;
  CHECK(standalone == 4);

  TrainResult res = pretrain(prep.data, cfg);
  REQUIRE(!res.dropped_by_epoch.empty());
  CHECK(res.dropped_by_epoch[0] == standalone);
  long long metric_total = 0;
  for (const MetricsRow& r : res.metrics) metric_total += r.dropped;
  CHECK(metric_total == standalone);
}

TEST_CASE("pretrain errors out when filters drop everything") {
  corpus::SyntheticSpec spec;
  spec.n_utterances = 3;
  spec.mix_music = 1.0;
  spec.mix_speech = spec.mix_silence = spec.mix_noise = 0.0;
  spec.min_duration_s = 1.5;
  spec.max_duration_s = 2.5;
  spec.seed = 13;
  PreparedData prep(spec);
  cfgns::GlobalConfig cfg = desk_config();
  cfg.aed.speech_filter = true;
  try {
    pretrain(prep.data, cfg);
    FAIL("expected all-filtered error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("speech_filter") != std::string::npos);
  }
}

TEST_CASE("multi-head training leaves the other language's head bit-identical") {
  corpus::SyntheticSpec spec;
  spec.n_utterances = 4;
  spec.mix_speech = 1.0;
  spec.mix_silence = spec.mix_music = spec.mix_noise = 0.0;
  spec.min_duration_s = 1.5;
  spec.max_duration_s = 2.5;
  spec.seed = 14;
  spec.lang = "ro";  // every utterance is language A
  PreparedData prep(spec);
  cfgns::GlobalConfig cfg = desk_config();
  cfg.trainer.mode = cfgns::TrainMode::kSslMultihead;
  cfg.trainer.languages = {"ro", "en"};
  cfg.trainer.steps = 3;
  lfb2vec::model::ModelParams fresh = lfb2vec::model::init_ssl_model(
      cfg.model.encoder, {"ro", "en"}, cfg.model.mask, cfg.trainer.seed);
  TrainResult res = pretrain(prep.data, cfg);
  for (const char* name : {"proj.en.ctx.w", "proj.en.ctx.b", "proj.en.tgt.w",
                           "proj.en.tgt.b"})
    CHECK(res.params.at(name).v == fresh.at(name).v);
  CHECK(res.params.at("proj.ro.ctx.w").v != fresh.at("proj.ro.ctx.w").v);
  CHECK(res.params.at("enc.l0.fwd.wx").v != fresh.at("enc.l0.fwd.wx").v);
}

TEST_CASE("supervised pretraining requires labels and n_classes") {
  corpus::SyntheticSpec spec;
  spec.n_utterances = 3;
  spec.mix_speech = 1.0;
  spec.mix_silence = spec.mix_music = spec.mix_noise = 0.0;
  spec.min_duration_s = 1.5;
  spec.max_duration_s = 2.0;
  spec.seed = 15;  // unlabeled (n_senone_classes = 0)
  PreparedData prep(spec);
  cfgns::GlobalConfig cfg = desk_config();
  cfg.trainer.mode = cfgns::TrainMode::kSupervisedSingle;
  cfg.trainer.n_classes = 4;
  CHECK_THROWS_AS(pretrain(prep.data, cfg), DataError);
  cfg.trainer.n_classes = 0;
  CHECK_THROWS_AS(pretrain(prep.data, cfg), DataError);
}

TEST_CASE("supervised pretraining runs and learns on labeled data") {
  corpus::SyntheticSpec spec;
  spec.n_utterances = 4;
  spec.mix_speech = 0.7;
  spec.mix_silence = 0.3;
  spec.mix_music = spec.mix_noise = 0.0;
  spec.n_senone_classes = 4;
  spec.min_duration_s = 2.0;
  spec.max_duration_s = 3.0;
  spec.seed = 16;
  PreparedData prep(spec);
  cfgns::GlobalConfig cfg = desk_config();
  cfg.trainer.mode = cfgns::TrainMode::kSupervisedSingle;
  cfg.trainer.n_classes = 4;
  cfg.trainer.steps = 30;
  TrainResult res = pretrain(prep.data, cfg);
  REQUIRE(res.metrics.size() == 30);
  double first = res.metrics[0].loss;
  double last = res.metrics[29].loss;
  CHECK(last < first);
}

TEST_CASE("two-stage fine-tune freezes the encoder in stage 1") {
  corpus::SyntheticSpec spec;
  spec.n_utterances = 4;
  spec.mix_speech = 0.7;
  spec.mix_silence = 0.3;
  spec.mix_music = spec.mix_noise = 0.0;
  spec.n_senone_classes = 4;
  spec.min_duration_s = 1.5;
  spec.max_duration_s = 2.5;
  spec.seed = 17;
  PreparedData prep(spec);
  cfgns::GlobalConfig cfg = desk_config();
  cfg.trainer.n_classes = 4;
  cfg.trainer.finetune_steps = 10;
  cfg.trainer.stage1_frac = 1.0;  // run stage 1 only
  lfb2vec::model::ModelParams fresh = lfb2vec::model::init_acoustic_model(
      cfg.model.encoder, {kSharedHead}, 4, cfg.trainer.seed);
  TrainResult res = finetune(prep.data, cfg, "");
  for (const std::string& name : fresh.names_with_prefix("enc."))
    CHECK(res.params.at(name).v == fresh.at(name).v);
  CHECK(res.params.at(std::string("out.") + kSharedHead + ".w").v !=
        fresh.at(std::string("out.") + kSharedHead + ".w").v);
}

TEST_CASE("fine-tune from a checkpoint initializes the encoder, not the head") {
  corpus::SyntheticSpec spec;
  spec.n_utterances = 4;
  spec.mix_speech = 0.7;
  spec.mix_silence = 0.3;
  spec.mix_music = spec.mix_noise = 0.0;
  spec.n_senone_classes = 4;
  spec.min_duration_s = 1.5;
  spec.max_duration_s = 2.5;
  spec.seed = 18;
  PreparedData prep(spec);
  cfgns::GlobalConfig cfg = desk_config();
  cfg.trainer.steps = 2;
  TrainResult ssl = pretrain(prep.data, cfg);
  TempDir dir("ft");
  save_checkpoint(ssl.checkpoint, dir.file("ssl.lfck"));

  cfg.trainer.n_classes = 4;
  cfg.trainer.finetune_steps = 0;  // init only
  TrainResult ft = finetune(prep.data, cfg, dir.file("ssl.lfck"));
  for (const std::string& name : ssl.params.names_with_prefix("enc."))
    CHECK(ft.params.at(name).v == ssl.params.at(name).v);
  lfb2vec::model::ModelParams fresh_am = lfb2vec::model::init_acoustic_model(
      cfg.model.encoder, {kSharedHead}, 4, cfg.trainer.seed);
  CHECK(ft.params.at(std::string("out.") + kSharedHead + ".w").v ==
        fresh_am.at(std::string("out.") + kSharedHead + ".w").v);
}

TEST_CASE("fine-tune rejects architecture-incompatible checkpoints") {
  corpus::SyntheticSpec spec;
  spec.n_utterances = 3;
  spec.mix_speech = 0.7;
  spec.mix_silence = 0.3;
  spec.mix_music = spec.mix_noise = 0.0;
  spec.n_senone_classes = 4;
  spec.min_duration_s = 1.5;
  spec.max_duration_s = 2.0;
  spec.seed = 19;
  PreparedData prep(spec);
  cfgns::GlobalConfig cfg = desk_config();
  cfg.trainer.steps = 1;
  TrainResult ssl = pretrain(prep.data, cfg);
  TempDir dir("ft");
  save_checkpoint(ssl.checkpoint, dir.file("ssl.lfck"));

  cfg.model.encoder.hidden = 16;  // mismatch
  cfg.trainer.n_classes = 4;
  cfg.trainer.finetune_steps = 1;
  try {
    finetune(prep.data, cfg, dir.file("ssl.lfck"));
    FAIL("expected incompatibility error");
  } catch (const DataError& e) {
    std::string msg = e.what();
    CHECK(msg.find("enc.l0.fwd.wh") != std::string::npos);
    CHECK(msg.find("shape") != std::string::npos);
  }
}

TEST_CASE("accuracy_from_logits: oracle logits give accuracy 1.0") {
  std::vector<int> labels{2, 0, 1, 3};
  Tensor logits(lfb2vec::Shape::matrix(4, 4));
  for (std::size_t t = 0; t < 4; ++t)
    logits.at(static_cast<std::int64_t>(t), labels[t]) = 5.0;
  CHECK(accuracy_from_logits(logits, labels) == 1.0);
}

TEST_CASE("evaluate: untrained net scores near chance on random labels") {
  corpus::SyntheticSpec spec;
  spec.n_utterances = 4;
  spec.mix_speech = 1.0;
  spec.mix_silence = spec.mix_music = spec.mix_noise = 0.0;
  spec.n_senone_classes = 5;
  spec.min_duration_s = 2.0;
  spec.max_duration_s = 3.0;
  spec.seed = 20;
  PreparedData prep(spec);
  // randomize the labels so the only signal is chance
  Rng rng(99);
  std::int64_t n_frames = 0;
  for (DataItem& item : prep.data.items) {
    for (int& lab : item.labels) lab = static_cast<int>(rng.uniform_int(5));
    n_frames += item.features.n_frames;
  }
  cfgns::GlobalConfig cfg = desk_config();
  cfg.trainer.n_classes = 5;
  lfb2vec::model::ModelParams params = lfb2vec::model::init_acoustic_model(
      cfg.model.encoder, {kSharedHead}, 5, 123);
  EvalResult res = evaluate(params, cfg, prep.data, "train");
  CHECK(res.n_frames == n_frames);
  double p = 1.0 / 5.0;
  double ci = 4.0 * std::sqrt(p * (1 - p) / static_cast<double>(n_frames));
  // an untrained-but-fixed net is not a uniform sampler; allow a wide band
  CHECK(res.accuracy > 0.0);
  CHECK(std::fabs(res.accuracy - p) < std::max(0.15, ci));
  std::int64_t conf_total = 0;
  for (const auto& row : res.confusion)
    for (std::int64_t c : row) conf_total += c;
  CHECK(conf_total == res.n_frames);
}

TEST_CASE("evaluate is independent of utterance order") {
  corpus::SyntheticSpec spec;
  spec.n_utterances = 3;
  spec.mix_speech = 0.7;
  spec.mix_silence = 0.3;
  spec.mix_music = spec.mix_noise = 0.0;
  spec.n_senone_classes = 4;
  spec.min_duration_s = 1.5;
  spec.max_duration_s = 2.0;
  spec.seed = 21;
  PreparedData prep(spec);
  cfgns::GlobalConfig cfg = desk_config();
  cfg.trainer.n_classes = 4;
  lfb2vec::model::ModelParams params = lfb2vec::model::init_acoustic_model(
      cfg.model.encoder, {kSharedHead}, 4, 7);
  EvalResult a = evaluate(params, cfg, prep.data, "train");
  std::reverse(prep.data.items.begin(), prep.data.items.end());
  EvalResult b = evaluate(params, cfg, prep.data, "train");
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.n_frames == b.n_frames);
}

TEST_CASE("evaluate catches label/feature length mismatches") {
  corpus::SyntheticSpec spec;
  spec.n_utterances = 2;
  spec.mix_speech = 1.0;
  spec.mix_silence = spec.mix_music = spec.mix_noise = 0.0;
  spec.n_senone_classes = 4;
  spec.min_duration_s = 1.5;
  spec.max_duration_s = 2.0;
  spec.seed = 22;
  PreparedData prep(spec);
  prep.data.items[0].labels.pop_back();
  cfgns::GlobalConfig cfg = desk_config();
  cfg.trainer.n_classes = 4;
  lfb2vec::model::ModelParams params = lfb2vec::model::init_acoustic_model(
      cfg.model.encoder, {kSharedHead}, 4, 7);
  CHECK_THROWS_AS(evaluate(params, cfg, prep.data, "train"), DataError);
}

TEST_CASE("metrics CSV has the documented columns and strictly increasing steps") {
  TempDir dir("metrics");
  std::vector<MetricsRow> rows;
  for (int i = 1; i <= 3; ++i) {
    MetricsRow r;
    r.step = i;
    r.loss = -0.5 * i;
    r.lr = 1e-4 * i;
    rows.push_back(r);
  }
  write_metrics_csv(rows, dir.file("m.csv"));
  std::string text = testutil::read_file(dir.file("m.csv"));
  CHECK(text.rfind("step,loss,lr,masked_fraction,dropped,wall_ms\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}
