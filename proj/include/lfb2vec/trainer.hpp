// lfb2vec/trainer.hpp

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

// Training orchestration: SSL pre-training (single- and multi-head),
// supervised streaming pre-training, two-stage fine-tuning and frame-accuracy
// evaluation. Deterministic for a fixed (config, seed) at any worker count:
// all RNG streams derive from (seed, purpose, epoch/step, slot), and batch
// shards are reduced in slot order.

#ifndef LFB2VEC_TRAINER_HPP_
#define LFB2VEC_TRAINER_HPP_

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "lfb2vec/aedfilter.hpp"
#include "lfb2vec/checkpoint.hpp"
#include "lfb2vec/config.hpp"
#include "lfb2vec/corpus.hpp"
#include "lfb2vec/features.hpp"
#include "lfb2vec/losses.hpp"
#include "lfb2vec/model.hpp"
#include "lfb2vec/optim.hpp"

namespace lfb2vec {
namespace train {

// Single-head models register their lone head pair under this key and use it
// for every language.
inline constexpr const char* kSharedHead = "shared";

struct DataItem {
  corpus::UtteranceEntry entry;
  FeatureMatrix features;
  std::vector<int> labels;  // empty when unlabeled
  std::vector<aed::AudioEvent> events;
};

struct DataSet {
  std::vector<DataItem> items;

  std::vector<std::size_t> split_indices(const std::string& split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < items.size(); ++i)
      if (split.empty() || items[i].entry.split == split) out.push_back(i);
    return out;
  }
};

// Loads a prepared data directory: manifest.jsonl + feature files, plus
// labels.jsonl when present. Event precedence: explicit override path, then
// events.jsonl (external annotations), then events.heuristic.jsonl.
inline DataSet load_dataset(const std::string& data_dir,
                            const std::string& events_override = "") {
  namespace fs = std::filesystem;
  std::string manifest_path = (fs::path(data_dir) / "manifest.jsonl").string();
  DataSet ds;
  std::map<std::string, std::vector<int>> labels;
  std::string labels_path = (fs::path(data_dir) / "labels.jsonl").string();
  if (fs::exists(labels_path)) labels = corpus::load_labels(labels_path);

  std::map<std::string, std::vector<aed::AudioEvent>> events;
  std::string events_path = events_override;
  if (events_path.empty()) {
    std::string external = (fs::path(data_dir) / "events.jsonl").string();
    std::string heuristic = (fs::path(data_dir) / "events.heuristic.jsonl").string();
    if (fs::exists(external))
      events_path = external;
    else if (fs::exists(heuristic))
      events_path = heuristic;
  }
  if (!events_path.empty()) events = aed::load_events(events_path);

  for (const corpus::UtteranceEntry& e : corpus::load_manifest(manifest_path)) {
    DataItem item;
    item.entry = e;
    item.features = read_features(corpus::resolve_path(manifest_path, e.path));
    if (auto it = labels.find(e.id); it != labels.end()) item.labels = it->second;
    if (auto it = events.find(e.id); it != events.end()) item.events = it->second;
    ds.items.push_back(std::move(item));
  }
  return ds;
}

struct MetricsRow {
  long long step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double masked_fraction = 0.0;
  long long dropped = 0;  // utterances dropped by filters while filling this step
  long long wall_ms = 0;
};

inline void write_metrics_csv(const std::vector<MetricsRow>& rows,
                              const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write metrics: " + path);
  out << "step,loss,lr,masked_fraction,dropped,wall_ms\n";
  char buf[192];
  for (const MetricsRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.6g,%lld,%lld\n", r.step,
                  r.loss, r.lr, r.masked_fraction, r.dropped, r.wall_ms);
    out << buf;
  }
}

struct TrainResult {
  model::ModelParams params;
  std::vector<MetricsRow> metrics;
  std::vector<long long> dropped_by_epoch;
  Checkpoint checkpoint;  // params + optimizer state + provenance
};

namespace detail {

// Length-bucketed epoch order: buckets keyed by whole seconds, bucket order
// and within-bucket order reshuffled per epoch.
inline std::vector<std::size_t> epoch_order(const DataSet& data,
                                            const std::vector<std::size_t>& pool,
                                            std::uint64_t seed, long long epoch) {
  std::map<long long, std::vector<std::size_t>> buckets;
  for (std::size_t idx : pool) {
    long long key = static_cast<long long>(
        std::ceil(static_cast<double>(data.items[idx].features.n_frames) / 100.0));
    buckets[key].push_back(idx);
  }
  Rng rng(Rng::derive(seed, fnv1a("order"), static_cast<std::uint64_t>(epoch)));
  std::vector<std::vector<std::size_t>> shuffled;
  for (auto& [key, members] : buckets) {
    for (std::size_t i = members.size(); i > 1; --i)
      std::swap(members[i - 1], members[static_cast<std::size_t>(rng.uniform_int(
                                    static_cast<std::int64_t>(i)))]);
    shuffled.push_back(members);
  }
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[static_cast<std::size_t>(rng.uniform_int(
                                  static_cast<std::int64_t>(i)))]);
  std::vector<std::size_t> order;
  for (const auto& b : shuffled) order.insert(order.end(), b.begin(), b.end());
  return order;
}

// Round-robin shards [0, n) over up to `workers` threads; the results vector
// is indexed by slot so reduction order is independent of thread timing.
template <typename Fn>
void parallel_slots(int n, int workers, const Fn& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int s = 0; s < n; ++s) fn(s);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    threads.emplace_back([&, w]() {
      try {
        for (int s = w; s < n; s += workers) fn(s);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct SlotResult {
  std::map<std::string, Tensor> grads;
  double loss_sum = 0.0;
  std::int64_t denom = 0;  // anchors (SSL) or frames (CE)
  std::int64_t masked = 0;
  std::int64_t total_frames = 0;
};

struct BatchSlot {
  FeatureMatrix features;
  std::vector<int> labels;
  std::string head;  // head key for this utterance
};

inline std::string head_key(const config::GlobalConfig& cfg, const std::string& lang) {
  bool multihead = cfg.trainer.mode == config::TrainMode::kSslMultihead ||
                   cfg.trainer.mode == config::TrainMode::kSupervisedMultihead;
  if (!multihead) return kSharedHead;
  for (const std::string& l : cfg.trainer.languages)
    if (l == lang) return lang;
  std::string known;
  for (const std::string& l : cfg.trainer.languages)
    known += (known.empty() ? "" : ", ") + l;
  throw DataError("utterance language '" + lang +
                  "' has no configured head (configured: " + known + ")");
}

inline std::vector<std::string> head_langs(const config::GlobalConfig& cfg) {
  bool multihead = cfg.trainer.mode == config::TrainMode::kSslMultihead ||
                   cfg.trainer.mode == config::TrainMode::kSupervisedMultihead;
  if (multihead) return cfg.trainer.languages;
  return {kSharedHead};
}

// Streams (epoch, position) visits over the training pool, applying the
// on-the-fly AED filters for SSL modes and counting drops.
class VisitStream {
 public:
  VisitStream(const DataSet& data, std::vector<std::size_t> pool,
              const config::GlobalConfig& cfg, bool apply_aed)
      : data_(data), pool_(std::move(pool)), cfg_(cfg), apply_aed_(apply_aed) {}

  // Returns false only if the pool itself is empty.
  bool next(BatchSlot& out) {
    if (pool_.empty()) return false;
    for (;;) {
      if (pos_ >= order_.size()) {
        order_ = epoch_order(data_, pool_, cfg_.trainer.seed, epoch_counter_);
        pos_ = 0;
        dropped_by_epoch.push_back(0);
        ++epoch_counter_;
      }
      const DataItem& item = data_.items[order_[pos_]];
      Rng visit_rng(Rng::derive(cfg_.trainer.seed, fnv1a("filter"),
                                static_cast<std::uint64_t>(epoch_counter_ - 1),
                                static_cast<std::uint64_t>(pos_)));
      ++pos_;
      if (apply_aed_) {
        auto filtered =
            aed::apply_filters(item.features, item.events, cfg_.aed, visit_rng);
        if (!filtered.has_value()) {
          ++dropped_by_epoch.back();
          ++dropped_since_flush_;
          continue;
        }
        out.features = std::move(*filtered);
      } else {
        out.features = item.features;
      }
      // filters apply to SSL modes only, where labels are unused
      if (!apply_aed_) out.labels = item.labels;
      out.head = head_key(cfg_, item.entry.lang);
      return true;
    }
  }

  long long take_dropped() {
    long long d = dropped_since_flush_;
    dropped_since_flush_ = 0;
    return d;
  }

  std::vector<long long> dropped_by_epoch;

 private:
  const DataSet& data_;
  std::vector<std::size_t> pool_;
  const config::GlobalConfig& cfg_;
  bool apply_aed_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  long long epoch_counter_ = 0;
  long long dropped_since_flush_ = 0;
};

inline SlotResult ssl_slot(const config::GlobalConfig& cfg,
                           const model::ModelParams& params,
                           const BatchSlot& slot, long long step, int slot_idx) {
  SlotResult res;
  std::int64_t t_frames = slot.features.n_frames;
  res.total_frames = t_frames;
  if (t_frames < 2) return res;

  Rng mask_rng(Rng::derive(cfg.trainer.seed, fnv1a("mask"),
                           static_cast<std::uint64_t>(step),
                           static_cast<std::uint64_t>(slot_idx)));
  std::vector<std::int64_t> mask =
      model::mask_spans(t_frames, cfg.model.mask, mask_rng);
  res.masked = static_cast<std::int64_t>(mask.size());
  if (mask.empty()) return res;

  autodiff::Tape tape;
  model::TapeBinding bind = model::bind_params_all_trainable(tape, params);
  model::Lfb2vecOut out = model::lfb2vec_forward(
      tape, bind, params, slot.features, slot.head, cfg.model.mask, mask,
      cfg.model.encoder);
  Rng neg_rng(Rng::derive(cfg.trainer.seed, fnv1a("neg"),
                          static_cast<std::uint64_t>(step),
                          static_cast<std::uint64_t>(slot_idx)));
  loss::ContrastiveBatch batch = loss::batch_contrastive(
      tape, out.context_anchors, out.targets, mask, cfg.loss.kind,
      cfg.loss.negatives, cfg.loss.tau, neg_rng, cfg.loss.flat_variant,
      cfg.loss.infonce_norm);
  if (batch.n_anchors == 0) return res;
  res.loss_sum = tape.scalar_value(batch.sum);
  res.denom = batch.n_anchors;
  tape.backward(batch.sum);
  for (const auto& [name, var] : bind.vars) {
    Tensor g = tape.grad(var);
    bool nonzero = false;
    for (double x : g.v)
      if (x != 0.0) {
        nonzero = true;
        break;
      }
    if (nonzero) res.grads[name] = std::move(g);
  }
  return res;
}

inline SlotResult supervised_slot(const config::GlobalConfig& cfg,
                                  const model::ModelParams& params,
                                  const std::set<std::string>& trainable,
                                  const BatchSlot& slot) {
  SlotResult res;
  std::int64_t t_frames = slot.features.n_frames;
  res.total_frames = t_frames;
  if (t_frames == 0) return res;
  if (slot.labels.size() != static_cast<std::size_t>(t_frames))
    throw DataError("supervised training: " + std::to_string(slot.labels.size()) +
                    " labels for " + std::to_string(t_frames) + " frames");

  autodiff::Tape tape;
  model::TapeBinding bind = model::bind_params(tape, params, trainable);
  autodiff::Var enc_out =
      model::lc_blstm_forward(tape, bind, tape.constant(slot.features.to_tensor()),
                              cfg.model.encoder, cfg.model.stream);
  autodiff::Var logits = tape.affine(enc_out, bind.at("out." + slot.head + ".w"),
                                     bind.at("out." + slot.head + ".b"));
  std::vector<std::int64_t> labels(slot.labels.begin(), slot.labels.end());
  autodiff::Var ce = tape.softmax_xent(logits, labels, /*mean_over_rows=*/false);
  res.loss_sum = tape.scalar_value(ce);
  res.denom = t_frames;
  tape.backward(ce);
  for (const auto& [name, var] : bind.vars) {
    if (!trainable.count(name)) continue;
    Tensor g = tape.grad(var);
    bool nonzero = false;
    for (double x : g.v)
      if (x != 0.0) {
        nonzero = true;
        break;
      }
    if (nonzero) res.grads[name] = std::move(g);
  }
  return res;
}

struct StepOutcome {
  double loss = 0.0;
  double masked_fraction = 0.0;
  bool stepped = false;
};

// One optimizer step over `slots`; gradients are summed in slot order and
// normalized by the total anchor/frame count.
inline StepOutcome run_step(const config::GlobalConfig& cfg,
                            model::ModelParams& params, optim::AdamOptimizer& opt,
                            const std::vector<BatchSlot>& slots, long long step,
                            double lr, bool supervised,
                            const std::set<std::string>& trainable) {
  std::vector<SlotResult> results(slots.size());
  parallel_slots(static_cast<int>(slots.size()), cfg.trainer.workers, [&](int s) {
    results[static_cast<std::size_t>(s)] =
        supervised
            ? supervised_slot(cfg, params, trainable, slots[static_cast<std::size_t>(s)])
            : ssl_slot(cfg, params, slots[static_cast<std::size_t>(s)], step, s);
  });

  std::int64_t denom = 0, masked = 0, frames = 0;
  double loss_sum = 0.0;
  for (const SlotResult& r : results) {
    denom += r.denom;
    masked += r.masked;
    frames += r.total_frames;
    loss_sum += r.loss_sum;
  }
  StepOutcome out;
  out.masked_fraction =
      frames > 0 ? static_cast<double>(masked) / static_cast<double>(frames) : 0.0;
  if (denom == 0) return out;  // nothing to learn from this batch

  double inv = 1.0 / static_cast<double>(denom);
  std::map<std::string, Tensor> grads;
  for (const SlotResult& r : results)
    for (const auto& [name, g] : r.grads) {
      auto it = grads.find(name);
      if (it == grads.end()) {
        Tensor scaled = g;
        for (double& x : scaled.v) x *= inv;
        grads.emplace(name, std::move(scaled));
      } else {
        for (std::size_t i = 0; i < g.v.size(); ++i)
          it->second.v[i] += g.v[i] * inv;
      }
    }

  out.loss = loss_sum * inv;
  if (!std::isfinite(out.loss))
    throw NumericalError("training loss became non-finite at step " +
                         std::to_string(step));
  opt.step(params.tensors, grads, lr);
  out.stepped = true;
  return out;
}

inline Checkpoint make_checkpoint(const model::ModelParams& params,
                                  const optim::AdamOptimizer& opt,
                                  const std::string& mode,
                                  const config::GlobalConfig& cfg, long long step) {
  Checkpoint ckpt;
  ckpt.mode = mode;
  ckpt.config_hash = config::config_hash(cfg);
  ckpt.seed = cfg.trainer.seed;
  ckpt.step = step;
  ckpt.tensors = params.tensors;
  for (const auto& [name, st] : opt.state()) {
    ckpt.tensors["opt.m." + name] = st.m;
    ckpt.tensors["opt.v." + name] = st.v;
    ckpt.tensors["opt.t." + name] = Tensor::scalar(static_cast<double>(st.t));
  }
  return ckpt;
}

}  // namespace detail

// ---- pre-training -------------------------------------------------------------

inline TrainResult pretrain(const DataSet& data, const config::GlobalConfig& cfg) {
  const config::TrainerConfig& tc = cfg.trainer;
  bool supervised = tc.mode == config::TrainMode::kSupervisedSingle ||
                    tc.mode == config::TrainMode::kSupervisedMultihead;

  std::vector<std::size_t> pool = data.split_indices("train");
  if (pool.empty()) throw DataError("pretrain: no train-split utterances");

  if (!supervised && cfg.aed.speech_filter) {
    bool any = false;
    for (std::size_t idx : pool)
      if (aed::speech_filter(data.items[idx].events, cfg.aed)) {
        any = true;
        break;
      }
    if (!any)
      throw DataError(
          "pretrain: every utterance is dropped by the configured AED filters "
          "(speech_filter with speech_score_min=" +
          std::to_string(cfg.aed.speech_score_min) + ")");
  }
  if (supervised) {
    if (tc.n_classes < 2)
      throw DataError("supervised pre-training requires trainer.n_classes >= 2");
    for (std::size_t idx : pool)
      if (data.items[idx].labels.empty())
        throw DataError("supervised pre-training requires labels; utterance '" +
                        data.items[idx].entry.id + "' has none");
  }

  TrainResult result;
  result.params =
      supervised
          ? model::init_acoustic_model(cfg.model.encoder, detail::head_langs(cfg),
                                       tc.n_classes, tc.seed)
          : model::init_ssl_model(cfg.model.encoder, detail::head_langs(cfg),
                                  cfg.model.mask, tc.seed);
  optim::AdamOptimizer opt(cfg.optim.adam);
  optim::LrSchedule schedule{cfg.optim.max_lr, tc.steps, cfg.optim.warmup_frac,
                             cfg.optim.floor_lr};

  detail::VisitStream stream(data, pool, cfg, /*apply_aed=*/!supervised);
  std::set<std::string> trainable;
  for (const auto& [name, t] : result.params.tensors) trainable.insert(name);

  for (long long step = 1; step <= tc.steps; ++step) {
    auto started = std::chrono::steady_clock::now();
    std::vector<detail::BatchSlot> slots;
    for (int i = 0; i < tc.batch_size; ++i) {
      detail::BatchSlot slot;
      if (!stream.next(slot)) break;
      slots.push_back(std::move(slot));
    }
    double lr = optim::lr_at(step, schedule);
    detail::StepOutcome outcome = detail::run_step(
        cfg, result.params, opt, slots, step, lr, supervised, trainable);
    MetricsRow row;
    row.step = step;
    row.loss = outcome.loss;
    row.lr = lr;
    row.masked_fraction = outcome.masked_fraction;
    row.dropped = stream.take_dropped();
    row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - started)
                      .count();
    result.metrics.push_back(row);
  }
  result.dropped_by_epoch = stream.dropped_by_epoch;

  const char* mode_names[] = {"ssl-single", "ssl-multihead", "supervised-single",
                              "supervised-multihead"};
  result.checkpoint = detail::make_checkpoint(
      result.params, opt, mode_names[static_cast<int>(tc.mode)], cfg, tc.steps);
  return result;
}

// ---- two-stage fine-tuning ------------------------------------------------------

// Stage 1 trains only the fresh softmax head with the encoder frozen; stage 2
// trains everything. The LR halves split over wall-clock steps independently
// of the stage boundary. init_checkpoint = "" trains from scratch.
inline TrainResult finetune(const DataSet& data, const config::GlobalConfig& cfg,
                            const std::string& init_checkpoint) {
  const config::TrainerConfig& tc = cfg.trainer;
  if (tc.n_classes < 2) throw DataError("finetune requires trainer.n_classes >= 2");
  std::vector<std::size_t> pool = data.split_indices("train");
  if (pool.empty()) throw DataError("finetune: no train-split utterances");
  for (std::size_t idx : pool)
    if (data.items[idx].labels.empty())
      throw DataError("finetune requires labels; utterance '" +
                      data.items[idx].entry.id + "' has none");

  TrainResult result;
  result.params = model::init_acoustic_model(cfg.model.encoder, {kSharedHead},
                                             tc.n_classes, tc.seed);

  if (!init_checkpoint.empty()) {
    Checkpoint ckpt = load_checkpoint(init_checkpoint, "enc.");
    std::vector<std::string> problems;
    for (const std::string& name : result.params.names_with_prefix("enc.")) {
      auto it = ckpt.tensors.find(name);
      if (it == ckpt.tensors.end())
        problems.push_back(name + " missing from checkpoint");
      else if (it->second.shape != result.params.at(name).shape)
        problems.push_back(name + " shape " + it->second.shape.str() +
                           " != expected " + result.params.at(name).shape.str());
    }
    for (const auto& [name, t] : ckpt.tensors)
      if (!result.params.has(name))
        problems.push_back(name + " not present in this architecture");
    if (!problems.empty()) {
      std::string joined;
      for (const std::string& p : problems) joined += "\n  " + p;
      throw DataError("checkpoint incompatible with the configured encoder:" + joined);
    }
    for (const auto& [name, t] : ckpt.tensors) result.params.at(name) = t;
  }

  optim::AdamOptimizer opt(cfg.optim.adam);
  long long total = tc.finetune_steps;
  long long stage1 = std::llround(tc.stage1_frac * static_cast<double>(total));

  detail::VisitStream stream(data, pool, cfg, /*apply_aed=*/false);
  std::set<std::string> head_only;
  for (const std::string& name : result.params.names_with_prefix("out."))
    head_only.insert(name);
  std::set<std::string> everything;
  for (const auto& [name, t] : result.params.tensors) everything.insert(name);

  for (long long step = 1; step <= total; ++step) {
    auto started = std::chrono::steady_clock::now();
    std::vector<detail::BatchSlot> slots;
    for (int i = 0; i < tc.batch_size; ++i) {
      detail::BatchSlot slot;
      if (!stream.next(slot)) break;
      slots.push_back(std::move(slot));
    }
    double lr = step * 2 <= total ? tc.lr_first_half : tc.lr_second_half;
    const std::set<std::string>& trainable = step <= stage1 ? head_only : everything;
    detail::StepOutcome outcome = detail::run_step(cfg, result.params, opt, slots,
                                                   step, lr, /*supervised=*/true,
                                                   trainable);
    MetricsRow row;
    row.step = step;
    row.loss = outcome.loss;
    row.lr = lr;
    row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - started)
                      .count();
    result.metrics.push_back(row);
  }
  result.dropped_by_epoch = stream.dropped_by_epoch;
  result.checkpoint =
      detail::make_checkpoint(result.params, opt, "finetune", cfg, total);
  return result;
}

// ---- evaluation -----------------------------------------------------------------

struct EvalResult {
  double accuracy = 0.0;
  std::int64_t n_frames = 0;
  std::vector<std::vector<std::int64_t>> confusion;  // [truth][predicted]
};

inline double accuracy_from_logits(const Tensor& logits,
                                   const std::vector<int>& labels) {
  if (logits.shape.d[0] != static_cast<std::int64_t>(labels.size()))
    throw DataError("accuracy_from_logits: " + std::to_string(labels.size()) +
                    " labels for " + std::to_string(logits.shape.d[0]) + " rows");
  std::int64_t correct = 0;
  for (std::int64_t t = 0; t < logits.shape.d[0]; ++t) {
    std::int64_t arg = 0;
    for (std::int64_t k = 1; k < logits.shape.d[1]; ++k)
      if (logits.at(t, k) > logits.at(t, arg)) arg = k;
    if (arg == labels[static_cast<std::size_t>(t)]) ++correct;
  }
  return logits.shape.d[0] > 0
             ? static_cast<double>(correct) / static_cast<double>(logits.shape.d[0])
             : 0.0;
}

// Streaming-path frame accuracy plus a per-class confusion matrix.
inline EvalResult evaluate(const model::ModelParams& params,
                           const config::GlobalConfig& cfg, const DataSet& data,
                           const std::string& split) {
  int k = cfg.trainer.n_classes;
  if (k < 2) throw DataError("evaluate requires trainer.n_classes >= 2");
  EvalResult res;
  res.confusion.assign(static_cast<std::size_t>(k),
                       std::vector<std::int64_t>(static_cast<std::size_t>(k), 0));
  std::int64_t correct = 0;
  for (std::size_t idx : data.split_indices(split)) {
    const DataItem& item = data.items[idx];
    if (item.labels.size() != static_cast<std::size_t>(item.features.n_frames))
      throw DataError("evaluate: utterance '" + item.entry.id + "' has " +
                      std::to_string(item.labels.size()) + " labels for " +
                      std::to_string(item.features.n_frames) + " frames");
    if (item.features.n_frames == 0) continue;
    autodiff::Tape tape;
    model::TapeBinding bind = model::bind_params_frozen(tape, params);
    autodiff::Var enc_out = model::lc_blstm_forward(
        tape, bind, tape.constant(item.features.to_tensor()), cfg.model.encoder,
        cfg.model.stream);
    autodiff::Var logits =
        tape.affine(enc_out, bind.at(std::string("out.") + kSharedHead + ".w"),
                    bind.at(std::string("out.") + kSharedHead + ".b"));
    const Tensor& lv = tape.value(logits);
    for (std::int64_t t = 0; t < lv.shape.d[0]; ++t) {
      int truth = item.labels[static_cast<std::size_t>(t)];
      if (truth < 0 || truth >= k)
        throw DataError("evaluate: label " + std::to_string(truth) +
                        " outside [0," + std::to_string(k) + ")");
      std::int64_t arg = 0;
      for (std::int64_t c = 1; c < lv.shape.d[1]; ++c)
        if (lv.at(t, c) > lv.at(t, arg)) arg = c;
      ++res.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(arg)];
      if (arg == truth) ++correct;
      ++res.n_frames;
    }
  }
  res.accuracy = res.n_frames > 0
                     ? static_cast<double>(correct) / static_cast<double>(res.n_frames)
                     : 0.0;
  return res;
}

}  // namespace train
}  // namespace lfb2vec

#endif  // LFB2VEC_TRAINER_HPP_
