// lfb2vec/cli.hpp

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

// Operator entry point. Subcommands cover every pipeline stage:
//   synth     generate a synthetic corpus (WAV + manifest + events + labels)
//   prep      resample -> VAD -> segment -> log-Mel -> feature files
//   annotate  heuristic event annotation over prepared features
//   pretrain  SSL or supervised pre-training
//   finetune  two-stage streaming fine-tuning
//   eval      streaming frame accuracy + confusion
//   gradcheck gradient validation suites (nonzero exit on failure)
//   plot      metrics CSV -> SVG loss curve, or LR schedule curve
// Exit codes: 0 success, 1 usage, 2 data/validation, 3 numerical failure.

#ifndef LFB2VEC_CLI_HPP_
#define LFB2VEC_CLI_HPP_

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "lfb2vec/config.hpp"
#include "lfb2vec/corpus.hpp"
#include "lfb2vec/dsp.hpp"
#include "lfb2vec/gradsuite.hpp"
#include "lfb2vec/plot.hpp"
#include "lfb2vec/trainer.hpp"

namespace lfb2vec {
namespace cli {

namespace detail {

namespace fs = std::filesystem;

inline void log_resolved_config(const config::GlobalConfig& cfg,
                                const std::string& out_dir) {
  nlohmann::json j = config::config_to_json(cfg);
  std::cout << "config hash " << config::config_hash(cfg) << "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "resolved_config.json",
                      std::ios::trunc);
    out << j.dump(2) << "\n";
  }
}

// prep: one source utterance -> resample, VAD, segment, features, sliced
// labels and events per segment.
struct PrepOutput {
  std::vector<corpus::UtteranceEntry> entries;
  std::map<std::string, std::vector<aed::AudioEvent>> events;
  std::map<std::string, std::vector<int>> labels;
};

inline void prep_utterance(const corpus::UtteranceEntry& src,
                           const std::string& manifest_path,
                           const config::GlobalConfig& cfg,
                           const std::vector<aed::AudioEvent>* src_events,
                           const std::vector<int>* src_labels,
                           const std::string& out_dir, PrepOutput* out) {
  PcmAudio audio = read_wav(corpus::resolve_path(manifest_path, src.path));
  if (std::fabs(audio.duration_s() - src.duration_s) > 0.011)
    throw DataError("utterance '" + src.id + "': manifest duration " +
                    std::to_string(src.duration_s) + " s but file has " +
                    std::to_string(audio.duration_s()) + " s");
  audio = dsp::resample(audio, cfg.dsp.target_rate_hz);
  std::vector<dsp::VadRegion> regions = dsp::vad(audio, cfg.dsp.vad);
  std::vector<dsp::Segment> segments =
      dsp::segment(audio, regions, cfg.dsp.max_segment_s, src.id);

  int seg_idx = 0;
  for (const dsp::Segment& seg : segments) {
    std::int64_t a = std::llround(seg.start_s * audio.rate_hz);
    std::int64_t b = std::llround(seg.end_s * audio.rate_hz);
    b = std::min<std::int64_t>(b, static_cast<std::int64_t>(audio.samples.size()));
    if (b <= a) continue;
    PcmAudio piece;
    piece.rate_hz = audio.rate_hz;
    piece.samples.assign(audio.samples.begin() + a, audio.samples.begin() + b);
    FeatureMatrix feats = dsp::logmel(piece, cfg.dsp.logmel);
    if (feats.n_frames == 0) continue;

    char id_buf[64];
    std::snprintf(id_buf, sizeof(id_buf), "%s_%03d", src.id.c_str(), seg_idx++);
    std::string seg_id = id_buf;
    std::string rel = "features/" + seg_id + ".lfb";
    write_features(feats, (fs::path(out_dir) / rel).string());

    corpus::UtteranceEntry e;
    e.id = seg_id;
    e.path = rel;
    e.duration_s = seg.end_s - seg.start_s;
    e.lang = src.lang;
    e.split = src.split;
    out->entries.push_back(e);

    if (src_events) {
      std::vector<aed::AudioEvent> shifted;
      for (const aed::AudioEvent& ev : *src_events) {
        double s = std::max(ev.start_s, seg.start_s);
        double t = std::min(ev.end_s, seg.end_s);
        if (t - s > 1e-9)
          shifted.push_back({ev.cls, s - seg.start_s, t - seg.start_s, ev.score});
      }
      out->events[seg_id] = std::move(shifted);
    }
    if (src_labels) {
      std::int64_t offset = std::llround(seg.start_s * 100.0);
      std::vector<int> sliced(static_cast<std::size_t>(feats.n_frames), 0);
      for (std::int64_t t = 0; t < feats.n_frames; ++t) {
        std::int64_t k = std::min<std::int64_t>(
            offset + t, static_cast<std::int64_t>(src_labels->size()) - 1);
        sliced[static_cast<std::size_t>(t)] = k >= 0 ? (*src_labels)[static_cast<std::size_t>(k)] : 0;
      }
      out->labels[seg_id] = std::move(sliced);
    }
  }
}

inline int cmd_synth(const config::GlobalConfig& cfg, const std::string& out_dir) {
  log_resolved_config(cfg, out_dir);
  corpus::SynthResult res = corpus::synth_corpus(cfg.corpus, out_dir);
  std::cout << "synthesized " << res.entries.size() << " utterances under "
            << out_dir << "\n";
  return 0;
}

inline int cmd_prep(const config::GlobalConfig& cfg, const std::string& manifest,
                    const std::string& out_dir) {
  log_resolved_config(cfg, out_dir);
  fs::create_directories(fs::path(out_dir) / "features");
  std::vector<corpus::UtteranceEntry> sources = corpus::load_manifest(manifest);

  std::string src_dir = fs::path(manifest).parent_path().string();
  std::map<std::string, std::vector<aed::AudioEvent>> src_events;
  bool have_events = fs::exists(fs::path(src_dir) / "events.jsonl");
  if (have_events)
    src_events = aed::load_events((fs::path(src_dir) / "events.jsonl").string());
  std::map<std::string, std::vector<int>> src_labels;
  bool have_labels = fs::exists(fs::path(src_dir) / "labels.jsonl");
  if (have_labels)
    src_labels = corpus::load_labels((fs::path(src_dir) / "labels.jsonl").string());

  PrepOutput out;
  for (const corpus::UtteranceEntry& src : sources) {
    auto ev = src_events.find(src.id);
    auto lb = src_labels.find(src.id);
    prep_utterance(src, manifest, cfg,
                   have_events && ev != src_events.end() ? &ev->second : nullptr,
                   have_labels && lb != src_labels.end() ? &lb->second : nullptr,
                   out_dir, &out);
  }
  corpus::write_manifest(out.entries, (fs::path(out_dir) / "manifest.jsonl").string());
  if (have_events)
    aed::write_events(out.events, (fs::path(out_dir) / "events.jsonl").string());
  if (have_labels)
    corpus::write_labels(out.labels, (fs::path(out_dir) / "labels.jsonl").string());
  std::cout << "prepared " << out.entries.size() << " segments from "
            << sources.size() << " utterances\n";
  return 0;
}

inline int cmd_annotate(const config::GlobalConfig& cfg, const std::string& data_dir) {
  log_resolved_config(cfg, "");
  std::string manifest = (fs::path(data_dir) / "manifest.jsonl").string();
  std::map<std::string, std::vector<aed::AudioEvent>> events;
  for (const corpus::UtteranceEntry& e : corpus::load_manifest(manifest)) {
    FeatureMatrix feats = read_features(corpus::resolve_path(manifest, e.path));
    events[e.id] = aed::heuristic_annotate(feats);
  }
  std::string out_path = (fs::path(data_dir) / "events.heuristic.jsonl").string();
  aed::write_events(events, out_path);
  std::cout << "annotated " << events.size() << " segments -> " << out_path << "\n";
  return 0;
}

inline int cmd_pretrain(const config::GlobalConfig& cfg, const std::string& data_dir,
                        const std::string& events_path, const std::string& out_dir) {
  log_resolved_config(cfg, out_dir);
  train::DataSet data = train::load_dataset(data_dir, events_path);
  train::TrainResult res = train::pretrain(data, cfg);
  train::write_metrics_csv(res.metrics, (fs::path(out_dir) / "metrics.csv").string());
  train::save_checkpoint(res.checkpoint,
                         (fs::path(out_dir) / "checkpoint.lfck").string());
  double final_loss = res.metrics.empty() ? 0.0 : res.metrics.back().loss;
  std::cout << "pretrain done: " << res.metrics.size() << " steps, final loss "
            << final_loss << "\n";
  return 0;
}

inline int cmd_finetune(const config::GlobalConfig& cfg, const std::string& data_dir,
                        const std::string& init_ckpt, const std::string& out_dir) {
  log_resolved_config(cfg, out_dir);
  train::DataSet data = train::load_dataset(data_dir);
  train::TrainResult res = train::finetune(data, cfg, init_ckpt);
  train::write_metrics_csv(res.metrics, (fs::path(out_dir) / "metrics.csv").string());
  train::save_checkpoint(res.checkpoint,
                         (fs::path(out_dir) / "checkpoint.lfck").string());
  double final_loss = res.metrics.empty() ? 0.0 : res.metrics.back().loss;
  std::cout << "finetune done: " << res.metrics.size() << " steps, final loss "
            << final_loss << "\n";
  return 0;
}

inline int cmd_eval(const config::GlobalConfig& cfg, const std::string& data_dir,
                    const std::string& ckpt_path, const std::string& split,
                    const std::string& report_path) {
  log_resolved_config(cfg, "");
  train::DataSet data = train::load_dataset(data_dir);
  train::Checkpoint ckpt = train::load_checkpoint(ckpt_path);
  model::ModelParams params;
  for (const auto& [name, t] : ckpt.tensors)
    if (name.rfind("opt.", 0) != 0) params.tensors[name] = t;
  train::EvalResult res = train::evaluate(params, cfg, data, split);
  nlohmann::json report{{"accuracy", res.accuracy},
                        {"n_frames", res.n_frames},
                        {"split", split},
                        {"confusion", res.confusion}};
  if (!report_path.empty()) {
    std::ofstream out(report_path, std::ios::trunc);
    if (!out) throw DataError("cannot write report: " + report_path);
    out << report.dump(2) << "\n";
  }
  std::printf("accuracy %.6f over %lld frames (%s split)\n", res.accuracy,
              static_cast<long long>(res.n_frames), split.c_str());
  return 0;
}

inline int cmd_gradcheck() {
  std::vector<gradsuite::CheckResult> results = gradsuite::run_all();
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("%-24s max_rel_err %.3e (< %.0e)  %s\n", r.name.c_str(),
                r.max_rel_err, r.threshold, r.pass ? "ok" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  if (!all_pass) throw NumericalError("gradient checks failed");
  return 0;
}

inline int cmd_plot(const std::string& metrics_path, bool schedule,
                    const config::GlobalConfig* cfg, const std::string& out_path) {
  if (schedule) {
    if (!cfg) throw UsageError("plot --schedule needs --config");
    optim::LrSchedule s{cfg->optim.max_lr, cfg->trainer.steps,
                        cfg->optim.warmup_frac, cfg->optim.floor_lr};
    std::vector<double> xs, ys;
    for (long long step = 0; step <= s.total_steps; ++step) {
      xs.push_back(static_cast<double>(step));
      ys.push_back(optim::lr_at(step, s));
    }
    plot::write_svg(plot::svg_line_chart(xs, ys, "learning-rate schedule", "step",
                                         "lr"),
                    out_path);
  } else {
    std::vector<double> xs, ys;
    plot::read_metrics_csv(metrics_path, &xs, &ys);
    plot::write_svg(plot::svg_line_chart(xs, ys, "training loss", "step", "loss"),
                    out_path);
  }
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace detail

inline int run(int argc, const char* const* argv) {
  CLI::App app{"desk-scale contrastive speech pre-training pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir, manifest, data_dir, events_path, init_ckpt;
  std::string ckpt_path, split = "test", report_path, metrics_path;
  std::vector<std::string> overrides;
  int workers = 0;
  bool schedule = false;

  auto add_config = [&](CLI::App* sub, bool required = true) {
    CLI::Option* opt =
        sub->add_option("--config", config_path, "global JSON config");
    if (required) opt->required();
    sub->add_option("--set", overrides,
                    "config override section.key=value (repeatable)");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  add_config(synth);
  synth->add_option("--out", out_dir, "output corpus directory")->required();

  CLI::App* prep = app.add_subcommand(
      "prep", "resample, VAD, segment and extract log-Mel features");
  add_config(prep);
  prep->add_option("--manifest", manifest, "input WAV manifest")->required();
  prep->add_option("--out", out_dir, "output feature directory")->required();

  CLI::App* annotate =
      app.add_subcommand("annotate", "heuristic event annotation of features");
  add_config(annotate);
  annotate->add_option("--data", data_dir, "prepared feature directory")->required();

  CLI::App* pretrain = app.add_subcommand("pretrain", "run pre-training");
  add_config(pretrain);
  pretrain->add_option("--data", data_dir, "prepared feature directory")->required();
  pretrain->add_option("--events", events_path,
                       "event annotations (default: events.jsonl next to the data)");
  pretrain->add_option("--out", out_dir, "run output directory")->required();
  pretrain->add_option("--workers", workers, "worker threads");

  CLI::App* finetune = app.add_subcommand("finetune", "two-stage fine-tuning");
  add_config(finetune);
  finetune->add_option("--data", data_dir, "prepared labeled feature directory")
      ->required();
  finetune->add_option("--init", init_ckpt, "pre-training checkpoint (omit for scratch)");
  finetune->add_option("--out", out_dir, "run output directory")->required();
  finetune->add_option("--workers", workers, "worker threads");

  CLI::App* eval_cmd = app.add_subcommand("eval", "streaming frame accuracy");
  add_config(eval_cmd);
  eval_cmd->add_option("--data", data_dir, "prepared labeled feature directory")
      ->required();
  eval_cmd->add_option("--model", ckpt_path, "checkpoint to evaluate")->required();
  eval_cmd->add_option("--split", split, "manifest split to evaluate (default test)");
  eval_cmd->add_option("--report", report_path, "write a JSON report here");

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "run the gradient validation suites");

  CLI::App* plot_cmd = app.add_subcommand("plot", "render SVG charts");
  add_config(plot_cmd, /*required=*/false);
  plot_cmd->add_option("--metrics", metrics_path, "metrics CSV to plot");
  plot_cmd->add_flag("--schedule", schedule, "plot the LR schedule instead");
  plot_cmd->add_option("--out", out_dir, "output SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  }

  try {
    config::GlobalConfig cfg;
    bool have_cfg = !config_path.empty();
    if (have_cfg) cfg = config::load_config(config_path, overrides);
    if (workers > 0) cfg.trainer.workers = workers;

    if (synth->parsed()) return detail::cmd_synth(cfg, out_dir);
    if (prep->parsed()) return detail::cmd_prep(cfg, manifest, out_dir);
    if (annotate->parsed()) return detail::cmd_annotate(cfg, data_dir);
    if (pretrain->parsed())
      return detail::cmd_pretrain(cfg, data_dir, events_path, out_dir);
    if (finetune->parsed())
      return detail::cmd_finetune(cfg, data_dir, init_ckpt, out_dir);
    if (eval_cmd->parsed())
      return detail::cmd_eval(cfg, data_dir, ckpt_path, split, report_path);
    if (gradcheck->parsed()) return detail::cmd_gradcheck();
    if (plot_cmd->parsed()) {
      if (!schedule && metrics_path.empty())
        throw UsageError("plot needs --metrics or --schedule");
      return detail::cmd_plot(metrics_path, schedule, have_cfg ? &cfg : nullptr,
                              out_dir);
    }
    throw UsageError("no subcommand selected");
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace cli
}  // namespace lfb2vec

#endif  // LFB2VEC_CLI_HPP_
