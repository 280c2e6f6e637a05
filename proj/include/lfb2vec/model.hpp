// lfb2vec/model.hpp

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

// The network: span masking, stacked bidirectional LSTM encoder, dual 20-dim
// L2-normalized projection heads (per language in the multi-head variant),
// and latency-controlled streaming inference for the acoustic-model path.

#ifndef LFB2VEC_MODEL_HPP_
#define LFB2VEC_MODEL_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lfb2vec/autodiff.hpp"
#include "lfb2vec/common.hpp"
#include "lfb2vec/features.hpp"

namespace lfb2vec {
namespace model {

using autodiff::Tape;
using autodiff::Var;

struct MaskSpec {
  double start_prob = 0.065;  // per-frame span-start probability
  int span = 10;              // frames masked per start
  enum Policy { kZeros, kLearned } policy = kZeros;
};

struct EncoderSpec {
  int n_layers = 2;   // paper scale: 6
  int hidden = 64;    // paper scale: 600
  int input_dim = 80;
};

struct StreamSpec {
  int chunk_frames = 20;
  int lookahead_frames = 20;
};

inline constexpr int kProjDim = 20;

// Named parameter set with reverse-mode support via per-step tape leases.
// Naming scheme:
//   enc.l<i>.<fwd|bwd>.{wx,wh,b}      encoder layer i, direction
//   proj.<lang>.<ctx|tgt>.{w,b}       projection head pair per language
//   out.<lang>.{w,b}                  softmax head for supervised paths
//   mask.embed                        learned mask vector (kLearned policy)
// Gate packing in wx/wh/b is [input, forget, cell, output].
class ModelParams {
 public:
  std::map<std::string, Tensor> tensors;

  bool has(const std::string& name) const { return tensors.count(name) != 0; }
  Tensor& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("unknown parameter: " + name);
    return it->second;
  }
  const Tensor& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("unknown parameter: " + name);
    return it->second;
  }

  std::vector<std::string> names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [name, t] : tensors)
      if (name.rfind(prefix, 0) == 0) out.push_back(name);
    return out;
  }
};

namespace detail {

inline Tensor uniform_init(Shape s, double bound, Rng& rng) {
  Tensor t(s);
  for (double& x : t.v) x = rng.uniform(-bound, bound);
  return t;
}

inline void add_lstm_dir(ModelParams& p, const std::string& prefix, int in_dim,
                         int hidden, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  p.tensors[prefix + ".wx"] = uniform_init(Shape::matrix(in_dim, 4 * hidden), bound, rng);
  double hbound = 1.0 / std::sqrt(static_cast<double>(hidden));
  p.tensors[prefix + ".wh"] = uniform_init(Shape::matrix(hidden, 4 * hidden), hbound, rng);
  Tensor b(Shape::vector(4 * hidden));
  for (int j = hidden; j < 2 * hidden; ++j) b.v[static_cast<std::size_t>(j)] = 1.0;  // forget gate
  p.tensors[prefix + ".b"] = b;
}

inline void add_projection(ModelParams& p, const std::string& prefix, int in_dim,
                           Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  p.tensors[prefix + ".w"] = uniform_init(Shape::matrix(in_dim, kProjDim), bound, rng);
  p.tensors[prefix + ".b"] = Tensor(Shape::vector(kProjDim));
}

}  // namespace detail

inline void add_encoder_params(ModelParams& p, const EncoderSpec& enc, Rng& rng) {
  for (int l = 0; l < enc.n_layers; ++l) {
    int in_dim = l == 0 ? enc.input_dim : 2 * enc.hidden;
    std::string base = "enc.l" + std::to_string(l);
    detail::add_lstm_dir(p, base + ".fwd", in_dim, enc.hidden, rng);
    detail::add_lstm_dir(p, base + ".bwd", in_dim, enc.hidden, rng);
  }
}

// SSL model: shared encoder + (context, target) projection pair per language.
inline ModelParams init_ssl_model(const EncoderSpec& enc,
                                  const std::vector<std::string>& langs,
                                  const MaskSpec& mask, std::uint64_t seed) {
  if (langs.empty()) throw DataError("init_ssl_model: no languages configured");
  Rng rng(Rng::derive(seed, fnv1a("init.ssl")));
  ModelParams p;
  add_encoder_params(p, enc, rng);
  for (const std::string& lang : langs) {
    detail::add_projection(p, "proj." + lang + ".ctx", 2 * enc.hidden, rng);
    detail::add_projection(p, "proj." + lang + ".tgt", enc.input_dim, rng);
  }
  if (mask.policy == MaskSpec::kLearned)
    p.tensors["mask.embed"] = detail::uniform_init(Shape::vector(enc.input_dim), 0.1, rng);
  return p;
}

// Acoustic model: shared encoder + per-language softmax head.
inline ModelParams init_acoustic_model(const EncoderSpec& enc,
                                       const std::vector<std::string>& langs,
                                       int n_classes, std::uint64_t seed) {
  if (langs.empty()) throw DataError("init_acoustic_model: no languages configured");
  if (n_classes < 2) throw DataError("init_acoustic_model: n_classes must be >= 2");
  Rng rng(Rng::derive(seed, fnv1a("init.am")));
  ModelParams p;
  add_encoder_params(p, enc, rng);
  for (const std::string& lang : langs) {
    double bound = 1.0 / std::sqrt(static_cast<double>(2 * enc.hidden));
    p.tensors["out." + lang + ".w"] =
        detail::uniform_init(Shape::matrix(2 * enc.hidden, n_classes), bound, rng);
    p.tensors["out." + lang + ".b"] = Tensor(Shape::vector(n_classes));
  }
  return p;
}

// Parameters leased onto a tape for one step. `trainable` selects which
// tensors require grad; anything else is a constant leaf (frozen).
struct TapeBinding {
  std::map<std::string, Var> vars;

  Var at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw DataError("parameter not bound: " + name);
    return it->second;
  }
};

inline TapeBinding bind_params(Tape& tape, const ModelParams& params,
                               const std::set<std::string>& trainable) {
  TapeBinding b;
  for (const auto& [name, t] : params.tensors)
    b.vars[name] = tape.leaf(t, trainable.count(name) != 0);
  return b;
}

inline TapeBinding bind_params_all_trainable(Tape& tape, const ModelParams& params) {
  TapeBinding b;
  for (const auto& [name, t] : params.tensors) b.vars[name] = tape.leaf(t, true);
  return b;
}

inline TapeBinding bind_params_frozen(Tape& tape, const ModelParams& params) {
  return bind_params(tape, params, {});
}

// ---- masking ----------------------------------------------------------------

// Independent span starts: each t in [0, T) opens a span [t, t+span) with
// probability start_prob; the mask is the union (overlaps collapse).
inline std::vector<std::int64_t> mask_spans(std::int64_t t_frames,
                                            const MaskSpec& spec, Rng& rng) {
  if (spec.start_prob < 0.0 || spec.start_prob > 1.0)
    throw DataError("mask_spans: start_prob outside [0,1]");
  if (spec.span < 1) throw DataError("mask_spans: span must be >= 1");
  std::vector<std::uint8_t> masked(static_cast<std::size_t>(t_frames), 0);
  for (std::int64_t t = 0; t < t_frames; ++t)
    if (rng.bernoulli(spec.start_prob)) {
      std::int64_t hi = std::min<std::int64_t>(t_frames, t + spec.span);
      for (std::int64_t u = t; u < hi; ++u) masked[static_cast<std::size_t>(u)] = 1;
    }
  std::vector<std::int64_t> out;
  for (std::int64_t t = 0; t < t_frames; ++t)
    if (masked[static_cast<std::size_t>(t)]) out.push_back(t);
  return out;
}

// Plain-value masking for the zeros policy (the tape path uses mask_rows so a
// learned fill vector stays differentiable).
inline FeatureMatrix apply_mask(const FeatureMatrix& m,
                                const std::vector<std::int64_t>& mask) {
  FeatureMatrix out = m;
  for (std::int64_t t : mask)
    for (std::int64_t d = 0; d < m.n_mels; ++d) out.at(t, d) = 0.0;
  return out;
}

// ---- recurrent encoder -------------------------------------------------------

namespace detail {

// One LSTM direction over rows [lo, hi) of `x_all`, time-reversed when
// reverse=true, starting from (h0, c0). Returns per-frame hidden rows in
// natural time order plus the state snapshot taken after `snapshot_at`
// (absolute row index; pass -1 for none).
struct DirOut {
  std::vector<Var> rows;  // hi - lo entries, index 0 = row lo
  Var h_snap;
  Var c_snap;
};

inline DirOut lstm_direction(Tape& tape, const TapeBinding& b,
                             const std::string& prefix, Var x_all,
                             std::int64_t lo, std::int64_t hi, int hidden,
                             bool reverse, Var h0, Var c0,
                             std::int64_t snapshot_at = -1) {
  Var wx = b.at(prefix + ".wx");
  Var wh = b.at(prefix + ".wh");
  Var bias = b.at(prefix + ".b");
  // input projections for the whole window at once
  Var zx_all = tape.affine(x_all, wx, bias);

  DirOut out;
  out.rows.resize(static_cast<std::size_t>(hi - lo));
  Var h = h0, c = c0;
  out.h_snap = h0;
  out.c_snap = c0;
  for (std::int64_t step = 0; step < hi - lo; ++step) {
    std::int64_t t = reverse ? hi - 1 - step : lo + step;
    Var z = tape.add(tape.row(zx_all, t - lo), tape.affine(h, wh));
    Var gi = tape.sigmoid(tape.slice_rows(z, 0, hidden));
    Var gf = tape.sigmoid(tape.slice_rows(z, hidden, hidden));
    Var gc = tape.tanh_(tape.slice_rows(z, 2 * hidden, hidden));
    Var go = tape.sigmoid(tape.slice_rows(z, 3 * hidden, hidden));
    c = tape.add(tape.mul(gf, c), tape.mul(gi, gc));
    h = tape.mul(go, tape.tanh_(c));
    out.rows[static_cast<std::size_t>(t - lo)] = h;
    if (t == snapshot_at) {
      out.h_snap = h;
      out.c_snap = c;
    }
  }
  return out;
}

}  // namespace detail

// Full-sequence stacked bidirectional encoder: returns (T, 2*hidden).
inline Var blstm_forward(Tape& tape, const TapeBinding& b, Var features,
                         const EncoderSpec& enc) {
  const Tensor& fv = tape.value(features);
  if (fv.shape.rank != 2 || fv.shape.d[1] != enc.input_dim)
    throw DataError("blstm_forward: features " + fv.shape.str() +
                    " do not match input_dim " + std::to_string(enc.input_dim));
  std::int64_t t_frames = fv.shape.d[0];
  if (t_frames == 0)
    return tape.constant(Tensor(Shape::matrix(0, 2 * enc.hidden)));

  Var x = features;
  for (int l = 0; l < enc.n_layers; ++l) {
    std::string base = "enc.l" + std::to_string(l);
    Var zero = tape.constant(Tensor(Shape::vector(enc.hidden)));
    auto fwd = detail::lstm_direction(tape, b, base + ".fwd", x, 0, t_frames,
                                      enc.hidden, false, zero, zero);
    auto bwd = detail::lstm_direction(tape, b, base + ".bwd", x, 0, t_frames,
                                      enc.hidden, true, zero, zero);
    Var hf = tape.stack_rows(fwd.rows, enc.hidden);
    Var hb = tape.stack_rows(bwd.rows, enc.hidden);
    x = tape.concat_cols(hf, hb);
  }
  return x;
}

// Latency-controlled variant: the input is processed in chunks of Nc frames;
// each chunk window also sees the next Nr lookahead frames. Forward-direction
// state is carried across chunks exactly as in full-sequence processing (the
// carried state is the one after the last main frame); the backward direction
// is re-initialized per window and truncates at the lookahead horizon. Only
// main-chunk frames emit output rows.
inline Var lc_blstm_forward(Tape& tape, const TapeBinding& b, Var features,
                            const EncoderSpec& enc, const StreamSpec& stream) {
  const Tensor& fv = tape.value(features);
  if (fv.shape.rank != 2 || fv.shape.d[1] != enc.input_dim)
    throw DataError("lc_blstm_forward: features " + fv.shape.str() +
                    " do not match input_dim " + std::to_string(enc.input_dim));
  if (stream.chunk_frames < 1 || stream.lookahead_frames < 0)
    throw DataError("lc_blstm_forward: bad StreamSpec");
  std::int64_t t_frames = fv.shape.d[0];
  if (t_frames == 0)
    return tape.constant(Tensor(Shape::matrix(0, 2 * enc.hidden)));

  std::int64_t nc = stream.chunk_frames, nr = stream.lookahead_frames;
  std::vector<Var> carried_h(static_cast<std::size_t>(enc.n_layers));
  std::vector<Var> carried_c(static_cast<std::size_t>(enc.n_layers));
  Var zero = tape.constant(Tensor(Shape::vector(enc.hidden)));
  for (int l = 0; l < enc.n_layers; ++l) {
    carried_h[static_cast<std::size_t>(l)] = zero;
    carried_c[static_cast<std::size_t>(l)] = zero;
  }

  std::vector<Var> emitted;
  for (std::int64_t c0 = 0; c0 < t_frames; c0 += nc) {
    std::int64_t main_end = std::min(t_frames, c0 + nc);
    std::int64_t win_end = std::min(t_frames, c0 + nc + nr);
    Var x = tape.slice_rows(features, c0, win_end - c0);
    for (int l = 0; l < enc.n_layers; ++l) {
      std::string base = "enc.l" + std::to_string(l);
      auto fwd = detail::lstm_direction(tape, b, base + ".fwd", x, c0, win_end,
                                        enc.hidden, false,
                                        carried_h[static_cast<std::size_t>(l)],
                                        carried_c[static_cast<std::size_t>(l)],
                                        main_end - 1);
      carried_h[static_cast<std::size_t>(l)] = fwd.h_snap;
      carried_c[static_cast<std::size_t>(l)] = fwd.c_snap;
      auto bwd = detail::lstm_direction(tape, b, base + ".bwd", x, c0, win_end,
                                        enc.hidden, true, zero, zero);
      Var hf = tape.stack_rows(fwd.rows, enc.hidden);
      Var hb = tape.stack_rows(bwd.rows, enc.hidden);
      x = tape.concat_cols(hf, hb);
    }
    emitted.push_back(tape.slice_rows(x, 0, main_end - c0));
  }
  Var out = emitted[0];
  for (std::size_t i = 1; i < emitted.size(); ++i)
    out = tape.concat_rows(out, emitted[i]);
  return out;
}

// ---- projection heads and the full SSL assembly -------------------------------

inline Var projection_head(Tape& tape, const TapeBinding& b,
                           const std::string& prefix, Var x) {
  return tape.l2_normalize_rows(tape.affine(x, b.at(prefix + ".w"), b.at(prefix + ".b")));
}

struct Lfb2vecOut {
  std::vector<std::int64_t> mask;  // masked frame indices (anchors)
  Var context_anchors;             // (|mask|, kProjDim), unit rows
  Var targets;                     // (T, kProjDim), unit rows
};

inline std::string head_lang(const ModelParams& params, const std::string& lang,
                             const char* head_kind) {
  std::string key = std::string("proj.") + lang + "." + head_kind + ".w";
  if (params.has(key)) return lang;
  std::vector<std::string> heads = params.names_with_prefix("proj.");
  std::set<std::string> langs;
  for (const std::string& h : heads) {
    std::string rest = h.substr(5);
    langs.insert(rest.substr(0, rest.find('.')));
  }
  std::string known;
  for (const std::string& l : langs) known += (known.empty() ? "" : ", ") + l;
  throw DataError("no projection head for language '" + lang +
                  "' (configured: " + known + ")");
}

// Context path: masked features -> encoder -> context head -> L2; target
// path: raw features -> target head -> L2. Anchors are emitted only at
// masked positions. Single-head models register their lone pair under the
// language they were configured with.
inline Lfb2vecOut lfb2vec_forward(Tape& tape, const TapeBinding& b,
                                  const ModelParams& params,
                                  const FeatureMatrix& features,
                                  const std::string& lang, const MaskSpec& spec,
                                  const std::vector<std::int64_t>& mask,
                                  const EncoderSpec& enc) {
  std::string hl = head_lang(params, lang, "ctx");
  Var raw = tape.constant(features.to_tensor());

  std::vector<std::uint8_t> mask_bits(static_cast<std::size_t>(features.n_frames), 0);
  for (std::int64_t t : mask) {
    if (t < 0 || t >= features.n_frames)
      throw DataError("lfb2vec_forward: mask index " + std::to_string(t) +
                      " out of range");
    mask_bits[static_cast<std::size_t>(t)] = 1;
  }
  Var fill = spec.policy == MaskSpec::kLearned
                 ? b.at("mask.embed")
                 : tape.constant(Tensor(Shape::vector(features.n_mels)));
  Var masked = tape.mask_rows(raw, mask_bits, fill);

  Var encoded = blstm_forward(tape, b, masked, enc);
  Var context = projection_head(tape, b, "proj." + hl + ".ctx", encoded);
  Var targets = projection_head(tape, b, "proj." + hl + ".tgt", raw);

  Lfb2vecOut out;
  out.mask = mask;
  out.context_anchors = tape.gather_rows(context, mask);
  out.targets = targets;
  return out;
}

}  // namespace model
}  // namespace lfb2vec

#endif  // LFB2VEC_MODEL_HPP_
