// lfb2vec/losses.hpp

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

// Contrastive objectives. Conventions used everywhere:
//  - scores[0] is the positive candidate, scores[1..N) the negatives;
//  - the InfoNCE objective is a value to maximize, so the returned loss is
//    its negation: loss = logsumexp(s) - s_0 - ln N (mean normalization) or
//    log(1 + S) with S = sum_j>=1 exp(s_j - s_0) (sum normalization, exactly
//    ln N larger with identical gradients);
//  - flatNCE (default form) is S' / detach(S') after a max shift: the forward
//    value is identically 1 while the gradient equals grad(S)/S.

#ifndef LFB2VEC_LOSSES_HPP_
#define LFB2VEC_LOSSES_HPP_

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lfb2vec/autodiff.hpp"
#include "lfb2vec/common.hpp"

namespace lfb2vec {
namespace loss {

using autodiff::Tape;
using autodiff::Var;

enum class ContrastiveKind { kInfoNce, kFlatNce };
enum class InfoNceNorm { kMean, kSum };
enum class FlatVariant { kSumForm, kEq2Literal };

// One anchor with its positive (ys[0]) and negatives (ys[1..]).
struct ScoredSet {
  std::vector<double> x;
  std::vector<std::vector<double>> ys;
  double tau = 0.1;
};

inline double cosine(const std::vector<double>& x, const std::vector<double>& y,
                     double tau) {
  if (x.size() != y.size())
    throw NumericalError("cosine: dim mismatch " + std::to_string(x.size()) +
                         " vs " + std::to_string(y.size()));
  double xy = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xy += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  if (xx == 0.0 || yy == 0.0) throw NumericalError("cosine: zero-norm vector");
  return xy / (std::sqrt(xx) * std::sqrt(yy)) / tau;
}

// K indices uniform over {0..T-1} \ {positive}; without replacement when
// enough distinct positions exist, with replacement otherwise.
inline std::vector<std::int64_t> sample_negatives(std::int64_t t_positions,
                                                  std::int64_t positive,
                                                  std::int64_t k, Rng& rng) {
  if (t_positions < 2)
    throw DataError("sample_negatives: no negatives exist with T=" +
                    std::to_string(t_positions));
  if (positive < 0 || positive >= t_positions)
    throw DataError("sample_negatives: positive index out of range");
  std::vector<std::int64_t> out;
  out.reserve(static_cast<std::size_t>(k));
  if (t_positions - 1 >= k) {
    std::vector<std::int64_t> cand;
    cand.reserve(static_cast<std::size_t>(t_positions - 1));
    for (std::int64_t i = 0; i < t_positions; ++i)
      if (i != positive) cand.push_back(i);
    for (std::int64_t i = 0; i < k; ++i) {
      std::int64_t j = i + rng.uniform_int(static_cast<std::int64_t>(cand.size()) - i);
      std::swap(cand[static_cast<std::size_t>(i)], cand[static_cast<std::size_t>(j)]);
      out.push_back(cand[static_cast<std::size_t>(i)]);
    }
  } else {
    for (std::int64_t i = 0; i < k; ++i) {
      std::int64_t j = rng.uniform_int(t_positions - 1);
      out.push_back(j >= positive ? j + 1 : j);
    }
  }
  return out;
}

// ---- tape-level losses over a score vector ----------------------------------

inline Var infonce_loss(Tape& tape, Var scores, InfoNceNorm norm = InfoNceNorm::kMean) {
  const Tensor& sv = tape.value(scores);
  if (sv.shape.rank != 1 || sv.shape.d[0] < 1)
    throw DataError("infonce_loss: need a non-empty score vector");
  for (double s : sv.v)
    if (!std::isfinite(s)) throw NumericalError("infonce_loss: non-finite score");
  std::int64_t n = sv.shape.d[0];
  Var loss = tape.sub(tape.logsumexp(scores), tape.element(scores, 0));
  if (norm == InfoNceNorm::kMean)
    loss = tape.add_const(loss, -std::log(static_cast<double>(n)));
  return loss;
}

inline Var flatnce_loss(Tape& tape, Var scores,
                        FlatVariant variant = FlatVariant::kSumForm) {
  const Tensor& sv = tape.value(scores);
  if (sv.shape.rank != 1 || sv.shape.d[0] < 2)
    throw DataError("flatnce_loss: need at least one negative (N >= 2)");
  for (double s : sv.v)
    if (!std::isfinite(s)) throw NumericalError("flatnce_loss: non-finite score");
  std::int64_t n = sv.shape.d[0];

  if (variant == FlatVariant::kSumForm) {
    Var s0 = tape.element(scores, 0);
    Var diffs = tape.sub_broadcast(tape.slice_rows(scores, 1, n - 1), s0);
    // max shift as a constant so exp cannot overflow; it cancels in the ratio
    double m = *std::max_element(tape.value(diffs).v.begin(),
                                 tape.value(diffs).v.end());
    Var expsum = tape.sum(tape.exp_(tape.add_const(diffs, -m)));
    return tape.div(expsum, tape.detach(expsum));
  }

  // literal form: numerator log((1/N) sum e^{s_j}) - s_0 over its own
  // detached copy, with a magnitude floor because the numerator can cross
  // zero when the positive dominates.
  Var num = tape.add_const(
      tape.sub(tape.logsumexp(scores), tape.element(scores, 0)),
      -std::log(static_cast<double>(n)));
  double denom = tape.scalar_value(num);
  if (std::fabs(denom) < 1e-8) denom = denom < 0.0 ? -1e-8 : 1e-8;
  return tape.scale(num, 1.0 / denom);
}

inline Var cross_entropy_loss(Tape& tape, Var logits,
                              const std::vector<std::int64_t>& labels,
                              bool mean_over_rows = true) {
  return tape.softmax_xent(logits, labels, mean_over_rows);
}

// ---- ScoredSet conveniences (tests and standalone evaluation) ----------------

struct LossOut {
  double value = 0.0;
  Tensor grad_x;
  Tensor grad_ys;  // (N, dim), rows aligned with ScoredSet::ys
};

namespace detail {

inline void check_scored_set(const ScoredSet& set) {
  if (set.ys.empty()) throw DataError("ScoredSet: no candidates");
  for (const auto& y : set.ys)
    if (y.size() != set.x.size())
      throw DataError("ScoredSet: candidate dim mismatch");
  if (set.tau <= 0.0) throw DataError("ScoredSet: tau must be positive");
}

// f(x, y_j) = cosine/tau on the tape (normalization differentiable).
inline Var scores_on_tape(Tape& tape, const ScoredSet& set, Var x, Var ys) {
  Var xn = tape.l2_normalize_rows(x);
  Var yn = tape.l2_normalize_rows(ys);
  return tape.scale(tape.matvec(yn, xn), 1.0 / set.tau);
}

template <typename BuildLoss>
LossOut run_scored_set(const ScoredSet& set, const BuildLoss& build) {
  check_scored_set(set);
  Tape tape;
  Var x = tape.leaf(Tensor::vector(set.x), true);
  Tensor ymat(Shape::matrix(static_cast<std::int64_t>(set.ys.size()),
                            static_cast<std::int64_t>(set.x.size())));
  for (std::size_t i = 0; i < set.ys.size(); ++i)
    std::copy(set.ys[i].begin(), set.ys[i].end(),
              ymat.v.begin() + static_cast<std::ptrdiff_t>(i * set.x.size()));
  Var ys = tape.leaf(ymat, true);
  Var loss = build(tape, scores_on_tape(tape, set, x, ys));
  LossOut out;
  out.value = tape.scalar_value(loss);
  tape.backward(loss);
  out.grad_x = tape.grad(x);
  out.grad_ys = tape.grad(ys);
  return out;
}

}  // namespace detail

inline LossOut infonce(const ScoredSet& set, InfoNceNorm norm = InfoNceNorm::kMean) {
  return detail::run_scored_set(set, [norm](Tape& t, Var s) {
    return infonce_loss(t, s, norm);
  });
}

inline LossOut flatnce(const ScoredSet& set, FlatVariant variant = FlatVariant::kSumForm) {
  return detail::run_scored_set(set, [variant](Tape& t, Var s) {
    return flatnce_loss(t, s, variant);
  });
}

inline LossOut cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels) {
  Tape tape;
  Var l = tape.leaf(logits, true);
  Var loss = cross_entropy_loss(tape, l, labels);
  LossOut out;
  out.value = tape.scalar_value(loss);
  tape.backward(loss);
  out.grad_ys = tape.grad(l);
  return out;
}

// ---- batched contrastive loss over one utterance ------------------------------

struct ContrastiveBatch {
  Var sum;                     // sum of per-anchor losses (valid iff n_anchors > 0)
  std::int64_t n_anchors = 0;  // anchors contributing to the sum
  std::int64_t n_skipped = 0;  // anchors without negatives (T < 2)
};

// Per-anchor candidate set: the target at the anchor position plus K
// negatives drawn from the utterance's other positions. context_anchors and
// targets carry unit rows (the heads L2-normalize), so cosine is the dot
// product scaled by 1/tau. One value is drawn from `rng` per call and each
// anchor derives its negative stream from (that value, anchor position), so
// the loss is invariant under anchor permutation and duplicated anchors score
// identically.
inline ContrastiveBatch batch_contrastive(Tape& tape, Var context_anchors,
                                          Var targets,
                                          const std::vector<std::int64_t>& mask,
                                          ContrastiveKind kind, std::int64_t k,
                                          double tau, Rng& rng,
                                          FlatVariant variant = FlatVariant::kSumForm,
                                          InfoNceNorm norm = InfoNceNorm::kMean) {
  const Tensor& av = tape.value(context_anchors);
  const Tensor& tv = tape.value(targets);
  if (av.shape.rank != 2 || tv.shape.rank != 2 || av.shape.d[1] != tv.shape.d[1])
    throw DataError("batch_contrastive: shape mismatch " + av.shape.str() +
                    " vs " + tv.shape.str());
  if (av.shape.d[0] != static_cast<std::int64_t>(mask.size()))
    throw DataError("batch_contrastive: anchors/mask size mismatch");
  if (tau <= 0.0) throw DataError("batch_contrastive: tau must be positive");

  ContrastiveBatch out;
  std::int64_t t_positions = tv.shape.d[0];
  std::uint64_t call_seed = rng.raw();
  std::vector<Var> terms;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    std::int64_t pos = mask[i];
    if (t_positions < 2) {
      ++out.n_skipped;
      continue;
    }
    Rng anchor_rng(Rng::derive(call_seed, static_cast<std::uint64_t>(pos)));
    std::vector<std::int64_t> idx{pos};
    for (std::int64_t neg : sample_negatives(t_positions, pos, k, anchor_rng))
      idx.push_back(neg);
    Var cand = tape.gather_rows(targets, idx);
    Var anchor = tape.row(context_anchors, static_cast<std::int64_t>(i));
    Var scores = tape.scale(tape.matvec(cand, anchor), 1.0 / tau);
    terms.push_back(kind == ContrastiveKind::kInfoNce
                        ? infonce_loss(tape, scores, norm)
                        : flatnce_loss(tape, scores, variant));
    ++out.n_anchors;
  }
  if (!terms.empty()) {
    Var acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = tape.add(acc, terms[i]);
    out.sum = acc;
  }
  return out;
}

// Mean-per-anchor wrapper; empty mask sets yield a constant zero (flagged via
// n_anchors == 0).
inline ContrastiveBatch batch_contrastive_mean(
    Tape& tape, Var context_anchors, Var targets,
    const std::vector<std::int64_t>& mask, ContrastiveKind kind, std::int64_t k,
    double tau, Rng& rng, FlatVariant variant = FlatVariant::kSumForm,
    InfoNceNorm norm = InfoNceNorm::kMean) {
  ContrastiveBatch out = batch_contrastive(tape, context_anchors, targets, mask,
                                           kind, k, tau, rng, variant, norm);
  out.sum = out.n_anchors > 0
                ? tape.scale(out.sum, 1.0 / static_cast<double>(out.n_anchors))
                : tape.constant_scalar(0.0);
  return out;
}

}  // namespace loss
}  // namespace lfb2vec

#endif  // LFB2VEC_LOSSES_HPP_
