// lfb2vec/gradsuite.hpp

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

// The gradient validation suite behind the `gradcheck` subcommand: every
// differentiable op, the recurrent stacks, the full SSL assembly and all
// losses against central finite differences.
//
// Two oracle styles:
//  - plain: grad_check on the function itself;
//  - frozen: for functions containing detach (flatNCE's forward is constant,
//    so naive differences are zero by construction), the analytic gradient is
//    compared against differences of the equivalent function whose detached
//    values are frozen at the unperturbed point. The frozen builders record
//    those values on their first evaluation.
// Recurrent checks use a coarser eps because their smallest gradients sit at
// the central-difference noise floor.

#ifndef LFB2VEC_GRADSUITE_HPP_
#define LFB2VEC_GRADSUITE_HPP_

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lfb2vec/autodiff.hpp"
#include "lfb2vec/losses.hpp"
#include "lfb2vec/model.hpp"

namespace lfb2vec {
namespace gradsuite {

struct CheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

namespace detail {

using autodiff::Tape;
using autodiff::Var;
using BuildFn = std::function<Var(Tape&, const std::vector<Var>&)>;

inline Tensor rand_tensor(Shape s, Rng& rng, double scale = 1.0) {
  Tensor t(s);
  for (double& x : t.v) x = rng.uniform(-scale, scale);
  return t;
}

inline CheckResult run_plain(const std::string& name, const BuildFn& fn,
                             const std::vector<Tensor>& params, double threshold,
                             double eps) {
  CheckResult res;
  res.name = name;
  res.threshold = threshold;
  res.max_rel_err = autodiff::grad_check(fn, params, eps).max_rel_err;
  res.pass = res.max_rel_err < threshold;
  return res;
}

// Analytic gradient of `analytic_fn` at `params` vs. central differences of
// `frozen_fn`. The frozen builder must be evaluated once at the base point
// first (to record its detached constants), which this runner guarantees.
inline CheckResult run_frozen(const std::string& name, const BuildFn& analytic_fn,
                              const BuildFn& frozen_fn,
                              const std::vector<Tensor>& params, double threshold,
                              double eps) {
  auto eval = [](const BuildFn& fn, const std::vector<Tensor>& p, bool with_grad,
                 std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& t : p) leaves.push_back(tape.leaf(t, with_grad));
    Var root = fn(tape, leaves);
    double v = tape.scalar_value(root);
    if (with_grad) {
      tape.backward(root);
      for (Var l : leaves) grads->push_back(tape.grad(l));
    }
    return v;
  };

  std::vector<Tensor> analytic;
  eval(analytic_fn, params, true, &analytic);
  eval(frozen_fn, params, false, nullptr);  // records the frozen constants

  CheckResult res;
  res.name = name;
  res.threshold = threshold;
  std::vector<Tensor> work = params;
  for (std::size_t pi = 0; pi < params.size(); ++pi)
    for (std::size_t j = 0; j < params[pi].v.size(); ++j) {
      double orig = work[pi].v[j];
      work[pi].v[j] = orig + eps;
      double fp = eval(frozen_fn, work, false, nullptr);
      work[pi].v[j] = orig - eps;
      double fm = eval(frozen_fn, work, false, nullptr);
      work[pi].v[j] = orig;
      double numeric = (fp - fm) / (2.0 * eps);
      double a = analytic[pi].v[j];
      double rel = std::fabs(a - numeric) /
                   std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      res.max_rel_err = std::max(res.max_rel_err, rel);
    }
  res.pass = res.max_rel_err < threshold;
  return res;
}

// Cosine scores at tau = 1 (well conditioned: saturated softmaxes push
// gradients under the difference oracle's noise floor).
inline Var cosine_scores(Tape& t, Var x, Var ys) {
  return t.matvec(t.l2_normalize_rows(ys), t.l2_normalize_rows(x));
}

// flatNCE with its denominator frozen on first evaluation; mirrors the
// sum-form construction including the max shift.
inline BuildFn frozen_flatnce(const BuildFn& scores_fn,
                              std::shared_ptr<std::vector<double>> cache) {
  return [scores_fn, cache](Tape& t, const std::vector<Var>& p) -> Var {
    Var s = scores_fn(t, p);
    std::int64_t n = t.value(s).shape.d[0];
    Var diffs = t.sub_broadcast(t.slice_rows(s, 1, n - 1), t.element(s, 0));
    double m = *std::max_element(t.value(diffs).v.begin(), t.value(diffs).v.end());
    Var expsum = t.sum(t.exp_(t.add_const(diffs, -m)));
    double s_val = t.scalar_value(expsum) * std::exp(m);
    if (cache->empty()) cache->push_back(s_val);
    return t.scale(expsum, std::exp(m) / (*cache)[0]);
  };
}

}  // namespace detail

inline std::vector<CheckResult> run_all(double threshold = 1e-5) {
  using autodiff::Tape;
  using autodiff::Var;
  using detail::BuildFn;
  std::vector<CheckResult> out;
  Rng rng(2024);

  {  // elementwise / reduction / normalization op closure
    std::vector<Tensor> p{detail::rand_tensor(Shape::matrix(3, 4), rng),
                          detail::rand_tensor(Shape::matrix(4, 5), rng),
                          detail::rand_tensor(Shape::vector(5), rng),
                          detail::rand_tensor(Shape::vector(9), rng)};
    out.push_back(detail::run_plain(
        "ops.core",
        [](Tape& t, const std::vector<Var>& p) {
          Var a = t.affine(p[0], p[1], p[2]);
          Var b = t.sigmoid(a);
          Var c = t.log_(t.add_const(t.exp_(t.scale(b, 0.7)), 1.0));
          Var d = t.l2_normalize_rows(t.concat_rows(c, t.slice_rows(c, 0, 2)));
          Var e = t.gather_rows(d, {0, 2, 4, 4});
          Var f = t.dot(t.row(e, 0), t.row(e, 3));
          Var g = t.logsumexp(t.slice_rows(p[3], 1, 7));
          Var h = t.div(t.stack_scalars({f, g}),
                        t.add_const(t.stack_scalars({g, f}), 4.0));
          return t.add(t.sum(h), t.mean(t.tanh_(d)));
        },
        p, threshold, 1e-5));
  }
  {  // masking, column concat, matvec, broadcast subtraction
    std::vector<Tensor> p{detail::rand_tensor(Shape::matrix(5, 3), rng),
                          detail::rand_tensor(Shape::vector(3), rng),
                          detail::rand_tensor(Shape::matrix(5, 2), rng),
                          detail::rand_tensor(Shape::vector(5), rng)};
    std::vector<std::uint8_t> mask{1, 0, 1, 0, 0};
    out.push_back(detail::run_plain(
        "ops.structure",
        [mask](Tape& t, const std::vector<Var>& p) {
          Var m = t.mask_rows(p[0], mask, p[1]);
          Var cc = t.concat_cols(m, p[2]);
          Var mv = t.matvec(cc, p[3]);
          Var sb = t.sub_broadcast(mv, t.element(mv, 2));
          return t.sum(t.mul(sb, sb));
        },
        p, threshold, 1e-5));
  }
  {  // softmax cross entropy
    std::vector<Tensor> p{detail::rand_tensor(Shape::matrix(5, 7), rng, 2.0)};
    out.push_back(detail::run_plain(
        "loss.cross_entropy",
        [](Tape& t, const std::vector<Var>& p) {
          return loss::cross_entropy_loss(t, p[0], {3, 0, 6, 2, 5});
        },
        p, threshold, 1e-5));
  }
  {  // infonce (plain) and flatnce (frozen-denominator oracle)
    std::vector<Tensor> p{detail::rand_tensor(Shape::vector(8), rng),
                          detail::rand_tensor(Shape::matrix(12, 8), rng)};
    BuildFn scores = [](Tape& t, const std::vector<Var>& p) {
      return detail::cosine_scores(t, p[0], p[1]);
    };
    out.push_back(detail::run_plain(
        "loss.infonce",
        [scores](Tape& t, const std::vector<Var>& p) {
          return loss::infonce_loss(t, scores(t, p));
        },
        p, threshold, 1e-5));
    auto cache = std::make_shared<std::vector<double>>();
    out.push_back(detail::run_frozen(
        "loss.flatnce",
        [scores](Tape& t, const std::vector<Var>& p) {
          return loss::flatnce_loss(t, scores(t, p));
        },
        detail::frozen_flatnce(scores, cache), p, threshold, 1e-5));
  }
  {  // detach barrier vs the frozen-constant oracle
    std::vector<Tensor> p{detail::rand_tensor(Shape::vector(6), rng)};
    auto cache = std::make_shared<std::vector<double>>();
    out.push_back(detail::run_frozen(
        "ops.detach",
        [](Tape& t, const std::vector<Var>& p) {
          return t.sum(t.mul(p[0], t.detach(t.sigmoid(p[0]))));
        },
        [cache](Tape& t, const std::vector<Var>& p) {
          if (cache->empty()) *cache = t.value(t.sigmoid(p[0])).v;
          return t.sum(t.mul(p[0], t.constant(Tensor::vector(*cache))));
        },
        p, threshold, 1e-5));
  }

  {  // full BLSTM stack, tiny dims
    model::EncoderSpec enc;
    enc.n_layers = 2;
    enc.hidden = 2;
    enc.input_dim = 3;
    model::ModelParams mp = model::init_ssl_model(enc, {"x"}, model::MaskSpec{}, 77);
    std::vector<std::string> names;
    std::vector<Tensor> vals;
    for (const auto& [n, t] : mp.tensors) {
      names.push_back(n);
      vals.push_back(t);
    }
    FeatureMatrix f(4, 3);
    Rng frng(31);
    for (double& x : f.v) x = frng.uniform(-1.0, 1.0);
    out.push_back(detail::run_plain(
        "model.blstm",
        [names, f, enc](Tape& t, const std::vector<Var>& leaves) {
          model::TapeBinding b;
          for (std::size_t i = 0; i < names.size(); ++i) b.vars[names[i]] = leaves[i];
          return t.mean(t.tanh_(
              model::blstm_forward(t, b, t.constant(f.to_tensor()), enc)));
        },
        vals, threshold, 1e-3));
    model::StreamSpec stream;
    stream.chunk_frames = 2;
    stream.lookahead_frames = 1;
    out.push_back(detail::run_plain(
        "model.lc_blstm",
        [names, f, enc, stream](Tape& t, const std::vector<Var>& leaves) {
          model::TapeBinding b;
          for (std::size_t i = 0; i < names.size(); ++i) b.vars[names[i]] = leaves[i];
          return t.mean(t.tanh_(model::lc_blstm_forward(
              t, b, t.constant(f.to_tensor()), enc, stream)));
        },
        vals, threshold, 1e-3));
  }

  {  // full SSL assembly through both contrastive losses (tau = 1)
    model::EncoderSpec enc;
    enc.n_layers = 1;
    enc.hidden = 3;
    enc.input_dim = 4;
    model::MaskSpec mask_spec;
    model::ModelParams mp = model::init_ssl_model(enc, {"x"}, mask_spec, 78);
    std::vector<std::string> names;
    std::vector<Tensor> vals;
    for (const auto& [n, t] : mp.tensors) {
      names.push_back(n);
      vals.push_back(t);
    }
    FeatureMatrix f(8, 4);
    Rng frng(32);
    for (double& x : f.v) x = frng.uniform(-1.0, 1.0);
    std::vector<std::int64_t> mask{1, 4, 6};

    auto assembly = [names, f, enc, mask_spec, mask, &mp](
                        Tape& t, const std::vector<Var>& leaves,
                        const std::function<Var(Tape&, Var scores)>& per_anchor) {
      model::TapeBinding b;
      for (std::size_t i = 0; i < names.size(); ++i) b.vars[names[i]] = leaves[i];
      model::Lfb2vecOut o =
          model::lfb2vec_forward(t, b, mp, f, "x", mask_spec, mask, enc);
      Rng neg_rng(9);
      std::uint64_t call_seed = neg_rng.raw();
      Var acc = t.constant_scalar(0.0);
      for (std::size_t i = 0; i < mask.size(); ++i) {
        Rng anchor_rng(Rng::derive(call_seed, static_cast<std::uint64_t>(mask[i])));
        std::vector<std::int64_t> idx{mask[i]};
        for (std::int64_t neg : loss::sample_negatives(f.n_frames, mask[i], 4, anchor_rng))
          idx.push_back(neg);
        Var cand = t.gather_rows(o.targets, idx);
        Var scores = t.matvec(cand, t.row(o.context_anchors, static_cast<std::int64_t>(i)));
        acc = t.add(acc, per_anchor(t, scores));
      }
      return t.scale(acc, 1.0 / static_cast<double>(mask.size()));
    };

    out.push_back(detail::run_plain(
        "model.lfb2vec.infonce",
        [assembly](Tape& t, const std::vector<Var>& leaves) {
          return assembly(t, leaves, [](Tape& tt, Var s) {
            return loss::infonce_loss(tt, s);
          });
        },
        vals, threshold, 1e-5));

    auto cache = std::make_shared<std::vector<double>>();
    auto counter = std::make_shared<std::size_t>(0);
    out.push_back(detail::run_frozen(
        "model.lfb2vec.flatnce",
        [assembly](Tape& t, const std::vector<Var>& leaves) {
          return assembly(t, leaves, [](Tape& tt, Var s) {
            return loss::flatnce_loss(tt, s);
          });
        },
        [assembly, cache, counter](Tape& t, const std::vector<Var>& leaves) {
          *counter = 0;  // anchors are visited in a fixed order per evaluation
          return assembly(t, leaves, [cache, counter](Tape& tt, Var s) -> Var {
            std::int64_t n = tt.value(s).shape.d[0];
            Var diffs =
                tt.sub_broadcast(tt.slice_rows(s, 1, n - 1), tt.element(s, 0));
            double m = *std::max_element(tt.value(diffs).v.begin(),
                                         tt.value(diffs).v.end());
            Var expsum = tt.sum(tt.exp_(tt.add_const(diffs, -m)));
            double s_val = tt.scalar_value(expsum) * std::exp(m);
            std::size_t i = (*counter)++;
            if (cache->size() <= i) cache->push_back(s_val);
            return tt.scale(expsum, std::exp(m) / (*cache)[i]);
          });
        },
        vals, threshold, 1e-5));
  }
  return out;
}

}  // namespace gradsuite
}  // namespace lfb2vec

#endif  // LFB2VEC_GRADSUITE_HPP_
