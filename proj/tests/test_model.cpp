// tests/test_model.cpp

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

#include "lfb2vec/model.hpp"

#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "lfb2vec/losses.hpp"

using lfb2vec::DataError;
using lfb2vec::FeatureMatrix;
using lfb2vec::Rng;
using lfb2vec::Shape;
using lfb2vec::Tensor;
using lfb2vec::autodiff::grad_check;
using lfb2vec::autodiff::Tape;
using lfb2vec::autodiff::Var;
using namespace lfb2vec::model;

namespace {

FeatureMatrix random_features(std::int64_t t_frames, std::int64_t dim, Rng& rng) {
  FeatureMatrix m(t_frames, dim);
  for (double& x : m.v) x = rng.uniform(-1.0, 1.0);
  return m;
}

// grad_check plumbing: lease the named parameter list as leaves.
struct ParamList {
  std::vector<std::string> names;
  std::vector<Tensor> values;
  explicit ParamList(const ModelParams& p) {
    for (const auto& [name, t] : p.tensors) {
      names.push_back(name);
      values.push_back(t);
    }
  }
  TapeBinding bind(Tape& tape, const std::vector<Var>& leaves) const {
    TapeBinding b;
    for (std::size_t i = 0; i < names.size(); ++i) b.vars[names[i]] = leaves[i];
    return b;
  }
};

}  // namespace

TEST_CASE("mask_spans: degenerate probabilities") {
  MaskSpec spec;
  Rng rng(1);
  spec.start_prob = 0.0;
  CHECK(mask_spans(100, spec, rng).empty());
  spec.start_prob = 1.0;
  auto all = mask_spans(100, spec, rng);
  REQUIRE(all.size() == 100);
  for (std::int64_t t = 0; t < 100; ++t) CHECK(all[static_cast<std::size_t>(t)] == t);
}

TEST_CASE("mask_spans never emits an index outside [0, T)") {
  MaskSpec spec;
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::int64_t t_frames = 1 + rng.uniform_int(40);
    auto mask = mask_spans(t_frames, spec, rng);
    for (std::int64_t t : mask) {
      CHECK(t >= 0);
      CHECK(t < t_frames);
    }
  }
}

TEST_CASE("mask_spans is deterministic for equal (T, spec, seed)") {
  MaskSpec spec;
  Rng r1(77), r2(77);
  CHECK(mask_spans(500, spec, r1) == mask_spans(500, spec, r2));
}

TEST_CASE("mask_spans: interior masked fraction matches the span process") {
  // P(masked) = 1 - (1-p)^span for frames with a full window of start slots.
  MaskSpec spec;  // p = 0.065, span = 10
  Rng rng(5);
  const std::int64_t t_frames = 1000;
  const int trials = 3000;
  double expected = 1.0 - std::pow(1.0 - spec.start_prob, spec.span);
  std::int64_t masked = 0, total = 0;
  for (int i = 0; i < trials; ++i) {
    auto mask = mask_spans(t_frames, spec, rng);
    for (std::int64_t t : mask)
      if (t >= spec.span - 1) ++masked;
    total += t_frames - (spec.span - 1);
  }
  double fraction = static_cast<double>(masked) / static_cast<double>(total);
  CHECK(std::fabs(fraction - expected) <= 0.02);
}

TEST_CASE("apply_mask zeroes exactly the masked rows") {
  Rng rng(7);
  FeatureMatrix m = random_features(10, 4, rng);
  auto out = apply_mask(m, {1, 5});
  for (std::int64_t d = 0; d < 4; ++d) {
    CHECK(out.at(1, d) == 0.0);
    CHECK(out.at(5, d) == 0.0);
    CHECK(out.at(2, d) == m.at(2, d));
  }
}

TEST_CASE("blstm_forward: output shape is T x 2*hidden") {
  EncoderSpec enc;
  enc.n_layers = 1;
  enc.hidden = 4;
  enc.input_dim = 3;
  ModelParams p = init_ssl_model(enc, {"ro"}, MaskSpec{}, 1);
  Rng rng(9);
  FeatureMatrix f = random_features(5, 3, rng);
  Tape tape;
  TapeBinding b = bind_params_frozen(tape, p);
  Var out = blstm_forward(tape, b, tape.constant(f.to_tensor()), enc);
  CHECK(tape.value(out).shape == Shape::matrix(5, 8));
}

TEST_CASE("blstm_forward: empty input gives empty output") {
  EncoderSpec enc;
  enc.n_layers = 1;
  enc.hidden = 4;
  enc.input_dim = 3;
  ModelParams p = init_ssl_model(enc, {"ro"}, MaskSpec{}, 1);
  Tape tape;
  TapeBinding b = bind_params_frozen(tape, p);
  Var out = blstm_forward(tape, b, tape.constant(Tensor(Shape::matrix(0, 3))), enc);
  CHECK(tape.value(out).shape == Shape::matrix(0, 8));
}

TEST_CASE("blstm_forward: all-zero parameters give all-zero outputs") {
  EncoderSpec enc;
  enc.n_layers = 2;
  enc.hidden = 3;
  enc.input_dim = 4;
  ModelParams p = init_ssl_model(enc, {"ro"}, MaskSpec{}, 1);
  for (auto& [name, t] : p.tensors)
    std::fill(t.v.begin(), t.v.end(), 0.0);
  Rng rng(11);
  FeatureMatrix f = random_features(6, 4, rng);
  Tape tape;
  TapeBinding b = bind_params_frozen(tape, p);
  Var out = blstm_forward(tape, b, tape.constant(f.to_tensor()), enc);
  for (double x : tape.value(out).v) CHECK(x == 0.0);
}

TEST_CASE("blstm_forward full-network gradient check") {
  // eps = 1e-3 keeps the central-difference oracle's cancellation noise below
  // the 1e-6 bar; recurrent stacks always carry a few ~1e-8 gradients.
  EncoderSpec enc;
  enc.n_layers = 1;
  enc.hidden = 3;
  enc.input_dim = 3;
  ModelParams p = init_ssl_model(enc, {"ro"}, MaskSpec{}, 24);
  Rng rng(13);
  FeatureMatrix f = random_features(4, 3, rng);
  ParamList list(p);
  auto report = grad_check(
      [&](Tape& tape, const std::vector<Var>& leaves) {
        TapeBinding b = list.bind(tape, leaves);
        Var out = blstm_forward(tape, b, tape.constant(f.to_tensor()), enc);
        return tape.mean(tape.tanh_(out));
      },
      list.values, 1e-3);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("blstm_forward two-layer gradient check") {
  EncoderSpec enc;
  enc.n_layers = 2;
  enc.hidden = 2;
  enc.input_dim = 3;
  ModelParams p = init_ssl_model(enc, {"ro"}, MaskSpec{}, 22);
  Rng rng(15);
  FeatureMatrix f = random_features(3, 3, rng);
  ParamList list(p);
  auto report = grad_check(
      [&](Tape& tape, const std::vector<Var>& leaves) {
        TapeBinding b = list.bind(tape, leaves);
        Var out = blstm_forward(tape, b, tape.constant(f.to_tensor()), enc);
        return tape.mean(out);
      },
      list.values, 1e-3);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("lc_blstm_forward: degenerate streaming equals full-sequence") {
  EncoderSpec enc;
  enc.n_layers = 2;
  enc.hidden = 4;
  enc.input_dim = 5;
  ModelParams p = init_ssl_model(enc, {"ro"}, MaskSpec{}, 31);
  Rng rng(17);
  FeatureMatrix f = random_features(12, 5, rng);
  Tape tape;
  TapeBinding b = bind_params_frozen(tape, p);
  Var full = blstm_forward(tape, b, tape.constant(f.to_tensor()), enc);
  StreamSpec stream;
  stream.chunk_frames = 64;  // >= T
  stream.lookahead_frames = 64;
  Var lc = lc_blstm_forward(tape, b, tape.constant(f.to_tensor()), enc, stream);
  const Tensor& a = tape.value(full);
  const Tensor& c = tape.value(lc);
  REQUIRE(a.shape == c.shape);
  for (std::size_t i = 0; i < a.v.size(); ++i)
    CHECK(c.v[i] == Catch::Approx(a.v[i]).margin(1e-12));
}

TEST_CASE("lc_blstm_forward: chunk arithmetic covers T=60 with Nc=20") {
  EncoderSpec enc;
  enc.n_layers = 1;
  enc.hidden = 3;
  enc.input_dim = 4;
  ModelParams p = init_ssl_model(enc, {"ro"}, MaskSpec{}, 33);
  Rng rng(19);
  FeatureMatrix f = random_features(60, 4, rng);
  Tape tape;
  TapeBinding b = bind_params_frozen(tape, p);
  StreamSpec stream;  // 20 / 20
  Var lc = lc_blstm_forward(tape, b, tape.constant(f.to_tensor()), enc, stream);
  CHECK(tape.value(lc).shape == Shape::matrix(60, 6));
}

TEST_CASE("lc_blstm_forward: forward half matches full sequence exactly (1 layer)") {
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    EncoderSpec enc;
    enc.n_layers = 1;
    enc.hidden = 2 + static_cast<int>(rng.uniform_int(4));
    enc.input_dim = 3;
    ModelParams p = init_ssl_model(enc, {"ro"}, MaskSpec{}, 100 + static_cast<std::uint64_t>(trial));
    std::int64_t t_frames = 5 + rng.uniform_int(70);
    StreamSpec stream;
    stream.chunk_frames = 1 + static_cast<int>(rng.uniform_int(25));
    stream.lookahead_frames = static_cast<int>(rng.uniform_int(25));
    FeatureMatrix f = random_features(t_frames, 3, rng);
    Tape tape;
    TapeBinding b = bind_params_frozen(tape, p);
    Var full = blstm_forward(tape, b, tape.constant(f.to_tensor()), enc);
    Var lc = lc_blstm_forward(tape, b, tape.constant(f.to_tensor()), enc, stream);
    const Tensor& a = tape.value(full);
    const Tensor& c = tape.value(lc);
    REQUIRE(a.shape == c.shape);
    for (std::int64_t t = 0; t < t_frames; ++t)
      for (int j = 0; j < enc.hidden; ++j)
        CHECK(c.at(t, j) == Catch::Approx(a.at(t, j)).margin(1e-12));
  }
}

TEST_CASE("lc_blstm_forward gradient check (streaming path differentiable)") {
  EncoderSpec enc;
  enc.n_layers = 1;
  enc.hidden = 2;
  enc.input_dim = 3;
  ModelParams p = init_ssl_model(enc, {"ro"}, MaskSpec{}, 35);
  Rng rng(25);
  FeatureMatrix f = random_features(7, 3, rng);
  StreamSpec stream;
  stream.chunk_frames = 3;
  stream.lookahead_frames = 2;
  ParamList list(p);
  auto report = grad_check(
      [&](Tape& tape, const std::vector<Var>& leaves) {
        TapeBinding b = list.bind(tape, leaves);
        Var out = lc_blstm_forward(tape, b, tape.constant(f.to_tensor()), enc, stream);
        return tape.mean(tape.tanh_(out));
      },
      list.values, 1e-3);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("lfb2vec_forward: shapes, norms and empty-mask case") {
  EncoderSpec enc;
  enc.n_layers = 1;
  enc.hidden = 6;
  enc.input_dim = 8;
  MaskSpec mask_spec;
  ModelParams p = init_ssl_model(enc, {"ro"}, mask_spec, 41);
  Rng rng(27);
  FeatureMatrix f = random_features(50, 8, rng);
  std::vector<std::int64_t> mask;
  for (std::int64_t t = 0; t < 20; ++t) mask.push_back(t * 2);

  Tape tape;
  TapeBinding b = bind_params_frozen(tape, p);
  Lfb2vecOut out = lfb2vec_forward(tape, b, p, f, "ro", mask_spec, mask, enc);
  CHECK(tape.value(out.context_anchors).shape == Shape::matrix(20, kProjDim));
  CHECK(tape.value(out.targets).shape == Shape::matrix(50, kProjDim));
  auto check_unit_rows = [&](Var v) {
    const Tensor& t = tape.value(v);
    for (std::int64_t r = 0; r < t.shape.d[0]; ++r) {
      double ss = 0.0;
      for (std::int64_t j = 0; j < t.shape.d[1]; ++j) ss += t.at(r, j) * t.at(r, j);
      CHECK(std::fabs(std::sqrt(ss) - 1.0) < 1e-6);
    }
  };
  check_unit_rows(out.context_anchors);
  check_unit_rows(out.targets);

  Lfb2vecOut empty = lfb2vec_forward(tape, b, p, f, "ro", mask_spec, {}, enc);
  CHECK(tape.value(empty.context_anchors).shape.d[0] == 0);
}

TEST_CASE("lfb2vec_forward rejects unknown languages, naming configured ones") {
  EncoderSpec enc;
  enc.n_layers = 1;
  enc.hidden = 4;
  enc.input_dim = 6;
  ModelParams p = init_ssl_model(enc, {"ro", "en"}, MaskSpec{}, 43);
  Rng rng(29);
  FeatureMatrix f = random_features(10, 6, rng);
  Tape tape;
  TapeBinding b = bind_params_frozen(tape, p);
  try {
    lfb2vec_forward(tape, b, p, f, "de", MaskSpec{}, {1, 2}, enc);
    FAIL("expected unknown-language error");
  } catch (const DataError& e) {
    std::string msg = e.what();
    CHECK(msg.find("de") != std::string::npos);
    CHECK(msg.find("ro") != std::string::npos);
    CHECK(msg.find("en") != std::string::npos);
  }
}

TEST_CASE("full assembly gradient check through loss") {
  EncoderSpec enc;
  enc.n_layers = 1;
  enc.hidden = 3;
  enc.input_dim = 4;
  MaskSpec mask_spec;
  ModelParams p = init_ssl_model(enc, {"ro"}, mask_spec, 45);
  Rng rng(31);
  FeatureMatrix f = random_features(8, 4, rng);
  std::vector<std::int64_t> mask{1, 3, 6};
  ParamList list(p);
  auto report = grad_check(
      [&](Tape& tape, const std::vector<Var>& leaves) {
        TapeBinding b = list.bind(tape, leaves);
        Lfb2vecOut out = lfb2vec_forward(tape, b, p, f, "ro", mask_spec, mask, enc);
        Rng loss_rng(7);
        auto batch = lfb2vec::loss::batch_contrastive_mean(
            tape, out.context_anchors, out.targets, mask,
            lfb2vec::loss::ContrastiveKind::kInfoNce, 4, 0.1, loss_rng);
        return batch.sum;
      },
      list.values);
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("learned mask vector receives gradient") {
  EncoderSpec enc;
  enc.n_layers = 1;
  enc.hidden = 3;
  enc.input_dim = 4;
  MaskSpec mask_spec;
  mask_spec.policy = MaskSpec::kLearned;
  ModelParams p = init_ssl_model(enc, {"ro"}, mask_spec, 47);
  REQUIRE(p.has("mask.embed"));
  Rng rng(33);
  FeatureMatrix f = random_features(8, 4, rng);
  std::vector<std::int64_t> mask{2, 5};
  Tape tape;
  TapeBinding b = bind_params_all_trainable(tape, p);
  Lfb2vecOut out = lfb2vec_forward(tape, b, p, f, "ro", mask_spec, mask, enc);
  Rng loss_rng(7);
  auto batch = lfb2vec::loss::batch_contrastive_mean(
      tape, out.context_anchors, out.targets, mask,
      lfb2vec::loss::ContrastiveKind::kInfoNce, 4, 0.1, loss_rng);
  tape.backward(batch.sum);
  double gnorm = 0.0;
  for (double g : tape.grad(b.at("mask.embed")).v) gnorm += g * g;
  CHECK(gnorm > 0.0);
}

TEST_CASE("multi-head: only the batch language's head receives gradient") {
  EncoderSpec enc;
  enc.n_layers = 1;
  enc.hidden = 4;
  enc.input_dim = 6;
  MaskSpec mask_spec;
  ModelParams p = init_ssl_model(enc, {"ro", "en"}, mask_spec, 49);
  Rng rng(35);
  FeatureMatrix f = random_features(12, 6, rng);
  std::vector<std::int64_t> mask{0, 4, 9};
  Tape tape;
  TapeBinding b = bind_params_all_trainable(tape, p);
  Lfb2vecOut out = lfb2vec_forward(tape, b, p, f, "ro", mask_spec, mask, enc);
  Rng loss_rng(7);
  auto batch = lfb2vec::loss::batch_contrastive_mean(
      tape, out.context_anchors, out.targets, mask,
      lfb2vec::loss::ContrastiveKind::kInfoNce, 4, 0.1, loss_rng);
  tape.backward(batch.sum);
  auto gnorm = [&](const std::string& name) {
    double s = 0.0;
    for (double g : tape.grad(b.at(name)).v) s += g * g;
    return s;
  };
  CHECK(gnorm("proj.en.ctx.w") == 0.0);
  CHECK(gnorm("proj.en.tgt.w") == 0.0);
  CHECK(gnorm("proj.ro.ctx.w") > 0.0);
  CHECK(gnorm("proj.ro.tgt.w") > 0.0);
  CHECK(gnorm("enc.l0.fwd.wx") > 0.0);
}
