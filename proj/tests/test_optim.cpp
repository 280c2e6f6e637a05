// tests/test_optim.cpp

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

#include "lfb2vec/optim.hpp"

#include <cmath>

#include <catch2/catch_amalgamated.hpp>

using lfb2vec::DataError;
using lfb2vec::NumericalError;
using lfb2vec::Rng;
using lfb2vec::Shape;
using lfb2vec::Tensor;
using namespace lfb2vec::optim;

namespace {

std::map<std::string, Tensor> one_param(const std::vector<double>& vals) {
  std::map<std::string, Tensor> p;
  p["w"] = Tensor::vector(vals);
  return p;
}

}  // namespace

TEST_CASE("lr_at: warmup endpoint, final value, decay midpoint") {
  LrSchedule s;
  s.max_lr = 1e-3;
  s.total_steps = 1000;
  CHECK(lr_at(100, s) == 1e-3);
  CHECK(lr_at(1000, s) == 5e-6);
  CHECK(lr_at(550, s) == 5e-6 + 0.5 * (1e-3 - 5e-6));
  CHECK(lr_at(550, s) == Catch::Approx(5.025e-4).margin(1e-18));
}

TEST_CASE("lr_at is continuous at the warmup/decay junction") {
  LrSchedule s;
  s.max_lr = 2e-3;
  s.total_steps = 400;
  double before = lr_at(40, s);
  double after = lr_at(41, s);
  CHECK(before == 2e-3);
  CHECK(std::fabs(after - before) < 2e-3 / 360.0 + 1e-12);
}

TEST_CASE("lr_at clamps past the end and rises linearly in warmup") {
  LrSchedule s;
  s.max_lr = 1e-3;
  s.total_steps = 1000;
  CHECK(lr_at(1500, s) == 5e-6);
  CHECK(lr_at(50, s) == Catch::Approx(0.5e-3));
  CHECK(lr_at(0, s) == 0.0);
}

TEST_CASE("zero gradient with no decay is a fixed point") {
  AdamConfig cfg;  // coupled, weight_decay 0
  AdamOptimizer opt(cfg);
  auto params = one_param({1.0, -2.0, 3.0});
  auto before = params;
  std::map<std::string, Tensor> grads{{"w", Tensor(Shape::vector(3))}};
  for (int i = 0; i < 10; ++i) opt.step(params, grads, 0.1);
  CHECK(params["w"].v == before["w"].v);
}

TEST_CASE("decoupled decay alone shrinks parameters by 1 - lr*wd") {
  AdamConfig cfg;
  cfg.mode = DecayMode::kDecoupled;
  cfg.weight_decay = 0.01;
  AdamOptimizer opt(cfg);
  auto params = one_param({1.0, -2.0, 3.0});
  auto before = params;
  std::map<std::string, Tensor> grads{{"w", Tensor(Shape::vector(3))}};
  opt.step(params, grads, 0.1);
  double shrink = 1.0 - 0.1 * 0.01;
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(params["w"].v[i] == before["w"].v[i] * shrink);
}

TEST_CASE("first step with constant gradient moves by about -lr*sign") {
  AdamConfig cfg;
  AdamOptimizer opt(cfg);
  auto params = one_param({0.5, -0.5, 2.0});
  auto before = params;
  std::map<std::string, Tensor> grads{{"w", Tensor::vector({3.0, 3.0, 3.0})}};
  opt.step(params, grads, 0.01);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(params["w"].v[i] ==
          Catch::Approx(before["w"].v[i] - 0.01).epsilon(1e-6));
}

TEST_CASE("Adam is scale-adaptive on the first step") {
  Rng rng(3);
  std::vector<double> g(8);
  for (double& x : g) x = rng.uniform(-1.0, 1.0);
  std::vector<double> g10 = g;
  for (double& x : g10) x *= 10.0;

  auto run = [&](const std::vector<double>& grad) {
    AdamConfig cfg;
    AdamOptimizer opt(cfg);
    auto params = one_param(std::vector<double>(8, 1.0));
    std::map<std::string, Tensor> grads{{"w", Tensor::vector(grad)}};
    opt.step(params, grads, 0.1);
    return params["w"].v;
  };
  auto a = run(g);
  auto b = run(g10);
  for (std::size_t i = 0; i < 8; ++i)
    CHECK(a[i] == Catch::Approx(b[i]).margin(1e-6));
}

TEST_CASE("coupled and decoupled modes are bit-identical when wd = 0") {
  Rng rng(5);
  AdamConfig coupled;
  coupled.mode = DecayMode::kCoupled;
  AdamConfig decoupled;
  decoupled.mode = DecayMode::kDecoupled;
  AdamOptimizer oa(coupled), ob(decoupled);
  auto pa = one_param({0.3, -1.2, 0.9, 2.2});
  auto pb = pa;
  for (int step = 0; step < 100; ++step) {
    std::vector<double> g(4);
    for (double& x : g) x = rng.uniform(-1.0, 1.0);
    std::map<std::string, Tensor> grads{{"w", Tensor::vector(g)}};
    oa.step(pa, grads, 1e-3);
    ob.step(pb, grads, 1e-3);
    for (std::size_t i = 0; i < 4; ++i) CHECK(pa["w"].v[i] == pb["w"].v[i]);
  }
}

TEST_CASE("non-finite gradients name the offending parameter") {
  AdamConfig cfg;
  AdamOptimizer opt(cfg);
  auto params = one_param({1.0});
  std::map<std::string, Tensor> grads{
      {"w", Tensor::vector({std::numeric_limits<double>::quiet_NaN()})}};
  try {
    opt.step(params, grads, 0.1);
    FAIL("expected error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("'w'") != std::string::npos);
  }
}

TEST_CASE("steps leave parameters without gradients untouched") {
  AdamConfig cfg;
  cfg.mode = DecayMode::kDecoupled;
  cfg.weight_decay = 0.01;
  AdamOptimizer opt(cfg);
  std::map<std::string, Tensor> params;
  params["a"] = Tensor::vector({1.0, 2.0});
  params["b"] = Tensor::vector({3.0, 4.0});
  auto before_b = params["b"].v;
  std::map<std::string, Tensor> grads{{"a", Tensor::vector({0.1, -0.1})}};
  for (int i = 0; i < 5; ++i) opt.step(params, grads, 0.1);
  CHECK(params["b"].v == before_b);
  CHECK(opt.state().count("b") == 0);
  CHECK(opt.state().at("a").t == 5);
}

TEST_CASE("global-norm clip rescales large gradients") {
  AdamConfig cfg;
  cfg.clip_norm = 1.0;
  AdamOptimizer with_clip(cfg);
  AdamConfig cfg2;
  AdamOptimizer no_clip(cfg2);
  auto pa = one_param({1.0, 1.0});
  auto pb = pa;
  // gradient norm 10 -> clipped to unit norm; equivalent to feeding g/10
  std::map<std::string, Tensor> big{{"w", Tensor::vector({6.0, 8.0})}};
  std::map<std::string, Tensor> small{{"w", Tensor::vector({0.6, 0.8})}};
  with_clip.step(pa, big, 0.1);
  no_clip.step(pb, small, 0.1);
  for (std::size_t i = 0; i < 2; ++i)
    CHECK(pa["w"].v[i] == Catch::Approx(pb["w"].v[i]).margin(1e-15));
}
