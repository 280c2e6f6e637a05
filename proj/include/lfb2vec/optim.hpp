// lfb2vec/optim.hpp

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

// Adam and AdamW (coupled vs. decoupled weight decay) plus the linear
// warmup / linear decay learning-rate schedule. A step only touches the
// parameters it is handed gradients for; everything else, including its
// optimizer state, is left bit-identical.

#ifndef LFB2VEC_OPTIM_HPP_
#define LFB2VEC_OPTIM_HPP_

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "lfb2vec/common.hpp"
#include "lfb2vec/tensor.hpp"

namespace lfb2vec {
namespace optim {

enum class DecayMode { kCoupled, kDecoupled };  // Adam vs. AdamW

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  DecayMode mode = DecayMode::kCoupled;
  double clip_norm = 0.0;  // 0 disables the global-norm clip
};

struct LrSchedule {
  double max_lr = 1e-3;
  long long total_steps = 0;
  double warmup_frac = 0.10;
  double floor_lr = 5e-6;
};

// Warmup: linear 0 -> max_lr over the first warmup_frac of steps. Decay:
// linear max_lr -> floor_lr over the rest. Both phase endpoints evaluate
// exactly (frac 1.0 and 0.0); steps past the end clamp to the floor.
inline double lr_at(long long step, const LrSchedule& s) {
  if (s.total_steps <= 0) throw DataError("lr_at: total_steps must be positive");
  if (s.warmup_frac <= 0.0 || s.warmup_frac >= 1.0)
    throw DataError("lr_at: warmup_frac must lie in (0,1)");
  if (s.floor_lr > s.max_lr) throw DataError("lr_at: floor_lr above max_lr");
  long long warmup = std::llround(s.warmup_frac * static_cast<double>(s.total_steps));
  if (warmup < 1) warmup = 1;
  if (step <= 0) return 0.0;
  if (step > s.total_steps) return s.floor_lr;
  if (step <= warmup)
    return s.max_lr * (static_cast<double>(step) / static_cast<double>(warmup));
  double frac = static_cast<double>(s.total_steps - step) /
                static_cast<double>(s.total_steps - warmup);
  return s.floor_lr + (s.max_lr - s.floor_lr) * frac;
}

struct AdamParamState {
  Tensor m;
  Tensor v;
  long long t = 0;  // per-parameter step count (parameters may skip steps)
};

class AdamOptimizer {
 public:
  explicit AdamOptimizer(const AdamConfig& cfg) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  std::map<std::string, AdamParamState>& state() { return state_; }
  const std::map<std::string, AdamParamState>& state() const { return state_; }

  // One update over exactly the parameters named in `grads`.
  void step(std::map<std::string, Tensor>& params,
            const std::map<std::string, Tensor>& grads, double lr) {
    double clip_scale = 1.0;
    if (cfg_.clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& [name, g] : grads)
        for (double x : g.v) sq += x * x;
      double norm = std::sqrt(sq);
      if (norm > cfg_.clip_norm) clip_scale = cfg_.clip_norm / norm;
    }

    for (const auto& [name, grad] : grads) {
      auto pit = params.find(name);
      if (pit == params.end())
        throw DataError("optimizer step: unknown parameter '" + name + "'");
      Tensor& theta = pit->second;
      if (grad.shape != theta.shape)
        throw DataError("optimizer step: gradient shape " + grad.shape.str() +
                        " does not match parameter '" + name + "' " +
                        theta.shape.str());
      for (double g : grad.v)
        if (!std::isfinite(g))
          throw NumericalError("non-finite gradient for parameter '" + name + "'");

      AdamParamState& st = state_[name];
      if (st.m.v.empty()) {
        st.m = Tensor(theta.shape);
        st.v = Tensor(theta.shape);
      }
      st.t += 1;
      double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.t));
      double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.t));
      for (std::size_t i = 0; i < theta.v.size(); ++i) {
        double g = grad.v[i] * clip_scale;
        if (cfg_.mode == DecayMode::kCoupled && cfg_.weight_decay != 0.0)
          g += cfg_.weight_decay * theta.v[i];
        st.m.v[i] = cfg_.beta1 * st.m.v[i] + (1.0 - cfg_.beta1) * g;
        st.v.v[i] = cfg_.beta2 * st.v.v[i] + (1.0 - cfg_.beta2) * g * g;
        double m_hat = st.m.v[i] / bc1;
        double v_hat = st.v.v[i] / bc2;
        theta.v[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
      }
      if (cfg_.mode == DecayMode::kDecoupled && cfg_.weight_decay != 0.0) {
        double shrink = 1.0 - lr * cfg_.weight_decay;
        for (double& x : theta.v) x *= shrink;
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::map<std::string, AdamParamState> state_;
};

}  // namespace optim
}  // namespace lfb2vec

#endif  // LFB2VEC_OPTIM_HPP_
