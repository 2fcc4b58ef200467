// Copyright 2026 The exsum Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EXSUM_OPTIMIZER_HPP_
#define EXSUM_OPTIMIZER_HPP_

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "exsum/tensor.hpp"
#include "exsum/util.hpp"

namespace exsum {

struct AdamConfig {
  double lr_max = 1e-4;
  std::size_t warmup_steps = 400;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Inverse-sqrt schedule with linear warmup, normalized so the peak learning
// rate at step == warmup_steps equals lr_max:
//   lr(step) = lr_max * sqrt(warmup) * min(step^-1/2, step * warmup^-3/2)
inline double warmup_lr(const AdamConfig& cfg, std::size_t step) {
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(cfg.warmup_steps);
  const double inv_sqrt = 1.0 / std::sqrt(s);
  const double ramp = s / (w * std::sqrt(w));
  return cfg.lr_max * std::sqrt(w) * std::min(inv_sqrt, ramp);
}

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      if (!p.requires_grad()) {
        throw ShapeError("Adam: parameter without a gradient buffer");
      }
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  std::size_t step_count() const { return step_; }
  double current_lr() const { return step_ == 0 ? 0.0 : warmup_lr(cfg_, step_); }

  // One bias-corrected update; zeroes the gradients afterwards.
  void step() {
    ++step_;
    const double lr = warmup_lr(cfg_, step_);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      auto& value = params_[pi].values();
      auto& grad = params_[pi].grad();
      auto& m = m_[pi];
      auto& v = v_[pi];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        grad[i] = 0.0;
      }
    }
  }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace exsum

#endif  // EXSUM_OPTIMIZER_HPP_
