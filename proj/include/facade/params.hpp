#pragma once

#include <string>
#include <vector>

#include "facade/math.hpp"

namespace facade {

// One named group of learnable parameters with its gradient accumulator and
// Adam moments. Modules own their parameter storage; the trainer collects
// ParamGroup views over every module it updates.
struct ParamGroup {
  std::string name;
  VecX* value = nullptr;
  VecX grad;
  VecX m;
  VecX v;

  explicit ParamGroup(std::string n, VecX* val) : name(std::move(n)), value(val) {
    grad = VecX::Zero(val->size());
    m = VecX::Zero(val->size());
    v = VecX::Zero(val->size());
  }

  void zero_grad() { grad.setZero(); }
};

struct AdamConfig {
  real lr = 2e-3;
  real beta1 = 0.9;
  real beta2 = 0.999;
  real eps = 1e-8;
  real lr_decay = 1.0;  // multiplicative decay applied per step
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(std::vector<ParamGroup>& groups) {
    ++t_;
    const real bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<real>(t_));
    const real bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<real>(t_));
    for (auto& g : groups) {
      g.m = cfg_.beta1 * g.m + (1.0 - cfg_.beta1) * g.grad;
      g.v = cfg_.beta2 * g.v.array().matrix() +
            (1.0 - cfg_.beta2) * g.grad.cwiseProduct(g.grad);
      const VecX mhat = g.m / bc1;
      const VecX vhat = g.v / bc2;
      g.value->array() -= lr_ * (mhat.array() / (vhat.array().sqrt() + cfg_.eps));
    }
    lr_ *= cfg_.lr_decay;
  }

  real lr() const { return lr_; }
  void set_lr(real lr) { lr_ = lr; }
  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  real lr_ = cfg_.lr;
  std::int64_t t_ = 0;
};

}  // namespace facade
