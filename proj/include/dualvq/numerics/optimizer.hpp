#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "dualvq/numerics/graph.hpp"

namespace dualvq {

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OptimizerKind { Adam, Sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction, or plain SGD (p -= lr * g). Frozen parameters
/// are skipped entirely, including their moment buffers.
class Optimizer {
 public:
  struct Moments {
    Tensor m;
    Tensor v;
  };

  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {
    if (!(cfg_.lr >= 0.0)) throw std::invalid_argument("optimizer: learning rate must be >= 0");
  }

  const OptimizerConfig& config() const { return cfg_; }
  long steps() const { return t_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

  /// Applies one update. Throws NonFiniteGradient naming the first offending
  /// parameter before anything is modified.
  void step(ParameterSet& params) {
    for (const auto& [name, p] : params) {
      if (p.frozen) continue;
      if (!p.grad.same_shape(p.value)) {
        throw ShapeError("optimizer: gradient of '" + name + "' is " + p.grad.shape_string() + ", value is " +
                         p.value.shape_string());
      }
      if (!p.grad.all_finite()) throw NonFiniteGradient("optimizer: non-finite gradient in '" + name + "'");
    }
    ++t_;
    for (auto& [name, p] : params) {
      if (p.frozen) continue;
      if (cfg_.kind == OptimizerKind::Sgd) {
        for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= cfg_.lr * p.grad[i];
        continue;
      }
      Moments& mo = moments_[name];
      if (mo.m.empty()) {
        mo.m = Tensor::zeros_like(p.value);
        mo.v = Tensor::zeros_like(p.value);
      }
      const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * g;
        mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * g * g;
        p.value[i] -= cfg_.lr * (mo.m[i] / c1) / (std::sqrt(mo.v[i] / c2) + cfg_.eps);
      }
    }
  }

 private:
  OptimizerConfig cfg_;
  long t_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace dualvq
