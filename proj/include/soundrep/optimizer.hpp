#pragma once

#include <map>
#include <string>
#include <vector>

#include "soundrep/autodiff.hpp"
#include "soundrep/model.hpp"

namespace soundrep {

/// Piecewise-constant step schedule: the rate is divided by `factor` at every
/// listed epoch.
struct LrSchedule {
  double lr0 = 0.03;
  std::vector<int> drop_epochs = {325, 425};
  double factor = 0.1;

  double at(int epoch) const {
    if (epoch < 0) throw ConfigError("lr schedule: epoch must be >= 0");
    double lr = lr0;
    for (int e : drop_epochs) {
      if (epoch >= e) lr *= factor;
    }
    return lr;
  }
};

/// SGD with momentum and decoupled-from-BN weight decay:
///   v <- momentum * v + (grad + weight_decay * param)
///   param <- param - lr * v
/// Parameters flagged weight_decay=false (batch-norm scale/offset) skip the
/// decay term. Velocity is keyed by parameter name and persists across steps.
template <typename T>
class SgdOptimizer {
 public:
  explicit SgdOptimizer(double momentum = 0.9, double weight_decay = 1e-4)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(Tape<T>& tape, const ParamBindings<T>& params, double lr) {
    for (const auto& p : params) {
      const Tensor<T>& grad = tape.grad(p.node);
      if (!grad.same_shape(*p.value)) {
        throw NnError("sgd: gradient shape mismatch for " + p.name);
      }
      Tensor<T>& v = velocity_.try_emplace(p.name, Tensor<T>::zeros(p.value->shape)).first->second;
      const T wd = p.weight_decay ? static_cast<T>(weight_decay_) : T(0);
      const T mom = static_cast<T>(momentum_);
      const T step_size = static_cast<T>(lr);
      for (std::size_t i = 0; i < v.data.size(); ++i) {
        v.data[i] = mom * v.data[i] + (grad.data[i] + wd * p.value->data[i]);
        p.value->data[i] -= step_size * v.data[i];
      }
    }
  }

  const Tensor<T>* velocity(const std::string& name) const {
    const auto it = velocity_.find(name);
    return it == velocity_.end() ? nullptr : &it->second;
  }

  void reset() { velocity_.clear(); }

 private:
  double momentum_;
  double weight_decay_;
  std::map<std::string, Tensor<T>> velocity_;
};

}  // namespace soundrep
