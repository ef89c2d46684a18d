#include "mas/ndgrad/adam.hpp"

#include <cmath>

#include "mas/error.hpp"

namespace mas::ndgrad {

void Adam::step(std::span<Parameter> params, long step_index) { step(params, step_index, config_.lr); }

void Adam::step(std::span<Parameter> params, long step_index, double lr) {
  if (step_index < 1) throw Error("adam: step index must start at 1, got " + std::to_string(step_index));
  for (const auto& p : params) {
    if (p.trainable && !p.tensor.has_grad()) throw Error("adam: parameter '" + p.name + "' has no gradient");
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_index));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_index));
  for (auto& p : params) {
    if (!p.trainable) continue;
    auto values = p.tensor.mutable_values();
    auto grad = p.tensor.mutable_grad();
    Moments& mo = moments_[p.name];
    if (mo.m.size() != values.size()) {
      mo.m.assign(values.size(), 0.0);
      mo.v.assign(values.size(), 0.0);
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      mo.m[i] = config_.beta1 * mo.m[i] + (1.0 - config_.beta1) * g;
      mo.v[i] = config_.beta2 * mo.v[i] + (1.0 - config_.beta2) * g * g;
      const double mhat = mo.m[i] / bc1;
      const double vhat = mo.v[i] / bc2;
      values[i] -= lr * (mhat / (std::sqrt(vhat) + config_.eps) + config_.weight_decay * values[i]);
      grad[i] = 0.0;
    }
  }
}

}  // namespace mas::ndgrad
