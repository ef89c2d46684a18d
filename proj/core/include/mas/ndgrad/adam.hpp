#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mas/ndgrad/tensor.hpp"

namespace mas::ndgrad {

struct AdamConfig {
  double lr = 4.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.96;
  double eps = 1e-8;
  double weight_decay = 4.5e-4;
};

/// Adam with bias correction and decoupled weight decay. Moment buffers are
/// keyed by parameter name.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Applies update number `step_index` (1-based) and zeroes the gradients.
  /// Throws if a trainable parameter has no gradient.
  void step(std::span<Parameter> params, long step_index);
  void step(std::span<Parameter> params, long step_index, double lr);

  const AdamConfig& config() const { return config_; }
  AdamConfig& config() { return config_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamConfig config_;
  std::unordered_map<std::string, Moments> moments_;
};

}  // namespace mas::ndgrad
