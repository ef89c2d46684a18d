#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mas/ndgrad/tensor.hpp"

namespace mas::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;  // "input i, element j"
  std::size_t checked = 0;
  std::size_t kinks = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t max_elements_per_input = 0;  // 0 checks every element
  double floor = 1.0;                      // relative error denominator floor
  bool five_point = false;                 // fourth-order stencil instead of central
  // When > 0, an element whose difference quotients at step and step/4
  // disagree by more than this (relative) is counted as straddling a kink and
  // left out of max_rel_error.
  double kink_tolerance = 0.0;
};

/// Compares reverse-mode gradients of the scalar `f()` with finite
/// differences on every element of every tensor in `inputs`. Relative error
/// uses max(floor, |analytic|, |numeric|) as the denominator.
inline GradCheck check_gradients(const std::function<ndgrad::Tensor()>& f, std::vector<ndgrad::Tensor> inputs,
                                 const GradCheckOptions& opt) {
  for (auto& t : inputs) t.clear_grad();
  f().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    analytic.emplace_back(t.grad().begin(), t.grad().end());
    if (analytic.back().empty()) analytic.back().assign(t.numel(), 0.0);
  }

  GradCheck out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto values = inputs[i].mutable_values();
    const std::size_t n = values.size();
    const std::size_t cap = opt.max_elements_per_input;
    const std::size_t stride = (cap && n > cap) ? n / cap : 1;
    for (std::size_t j = 0; j < n; j += stride) {
      const double orig = values[j];
      auto at = [&](double delta) {
        values[j] = orig + delta;
        const double v = f().item();
        values[j] = orig;
        return v;
      };
      auto quotient = [&](double h) {
        if (!opt.five_point) return (at(h) - at(-h)) / (2.0 * h);
        return (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
      };
      const double numeric = quotient(opt.step);
      const double a = analytic[i][j];
      auto rel = [&](double x, double y) { return std::abs(x - y) / std::max({opt.floor, std::abs(x), std::abs(y)}); };
      ++out.checked;
      if (opt.kink_tolerance > 0.0 && rel(numeric, quotient(opt.step / 4.0)) > opt.kink_tolerance) {
        ++out.kinks;
        continue;
      }
      const double r = rel(a, numeric);
      if (r > out.max_rel_error) {
        out.max_rel_error = r;
        out.worst = "input " + std::to_string(i) + ", element " + std::to_string(j);
      }
    }
  }
  return out;
}

inline GradCheck check_gradients(const std::function<ndgrad::Tensor()>& f, std::vector<ndgrad::Tensor> inputs,
                                 double step = 1e-5, std::size_t max_elements_per_input = 0) {
  GradCheckOptions opt;
  opt.step = step;
  opt.max_elements_per_input = max_elements_per_input;
  return check_gradients(f, std::move(inputs), opt);
}

}  // namespace mas::testing
