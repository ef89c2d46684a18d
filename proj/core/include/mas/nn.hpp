#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mas/ndgrad/ops.hpp"
#include "mas/ndgrad/tensor.hpp"
#include "mas/rng.hpp"

namespace mas::nn {

using ndgrad::Parameter;
using ndgrad::Tensor;

/// Ordered, name-unique collection of a model's parameters.
class ParamStore {
 public:
  Tensor add(std::string name, Tensor tensor, bool trainable = true);
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  std::size_t element_count() const;
  void zero_grad();

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
  Tensor operator()(const Tensor& x) const { return ndgrad::add(ndgrad::matmul(x, weight), bias); }
};

struct Conv {
  Tensor weight;  // [out, in, 3, 3]
  Tensor bias;    // [out]
  int stride = 1;
  Tensor operator()(const Tensor& x) const { return ndgrad::conv2d(x, weight, bias, stride); }
};

struct LayerNorm {
  Tensor gain, bias;
  Tensor operator()(const Tensor& x) const { return ndgrad::layernorm(x, gain, bias); }
};

Linear make_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, CounterRng& rng,
                   double stddev);
/// He-normal initialised 3x3 convolution.
Conv make_conv(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, int stride,
               CounterRng& rng, bool trainable = true);
LayerNorm make_layernorm(ParamStore& store, const std::string& name, std::size_t width);

}  // namespace mas::nn
