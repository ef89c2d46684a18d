#include "mas/nn.hpp"

#include <cmath>

#include "mas/error.hpp"

namespace mas::nn {

Tensor ParamStore::add(std::string name, Tensor tensor, bool trainable) {
  if (index_.count(name)) throw Error("parameter name '" + name + "' already registered");
  tensor.set_requires_grad(trainable);
  index_.emplace(name, params_.size());
  params_.push_back({tensor, std::move(name), trainable});
  return tensor;
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
  return params_[it->second].tensor;
}

std::size_t ParamStore::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

Linear make_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, CounterRng& rng,
                   double stddev) {
  Linear l;
  l.weight = store.add(name + ".weight", Tensor::randn({in, out}, rng, stddev));
  l.bias = store.add(name + ".bias", Tensor::zeros({out}));
  return l;
}

Conv make_conv(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, int stride,
               CounterRng& rng, bool trainable) {
  Conv c;
  c.stride = stride;
  const double stddev = std::sqrt(2.0 / static_cast<double>(in * 9));
  c.weight = store.add(name + ".weight", Tensor::randn({out, in, 3, 3}, rng, stddev), trainable);
  c.bias = store.add(name + ".bias", Tensor::zeros({out}), trainable);
  return c;
}

LayerNorm make_layernorm(ParamStore& store, const std::string& name, std::size_t width) {
  LayerNorm n;
  n.gain = store.add(name + ".gain", Tensor::full({width}, 1.0));
  n.bias = store.add(name + ".bias", Tensor::zeros({width}));
  return n;
}

}  // namespace mas::nn
