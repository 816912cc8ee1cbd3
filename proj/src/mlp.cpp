#include "alttrack/mlp.hpp"

#include "alttrack/ops.hpp"

namespace alttrack {
namespace {

std::string weight_name(const std::string& prefix, std::size_t i) { return prefix + "." + std::to_string(i) + ".w"; }
std::string bias_name(const std::string& prefix, std::size_t i) { return prefix + "." + std::to_string(i) + ".b"; }

std::size_t layer_count(const ParamStore& store, const std::string& prefix) {
  std::size_t n = 0;
  while (store.contains(weight_name(prefix, n))) ++n;
  if (n == 0) throw ContractError("mlp: no layers registered under " + prefix);
  return n;
}

}  // namespace

Tensor mlp_forward(const Tensor& x, const std::vector<DenseLayer>& layers, Activation activation) {
  if (layers.empty()) throw ContractError("mlp: no layers");
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = ops::linear(h, layers[i].weight, layers[i].bias);
    if (i + 1 < layers.size() && activation == Activation::relu) h = ops::relu(h);
  }
  return h;
}

void add_mlp_params(ParamStore& store, std::mt19937_64& rng, const std::string& prefix,
                    const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw ContractError("mlp: need at least input and output width");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    store.add(weight_name(prefix, i), init_weight(rng, dims[i], dims[i + 1]));
    store.add(bias_name(prefix, i), Tensor::zeros({dims[i + 1]}));
  }
}

std::vector<DenseLayer> mlp_layers(const ParamStore& store, const std::string& prefix) {
  std::vector<DenseLayer> layers;
  const auto n = layer_count(store, prefix);
  for (std::size_t i = 0; i < n; ++i) {
    layers.push_back({store.value(weight_name(prefix, i)), store.value(bias_name(prefix, i))});
  }
  return layers;
}

Var mlp_forward(Tape& tape, const ParamStore& store, const std::string& prefix, Var x, Activation activation) {
  const auto n = layer_count(store, prefix);
  Var h = x;
  for (std::size_t i = 0; i < n; ++i) {
    h = tape.linear(h, tape.param(store, weight_name(prefix, i)), tape.param(store, bias_name(prefix, i)));
    if (i + 1 < n && activation == Activation::relu) h = tape.relu(h);
  }
  return h;
}

}  // namespace alttrack
