#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "alttrack/autodiff.hpp"

namespace alttrack {

enum class Activation { relu, identity };

/// Weights and bias of one fully connected layer.
struct DenseLayer {
  Tensor weight;  // [din, dout]
  Tensor bias;    // [dout]
};

/// Plain-tensor MLP: linear layers with `activation` between them (the last layer stays linear).
Tensor mlp_forward(const Tensor& x, const std::vector<DenseLayer>& layers, Activation activation = Activation::relu);

/// Registers `prefix.{i}.w` / `prefix.{i}.b` for a chain of widths dims[0] -> ... -> dims.back().
void add_mlp_params(ParamStore& store, std::mt19937_64& rng, const std::string& prefix,
                    const std::vector<std::size_t>& dims);

/// Reads the layers registered by add_mlp_params.
std::vector<DenseLayer> mlp_layers(const ParamStore& store, const std::string& prefix);

/// Tape version of mlp_forward over parameters registered with add_mlp_params.
Var mlp_forward(Tape& tape, const ParamStore& store, const std::string& prefix, Var x,
                Activation activation = Activation::relu);

}  // namespace alttrack
