#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wsense/rng.hpp"
#include "wsense/tensor.hpp"

namespace wsense {

enum class LayerKind {
  conv1d,
  batchnorm1d,
  maxpool1d,
  globalmaxpool,
  dense,
  lstm,
  dropout,
  activation,
  flatten,
  wsense,  // composite: blocks = {conv_a, conv_b}
  se,      // composite: blocks = {fc1, fc2}
};

enum class Activation { linear, relu, elu, sigmoid, tanh, softmax };

enum class Mode { train, infer };

std::string_view to_string(LayerKind kind);
std::string_view to_string(Activation kind);

struct LayerHyper {
  std::size_t kernel_size = 0;
  std::size_t in_features = 0;   // conv in-channels, dense/lstm input width, block channels
  std::size_t units = 0;         // conv out-channels, dense/lstm units
  std::size_t pool_size = 0;
  std::size_t reduction = 0;     // SE reduction ratio
  double dropout_rate = 0.0;
  Activation activation = Activation::linear;
  bool use_bias = true;
  bool return_sequences = true;
  double momentum = 0.99;
  double epsilon = 1e-3;
};

struct NamedTensor {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// Parameters and hyperparameters of one layer.
///
/// Weight layouts:
///   conv1d      kernel (kernel_size, in, out), bias (out)
///   batchnorm1d gamma, beta (trainable), moving_mean, moving_var (not trainable)
///   dense       kernel (in, units), bias (units) when use_bias
///   lstm        kernel (in + units, 4 * units) over [x_t, h_{t-1}], bias (4 * units);
///               gate blocks ordered input, forget, cell, output
struct LayerParams {
  LayerKind kind = LayerKind::activation;
  std::string name;
  LayerHyper hyper;
  std::vector<NamedTensor> weights;
  std::vector<LayerParams> blocks;

  Tensor& weight(std::string_view key);
  const Tensor& weight(std::string_view key) const;
  bool has_weight(std::string_view key) const;
};

LayerParams make_conv1d(std::size_t kernel_size, std::size_t in_channels, std::size_t out_channels);
LayerParams make_batchnorm1d(std::size_t channels, double momentum = 0.99, double epsilon = 1e-3);
LayerParams make_maxpool1d(std::size_t pool_size = 2);
LayerParams make_globalmaxpool();
LayerParams make_dense(std::size_t in_features, std::size_t units, bool use_bias = true);
LayerParams make_lstm(std::size_t in_features, std::size_t units, bool return_sequences);
LayerParams make_dropout(double rate);
LayerParams make_activation(Activation kind);
LayerParams make_flatten();

/// Uniform fan-in initialisation (limit sqrt(3 / fan_in)) for kernels, zero
/// biases, unit gamma and moving variance, zero beta and moving mean.
/// Recurses into blocks.
void initialize(LayerParams& p, Rng& rng);

/// Checks weight shapes against the hyperparameters; throws ConfigError.
void validate(const LayerParams& p);

struct ParamCount {
  std::size_t trainable = 0;
  std::size_t total = 0;
};

/// Trainable parameters plus batchnorm moving statistics in `total`.
ParamCount count_params(const LayerParams& p);

/// Output shape for an input shape (batch axis included), or DimensionError.
Shape output_shape(const LayerParams& p, const Shape& input);

/// Saved forward intermediates for one layer.
struct LayerCache {
  Shape input_shape;
  Mode mode = Mode::infer;
  std::vector<Tensor> saved;
  std::vector<std::size_t> winners;
  std::vector<LayerCache> blocks;
  bool recorded = false;
};

/// Forward pass over a batch. Sequences are (batch, time, channels), flat
/// features (batch, features). When `cache` is non-null the intermediates
/// needed by layer_backward are recorded. `rng` is required for dropout in
/// train mode.
Tensor layer_forward(const LayerParams& p, const Tensor& x, Mode mode, Rng* rng = nullptr,
                     LayerCache* cache = nullptr);

/// Reverse pass. `grads` holds one accumulator per parameter of `p` in
/// flatten_params order; gradients are added into them. Returns the
/// gradient with respect to the layer input.
Tensor layer_backward(const LayerParams& p, const LayerCache& cache, const Tensor& grad_out,
                      std::span<Tensor> grads);

/// Moves batchnorm moving statistics toward the batch statistics recorded by
/// a train-mode forward. Recurses into blocks; no-op for other layers.
void apply_moving_stats(LayerParams& p, const LayerCache& cache);

/// Every parameter tensor of `p` (weights, then blocks), depth first.
std::vector<NamedTensor*> flatten_params(LayerParams& p);
std::vector<const NamedTensor*> flatten_params(const LayerParams& p);

// Single-layer conveniences. Each accepts one sample (time, channels) or a
// batch (batch, time, channels) and returns the same rank.
Tensor conv1d_forward(const Tensor& x, const LayerParams& p);
Tensor batchnorm1d_forward(const Tensor& x, LayerParams& p, Mode mode);
Tensor maxpool1d_forward(const Tensor& x, const LayerParams& p);
Tensor global_maxpool_forward(const Tensor& x);
Tensor dense_forward(const Tensor& x, const LayerParams& p);
Tensor lstm_forward(const Tensor& x, const LayerParams& p);

/// Activations apply elementwise; softmax normalises over the trailing axis.
Tensor apply_activation(Activation kind, const Tensor& x);
/// Gradient through an activation given its output `y`.
Tensor activation_backward(Activation kind, const Tensor& y, const Tensor& grad_out);

}  // namespace wsense
