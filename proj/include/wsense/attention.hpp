#pragma once

#include <cstddef>
#include <span>

#include "wsense/layers.hpp"

namespace wsense {

/// WSense block over `channels` feature maps: conv(k=5, ELU) -> global max
/// pool -> conv(k=1, sigmoid) gate -> pooled * gate. Both convolutions keep
/// the channel count.
LayerParams make_wsense(std::size_t channels);

/// Squeeze-and-excitation: average pool over time -> dense C->C/r (ReLU, no
/// bias) -> dense C/r->C (sigmoid, no bias) -> rescale the input channels.
/// Throws ConfigError when `reduction` does not divide `channels`.
LayerParams make_se(std::size_t channels, std::size_t reduction);

/// (T, C) -> (C) or (B, T, C) -> (B, C). Output width is C for any T.
Tensor wsense_forward(const Tensor& x, const LayerParams& p);

/// Same shape in and out.
Tensor se_forward(const Tensor& x, const LayerParams& p);

/// Intermediates of one WSense evaluation, batch-shaped (B, C).
struct WSenseTrace {
  Tensor pooled;  // max over time of ELU(conv_a(x))
  Tensor gate;    // sigmoid(conv_b(pooled))
  Tensor output;  // pooled * gate
};
WSenseTrace wsense_trace(const Tensor& x, const LayerParams& p);

namespace detail {

Tensor wsense_block_forward(const LayerParams& p, const Tensor& x, Mode mode, LayerCache* cache);
Tensor wsense_block_backward(const LayerParams& p, const LayerCache& cache, const Tensor& grad_out,
                             std::span<Tensor> grads);
Tensor se_block_forward(const LayerParams& p, const Tensor& x, Mode mode, LayerCache* cache);
Tensor se_block_backward(const LayerParams& p, const LayerCache& cache, const Tensor& grad_out,
                         std::span<Tensor> grads);

}  // namespace detail
}  // namespace wsense
