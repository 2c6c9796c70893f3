#include "wsense/attention.hpp"

#include "wsense/errors.hpp"

namespace wsense {

LayerParams make_wsense(std::size_t channels) {
  LayerParams p;
  p.kind = LayerKind::wsense;
  p.name = "wsense";
  p.hyper.in_features = channels;
  p.hyper.units = channels;
  LayerParams conv_a = make_conv1d(5, channels, channels);
  conv_a.name = "wsense.conv_a";
  conv_a.hyper.activation = Activation::elu;
  LayerParams conv_b = make_conv1d(1, channels, channels);
  conv_b.name = "wsense.conv_b";
  conv_b.hyper.activation = Activation::sigmoid;
  p.blocks = {std::move(conv_a), std::move(conv_b)};
  return p;
}

LayerParams make_se(std::size_t channels, std::size_t reduction) {
  if (reduction == 0 || channels % reduction != 0) {
    throw ConfigError("SE reduction ratio " + std::to_string(reduction) +
                      " does not divide channel count " + std::to_string(channels));
  }
  LayerParams p;
  p.kind = LayerKind::se;
  p.name = "se";
  p.hyper.in_features = channels;
  p.hyper.units = channels;
  p.hyper.reduction = reduction;
  LayerParams fc1 = make_dense(channels, channels / reduction, false);
  fc1.name = "se.fc1";
  fc1.hyper.activation = Activation::relu;
  LayerParams fc2 = make_dense(channels / reduction, channels, false);
  fc2.name = "se.fc2";
  fc2.hyper.activation = Activation::sigmoid;
  p.blocks = {std::move(fc1), std::move(fc2)};
  return p;
}

namespace {

void require_block(const LayerParams& p, LayerKind kind) {
  if (p.kind != kind || p.blocks.size() != 2) {
    throw ConfigError(p.name + ": not a " + std::string(to_string(kind)) + " block");
  }
}

Tensor with_batch(const Tensor& x) {
  if (x.rank() == 2) return x.reshaped(Shape{1, x.extent(0), x.extent(1)});
  return x;
}

}  // namespace

Tensor wsense_forward(const Tensor& x, const LayerParams& p) {
  require_block(p, LayerKind::wsense);
  Tensor y = layer_forward(p, with_batch(x), Mode::infer);
  if (x.rank() == 2) return std::move(y).reshaped(Shape{y.extent(1)});
  return y;
}

Tensor se_forward(const Tensor& x, const LayerParams& p) {
  require_block(p, LayerKind::se);
  Tensor y = layer_forward(p, with_batch(x), Mode::infer);
  if (x.rank() == 2) return std::move(y).reshaped(x.shape());
  return y;
}

WSenseTrace wsense_trace(const Tensor& x, const LayerParams& p) {
  require_block(p, LayerKind::wsense);
  LayerCache cache;
  Tensor y = layer_forward(p, with_batch(x), Mode::infer, nullptr, &cache);
  return {cache.saved[1], cache.saved[2], std::move(y)};
}

namespace detail {

// cache.saved = {ELU(conv_a(x)), pooled m, gate g}; blocks = {conv_a, conv_b}
Tensor wsense_block_forward(const LayerParams& p, const Tensor& x, Mode mode, LayerCache* cache) {
  require_block(p, LayerKind::wsense);
  const std::size_t B = x.extent(0), C = p.hyper.in_features;
  LayerCache ca, cb;
  LayerCache* pa = cache ? &ca : nullptr;
  LayerCache* pb = cache ? &cb : nullptr;

  Tensor act = apply_activation(Activation::elu, layer_forward(p.blocks[0], x, mode, nullptr, pa));
  LayerCache pool;
  Tensor pooled = layer_forward(make_globalmaxpool(), act, mode, nullptr, &pool);
  Tensor zb = layer_forward(p.blocks[1], pooled.reshaped(Shape{B, 1, C}), mode, nullptr, pb);
  Tensor gate = apply_activation(Activation::sigmoid, std::move(zb).reshaped(Shape{B, C}));
  Tensor out(Shape{B, C});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pooled[i] * gate[i];

  if (cache) {
    cache->winners = std::move(pool.winners);
    cache->saved = {std::move(act), std::move(pooled), std::move(gate)};
    cache->blocks = {std::move(ca), std::move(cb)};
  }
  return out;
}

Tensor wsense_block_backward(const LayerParams& p, const LayerCache& cache, const Tensor& g,
                             std::span<Tensor> grads) {
  const Tensor& act = cache.saved[0];
  const Tensor& pooled = cache.saved[1];
  const Tensor& gate = cache.saved[2];
  const std::size_t B = pooled.extent(0), C = pooled.extent(1);

  Tensor dpooled(pooled.shape()), dzb(Shape{B, 1, C});
  for (std::size_t i = 0; i < g.size(); ++i) {
    dpooled[i] = g[i] * gate[i];
    dzb[i] = g[i] * pooled[i] * gate[i] * (1.0 - gate[i]);
  }
  const Tensor dm = layer_backward(p.blocks[1], cache.blocks[1], dzb, grads.subspan(2, 2));
  for (std::size_t i = 0; i < dpooled.size(); ++i) dpooled[i] += dm[i];

  Tensor dact(act.shape());
  for (std::size_t o = 0; o < cache.winners.size(); ++o) dact[cache.winners[o]] += dpooled[o];
  const Tensor dza = activation_backward(Activation::elu, act, dact);
  return layer_backward(p.blocks[0], cache.blocks[0], dza, grads.subspan(0, 2));
}

// cache.saved = {x, relu(fc1(s)), excitation a}; blocks = {fc1, fc2}
Tensor se_block_forward(const LayerParams& p, const Tensor& x, Mode mode, LayerCache* cache) {
  require_block(p, LayerKind::se);
  const std::size_t B = x.extent(0), T = x.extent(1), C = x.extent(2);
  if (T == 0) throw DimensionError(p.name + ": empty time axis");
  Tensor squeezed = reduce(ReduceKind::mean, x, 1);
  LayerCache c1, c2;
  Tensor hidden = apply_activation(
      Activation::relu, layer_forward(p.blocks[0], squeezed, mode, nullptr, cache ? &c1 : nullptr));
  Tensor excite = apply_activation(
      Activation::sigmoid, layer_forward(p.blocks[1], hidden, mode, nullptr, cache ? &c2 : nullptr));
  Tensor y(x.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i = (b * T + t) * C + c;
        y[i] = x[i] * excite[b * C + c];
      }
  if (cache) {
    cache->saved = {x, std::move(hidden), std::move(excite)};
    cache->blocks = {std::move(c1), std::move(c2)};
  }
  return y;
}

Tensor se_block_backward(const LayerParams& p, const LayerCache& cache, const Tensor& g,
                         std::span<Tensor> grads) {
  const Tensor& x = cache.saved[0];
  const Tensor& hidden = cache.saved[1];
  const Tensor& excite = cache.saved[2];
  const std::size_t B = x.extent(0), T = x.extent(1), C = x.extent(2);

  Tensor dx(x.shape()), dexcite(excite.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i = (b * T + t) * C + c;
        dx[i] = g[i] * excite[b * C + c];
        dexcite[b * C + c] += g[i] * x[i];
      }
  const Tensor dz2 = activation_backward(Activation::sigmoid, excite, dexcite);
  const Tensor dhidden = layer_backward(p.blocks[1], cache.blocks[1], dz2, grads.subspan(1, 1));
  const Tensor dz1 = activation_backward(Activation::relu, hidden, dhidden);
  const Tensor dsq = layer_backward(p.blocks[0], cache.blocks[0], dz1, grads.subspan(0, 1));
  const double inv_t = 1.0 / static_cast<double>(T);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c) dx[(b * T + t) * C + c] += dsq[b * C + c] * inv_t;
  return dx;
}

}  // namespace detail
}  // namespace wsense
