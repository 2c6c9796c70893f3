#include "wsense/layers.hpp"

#include <algorithm>
#include <cmath>

#include "wsense/attention.hpp"
#include "wsense/errors.hpp"

namespace wsense {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::batchnorm1d: return "batchnorm1d";
    case LayerKind::maxpool1d: return "maxpool1d";
    case LayerKind::globalmaxpool: return "globalmaxpool";
    case LayerKind::dense: return "dense";
    case LayerKind::lstm: return "lstm";
    case LayerKind::dropout: return "dropout";
    case LayerKind::activation: return "activation";
    case LayerKind::flatten: return "flatten";
    case LayerKind::wsense: return "wsense";
    case LayerKind::se: return "se";
  }
  return "?";
}

std::string_view to_string(Activation kind) {
  switch (kind) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::elu: return "elu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

Tensor& LayerParams::weight(std::string_view key) {
  for (auto& w : weights)
    if (w.name == key) return w.value;
  throw StateError(name + ": no weight named " + std::string(key));
}

const Tensor& LayerParams::weight(std::string_view key) const {
  for (const auto& w : weights)
    if (w.name == key) return w.value;
  throw StateError(name + ": no weight named " + std::string(key));
}

bool LayerParams::has_weight(std::string_view key) const {
  return std::any_of(weights.begin(), weights.end(), [&](const auto& w) { return w.name == key; });
}

// ---------------------------------------------------------------------------
// Construction

LayerParams make_conv1d(std::size_t kernel_size, std::size_t in_channels,
                        std::size_t out_channels) {
  if (kernel_size == 0 || in_channels == 0 || out_channels == 0) {
    throw ConfigError("conv1d extents must be positive");
  }
  LayerParams p;
  p.kind = LayerKind::conv1d;
  p.name = "conv1d";
  p.hyper.kernel_size = kernel_size;
  p.hyper.in_features = in_channels;
  p.hyper.units = out_channels;
  p.weights.push_back({"kernel", Tensor(Shape{kernel_size, in_channels, out_channels}), true});
  p.weights.push_back({"bias", Tensor(Shape{out_channels}), true});
  return p;
}

LayerParams make_batchnorm1d(std::size_t channels, double momentum, double epsilon) {
  LayerParams p;
  p.kind = LayerKind::batchnorm1d;
  p.name = "batchnorm1d";
  p.hyper.in_features = channels;
  p.hyper.units = channels;
  p.hyper.momentum = momentum;
  p.hyper.epsilon = epsilon;
  p.weights.push_back({"gamma", Tensor(Shape{channels}, 1.0), true});
  p.weights.push_back({"beta", Tensor(Shape{channels}), true});
  p.weights.push_back({"moving_mean", Tensor(Shape{channels}), false});
  p.weights.push_back({"moving_var", Tensor(Shape{channels}, 1.0), false});
  return p;
}

LayerParams make_maxpool1d(std::size_t pool_size) {
  if (pool_size == 0) throw ConfigError("pool size must be positive");
  LayerParams p;
  p.kind = LayerKind::maxpool1d;
  p.name = "maxpool1d";
  p.hyper.pool_size = pool_size;
  return p;
}

LayerParams make_globalmaxpool() {
  LayerParams p;
  p.kind = LayerKind::globalmaxpool;
  p.name = "globalmaxpool";
  return p;
}

LayerParams make_dense(std::size_t in_features, std::size_t units, bool use_bias) {
  if (in_features == 0 || units == 0) throw ConfigError("dense extents must be positive");
  LayerParams p;
  p.kind = LayerKind::dense;
  p.name = "dense";
  p.hyper.in_features = in_features;
  p.hyper.units = units;
  p.hyper.use_bias = use_bias;
  p.weights.push_back({"kernel", Tensor(Shape{in_features, units}), true});
  if (use_bias) p.weights.push_back({"bias", Tensor(Shape{units}), true});
  return p;
}

LayerParams make_lstm(std::size_t in_features, std::size_t units, bool return_sequences) {
  if (in_features == 0 || units == 0) throw ConfigError("lstm extents must be positive");
  LayerParams p;
  p.kind = LayerKind::lstm;
  p.name = "lstm";
  p.hyper.in_features = in_features;
  p.hyper.units = units;
  p.hyper.return_sequences = return_sequences;
  p.hyper.activation = Activation::tanh;
  p.weights.push_back({"kernel", Tensor(Shape{in_features + units, 4 * units}), true});
  p.weights.push_back({"bias", Tensor(Shape{4 * units}), true});
  return p;
}

LayerParams make_dropout(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  LayerParams p;
  p.kind = LayerKind::dropout;
  p.name = "dropout";
  p.hyper.dropout_rate = rate;
  return p;
}

LayerParams make_activation(Activation kind) {
  LayerParams p;
  p.kind = LayerKind::activation;
  p.name = std::string(to_string(kind));
  p.hyper.activation = kind;
  return p;
}

LayerParams make_flatten() {
  LayerParams p;
  p.kind = LayerKind::flatten;
  p.name = "flatten";
  return p;
}

void initialize(LayerParams& p, Rng& rng) {
  std::size_t fan_in = 0;
  switch (p.kind) {
    case LayerKind::conv1d: fan_in = p.hyper.kernel_size * p.hyper.in_features; break;
    case LayerKind::dense: fan_in = p.hyper.in_features; break;
    case LayerKind::lstm: fan_in = p.hyper.in_features + p.hyper.units; break;
    default: break;
  }
  for (auto& w : p.weights) {
    if (w.name == "kernel") {
      const double limit = std::sqrt(3.0 / static_cast<double>(fan_in));
      for (double& v : w.value.data()) v = rng.uniform(-limit, limit);
    } else if (w.name == "gamma" || w.name == "moving_var") {
      w.value.fill(1.0);
    } else {
      w.value.fill(0.0);
    }
  }
  for (auto& b : p.blocks) initialize(b, rng);
}

void validate(const LayerParams& p) {
  auto expect = [&](std::string_view key, const Shape& shape) {
    if (!p.has_weight(key) || p.weight(key).shape() != shape) {
      throw ConfigError(p.name + ": weight " + std::string(key) + " must have shape " +
                        to_string(shape));
    }
  };
  const auto& h = p.hyper;
  switch (p.kind) {
    case LayerKind::conv1d:
      expect("kernel", {h.kernel_size, h.in_features, h.units});
      expect("bias", {h.units});
      break;
    case LayerKind::batchnorm1d:
      if (p.weights.size() != 4) throw ConfigError(p.name + ": batchnorm needs 4 vectors");
      for (auto key : {"gamma", "beta", "moving_mean", "moving_var"}) expect(key, {h.units});
      for (double v : p.weight("moving_var").data())
        if (!(v > 0.0)) throw ConfigError(p.name + ": moving_var must be positive");
      break;
    case LayerKind::dense:
      expect("kernel", {h.in_features, h.units});
      if (h.use_bias) expect("bias", {h.units});
      break;
    case LayerKind::lstm:
      expect("kernel", {h.in_features + h.units, 4 * h.units});
      expect("bias", {4 * h.units});
      break;
    default: break;
  }
  for (const auto& b : p.blocks) validate(b);
}

ParamCount count_params(const LayerParams& p) {
  ParamCount c;
  for (const auto& w : p.weights) {
    c.total += w.value.size();
    if (w.trainable) c.trainable += w.value.size();
  }
  for (const auto& b : p.blocks) {
    const auto bc = count_params(b);
    c.total += bc.total;
    c.trainable += bc.trainable;
  }
  return c;
}

namespace {

void collect(LayerParams& p, std::vector<NamedTensor*>& out) {
  for (auto& w : p.weights) out.push_back(&w);
  for (auto& b : p.blocks) collect(b, out);
}

void collect(const LayerParams& p, std::vector<const NamedTensor*>& out) {
  for (const auto& w : p.weights) out.push_back(&w);
  for (const auto& b : p.blocks) collect(b, out);
}

[[noreturn]] void bad_input(const LayerParams& p, const Shape& got, const std::string& want) {
  throw DimensionError(p.name + ": input shape " + to_string(got) + ", expected " + want);
}

}  // namespace

std::vector<NamedTensor*> flatten_params(LayerParams& p) {
  std::vector<NamedTensor*> out;
  collect(p, out);
  return out;
}

std::vector<const NamedTensor*> flatten_params(const LayerParams& p) {
  std::vector<const NamedTensor*> out;
  collect(p, out);
  return out;
}

Shape output_shape(const LayerParams& p, const Shape& in) {
  const auto& h = p.hyper;
  auto need_seq = [&](std::size_t channels) {
    if (in.size() != 3 || (channels && in[2] != channels)) {
      bad_input(p, in, "(batch, time, " + (channels ? std::to_string(channels) : "C") + ")");
    }
  };
  switch (p.kind) {
    case LayerKind::conv1d:
      need_seq(h.in_features);
      return {in[0], in[1], h.units};
    case LayerKind::batchnorm1d:
      if (in.size() < 2 || in.back() != h.units) bad_input(p, in, "trailing " + std::to_string(h.units));
      return in;
    case LayerKind::maxpool1d:
      need_seq(0);
      if (in[1] < h.pool_size) bad_input(p, in, "time >= pool size " + std::to_string(h.pool_size));
      return {in[0], in[1] / h.pool_size, in[2]};
    case LayerKind::globalmaxpool:
      need_seq(0);
      if (in[1] == 0) bad_input(p, in, "non-empty time axis");
      return {in[0], in[2]};
    case LayerKind::dense: {
      if (in.size() < 2 || in.back() != h.in_features) {
        bad_input(p, in, "trailing " + std::to_string(h.in_features));
      }
      Shape out = in;
      out.back() = h.units;
      return out;
    }
    case LayerKind::lstm:
      need_seq(h.in_features);
      if (h.return_sequences) return {in[0], in[1], h.units};
      return {in[0], h.units};
    case LayerKind::flatten: {
      if (in.empty()) bad_input(p, in, "batch axis");
      std::size_t f = 1;
      for (std::size_t i = 1; i < in.size(); ++i) f *= in[i];
      return {in[0], f};
    }
    case LayerKind::wsense:
      need_seq(h.in_features);
      if (in[1] == 0) bad_input(p, in, "non-empty time axis");
      return {in[0], in[2]};
    case LayerKind::se:
      need_seq(h.in_features);
      return in;
    case LayerKind::dropout:
    case LayerKind::activation:
      return in;
  }
  return in;
}

// ---------------------------------------------------------------------------
// Kernels

namespace {

Tensor conv_fwd(const LayerParams& p, const Tensor& x) {
  const std::size_t B = x.extent(0), T = x.extent(1);
  const std::size_t K = p.hyper.kernel_size, Ci = p.hyper.in_features, Co = p.hyper.units;
  const std::size_t left = (K - 1) / 2;
  const double* W = p.weight("kernel").raw();
  const double* bias = p.weight("bias").raw();
  const double* px = x.raw();
  Tensor y(Shape{B, T, Co});
  double* py = y.raw();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      double* yrow = py + (b * T + t) * Co;
      std::copy(bias, bias + Co, yrow);
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(left);
        if (s < 0 || s >= static_cast<std::ptrdiff_t>(T)) continue;
        const double* xrow = px + (b * T + static_cast<std::size_t>(s)) * Ci;
        const double* wk = W + k * Ci * Co;
        for (std::size_t i = 0; i < Ci; ++i) {
          const double xv = xrow[i];
          const double* wrow = wk + i * Co;
          for (std::size_t o = 0; o < Co; ++o) yrow[o] += xv * wrow[o];
        }
      }
    }
  }
  return y;
}

Tensor conv_bwd(const LayerParams& p, const Tensor& x, const Tensor& gy, Tensor& dW, Tensor& db) {
  const std::size_t B = x.extent(0), T = x.extent(1);
  const std::size_t K = p.hyper.kernel_size, Ci = p.hyper.in_features, Co = p.hyper.units;
  const std::size_t left = (K - 1) / 2;
  const double* W = p.weight("kernel").raw();
  const double* px = x.raw();
  const double* pg = gy.raw();
  double* pdW = dW.raw();
  double* pdb = db.raw();
  Tensor dx(x.shape());
  double* pdx = dx.raw();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      const double* g = pg + (b * T + t) * Co;
      for (std::size_t o = 0; o < Co; ++o) pdb[o] += g[o];
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(left);
        if (s < 0 || s >= static_cast<std::ptrdiff_t>(T)) continue;
        const std::size_t row = (b * T + static_cast<std::size_t>(s)) * Ci;
        const double* xrow = px + row;
        double* dxrow = pdx + row;
        for (std::size_t i = 0; i < Ci; ++i) {
          const double xv = xrow[i];
          const double* wrow = W + (k * Ci + i) * Co;
          double* dwrow = pdW + (k * Ci + i) * Co;
          double acc = 0.0;
          for (std::size_t o = 0; o < Co; ++o) {
            acc += wrow[o] * g[o];
            dwrow[o] += xv * g[o];
          }
          dxrow[i] += acc;
        }
      }
    }
  }
  return dx;
}

Tensor batchnorm_fwd(const LayerParams& p, const Tensor& x, Mode mode, LayerCache* cache) {
  const std::size_t C = p.hyper.units;
  const std::size_t rows = x.size() / C;
  const double eps = p.hyper.epsilon;
  const double* gamma = p.weight("gamma").raw();
  const double* beta = p.weight("beta").raw();
  Tensor mean(Shape{C}), var(Shape{C}), inv(Shape{C});
  if (mode == Mode::train) {
    if (rows == 0) throw DimensionError(p.name + ": empty batch in train mode");
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < C; ++c) mean[c] += x[r * C + c];
    for (std::size_t c = 0; c < C; ++c) mean[c] /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < C; ++c) {
        const double d = x[r * C + c] - mean[c];
        var[c] += d * d;
      }
    for (std::size_t c = 0; c < C; ++c) var[c] /= static_cast<double>(rows);
  } else {
    mean = p.weight("moving_mean");
    var = p.weight("moving_var");
  }
  for (std::size_t c = 0; c < C; ++c) inv[c] = 1.0 / std::sqrt(var[c] + eps);

  Tensor xhat(x.shape()), y(x.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t i = r * C + c;
      xhat[i] = (x[i] - mean[c]) * inv[c];
      y[i] = gamma[c] * xhat[i] + beta[c];
    }
  if (cache) {
    cache->saved = {std::move(xhat), std::move(inv), std::move(mean), std::move(var)};
  }
  return y;
}

Tensor batchnorm_bwd(const LayerParams& p, const LayerCache& cache, const Tensor& g,
                     Tensor& dgamma, Tensor& dbeta) {
  const std::size_t C = p.hyper.units;
  const std::size_t rows = g.size() / C;
  const Tensor& xhat = cache.saved[0];
  const Tensor& inv = cache.saved[1];
  const double* gamma = p.weight("gamma").raw();
  Tensor dx(g.shape());
  std::vector<double> sum_dxhat(C, 0.0), sum_dxhat_xhat(C, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t i = r * C + c;
      dgamma[c] += g[i] * xhat[i];
      dbeta[c] += g[i];
      const double dxh = g[i] * gamma[c];
      sum_dxhat[c] += dxh;
      sum_dxhat_xhat[c] += dxh * xhat[i];
    }
  if (cache.mode == Mode::train) {
    const double n = static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i = r * C + c;
        const double dxh = g[i] * gamma[c];
        dx[i] = inv[c] / n * (n * dxh - sum_dxhat[c] - xhat[i] * sum_dxhat_xhat[c]);
      }
  } else {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < C; ++c) dx[r * C + c] = g[r * C + c] * gamma[c] * inv[c];
  }
  return dx;
}

Tensor maxpool_fwd(const LayerParams& p, const Tensor& x, LayerCache* cache) {
  const std::size_t B = x.extent(0), T = x.extent(1), C = x.extent(2);
  const std::size_t P = p.hyper.pool_size, To = T / P;
  Tensor y(Shape{B, To, C});
  std::vector<std::size_t> win(cache ? y.size() : 0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < To; ++t)
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = t * P;
        double bv = x[(b * T + best) * C + c];
        for (std::size_t k = 1; k < P; ++k) {
          const double v = x[(b * T + t * P + k) * C + c];
          if (v > bv) {
            bv = v;
            best = t * P + k;
          }
        }
        const std::size_t o = (b * To + t) * C + c;
        y[o] = bv;
        if (cache) win[o] = (b * T + best) * C + c;
      }
  if (cache) cache->winners = std::move(win);
  return y;
}

Tensor gmp_fwd(const Tensor& x, std::vector<std::size_t>* winners) {
  const std::size_t B = x.extent(0), T = x.extent(1), C = x.extent(2);
  if (T == 0) throw DimensionError("global max pool over empty time axis");
  Tensor y(Shape{B, C});
  if (winners) winners->assign(B * C, 0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      std::size_t best = 0;
      double bv = x[(b * T) * C + c];
      for (std::size_t t = 1; t < T; ++t) {
        const double v = x[(b * T + t) * C + c];
        if (v > bv) {
          bv = v;
          best = t;
        }
      }
      y[b * C + c] = bv;
      if (winners) (*winners)[b * C + c] = (b * T + best) * C + c;
    }
  return y;
}

Tensor route_to_winners(const Shape& in_shape, const std::vector<std::size_t>& winners,
                        const Tensor& g) {
  Tensor dx(in_shape);
  for (std::size_t o = 0; o < winners.size(); ++o) dx[winners[o]] += g[o];
  return dx;
}

Tensor dense_fwd(const LayerParams& p, const Tensor& x) {
  const std::size_t F = p.hyper.in_features, U = p.hyper.units;
  const std::size_t rows = x.size() / F;
  Shape out_shape = x.shape();
  out_shape.back() = U;
  Tensor y(out_shape);
  const double* W = p.weight("kernel").raw();
  const double* bias = p.hyper.use_bias ? p.weight("bias").raw() : nullptr;
  for (std::size_t r = 0; r < rows; ++r) {
    double* yrow = y.raw() + r * U;
    if (bias) std::copy(bias, bias + U, yrow);
    const double* xrow = x.raw() + r * F;
    for (std::size_t i = 0; i < F; ++i) {
      const double xv = xrow[i];
      if (xv == 0.0) continue;
      const double* wrow = W + i * U;
      for (std::size_t u = 0; u < U; ++u) yrow[u] += xv * wrow[u];
    }
  }
  return y;
}

Tensor dense_bwd(const LayerParams& p, const Tensor& x, const Tensor& g, std::span<Tensor> grads) {
  const std::size_t F = p.hyper.in_features, U = p.hyper.units;
  const std::size_t rows = x.size() / F;
  const double* W = p.weight("kernel").raw();
  double* dW = grads[0].raw();
  double* db = p.hyper.use_bias ? grads[1].raw() : nullptr;
  Tensor dx(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* grow = g.raw() + r * U;
    const double* xrow = x.raw() + r * F;
    double* dxrow = dx.raw() + r * F;
    if (db)
      for (std::size_t u = 0; u < U; ++u) db[u] += grow[u];
    for (std::size_t i = 0; i < F; ++i) {
      const double xv = xrow[i];
      const double* wrow = W + i * U;
      double* dwrow = dW + i * U;
      double acc = 0.0;
      for (std::size_t u = 0; u < U; ++u) {
        acc += wrow[u] * grow[u];
        dwrow[u] += xv * grow[u];
      }
      dxrow[i] = acc;
    }
  }
  return dx;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// saved: x (B,T,F), gates (B,T,4U) post-activation, c (B,T,U), h (B,T,U)
Tensor lstm_fwd(const LayerParams& p, const Tensor& x, LayerCache* cache) {
  const std::size_t B = x.extent(0), T = x.extent(1);
  const std::size_t F = p.hyper.in_features, U = p.hyper.units, G = 4 * U;
  const double* W = p.weight("kernel").raw();
  const double* bias = p.weight("bias").raw();
  Tensor gates(Shape{B, T, G}), cs(Shape{B, T, U}), hs(Shape{B, T, U});
  std::vector<double> z(G);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      std::copy(bias, bias + G, z.begin());
      const double* xrow = x.raw() + (b * T + t) * F;
      for (std::size_t i = 0; i < F; ++i) {
        const double v = xrow[i];
        const double* wrow = W + i * G;
        for (std::size_t j = 0; j < G; ++j) z[j] += v * wrow[j];
      }
      if (t > 0) {
        const double* hprev = hs.raw() + (b * T + t - 1) * U;
        for (std::size_t i = 0; i < U; ++i) {
          const double v = hprev[i];
          const double* wrow = W + (F + i) * G;
          for (std::size_t j = 0; j < G; ++j) z[j] += v * wrow[j];
        }
      }
      double* gt = gates.raw() + (b * T + t) * G;
      double* ct = cs.raw() + (b * T + t) * U;
      double* ht = hs.raw() + (b * T + t) * U;
      const double* cprev = t > 0 ? cs.raw() + (b * T + t - 1) * U : nullptr;
      for (std::size_t u = 0; u < U; ++u) {
        const double ig = sigmoid(z[u]);
        const double fg = sigmoid(z[U + u]);
        const double cg = std::tanh(z[2 * U + u]);
        const double og = sigmoid(z[3 * U + u]);
        gt[u] = ig;
        gt[U + u] = fg;
        gt[2 * U + u] = cg;
        gt[3 * U + u] = og;
        ct[u] = (cprev ? fg * cprev[u] : 0.0) + ig * cg;
        ht[u] = og * std::tanh(ct[u]);
      }
    }
  }
  Tensor out;
  if (p.hyper.return_sequences) {
    out = hs;
  } else {
    out = Tensor(Shape{B, U});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t u = 0; u < U; ++u) out[b * U + u] = hs[(b * T + T - 1) * U + u];
  }
  if (cache) cache->saved = {x, std::move(gates), std::move(cs), std::move(hs)};
  return out;
}

Tensor lstm_bwd(const LayerParams& p, const LayerCache& cache, const Tensor& g,
                std::span<Tensor> grads) {
  const Tensor& x = cache.saved[0];
  const Tensor& gates = cache.saved[1];
  const Tensor& cs = cache.saved[2];
  const Tensor& hs = cache.saved[3];
  const std::size_t B = x.extent(0), T = x.extent(1);
  const std::size_t F = p.hyper.in_features, U = p.hyper.units, G = 4 * U;
  const double* W = p.weight("kernel").raw();
  double* dW = grads[0].raw();
  double* db = grads[1].raw();
  Tensor dx(x.shape());
  std::vector<double> dh(U), dc(U), dz(G), dh_prev(U);
  for (std::size_t b = 0; b < B; ++b) {
    std::fill(dh.begin(), dh.end(), 0.0);
    std::fill(dc.begin(), dc.end(), 0.0);
    for (std::size_t t = T; t-- > 0;) {
      if (p.hyper.return_sequences) {
        const double* go = g.raw() + (b * T + t) * U;
        for (std::size_t u = 0; u < U; ++u) dh[u] += go[u];
      } else if (t == T - 1) {
        const double* go = g.raw() + b * U;
        for (std::size_t u = 0; u < U; ++u) dh[u] += go[u];
      }
      const double* gt = gates.raw() + (b * T + t) * G;
      const double* ct = cs.raw() + (b * T + t) * U;
      const double* cprev = t > 0 ? cs.raw() + (b * T + t - 1) * U : nullptr;
      for (std::size_t u = 0; u < U; ++u) {
        const double ig = gt[u], fg = gt[U + u], cg = gt[2 * U + u], og = gt[3 * U + u];
        const double tc = std::tanh(ct[u]);
        const double dcu = dc[u] + dh[u] * og * (1.0 - tc * tc);
        dz[u] = dcu * cg * ig * (1.0 - ig);
        dz[U + u] = (cprev ? dcu * cprev[u] : 0.0) * fg * (1.0 - fg);
        dz[2 * U + u] = dcu * ig * (1.0 - cg * cg);
        dz[3 * U + u] = dh[u] * tc * og * (1.0 - og);
        dc[u] = dcu * fg;
      }
      for (std::size_t j = 0; j < G; ++j) db[j] += dz[j];
      const double* xrow = x.raw() + (b * T + t) * F;
      double* dxrow = dx.raw() + (b * T + t) * F;
      for (std::size_t i = 0; i < F; ++i) {
        const double* wrow = W + i * G;
        double* dwrow = dW + i * G;
        const double xv = xrow[i];
        double acc = 0.0;
        for (std::size_t j = 0; j < G; ++j) {
          acc += wrow[j] * dz[j];
          dwrow[j] += xv * dz[j];
        }
        dxrow[i] = acc;
      }
      std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
      if (t > 0) {
        const double* hprev = hs.raw() + (b * T + t - 1) * U;
        for (std::size_t i = 0; i < U; ++i) {
          const double* wrow = W + (F + i) * G;
          double* dwrow = dW + (F + i) * G;
          const double hv = hprev[i];
          double acc = 0.0;
          for (std::size_t j = 0; j < G; ++j) {
            acc += wrow[j] * dz[j];
            dwrow[j] += hv * dz[j];
          }
          dh_prev[i] = acc;
        }
      }
      dh.swap(dh_prev);
    }
  }
  return dx;
}

}  // namespace

Tensor apply_activation(Activation kind, const Tensor& x) {
  Tensor y(x.shape());
  const std::size_t n = x.size();
  switch (kind) {
    case Activation::linear: y = x; break;
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] < 0.0 ? 0.0 : x[i];  // NaN passes through
      break;
    case Activation::elu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] >= 0.0 ? x[i] : std::expm1(x[i]);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) y[i] = sigmoid(x[i]);
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
      break;
    case Activation::softmax: {
      const std::size_t K = x.rank() ? x.shape().back() : 1;
      if (K == 0) break;
      for (std::size_t r = 0; r < n / K; ++r) {
        const double* z = x.raw() + r * K;
        double* out = y.raw() + r * K;
        const double zmax = *std::max_element(z, z + K);
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) sum += out[k] = std::exp(z[k] - zmax);
        for (std::size_t k = 0; k < K; ++k) out[k] /= sum;
      }
      break;
    }
  }
  return y;
}

Tensor activation_backward(Activation kind, const Tensor& y, const Tensor& g) {
  Tensor dx(y.shape());
  const std::size_t n = y.size();
  switch (kind) {
    case Activation::linear: dx = g; break;
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) dx[i] = y[i] > 0.0 ? g[i] : 0.0;
      break;
    case Activation::elu:
      // y >= 0 exactly on the identity branch; below it dy/dz = exp(z) = y + 1.
      for (std::size_t i = 0; i < n; ++i) dx[i] = g[i] * (y[i] >= 0.0 ? 1.0 : y[i] + 1.0);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) dx[i] = g[i] * y[i] * (1.0 - y[i]);
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) dx[i] = g[i] * (1.0 - y[i] * y[i]);
      break;
    case Activation::softmax: {
      const std::size_t K = y.rank() ? y.shape().back() : 1;
      if (K == 0) break;
      for (std::size_t r = 0; r < n / K; ++r) {
        double dot = 0.0;
        for (std::size_t k = 0; k < K; ++k) dot += g[r * K + k] * y[r * K + k];
        for (std::size_t k = 0; k < K; ++k) dx[r * K + k] = y[r * K + k] * (g[r * K + k] - dot);
      }
      break;
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Dispatch

Tensor layer_forward(const LayerParams& p, const Tensor& x, Mode mode, Rng* rng,
                     LayerCache* cache) {
  (void)output_shape(p, x.shape());
  if (cache) {
    *cache = LayerCache{};
    cache->input_shape = x.shape();
    cache->mode = mode;
    cache->recorded = true;
  }
  switch (p.kind) {
    case LayerKind::conv1d: {
      if (cache) cache->saved = {x};
      return conv_fwd(p, x);
    }
    case LayerKind::batchnorm1d: return batchnorm_fwd(p, x, mode, cache);
    case LayerKind::maxpool1d: return maxpool_fwd(p, x, cache);
    case LayerKind::globalmaxpool: return gmp_fwd(x, cache ? &cache->winners : nullptr);
    case LayerKind::dense: {
      if (cache) cache->saved = {x};
      return dense_fwd(p, x);
    }
    case LayerKind::lstm: return lstm_fwd(p, x, cache);
    case LayerKind::dropout: {
      const double rate = p.hyper.dropout_rate;
      if (mode == Mode::infer || rate == 0.0) {
        if (cache) cache->saved = {Tensor(x.shape(), 1.0)};
        return x;
      }
      if (!rng) throw StateError(p.name + ": train-mode dropout needs a random source");
      Tensor mask(x.shape());
      const double keep = 1.0 / (1.0 - rate);
      for (double& m : mask.data()) m = rng->uniform() >= rate ? keep : 0.0;
      Tensor y(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i];
      if (cache) cache->saved = {std::move(mask)};
      return y;
    }
    case LayerKind::activation: {
      Tensor y = apply_activation(p.hyper.activation, x);
      if (cache) cache->saved = {y};
      return y;
    }
    case LayerKind::flatten: return x.reshaped(output_shape(p, x.shape()));
    case LayerKind::wsense: return detail::wsense_block_forward(p, x, mode, cache);
    case LayerKind::se: return detail::se_block_forward(p, x, mode, cache);
  }
  return x;
}

Tensor layer_backward(const LayerParams& p, const LayerCache& cache, const Tensor& g,
                      std::span<Tensor> grads) {
  if (!cache.recorded) throw StateError(p.name + ": backward called before a recorded forward");
  switch (p.kind) {
    case LayerKind::conv1d: return conv_bwd(p, cache.saved[0], g, grads[0], grads[1]);
    case LayerKind::batchnorm1d: return batchnorm_bwd(p, cache, g, grads[0], grads[1]);
    case LayerKind::maxpool1d:
    case LayerKind::globalmaxpool: return route_to_winners(cache.input_shape, cache.winners, g);
    case LayerKind::dense: return dense_bwd(p, cache.saved[0], g, grads);
    case LayerKind::lstm: return lstm_bwd(p, cache, g, grads);
    case LayerKind::dropout: {
      const Tensor& mask = cache.saved[0];
      Tensor dx(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * mask[i];
      return dx;
    }
    case LayerKind::activation: return activation_backward(p.hyper.activation, cache.saved[0], g);
    case LayerKind::flatten: return g.reshaped(cache.input_shape);
    case LayerKind::wsense: return detail::wsense_block_backward(p, cache, g, grads);
    case LayerKind::se: return detail::se_block_backward(p, cache, g, grads);
  }
  return g;
}

void apply_moving_stats(LayerParams& p, const LayerCache& cache) {
  if (p.kind == LayerKind::batchnorm1d && cache.mode == Mode::train && cache.saved.size() == 4) {
    const double m = p.hyper.momentum;
    Tensor& mm = p.weight("moving_mean");
    Tensor& mv = p.weight("moving_var");
    for (std::size_t c = 0; c < mm.size(); ++c) {
      mm[c] = m * mm[c] + (1.0 - m) * cache.saved[2][c];
      mv[c] = m * mv[c] + (1.0 - m) * cache.saved[3][c];
    }
  }
  for (std::size_t i = 0; i < p.blocks.size() && i < cache.blocks.size(); ++i) {
    apply_moving_stats(p.blocks[i], cache.blocks[i]);
  }
}

// ---------------------------------------------------------------------------
// Single-layer conveniences

namespace {

Tensor as_batch(const Tensor& x, std::size_t rank) {
  if (x.rank() == rank - 1) {
    Shape s = x.shape();
    s.insert(s.begin(), 1);
    return x.reshaped(std::move(s));
  }
  return x;
}

Tensor drop_batch(Tensor y, bool was_single) {
  if (!was_single) return y;
  Shape s(y.shape().begin() + 1, y.shape().end());
  return std::move(y).reshaped(std::move(s));
}

}  // namespace

Tensor conv1d_forward(const Tensor& x, const LayerParams& p) {
  return drop_batch(layer_forward(p, as_batch(x, 3), Mode::infer), x.rank() == 2);
}

Tensor batchnorm1d_forward(const Tensor& x, LayerParams& p, Mode mode) {
  LayerCache cache;
  Tensor y = layer_forward(p, x, mode, nullptr, &cache);
  apply_moving_stats(p, cache);
  return y;
}

Tensor maxpool1d_forward(const Tensor& x, const LayerParams& p) {
  return drop_batch(layer_forward(p, as_batch(x, 3), Mode::infer), x.rank() == 2);
}

Tensor global_maxpool_forward(const Tensor& x) {
  static const LayerParams gmp = make_globalmaxpool();
  const bool single = x.rank() == 2;
  Tensor y = layer_forward(gmp, as_batch(x, 3), Mode::infer);
  // A single sample keeps a length-1 time axis: (1, C).
  return single ? std::move(y).reshaped(Shape{1, x.extent(1)}) : y;
}

Tensor dense_forward(const Tensor& x, const LayerParams& p) {
  return drop_batch(layer_forward(p, as_batch(x, 2), Mode::infer), x.rank() == 1);
}

Tensor lstm_forward(const Tensor& x, const LayerParams& p) {
  return drop_batch(layer_forward(p, as_batch(x, 3), Mode::infer), x.rank() == 2);
}

}  // namespace wsense
