#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the backward passes under test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "wsense/layers.hpp"
#include "wsense/rng.hpp"
#include "wsense/tensor.hpp"

namespace oracle {

using wsense::Rng;
using wsense::Shape;
using wsense::Tensor;

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// |a - n| / max(|a| + |n|, floor). The floor keeps entries that are zero in
// both from dividing by zero; it is far below any gradient the checks see.
inline double rel_error(double analytic, double numeric, double floor = 1e-10) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
}

// Central difference of a scalar function with respect to one entry of `x`.
inline double central_difference(Tensor& x, std::size_t i, const std::function<double()>& f,
                                 double h = 1e-5) {
  const double saved = x[i];
  x[i] = saved + h;
  const double up = f();
  x[i] = saved - h;
  const double down = f();
  x[i] = saved;
  return (up - down) / (2.0 * h);
}

inline double weighted_sum(const Tensor& y, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

// Compares layer_backward against central differences of
// L = sum(layer_forward(p, x) * R) for random R, over every input entry and
// every trainable parameter entry (at most `cap` sampled entries per tensor).
inline GradCheck check_layer(wsense::LayerParams& p, Tensor x, wsense::Mode mode, Rng& rng,
                             std::size_t cap = 400, std::uint64_t dropout_seed = 7) {
  using namespace wsense;
  auto run = [&](LayerCache* cache) {
    Rng drop(dropout_seed);
    return layer_forward(p, x, mode, &drop, cache);
  };
  const Tensor y0 = run(nullptr);
  const Tensor R = random_tensor(y0.shape(), rng);

  LayerCache cache;
  run(&cache);
  auto params = flatten_params(p);
  std::vector<Tensor> grads;
  for (auto* t : params) grads.emplace_back(t->value.shape());
  const Tensor dx = layer_backward(p, cache, R, grads);

  GradCheck out;
  auto loss = [&] { return weighted_sum(run(nullptr), R); };
  auto check_tensor = [&](Tensor& target, const Tensor& analytic, const std::string& name) {
    std::vector<std::size_t> idx(target.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > cap) {
      rng.shuffle(std::span<std::size_t>(idx));
      idx.resize(cap);
    }
    for (auto i : idx) {
      const double num = central_difference(target, i, loss);
      const double e = rel_error(analytic[i], num);
      ++out.checked;
      if (e > out.max_rel_error) {
        out.max_rel_error = e;
        out.worst = name + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic[i]) +
                    " numeric " + std::to_string(num);
      }
    }
  };
  check_tensor(x, dx, "input");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->trainable) check_tensor(params[k]->value, grads[k], params[k]->name);
  }
  return out;
}

// Brute-force window starts: every s with s = k * (n - p) and s + n <= L.
inline std::vector<std::size_t> brute_starts(std::size_t L, std::size_t n, std::size_t p) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0;; ++k) {
    const std::size_t s = k * (n - p);
    bool fits = true;
    for (std::size_t j = 0; j < n; ++j) {
      if (s + j >= L) fits = false;
    }
    if (!fits) break;
    out.push_back(s);
  }
  return out;
}

}  // namespace oracle
