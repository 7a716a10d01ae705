#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "pocusiq/neural/network.hpp"

namespace pocusiq::nn {

struct AdamConfig {
  double lr = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig cfg;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  AdamState() = default;
  AdamState(const ParameterSet<T>& params, AdamConfig c) : cfg(c) { reset(params); }

  void reset(const ParameterSet<T>& params) {
    step = 0;
    m.clear();
    v.clear();
    for (const auto& e : params.entries()) {
      m.emplace_back(e.tensor.numel(), T(0));
      v.emplace_back(e.tensor.numel(), T(0));
    }
  }
};

/// One bias-corrected Adam update from the gradients stored in `params`.
template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw UsageError("adam: state has " + std::to_string(state.m.size()) + " buffers for " +
                     std::to_string(params.size()) + " parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(state.cfg.beta1), b2 = static_cast<T>(state.cfg.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(state.cfg.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(state.cfg.beta2, t));
  const T lr = static_cast<T>(state.cfg.lr), eps = static_cast<T>(state.cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.numel() || v.size() != p.numel() || p.grad().size() != p.numel()) {
      throw UsageError("adam: buffer size mismatch for '" + params.entries()[i].name + "'");
    }
    auto g = p.grad();
    for (std::size_t k = 0; k < p.numel(); ++k) {
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      const T mh = m[k] / c1;
      const T vh = v[k] / c2;
      p[k] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
}

}  // namespace pocusiq::nn
