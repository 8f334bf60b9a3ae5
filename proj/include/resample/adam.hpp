#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "resample/errors.hpp"
#include "resample/mlp.hpp"

namespace resample {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW); 0 disables it
};

/// Bias-corrected adaptive moment estimation with optional decoupled
/// weight decay. Moment buffers mirror the flat parameter layout.
class AdamState {
public:
  AdamState() = default;
  explicit AdamState(std::size_t n, AdamConfig cfg = {})
      : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  const AdamConfig& config() const { return cfg_; }
  AdamConfig& config() { return cfg_; }
  std::uint64_t step_count() const { return step_; }
  std::size_t size() const { return m_.size(); }
  const std::vector<double>& m() const { return m_; }
  const std::vector<double>& v() const { return v_; }

  /// One update. Returns the flat index of the first non-finite gradient,
  /// or -1 if the step was applied.
  std::int64_t apply(std::span<double> params, std::span<const double> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
      throw InvalidArgumentError("adam: parameter/gradient shape mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i)
      if (!std::isfinite(grads[i])) return static_cast<std::int64_t>(i);
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i] * grads[i];
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      params[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      if (cfg_.weight_decay != 0.0) params[i] -= cfg_.lr * cfg_.weight_decay * params[i];
    }
    return -1;
  }

  void restore(std::vector<double> m, std::vector<double> v, std::uint64_t step) {
    m_ = std::move(m);
    v_ = std::move(v);
    step_ = step;
  }

  bool operator==(const AdamState& o) const {
    return step_ == o.step_ && m_ == o.m_ && v_ == o.v_ && cfg_.lr == o.cfg_.lr &&
           cfg_.beta1 == o.cfg_.beta1 && cfg_.beta2 == o.cfg_.beta2 && cfg_.eps == o.cfg_.eps &&
           cfg_.weight_decay == o.cfg_.weight_decay;
  }

private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  std::uint64_t step_ = 0;
};

/// Update a network in place. A non-finite gradient raises a divergence
/// error naming the offending layer.
inline void adam_step(AdamState& state, Mlp& net, std::span<const double> grads) {
  const std::int64_t bad = state.apply(net.params(), grads);
  if (bad >= 0) {
    const int layer = net.layer_of_param(static_cast<std::size_t>(bad));
    throw DivergenceError("non-finite gradient in layer " + std::to_string(layer), layer);
  }
}

}  // namespace resample
