#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "resample/errors.hpp"
#include "resample/rng.hpp"

namespace resample {

/// Dense multilayer perceptron: tanh on hidden layers, identity on the
/// output. Parameters live in one flat vector (per layer: weights in
/// row-major [out x in] order, then biases), which keeps the optimizer,
/// checkpointing and finite-difference checks trivial.
///
/// forward() caches activations for a subsequent backward() on the same
/// input. One instance is single-threaded; distinct instances are
/// independent.
class Mlp {
public:
  Mlp() = default;

  explicit Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw InvalidArgumentError("Mlp needs at least input and output sizes");
    std::size_t count = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] <= 0 || sizes_[l + 1] <= 0)
        throw InvalidArgumentError("Mlp layer sizes must be positive");
      layer_offsets_.push_back(count);
      count += static_cast<std::size_t>(sizes_[l]) * static_cast<std::size_t>(sizes_[l + 1]) +
               static_cast<std::size_t>(sizes_[l + 1]);
    }
    params_.assign(count, 0.0);
  }

  /// Seeded init: weights and biases uniform in +-1/sqrt(fan_in).
  static Mlp random(std::vector<int> layer_sizes, Rng& rng) {
    Mlp net(std::move(layer_sizes));
    for (std::size_t l = 0; l + 1 < net.sizes_.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(net.sizes_[l]));
      const std::size_t base = net.layer_offsets_[l];
      const std::size_t n = net.layer_param_count(l);
      for (std::size_t i = 0; i < n; ++i) net.params_[base + i] = rng.uniform(-bound, bound);
    }
    return net;
  }

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  const std::vector<int>& layer_sizes() const { return sizes_; }
  std::size_t num_layers() const { return sizes_.size() - 1; }

  std::size_t param_count() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  /// Layer owning the flat parameter index (for divergence reports).
  int layer_of_param(std::size_t idx) const {
    for (std::size_t l = layer_offsets_.size(); l-- > 0;)
      if (idx >= layer_offsets_[l]) return static_cast<int>(l);
    return 0;
  }

  /// Weight at (layer, out_unit, in_unit); biases via bias_at.
  double& weight_at(std::size_t layer, int out_unit, int in_unit) {
    const std::size_t in = static_cast<std::size_t>(sizes_[layer]);
    return params_[layer_offsets_[layer] + static_cast<std::size_t>(out_unit) * in +
                   static_cast<std::size_t>(in_unit)];
  }
  double& bias_at(std::size_t layer, int out_unit) {
    const std::size_t in = static_cast<std::size_t>(sizes_[layer]);
    const std::size_t out = static_cast<std::size_t>(sizes_[layer + 1]);
    return params_[layer_offsets_[layer] + out * in + static_cast<std::size_t>(out_unit)];
  }

  /// Forward pass; caches layer activations for backward().
  std::vector<double> forward(std::span<const double> input) {
    check_input(input);
    acts_.resize(sizes_.size());
    acts_[0].assign(input.begin(), input.end());
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l)
      layer_forward(l, acts_[l], acts_[l + 1], l + 2 < sizes_.size());
    cached_ = true;
    return acts_.back();
  }

  /// Pure forward without touching the cache (usable on const instances).
  std::vector<double> eval(std::span<const double> input) const {
    check_input(input);
    std::vector<double> cur(input.begin(), input.end()), next;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      layer_forward(l, cur, next, l + 2 < sizes_.size());
      cur.swap(next);
    }
    return cur;
  }

  struct Backprop {
    std::vector<double> param_grad;
    std::vector<double> input_grad;
  };

  /// Backpropagate an upstream gradient through the cached forward pass.
  /// Requires forward() to have been called on the same input.
  Backprop backward(std::span<const double> input, std::span<const double> upstream) const {
    Backprop out;
    out.param_grad.assign(params_.size(), 0.0);
    out.input_grad.assign(static_cast<std::size_t>(sizes_.front()), 0.0);
    backward_into(input, upstream, out.param_grad, &out.input_grad);
    return out;
  }

  /// Accumulating variant used by the trainers: adds this sample's
  /// parameter gradient into param_grad_acc (scaled by weight) and, when
  /// input_grad is non-null, overwrites it with the input gradient.
  void backward_into(std::span<const double> input, std::span<const double> upstream,
                     std::span<double> param_grad_acc, std::vector<double>* input_grad = nullptr,
                     double weight = 1.0) const {
    if (!cached_ || acts_.empty() || acts_[0].size() != input.size() ||
        !std::equal(input.begin(), input.end(), acts_[0].begin()))
      throw UsageError("backward without a cached forward pass for this input");
    if (upstream.size() != static_cast<std::size_t>(sizes_.back()))
      throw InvalidArgumentError("upstream gradient length mismatch");
    if (param_grad_acc.size() != params_.size())
      throw InvalidArgumentError("parameter gradient buffer mismatch");

    std::vector<double> delta(upstream.begin(), upstream.end());
    if (weight != 1.0)
      for (auto& d : delta) d *= weight;

    std::vector<double> prev_delta;
    for (std::size_t l = sizes_.size() - 1; l-- > 0;) {
      const std::size_t in = static_cast<std::size_t>(sizes_[l]);
      const std::size_t out = static_cast<std::size_t>(sizes_[l + 1]);
      const double* w = params_.data() + layer_offsets_[l];
      double* gw = param_grad_acc.data() + layer_offsets_[l];
      double* gb = gw + out * in;
      const std::vector<double>& below = acts_[l];

      // delta currently holds dL/d(post-activation of layer l+1); fold in
      // the tanh derivative on hidden layers (output layer is linear).
      if (l + 2 < sizes_.size()) {
        const std::vector<double>& post = acts_[l + 1];
        for (std::size_t o = 0; o < out; ++o) delta[o] *= 1.0 - post[o] * post[o];
      }
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[o];
        gb[o] += d;
        double* gr = gw + o * in;
        const double* br = below.data();
        for (std::size_t i = 0; i < in; ++i) gr[i] += d * br[i];
      }
      const bool need_below = l > 0 || input_grad != nullptr;
      if (need_below) {
        prev_delta.assign(in, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
          const double d = delta[o];
          const double* wr = w + o * in;
          for (std::size_t i = 0; i < in; ++i) prev_delta[i] += d * wr[i];
        }
        delta.swap(prev_delta);
      }
    }
    if (input_grad != nullptr) *input_grad = std::move(delta);
  }

  bool operator==(const Mlp& other) const {
    return sizes_ == other.sizes_ && params_ == other.params_;
  }

private:
  void check_input(std::span<const double> input) const {
    if (sizes_.empty()) throw UsageError("forward on a default-constructed Mlp");
    if (input.size() != static_cast<std::size_t>(sizes_.front()))
      throw InvalidArgumentError("input length " + std::to_string(input.size()) +
                                 " does not match first layer size " +
                                 std::to_string(sizes_.front()));
  }

  std::size_t layer_param_count(std::size_t l) const {
    return static_cast<std::size_t>(sizes_[l]) * static_cast<std::size_t>(sizes_[l + 1]) +
           static_cast<std::size_t>(sizes_[l + 1]);
  }

  void layer_forward(std::size_t l, const std::vector<double>& in_v, std::vector<double>& out_v,
                     bool hidden) const {
    const std::size_t in = static_cast<std::size_t>(sizes_[l]);
    const std::size_t out = static_cast<std::size_t>(sizes_[l + 1]);
    const double* w = params_.data() + layer_offsets_[l];
    const double* b = w + out * in;
    out_v.assign(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      const double* wr = w + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += wr[i] * in_v[i];
      out_v[o] = hidden ? std::tanh(acc) : acc;
    }
  }

  std::vector<int> sizes_;
  std::vector<std::size_t> layer_offsets_;
  std::vector<double> params_;
  std::vector<std::vector<double>> acts_;
  bool cached_ = false;
};

}  // namespace resample
