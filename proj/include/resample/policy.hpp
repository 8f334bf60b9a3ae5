#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "resample/adam.hpp"
#include "resample/checkpoint.hpp"
#include "resample/dataset.hpp"
#include "resample/errors.hpp"
#include "resample/mlp.hpp"
#include "resample/rng.hpp"

namespace resample {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kActionClip = 1.0 - 1e-6;
inline constexpr double kLogTwoPi = 1.8378770664093454836;

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

/// -log(1 - tanh(z)^2), evaluated from z without cancellation.
inline double tanh_squash_correction(double z) {
  return 2.0 * (z + softplus(-2.0 * z) - 0.6931471805599453);
}

enum class PolicyRole { Deployed, Proxy };

inline std::string to_string(PolicyRole r) {
  return r == PolicyRole::Deployed ? "deployed" : "proxy";
}

/// Diagonal-Gaussian policy with a tanh squash onto the [-1,1] action box.
/// One MLP trunk maps the state to concatenated (mean, log_std) heads;
/// log_std is clamped to [-5, 2]. The same type serves the deployed policy
/// and the lightweight proxy actor.
class GaussianPolicy {
public:
  GaussianPolicy() = default;

  GaussianPolicy(Mlp trunk, int action_dim, PolicyRole role = PolicyRole::Deployed)
      : trunk_(std::move(trunk)), action_dim_(action_dim), role_(role) {
    if (trunk_.output_dim() != 2 * action_dim)
      throw InvalidArgumentError("policy trunk must emit mean and log_std per action dim");
  }

  static GaussianPolicy random(int state_dim, int action_dim, const std::vector<int>& hidden,
                               Rng& rng, PolicyRole role = PolicyRole::Deployed) {
    std::vector<int> sizes{state_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(2 * action_dim);
    return GaussianPolicy(Mlp::random(std::move(sizes), rng), action_dim, role);
  }

  int state_dim() const { return trunk_.input_dim(); }
  int action_dim() const { return action_dim_; }
  PolicyRole role() const { return role_; }
  void set_role(PolicyRole r) { role_ = r; }
  Mlp& trunk() { return trunk_; }
  const Mlp& trunk() const { return trunk_; }

  struct Heads {
    std::vector<double> mean;
    std::vector<double> log_std;
    std::vector<bool> in_clamp_range;  // false where the clamp is active
  };

  Heads heads_from_output(const std::vector<double>& out) const {
    Heads h;
    const auto d = static_cast<std::size_t>(action_dim_);
    h.mean.assign(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(d));
    h.log_std.resize(d);
    h.in_clamp_range.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
      const double raw = out[d + i];
      h.log_std[i] = clamp(raw, kLogStdMin, kLogStdMax);
      h.in_clamp_range[i] = raw > kLogStdMin && raw < kLogStdMax;
    }
    return h;
  }

  Heads heads(std::span<const double> state) const {
    return heads_from_output(trunk_.eval(state));
  }

  /// Mode of the squashed distribution (by convention, tanh of the mean).
  std::vector<double> mean_action(std::span<const double> state) const {
    Heads h = heads(state);
    std::vector<double> a(h.mean.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::tanh(h.mean[i]);
    return a;
  }

  struct ActionSample {
    std::vector<double> action;
    double log_prob = 0.0;
    std::vector<double> noise;  // the standard-normal draws, kept for reparameterized updates
  };

  ActionSample sample(std::span<const double> state, Rng& rng) const {
    Heads h = heads(state);
    ActionSample s;
    const std::size_t d = h.mean.size();
    s.action.resize(d);
    s.noise.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = rng.normal();
      const double sigma = std::exp(h.log_std[i]);
      const double z = h.mean[i] + sigma * xi;
      s.noise[i] = xi;
      s.action[i] = std::tanh(z);
      s.log_prob += -0.5 * xi * xi - h.log_std[i] - 0.5 * kLogTwoPi + tanh_squash_correction(z);
    }
    return s;
  }

  /// Log density of an action strictly inside the box. Actions on or
  /// outside the squash boundary are rejected; callers clip inward by 1e-6.
  double log_prob(std::span<const double> state, std::span<const double> action) const {
    if (action.size() != static_cast<std::size_t>(action_dim_))
      throw InvalidArgumentError("action dimensionality mismatch");
    for (double a : action)
      if (std::fabs(a) >= 1.0)
        throw BoundaryError("action on or outside the squash boundary");
    Heads h = heads(state);
    double lp = 0.0;
    for (std::size_t i = 0; i < h.mean.size(); ++i) {
      const double a = action[i];
      const double z = std::atanh(a);
      const double sigma = std::exp(h.log_std[i]);
      const double u = (z - h.mean[i]) / sigma;
      lp += -0.5 * u * u - h.log_std[i] - 0.5 * kLogTwoPi - std::log1p(-a * a);
    }
    return lp;
  }

private:
  Mlp trunk_;
  int action_dim_ = 0;
  PolicyRole role_ = PolicyRole::Deployed;
};

inline std::vector<double> clip_action_inward(std::span<const double> action) {
  std::vector<double> a(action.begin(), action.end());
  for (auto& v : a) v = clamp(v, -kActionClip, kActionClip);
  return a;
}

struct BcConfig {
  int epochs = 200;
  int batch = 64;  // 0 means full batch in data order
  double lr = 1e-3;
  double weight_decay = 0.0;
};

struct BcResult {
  std::vector<double> loss_curve;  // mean NLL per epoch
  double final_loss = 0.0;
};

namespace detail {

/// Mean NLL gradient of a (state, action) batch, accumulated into grad.
/// Returns the batch mean NLL. Actions must already be clipped inward.
inline double bc_batch_grad(GaussianPolicy& p, const std::vector<const Step*>& batch,
                            std::span<double> grad) {
  const double w = 1.0 / static_cast<double>(batch.size());
  const auto d = static_cast<std::size_t>(p.action_dim());
  double loss = 0.0;
  std::vector<double> upstream(2 * d);
  for (const Step* s : batch) {
    const std::vector<double> out = p.trunk().forward(s->state);
    const GaussianPolicy::Heads h = p.heads_from_output(out);
    for (std::size_t i = 0; i < d; ++i) {
      const double a = clamp(s->action[i], -kActionClip, kActionClip);
      const double z = std::atanh(a);
      const double sigma = std::exp(h.log_std[i]);
      const double u = (z - h.mean[i]) / sigma;
      loss += w * (0.5 * u * u + h.log_std[i] + 0.5 * kLogTwoPi + std::log1p(-a * a));
      upstream[i] = -u / sigma;
      upstream[d + i] = h.in_clamp_range[i] ? (1.0 - u * u) : 0.0;
    }
    p.trunk().backward_into(s->state, upstream, grad, nullptr, w);
  }
  return loss;
}

}  // namespace detail

/// Behavioral cloning: minimize the negative log-likelihood of dataset
/// actions. For a fixed log_std this gradient is the L2 regression
/// gradient scaled by 1/sigma^2, so it reduces to the plain supervised
/// loss while keeping likelihoods calibrated for the intervention rule.
inline BcResult bc_train(GaussianPolicy& p, const Dataset& ds, const BcConfig& cfg, Rng& rng) {
  if (!ds.sealed()) throw PreconditionError("bc_train requires a sealed dataset");
  if (ds.empty()) throw PreconditionError("bc_train on an empty dataset");
  std::vector<const Step*> all;
  for (const auto& t : ds.trajectories())
    for (const auto& s : t.steps) all.push_back(&s);

  AdamConfig ac;
  ac.lr = cfg.lr;
  ac.weight_decay = cfg.weight_decay;
  AdamState adam(p.trunk().param_count(), ac);
  std::vector<double> grad(p.trunk().param_count());
  std::vector<std::size_t> order(all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  BcResult res;
  const std::size_t effective_batch =
      cfg.batch <= 0 ? all.size() : std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), all.size());
  std::vector<const Step*> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (effective_batch < all.size()) {
      for (std::size_t i = 0; i + 1 < order.size(); ++i)
        std::swap(order[i], order[i + rng.index(order.size() - i)]);
    }
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < all.size(); start += effective_batch) {
      const std::size_t end = std::min(start + effective_batch, all.size());
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(all[order[i]]);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double loss = detail::bc_batch_grad(p, batch, grad);
      if (!std::isfinite(loss))
        throw DivergenceError("behavioral cloning diverged at epoch " + std::to_string(epoch),
                              epoch);
      adam_step(adam, p.trunk(), grad);
      epoch_loss += loss * static_cast<double>(batch.size());
      seen += batch.size();
    }
    res.loss_curve.push_back(epoch_loss / static_cast<double>(seen));
  }
  res.final_loss = res.loss_curve.empty() ? 0.0 : res.loss_curve.back();
  return res;
}

// ---- checkpointing ----

struct PolicyCheckpoint {
  GaussianPolicy policy;
  AdamState adam;
  Rng rng;
};

inline void save_policy(const GaussianPolicy& p, const std::string& path,
                        const AdamState& adam = {}, const Rng& rng = Rng(0)) {
  auto f = open_for_write(path);
  BinWriter w(f);
  write_magic(w, "RSPC");
  w.u8(p.role() == PolicyRole::Deployed ? 0 : 1);
  w.i32(p.action_dim());
  write_mlp(w, p.trunk());
  write_adam(w, adam.size() == 0 ? AdamState(p.trunk().param_count()) : adam);
  write_rng(w, rng);
}

inline PolicyCheckpoint load_policy(const std::string& path) {
  auto f = open_for_read(path);
  BinReader r(f);
  expect_magic(r, "RSPC", "policy checkpoint");
  const PolicyRole role = r.u8() == 0 ? PolicyRole::Deployed : PolicyRole::Proxy;
  const int action_dim = r.i32();
  Mlp trunk = read_mlp(r);
  PolicyCheckpoint ck{GaussianPolicy(std::move(trunk), action_dim, role), read_adam(r),
                      read_rng(r)};
  return ck;
}

}  // namespace resample
