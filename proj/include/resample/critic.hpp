#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "resample/adam.hpp"
#include "resample/checkpoint.hpp"
#include "resample/dataset.hpp"
#include "resample/errors.hpp"
#include "resample/mlp.hpp"
#include "resample/policy.hpp"
#include "resample/rng.hpp"

namespace resample {

/// Twin action-value networks with slowly tracking target copies.
struct CriticEnsemble {
  Mlp q1, q2, q1_target, q2_target;
  double tau_soft = 0.005;

  CriticEnsemble() = default;

  static CriticEnsemble random(int state_dim, int action_dim, const std::vector<int>& hidden,
                               Rng& rng) {
    std::vector<int> sizes{state_dim + action_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    CriticEnsemble c;
    c.q1 = Mlp::random(sizes, rng);
    c.q2 = Mlp::random(sizes, rng);
    c.q1_target = c.q1;
    c.q2_target = c.q2;
    return c;
  }

  int input_dim() const { return q1.input_dim(); }

  static std::vector<double> concat(std::span<const double> state,
                                    std::span<const double> action) {
    std::vector<double> sa;
    sa.reserve(state.size() + action.size());
    sa.insert(sa.end(), state.begin(), state.end());
    sa.insert(sa.end(), action.begin(), action.end());
    return sa;
  }

  double q_min(std::span<const double> state, std::span<const double> action) const {
    const std::vector<double> sa = concat(state, action);
    return std::min(q1.eval(sa)[0], q2.eval(sa)[0]);
  }

  double q_min_target(const std::vector<double>& sa) const {
    return std::min(q1_target.eval(sa)[0], q2_target.eval(sa)[0]);
  }
};

/// Exponential moving average of online parameters into the targets:
/// theta_bar <- (1 - tau) * theta_bar + tau * theta.
inline void soft_update(CriticEnsemble& c, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw InvalidArgumentError("soft update rate must be in (0,1]");
  auto ema = [tau](Mlp& target, const Mlp& online) {
    auto& tp = target.params();
    const auto& op = online.params();
    for (std::size_t i = 0; i < tp.size(); ++i) tp[i] = (1.0 - tau) * tp[i] + tau * op[i];
  };
  ema(c.q1_target, c.q1);
  ema(c.q2_target, c.q2);
}

struct CriticConfig {
  double gamma = 0.99;
  double lambda_cons = 5.0;   // weight of the conservative regularizer
  double alpha_mix = 0.5;     // uniform-vs-actor mixing inside the regularizer
  int n_uniform = 10;
  int n_actor = 10;
  double target_entropy = 0.0;  // 0 means "use -(action dim)"
  bool temp_auto = true;
  double temp_init = 0.1;
  int steps = 50000;
  int batch = 256;
  double lr = 1e-4;
  bool calibrate = true;     // apply the max(Q, V_MC) anchor inside R_act
  bool target_clip = true;   // clip TD targets into the sparse-reward value range [0,1]

  double resolved_target_entropy(int action_dim) const {
    return target_entropy != 0.0 ? target_entropy : -static_cast<double>(action_dim);
  }

  void validate() const {
    if (gamma <= 0.0 || gamma >= 1.0) throw InvalidArgumentError("gamma must lie in (0,1)");
    if (alpha_mix < 0.0 || alpha_mix > 1.0)
      throw InvalidArgumentError("alpha_mix must lie in [0,1]");
    if (n_uniform < 1 || n_actor < 1)
      throw InvalidArgumentError("regularizer sample counts must be >= 1");
    if (steps < 0 || batch < 1) throw InvalidArgumentError("bad step/batch budget");
    if (temp_auto && temp_init <= 0.0)
      throw InvalidArgumentError("temperature auto-tuning needs a positive initial value");
  }
};

/// Flat view of a sealed dataset as (s, a, r, done, s', v_mc) transitions.
/// The terminal transition's next-state pointer aliases its own state and
/// is masked out of the bootstrap by the done flag.
struct TransitionTable {
  struct Item {
    const Step* step;
    const Step* next;
  };
  std::vector<Item> items;
  int state_dim = 0;
  int action_dim = 0;
  bool annotated = false;

  static TransitionTable from(const Dataset& ds) {
    if (!ds.sealed()) throw PreconditionError("transition table requires a sealed dataset");
    TransitionTable t;
    t.state_dim = ds.state_dim();
    t.action_dim = ds.action_dim();
    t.annotated = ds.gamma().has_value();
    for (const auto& traj : ds.trajectories())
      for (std::size_t i = 0; i < traj.steps.size(); ++i)
        t.items.push_back({&traj.steps[i],
                           i + 1 < traj.steps.size() ? &traj.steps[i + 1] : &traj.steps[i]});
    return t;
  }
};

/// One scalar-parameter Adam stream, used for the entropy temperature.
class ScalarAdam {
public:
  explicit ScalarAdam(double lr) { cfg_.lr = lr; }
  void step(double& x, double g) {
    double arr[1] = {x};
    AdamState* st = &state_;
    if (st->size() == 0) *st = AdamState(1, cfg_);
    st->apply(std::span<double>(arr, 1), std::span<const double>(&g, 1));
    x = arr[0];
  }
  AdamState& state() { return state_; }

private:
  AdamConfig cfg_;
  AdamState state_;
};

namespace detail {

inline GaussianPolicy::ActionSample sample_from_heads(const GaussianPolicy::Heads& h, Rng& rng) {
  GaussianPolicy::ActionSample s;
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

}  // namespace detail

/// TD loss over a batch: y = r + gamma * (1-done) * [min target Q(s',a') -
/// temp * log pi_proxy(a'|s')] with a' drawn from the proxy actor. Returns
/// the mean squared Bellman error of both critics and accumulates their
/// parameter gradients. Targets are excluded from the gradient.
inline double td_loss(CriticEnsemble& c, const GaussianPolicy& proxy,
                      const TransitionTable& table, std::span<const std::size_t> batch,
                      const CriticConfig& cfg, double temp, Rng& rng,
                      std::span<double> grad_q1, std::span<double> grad_q2) {
  const double w = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  const double upstream1[1] = {1.0};
  for (const std::size_t idx : batch) {
    const Step& s = *table.items[idx].step;
    const Step& nx = *table.items[idx].next;
    // Sample unconditionally so the stream layout does not depend on done.
    const GaussianPolicy::ActionSample ap = proxy.sample(nx.state, rng);
    double y = s.reward;
    if (!s.done) {
      const std::vector<double> sa_next = CriticEnsemble::concat(nx.state, ap.action);
      y += cfg.gamma * (c.q_min_target(sa_next) - temp * ap.log_prob);
    }
    if (!std::isfinite(y))
      throw DivergenceError("non-finite TD target", static_cast<int>(idx));
    const std::vector<double> sa = CriticEnsemble::concat(s.state, s.action);
    const double v1 = c.q1.forward(sa)[0];
    c.q1.backward_into(sa, upstream1, grad_q1, nullptr, 2.0 * (v1 - y) * w);
    const double v2 = c.q2.forward(sa)[0];
    c.q2.backward_into(sa, upstream1, grad_q2, nullptr, 2.0 * (v2 - y) * w);
    loss += w * ((v1 - y) * (v1 - y) + (v2 - y) * (v2 - y));
  }
  return loss;
}

/// Sampled actions recorded by the regularizer for oracle re-summation.
struct RegularizerSamples {
  std::vector<std::vector<double>> uniform_actions;  // per batch item, flattened draws
  std::vector<std::vector<double>> proxy_actions;
};

/// Conservative regularizer, applied to each critic and summed:
///   R = mean_s [ alpha * R_uni(s) + (1-alpha) * R_act(s) - R_data(s) ]
/// R_uni averages Q over uniform actions on the squashed action box;
/// R_act averages max(Q, V_MC(s)) over proxy-actor samples (the anchor
/// keeps near-policy actions from collapsing below observed returns);
/// R_data is Q at the dataset action. The max passes gradient to Q on the
/// active branch, with ties resolved toward Q.
inline double regularizer(CriticEnsemble& c, const GaussianPolicy& proxy,
                          const TransitionTable& table, std::span<const std::size_t> batch,
                          const CriticConfig& cfg, Rng& rng, std::span<double> grad_q1,
                          std::span<double> grad_q2, RegularizerSamples* capture = nullptr) {
  if (!table.annotated)
    throw PreconditionError("regularizer requires Monte-Carlo return annotations");
  const double wb = 1.0 / static_cast<double>(batch.size());
  const double upstream1[1] = {1.0};
  const auto dim = static_cast<std::size_t>(table.action_dim);
  double value = 0.0;

  std::vector<double> action(dim);
  for (const std::size_t idx : batch) {
    const Step& s = *table.items[idx].step;
    std::vector<double>* cap_u = nullptr;
    std::vector<double>* cap_p = nullptr;
    if (capture) {
      capture->uniform_actions.emplace_back();
      capture->proxy_actions.emplace_back();
      cap_u = &capture->uniform_actions.back();
      cap_p = &capture->proxy_actions.back();
    }

    const double w_uni = wb * cfg.alpha_mix / cfg.n_uniform;
    for (int k = 0; k < cfg.n_uniform; ++k) {
      for (auto& a : action) a = rng.uniform(-1.0, 1.0);
      if (cap_u) cap_u->insert(cap_u->end(), action.begin(), action.end());
      const std::vector<double> sa = CriticEnsemble::concat(s.state, action);
      const double v1 = c.q1.forward(sa)[0];
      c.q1.backward_into(sa, upstream1, grad_q1, nullptr, w_uni);
      const double v2 = c.q2.forward(sa)[0];
      c.q2.backward_into(sa, upstream1, grad_q2, nullptr, w_uni);
      value += w_uni * (v1 + v2);
    }

    const GaussianPolicy::Heads heads = proxy.heads(s.state);
    const double w_act = wb * (1.0 - cfg.alpha_mix) / cfg.n_actor;
    for (int k = 0; k < cfg.n_actor; ++k) {
      const GaussianPolicy::ActionSample ps = detail::sample_from_heads(heads, rng);
      if (cap_p) cap_p->insert(cap_p->end(), ps.action.begin(), ps.action.end());
      const std::vector<double> sa = CriticEnsemble::concat(s.state, ps.action);
      const double v1 = c.q1.forward(sa)[0];
      if (!cfg.calibrate || v1 >= s.v_mc) {
        c.q1.backward_into(sa, upstream1, grad_q1, nullptr, w_act);
        value += w_act * v1;
      } else {
        value += w_act * s.v_mc;
      }
      const double v2 = c.q2.forward(sa)[0];
      if (!cfg.calibrate || v2 >= s.v_mc) {
        c.q2.backward_into(sa, upstream1, grad_q2, nullptr, w_act);
        value += w_act * v2;
      } else {
        value += w_act * s.v_mc;
      }
    }

    const std::vector<double> sa_data = CriticEnsemble::concat(s.state, s.action);
    const double d1 = c.q1.forward(sa_data)[0];
    c.q1.backward_into(sa_data, upstream1, grad_q1, nullptr, -wb);
    const double d2 = c.q2.forward(sa_data)[0];
    c.q2.backward_into(sa_data, upstream1, grad_q2, nullptr, -wb);
    value -= wb * (d1 + d2);
  }
  return value;
}

struct CriticDiag {
  int step = 0;
  double mean_q_data = 0.0;
  double mean_q_uniform = 0.0;
  double mean_q_proxy = 0.0;
  double td = 0.0;
  double reg = 0.0;
  double temp = 0.0;
};

struct CriticTrainResult {
  std::vector<CriticDiag> diagnostics;
  double final_td = 0.0;
  double final_reg = 0.0;
  double final_temp = 0.0;
};

inline void dump_diagnostics(const CriticTrainResult& res) {
  for (const auto& diag : res.diagnostics)
    std::fprintf(stderr,
                 "critic step %d: q_data=%.4f q_uniform=%.4f q_proxy=%.4f td=%.4f reg=%.4f "
                 "temp=%.4f\n",
                 diag.step, diag.mean_q_data, diag.mean_q_uniform, diag.mean_q_proxy, diag.td,
                 diag.reg, diag.temp);
}

/// Mean min-Q over probe transitions with the given action source.
enum class QProbe { Data, Uniform, Proxy };

inline double mean_q(const CriticEnsemble& c, const GaussianPolicy& proxy,
                     const TransitionTable& table, std::span<const std::size_t> probe,
                     QProbe mode, Rng& rng) {
  double acc = 0.0;
  std::vector<double> action(static_cast<std::size_t>(table.action_dim));
  for (const std::size_t idx : probe) {
    const Step& s = *table.items[idx].step;
    switch (mode) {
      case QProbe::Data: action = s.action; break;
      case QProbe::Uniform:
        for (auto& a : action) a = rng.uniform(-1.0, 1.0);
        break;
      case QProbe::Proxy: action = proxy.sample(s.state, rng).action; break;
    }
    acc += c.q_min(s.state, action);
  }
  return acc / static_cast<double>(probe.size());
}

/// Offline actor-critic training: critic steps on TD + lambda * R alternate
/// with proxy-actor steps that maximize E[min Q - temp * log pi] and, when
/// enabled, temperature steps toward the target entropy. With lambda = 0
/// the regularizer path is never touched and the loop is plain SAC on the
/// offline buffer.
inline CriticTrainResult critic_train(CriticEnsemble& c, GaussianPolicy& proxy,
                                      const Dataset& ds, const CriticConfig& cfg, Rng& rng) {
  cfg.validate();
  const TransitionTable table = TransitionTable::from(ds);
  if (table.items.empty()) throw PreconditionError("critic_train on an empty dataset");
  if (cfg.lambda_cons != 0.0 && !table.annotated)
    throw PreconditionError("conservative training requires v_mc annotations");

  const std::size_t n = table.items.size();
  const auto batch_size = static_cast<std::size_t>(cfg.batch);
  std::vector<double> grad_q1(c.q1.param_count()), grad_q2(c.q2.param_count());
  std::vector<double> reg_q1(c.q1.param_count()), reg_q2(c.q2.param_count());
  std::vector<double> actor_grad(proxy.trunk().param_count());
  std::vector<double> critic_scratch(c.q1.param_count());
  AdamConfig ac;
  ac.lr = cfg.lr;
  AdamState adam_q1(c.q1.param_count(), ac), adam_q2(c.q2.param_count(), ac);
  AdamState adam_actor(proxy.trunk().param_count(), ac);
  ScalarAdam adam_temp(cfg.lr);

  double temp = cfg.temp_init;
  double log_temp = cfg.temp_auto ? std::log(cfg.temp_init) : 0.0;
  const double h_target = cfg.resolved_target_entropy(table.action_dim);
  const auto d = static_cast<std::size_t>(table.action_dim);

  // Diagnostics draw from their own stream so they never perturb training.
  Rng diag_rng(derive_seed(0x9d1a6u, "critic-diagnostics"));
  std::vector<std::size_t> probe(std::min<std::size_t>(n, 256));
  for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = i * (n / probe.size());

  CriticTrainResult res;
  std::vector<std::size_t> batch(batch_size);
  std::vector<double> upstream(2 * d);
  double td = 0.0, reg = 0.0;

  for (int step_i = 0; step_i < cfg.steps; ++step_i) {
    for (auto& b : batch) b = rng.index(n);

    // Critic step.
    std::fill(grad_q1.begin(), grad_q1.end(), 0.0);
    std::fill(grad_q2.begin(), grad_q2.end(), 0.0);
    td = td_loss(c, proxy, table, batch, cfg, temp, rng, grad_q1, grad_q2);
    reg = 0.0;
    if (cfg.lambda_cons != 0.0) {
      std::fill(reg_q1.begin(), reg_q1.end(), 0.0);
      std::fill(reg_q2.begin(), reg_q2.end(), 0.0);
      reg = regularizer(c, proxy, table, batch, cfg, rng, reg_q1, reg_q2);
      for (std::size_t i = 0; i < grad_q1.size(); ++i)
        grad_q1[i] += cfg.lambda_cons * reg_q1[i];
      for (std::size_t i = 0; i < grad_q2.size(); ++i)
        grad_q2[i] += cfg.lambda_cons * reg_q2[i];
    }
    const double total = td + cfg.lambda_cons * reg;
    if (!std::isfinite(total) || std::fabs(total) > 1e6) {
      dump_diagnostics(res);
      throw DivergenceError("critic training diverged at step " + std::to_string(step_i),
                            step_i);
    }
    adam_step(adam_q1, c.q1, grad_q1);
    adam_step(adam_q2, c.q2, grad_q2);

    // Proxy-actor step: maximize E[min Q(s,a) - temp * log pi(a|s)].
    std::fill(actor_grad.begin(), actor_grad.end(), 0.0);
    const double wb = 1.0 / static_cast<double>(batch.size());
    double mean_logp = 0.0;
    for (const std::size_t idx : batch) {
      const Step& s = *table.items[idx].step;
      const std::vector<double> out = proxy.trunk().forward(s.state);
      const GaussianPolicy::Heads h = proxy.heads_from_output(out);
      const GaussianPolicy::ActionSample samp = detail::sample_from_heads(h, rng);
      mean_logp += wb * samp.log_prob;

      const std::vector<double> sa = CriticEnsemble::concat(s.state, samp.action);
      const double v1 = c.q1.forward(sa)[0];
      const double v2 = c.q2.forward(sa)[0];
      Mlp& qm = v1 <= v2 ? c.q1 : c.q2;
      const double upstream1[1] = {1.0};
      std::vector<double> in_grad;
      qm.backward_into(sa, upstream1, critic_scratch, &in_grad);
      // in_grad holds d(minQ)/d(s,a); the action block starts at state_dim.
      for (std::size_t i = 0; i < d; ++i) {
        const double a = samp.action[i];
        const double sigma = std::exp(h.log_std[i]);
        const double dqda = in_grad[static_cast<std::size_t>(table.state_dim) + i];
        const double dadmu = 1.0 - a * a;
        upstream[i] = wb * (temp * 2.0 * a - dqda * dadmu);
        const double dadls = dadmu * sigma * samp.noise[i];
        upstream[d + i] =
            h.in_clamp_range[i] ? wb * (temp * (-1.0 + 2.0 * a * sigma * samp.noise[i]) - dqda * dadls)
                                : 0.0;
      }
      proxy.trunk().backward_into(s.state, upstream, actor_grad);
    }
    adam_step(adam_actor, proxy.trunk(), actor_grad);

    // Temperature step toward the entropy target.
    if (cfg.temp_auto) {
      const double g = mean_logp + h_target;
      adam_temp.step(log_temp, g);
      temp = std::exp(log_temp);
    }

    soft_update(c, c.tau_soft);

    if ((step_i + 1) % 1000 == 0 || step_i + 1 == cfg.steps) {
      CriticDiag diag;
      diag.step = step_i + 1;
      diag.mean_q_data = mean_q(c, proxy, table, probe, QProbe::Data, diag_rng);
      diag.mean_q_uniform = mean_q(c, proxy, table, probe, QProbe::Uniform, diag_rng);
      diag.mean_q_proxy = mean_q(c, proxy, table, probe, QProbe::Proxy, diag_rng);
      diag.td = td;
      diag.reg = reg;
      diag.temp = temp;
      res.diagnostics.push_back(diag);
    }
  }
  res.final_td = td;
  res.final_reg = reg;
  res.final_temp = temp;
  return res;
}

// ---- checkpointing ----

struct CriticCheckpoint {
  CriticEnsemble critic;
  CriticConfig config;
};

inline void write_critic_config(BinWriter& w, const CriticConfig& cfg) {
  w.f64(cfg.gamma);
  w.f64(cfg.lambda_cons);
  w.f64(cfg.alpha_mix);
  w.i32(cfg.n_uniform);
  w.i32(cfg.n_actor);
  w.f64(cfg.target_entropy);
  w.u8(cfg.temp_auto ? 1 : 0);
  w.f64(cfg.temp_init);
  w.i32(cfg.steps);
  w.i32(cfg.batch);
  w.f64(cfg.lr);
  w.u8(cfg.calibrate ? 1 : 0);
}

inline CriticConfig read_critic_config(BinReader& r) {
  CriticConfig cfg;
  cfg.gamma = r.f64();
  cfg.lambda_cons = r.f64();
  cfg.alpha_mix = r.f64();
  cfg.n_uniform = r.i32();
  cfg.n_actor = r.i32();
  cfg.target_entropy = r.f64();
  cfg.temp_auto = r.u8() != 0;
  cfg.temp_init = r.f64();
  cfg.steps = r.i32();
  cfg.batch = r.i32();
  cfg.lr = r.f64();
  cfg.calibrate = r.u8() != 0;
  return cfg;
}

inline void save_critic(const CriticEnsemble& c, const CriticConfig& cfg,
                        const std::string& path) {
  auto f = open_for_write(path);
  BinWriter w(f);
  write_magic(w, "RSCC");
  write_critic_config(w, cfg);
  w.f64(c.tau_soft);
  write_mlp(w, c.q1);
  write_mlp(w, c.q2);
  write_mlp(w, c.q1_target);
  write_mlp(w, c.q2_target);
}

inline CriticCheckpoint load_critic(const std::string& path) {
  auto f = open_for_read(path);
  BinReader r(f);
  expect_magic(r, "RSCC", "critic checkpoint");
  CriticCheckpoint ck;
  ck.config = read_critic_config(r);
  ck.critic.tau_soft = r.f64();
  ck.critic.q1 = read_mlp(r);
  ck.critic.q2 = read_mlp(r);
  ck.critic.q1_target = read_mlp(r);
  ck.critic.q2_target = read_mlp(r);
  return ck;
}

}  // namespace resample
