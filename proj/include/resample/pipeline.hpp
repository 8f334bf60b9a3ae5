#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "resample/config.hpp"
#include "resample/critic.hpp"
#include "resample/dataset.hpp"
#include "resample/dataset_io.hpp"
#include "resample/env.hpp"
#include "resample/errors.hpp"
#include "resample/policy.hpp"
#include "resample/rng.hpp"
#include "resample/sampler.hpp"

namespace resample {

struct EvalResult {
  int episodes = 0;
  int successes = 0;
  double success_rate = 0.0;
  double ci_lo = 0.0;  // 95% Wilson interval
  double ci_hi = 0.0;
  double mean_steps = 0.0;
  std::vector<bool> outcomes;  // per-episode log
};

inline void to_json(nlohmann::json& j, const EvalResult& e) {
  j = nlohmann::json{{"episodes", e.episodes},     {"successes", e.successes},
                     {"success_rate", e.success_rate}, {"ci_lo", e.ci_lo},
                     {"ci_hi", e.ci_hi},           {"mean_steps", e.mean_steps}};
}

/// Deterministic perturbed evaluation: mean-action execution over n
/// independent episodes, with observation noise of the given std.
inline EvalResult evaluate(const GaussianPolicy& policy, EnvSpec spec, int n,
                           double perturbation_std, Rng& rng) {
  if (n <= 0) throw InvalidArgumentError("evaluation needs at least one episode");
  spec.perturbation = perturbation_std;
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n));
  for (auto& s : seeds) s = rng.raw();

  EvalResult res;
  res.episodes = n;
  double total_steps = 0.0;
  for (const auto seed : seeds) {
    Rng ep(seed);
    EnvState st = reset(spec, ep);
    while (!st.done) {
      const std::vector<double> obs = observe(spec, st, ep);
      const std::vector<double> a = policy.mean_action(obs);
      st = step(spec, st, {a[0], a[1]}).state;
    }
    res.outcomes.push_back(st.succeeded);
    res.successes += st.succeeded ? 1 : 0;
    total_steps += st.t;
  }
  res.success_rate = static_cast<double>(res.successes) / n;
  res.mean_steps = total_steps / n;
  const double z = 1.959963984540054;  // 95% normal quantile
  const double nn = static_cast<double>(n), p = res.success_rate;
  const double denom = 1.0 + z * z / nn;
  const double center = (p + z * z / (2.0 * nn)) / denom;
  const double half =
      z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / denom;
  res.ci_lo = std::max(0.0, center - half);
  res.ci_hi = std::min(1.0, center + half);
  return res;
}

/// Collect successful expert demonstrations (failed attempts are re-rolled;
/// the scripted expert virtually never fails at the default noise).
inline std::vector<Trajectory> collect_demos(const EnvSpec& spec, int count, double noise_std,
                                             Rng& rng) {
  std::vector<Trajectory> demos;
  int attempts = 0;
  const int max_attempts = count * 20;
  EnvSpec clean = spec;
  clean.perturbation = 0.0;  // demonstrations are collected unperturbed
  while (static_cast<int>(demos.size()) < count) {
    if (++attempts > max_attempts)
      throw Error("scripted expert failed too often while collecting demos");
    EnvState st = reset(clean, rng);
    Trajectory traj;
    traj.provenance = Provenance::Demo;
    while (!st.done) {
      const std::vector<double> obs = observe(clean, st, rng);
      const Vec2 a = scripted_expert(clean, st, noise_std, rng);
      const StepResult res = step(clean, st, a);
      traj.steps.push_back({obs, {a[0], a[1]}, res.reward, res.done, 0.0});
      st = res.state;
    }
    traj.succeeded = st.succeeded;
    if (traj.succeeded) demos.push_back(std::move(traj));
  }
  return demos;
}

inline Dataset make_dataset(const std::string& env_id, int state_dim, int action_dim,
                            const std::vector<Trajectory>& trajs, double gamma) {
  Dataset ds(env_id, state_dim, action_dim);
  for (const auto& t : trajs) ds.add(annotate_returns(t, gamma));
  ds.seal(gamma);
  return ds;
}

struct StageArtifact {
  std::string path;
  std::string fnv64;
};

struct RunReport {
  std::string config_hash;
  std::uint64_t seed = 0;
  nlohmann::json metrics;
  std::vector<StageArtifact> artifacts;
  double wall_clock_sec = 0.0;
};

inline nlohmann::json report_json(const RunReport& r) {
  nlohmann::json arts = nlohmann::json::array();
  for (const auto& a : r.artifacts) arts.push_back({{"path", a.path}, {"fnv64", a.fnv64}});
  return nlohmann::json{{"config_hash", r.config_hash},
                        {"seed", r.seed},
                        {"metrics", r.metrics},
                        {"artifacts", arts},
                        {"timing", {{"wall_clock_sec", r.wall_clock_sec}}}};
}

inline void flatten_metrics(const nlohmann::json& j, const std::string& prefix,
                            std::vector<std::pair<std::string, std::string>>& rows) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it)
      flatten_metrics(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), rows);
  } else if (j.is_array()) {
    std::size_t i = 0;
    for (const auto& v : j) flatten_metrics(v, prefix + "[" + std::to_string(i++) + "]", rows);
  } else {
    rows.emplace_back(prefix, j.dump());
  }
}

inline void save_report(const RunReport& r, const std::string& dir) {
  {
    std::ofstream f(dir + "/report.json", std::ios::trunc);
    f << report_json(r).dump(2) << '\n';
  }
  std::vector<std::pair<std::string, std::string>> rows;
  flatten_metrics(r.metrics, "", rows);
  std::ofstream csv(dir + "/report.csv", std::ios::trunc);
  csv << "metric,value\n";
  for (const auto& [k, v] : rows) csv << k << ',' << v << '\n';
}

namespace detail {

/// Shared mutable state threaded through the pipeline stages so the
/// experiment harnesses (ablation, ratio sweep, cross-task) can branch
/// mid-run while reproducing run_resample exactly on the common path.
struct PipelineState {
  ExperimentConfig cfg;
  std::uint64_t base_seed = 0;  // stage tags derive from this
  std::string out_dir;

  Dataset demos;
  GaussianPolicy policy;
  BcResult bc_result;
  EvalResult baseline_perturbed;
  EvalResult baseline_clean;

  std::vector<Trajectory> recovery_pool;  // successful exploratory rollouts
  std::vector<Trajectory> rollout_pool;   // every rollout, for the critic
  Dataset policy_train_ds;                // what the policy (and proxy) last trained on

  std::vector<StageArtifact> artifacts;

  Rng stage_rng(const std::string& tag) const { return Rng(derive_seed(base_seed, tag)); }

  void persist_dataset(const Dataset& ds, const std::string& name) {
    if (out_dir.empty()) return;
    const std::string path = out_dir + "/" + name;
    save_dataset(ds, path);
    artifacts.push_back({path, hex64(fnv1a64_file(path))});
  }
  void persist_policy(const GaussianPolicy& p, const std::string& name) {
    if (out_dir.empty()) return;
    const std::string path = out_dir + "/" + name;
    save_policy(p, path);
    artifacts.push_back({path, hex64(fnv1a64_file(path))});
  }
  void persist_critic(const CriticEnsemble& c, const CriticConfig& cc, const std::string& name) {
    if (out_dir.empty()) return;
    const std::string path = out_dir + "/" + name;
    save_critic(c, cc, path);
    artifacts.push_back({path, hex64(fnv1a64_file(path))});
  }
};

/// Demos, behavioral cloning, and baseline evaluations.
inline PipelineState pipeline_prefix(const ExperimentConfig& cfg, std::uint64_t base_seed,
                                     const std::string& out_dir) {
  cfg.validate();
  PipelineState st;
  st.cfg = cfg;
  st.base_seed = base_seed;
  st.out_dir = out_dir;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  const double gamma = cfg.critic.gamma;
  Rng demo_rng = st.stage_rng("demos");
  const auto demo_trajs =
      collect_demos(cfg.env, cfg.demo_count, cfg.expert_noise_rel * cfg.env.action_scale,
                    demo_rng);
  st.demos = make_dataset(cfg.env.id, 2, 2, demo_trajs, gamma);
  st.persist_dataset(st.demos, "demos.ds");

  Rng init_rng = st.stage_rng("bc-init");
  st.policy = GaussianPolicy::random(2, 2, cfg.policy_hidden, init_rng, PolicyRole::Deployed);
  Rng train_rng = st.stage_rng("bc-train");
  st.bc_result = bc_train(st.policy, st.demos, cfg.bc, train_rng);
  st.persist_policy(st.policy, "policy_bc.ckpt");

  if (cfg.eval_episodes > 0) {
    Rng ep = st.stage_rng("eval-perturbed");
    st.baseline_perturbed =
        evaluate(st.policy, cfg.env, cfg.eval_episodes, cfg.eval_perturbation, ep);
    Rng ec = st.stage_rng("eval-clean");
    st.baseline_clean = evaluate(st.policy, cfg.env, cfg.eval_episodes, 0.0, ec);
  }
  st.policy_train_ds = st.demos;
  return st;
}

/// The ratio-independent half of a refinement round: proxy cloning, critic
/// training on everything seen so far, threshold selection, exploratory
/// collection, and the recovery filter.
struct ExplorationPhase {
  GaussianPolicy proxy;
  CriticEnsemble critic;
  CriticTrainResult critic_result;
  double tau_q = 0.0;
  CollectStats stats;
  std::vector<Trajectory> recoveries;
  std::vector<Trajectory> rollouts;  // annotated
};

inline ExplorationPhase explore_phase(PipelineState& st, int round) {
  const ExperimentConfig& cfg = st.cfg;
  const std::string r = std::to_string(round);
  ExplorationPhase ph;

  Rng pinit = st.stage_rng("proxy-init-r" + r);
  ph.proxy = GaussianPolicy::random(2, 2, cfg.policy_hidden, pinit, PolicyRole::Proxy);
  Rng ptrain = st.stage_rng("proxy-train-r" + r);
  bc_train(ph.proxy, st.policy_train_ds, cfg.bc, ptrain);

  Dataset critic_ds(cfg.env.id, 2, 2);
  for (const auto& t : st.demos.trajectories()) critic_ds.add(t);
  for (const auto& t : st.rollout_pool) critic_ds.add(t);
  critic_ds.seal(cfg.critic.gamma);

  Rng cinit = st.stage_rng("critic-init-r" + r);
  ph.critic = CriticEnsemble::random(2, 2, cfg.critic_hidden, cinit);
  Rng ctrain = st.stage_rng("critic-train-r" + r);
  ph.critic_result = critic_train(ph.critic, ph.proxy, critic_ds, cfg.critic, ctrain);
  st.persist_critic(ph.critic, cfg.critic, "critic_r" + r + ".ckpt");
  st.persist_policy(ph.proxy, "proxy_r" + r + ".ckpt");

  ph.tau_q = compute_tau_q(ph.critic, critic_ds, cfg.sampler.tau_q_mode);

  Rng explore_rng = st.stage_rng("explore-r" + r);
  auto rollouts = collect_exploratory(st.policy, ph.critic, cfg.env, cfg.sampler, ph.tau_q,
                                      cfg.sampler.rollout_count, explore_rng, &ph.stats);
  for (auto& t : rollouts) t = annotate_returns(std::move(t), cfg.critic.gamma);
  auto [recov, all] = filter_recoveries(rollouts);
  ph.recoveries = std::move(recov);
  ph.rollouts = std::move(all);

  Dataset explore_ds(cfg.env.id, 2, 2);
  for (const auto& t : ph.rollouts) explore_ds.add(t);
  explore_ds.seal(cfg.critic.gamma);
  st.persist_dataset(explore_ds, "explore_r" + r + ".ds");
  return ph;
}

/// The ratio-dependent half: mix recoveries into the source demos at the
/// requested share and retrain the deployed policy (from scratch unless
/// fine-tuning is requested). Returns the mixed dataset's sizes.
struct RefitPhase {
  std::size_t mixed_total = 0;
  std::size_t mixed_augmented = 0;
  bool augmentation_skipped = false;  // empty recovery pool
  double retrain_nll = 0.0;
};

inline RefitPhase refit_phase(PipelineState& st, int round, double ratio) {
  const ExperimentConfig& cfg = st.cfg;
  const std::string r = std::to_string(round);
  RefitPhase rf;

  Dataset mixed;
  if (st.recovery_pool.empty() || ratio == 0.0) {
    mixed = st.demos;
    rf.augmentation_skipped = st.recovery_pool.empty() && ratio != 0.0;
  } else {
    Dataset pool(cfg.env.id, 2, 2);
    for (const auto& t : st.recovery_pool) pool.add(t);
    pool.seal(cfg.critic.gamma);
    Rng mix_rng = st.stage_rng("mix-r" + r);
    mixed = mix(st.demos, pool, ratio, mix_rng);
  }
  rf.mixed_total = mixed.size();
  rf.mixed_augmented = mixed.size() - st.demos.size();
  st.persist_dataset(mixed, "mixed_r" + r + ".ds");

  if (!cfg.fine_tune) {
    Rng rinit = st.stage_rng("retrain-init-r" + r);
    st.policy = GaussianPolicy::random(2, 2, cfg.policy_hidden, rinit, PolicyRole::Deployed);
  }
  Rng rtrain = st.stage_rng("retrain-train-r" + r);
  rf.retrain_nll = bc_train(st.policy, mixed, cfg.bc, rtrain).final_loss;
  st.persist_policy(st.policy, "policy_r" + r + ".ckpt");
  st.policy_train_ds = std::move(mixed);
  return rf;
}

inline nlohmann::json critic_diag_json(const CriticTrainResult& res) {
  if (res.diagnostics.empty()) return nlohmann::json::object();
  const CriticDiag& d = res.diagnostics.back();
  return nlohmann::json{{"mean_q_data", d.mean_q_data},
                        {"mean_q_uniform", d.mean_q_uniform},
                        {"mean_q_proxy", d.mean_q_proxy},
                        {"td", d.td},
                        {"reg", d.reg},
                        {"temp", d.temp}};
}

}  // namespace detail

/// The full dual refinement loop: clone, then per round train the critic
/// on all outcomes, enact confident mistakes, keep the successful
/// recoveries, remix and retrain the policy. Every stage is seeded from
/// (master seed, stage tag), so reports are reproducible and any stage can
/// be rerun in isolation.
inline RunReport run_resample(const ExperimentConfig& cfg, const std::string& out_dir = "") {
  const auto t0 = std::chrono::steady_clock::now();
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    save_config(cfg, out_dir + "/config.json");
  }
  detail::PipelineState st = detail::pipeline_prefix(cfg, cfg.seed, out_dir);

  RunReport rep;
  rep.config_hash = config_hash(cfg);
  rep.seed = cfg.seed;
  rep.metrics["bc"] = {{"final_nll", st.bc_result.final_loss},
                       {"epochs", st.bc_result.loss_curve.size()}};
  rep.metrics["baseline"] = {{"perturbed", st.baseline_perturbed},
                             {"clean", st.baseline_clean}};

  nlohmann::json rounds = nlohmann::json::array();
  for (int r = 1; r <= cfg.refinement_rounds; ++r) {
    detail::ExplorationPhase ph = detail::explore_phase(st, r);
    st.recovery_pool.insert(st.recovery_pool.end(), ph.recoveries.begin(),
                            ph.recoveries.end());
    st.rollout_pool.insert(st.rollout_pool.end(), ph.rollouts.begin(), ph.rollouts.end());
    detail::RefitPhase rf = detail::refit_phase(st, r, cfg.mix_ratio);

    Rng er = st.stage_rng("eval-perturbed");
    const EvalResult round_eval =
        cfg.eval_episodes > 0
            ? evaluate(st.policy, cfg.env, cfg.eval_episodes, cfg.eval_perturbation, er)
            : EvalResult{};
    rounds.push_back({{"round", r},
                      {"critic", detail::critic_diag_json(ph.critic_result)},
                      {"tau_q", ph.tau_q},
                      {"explore",
                       {{"episodes", ph.stats.episodes},
                        {"successes", ph.stats.successes},
                        {"interventions", ph.stats.interventions},
                        {"intervention_rate", ph.stats.intervention_rate()},
                        {"success_rate", ph.stats.success_rate()},
                        {"zero_interventions_warning", ph.stats.zero_interventions_warning}}},
                      {"recovery_pool", st.recovery_pool.size()},
                      {"mix",
                       {{"total", rf.mixed_total},
                        {"augmented", rf.mixed_augmented},
                        {"skipped", rf.augmentation_skipped}}},
                      {"retrain_nll", rf.retrain_nll},
                      {"eval_perturbed", round_eval}});
  }
  rep.metrics["rounds"] = std::move(rounds);

  EvalResult final_eval = st.baseline_perturbed;  // rounds = 0 reproduces the BC baseline
  if (cfg.refinement_rounds > 0 && cfg.eval_episodes > 0) {
    Rng ef = st.stage_rng("eval-perturbed");
    final_eval = evaluate(st.policy, cfg.env, cfg.eval_episodes, cfg.eval_perturbation, ef);
  }
  rep.metrics["final"] = {
      {"perturbed", final_eval},
      {"delta_vs_baseline", final_eval.success_rate - st.baseline_perturbed.success_rate}};

  rep.artifacts = st.artifacts;
  rep.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!out_dir.empty()) save_report(rep, out_dir);
  return rep;
}

}  // namespace resample
