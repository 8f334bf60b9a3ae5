#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "resample/pipeline.hpp"

namespace resample {

/// The four ablation arms at matched seeds and matched augmentation volume
/// (ablation_volume additional trajectories, like the 10% protocol):
/// raw cloning, augmentation with nominal rollouts, augmentation with a
/// uniformly chosen candidate, and critic-guided exploratory sampling.
struct AblationResult {
  EvalResult raw;
  EvalResult no_sampling;
  EvalResult random_pick;
  EvalResult ours;
  int n_aug = 0;
  CollectStats ours_stats;
  nlohmann::json to_json() const {
    return nlohmann::json{{"raw", raw},
                          {"no_sampling", no_sampling},
                          {"random_pick", random_pick},
                          {"ours", ours},
                          {"n_aug", n_aug}};
  }
};

namespace detail {

/// Success-only pool of a collection arm, volume-matched to n_aug draws.
inline EvalResult ablation_arm(PipelineState& st, const std::vector<Trajectory>& successes,
                               int n_aug) {
  const ExperimentConfig& cfg = st.cfg;
  GaussianPolicy policy;
  if (successes.empty()) {
    // Nothing to add: the arm degenerates to retraining on the demos.
    Rng rinit = st.stage_rng("arm-retrain-init");
    policy = GaussianPolicy::random(2, 2, cfg.policy_hidden, rinit, PolicyRole::Deployed);
    Rng rtrain = st.stage_rng("arm-retrain-train");
    bc_train(policy, st.demos, cfg.bc, rtrain);
  } else {
    Dataset pool(cfg.env.id, 2, 2);
    for (const auto& t : successes) pool.add(t);
    pool.seal(cfg.critic.gamma);
    const double n_s = static_cast<double>(st.demos.size());
    const double ratio = static_cast<double>(n_aug) / (n_s + n_aug);
    Rng mix_rng = st.stage_rng("arm-mix");
    const Dataset mixed = mix(st.demos, pool, ratio, mix_rng);
    Rng rinit = st.stage_rng("arm-retrain-init");
    policy = GaussianPolicy::random(2, 2, cfg.policy_hidden, rinit, PolicyRole::Deployed);
    Rng rtrain = st.stage_rng("arm-retrain-train");
    bc_train(policy, mixed, cfg.bc, rtrain);
  }
  // All arms share the baseline evaluation episodes, so comparisons are
  // paired and the raw arm coincides with the rounds=0 pipeline.
  Rng er = st.stage_rng("eval-perturbed");
  return evaluate(policy, cfg.env, cfg.eval_episodes, cfg.eval_perturbation, er);
}

inline std::vector<Trajectory> successes_of(std::vector<Trajectory> trajs, double gamma) {
  std::vector<Trajectory> out;
  for (auto& t : trajs)
    if (t.succeeded) out.push_back(annotate_returns(std::move(t), gamma));
  return out;
}

}  // namespace detail

inline AblationResult run_ablation(const ExperimentConfig& cfg, const std::string& out_dir = "") {
  detail::PipelineState st = detail::pipeline_prefix(cfg, cfg.seed, out_dir);
  AblationResult res;
  res.raw = st.baseline_perturbed;
  res.n_aug = std::max(1, static_cast<int>(std::llround(cfg.ablation_volume * cfg.demo_count)));

  detail::ExplorationPhase ph = detail::explore_phase(st, 1);

  // All three collection arms replay the same episode seeds.
  Rng roll_nominal = st.stage_rng("arm-rollouts");
  auto nominal = collect_nominal(st.policy, cfg.env, cfg.sampler, cfg.sampler.rollout_count,
                                 roll_nominal);
  Rng roll_random = st.stage_rng("arm-rollouts");
  auto random_pick = collect_random_pick(st.policy, cfg.env, cfg.sampler,
                                         cfg.sampler.rollout_count, roll_random);
  Rng roll_ours = st.stage_rng("arm-rollouts");
  auto ours = collect_exploratory(st.policy, ph.critic, cfg.env, cfg.sampler, ph.tau_q,
                                  cfg.sampler.rollout_count, roll_ours, &res.ours_stats);

  const double gamma = cfg.critic.gamma;
  res.no_sampling = detail::ablation_arm(st, detail::successes_of(std::move(nominal), gamma),
                                         res.n_aug);
  res.random_pick = detail::ablation_arm(st, detail::successes_of(std::move(random_pick), gamma),
                                         res.n_aug);
  res.ours = detail::ablation_arm(st, detail::successes_of(std::move(ours), gamma), res.n_aug);
  return res;
}

struct RatioPoint {
  double ratio = 0.0;
  EvalResult eval;
};

struct RatioSweepResult {
  std::vector<RatioPoint> curve;  // sorted by ratio
  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : curve) arr.push_back({{"ratio", p.ratio}, {"eval", p.eval}});
    return arr;
  }
};

/// One full run per mixing ratio with shared demo and exploratory pools:
/// the prefix and the first round's exploration are computed once, then
/// each ratio branches into its own refit (and, for multi-round configs,
/// its own continuation rounds). Points reproduce run_resample at the same
/// ratio exactly.
inline RatioSweepResult run_ratio_sweep(const ExperimentConfig& cfg, std::vector<double> ratios,
                                        const std::string& out_dir = "") {
  if (ratios.empty()) throw InvalidArgumentError("ratio sweep needs at least one ratio");
  if (cfg.refinement_rounds < 1)
    throw ConfigError("ratio sweep needs refinement_rounds >= 1");
  std::sort(ratios.begin(), ratios.end());
  detail::PipelineState base = detail::pipeline_prefix(cfg, cfg.seed, out_dir);
  detail::ExplorationPhase ph = detail::explore_phase(base, 1);
  base.recovery_pool.insert(base.recovery_pool.end(), ph.recoveries.begin(),
                            ph.recoveries.end());
  base.rollout_pool.insert(base.rollout_pool.end(), ph.rollouts.begin(), ph.rollouts.end());

  RatioSweepResult res;
  for (const double ratio : ratios) {
    detail::PipelineState branch = base;
    branch.out_dir = "";  // per-ratio artifacts are not persisted
    detail::refit_phase(branch, 1, ratio);
    for (int r = 2; r <= cfg.refinement_rounds; ++r) {
      detail::ExplorationPhase phr = detail::explore_phase(branch, r);
      branch.recovery_pool.insert(branch.recovery_pool.end(), phr.recoveries.begin(),
                                  phr.recoveries.end());
      branch.rollout_pool.insert(branch.rollout_pool.end(), phr.rollouts.begin(),
                                 phr.rollouts.end());
      detail::refit_phase(branch, r, ratio);
    }
    Rng er = branch.stage_rng("eval-perturbed");
    res.curve.push_back(
        {ratio, evaluate(branch.policy, cfg.env, cfg.eval_episodes, cfg.eval_perturbation, er)});
  }
  return res;
}

struct TransferEntry {
  int task = 0;
  bool is_source = false;
  double baseline = 0.0;
  double augmented = 0.0;
  double delta = 0.0;
};

struct CrossTaskResult {
  std::vector<TransferEntry> entries;
  double mean_target_delta = 0.0;  // over non-source tasks
  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries)
      arr.push_back({{"task", e.task},
                     {"is_source", e.is_source},
                     {"baseline", e.baseline},
                     {"augmented", e.augmented},
                     {"delta", e.delta}});
    return nlohmann::json{{"tasks", arr}, {"mean_target_delta", mean_target_delta}};
  }
};

/// Exploratory data is generated on the source tasks only, then mixed into
/// every other family member's demos; each task's delta is measured against
/// its own-data-only policy on paired evaluation episodes.
inline CrossTaskResult run_cross_task(const ExperimentConfig& cfg,
                                      const std::string& out_dir = "") {
  cfg.validate();
  const std::vector<EnvSpec> family = make_task_family(cfg.family_seed, cfg.family_size);
  const double gamma = cfg.critic.gamma;

  std::vector<detail::PipelineState> states;
  states.reserve(family.size());
  for (std::size_t i = 0; i < family.size(); ++i) {
    ExperimentConfig task_cfg = cfg;
    task_cfg.env = family[i];
    const std::uint64_t task_seed = derive_seed(cfg.seed, "task-" + std::to_string(i));
    states.push_back(detail::pipeline_prefix(task_cfg, task_seed, ""));
  }

  // Source tasks run one exploration each; their recoveries form the pool.
  std::vector<bool> is_source(family.size(), false);
  std::vector<Trajectory> pool;
  for (const int s : cfg.cross_sources) {
    is_source[static_cast<std::size_t>(s)] = true;
    detail::ExplorationPhase ph = detail::explore_phase(states[static_cast<std::size_t>(s)], 1);
    pool.insert(pool.end(), ph.recoveries.begin(), ph.recoveries.end());
  }

  CrossTaskResult res;
  double acc = 0.0;
  int targets = 0;
  for (std::size_t i = 0; i < family.size(); ++i) {
    detail::PipelineState& st = states[i];
    TransferEntry e;
    e.task = static_cast<int>(i);
    e.is_source = is_source[i];
    e.baseline = st.baseline_perturbed.success_rate;
    if (pool.empty()) {
      // Ratio forced to zero: the augmented policy is the baseline itself.
      e.augmented = e.baseline;
    } else {
      Dataset pool_ds(st.cfg.env.id, 2, 2);
      for (const auto& t : pool) pool_ds.add(t);
      pool_ds.seal(gamma);
      Rng mix_rng = st.stage_rng("cross-mix");
      const Dataset mixed = mix(st.demos, pool_ds, cfg.cross_mix_ratio, mix_rng);
      Rng rinit = st.stage_rng("cross-retrain-init");
      GaussianPolicy policy =
          GaussianPolicy::random(2, 2, cfg.policy_hidden, rinit, PolicyRole::Deployed);
      Rng rtrain = st.stage_rng("cross-retrain-train");
      bc_train(policy, mixed, cfg.bc, rtrain);
      Rng er = st.stage_rng("eval-perturbed");
      e.augmented =
          evaluate(policy, st.cfg.env, cfg.eval_episodes, cfg.eval_perturbation, er).success_rate;
    }
    e.delta = e.augmented - e.baseline;
    if (!e.is_source) {
      acc += e.delta;
      ++targets;
    }
    res.entries.push_back(e);
  }
  res.mean_target_delta = targets > 0 ? acc / targets : 0.0;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream f(out_dir + "/cross_task.json", std::ios::trunc);
    f << res.to_json().dump(2) << '\n';
  }
  return res;
}

}  // namespace resample
