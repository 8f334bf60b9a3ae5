#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "resample/critic.hpp"
#include "resample/dataset.hpp"
#include "resample/env.hpp"
#include "resample/errors.hpp"
#include "resample/policy.hpp"
#include "resample/rng.hpp"

namespace resample {

/// How the exploratory Q threshold is chosen: a fixed value, or a quantile
/// of min-Q over all dataset state-action pairs (scale-free across critic
/// retraining rounds).
struct TauQMode {
  enum Kind { Fixed, Quantile } kind = Quantile;
  double value = 0.2;

  static TauQMode fixed(double v) { return {Fixed, v}; }
  static TauQMode quantile(double q) { return {Quantile, q}; }
};

struct SamplerConfig {
  int k = 10;                         // candidate actions per state
  TauQMode tau_q_mode{};              // default: 0.2 quantile
  int intervention_budget = 1;        // max intervened steps per episode
  double intervention_window = 0.5;   // eligible fraction of the horizon, from the start
  int rollout_count = 100;            // episodes per collection round

  void validate() const {
    if (k < 1) throw InvalidArgumentError("candidate count must be >= 1");
    if (intervention_budget < 0) throw InvalidArgumentError("budget must be >= 0");
    if (intervention_window <= 0.0 || intervention_window > 1.0)
      throw InvalidArgumentError("window must lie in (0,1]");
    if (tau_q_mode.kind == TauQMode::Quantile &&
        (tau_q_mode.value <= 0.0 || tau_q_mode.value >= 1.0))
      throw InvalidArgumentError("quantile must lie in (0,1)");
    if (rollout_count < 0) throw InvalidArgumentError("rollout_count must be >= 0");
  }
};

struct Candidate {
  std::vector<double> action;
  double log_prob = 0.0;
  double q_value = 0.0;
};

/// One intervention decision: K policy candidates scored by the twin-min
/// critic. If any candidate falls below tau_q (and the budget/window
/// permit), the most likely of those is enacted; otherwise the policy's
/// nominal action (the distribution mode) is executed.
struct CandidateSet {
  std::vector<double> state;
  std::vector<Candidate> candidates;
  double tau_q = 0.0;
  std::optional<std::size_t> chosen_index;  // none when falling back to the mode
  bool intervened = false;
  std::vector<double> action;  // the action to execute
};

/// The core of the intervention rule, on an explicit candidate list: among
/// candidates with Q strictly below tau_q, pick the one with maximal
/// policy likelihood; ties break toward the lowest index. Returns nothing
/// when the exploratory subset is empty.
inline std::optional<std::size_t> exploratory_choice(std::span<const Candidate> candidates,
                                                     double tau_q) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].q_value >= tau_q) continue;
    if (!best || candidates[i].log_prob > candidates[*best].log_prob) best = i;
  }
  return best;
}

/// Draw K candidates from the policy, score them with the twin-min critic
/// and apply the intervention rule; fall back to the policy's nominal
/// maximizer (the distribution mode) when the rule does not fire or the
/// budget/window forbids it.
inline CandidateSet select_action(const GaussianPolicy& policy, const CriticEnsemble& critic,
                                  std::span<const double> state, const SamplerConfig& cfg,
                                  double tau_q, bool eligible, Rng& rng) {
  cfg.validate();
  CandidateSet cs;
  cs.state.assign(state.begin(), state.end());
  cs.tau_q = tau_q;
  cs.candidates.reserve(static_cast<std::size_t>(cfg.k));
  for (int i = 0; i < cfg.k; ++i) {
    const GaussianPolicy::ActionSample s = policy.sample(state, rng);
    Candidate cand;
    cand.q_value = critic.q_min(state, s.action);
    cand.action = s.action;
    cand.log_prob = s.log_prob;
    cs.candidates.push_back(std::move(cand));
  }
  if (eligible) {
    if (const auto best = exploratory_choice(cs.candidates, tau_q)) {
      cs.chosen_index = best;
      cs.intervened = true;
      cs.action = cs.candidates[*best].action;
      return cs;
    }
  }
  cs.action = policy.mean_action(state);
  return cs;
}

/// Threshold of admissible value. Quantile mode uses lower interpolation
/// over the sorted min-Q values of every dataset pair, so it agrees exactly
/// with a sort-based oracle.
inline double compute_tau_q(const CriticEnsemble& critic, const Dataset& ds,
                            const TauQMode& mode) {
  if (mode.kind == TauQMode::Fixed) return mode.value;
  if (ds.empty()) throw PreconditionError("quantile threshold on an empty dataset");
  std::vector<double> qs;
  qs.reserve(ds.step_count());
  for (const auto& traj : ds.trajectories())
    for (const auto& s : traj.steps) qs.push_back(critic.q_min(s.state, s.action));
  std::sort(qs.begin(), qs.end());
  const auto idx = static_cast<std::size_t>(
      std::floor(mode.value * static_cast<double>(qs.size() - 1)));
  return qs[idx];
}

enum class CollectMode {
  Nominal,      // execute the policy mode everywhere (no interventions)
  RandomPick,   // intervene with a uniformly chosen candidate, ignoring the critic
  CriticGuided  // the exploratory sampling rule
};

struct CollectStats {
  int episodes = 0;
  int successes = 0;
  int interventions = 0;
  double tau_q = 0.0;
  bool zero_interventions_warning = false;

  double success_rate() const {
    return episodes > 0 ? static_cast<double>(successes) / episodes : 0.0;
  }
  double intervention_rate() const {
    return episodes > 0 ? static_cast<double>(interventions) / episodes : 0.0;
  }
};

namespace detail {

inline std::vector<Trajectory> collect_rollouts(const GaussianPolicy& policy,
                                                const CriticEnsemble* critic,
                                                const EnvSpec& spec, const SamplerConfig& cfg,
                                                double tau_q, int n_episodes, CollectMode mode,
                                                Rng& rng, CollectStats* stats) {
  cfg.validate();
  spec.validate();
  if (mode == CollectMode::CriticGuided && critic == nullptr)
    throw ConfigError("critic-guided collection without a trained critic checkpoint");
  // Pre-drawn per-episode seeds keep episodes independent of each other, so
  // they can run in any order (or in parallel) with identical results.
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n_episodes));
  for (auto& s : seeds) s = rng.raw();

  const int window_end =
      static_cast<int>(std::ceil(cfg.intervention_window * spec.horizon));
  std::vector<Trajectory> out;
  out.reserve(seeds.size());
  if (stats) {
    *stats = {};
    stats->tau_q = tau_q;
  }

  for (const auto seed : seeds) {
    Rng ep_rng(seed);
    EnvState st = reset(spec, ep_rng);
    Trajectory traj;
    traj.provenance =
        mode == CollectMode::Nominal ? Provenance::Rollout : Provenance::Exploratory;
    int used = 0;
    while (!st.done) {
      const std::vector<double> obs = observe(spec, st, ep_rng);
      const bool eligible = used < cfg.intervention_budget && st.t < window_end;
      std::vector<double> action;
      bool intervened = false;
      if (mode == CollectMode::Nominal) {
        action = policy.mean_action(obs);
      } else if (mode == CollectMode::RandomPick) {
        std::vector<GaussianPolicy::ActionSample> cands;
        cands.reserve(static_cast<std::size_t>(cfg.k));
        for (int i = 0; i < cfg.k; ++i) cands.push_back(policy.sample(obs, ep_rng));
        if (eligible) {
          action = cands[ep_rng.index(cands.size())].action;
          intervened = true;
        } else {
          action = policy.mean_action(obs);
        }
      } else {
        const CandidateSet cs =
            select_action(policy, *critic, obs, cfg, tau_q, eligible, ep_rng);
        action = cs.action;
        intervened = cs.intervened;
      }
      if (intervened) {
        traj.intervention_indices.push_back(st.t);
        ++used;
      }
      const StepResult res = step(spec, st, {action[0], action[1]});
      traj.steps.push_back({obs, std::move(action), res.reward, res.done, 0.0});
      st = res.state;
    }
    traj.succeeded = st.succeeded;
    if (stats) {
      ++stats->episodes;
      stats->successes += st.succeeded ? 1 : 0;
      stats->interventions += used;
    }
    out.push_back(std::move(traj));
  }
  if (stats && mode == CollectMode::CriticGuided && stats->interventions == 0 && n_episodes > 0)
    stats->zero_interventions_warning = true;  // tau_q likely too low
  return out;
}

}  // namespace detail

/// Run exploratory episodes: every step is routed through the intervention
/// rule until the per-episode budget is spent, after which the nominal
/// policy plays out the recovery phase. Trajectories carry the exploratory
/// provenance and the indices of intervened steps.
inline std::vector<Trajectory> collect_exploratory(const GaussianPolicy& policy,
                                                   const CriticEnsemble& critic,
                                                   const EnvSpec& spec,
                                                   const SamplerConfig& cfg, double tau_q,
                                                   int n_episodes, Rng& rng,
                                                   CollectStats* stats = nullptr) {
  return detail::collect_rollouts(policy, &critic, spec, cfg, tau_q, n_episodes,
                                  CollectMode::CriticGuided, rng, stats);
}

/// Plain rollouts of the policy mode (the no-sampling augmentation arm).
inline std::vector<Trajectory> collect_nominal(const GaussianPolicy& policy, const EnvSpec& spec,
                                               const SamplerConfig& cfg, int n_episodes,
                                               Rng& rng, CollectStats* stats = nullptr) {
  return detail::collect_rollouts(policy, nullptr, spec, cfg, 0.0, n_episodes,
                                  CollectMode::Nominal, rng, stats);
}

/// Rollouts with uniformly chosen candidate interventions (the
/// critic-blind augmentation arm).
inline std::vector<Trajectory> collect_random_pick(const GaussianPolicy& policy,
                                                   const EnvSpec& spec, const SamplerConfig& cfg,
                                                   int n_episodes, Rng& rng,
                                                   CollectStats* stats = nullptr) {
  return detail::collect_rollouts(policy, nullptr, spec, cfg, 0.0, n_episodes,
                                  CollectMode::RandomPick, rng, stats);
}

}  // namespace resample
