#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "resample/critic.hpp"
#include "resample/env.hpp"
#include "resample/errors.hpp"
#include "resample/policy.hpp"
#include "resample/rng.hpp"
#include "resample/sampler.hpp"
#include "resample/serial.hpp"

namespace resample {

/// Everything a full run needs. Paper-derived scalars keep their stated
/// values as defaults (gamma, soft-update rate, K, target entropy rescaled
/// to the toy action dimension, 40% mixing); the critic's step/batch/lr
/// budget is rescaled for desk-size networks and datasets.
struct ExperimentConfig {
  EnvSpec env;
  std::uint64_t seed = 1;

  int demo_count = 60;
  double expert_noise_rel = 0.1;  // demo action noise, in units of action_scale

  std::vector<int> policy_hidden{32, 32};
  BcConfig bc;

  std::vector<int> critic_hidden{32, 32};
  CriticConfig critic = desk_critic();

  SamplerConfig sampler;

  double mix_ratio = 0.4;
  int refinement_rounds = 2;
  bool fine_tune = false;  // retrain from scratch by default

  int eval_episodes = 200;
  double eval_perturbation = 0.03;

  double ablation_volume = 0.1;  // matched "additional trajectories" share for the ablation
  std::vector<double> sweep_ratios{0.1, 0.2, 0.4, 0.5};

  std::uint64_t family_seed = 1;
  int family_size = 4;
  std::vector<int> cross_sources{0, 2};
  double cross_mix_ratio = 0.2;

  static CriticConfig desk_critic() {
    CriticConfig c;
    c.steps = 3000;
    c.batch = 64;
    c.lr = 1e-3;
    return c;
  }

  void validate() const {
    env.validate();
    critic.validate();
    sampler.validate();
    if (demo_count < 1) throw ConfigError("demo_count must be >= 1");
    if (mix_ratio < 0.0 || mix_ratio >= 1.0) throw ConfigError("mix_ratio must lie in [0,1)");
    if (cross_mix_ratio < 0.0 || cross_mix_ratio >= 1.0)
      throw ConfigError("cross_mix_ratio must lie in [0,1)");
    if (refinement_rounds < 0) throw ConfigError("refinement_rounds must be >= 0");
    if (eval_episodes < 0) throw ConfigError("eval_episodes must be >= 0");
    if (eval_perturbation < 0.0) throw ConfigError("eval_perturbation must be >= 0");
    if (ablation_volume <= 0.0 || ablation_volume >= 1.0)
      throw ConfigError("ablation_volume must lie in (0,1)");
    if (family_size < 1) throw ConfigError("family_size must be >= 1");
    for (int s : cross_sources)
      if (s < 0 || s >= family_size) throw ConfigError("cross_sources index out of range");
    if (bc.epochs < 1 || bc.lr <= 0.0) throw ConfigError("bad BC settings");
    for (int h : policy_hidden)
      if (h < 1) throw ConfigError("policy hidden sizes must be positive");
    for (int h : critic_hidden)
      if (h < 1) throw ConfigError("critic hidden sizes must be positive");
  }
};

// ---- JSON bindings ----

inline void to_json(nlohmann::json& j, const Box2& b) {
  j = nlohmann::json{{"lo", b.lo}, {"hi", b.hi}};
}
inline void from_json(const nlohmann::json& j, Box2& b) {
  b.lo = j.value("lo", b.lo);
  b.hi = j.value("hi", b.hi);
}

inline void to_json(nlohmann::json& j, const EnvSpec& e) {
  j = nlohmann::json{{"id", e.id},
                     {"gap_center", e.gap_center},
                     {"gap_width", e.gap_width},
                     {"goal", e.goal},
                     {"start_region", e.start_region},
                     {"horizon", e.horizon},
                     {"success_radius", e.success_radius},
                     {"wall_y", e.wall_y},
                     {"action_scale", e.action_scale},
                     {"perturbation", e.perturbation}};
}
inline void from_json(const nlohmann::json& j, EnvSpec& e) {
  e.id = j.value("id", e.id);
  e.gap_center = j.value("gap_center", e.gap_center);
  e.gap_width = j.value("gap_width", e.gap_width);
  e.goal = j.value("goal", e.goal);
  e.start_region = j.value("start_region", e.start_region);
  e.horizon = j.value("horizon", e.horizon);
  e.success_radius = j.value("success_radius", e.success_radius);
  e.wall_y = j.value("wall_y", e.wall_y);
  e.action_scale = j.value("action_scale", e.action_scale);
  e.perturbation = j.value("perturbation", e.perturbation);
}

inline void to_json(nlohmann::json& j, const BcConfig& c) {
  j = nlohmann::json{
      {"epochs", c.epochs}, {"batch", c.batch}, {"lr", c.lr}, {"weight_decay", c.weight_decay}};
}
inline void from_json(const nlohmann::json& j, BcConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
}

inline void to_json(nlohmann::json& j, const CriticConfig& c) {
  j = nlohmann::json{{"gamma", c.gamma},
                     {"lambda_cons", c.lambda_cons},
                     {"alpha_mix", c.alpha_mix},
                     {"n_uniform", c.n_uniform},
                     {"n_actor", c.n_actor},
                     {"target_entropy", c.target_entropy},
                     {"temp_auto", c.temp_auto},
                     {"temp_init", c.temp_init},
                     {"steps", c.steps},
                     {"batch", c.batch},
                     {"lr", c.lr},
                     {"calibrate", c.calibrate}};
}
inline void from_json(const nlohmann::json& j, CriticConfig& c) {
  c.gamma = j.value("gamma", c.gamma);
  c.lambda_cons = j.value("lambda_cons", c.lambda_cons);
  c.alpha_mix = j.value("alpha_mix", c.alpha_mix);
  c.n_uniform = j.value("n_uniform", c.n_uniform);
  c.n_actor = j.value("n_actor", c.n_actor);
  c.target_entropy = j.value("target_entropy", c.target_entropy);
  c.temp_auto = j.value("temp_auto", c.temp_auto);
  c.temp_init = j.value("temp_init", c.temp_init);
  c.steps = j.value("steps", c.steps);
  c.batch = j.value("batch", c.batch);
  c.lr = j.value("lr", c.lr);
  c.calibrate = j.value("calibrate", c.calibrate);
}

inline void to_json(nlohmann::json& j, const TauQMode& m) {
  j = nlohmann::json{{"mode", m.kind == TauQMode::Fixed ? "fixed" : "quantile"},
                     {"value", m.value}};
}
inline void from_json(const nlohmann::json& j, TauQMode& m) {
  const std::string kind = j.value("mode", m.kind == TauQMode::Fixed ? "fixed" : "quantile");
  if (kind == "fixed")
    m.kind = TauQMode::Fixed;
  else if (kind == "quantile")
    m.kind = TauQMode::Quantile;
  else
    throw ConfigError("tau_q mode must be 'fixed' or 'quantile'");
  m.value = j.value("value", m.value);
}

inline void to_json(nlohmann::json& j, const SamplerConfig& c) {
  j = nlohmann::json{{"k", c.k},
                     {"tau_q", c.tau_q_mode},
                     {"intervention_budget", c.intervention_budget},
                     {"intervention_window", c.intervention_window},
                     {"rollout_count", c.rollout_count}};
}
inline void from_json(const nlohmann::json& j, SamplerConfig& c) {
  c.k = j.value("k", c.k);
  if (j.contains("tau_q")) j.at("tau_q").get_to(c.tau_q_mode);
  c.intervention_budget = j.value("intervention_budget", c.intervention_budget);
  c.intervention_window = j.value("intervention_window", c.intervention_window);
  c.rollout_count = j.value("rollout_count", c.rollout_count);
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"env", c.env},
                     {"seed", c.seed},
                     {"demo_count", c.demo_count},
                     {"expert_noise_rel", c.expert_noise_rel},
                     {"policy_hidden", c.policy_hidden},
                     {"bc", c.bc},
                     {"critic_hidden", c.critic_hidden},
                     {"critic", c.critic},
                     {"sampler", c.sampler},
                     {"mix_ratio", c.mix_ratio},
                     {"refinement_rounds", c.refinement_rounds},
                     {"fine_tune", c.fine_tune},
                     {"eval_episodes", c.eval_episodes},
                     {"eval_perturbation", c.eval_perturbation},
                     {"ablation_volume", c.ablation_volume},
                     {"sweep_ratios", c.sweep_ratios},
                     {"family_seed", c.family_seed},
                     {"family_size", c.family_size},
                     {"cross_sources", c.cross_sources},
                     {"cross_mix_ratio", c.cross_mix_ratio}};
}
inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  if (j.contains("env")) j.at("env").get_to(c.env);
  c.seed = j.value("seed", c.seed);
  c.demo_count = j.value("demo_count", c.demo_count);
  c.expert_noise_rel = j.value("expert_noise_rel", c.expert_noise_rel);
  c.policy_hidden = j.value("policy_hidden", c.policy_hidden);
  if (j.contains("bc")) j.at("bc").get_to(c.bc);
  c.critic_hidden = j.value("critic_hidden", c.critic_hidden);
  if (j.contains("critic")) j.at("critic").get_to(c.critic);
  if (j.contains("sampler")) j.at("sampler").get_to(c.sampler);
  c.mix_ratio = j.value("mix_ratio", c.mix_ratio);
  c.refinement_rounds = j.value("refinement_rounds", c.refinement_rounds);
  c.fine_tune = j.value("fine_tune", c.fine_tune);
  c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
  c.eval_perturbation = j.value("eval_perturbation", c.eval_perturbation);
  c.ablation_volume = j.value("ablation_volume", c.ablation_volume);
  c.sweep_ratios = j.value("sweep_ratios", c.sweep_ratios);
  c.family_seed = j.value("family_seed", c.family_seed);
  c.family_size = j.value("family_size", c.family_size);
  c.cross_sources = j.value("cross_sources", c.cross_sources);
  c.cross_mix_ratio = j.value("cross_mix_ratio", c.cross_mix_ratio);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    j.get_to(cfg);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return cfg;
}

inline void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path);
  f << nlohmann::json(cfg).dump(2) << '\n';
}

/// Apply one `key.path=value` override onto the config's JSON form.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("empty key in override: " + assignment);
    if (dot == std::string::npos) {
      nlohmann::json value;
      try {
        value = nlohmann::json::parse(raw);
      } catch (const nlohmann::json::parse_error&) {
        value = raw;  // unquoted strings pass through verbatim
      }
      (*node)[key] = std::move(value);
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

inline ExperimentConfig with_overrides(const ExperimentConfig& base,
                                       const std::vector<std::string>& overrides) {
  nlohmann::json j = base;
  for (const auto& o : overrides) apply_override(j, o);
  ExperimentConfig cfg;
  try {
    j.get_to(cfg);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad override value: ") + e.what());
  }
  return cfg;
}

/// Canonical config hash (keys are emitted sorted, so the hash is stable).
inline std::string config_hash(const ExperimentConfig& cfg) {
  return hex64(fnv1a64(nlohmann::json(cfg).dump()));
}

}  // namespace resample
