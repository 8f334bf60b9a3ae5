#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "resample/errors.hpp"
#include "resample/rng.hpp"

namespace resample {

enum class Provenance { Demo, Rollout, Exploratory };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::Demo: return "demo";
    case Provenance::Rollout: return "rollout";
    case Provenance::Exploratory: return "exploratory";
  }
  return "demo";
}

inline Provenance provenance_from_string(const std::string& s) {
  if (s == "demo") return Provenance::Demo;
  if (s == "rollout") return Provenance::Rollout;
  if (s == "exploratory") return Provenance::Exploratory;
  throw InvalidArgumentError("unknown provenance: " + s);
}

struct Step {
  std::vector<double> state;
  std::vector<double> action;
  double reward = 0.0;
  bool done = false;
  double v_mc = 0.0;  // discounted return-to-go, filled by annotate_returns
};

struct Trajectory {
  std::vector<Step> steps;
  Provenance provenance = Provenance::Demo;
  bool succeeded = false;
  std::vector<int> intervention_indices;
  bool annotated = false;

  void validate() const {
    if (steps.empty()) throw InvalidArgumentError("empty trajectory");
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (steps[i].done != (i + 1 == steps.size()))
        throw InvalidArgumentError("done must be set exactly on the final step");
      if (annotated && (steps[i].v_mc < 0.0 || steps[i].v_mc > 1.0 + 1e-12))
        throw InvalidArgumentError("v_mc out of [0,1]");
    }
    if (succeeded != (steps.back().reward == 1.0))
      throw InvalidArgumentError("succeeded flag inconsistent with final reward");
    if (!intervention_indices.empty() && provenance != Provenance::Exploratory)
      throw InvalidArgumentError("intervention indices on a non-exploratory trajectory");
    for (std::size_t i = 0; i < intervention_indices.size(); ++i) {
      const int idx = intervention_indices[i];
      if (idx < 0 || idx >= static_cast<int>(steps.size()))
        throw InvalidArgumentError("intervention index out of range");
      if (i > 0 && intervention_indices[i - 1] >= idx)
        throw InvalidArgumentError("intervention indices must be strictly increasing");
    }
  }
};

/// Fill v_mc with the discounted return-to-go by backward recursion.
/// Idempotent: re-annotating with the same gamma is a fixed point.
inline Trajectory annotate_returns(Trajectory traj, double gamma) {
  if (traj.steps.empty()) throw InvalidArgumentError("cannot annotate an empty trajectory");
  if (gamma <= 0.0 || gamma > 1.0) throw InvalidArgumentError("gamma must lie in (0,1]");
  double acc = 0.0;
  for (std::size_t i = traj.steps.size(); i-- > 0;) {
    acc = traj.steps[i].reward + gamma * acc;
    traj.steps[i].v_mc = acc;
  }
  traj.annotated = true;
  return traj;
}

/// Immutable-after-sealing trajectory store. All trajectories share state
/// and action dimensionality; invariants are validated at seal time.
class Dataset {
public:
  Dataset() = default;
  Dataset(std::string env_spec_id, int state_dim, int action_dim)
      : env_spec_id_(std::move(env_spec_id)), state_dim_(state_dim), action_dim_(action_dim) {}

  const std::string& env_spec_id() const { return env_spec_id_; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  bool sealed() const { return sealed_; }
  std::optional<double> gamma() const { return gamma_; }
  const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  std::size_t size() const { return trajectories_.size(); }
  bool empty() const { return trajectories_.empty(); }

  std::size_t step_count() const {
    std::size_t n = 0;
    for (const auto& t : trajectories_) n += t.steps.size();
    return n;
  }

  void add(Trajectory traj) {
    if (sealed_) throw UsageError("dataset is sealed");
    for (const auto& s : traj.steps)
      if (static_cast<int>(s.state.size()) != state_dim_ ||
          static_cast<int>(s.action.size()) != action_dim_)
        throw InvalidArgumentError("trajectory dimensionality mismatch");
    trajectories_.push_back(std::move(traj));
  }

  /// Validates every trajectory and freezes the dataset. gamma records the
  /// discount used for v_mc annotation (absent for unannotated data).
  void seal(std::optional<double> gamma = std::nullopt) {
    if (sealed_) return;
    for (const auto& t : trajectories_) {
      t.validate();
      if (gamma.has_value() != t.annotated)
        throw InvalidArgumentError("annotation state inconsistent with gamma argument");
    }
    gamma_ = gamma;
    sealed_ = true;
  }

  bool operator==(const Dataset& o) const {
    if (env_spec_id_ != o.env_spec_id_ || state_dim_ != o.state_dim_ ||
        action_dim_ != o.action_dim_ || gamma_ != o.gamma_ ||
        trajectories_.size() != o.trajectories_.size())
      return false;
    for (std::size_t i = 0; i < trajectories_.size(); ++i) {
      const Trajectory &a = trajectories_[i], &b = o.trajectories_[i];
      if (a.provenance != b.provenance || a.succeeded != b.succeeded ||
          a.intervention_indices != b.intervention_indices || a.annotated != b.annotated ||
          a.steps.size() != b.steps.size())
        return false;
      for (std::size_t j = 0; j < a.steps.size(); ++j) {
        const Step &x = a.steps[j], &y = b.steps[j];
        if (x.state != y.state || x.action != y.action || x.reward != y.reward ||
            x.done != y.done || x.v_mc != y.v_mc)
          return false;
      }
    }
    return true;
  }

private:
  std::string env_spec_id_ = "unknown";
  int state_dim_ = 0;
  int action_dim_ = 0;
  std::vector<Trajectory> trajectories_;
  std::optional<double> gamma_;
  bool sealed_ = false;
};

/// Ratio-controlled mixing: the source is kept in full; augmented
/// trajectories are drawn (without replacement when the pool suffices, with
/// replacement otherwise) so their share of the output multiset is within
/// one trajectory of `ratio`.
inline Dataset mix(const Dataset& source, const Dataset& augmented, double ratio, Rng& rng) {
  if (ratio < 0.0 || ratio >= 1.0) throw InvalidArgumentError("mix ratio must lie in [0,1)");
  if (source.state_dim() != augmented.state_dim() ||
      source.action_dim() != augmented.action_dim())
    if (ratio > 0.0) throw InvalidArgumentError("mix: dimensionality mismatch");
  if (ratio > 0.0 && source.gamma() != augmented.gamma())
    throw InvalidArgumentError("mix: datasets disagree on the v_mc discount");

  Dataset out(source.env_spec_id(), source.state_dim(), source.action_dim());
  for (const auto& t : source.trajectories()) out.add(t);
  if (ratio > 0.0) {
    if (augmented.empty())
      throw InvalidArgumentError("mix: positive ratio with an empty augmented pool");
    const double n_source = static_cast<double>(source.size());
    const auto n_draw =
        static_cast<std::size_t>(std::llround(ratio * n_source / (1.0 - ratio)));
    const std::size_t pool = augmented.size();
    if (n_draw <= pool) {
      // Partial Fisher-Yates for a without-replacement sample.
      std::vector<std::size_t> idx(pool);
      for (std::size_t i = 0; i < pool; ++i) idx[i] = i;
      for (std::size_t i = 0; i < n_draw; ++i) {
        std::swap(idx[i], idx[i + rng.index(pool - i)]);
        out.add(augmented.trajectories()[idx[i]]);
      }
    } else {
      for (std::size_t i = 0; i < n_draw; ++i)
        out.add(augmented.trajectories()[rng.index(pool)]);
    }
  }
  out.seal(source.gamma());
  return out;
}

/// Asymmetric refinement split: the policy retrains only on successful
/// exploratory rollouts (recovery demonstrations); the critic sees all
/// outcomes, successes and failures alike.
inline std::pair<std::vector<Trajectory>, std::vector<Trajectory>> filter_recoveries(
    const std::vector<Trajectory>& rollouts) {
  std::vector<Trajectory> policy_set, critic_set;
  for (const auto& t : rollouts) {
    if (t.provenance == Provenance::Exploratory && t.succeeded) policy_set.push_back(t);
    critic_set.push_back(t);
  }
  return {std::move(policy_set), std::move(critic_set)};
}

}  // namespace resample
