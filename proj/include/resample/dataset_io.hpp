#pragma once

#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "resample/dataset.hpp"
#include "resample/errors.hpp"

namespace resample {

// Newline-delimited dataset files: a JSON header line describing version,
// dimensions and the v_mc discount, then one JSON trajectory per line.
// Doubles survive the round trip exactly (shortest-round-trip printing).

inline constexpr int kDatasetVersion = 1;

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path);
  nlohmann::json header{{"format", "resample-dataset"},
                        {"version", kDatasetVersion},
                        {"env_spec_id", ds.env_spec_id()},
                        {"state_dim", ds.state_dim()},
                        {"action_dim", ds.action_dim()},
                        {"trajectory_count", ds.size()}};
  if (ds.gamma())
    header["gamma"] = *ds.gamma();
  else
    header["gamma"] = nullptr;
  f << header.dump() << '\n';
  for (const auto& t : ds.trajectories()) {
    nlohmann::json j{{"provenance", to_string(t.provenance)},
                     {"succeeded", t.succeeded},
                     {"intervention_indices", t.intervention_indices}};
    nlohmann::json states = nlohmann::json::array(), actions = nlohmann::json::array(),
                   rewards = nlohmann::json::array(), dones = nlohmann::json::array(),
                   v_mcs = nlohmann::json::array();
    for (const auto& s : t.steps) {
      states.push_back(s.state);
      actions.push_back(s.action);
      rewards.push_back(s.reward);
      dones.push_back(s.done);
      if (t.annotated) v_mcs.push_back(s.v_mc);
    }
    j["state"] = std::move(states);
    j["action"] = std::move(actions);
    j["reward"] = std::move(rewards);
    j["done"] = std::move(dones);
    if (t.annotated) j["v_mc"] = std::move(v_mcs);
    f << j.dump() << '\n';
  }
  if (!f) throw Error("write failed: " + path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open for reading: " + path);
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(f, line)) throw FormatError("missing dataset header", 0);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("bad dataset header: ") + e.what(), offset + e.byte - 1);
  }
  if (header.value("format", "") != "resample-dataset")
    throw FormatError("not a resample dataset file", 0);
  const int version = header.value("version", -1);
  if (version != kDatasetVersion)
    throw FormatError("dataset version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kDatasetVersion) + ")",
                      0);
  Dataset ds(header.at("env_spec_id").get<std::string>(), header.at("state_dim").get<int>(),
             header.at("action_dim").get<int>());
  std::optional<double> gamma;
  if (!header.at("gamma").is_null()) gamma = header.at("gamma").get<double>();
  const auto expected = header.at("trajectory_count").get<std::size_t>();
  offset += line.size() + 1;

  for (std::size_t rec = 0; rec < expected; ++rec) {
    if (!std::getline(f, line) || line.empty())
      throw FormatError("file truncated: expected " + std::to_string(expected) +
                            " trajectories, found " + std::to_string(rec),
                        offset);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError("file truncated or corrupt in record " + std::to_string(rec),
                        offset + e.byte - 1);
    }
    try {
      Trajectory t;
      t.provenance = provenance_from_string(j.at("provenance").get<std::string>());
      t.succeeded = j.at("succeeded").get<bool>();
      t.intervention_indices = j.at("intervention_indices").get<std::vector<int>>();
      const auto& states = j.at("state");
      const auto& actions = j.at("action");
      const auto& rewards = j.at("reward");
      const auto& dones = j.at("done");
      const bool annotated = j.contains("v_mc");
      if (annotated != gamma.has_value())
        throw FormatError("annotation inconsistent with header gamma", offset);
      t.annotated = annotated;
      const std::size_t n = states.size();
      if (actions.size() != n || rewards.size() != n || dones.size() != n ||
          (annotated && j.at("v_mc").size() != n))
        throw FormatError("ragged trajectory record " + std::to_string(rec), offset);
      t.steps.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        t.steps[i].state = states[i].get<std::vector<double>>();
        t.steps[i].action = actions[i].get<std::vector<double>>();
        t.steps[i].reward = rewards[i].get<double>();
        t.steps[i].done = dones[i].get<bool>();
        if (annotated) t.steps[i].v_mc = j.at("v_mc")[i].get<double>();
      }
      ds.add(std::move(t));
    } catch (const FormatError&) {
      throw;
    } catch (const std::exception& e) {
      throw FormatError("corrupt trajectory record " + std::to_string(rec) + ": " + e.what(),
                        offset);
    }
    offset += line.size() + 1;
  }
  ds.seal(gamma);
  return ds;
}

}  // namespace resample
