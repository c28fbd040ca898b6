#pragma once

// Experiment configuration: one keyed json document covering every pipeline
// stage, overridable from the environment, hashed for artifact lineage.
// Artifacts produced under one configuration refuse to feed a run under
// another; the lineage hash covers only the stages that shape an artifact's
// content, so downstream knobs (selection thresholds, campaign scale) can
// change without invalidating a trained model.

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "baygds/active_learning.hpp"
#include "baygds/common.hpp"
#include "baygds/features.hpp"
#include "baygds/oracle.hpp"
#include "baygds/selection.hpp"
#include "baygds/surrogate.hpp"

extern "C" char** environ;

namespace baygds {

struct PoolSection {
  int count = 2000;
  int size = 32;
  std::uint64_t seed = 1;
};

struct FeaturesSection {
  int n_z = 8;
};

struct ScheduleSection {
  int n_increments = 20;
  double beta_deg = 0.0;
};

struct OracleSection {
  std::string mode = "synthetic";  // synthetic | subprocess | directory
  std::uint64_t seed = 99;
  double noise = 1e-2;
  double mismatch = 0.0;
  std::string command;  // subprocess mode: whitespace-separated argv
  std::string dir;      // directory mode: exchange directory
  int timeout_ms = 10000;
  int poll_ms = 5;
};

struct SurrogateSection {
  int n_r = 3;
  int mc_samples = 64;
  int train_steps = 1500;
  int restart_period = 500;
  int retrain_steps = 1500;
  int retrain_restart = 500;
  double lr_max = 0.05;
  double lr_min = 1e-4;
  int elbo_window = 20;
  std::uint64_t seed = 3;
};

struct ActiveLearningSection {
  int initial_labels = 10;
  int holdout = 500;
  int t_max = 230;
  double epsilon = 1e-3;
  int window = 5;
  int batch = 1;
  int candidate_cap = 0;
  int checkpoint_every = 0;
  std::string partition = "lhs";
  std::string acquisition = "variance";
  std::uint64_t seed = 11;
};

struct SelectionSection {
  double eta = 0.05;
  int e_max = 50;
  int mc_samples = 64;
  bool point_mode = false;
  bool exclude_training = false;
  int shortlist_size = 0;
  double weight_11 = 1.0;
  double weight_22 = 1.0;
  double weight_12 = 1.0;
  std::uint64_t seed = 17;
};

struct CampaignSection {
  int n_targets = 100;
  double beta_deg = 45.0;
  std::vector<int> checkpoints{1, 5, 10, 20, 50};
  std::vector<std::string> combos{"11", "22", "12", "11-22", "11-12", "22-12", "11-22-12"};
  int jobs = 1;
  std::uint64_t seed = 2026;
};

struct ExperimentConfig {
  PoolSection pool;
  FeaturesSection features;
  ScheduleSection schedule;
  OracleSection oracle;
  SurrogateSection surrogate;
  ActiveLearningSection active_learning;
  SelectionSection selection;
  CampaignSection campaign;
};

// ------------------------------------------------------------------ (de)ser --

namespace detail {

inline nlohmann::json pool_json(const PoolSection& s) {
  return {{"count", s.count}, {"size", s.size}, {"seed", s.seed}};
}
inline nlohmann::json features_json(const FeaturesSection& s) { return {{"n_z", s.n_z}}; }
inline nlohmann::json schedule_json(const ScheduleSection& s) {
  return {{"n_increments", s.n_increments}, {"beta_deg", s.beta_deg}};
}
inline nlohmann::json oracle_json(const OracleSection& s) {
  return {{"mode", s.mode},         {"seed", s.seed},
          {"noise", s.noise},       {"mismatch", s.mismatch},
          {"command", s.command},   {"dir", s.dir},
          {"timeout_ms", s.timeout_ms}, {"poll_ms", s.poll_ms}};
}
inline nlohmann::json surrogate_json(const SurrogateSection& s) {
  return {{"n_r", s.n_r},
          {"mc_samples", s.mc_samples},
          {"train_steps", s.train_steps},
          {"restart_period", s.restart_period},
          {"retrain_steps", s.retrain_steps},
          {"retrain_restart", s.retrain_restart},
          {"lr_max", s.lr_max},
          {"lr_min", s.lr_min},
          {"elbo_window", s.elbo_window},
          {"seed", s.seed}};
}
inline nlohmann::json active_json(const ActiveLearningSection& s) {
  return {{"initial_labels", s.initial_labels},
          {"holdout", s.holdout},
          {"t_max", s.t_max},
          {"epsilon", s.epsilon},
          {"window", s.window},
          {"batch", s.batch},
          {"candidate_cap", s.candidate_cap},
          {"checkpoint_every", s.checkpoint_every},
          {"partition", s.partition},
          {"acquisition", s.acquisition},
          {"seed", s.seed}};
}
inline nlohmann::json selection_json(const SelectionSection& s) {
  return {{"eta", s.eta},
          {"e_max", s.e_max},
          {"mc_samples", s.mc_samples},
          {"point_mode", s.point_mode},
          {"exclude_training", s.exclude_training},
          {"shortlist_size", s.shortlist_size},
          {"weight_11", s.weight_11},
          {"weight_22", s.weight_22},
          {"weight_12", s.weight_12},
          {"seed", s.seed}};
}
inline nlohmann::json campaign_json(const CampaignSection& s) {
  return {{"n_targets", s.n_targets}, {"beta_deg", s.beta_deg},
          {"checkpoints", s.checkpoints}, {"combos", s.combos},
          {"jobs", s.jobs},           {"seed", s.seed}};
}

template <class T>
inline void read_key(const nlohmann::json& j, const char* key, T& out,
                     const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw config_error("config: " + where + "." + key + " has the wrong type");
  }
}

inline void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known,
                           const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw config_error("config: unknown key " + where + "." + key);
  }
}

}  // namespace detail

inline nlohmann::json config_json(const ExperimentConfig& c) {
  return {{"pool", detail::pool_json(c.pool)},
          {"features", detail::features_json(c.features)},
          {"schedule", detail::schedule_json(c.schedule)},
          {"oracle", detail::oracle_json(c.oracle)},
          {"surrogate", detail::surrogate_json(c.surrogate)},
          {"active_learning", detail::active_json(c.active_learning)},
          {"selection", detail::selection_json(c.selection)},
          {"campaign", detail::campaign_json(c.campaign)}};
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw config_error("config: document must be a json object");
  detail::reject_unknown(j, {"pool", "features", "schedule", "oracle", "surrogate",
                             "active_learning", "selection", "campaign"},
                         "top level");
  ExperimentConfig c;
  using detail::read_key;
  using detail::reject_unknown;
  if (j.contains("pool")) {
    const auto& s = j.at("pool");
    reject_unknown(s, {"count", "size", "seed"}, "pool");
    read_key(s, "count", c.pool.count, "pool");
    read_key(s, "size", c.pool.size, "pool");
    read_key(s, "seed", c.pool.seed, "pool");
  }
  if (j.contains("features")) {
    const auto& s = j.at("features");
    reject_unknown(s, {"n_z"}, "features");
    read_key(s, "n_z", c.features.n_z, "features");
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    reject_unknown(s, {"n_increments", "beta_deg"}, "schedule");
    read_key(s, "n_increments", c.schedule.n_increments, "schedule");
    read_key(s, "beta_deg", c.schedule.beta_deg, "schedule");
  }
  if (j.contains("oracle")) {
    const auto& s = j.at("oracle");
    reject_unknown(s, {"mode", "seed", "noise", "mismatch", "command", "dir", "timeout_ms",
                       "poll_ms"},
                   "oracle");
    read_key(s, "mode", c.oracle.mode, "oracle");
    read_key(s, "seed", c.oracle.seed, "oracle");
    read_key(s, "noise", c.oracle.noise, "oracle");
    read_key(s, "mismatch", c.oracle.mismatch, "oracle");
    read_key(s, "command", c.oracle.command, "oracle");
    read_key(s, "dir", c.oracle.dir, "oracle");
    read_key(s, "timeout_ms", c.oracle.timeout_ms, "oracle");
    read_key(s, "poll_ms", c.oracle.poll_ms, "oracle");
  }
  if (j.contains("surrogate")) {
    const auto& s = j.at("surrogate");
    reject_unknown(s, {"n_r", "mc_samples", "train_steps", "restart_period", "retrain_steps",
                       "retrain_restart", "lr_max", "lr_min", "elbo_window", "seed"},
                   "surrogate");
    read_key(s, "n_r", c.surrogate.n_r, "surrogate");
    read_key(s, "mc_samples", c.surrogate.mc_samples, "surrogate");
    read_key(s, "train_steps", c.surrogate.train_steps, "surrogate");
    read_key(s, "restart_period", c.surrogate.restart_period, "surrogate");
    read_key(s, "retrain_steps", c.surrogate.retrain_steps, "surrogate");
    read_key(s, "retrain_restart", c.surrogate.retrain_restart, "surrogate");
    read_key(s, "lr_max", c.surrogate.lr_max, "surrogate");
    read_key(s, "lr_min", c.surrogate.lr_min, "surrogate");
    read_key(s, "elbo_window", c.surrogate.elbo_window, "surrogate");
    read_key(s, "seed", c.surrogate.seed, "surrogate");
  }
  if (j.contains("active_learning")) {
    const auto& s = j.at("active_learning");
    reject_unknown(s, {"initial_labels", "holdout", "t_max", "epsilon", "window", "batch",
                       "candidate_cap", "checkpoint_every", "partition", "acquisition", "seed"},
                   "active_learning");
    read_key(s, "initial_labels", c.active_learning.initial_labels, "active_learning");
    read_key(s, "holdout", c.active_learning.holdout, "active_learning");
    read_key(s, "t_max", c.active_learning.t_max, "active_learning");
    read_key(s, "epsilon", c.active_learning.epsilon, "active_learning");
    read_key(s, "window", c.active_learning.window, "active_learning");
    read_key(s, "batch", c.active_learning.batch, "active_learning");
    read_key(s, "candidate_cap", c.active_learning.candidate_cap, "active_learning");
    read_key(s, "checkpoint_every", c.active_learning.checkpoint_every, "active_learning");
    read_key(s, "partition", c.active_learning.partition, "active_learning");
    read_key(s, "acquisition", c.active_learning.acquisition, "active_learning");
    read_key(s, "seed", c.active_learning.seed, "active_learning");
  }
  if (j.contains("selection")) {
    const auto& s = j.at("selection");
    reject_unknown(s, {"eta", "e_max", "mc_samples", "point_mode", "exclude_training",
                       "shortlist_size", "weight_11", "weight_22", "weight_12", "seed"},
                   "selection");
    read_key(s, "eta", c.selection.eta, "selection");
    read_key(s, "e_max", c.selection.e_max, "selection");
    read_key(s, "mc_samples", c.selection.mc_samples, "selection");
    read_key(s, "point_mode", c.selection.point_mode, "selection");
    read_key(s, "exclude_training", c.selection.exclude_training, "selection");
    read_key(s, "shortlist_size", c.selection.shortlist_size, "selection");
    read_key(s, "weight_11", c.selection.weight_11, "selection");
    read_key(s, "weight_22", c.selection.weight_22, "selection");
    read_key(s, "weight_12", c.selection.weight_12, "selection");
    read_key(s, "seed", c.selection.seed, "selection");
  }
  if (j.contains("campaign")) {
    const auto& s = j.at("campaign");
    reject_unknown(s, {"n_targets", "beta_deg", "checkpoints", "combos", "jobs", "seed"},
                   "campaign");
    read_key(s, "n_targets", c.campaign.n_targets, "campaign");
    read_key(s, "beta_deg", c.campaign.beta_deg, "campaign");
    read_key(s, "checkpoints", c.campaign.checkpoints, "campaign");
    read_key(s, "combos", c.campaign.combos, "campaign");
    read_key(s, "jobs", c.campaign.jobs, "campaign");
    read_key(s, "seed", c.campaign.seed, "campaign");
  }
  return c;
}

inline void validate_config(const ExperimentConfig& c) {
  if (c.pool.count < 1) throw config_error("config: pool.count must be positive");
  if (c.pool.size < 4) throw config_error("config: pool.size must be at least 4");
  if (c.pool.size % 2 != 0) throw config_error("config: pool.size must be even");
  if (c.features.n_z < 1) throw config_error("config: features.n_z must be positive");
  if (c.schedule.n_increments < 1)
    throw config_error("config: schedule.n_increments must be positive");
  if (c.oracle.mode != "synthetic" && c.oracle.mode != "subprocess" &&
      c.oracle.mode != "directory")
    throw config_error("config: oracle.mode must be synthetic, subprocess or directory");
  if (c.oracle.noise < 0) throw config_error("config: oracle.noise must be nonnegative");
  if (c.oracle.mismatch < 0) throw config_error("config: oracle.mismatch must be nonnegative");
  if (c.oracle.mode == "subprocess" && c.oracle.command.empty())
    throw config_error("config: oracle.command required in subprocess mode");
  if (c.oracle.mode == "directory" && c.oracle.dir.empty())
    throw config_error("config: oracle.dir required in directory mode");
  if (c.oracle.timeout_ms < 1 || c.oracle.poll_ms < 1)
    throw config_error("config: oracle timing values must be positive");
  if (c.surrogate.n_r < 1) throw config_error("config: surrogate.n_r must be positive");
  if (c.surrogate.mc_samples < 2)
    throw config_error("config: surrogate.mc_samples must be at least 2");
  if (c.surrogate.train_steps < 1 || c.surrogate.restart_period < 1 ||
      c.surrogate.retrain_steps < 1 || c.surrogate.retrain_restart < 1)
    throw config_error("config: surrogate step counts must be positive");
  if (!(c.surrogate.lr_max >= c.surrogate.lr_min) || c.surrogate.lr_min <= 0)
    throw config_error("config: surrogate learning rates must satisfy lr_max >= lr_min > 0");
  if (c.surrogate.elbo_window < 1)
    throw config_error("config: surrogate.elbo_window must be positive");
  if (c.active_learning.initial_labels < 2)
    throw config_error("config: active_learning.initial_labels must be at least 2");
  if (c.active_learning.holdout < 1)
    throw config_error("config: active_learning.holdout must be positive");
  if (c.active_learning.t_max < 0)
    throw config_error("config: active_learning.t_max must be nonnegative");
  if (c.active_learning.epsilon < 0)
    throw config_error("config: active_learning.epsilon must be nonnegative");
  if (c.active_learning.window < 1)
    throw config_error("config: active_learning.window must be positive");
  if (c.active_learning.batch < 1)
    throw config_error("config: active_learning.batch must be positive");
  if (c.active_learning.candidate_cap < 0 || c.active_learning.checkpoint_every < 0)
    throw config_error("config: active_learning caps must be nonnegative");
  try {
    partition_from_name(c.active_learning.partition);
    acquisition_from_name(c.active_learning.acquisition);
  } catch (const user_error& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  if (c.selection.eta <= 0) throw config_error("config: selection.eta must be positive");
  if (c.selection.e_max < 1) throw config_error("config: selection.e_max must be positive");
  if (c.selection.mc_samples < 1)
    throw config_error("config: selection.mc_samples must be positive");
  if (c.selection.shortlist_size < 0)
    throw config_error("config: selection.shortlist_size must be nonnegative");
  if (c.selection.weight_11 < 0 || c.selection.weight_22 < 0 || c.selection.weight_12 < 0 ||
      c.selection.weight_11 + c.selection.weight_22 + c.selection.weight_12 <= 0)
    throw config_error("config: selection weights must be nonnegative with positive sum");
  if (c.campaign.n_targets < 1)
    throw config_error("config: campaign.n_targets must be positive");
  if (c.campaign.checkpoints.empty())
    throw config_error("config: campaign.checkpoints must not be empty");
  for (std::size_t i = 0; i < c.campaign.checkpoints.size(); ++i) {
    if (c.campaign.checkpoints[i] < 1)
      throw config_error("config: campaign.checkpoints must be positive");
    if (i > 0 && c.campaign.checkpoints[i] <= c.campaign.checkpoints[i - 1])
      throw config_error("config: campaign.checkpoints must increase strictly");
  }
  if (c.campaign.combos.empty()) throw config_error("config: campaign.combos must not be empty");
  try {
    for (const auto& name : c.campaign.combos) combo_from_name(name);
  } catch (const user_error& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  if (c.campaign.jobs < 1) throw config_error("config: campaign.jobs must be positive");
}

// ----------------------------------------------------------- env overrides --

namespace detail {

inline std::uint64_t parse_u64(const std::string& s) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos != s.size()) throw format_error("trailing characters in integer: " + s);
    return v;
  } catch (const std::exception&) {
    throw config_error("config: not an unsigned integer: " + s);
  }
}

inline bool parse_bool(const std::string& s) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw config_error("config: not a boolean (use 0/1/true/false): " + s);
}

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (const auto& part : split_csv_row(s)) out.push_back(static_cast<int>(parse_long(part)));
  return out;
}

inline std::vector<std::string> parse_string_list(const std::string& s) {
  return split_csv_row(s);
}

}  // namespace detail

namespace detail {

struct ConfigKey {
  const char* name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

inline const std::vector<ConfigKey>& config_setters() {
  static const std::vector<ConfigKey> keys = {
      {"POOL_COUNT", [](ExperimentConfig& c2, const std::string& v) { c2.pool.count = static_cast<int>(parse_long(v)); }},
      {"POOL_SIZE", [](ExperimentConfig& c2, const std::string& v) { c2.pool.size = static_cast<int>(parse_long(v)); }},
      {"POOL_SEED", [](ExperimentConfig& c2, const std::string& v) { c2.pool.seed = detail::parse_u64(v); }},
      {"FEATURES_N_Z", [](ExperimentConfig& c2, const std::string& v) { c2.features.n_z = static_cast<int>(parse_long(v)); }},
      {"SCHEDULE_N_INCREMENTS", [](ExperimentConfig& c2, const std::string& v) { c2.schedule.n_increments = static_cast<int>(parse_long(v)); }},
      {"SCHEDULE_BETA_DEG", [](ExperimentConfig& c2, const std::string& v) { c2.schedule.beta_deg = parse_double(v); }},
      {"ORACLE_MODE", [](ExperimentConfig& c2, const std::string& v) { c2.oracle.mode = v; }},
      {"ORACLE_SEED", [](ExperimentConfig& c2, const std::string& v) { c2.oracle.seed = detail::parse_u64(v); }},
      {"ORACLE_NOISE", [](ExperimentConfig& c2, const std::string& v) { c2.oracle.noise = parse_double(v); }},
      {"ORACLE_MISMATCH", [](ExperimentConfig& c2, const std::string& v) { c2.oracle.mismatch = parse_double(v); }},
      {"ORACLE_COMMAND", [](ExperimentConfig& c2, const std::string& v) { c2.oracle.command = v; }},
      {"ORACLE_DIR", [](ExperimentConfig& c2, const std::string& v) { c2.oracle.dir = v; }},
      {"ORACLE_TIMEOUT_MS", [](ExperimentConfig& c2, const std::string& v) { c2.oracle.timeout_ms = static_cast<int>(parse_long(v)); }},
      {"ORACLE_POLL_MS", [](ExperimentConfig& c2, const std::string& v) { c2.oracle.poll_ms = static_cast<int>(parse_long(v)); }},
      {"SURROGATE_N_R", [](ExperimentConfig& c2, const std::string& v) { c2.surrogate.n_r = static_cast<int>(parse_long(v)); }},
      {"SURROGATE_MC_SAMPLES", [](ExperimentConfig& c2, const std::string& v) { c2.surrogate.mc_samples = static_cast<int>(parse_long(v)); }},
      {"SURROGATE_TRAIN_STEPS", [](ExperimentConfig& c2, const std::string& v) { c2.surrogate.train_steps = static_cast<int>(parse_long(v)); }},
      {"SURROGATE_RESTART_PERIOD", [](ExperimentConfig& c2, const std::string& v) { c2.surrogate.restart_period = static_cast<int>(parse_long(v)); }},
      {"SURROGATE_RETRAIN_STEPS", [](ExperimentConfig& c2, const std::string& v) { c2.surrogate.retrain_steps = static_cast<int>(parse_long(v)); }},
      {"SURROGATE_RETRAIN_RESTART", [](ExperimentConfig& c2, const std::string& v) { c2.surrogate.retrain_restart = static_cast<int>(parse_long(v)); }},
      {"SURROGATE_LR_MAX", [](ExperimentConfig& c2, const std::string& v) { c2.surrogate.lr_max = parse_double(v); }},
      {"SURROGATE_LR_MIN", [](ExperimentConfig& c2, const std::string& v) { c2.surrogate.lr_min = parse_double(v); }},
      {"SURROGATE_ELBO_WINDOW", [](ExperimentConfig& c2, const std::string& v) { c2.surrogate.elbo_window = static_cast<int>(parse_long(v)); }},
      {"SURROGATE_SEED", [](ExperimentConfig& c2, const std::string& v) { c2.surrogate.seed = detail::parse_u64(v); }},
      {"ACTIVE_LEARNING_INITIAL_LABELS", [](ExperimentConfig& c2, const std::string& v) { c2.active_learning.initial_labels = static_cast<int>(parse_long(v)); }},
      {"ACTIVE_LEARNING_HOLDOUT", [](ExperimentConfig& c2, const std::string& v) { c2.active_learning.holdout = static_cast<int>(parse_long(v)); }},
      {"ACTIVE_LEARNING_T_MAX", [](ExperimentConfig& c2, const std::string& v) { c2.active_learning.t_max = static_cast<int>(parse_long(v)); }},
      {"ACTIVE_LEARNING_EPSILON", [](ExperimentConfig& c2, const std::string& v) { c2.active_learning.epsilon = parse_double(v); }},
      {"ACTIVE_LEARNING_WINDOW", [](ExperimentConfig& c2, const std::string& v) { c2.active_learning.window = static_cast<int>(parse_long(v)); }},
      {"ACTIVE_LEARNING_BATCH", [](ExperimentConfig& c2, const std::string& v) { c2.active_learning.batch = static_cast<int>(parse_long(v)); }},
      {"ACTIVE_LEARNING_CANDIDATE_CAP", [](ExperimentConfig& c2, const std::string& v) { c2.active_learning.candidate_cap = static_cast<int>(parse_long(v)); }},
      {"ACTIVE_LEARNING_CHECKPOINT_EVERY", [](ExperimentConfig& c2, const std::string& v) { c2.active_learning.checkpoint_every = static_cast<int>(parse_long(v)); }},
      {"ACTIVE_LEARNING_PARTITION", [](ExperimentConfig& c2, const std::string& v) { c2.active_learning.partition = v; }},
      {"ACTIVE_LEARNING_ACQUISITION", [](ExperimentConfig& c2, const std::string& v) { c2.active_learning.acquisition = v; }},
      {"ACTIVE_LEARNING_SEED", [](ExperimentConfig& c2, const std::string& v) { c2.active_learning.seed = detail::parse_u64(v); }},
      {"SELECTION_ETA", [](ExperimentConfig& c2, const std::string& v) { c2.selection.eta = parse_double(v); }},
      {"SELECTION_E_MAX", [](ExperimentConfig& c2, const std::string& v) { c2.selection.e_max = static_cast<int>(parse_long(v)); }},
      {"SELECTION_MC_SAMPLES", [](ExperimentConfig& c2, const std::string& v) { c2.selection.mc_samples = static_cast<int>(parse_long(v)); }},
      {"SELECTION_POINT_MODE", [](ExperimentConfig& c2, const std::string& v) { c2.selection.point_mode = detail::parse_bool(v); }},
      {"SELECTION_EXCLUDE_TRAINING", [](ExperimentConfig& c2, const std::string& v) { c2.selection.exclude_training = detail::parse_bool(v); }},
      {"SELECTION_SHORTLIST_SIZE", [](ExperimentConfig& c2, const std::string& v) { c2.selection.shortlist_size = static_cast<int>(parse_long(v)); }},
      {"SELECTION_WEIGHT_11", [](ExperimentConfig& c2, const std::string& v) { c2.selection.weight_11 = parse_double(v); }},
      {"SELECTION_WEIGHT_22", [](ExperimentConfig& c2, const std::string& v) { c2.selection.weight_22 = parse_double(v); }},
      {"SELECTION_WEIGHT_12", [](ExperimentConfig& c2, const std::string& v) { c2.selection.weight_12 = parse_double(v); }},
      {"SELECTION_SEED", [](ExperimentConfig& c2, const std::string& v) { c2.selection.seed = detail::parse_u64(v); }},
      {"CAMPAIGN_N_TARGETS", [](ExperimentConfig& c2, const std::string& v) { c2.campaign.n_targets = static_cast<int>(parse_long(v)); }},
      {"CAMPAIGN_BETA_DEG", [](ExperimentConfig& c2, const std::string& v) { c2.campaign.beta_deg = parse_double(v); }},
      {"CAMPAIGN_CHECKPOINTS", [](ExperimentConfig& c2, const std::string& v) { c2.campaign.checkpoints = detail::parse_int_list(v); }},
      {"CAMPAIGN_COMBOS", [](ExperimentConfig& c2, const std::string& v) { c2.campaign.combos = detail::parse_string_list(v); }},
      {"CAMPAIGN_JOBS", [](ExperimentConfig& c2, const std::string& v) { c2.campaign.jobs = static_cast<int>(parse_long(v)); }},
      {"CAMPAIGN_SEED", [](ExperimentConfig& c2, const std::string& v) { c2.campaign.seed = detail::parse_u64(v); }},
  };
  return keys;
}

}  // namespace detail

// Sets one key by its SECTION_KEY name (e.g. "POOL_COUNT"); unknown names and
// malformed values raise config_error.
inline void set_config_key(ExperimentConfig& c, const std::string& name,
                           const std::string& value) {
  for (const auto& key : detail::config_setters()) {
    if (name == key.name) {
      key.set(c, value);
      return;
    }
  }
  throw config_error("config: unknown key " + name);
}

// Accepts the "section.key" spelling used by command-line overrides.
inline void set_config_entry(ExperimentConfig& c, const std::string& entry) {
  const auto eq = entry.find('=');
  if (eq == std::string::npos || eq == 0)
    throw config_error("config: override must look like section.key=value, got " + entry);
  std::string name = entry.substr(0, eq);
  for (auto& ch : name)
    ch = ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  try {
    set_config_key(c, name, entry.substr(eq + 1));
  } catch (const config_error& e) {
    if (std::string(e.what()).find("unknown key") != std::string::npos)
      throw config_error("config: unknown override key " + entry.substr(0, eq));
    throw;
  }
}

// Applies BAYGDS_<SECTION>_<KEY> environment overrides; any BAYGDS_ variable
// that does not name a config key is an error, so typos cannot silently run
// with defaults.
inline void apply_env_overrides(ExperimentConfig& c) {
  for (char** env = environ; env && *env; ++env) {
    const std::string entry(*env);
    if (entry.rfind("BAYGDS_", 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    const std::string name = entry.substr(7, eq - 7);
    try {
      set_config_key(c, name, entry.substr(eq + 1));
    } catch (const config_error& e) {
      if (std::string(e.what()).find("unknown key") != std::string::npos)
        throw config_error("config: unknown environment override BAYGDS_" + name);
      throw;
    }
  }
}

// ------------------------------------------------------------------ hashes --

// Hash of the complete document; changes when any knob changes.
inline std::uint64_t full_config_hash(const ExperimentConfig& c) {
  return fnv1a64(config_json(c).dump());
}

// Hash of the stages that shape artifact content: pool, features, schedule,
// oracle, surrogate, active learning. Selection and campaign knobs may vary
// without orphaning a model.
inline std::uint64_t lineage_hash(const ExperimentConfig& c) {
  const nlohmann::json j = {{"pool", detail::pool_json(c.pool)},
                            {"features", detail::features_json(c.features)},
                            {"schedule", detail::schedule_json(c.schedule)},
                            {"oracle", detail::oracle_json(c.oracle)},
                            {"surrogate", detail::surrogate_json(c.surrogate)},
                            {"active_learning", detail::active_json(c.active_learning)}};
  return fnv1a64(j.dump());
}

inline std::string lineage_hex(const ExperimentConfig& c) {
  return hash_hex(lineage_hash(c));
}

// -------------------------------------------------------------------- io --

inline void save_config(const ExperimentConfig& c, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw user_error("cannot write " + path);
  f << config_json(c).dump(2) << '\n';
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw user_error("cannot read " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(path + ": not valid json: " + e.what());
  }
  return config_from_json(j);
}

// --------------------------------------------------------- lineage plumbing --

// Finds a "lineage=<hex>" token in an artifact's comment header.
inline std::string read_lineage_comment(const std::string& path) {
  for (const auto& line : read_comment_lines(path)) {
    const auto pos = line.find("lineage=");
    if (pos == std::string::npos) continue;
    std::string hex = line.substr(pos + 8);
    const auto end = hex.find_first_of(" \t");
    if (end != std::string::npos) hex.resize(end);
    return hex;
  }
  throw config_error(path + ": no lineage header; rebuild the artifact with this tool");
}

inline void check_lineage(const std::string& path, const ExperimentConfig& c) {
  const auto found = read_lineage_comment(path);
  if (found != lineage_hex(c))
    throw config_error(path + ": built under configuration " + found + " but this run is " +
                       lineage_hex(c) + "; regenerate the artifact or fix the config");
}

// ----------------------------------------------------------- module bridges --

inline SurrogateConfig surrogate_config(const ExperimentConfig& c) {
  SurrogateConfig s;
  s.n_r = c.surrogate.n_r;
  s.mc_samples = c.surrogate.mc_samples;
  s.train_steps = c.surrogate.train_steps;
  s.restart_period = c.surrogate.restart_period;
  s.retrain_steps = c.surrogate.retrain_steps;
  s.retrain_restart = c.surrogate.retrain_restart;
  s.lr_max = c.surrogate.lr_max;
  s.lr_min = c.surrogate.lr_min;
  s.elbo_window = c.surrogate.elbo_window;
  s.seed = c.surrogate.seed;
  return s;
}

inline ActiveLearningConfig active_learning_config(const ExperimentConfig& c) {
  ActiveLearningConfig a;
  a.initial_labels = c.active_learning.initial_labels;
  a.holdout = c.active_learning.holdout;
  a.t_max = c.active_learning.t_max;
  a.epsilon = c.active_learning.epsilon;
  a.window = c.active_learning.window;
  a.batch = c.active_learning.batch;
  a.candidate_cap = c.active_learning.candidate_cap;
  a.checkpoint_every = c.active_learning.checkpoint_every;
  a.partition = partition_from_name(c.active_learning.partition);
  a.acquisition = acquisition_from_name(c.active_learning.acquisition);
  a.seed = c.active_learning.seed;
  return a;
}

inline SelectionConfig selection_config(const ExperimentConfig& c) {
  SelectionConfig s;
  s.mc_samples = c.selection.mc_samples;
  s.seed = c.selection.seed;
  s.point_mode = c.selection.point_mode;
  s.exclude_training = c.selection.exclude_training;
  s.shortlist_size = c.selection.shortlist_size;
  return s;
}

inline ScheduleSpec schedule_spec(const ExperimentConfig& c) {
  return ScheduleSpec{c.schedule.n_increments, c.schedule.beta_deg};
}

inline double component_weight(const SelectionSection& s, StressComponent c) {
  switch (c) {
    case StressComponent::P11: return s.weight_11;
    case StressComponent::P22: return s.weight_22;
    case StressComponent::P12: return s.weight_12;
  }
  throw config_error("component_weight: unknown component");
}

inline SyntheticOracleConfig synthetic_oracle_config(const OracleSection& o) {
  SyntheticOracleConfig s;
  s.seed = o.seed;
  s.noise_std = o.noise;
  s.mismatch_amplitude = o.mismatch;
  return s;
}

// The synthetic oracle borrows the feature table; keep it alive for the
// oracle's lifetime.
inline std::unique_ptr<Oracle> make_oracle(const OracleSection& o,
                                           const FeatureTable& features) {
  if (o.mode == "synthetic")
    return std::make_unique<SyntheticOracle>(features, synthetic_oracle_config(o));
  if (o.mode == "subprocess") {
    std::vector<std::string> argv;
    std::string word;
    for (char ch : o.command) {
      if (ch == ' ' || ch == '\t') {
        if (!word.empty()) argv.push_back(std::move(word));
        word.clear();
      } else {
        word += ch;
      }
    }
    if (!word.empty()) argv.push_back(std::move(word));
    if (argv.empty()) throw config_error("config: oracle.command is empty");
    return std::make_unique<ExternalOracle>(subprocess_transport(argv), "subprocess");
  }
  if (o.mode == "directory")
    return std::make_unique<ExternalOracle>(
        directory_transport(o.dir, o.timeout_ms, o.poll_ms), "directory");
  throw config_error("config: unknown oracle mode " + o.mode);
}

}  // namespace baygds
