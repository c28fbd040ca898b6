#pragma once

// Guided selection from a labeled-or-not candidate pool: the surrogate screens
// every design by its point-estimate mismatch against a target response, a
// shortlist is re-scored with sampled coefficient uncertainty, and the oracle
// verifies candidates in score order until the weighted normalized error meets
// the threshold or the budget runs out. A design is always returned.

#include <Eigen/Dense>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "baygds/common.hpp"
#include "baygds/features.hpp"
#include "baygds/grid.hpp"
#include "baygds/mechanics.hpp"
#include "baygds/oracle.hpp"
#include "baygds/surrogate.hpp"

namespace baygds {

// ------------------------------------------------------------- active sets --

// Compact naming for component subsets, e.g. "11-22" or "11-22-12".
inline std::string combo_name(const std::vector<StressComponent>& combo) {
  if (combo.empty()) throw config_error("combo_name: empty component set");
  std::string out;
  for (std::size_t i = 0; i < combo.size(); ++i) {
    if (i) out += '-';
    out += component_name(combo[i]);
  }
  return out;
}

inline std::vector<StressComponent> combo_from_name(const std::string& name) {
  std::vector<StressComponent> combo;
  std::size_t start = 0;
  while (start <= name.size()) {
    const auto dash = name.find('-', start);
    const auto part = name.substr(start, dash == std::string::npos ? dash : dash - start);
    combo.push_back(component_from_name(part));
    if (dash == std::string::npos) break;
    start = dash + 1;
  }
  for (std::size_t i = 1; i < combo.size(); ++i)
    if (static_cast<int>(combo[i]) <= static_cast<int>(combo[i - 1]))
      throw format_error("combo must list unique components in 11, 22, 12 order: " + name);
  return combo;
}

// All seven non-empty subsets, singletons first, canonical order within each.
inline const std::vector<std::vector<StressComponent>>& all_component_combos() {
  static const std::vector<std::vector<StressComponent>> combos = {
      {StressComponent::P11},
      {StressComponent::P22},
      {StressComponent::P12},
      {StressComponent::P11, StressComponent::P22},
      {StressComponent::P11, StressComponent::P12},
      {StressComponent::P22, StressComponent::P12},
      {StressComponent::P11, StressComponent::P22, StressComponent::P12}};
  return combos;
}

// ------------------------------------------------------------------ target --

struct TargetSpec {
  std::vector<StressComponent> active;  // canonical 11, 22, 12 order
  Eigen::VectorXd weights;              // aligned with active
  double eta = 0.05;                    // aggregated nmae acceptance level
  int e_max = 50;                       // oracle evaluation budget
  ScheduleSpec schedule;
  Eigen::MatrixXd stresses;             // n_states x 3: P11, P22, P12 per state
};

inline void validate_target(const TargetSpec& t) {
  if (t.active.empty()) throw config_error("target: empty active component set");
  for (std::size_t i = 1; i < t.active.size(); ++i)
    if (static_cast<int>(t.active[i]) <= static_cast<int>(t.active[i - 1]))
      throw config_error("target: active components must be unique and ordered 11, 22, 12");
  if (t.weights.size() != static_cast<Eigen::Index>(t.active.size()))
    throw config_error("target: one weight per active component");
  if ((t.weights.array() < 0).any() || t.weights.sum() <= 0)
    throw config_error("target: weights must be nonnegative with positive sum");
  if (t.eta <= 0) throw config_error("target: threshold must be positive");
  if (t.e_max < 1) throw config_error("target: budget must be at least one evaluation");
  if (t.stresses.rows() != t.schedule.n_states() || t.stresses.cols() != 3)
    throw size_error("target: stress table must cover the schedule with three components");
}

inline std::string encode_target(const TargetSpec& t) {
  validate_target(t);
  nlohmann::json j;
  for (auto c : t.active) j["active_components"].push_back(component_name(c));
  for (Eigen::Index i = 0; i < t.weights.size(); ++i) j["weights"].push_back(t.weights[i]);
  j["eta"] = t.eta;
  j["e_max"] = t.e_max;
  j["schedule"] = {{"n_increments", t.schedule.n_increments},
                   {"beta_deg", t.schedule.beta_deg}};
  const auto states = make_schedule(t.schedule);
  for (std::size_t s = 0; s < states.size(); ++s) {
    const auto r = static_cast<Eigen::Index>(s);
    j["states"].push_back({{"path", path_name(states[s].path)},
                           {"h", states[s].h},
                           {"P11", t.stresses(r, 0)},
                           {"P22", t.stresses(r, 1)},
                           {"P12", t.stresses(r, 2)}});
  }
  return j.dump(2);
}

inline TargetSpec decode_target(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("target: not valid json: ") + e.what());
  }
  TargetSpec t;
  try {
    for (const auto& name : j.at("active_components"))
      t.active.push_back(component_from_name(name.get<std::string>()));
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      t.weights.resize(static_cast<Eigen::Index>(w.size()));
      for (std::size_t i = 0; i < w.size(); ++i)
        t.weights[static_cast<Eigen::Index>(i)] = w[i].get<double>();
    } else {
      t.weights = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(t.active.size()));
    }
    t.eta = j.at("eta").get<double>();
    t.e_max = j.at("e_max").get<int>();
    t.schedule.n_increments = j.at("schedule").at("n_increments").get<int>();
    t.schedule.beta_deg = j.at("schedule").at("beta_deg").get<double>();

    const auto states = make_schedule(t.schedule);
    const auto& rows = j.at("states");
    if (rows.size() != states.size())
      throw size_error("target: state count does not match the schedule");
    t.stresses.resize(static_cast<Eigen::Index>(states.size()), 3);
    for (std::size_t s = 0; s < states.size(); ++s) {
      const auto& row = rows[s];
      if (path_from_name(row.at("path").get<std::string>()) != states[s].path ||
          row.at("h").get<int>() != states[s].h)
        throw format_error("target: states must appear in schedule order");
      const auto r = static_cast<Eigen::Index>(s);
      t.stresses(r, 0) = row.at("P11").get<double>();
      t.stresses(r, 1) = row.at("P22").get<double>();
      t.stresses(r, 2) = row.at("P12").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("target: missing or mistyped field: ") + e.what());
  }
  validate_target(t);
  return t;
}

inline void save_target_json(const TargetSpec& t, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw user_error("cannot write " + path);
  f << encode_target(t) << '\n';
}

inline TargetSpec load_target_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw user_error("cannot read " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_target(text);
}

// ---------------------------------------------------------------- mismatch --

// Precomputed linear pieces of the surrogate mismatch for one target.
struct TargetContext {
  std::vector<DeformationState> states;
  Eigen::MatrixXd B;   // maps theta to stacked active components, state-major
  Eigen::VectorXd y;   // target stacked the same way
};

inline TargetContext make_target_context(const std::vector<DeformationState>& states,
                                         const std::vector<StressComponent>& active,
                                         const Eigen::MatrixXd& stresses) {
  if (stresses.rows() != static_cast<Eigen::Index>(states.size()) || stresses.cols() != 3)
    throw size_error("target context: stress table shape mismatch");
  TargetContext ctx;
  ctx.states = states;
  ctx.B = observation_basis(states, active);
  ctx.y.resize(ctx.B.rows());
  const auto n_c = static_cast<Eigen::Index>(active.size());
  for (Eigen::Index s = 0; s < static_cast<Eigen::Index>(states.size()); ++s)
    for (Eigen::Index c = 0; c < n_c; ++c)
      ctx.y[s * n_c + c] = stresses(s, static_cast<Eigen::Index>(active[static_cast<std::size_t>(c)]));
  return ctx;
}

inline TargetContext make_target_context(const TargetSpec& t) {
  validate_target(t);
  return make_target_context(make_schedule(t.schedule), t.active, t.stresses);
}

// Mean squared gap between predicted and target responses over the schedule,
// averaged per state so budgets of different length stay comparable.
inline double surrogate_mismatch(const Eigen::VectorXd& theta, const TargetContext& ctx) {
  return (ctx.B * theta - ctx.y).squaredNorm() / static_cast<double>(ctx.states.size());
}

// --------------------------------------------------------------- screening --

struct ShortlistEntry {
  int id;
  double mismatch;
};

// Ranks the whole candidate table by point-estimate mismatch and keeps the
// best `count`. Ties resolve to the smaller id.
inline std::vector<ShortlistEntry> screen_and_shortlist(const SurrogateModel& model,
                                                        const FeatureTable& features,
                                                        const TargetContext& ctx, int count,
                                                        bool exclude_training = false) {
  std::vector<int> rows;
  for (std::size_t i = 0; i < features.ids.size(); ++i) {
    if (exclude_training &&
        std::find(model.labeled_ids.begin(), model.labeled_ids.end(), features.ids[i]) !=
            model.labeled_ids.end())
      continue;
    rows.push_back(static_cast<int>(i));
  }
  if (count < 1) throw config_error("shortlist: count must be positive");
  if (count > static_cast<int>(rows.size()))
    throw size_error("shortlist: budget exceeds the candidate pool");

  Eigen::MatrixXd Zc(static_cast<Eigen::Index>(rows.size()), features.Z.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    Zc.row(static_cast<Eigen::Index>(i)) = features.Z.row(rows[i]);
  const Eigen::MatrixXd theta = point_theta(model, Zc);

  std::vector<ShortlistEntry> ranked;
  for (std::size_t i = 0; i < rows.size(); ++i)
    ranked.push_back({features.ids[static_cast<std::size_t>(rows[i])],
                      surrogate_mismatch(theta.row(static_cast<Eigen::Index>(i)).transpose(), ctx)});
  std::sort(ranked.begin(), ranked.end(), [](const ShortlistEntry& a, const ShortlistEntry& b) {
    return a.mismatch != b.mismatch ? a.mismatch < b.mismatch : a.id < b.id;
  });
  ranked.resize(static_cast<std::size_t>(count));
  return ranked;
}

// ----------------------------------------------------------------- scoring --

struct ScoredDesign {
  int id;
  double mean;
  double stddev;
  double phi;
};

struct ScoreResult {
  std::vector<ScoredDesign> scored;  // shortlist order
  double lambda = 0;
};

// Exploration weight and scores from per-design mismatch samples. The weight
// is the ratio of the average mean to the average spread across the
// shortlist; with no spread anywhere it collapses to pure exploitation.
inline ScoreResult score_from_mismatch_samples(const std::vector<int>& ids,
                                               const std::vector<Eigen::VectorXd>& samples) {
  if (ids.empty() || ids.size() != samples.size())
    throw size_error("scoring: one sample set per design required");
  ScoreResult out;
  double mean_of_means = 0, mean_of_stds = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& s = samples[i];
    if (s.size() < 1) throw size_error("scoring: empty sample set");
    const double m = s.mean();
    double sd = 0;
    if (s.size() > 1) sd = std::sqrt((s.array() - m).square().sum() / (s.size() - 1));
    out.scored.push_back({ids[i], m, sd, m});
    mean_of_means += m;
    mean_of_stds += sd;
  }
  mean_of_means /= static_cast<double>(ids.size());
  mean_of_stds /= static_cast<double>(ids.size());
  out.lambda = mean_of_stds > 1e-12 ? mean_of_means / mean_of_stds : 0.0;
  for (auto& d : out.scored) d.phi = d.mean + out.lambda * d.stddev;
  return out;
}

// Draws coefficient samples from the predictive marginals of the shortlisted
// designs and scores their mismatch spread. Point mode skips the draw and
// scores the softplus mean alone.
inline ScoreResult uncertainty_score(const SurrogateModel& model, const FeatureTable& features,
                                     const std::vector<int>& ids, const TargetContext& ctx,
                                     int samples, std::uint64_t seed, bool point_mode = false) {
  if (ids.empty()) throw size_error("scoring: empty shortlist");
  if (!point_mode && samples < 1) throw config_error("scoring: need at least one sample");
  Eigen::MatrixXd Zc(static_cast<Eigen::Index>(ids.size()), features.Z.cols());
  for (std::size_t i = 0; i < ids.size(); ++i)
    Zc.row(static_cast<Eigen::Index>(i)) = features.row(ids[i]).transpose();
  const auto marg = predict_latent_marginals(model, Zc);

  std::vector<Eigen::VectorXd> mismatches;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Eigen::VectorXd mu = marg.mean.row(static_cast<Eigen::Index>(i)).transpose();
    if (point_mode) {
      Eigen::VectorXd one(1);
      one[0] = surrogate_mismatch(softplus(mu), ctx);
      mismatches.push_back(one);
      continue;
    }
    const Eigen::MatrixXd root = sampling_root(marg.cov[i]);
    Rng rng(mix_seed(seed, 0x73636f72ull, static_cast<std::uint64_t>(ids[i])));
    Eigen::VectorXd vals(samples);
    for (int s = 0; s < samples; ++s) {
      Eigen::VectorXd eta(mu.size());
      for (Eigen::Index k = 0; k < eta.size(); ++k) eta[k] = rng.normal();
      vals[s] = surrogate_mismatch(softplus(Eigen::VectorXd(mu + root * eta)), ctx);
    }
    mismatches.push_back(vals);
  }
  return score_from_mismatch_samples(ids, mismatches);
}

// ------------------------------------------------------------------- nmae --

struct NmaeResult {
  Eigen::VectorXd per_component;  // aligned with the target's active set
  double aggregate = 0;
};

// Normalized mean absolute error per active component, each scaled by the
// mean magnitude of its own target trace, then weight-averaged.
inline NmaeResult nmae(const std::vector<Eigen::Matrix3d>& achieved, const TargetSpec& t) {
  const auto n_f = static_cast<Eigen::Index>(achieved.size());
  if (n_f != t.stresses.rows()) throw size_error("nmae: response does not cover the schedule");
  NmaeResult out;
  out.per_component.resize(static_cast<Eigen::Index>(t.active.size()));
  for (std::size_t c = 0; c < t.active.size(); ++c) {
    double num = 0, den = 0;
    for (Eigen::Index j = 0; j < n_f; ++j) {
      const double tar = t.stresses(j, static_cast<Eigen::Index>(t.active[c]));
      const double got = stress_entry(achieved[static_cast<std::size_t>(j)], t.active[c]);
      num += std::abs(got - tar);
      den += std::abs(tar);
    }
    if (den <= 0)
      throw degenerate_error(std::string("nmae: target component ") + component_name(t.active[c]) +
                             " has zero mean magnitude");
    out.per_component[static_cast<Eigen::Index>(c)] = num / den;
  }
  out.aggregate = t.weights.dot(out.per_component) / t.weights.sum();
  return out;
}

// ------------------------------------------------------------------ driver --

struct SelectionConfig {
  int mc_samples = 64;           // coefficient draws per shortlisted design
  std::uint64_t seed = 17;
  bool point_mode = false;       // score without predictive spread
  bool exclude_training = false; // drop training designs from the screen
  int shortlist_size = 0;        // 0 keeps the budget size
};

struct EvaluationRecord {
  int e;
  int id;
  double phi;
  Eigen::VectorXd per_component;
  double aggregate;
};

struct SelectionResult {
  int final_id = -1;
  bool met_threshold = false;
  int evaluations = 0;
  bool oracle_failed = false;
  std::string failure;
  double final_nmae = std::numeric_limits<double>::infinity();
  Eigen::VectorXd final_per_component;
  Eigen::Vector3d final_mean_abs = Eigen::Vector3d::Zero();  // achieved, all components
  double lambda = 0;
  std::vector<ShortlistEntry> shortlist;
  std::vector<ScoredDesign> scores;
  std::vector<EvaluationRecord> log;
};

// Mean absolute value per stress component over a response trace.
inline Eigen::Vector3d mean_abs_stress(const std::vector<Eigen::Matrix3d>& stresses) {
  if (stresses.empty()) throw size_error("mean_abs_stress: empty response");
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  for (const auto& P : stresses) {
    acc[0] += std::abs(P(0, 0));
    acc[1] += std::abs(P(1, 1));
    acc[2] += std::abs(P(0, 1));
  }
  return acc / static_cast<double>(stresses.size());
}

inline Eigen::Vector3d target_mean_abs(const TargetSpec& t) {
  return t.stresses.cwiseAbs().colwise().mean().transpose();
}

inline SelectionResult run_selection(const SurrogateModel& model, const DesignPool& pool,
                                     const FeatureTable& features, Oracle& oracle,
                                     const TargetSpec& target, const SelectionConfig& cfg = {}) {
  validate_target(target);
  const TargetContext ctx = make_target_context(target);
  const int count = cfg.shortlist_size > 0 ? std::max(cfg.shortlist_size, target.e_max)
                                           : target.e_max;

  SelectionResult res;
  res.shortlist = screen_and_shortlist(model, features, ctx, count, cfg.exclude_training);

  std::vector<int> ids;
  for (const auto& s : res.shortlist) ids.push_back(s.id);
  const auto score = uncertainty_score(model, features, ids, ctx, cfg.mc_samples, cfg.seed,
                                       cfg.point_mode);
  res.scores = score.scored;
  res.lambda = score.lambda;

  // verification visits candidates by ascending score
  std::vector<ScoredDesign> order = res.scores;
  std::sort(order.begin(), order.end(), [](const ScoredDesign& a, const ScoredDesign& b) {
    return a.phi != b.phi ? a.phi < b.phi : a.id < b.id;
  });

  int best_id = -1;
  double best_nmae = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_per_component;
  Eigen::Vector3d best_mean_abs = Eigen::Vector3d::Zero();

  const int budget = std::min(target.e_max, static_cast<int>(order.size()));
  for (int e = 1; e <= budget; ++e) {
    const auto& cand = order[static_cast<std::size_t>(e - 1)];
    std::vector<Eigen::Matrix3d> Ps;
    try {
      Ps = oracle.evaluate(pool.by_id(cand.id), ctx.states);
    } catch (const std::exception& ex) {
      res.oracle_failed = true;
      res.failure = ex.what();
      break;
    }
    const auto err = nmae(Ps, target);
    res.log.push_back({e, cand.id, cand.phi, err.per_component, err.aggregate});
    ++res.evaluations;

    const bool better = err.aggregate < best_nmae ||
                        (err.aggregate == best_nmae && cand.id < best_id);
    if (better) {
      best_id = cand.id;
      best_nmae = err.aggregate;
      best_per_component = err.per_component;
      best_mean_abs = mean_abs_stress(Ps);
    }
    if (err.aggregate <= target.eta) {
      res.met_threshold = true;
      break;
    }
  }

  if (best_id < 0) {
    // the oracle failed before any verdict; fall back to the top-ranked design
    res.final_id = order.front().id;
    return res;
  }
  res.final_id = best_id;
  res.final_nmae = best_nmae;
  res.final_per_component = best_per_component;
  res.final_mean_abs = best_mean_abs;
  return res;
}

// ------------------------------------------------------------- aggregates --

// Fraction of targets whose threshold was met within `e_hit` evaluations.
inline double hit_rate(const std::vector<SelectionResult>& results, int e_hit) {
  if (results.empty()) throw size_error("hit_rate: no results");
  int hits = 0;
  for (const auto& r : results)
    if (r.met_threshold && r.evaluations <= e_hit) ++hits;
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

// Coefficient of determination of achieved against target values.
inline double parity_r2(const std::vector<double>& target_vals,
                        const std::vector<double>& achieved_vals) {
  if (target_vals.size() != achieved_vals.size()) throw size_error("parity: length mismatch");
  if (target_vals.size() < 2) throw size_error("parity: need at least two points");
  double xbar = 0;
  for (double x : target_vals) xbar += x;
  xbar /= static_cast<double>(target_vals.size());
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < target_vals.size(); ++i) {
    ss_res += (achieved_vals[i] - target_vals[i]) * (achieved_vals[i] - target_vals[i]);
    ss_tot += (target_vals[i] - xbar) * (target_vals[i] - xbar);
  }
  if (ss_tot <= 0) throw degenerate_error("parity: targets have zero variance");
  return 1.0 - ss_res / ss_tot;
}

// ------------------------------------------------------------- result json --

inline std::string encode_selection_result(const SelectionResult& r, const TargetSpec& t) {
  nlohmann::json j;
  j["final_id"] = r.final_id;
  j["met_threshold"] = r.met_threshold;
  j["evaluations"] = r.evaluations;
  j["budget"] = t.e_max;
  j["eta"] = t.eta;
  j["lambda"] = r.lambda;
  if (r.oracle_failed) j["failure"] = r.failure;
  if (std::isfinite(r.final_nmae)) j["final_nmae"] = r.final_nmae;
  j["final_mean_abs"] = {r.final_mean_abs[0], r.final_mean_abs[1], r.final_mean_abs[2]};
  for (const auto& s : r.shortlist)
    j["shortlist"].push_back({{"id", s.id}, {"mismatch", s.mismatch}});
  for (const auto& s : r.scores)
    j["scores"].push_back(
        {{"id", s.id}, {"mean", s.mean}, {"stddev", s.stddev}, {"phi", s.phi}});
  for (const auto& rec : r.log) {
    nlohmann::json comp;
    for (std::size_t c = 0; c < t.active.size(); ++c)
      comp[component_name(t.active[c])] = rec.per_component[static_cast<Eigen::Index>(c)];
    j["log"].push_back({{"e", rec.e},
                        {"id", rec.id},
                        {"phi", rec.phi},
                        {"nmae", comp},
                        {"aggregate", rec.aggregate}});
  }
  return j.dump(2);
}

inline void save_selection_result(const SelectionResult& r, const TargetSpec& t,
                                  const std::string& path) {
  std::ofstream f(path);
  if (!f) throw user_error("cannot write " + path);
  f << encode_selection_result(r, t) << '\n';
}

}  // namespace baygds
