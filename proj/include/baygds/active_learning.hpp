#pragma once

// Pool-based active learning: starting from a small seed of labeled designs,
// repeatedly pick the unlabeled candidate whose predicted stress response is
// most uncertain, query the oracle, refit, and monitor convergence as the
// relative drift of a held-out mean absolute error.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "baygds/common.hpp"
#include "baygds/features.hpp"
#include "baygds/grid.hpp"
#include "baygds/mechanics.hpp"
#include "baygds/oracle.hpp"
#include "baygds/surrogate.hpp"

namespace baygds {

enum class PartitionStrategy { Random, LatinHypercube, KMedoids };
enum class AcquisitionRule { PosteriorVariance, Random };

inline PartitionStrategy partition_from_name(const std::string& s) {
  if (s == "random") return PartitionStrategy::Random;
  if (s == "lhs") return PartitionStrategy::LatinHypercube;
  if (s == "kmedoids") return PartitionStrategy::KMedoids;
  throw config_error("unknown partition strategy: " + s);
}

inline const char* partition_name(PartitionStrategy s) {
  switch (s) {
    case PartitionStrategy::Random: return "random";
    case PartitionStrategy::LatinHypercube: return "lhs";
    case PartitionStrategy::KMedoids: return "kmedoids";
  }
  throw config_error("partition_name: unknown strategy");
}

inline AcquisitionRule acquisition_from_name(const std::string& s) {
  if (s == "variance") return AcquisitionRule::PosteriorVariance;
  if (s == "random") return AcquisitionRule::Random;
  throw config_error("unknown acquisition rule: " + s);
}

inline const char* acquisition_name(AcquisitionRule r) {
  return r == AcquisitionRule::PosteriorVariance ? "variance" : "random";
}

struct ActiveLearningConfig {
  int initial_labels = 10;
  int holdout = 500;        // monitoring designs, labeled once up front
  int t_max = 230;          // iteration budget
  double epsilon = 1e-3;    // stop when the mae drift falls below this
  int window = 5;           // iterations averaged by the drift statistic
  int batch = 1;            // labels acquired per iteration
  int candidate_cap = 0;    // 0 scores the whole unlabeled pool
  int checkpoint_every = 0; // 0 disables periodic checkpoints
  PartitionStrategy partition = PartitionStrategy::LatinHypercube;
  AcquisitionRule acquisition = AcquisitionRule::PosteriorVariance;
  std::uint64_t seed = 11;
};

// --------------------------------------------------------------- partition --

struct PoolPartition {
  std::vector<int> initial, holdout, unlabeled;
};

namespace detail {

inline std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i)
    std::swap(idx[static_cast<std::size_t>(i)], idx[rng.below(static_cast<std::uint64_t>(i + 1))]);
  return idx;
}

// Picks `count` pool rows approximating a latin-hypercube design in feature
// space: one stratum per pick and dimension, target points snapped to the
// nearest not-yet-chosen pool member.
inline std::vector<int> lhs_rows(const Eigen::MatrixXd& Z, const std::vector<char>& taken,
                                 int count, Rng& rng) {
  const int N = static_cast<int>(Z.rows());
  const int n_z = static_cast<int>(Z.cols());
  std::vector<Eigen::VectorXd> sorted_cols;
  for (int k = 0; k < n_z; ++k) {
    Eigen::VectorXd col = Z.col(k);
    std::sort(col.data(), col.data() + col.size());
    sorted_cols.push_back(col);
  }
  std::vector<std::vector<int>> perms;
  for (int k = 0; k < n_z; ++k) perms.push_back(shuffled_indices(count, rng));

  std::vector<char> used = taken;
  std::vector<int> rows;
  for (int j = 0; j < count; ++j) {
    Eigen::VectorXd target(n_z);
    for (int k = 0; k < n_z; ++k) {
      const double u =
          (perms[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] + rng.uniform()) /
          count;
      const auto pos = static_cast<Eigen::Index>(u * (N - 1));
      target[k] = sorted_cols[static_cast<std::size_t>(k)][pos];
    }
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < N; ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      const double d = (Z.row(i).transpose() - target).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    used[static_cast<std::size_t>(best)] = 1;
    rows.push_back(best);
  }
  return rows;
}

// Lloyd clustering with greedy farthest-point seeding, then the pool member
// nearest each center. Deterministic given the generator state.
inline std::vector<int> medoid_rows(const Eigen::MatrixXd& Z, int count, Rng& rng) {
  const int N = static_cast<int>(Z.rows());
  std::vector<Eigen::VectorXd> centers;
  centers.push_back(Z.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(N))))
                        .transpose());
  Eigen::VectorXd d2 = Eigen::VectorXd::Constant(N, std::numeric_limits<double>::infinity());
  while (static_cast<int>(centers.size()) < count) {
    for (int i = 0; i < N; ++i)
      d2[i] = std::min(d2[i], (Z.row(i).transpose() - centers.back()).squaredNorm());
    Eigen::Index far;
    d2.maxCoeff(&far);
    centers.push_back(Z.row(far).transpose());
  }
  std::vector<int> assign(static_cast<std::size_t>(N), 0);
  for (int iter = 0; iter < 25; ++iter) {
    for (int i = 0; i < N; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < count; ++c) {
        const double d = (Z.row(i).transpose() - centers[static_cast<std::size_t>(c)]).squaredNorm();
        if (d < best) {
          best = d;
          assign[static_cast<std::size_t>(i)] = c;
        }
      }
    }
    for (int c = 0; c < count; ++c) {
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(Z.cols());
      int members = 0;
      for (int i = 0; i < N; ++i)
        if (assign[static_cast<std::size_t>(i)] == c) {
          mean += Z.row(i).transpose();
          ++members;
        }
      if (members > 0) centers[static_cast<std::size_t>(c)] = mean / members;
    }
  }
  std::vector<char> used(static_cast<std::size_t>(N), 0);
  std::vector<int> rows;
  for (int c = 0; c < count; ++c) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < N; ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      const double d = (Z.row(i).transpose() - centers[static_cast<std::size_t>(c)]).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    used[static_cast<std::size_t>(best)] = 1;
    rows.push_back(best);
  }
  return rows;
}

}  // namespace detail

inline PoolPartition partition_pool(const FeatureTable& features, int initial, int holdout,
                                    PartitionStrategy strategy, std::uint64_t seed) {
  const int N = static_cast<int>(features.Z.rows());
  if (initial < 2) throw config_error("partition_pool: need at least two initial labels");
  if (holdout < 1) throw config_error("partition_pool: need at least one holdout design");
  if (initial + holdout > N)
    throw size_error("partition_pool: pool smaller than initial plus holdout");

  Rng rng(mix_seed(seed, 0x70617274ull));
  std::vector<int> init_rows, hold_rows;
  switch (strategy) {
    case PartitionStrategy::Random: {
      const auto idx = detail::shuffled_indices(N, rng);
      init_rows.assign(idx.begin(), idx.begin() + initial);
      hold_rows.assign(idx.begin() + initial, idx.begin() + initial + holdout);
      break;
    }
    case PartitionStrategy::LatinHypercube: {
      std::vector<char> taken(static_cast<std::size_t>(N), 0);
      init_rows = detail::lhs_rows(features.Z, taken, initial, rng);
      for (int r : init_rows) taken[static_cast<std::size_t>(r)] = 1;
      hold_rows = detail::lhs_rows(features.Z, taken, holdout, rng);
      break;
    }
    case PartitionStrategy::KMedoids: {
      init_rows = detail::medoid_rows(features.Z, initial, rng);
      std::vector<char> taken(static_cast<std::size_t>(N), 0);
      for (int r : init_rows) taken[static_cast<std::size_t>(r)] = 1;
      std::vector<int> rest;
      for (int i = 0; i < N; ++i)
        if (!taken[static_cast<std::size_t>(i)]) rest.push_back(i);
      const auto idx = detail::shuffled_indices(static_cast<int>(rest.size()), rng);
      for (int j = 0; j < holdout; ++j)
        hold_rows.push_back(rest[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])]);
      break;
    }
  }

  PoolPartition part;
  std::vector<char> claimed(static_cast<std::size_t>(N), 0);
  for (int r : init_rows) {
    part.initial.push_back(features.ids[static_cast<std::size_t>(r)]);
    claimed[static_cast<std::size_t>(r)] = 1;
  }
  for (int r : hold_rows) {
    part.holdout.push_back(features.ids[static_cast<std::size_t>(r)]);
    claimed[static_cast<std::size_t>(r)] = 1;
  }
  for (int i = 0; i < N; ++i)
    if (!claimed[static_cast<std::size_t>(i)])
      part.unlabeled.push_back(features.ids[static_cast<std::size_t>(i)]);
  std::sort(part.unlabeled.begin(), part.unlabeled.end());
  return part;
}

// -------------------------------------------------------------- statistics --

// Uncertainty score of one candidate from its standardized predictive
// variances. The log makes the ranking invariant to the per-component
// standardization scale (a common positive factor shifts every score by the
// same constant).
inline double acquisition_score(const Eigen::VectorXd& var_std) {
  return (var_std.array() + 1e-12).log().sum();
}

// Mean absolute error between standardized observation rows, averaged over
// designs only; component count is deliberately kept in the sum.
inline double mae_between(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred) {
  if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
    throw size_error("mae_between: shape mismatch");
  if (truth.rows() == 0) throw size_error("mae_between: empty holdout");
  return (truth - pred).cwiseAbs().rowwise().sum().mean();
}

// Average relative drift of the last `window` mae transitions. Infinite
// until enough history exists; a vanishing denominator counts as converged.
inline double stopping_delta(const std::vector<double>& maes, int window) {
  if (window < 1) throw config_error("stopping_delta: window must be positive");
  if (static_cast<int>(maes.size()) < window + 1)
    return std::numeric_limits<double>::infinity();
  double acc = 0;
  for (int k = 0; k < window; ++k) {
    const double prev = maes[maes.size() - static_cast<std::size_t>(window) - 1 +
                             static_cast<std::size_t>(k)];
    const double cur = maes[maes.size() - static_cast<std::size_t>(window) +
                            static_cast<std::size_t>(k)];
    if (prev == 0.0) return 0.0;
    acc += std::abs(cur - prev) / prev;
  }
  return acc / window;
}

// ----------------------------------------------------------------- history --

struct HistoryRow {
  int t = 0;
  int selected_id = 0;  // 0 marks the initial fit
  double mae = 0;
  double delta = std::numeric_limits<double>::infinity();
  double elbo = 0;
};

inline void save_history_csv(const std::vector<HistoryRow>& rows, const std::string& path,
                             const std::string& provenance) {
  std::ofstream f(path);
  if (!f) throw user_error("cannot write " + path);
  if (!provenance.empty()) f << "# " << provenance << "\n";
  f << "t,selected_id,mae,delta,elbo\n";
  for (const auto& r : rows) {
    f << r.t << ',' << r.selected_id << ',' << fmt_double(r.mae) << ',';
    if (std::isinf(r.delta))
      f << "inf";
    else
      f << fmt_double(r.delta);
    f << ',' << fmt_double(r.elbo) << '\n';
  }
}

// -------------------------------------------------------------- labels csv --

// Stress labels, one row per (design, state): design_id,path,h,P11,P22,P12.
inline void save_labels_csv(const std::vector<int>& ids,
                            const std::vector<std::vector<Eigen::Matrix3d>>& stresses,
                            const std::vector<DeformationState>& states, const std::string& path,
                            const std::string& provenance) {
  if (ids.size() != stresses.size()) throw size_error("save_labels_csv: id/stress mismatch");
  std::ofstream f(path);
  if (!f) throw user_error("cannot write " + path);
  if (!provenance.empty()) f << "# " << provenance << "\n";
  f << "design_id,path,h,P11,P22,P12\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (stresses[i].size() != states.size())
      throw size_error("save_labels_csv: state count mismatch");
    for (std::size_t j = 0; j < states.size(); ++j) {
      const auto& P = stresses[i][j];
      f << ids[i] << ',' << path_name(states[j].path) << ',' << states[j].h << ','
        << fmt_double(P(0, 0)) << ',' << fmt_double(P(1, 1)) << ',' << fmt_double(P(0, 1))
        << '\n';
    }
  }
}

struct LabelTable {
  std::vector<int> ids;
  Eigen::MatrixXd Y_obs;  // rows per design: in-plane normal components, state-major
  Eigen::MatrixXd P12;    // rows per design: shear component per state
};

// Loads labels keyed by (path, h); every design must cover the schedule
// exactly once.
inline LabelTable load_labels_csv(const std::string& path,
                                  const std::vector<DeformationState>& states) {
  auto lines = read_data_lines(path);
  if (lines.empty() || split_csv_row(lines[0]).size() != 6)
    throw format_error(path + ": expected header design_id,path,h,P11,P22,P12");

  std::map<int, std::map<std::pair<int, int>, Eigen::Vector3d>> per_design;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cols = split_csv_row(lines[i]);
    if (cols.size() != 6) throw format_error(path + ": bad row " + std::to_string(i));
    const int id = static_cast<int>(parse_long(cols[0]));
    const int p = static_cast<int>(path_from_name(cols[1]));
    const int h = static_cast<int>(parse_long(cols[2]));
    const Eigen::Vector3d v(parse_double(cols[3]), parse_double(cols[4]), parse_double(cols[5]));
    if (!per_design[id].emplace(std::make_pair(p, h), v).second)
      throw format_error(path + ": duplicate state for design " + cols[0]);
  }

  LabelTable out;
  const auto n_states = static_cast<Eigen::Index>(states.size());
  out.Y_obs.resize(static_cast<Eigen::Index>(per_design.size()), 2 * n_states);
  out.P12.resize(static_cast<Eigen::Index>(per_design.size()), n_states);
  Eigen::Index row = 0;
  for (const auto& [id, table] : per_design) {
    if (static_cast<Eigen::Index>(table.size()) != n_states)
      throw size_error(path + ": design " + std::to_string(id) +
                       " does not cover the schedule");
    out.ids.push_back(id);
    for (Eigen::Index j = 0; j < n_states; ++j) {
      const auto& s = states[static_cast<std::size_t>(j)];
      const auto it = table.find({static_cast<int>(s.path), s.h});
      if (it == table.end())
        throw size_error(path + ": design " + std::to_string(id) + " is missing state " +
                         path_name(s.path) + "/" + std::to_string(s.h));
      out.Y_obs(row, 2 * j) = it->second[0];
      out.Y_obs(row, 2 * j + 1) = it->second[1];
      out.P12(row, j) = it->second[2];
    }
    ++row;
  }
  return out;
}

// ------------------------------------------------------------------ driver --

struct ActiveLearningResult {
  SurrogateModel model;
  Eigen::MatrixXd Y_raw;   // labeled observations aligned with model.labeled_ids
  Eigen::MatrixXd Y_std;
  std::vector<std::vector<Eigen::Matrix3d>> stresses;  // full tensors for export
  PoolPartition partition;
  std::vector<HistoryRow> history;
  int training_labels = 0;
  long oracle_evaluations = 0;
};

inline double holdout_mae(const SurrogateModel& model, const Eigen::MatrixXd& Zh,
                          const Eigen::MatrixXd& Yh_std, int samples, std::uint64_t seed) {
  const auto marg = predict_latent_marginals(model, Zh);
  Eigen::MatrixXd pred(Zh.rows(), Yh_std.cols());
  for (Eigen::Index i = 0; i < Zh.rows(); ++i) {
    const auto pf = pushforward_moments(model.H, marg.mean.row(i).transpose(),
                                        marg.cov[static_cast<std::size_t>(i)], samples,
                                        mix_seed(seed, 0x6d616570ull,
                                                 static_cast<std::uint64_t>(i)));
    pred.row(i) = (pf.mean + model.c).transpose();
  }
  return mae_between(Yh_std, pred);
}

inline ActiveLearningResult run_active_learning(const DesignPool& pool,
                                                const FeatureTable& features, Oracle& oracle,
                                                const ScheduleSpec& schedule,
                                                const ActiveLearningConfig& cfg,
                                                const SurrogateConfig& scfg,
                                                const std::string& checkpoint_dir = "") {
  if (cfg.t_max < 0) throw config_error("active learning: negative iteration budget");
  if (cfg.batch < 1) throw config_error("active learning: batch must be positive");
  const auto states = make_schedule(schedule);
  const long evals_before = oracle.evaluations();

  ActiveLearningResult res;
  res.partition = partition_pool(features, cfg.initial_labels, cfg.holdout, cfg.partition,
                                 cfg.seed);

  const int n_y = static_cast<int>(states.size()) * 2;
  auto observe = [&](int id, std::vector<Eigen::Matrix3d>* keep) {
    const auto Ps = oracle.evaluate(pool.by_id(id), states);
    Eigen::VectorXd y(n_y);
    for (std::size_t j = 0; j < Ps.size(); ++j)
      y.segment(2 * static_cast<Eigen::Index>(j), 2) = extract_obs(Ps[j]);
    if (keep) *keep = Ps;
    return y;
  };
  auto feature_rows = [&](const std::vector<int>& ids) {
    Eigen::MatrixXd Z(static_cast<Eigen::Index>(ids.size()), features.Z.cols());
    for (std::size_t i = 0; i < ids.size(); ++i)
      Z.row(static_cast<Eigen::Index>(i)) = features.row(ids[i]).transpose();
    return Z;
  };

  // seed labels; observation statistics freeze here
  res.Y_raw.resize(cfg.initial_labels, n_y);
  for (int i = 0; i < cfg.initial_labels; ++i) {
    std::vector<Eigen::Matrix3d> Ps;
    res.Y_raw.row(i) = observe(res.partition.initial[static_cast<std::size_t>(i)], &Ps).transpose();
    res.stresses.push_back(std::move(Ps));
  }
  const ObservationStats ystats = observation_stats(res.Y_raw);
  res.Y_std.resize(cfg.initial_labels, n_y);
  for (int i = 0; i < cfg.initial_labels; ++i)
    res.Y_std.row(i) =
        standardize_observations(res.Y_raw.row(i).transpose(), ystats).transpose();

  res.model = init_surrogate(feature_rows(res.partition.initial), res.partition.initial,
                             schedule, ystats, scfg);
  auto tstats = train_surrogate(res.model, res.Y_std, scfg, scfg.train_steps,
                                scfg.restart_period, mix_seed(cfg.seed, 0x696e6974ull));

  // monitoring labels (reference evaluations, not training data)
  const Eigen::MatrixXd Zh = feature_rows(res.partition.holdout);
  Eigen::MatrixXd Yh_std(static_cast<Eigen::Index>(res.partition.holdout.size()), n_y);
  for (std::size_t i = 0; i < res.partition.holdout.size(); ++i)
    Yh_std.row(static_cast<Eigen::Index>(i)) =
        standardize_observations(observe(res.partition.holdout[i], nullptr), ystats).transpose();

  std::vector<double> maes;
  maes.push_back(holdout_mae(res.model, Zh, Yh_std, scfg.mc_samples, cfg.seed));
  res.history.push_back({0, 0, maes.back(), std::numeric_limits<double>::infinity(),
                         tstats.best_elbo});
  res.training_labels = cfg.initial_labels;

  auto checkpoint = [&](const std::string& tag) {
    if (checkpoint_dir.empty()) return;
    save_model(res.model, checkpoint_dir + "/model_" + tag + ".bin");
    save_history_csv(res.history, checkpoint_dir + "/history.csv", "active learning trace");
  };

  double delta = std::numeric_limits<double>::infinity();
  for (int t = 1; t <= cfg.t_max; ++t) {
    if (delta < cfg.epsilon) break;
    if (res.partition.unlabeled.empty()) break;

    // candidate set, optionally capped for very large pools
    std::vector<int> candidates = res.partition.unlabeled;
    if (cfg.candidate_cap > 0 && static_cast<int>(candidates.size()) > cfg.candidate_cap) {
      Rng rng(mix_seed(cfg.seed, 0x63617020ull, static_cast<std::uint64_t>(t)));
      const auto idx = detail::shuffled_indices(static_cast<int>(candidates.size()), rng);
      std::vector<int> capped;
      for (int j = 0; j < cfg.candidate_cap; ++j)
        capped.push_back(candidates[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])]);
      std::sort(capped.begin(), capped.end());
      candidates.swap(capped);
    }

    const int n_pick = std::min(cfg.batch, static_cast<int>(candidates.size()));
    std::vector<int> chosen;
    if (cfg.acquisition == AcquisitionRule::Random) {
      Rng rng(mix_seed(cfg.seed, 0x61637173ull, static_cast<std::uint64_t>(t)));
      const auto idx = detail::shuffled_indices(static_cast<int>(candidates.size()), rng);
      for (int j = 0; j < n_pick; ++j)
        chosen.push_back(candidates[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])]);
    } else {
      const auto marg = predict_latent_marginals(res.model, feature_rows(candidates));
      std::vector<std::pair<double, int>> ranked;  // (-score, id): sort = best first
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto pf = pushforward_moments(
            res.model.H, marg.mean.row(static_cast<Eigen::Index>(i)).transpose(), marg.cov[i],
            scfg.mc_samples,
            mix_seed(cfg.seed, 0x61637176ull, static_cast<std::uint64_t>(t),
                     static_cast<std::uint64_t>(candidates[i])));
        ranked.emplace_back(-acquisition_score(pf.var), candidates[i]);
      }
      std::sort(ranked.begin(), ranked.end());
      for (int j = 0; j < n_pick; ++j) chosen.push_back(ranked[static_cast<std::size_t>(j)].second);
    }

    // query the oracle first: a failure here leaves the model consistent
    std::vector<Eigen::VectorXd> new_rows;
    std::vector<std::vector<Eigen::Matrix3d>> new_stresses(chosen.size());
    try {
      for (std::size_t j = 0; j < chosen.size(); ++j)
        new_rows.push_back(observe(chosen[j], &new_stresses[j]));
    } catch (const std::exception& e) {
      checkpoint("failed");
      throw oracle_error(std::string("active learning: oracle failed at iteration ") +
                         std::to_string(t) + ": " + e.what());
    }

    for (std::size_t j = 0; j < chosen.size(); ++j) {
      expand_model(res.model, features.row(chosen[j]), chosen[j]);
      res.Y_raw.conservativeResize(res.Y_raw.rows() + 1, Eigen::NoChange);
      res.Y_raw.row(res.Y_raw.rows() - 1) = new_rows[j].transpose();
      res.Y_std.conservativeResize(res.Y_std.rows() + 1, Eigen::NoChange);
      res.Y_std.row(res.Y_std.rows() - 1) =
          standardize_observations(new_rows[j], ystats).transpose();
      res.stresses.push_back(std::move(new_stresses[j]));
      res.partition.unlabeled.erase(
          std::find(res.partition.unlabeled.begin(), res.partition.unlabeled.end(), chosen[j]));
      ++res.training_labels;
    }

    tstats = train_surrogate(res.model, res.Y_std, scfg, scfg.retrain_steps,
                             scfg.retrain_restart,
                             mix_seed(cfg.seed, 0x72747261ull, static_cast<std::uint64_t>(t)));
    maes.push_back(holdout_mae(res.model, Zh, Yh_std, scfg.mc_samples, cfg.seed));
    delta = stopping_delta(maes, cfg.window);
    res.history.push_back({t, chosen.front(), maes.back(), delta, tstats.best_elbo});

    if (cfg.checkpoint_every > 0 && t % cfg.checkpoint_every == 0)
      checkpoint(std::to_string(t));
  }

  res.oracle_evaluations = oracle.evaluations() - evals_before;
  return res;
}

}  // namespace baygds
