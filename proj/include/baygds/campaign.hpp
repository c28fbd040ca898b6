#pragma once

// Selection campaigns: draw targets from designs the surrogate never saw,
// run the selection loop for every requested component combination against
// the same targets, and aggregate hit rates, evaluation histograms and
// parity data into CSV tables plus a plain-text report.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "baygds/common.hpp"
#include "baygds/config.hpp"
#include "baygds/selection.hpp"

namespace baygds {

struct CampaignPlan {
  int n_targets = 100;
  double eta = 0.05;
  int e_max = 50;
  ScheduleSpec target_schedule{20, 45.0};
  std::vector<std::vector<StressComponent>> combos = all_component_combos();
  std::vector<int> checkpoints{1, 5, 10, 20, 50};
  Eigen::Vector3d component_weights{1.0, 1.0, 1.0};
  int mc_samples = 64;
  bool point_mode = false;
  bool exclude_training = false;
  int shortlist_size = 0;
  int jobs = 1;
  std::uint64_t seed = 2026;
};

inline CampaignPlan campaign_plan(const ExperimentConfig& c) {
  CampaignPlan p;
  p.n_targets = c.campaign.n_targets;
  p.eta = c.selection.eta;
  p.e_max = c.selection.e_max;
  p.target_schedule = ScheduleSpec{c.schedule.n_increments, c.campaign.beta_deg};
  p.combos.clear();
  for (const auto& name : c.campaign.combos) p.combos.push_back(combo_from_name(name));
  p.checkpoints = c.campaign.checkpoints;
  p.component_weights =
      Eigen::Vector3d(c.selection.weight_11, c.selection.weight_22, c.selection.weight_12);
  p.mc_samples = c.selection.mc_samples;
  p.point_mode = c.selection.point_mode;
  p.exclude_training = c.selection.exclude_training;
  p.shortlist_size = c.selection.shortlist_size;
  p.jobs = c.campaign.jobs;
  p.seed = c.campaign.seed;
  return p;
}

struct CampaignOutcome {
  std::vector<int> target_ids;                        // ascending
  std::vector<TargetSpec> targets;                    // full component set each
  std::vector<std::vector<SelectionResult>> results;  // [combo][target]
  long target_evaluations = 0;
  long selection_evaluations = 0;
};

// ------------------------------------------------------------------ driver --

inline CampaignOutcome run_campaign(const DesignPool& pool, const FeatureTable& features,
                                    const SurrogateModel& model, Oracle& oracle,
                                    const CampaignPlan& plan) {
  if (plan.n_targets < 1) throw config_error("campaign: need at least one target");
  if (plan.combos.empty()) throw config_error("campaign: need at least one component set");
  if (plan.eta <= 0 || plan.e_max < 1) throw config_error("campaign: bad threshold or budget");

  // targets come from designs the surrogate never trained on
  std::vector<int> unseen;
  for (int id : features.ids)
    if (std::find(model.labeled_ids.begin(), model.labeled_ids.end(), id) ==
        model.labeled_ids.end())
      unseen.push_back(id);
  if (static_cast<int>(unseen.size()) < plan.n_targets)
    throw size_error("campaign: fewer unseen designs than requested targets");
  Rng rng(mix_seed(plan.seed, 0x74617267ull));
  for (std::size_t i = unseen.size() - 1; i > 0; --i)
    std::swap(unseen[i], unseen[rng.below(static_cast<std::uint64_t>(i + 1))]);
  unseen.resize(static_cast<std::size_t>(plan.n_targets));
  std::sort(unseen.begin(), unseen.end());

  CampaignOutcome out;
  out.target_ids = unseen;
  const auto states = make_schedule(plan.target_schedule);
  const long before_targets = oracle.evaluations();
  for (int id : unseen) {
    const auto Ps = oracle.evaluate(pool.by_id(id), states);
    TargetSpec t;
    t.active = {StressComponent::P11, StressComponent::P22, StressComponent::P12};
    t.weights = plan.component_weights;
    t.eta = plan.eta;
    t.e_max = plan.e_max;
    t.schedule = plan.target_schedule;
    t.stresses.resize(static_cast<Eigen::Index>(Ps.size()), 3);
    for (std::size_t j = 0; j < Ps.size(); ++j)
      t.stresses.row(static_cast<Eigen::Index>(j)) << Ps[j](0, 0), Ps[j](1, 1), Ps[j](0, 1);
    const Eigen::Vector3d mags = target_mean_abs(t);
    for (int comp = 0; comp < 3; ++comp)
      if (mags[comp] <= 0)
        throw degenerate_error("campaign: target from design " + std::to_string(id) +
                               " has zero mean magnitude in component " +
                               component_name(static_cast<StressComponent>(comp)));
    out.targets.push_back(std::move(t));
  }
  out.target_evaluations = oracle.evaluations() - before_targets;

  out.results.assign(plan.combos.size(), std::vector<SelectionResult>(
                                             static_cast<std::size_t>(plan.n_targets)));
  const long before_selection = oracle.evaluations();
  const std::size_t total = plan.combos.size() * static_cast<std::size_t>(plan.n_targets);
  parallel_for(total, plan.jobs, [&](std::size_t k) {
    const std::size_t ci = k / static_cast<std::size_t>(plan.n_targets);
    const std::size_t ti = k % static_cast<std::size_t>(plan.n_targets);
    TargetSpec t = out.targets[ti];
    t.active = plan.combos[ci];
    t.weights.resize(static_cast<Eigen::Index>(t.active.size()));
    for (std::size_t c = 0; c < t.active.size(); ++c)
      t.weights[static_cast<Eigen::Index>(c)] =
          plan.component_weights[static_cast<int>(t.active[c])];
    SelectionConfig scfg;
    scfg.mc_samples = plan.mc_samples;
    scfg.seed = mix_seed(plan.seed, 0x73656c74ull, static_cast<std::uint64_t>(ci),
                         static_cast<std::uint64_t>(ti));
    scfg.point_mode = plan.point_mode;
    scfg.exclude_training = plan.exclude_training;
    scfg.shortlist_size = plan.shortlist_size;
    out.results[ci][ti] = run_selection(model, pool, features, oracle, t, scfg);
  });
  out.selection_evaluations = oracle.evaluations() - before_selection;
  return out;
}

// ------------------------------------------------------------------ tables --

struct SummaryRow {
  std::string combo;
  int target_index;
  int target_id;
  int final_id;
  bool met;
  int evaluations;
  double final_nmae;
  double lambda;
};

struct ParityRow {
  std::string combo;
  std::string component;
  int target_index;
  int target_id;
  double target_value;
  double achieved_value;
};

inline std::vector<SummaryRow> summarize(const CampaignOutcome& o, const CampaignPlan& plan) {
  std::vector<SummaryRow> rows;
  for (std::size_t ci = 0; ci < plan.combos.size(); ++ci) {
    const auto name = combo_name(plan.combos[ci]);
    for (std::size_t ti = 0; ti < o.results[ci].size(); ++ti) {
      const auto& r = o.results[ci][ti];
      rows.push_back({name, static_cast<int>(ti), o.target_ids[ti], r.final_id,
                      r.met_threshold, r.evaluations, r.final_nmae, r.lambda});
    }
  }
  return rows;
}

inline std::vector<ParityRow> parity_rows(const CampaignOutcome& o, const CampaignPlan& plan) {
  std::vector<ParityRow> rows;
  for (std::size_t ci = 0; ci < plan.combos.size(); ++ci) {
    const auto name = combo_name(plan.combos[ci]);
    for (std::size_t ti = 0; ti < o.results[ci].size(); ++ti) {
      const auto& r = o.results[ci][ti];
      if (r.log.empty()) continue;  // no verified response to compare
      const Eigen::Vector3d target_mag = target_mean_abs(o.targets[ti]);
      for (auto comp : plan.combos[ci])
        rows.push_back({name, component_name(comp), static_cast<int>(ti), o.target_ids[ti],
                        target_mag[static_cast<int>(comp)],
                        r.final_mean_abs[static_cast<int>(comp)]});
    }
  }
  return rows;
}

inline void write_summary_csv(const std::vector<SummaryRow>& rows, const std::string& path,
                              const std::string& stamp) {
  std::ofstream f(path);
  if (!f) throw user_error("cannot write " + path);
  if (!stamp.empty()) f << "# " << stamp << "\n";
  f << "combo,target_index,target_id,final_id,met,evaluations,final_nmae,lambda\n";
  for (const auto& r : rows) {
    f << r.combo << ',' << r.target_index << ',' << r.target_id << ',' << r.final_id << ','
      << (r.met ? 1 : 0) << ',' << r.evaluations << ',';
    if (std::isfinite(r.final_nmae))
      f << fmt_double(r.final_nmae);
    else
      f << "inf";
    f << ',' << fmt_double(r.lambda) << '\n';
  }
}

inline std::vector<SummaryRow> load_summary_csv(const std::string& path) {
  const auto lines = read_data_lines(path);
  if (lines.empty() ||
      lines[0] != "combo,target_index,target_id,final_id,met,evaluations,final_nmae,lambda")
    throw format_error(path + ": not a campaign summary");
  std::vector<SummaryRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cols = split_csv_row(lines[i]);
    if (cols.size() != 8) throw format_error(path + ": bad row " + std::to_string(i));
    SummaryRow r;
    r.combo = cols[0];
    r.target_index = static_cast<int>(parse_long(cols[1]));
    r.target_id = static_cast<int>(parse_long(cols[2]));
    r.final_id = static_cast<int>(parse_long(cols[3]));
    r.met = parse_long(cols[4]) != 0;
    r.evaluations = static_cast<int>(parse_long(cols[5]));
    r.final_nmae = cols[6] == "inf" ? std::numeric_limits<double>::infinity()
                                    : parse_double(cols[6]);
    r.lambda = parse_double(cols[7]);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_parity_csv(const std::vector<ParityRow>& rows, const std::string& path,
                             const std::string& stamp) {
  std::ofstream f(path);
  if (!f) throw user_error("cannot write " + path);
  if (!stamp.empty()) f << "# " << stamp << "\n";
  f << "combo,component,target_index,target_id,target_value,achieved_value\n";
  for (const auto& r : rows)
    f << r.combo << ',' << r.component << ',' << r.target_index << ',' << r.target_id << ','
      << fmt_double(r.target_value) << ',' << fmt_double(r.achieved_value) << '\n';
}

inline std::vector<ParityRow> load_parity_csv(const std::string& path) {
  const auto lines = read_data_lines(path);
  if (lines.empty() ||
      lines[0] != "combo,component,target_index,target_id,target_value,achieved_value")
    throw format_error(path + ": not a campaign parity table");
  std::vector<ParityRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cols = split_csv_row(lines[i]);
    if (cols.size() != 6) throw format_error(path + ": bad row " + std::to_string(i));
    rows.push_back({cols[0], cols[1], static_cast<int>(parse_long(cols[2])),
                    static_cast<int>(parse_long(cols[3])), parse_double(cols[4]),
                    parse_double(cols[5])});
  }
  return rows;
}

// Hit rate per combo from summary rows, counting rows met within the budget.
inline double summary_hit_rate(const std::vector<SummaryRow>& rows, const std::string& combo,
                               int e_hit) {
  int total = 0, hits = 0;
  for (const auto& r : rows) {
    if (r.combo != combo) continue;
    ++total;
    if (r.met && r.evaluations <= e_hit) ++hits;
  }
  if (total == 0) throw size_error("hit rate: no rows for combo " + combo);
  return static_cast<double>(hits) / static_cast<double>(total);
}

inline std::vector<std::string> summary_combos(const std::vector<SummaryRow>& rows) {
  std::vector<std::string> combos;
  for (const auto& r : rows)
    if (std::find(combos.begin(), combos.end(), r.combo) == combos.end())
      combos.push_back(r.combo);
  return combos;
}

inline void write_hitrates_csv(const std::vector<SummaryRow>& rows,
                               const std::vector<int>& checkpoints, const std::string& path,
                               const std::string& stamp) {
  std::ofstream f(path);
  if (!f) throw user_error("cannot write " + path);
  if (!stamp.empty()) f << "# " << stamp << "\n";
  f << "combo,e_hit,hit_rate\n";
  for (const auto& combo : summary_combos(rows))
    for (int e : checkpoints)
      f << combo << ',' << e << ',' << fmt_double(summary_hit_rate(rows, combo, e)) << '\n';
}

inline void write_histograms_csv(const std::vector<SummaryRow>& rows, const std::string& path,
                                 const std::string& stamp) {
  std::ofstream f(path);
  if (!f) throw user_error("cannot write " + path);
  if (!stamp.empty()) f << "# " << stamp << "\n";
  f << "kind,combo,bin,count\n";
  for (const auto& combo : summary_combos(rows)) {
    std::map<int, int> evals;       // threshold-met evaluation counts
    std::map<int, int> nmae_bins;   // budget-limited final errors, 0.05 wide
    for (const auto& r : rows) {
      if (r.combo != combo) continue;
      if (r.met) {
        ++evals[r.evaluations];
      } else if (std::isfinite(r.final_nmae)) {
        ++nmae_bins[std::min(static_cast<int>(r.final_nmae / 0.05), 20)];
      }
    }
    for (const auto& [e, n] : evals) f << "evals_met," << combo << ',' << e << ',' << n << '\n';
    for (const auto& [b, n] : nmae_bins)
      f << "nmae_unmet," << combo << ',' << fmt_double(b * 0.05) << ',' << n << '\n';
  }
}

// ------------------------------------------------------------------ report --

// Parity agreement per component pooled over every combo containing it.
inline std::string parity_report_line(const std::vector<ParityRow>& rows,
                                      const std::string& component) {
  std::vector<double> target_vals, achieved_vals;
  for (const auto& r : rows) {
    if (r.component != component) continue;
    target_vals.push_back(r.target_value);
    achieved_vals.push_back(r.achieved_value);
  }
  char buf[96];
  if (target_vals.size() < 2) {
    std::snprintf(buf, sizeof buf, "  %-3s  n/a (fewer than two points)", component.c_str());
    return buf;
  }
  try {
    const double r2 = parity_r2(target_vals, achieved_vals);
    std::snprintf(buf, sizeof buf, "  %-3s  R^2 = %.4f  (n = %zu)", component.c_str(), r2,
                  target_vals.size());
  } catch (const degenerate_error&) {
    std::snprintf(buf, sizeof buf, "  %-3s  n/a (targets have zero variance)",
                  component.c_str());
  }
  return buf;
}

inline std::string render_report(const std::vector<SummaryRow>& summary,
                                 const std::vector<ParityRow>& parity,
                                 const std::vector<int>& checkpoints) {
  std::string out;
  char buf[160];
  const auto combos = summary_combos(summary);

  int met = 0;
  long evals = 0;
  for (const auto& r : summary) {
    met += r.met ? 1 : 0;
    evals += r.evaluations;
  }
  out += "design selection campaign\n";
  out += "=========================\n";
  std::snprintf(buf, sizeof buf, "tasks: %zu (%zu combos)\n", summary.size(), combos.size());
  out += buf;
  std::snprintf(buf, sizeof buf, "threshold met: %d of %zu (%.1f%%)\n", met, summary.size(),
                summary.empty() ? 0.0 : 100.0 * met / static_cast<double>(summary.size()));
  out += buf;
  std::snprintf(buf, sizeof buf, "oracle evaluations logged during selection: %ld\n\n", evals);
  out += buf;

  out += "hit rate by evaluation budget\n";
  std::snprintf(buf, sizeof buf, "  %-10s", "combo");
  out += buf;
  for (int e : checkpoints) {
    std::snprintf(buf, sizeof buf, "  e<=%-4d", e);
    out += buf;
  }
  out += '\n';
  for (const auto& combo : combos) {
    std::snprintf(buf, sizeof buf, "  %-10s", combo.c_str());
    out += buf;
    for (int e : checkpoints) {
      std::snprintf(buf, sizeof buf, "  %6.3f ", summary_hit_rate(summary, combo, e));
      out += buf;
    }
    out += '\n';
  }

  out += "\nparity by component (met and budget-limited tasks pooled)\n";
  for (const char* comp : {"11", "22", "12"}) out += parity_report_line(parity, comp) + "\n";
  return out;
}

// ------------------------------------------------------------------ bundle --

// Writes every campaign artifact under `dir`. The stamp goes into each CSV
// header; keep it free of timestamps so identical runs stay byte-identical.
inline void write_campaign_outputs(const CampaignOutcome& o, const CampaignPlan& plan,
                                   const std::string& dir, const std::string& stamp) {
  namespace fs = std::filesystem;
  fs::create_directories(dir + "/targets");
  fs::create_directories(dir + "/results");

  for (std::size_t ti = 0; ti < o.targets.size(); ++ti)
    save_target_json(o.targets[ti], dir + "/targets/target_" + std::to_string(ti) + ".json");
  for (std::size_t ci = 0; ci < plan.combos.size(); ++ci) {
    const auto name = combo_name(plan.combos[ci]);
    for (std::size_t ti = 0; ti < o.results[ci].size(); ++ti) {
      TargetSpec t = o.targets[ti];
      t.active = plan.combos[ci];
      t.weights.resize(static_cast<Eigen::Index>(t.active.size()));
      for (std::size_t c = 0; c < t.active.size(); ++c)
        t.weights[static_cast<Eigen::Index>(c)] =
            plan.component_weights[static_cast<int>(t.active[c])];
      save_selection_result(o.results[ci][ti], t,
                            dir + "/results/result_" + name + "_" + std::to_string(ti) +
                                ".json");
    }
  }

  const auto summary = summarize(o, plan);
  const auto parity = parity_rows(o, plan);
  write_summary_csv(summary, dir + "/summary.csv", stamp);
  write_hitrates_csv(summary, plan.checkpoints, dir + "/hitrates.csv", stamp);
  write_parity_csv(parity, dir + "/parity.csv", stamp);
  write_histograms_csv(summary, dir + "/histograms.csv", stamp);

  std::ofstream rep(dir + "/report.txt");
  if (!rep) throw user_error("cannot write " + dir + "/report.txt");
  rep << render_report(summary, parity, plan.checkpoints);
}

}  // namespace baygds
