// Command-line workbench for the design selection pipeline: pool generation,
// featurization, surrogate training, active learning, selection and campaign
// runs, and report rendering. Exit codes: 0 success, 1 user error (bad input,
// bad config, stage mismatch), 2 internal error (training or oracle failure).

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "baygds/active_learning.hpp"
#include "baygds/campaign.hpp"
#include "baygds/common.hpp"
#include "baygds/config.hpp"
#include "baygds/designs.hpp"
#include "baygds/features.hpp"
#include "baygds/grid.hpp"
#include "baygds/oracle.hpp"
#include "baygds/selection.hpp"
#include "baygds/surrogate.hpp"

namespace {

using namespace baygds;

// Every text artifact carries this comment so later stages can verify it was
// produced under a compatible configuration. No timestamps: reruns must be
// byte-identical.
std::string artifact_stamp(const ExperimentConfig& cfg) {
  return "lineage=" + lineage_hex(cfg) + " full=" + hash_hex(full_config_hash(cfg)) +
         " tool=" BAYGDS_VERSION_STRING;
}

void check_pool_matches(const DesignPool& pool, const std::string& path,
                        const ExperimentConfig& cfg) {
  if (static_cast<int>(pool.designs.size()) != cfg.pool.count || pool.n != cfg.pool.size)
    throw config_error(path + ": holds " + std::to_string(pool.designs.size()) +
                       " designs of size " + std::to_string(pool.n) +
                       " but the config asks for " + std::to_string(cfg.pool.count) +
                       " of size " + std::to_string(cfg.pool.size) +
                       "; regenerate the pool or fix the config");
}

void check_model_lineage(const SurrogateModel& model, const std::string& path,
                         const ExperimentConfig& cfg) {
  if (model.config_hash != lineage_hash(cfg))
    throw config_error(path + ": model built under configuration " +
                       hash_hex(model.config_hash) + " but this run is " + lineage_hex(cfg) +
                       "; retrain the model or fix the config");
}

int cmd_gen_pool(const ExperimentConfig& cfg, const std::string& out) {
  const auto pool = generate_pool(cfg.pool.count, cfg.pool.size, cfg.pool.seed);
  save_pool(pool, out);
  std::printf("pool: %zu designs of size %d, %d duplicate grids -> %s\n", pool.designs.size(),
              pool.n, count_duplicates(pool), out.c_str());
  return 0;
}

int cmd_featurize(const ExperimentConfig& cfg, const std::string& pool_path,
                  const std::string& features_out, const std::string& pca_out) {
  const auto pool = load_pool(pool_path);
  check_pool_matches(pool, pool_path, cfg);

  const auto count = static_cast<Eigen::Index>(pool.designs.size());
  Eigen::MatrixXd X(count, 2 * static_cast<Eigen::Index>(pool.n) * pool.n);
  for (Eigen::Index i = 0; i < count; ++i)
    X.row(i) = correlation_features(pool.designs[static_cast<std::size_t>(i)]).transpose();

  const auto pca = fit_pca(X, cfg.features.n_z, pool.n);
  Eigen::MatrixXd Z_raw(count, cfg.features.n_z);
  for (Eigen::Index i = 0; i < count; ++i)
    Z_raw.row(i) = pca.project(X.row(i).transpose()).transpose();
  const auto stats = feature_stats(Z_raw);
  Eigen::MatrixXd Z(count, cfg.features.n_z);
  for (Eigen::Index i = 0; i < count; ++i)
    Z.row(i) = standardize_features(Z_raw.row(i).transpose(), stats).transpose();

  std::vector<int> ids(pool.designs.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i) + 1;
  save_features_csv(Z, ids, features_out, artifact_stamp(cfg));
  if (!pca_out.empty()) save_pca(pca, pca_out, lineage_hash(cfg));

  const double captured = pca.variances.sum();
  std::printf("features: %d coordinates per design, leading variance %s -> %s\n",
              cfg.features.n_z, fmt_double(captured).c_str(), features_out.c_str());
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& features_path,
              const std::string& labels_path, const std::string& model_out) {
  check_lineage(features_path, cfg);
  const auto table = load_features_csv(features_path);
  const auto states = make_schedule(schedule_spec(cfg));
  const auto labels = load_labels_csv(labels_path, states);

  Eigen::MatrixXd Z(static_cast<Eigen::Index>(labels.ids.size()), table.Z.cols());
  for (std::size_t i = 0; i < labels.ids.size(); ++i)
    Z.row(static_cast<Eigen::Index>(i)) = table.row(labels.ids[i]).transpose();

  const auto scfg = surrogate_config(cfg);
  const auto ystats = observation_stats(labels.Y_obs);
  Eigen::MatrixXd Y_std(labels.Y_obs.rows(), labels.Y_obs.cols());
  for (Eigen::Index i = 0; i < Y_std.rows(); ++i)
    Y_std.row(i) = standardize_observations(labels.Y_obs.row(i).transpose(), ystats).transpose();

  auto model = init_surrogate(Z, labels.ids, schedule_spec(cfg), ystats, scfg);
  const auto tstats = train_surrogate(model, Y_std, scfg, scfg.train_steps,
                                      scfg.restart_period, scfg.seed);
  model.config_hash = lineage_hash(cfg);
  save_model(model, model_out);
  std::printf("train: %zu designs, %d steps, best elbo %s -> %s\n", labels.ids.size(),
              tstats.steps, fmt_double(tstats.best_elbo).c_str(), model_out.c_str());
  return 0;
}

int cmd_al(const ExperimentConfig& cfg, const std::string& pool_path,
           const std::string& features_path, const std::string& model_out,
           const std::string& history_out, const std::string& labels_out,
           const std::string& checkpoint_dir) {
  const auto pool = load_pool(pool_path);
  check_pool_matches(pool, pool_path, cfg);
  check_lineage(features_path, cfg);
  const auto table = load_features_csv(features_path);
  const auto oracle = make_oracle(cfg.oracle, table);

  auto res = run_active_learning(pool, table, *oracle, schedule_spec(cfg),
                                 active_learning_config(cfg), surrogate_config(cfg),
                                 checkpoint_dir);
  res.model.config_hash = lineage_hash(cfg);
  save_model(res.model, model_out);
  const auto stamp = artifact_stamp(cfg);
  if (!history_out.empty()) save_history_csv(res.history, history_out, stamp);
  if (!labels_out.empty())
    save_labels_csv(res.model.labeled_ids, res.stresses, make_schedule(schedule_spec(cfg)),
                    labels_out, stamp);

  std::printf("active learning: %zu iterations, %d training labels, %ld oracle evaluations, "
              "final holdout mae %s -> %s\n",
              res.history.size() - 1, res.training_labels, res.oracle_evaluations,
              fmt_double(res.history.back().mae).c_str(), model_out.c_str());
  return 0;
}

int cmd_select(const ExperimentConfig& cfg, const std::string& pool_path,
               const std::string& features_path, const std::string& model_path,
               const std::string& target_path, const std::string& out) {
  const auto pool = load_pool(pool_path);
  check_pool_matches(pool, pool_path, cfg);
  check_lineage(features_path, cfg);
  const auto table = load_features_csv(features_path);
  const auto model = load_model(model_path);
  check_model_lineage(model, model_path, cfg);
  const auto target = load_target_json(target_path);
  const auto oracle = make_oracle(cfg.oracle, table);

  const auto res = run_selection(model, pool, table, *oracle, target, selection_config(cfg));
  save_selection_result(res, target, out);
  std::printf("select: design %d after %d evaluations, %s (nmae %s, threshold %s) -> %s\n",
              res.final_id, res.evaluations,
              res.met_threshold ? "threshold met" : "budget exhausted",
              fmt_double(res.final_nmae).c_str(), fmt_double(target.eta).c_str(), out.c_str());
  if (res.oracle_failed) {
    std::fprintf(stderr, "warning: oracle failed mid-run (%s); result covers %zu evaluations\n",
                 res.failure.c_str(), res.log.size());
    return 2;
  }
  return 0;
}

int cmd_campaign(const ExperimentConfig& cfg, const std::string& pool_path,
                 const std::string& features_path, const std::string& model_path,
                 const std::string& out_dir) {
  const auto pool = load_pool(pool_path);
  check_pool_matches(pool, pool_path, cfg);
  check_lineage(features_path, cfg);
  const auto table = load_features_csv(features_path);
  const auto model = load_model(model_path);
  check_model_lineage(model, model_path, cfg);
  const auto oracle = make_oracle(cfg.oracle, table);

  const auto plan = campaign_plan(cfg);
  const auto outcome = run_campaign(pool, table, model, *oracle, plan);
  write_campaign_outputs(outcome, plan, out_dir, artifact_stamp(cfg));
  save_config(cfg, out_dir + "/config.json");

  int met = 0, failed = 0;
  for (const auto& per_combo : outcome.results)
    for (const auto& r : per_combo) {
      met += r.met_threshold ? 1 : 0;
      failed += r.oracle_failed ? 1 : 0;
    }
  const auto tasks = plan.combos.size() * static_cast<std::size_t>(plan.n_targets);
  std::printf("campaign: %zu tasks (%zu combos x %d targets), %d met threshold, "
              "%ld selection evaluations -> %s\n",
              tasks, plan.combos.size(), plan.n_targets, met, outcome.selection_evaluations,
              out_dir.c_str());
  if (failed > 0) {
    std::fprintf(stderr, "warning: oracle failed in %d of %zu tasks\n", failed, tasks);
    return 2;
  }
  return 0;
}

int cmd_report(const ExperimentConfig& cfg, const std::string& dir, const std::string& out) {
  check_lineage(dir + "/summary.csv", cfg);
  const auto summary = load_summary_csv(dir + "/summary.csv");
  const auto parity = load_parity_csv(dir + "/parity.csv");
  const auto text = render_report(summary, parity, cfg.campaign.checkpoints);
  if (out.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    std::ofstream f(out);
    if (!f) throw user_error("cannot write " + out);
    f << text;
    std::printf("report: %zu summary rows -> %s\n", summary.size(), out.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"design selection workbench"};
  app.require_subcommand(0, 1);

  std::string config_path;
  std::vector<std::string> overrides;
  bool print_config = false;
  app.add_option("--config", config_path, "configuration file (json)");
  app.add_option("--set", overrides, "override one config key, e.g. --set pool.count=500")
      ->type_size(1)
      ->allow_extra_args(false);
  app.add_flag("--print-config", print_config, "print the effective configuration and exit");

  auto* gen = app.add_subcommand("gen-pool", "generate the design pool");
  std::string gen_out = "pool.bgds";
  gen->add_option("--out", gen_out, "pool output path");

  auto* feat = app.add_subcommand("featurize", "reduce designs to feature coordinates");
  std::string feat_pool = "pool.bgds", feat_out = "features.csv", feat_pca = "pca.bgpc";
  feat->add_option("--pool", feat_pool, "pool path");
  feat->add_option("--features", feat_out, "features output path");
  feat->add_option("--pca", feat_pca, "projection output path (empty to skip)");

  auto* train = app.add_subcommand("train", "fit the surrogate to an existing label table");
  std::string train_features = "features.csv", train_labels = "labels.csv",
              train_out = "model.bin";
  train->add_option("--features", train_features, "features path");
  train->add_option("--labels", train_labels, "labels path");
  train->add_option("--out", train_out, "model output path");

  auto* al = app.add_subcommand("al", "run the active learning loop");
  std::string al_pool = "pool.bgds", al_features = "features.csv", al_out = "model.bin",
              al_history = "history.csv", al_labels = "labels.csv", al_ckpt;
  al->add_option("--pool", al_pool, "pool path");
  al->add_option("--features", al_features, "features path");
  al->add_option("--out", al_out, "model output path");
  al->add_option("--history", al_history, "learning curve output path (empty to skip)");
  al->add_option("--labels", al_labels, "label table output path (empty to skip)");
  al->add_option("--checkpoints", al_ckpt, "checkpoint directory (empty to disable)");

  auto* sel = app.add_subcommand("select", "pick a design for one target response");
  std::string sel_pool = "pool.bgds", sel_features = "features.csv", sel_model = "model.bin",
              sel_target = "target.json", sel_out = "result.json";
  sel->add_option("--pool", sel_pool, "pool path");
  sel->add_option("--features", sel_features, "features path");
  sel->add_option("--model", sel_model, "model path");
  sel->add_option("--target", sel_target, "target path");
  sel->add_option("--out", sel_out, "result output path");

  auto* camp = app.add_subcommand("campaign", "run selection across targets and combinations");
  std::string camp_pool = "pool.bgds", camp_features = "features.csv", camp_model = "model.bin",
              camp_out = "campaign";
  int camp_jobs = 0;
  camp->add_option("--pool", camp_pool, "pool path");
  camp->add_option("--features", camp_features, "features path");
  camp->add_option("--model", camp_model, "model path");
  camp->add_option("--out", camp_out, "output directory");
  auto* jobs_opt = camp->add_option("--jobs", camp_jobs, "worker threads for selection tasks");

  auto* rep = app.add_subcommand("report", "re-render the text report from campaign tables");
  std::string rep_dir = "campaign", rep_out;
  rep->add_option("--dir", rep_dir, "campaign output directory");
  rep->add_option("--out", rep_out, "report output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    apply_env_overrides(cfg);
    for (const auto& entry : overrides) set_config_entry(cfg, entry);
    if (jobs_opt->count() > 0) cfg.campaign.jobs = camp_jobs;
    validate_config(cfg);

    if (print_config) {
      std::printf("%s\n", config_json(cfg).dump(2).c_str());
      std::printf("lineage %s\nfull    %s\n", lineage_hex(cfg).c_str(),
                  hash_hex(full_config_hash(cfg)).c_str());
      return 0;
    }
    if (gen->parsed()) return cmd_gen_pool(cfg, gen_out);
    if (feat->parsed()) return cmd_featurize(cfg, feat_pool, feat_out, feat_pca);
    if (train->parsed()) return cmd_train(cfg, train_features, train_labels, train_out);
    if (al->parsed())
      return cmd_al(cfg, al_pool, al_features, al_out, al_history, al_labels, al_ckpt);
    if (sel->parsed())
      return cmd_select(cfg, sel_pool, sel_features, sel_model, sel_target, sel_out);
    if (camp->parsed())
      return cmd_campaign(cfg, camp_pool, camp_features, camp_model, camp_out);
    if (rep->parsed()) return cmd_report(cfg, rep_dir, rep_out);
    std::fputs(app.help().c_str(), stderr);
    return 1;
  } catch (const user_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 2;
  }
}
