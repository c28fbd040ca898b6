#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "baygds/campaign.hpp"
#include "baygds/config.hpp"
#include "baygds/designs.hpp"
#include "baygds/oracle.hpp"

using namespace baygds;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::MessageMatches;

namespace {

// scoped environment override; restores nothing fancier than "unset"
struct EnvVar {
  std::string name;
  EnvVar(const std::string& n, const std::string& v) : name(n) {
    ::setenv(n.c_str(), v.c_str(), 1);
  }
  ~EnvVar() { ::unsetenv(name.c_str()); }
};

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::filesystem::path temp_dir(const char* stem) {
  const auto dir = std::filesystem::temp_directory_path() /
                   (std::string(stem) + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// ------------------------------------------------- campaign fixture --------

struct Fixture {
  DesignPool pool;
  FeatureTable table;
  SurrogateModel model;
  std::vector<int> train_ids;
};

SyntheticOracleConfig quiet_truth() {
  SyntheticOracleConfig ocfg;
  ocfg.seed = 7;
  ocfg.noise_std = 0.0;
  return ocfg;
}

const Fixture& fixture() {
  static const Fixture fx = [] {
    Fixture f;
    f.pool = generate_pool(60, 16, 1234);
    const int n_pool = static_cast<int>(f.pool.designs.size());
    Eigen::MatrixXd X(n_pool, 2 * 16 * 16);
    std::vector<int> ids;
    for (int i = 0; i < n_pool; ++i) {
      X.row(i) = correlation_features(f.pool.designs[static_cast<std::size_t>(i)]).transpose();
      ids.push_back(f.pool.designs[static_cast<std::size_t>(i)].id);
    }
    const PcaModel pca = fit_pca(X, 3, 16);
    Eigen::MatrixXd Z_raw(n_pool, 3);
    for (int i = 0; i < n_pool; ++i)
      Z_raw.row(i) = pca.project(X.row(i).transpose()).transpose();
    const FeatureStats fstats = feature_stats(Z_raw);
    f.table.ids = ids;
    f.table.Z.resize(n_pool, 3);
    for (int i = 0; i < n_pool; ++i)
      f.table.Z.row(i) = standardize_features(Z_raw.row(i).transpose(), fstats).transpose();

    const ScheduleSpec obs_schedule{4, 0.0};
    const auto states = make_schedule(obs_schedule);
    SyntheticOracle oracle(f.table, quiet_truth());
    f.train_ids.assign(ids.begin(), ids.begin() + 12);
    Eigen::MatrixXd Y_raw(12, static_cast<Eigen::Index>(states.size()) * 2);
    Eigen::MatrixXd Z_train(12, 3);
    for (int i = 0; i < 12; ++i) {
      const auto Ps = oracle.evaluate(f.pool.by_id(f.train_ids[static_cast<std::size_t>(i)]),
                                      states);
      for (std::size_t j = 0; j < Ps.size(); ++j)
        Y_raw.block(i, 2 * static_cast<Eigen::Index>(j), 1, 2) =
            extract_obs(Ps[j]).transpose();
      Z_train.row(i) = f.table.row(f.train_ids[static_cast<std::size_t>(i)]).transpose();
    }
    const ObservationStats ystats = observation_stats(Y_raw);
    Eigen::MatrixXd Y_std(12, Y_raw.cols());
    for (int i = 0; i < 12; ++i)
      Y_std.row(i) = standardize_observations(Y_raw.row(i).transpose(), ystats).transpose();

    SurrogateConfig scfg;
    scfg.mc_samples = 16;
    scfg.seed = 5;
    f.model = init_surrogate(Z_train, f.train_ids, obs_schedule, ystats, scfg);
    train_surrogate(f.model, Y_std, scfg, 150, 75, 31);
    return f;
  }();
  return fx;
}

CampaignPlan small_plan() {
  CampaignPlan plan;
  plan.n_targets = 3;
  plan.eta = 0.05;
  plan.e_max = 6;
  plan.target_schedule = ScheduleSpec{4, 45.0};
  plan.combos = {combo_from_name("11"), combo_from_name("11-22")};
  plan.checkpoints = {1, 3, 6};
  plan.mc_samples = 16;
  plan.seed = 77;
  return plan;
}

class FailingOracle : public Oracle {
 public:
  FailingOracle(const FeatureTable& table, const SyntheticOracleConfig& cfg, int fail_at)
      : inner_(table, cfg), fail_at_(fail_at) {}
  std::string name() const override { return "failing"; }

 protected:
  std::vector<Eigen::Matrix3d> evaluate_impl(
      const Microstructure& design, const std::vector<DeformationState>& states) override {
    if (++calls_ >= fail_at_) throw oracle_error("wire unplugged");
    return inner_.evaluate(design, states);
  }

 private:
  SyntheticOracle inner_;
  int fail_at_;
  int calls_ = 0;
};

// ------------------------------------------------------- cli helpers -------

struct CliRun {
  int rc;
  std::string out;
  std::string err;
};

CliRun run_cli(const std::filesystem::path& dir, const std::string& args,
               const std::string& env_prefix = "") {
  const std::string cmd = "cd " + dir.string() + " && " + env_prefix +
                          (env_prefix.empty() ? "" : " ") + BAYGDS_CLI_PATH " " + args +
                          " > cli_stdout.txt 2> cli_stderr.txt";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp((dir / "cli_stdout.txt").string()),
          slurp((dir / "cli_stderr.txt").string())};
}

// small enough that every pipeline stage finishes in well under a second
ExperimentConfig desk_config() {
  ExperimentConfig c;
  c.pool = {50, 16, 7};
  c.features.n_z = 3;
  c.schedule = {4, 0.0};
  c.oracle.noise = 0.0;
  c.oracle.seed = 5;
  c.surrogate.mc_samples = 16;
  c.surrogate.train_steps = 120;
  c.surrogate.restart_period = 60;
  c.surrogate.retrain_steps = 60;
  c.surrogate.retrain_restart = 30;
  c.surrogate.seed = 3;
  c.active_learning = {6, 8, 3, 0.0, 2, 1, 0, 0, "lhs", "variance", 21};
  c.selection.e_max = 8;
  c.selection.mc_samples = 16;
  c.campaign.n_targets = 2;
  c.campaign.checkpoints = {1, 5};
  c.campaign.combos = {"11", "11-22"};
  c.campaign.seed = 99;
  return c;
}

}  // namespace

// ===================================================== config document =====

TEST_CASE("config document roundtrips through json and disk") {
  ExperimentConfig c;
  c.pool.count = 123;
  c.oracle.noise = 0.5;
  c.campaign.combos = {"12", "11-22-12"};
  c.selection.point_mode = true;

  const auto j = config_json(c);
  for (const char* section : {"pool", "features", "schedule", "oracle", "surrogate",
                              "active_learning", "selection", "campaign"})
    REQUIRE(j.contains(section));

  const auto back = config_from_json(j);
  REQUIRE(full_config_hash(back) == full_config_hash(c));
  REQUIRE(back.pool.count == 123);
  REQUIRE(back.selection.point_mode);
  REQUIRE(back.campaign.combos == c.campaign.combos);

  const auto dir = temp_dir("baygds_cfg");
  const auto path = (dir / "config.json").string();
  save_config(c, path);
  const auto loaded = load_config(path);
  REQUIRE(full_config_hash(loaded) == full_config_hash(c));
  std::filesystem::remove_all(dir);
}

TEST_CASE("config parsing rejects unknown keys and wrong types") {
  REQUIRE_THROWS_MATCHES(config_from_json({{"pols", {{"count", 5}}}}), config_error,
                         MessageMatches(ContainsSubstring("unknown key")));
  REQUIRE_THROWS_MATCHES(config_from_json({{"pool", {{"cnt", 5}}}}), config_error,
                         MessageMatches(ContainsSubstring("pool.cnt")));
  REQUIRE_THROWS_MATCHES(config_from_json({{"pool", {{"count", "many"}}}}), config_error,
                         MessageMatches(ContainsSubstring("wrong type")));
  REQUIRE_THROWS_MATCHES(config_from_json({{"selection", {{"eta", nlohmann::json::array()}}}}),
                         config_error, MessageMatches(ContainsSubstring("selection.eta")));
  REQUIRE_THROWS_AS(config_from_json(nlohmann::json::array()), config_error);
}

TEST_CASE("partial config keeps defaults for missing keys") {
  const auto c = config_from_json({{"pool", {{"count", 5}}}});
  REQUIRE(c.pool.count == 5);
  REQUIRE(c.pool.size == ExperimentConfig{}.pool.size);
  REQUIRE(c.surrogate.train_steps == ExperimentConfig{}.surrogate.train_steps);
  REQUIRE(c.campaign.combos.size() == 7);
}

TEST_CASE("config validation catches out-of-range values") {
  auto check = [](void (*mutate)(ExperimentConfig&), const char* needle) {
    ExperimentConfig c;
    mutate(c);
    REQUIRE_THROWS_MATCHES(validate_config(c), config_error,
                           MessageMatches(ContainsSubstring(needle)));
  };
  check([](ExperimentConfig& c) { c.pool.size = 15; }, "even");
  check([](ExperimentConfig& c) { c.pool.count = 0; }, "pool.count");
  check([](ExperimentConfig& c) { c.selection.eta = 0.0; }, "eta");
  check([](ExperimentConfig& c) { c.campaign.checkpoints = {5, 5}; }, "increase strictly");
  check([](ExperimentConfig& c) { c.campaign.combos = {"33"}; }, "33");
  check([](ExperimentConfig& c) { c.active_learning.partition = "sorted"; }, "sorted");
  check([](ExperimentConfig& c) { c.oracle.mode = "psychic"; }, "oracle.mode");
  check([](ExperimentConfig& c) { c.oracle.mode = "subprocess"; }, "command");
  check([](ExperimentConfig& c) { c.surrogate.lr_max = 1e-9; }, "lr_max");
  REQUIRE_NOTHROW(validate_config(ExperimentConfig{}));
}

TEST_CASE("environment overrides apply and reject unknown names") {
  SECTION("a known key applies") {
    EnvVar v("BAYGDS_SELECTION_ETA", "0.07");
    ExperimentConfig c;
    apply_env_overrides(c);
    REQUIRE(c.selection.eta == 0.07);
  }
  SECTION("list-valued keys parse comma-separated") {
    EnvVar v("BAYGDS_CAMPAIGN_CHECKPOINTS", "2,4,8");
    EnvVar w("BAYGDS_CAMPAIGN_COMBOS", "11,22-12");
    ExperimentConfig c;
    apply_env_overrides(c);
    REQUIRE(c.campaign.checkpoints == std::vector<int>{2, 4, 8});
    REQUIRE(c.campaign.combos == std::vector<std::string>{"11", "22-12"});
  }
  SECTION("unknown names are typos, not silence") {
    EnvVar v("BAYGDS_SELECTION_ETTA", "0.07");
    ExperimentConfig c;
    REQUIRE_THROWS_MATCHES(apply_env_overrides(c), config_error,
                           MessageMatches(ContainsSubstring("BAYGDS_SELECTION_ETTA")));
  }
  SECTION("malformed values name the problem") {
    EnvVar v("BAYGDS_POOL_COUNT", "many");
    ExperimentConfig c;
    REQUIRE_THROWS_AS(apply_env_overrides(c), user_error);
  }
}

TEST_CASE("command-line style overrides share the env registry") {
  ExperimentConfig c;
  set_config_entry(c, "selection.e_max=9");
  set_config_entry(c, "active_learning.partition=random");
  REQUIRE(c.selection.e_max == 9);
  REQUIRE(c.active_learning.partition == "random");
  REQUIRE_THROWS_MATCHES(set_config_entry(c, "selection.emax=9"), config_error,
                         MessageMatches(ContainsSubstring("selection.emax")));
  REQUIRE_THROWS_MATCHES(set_config_entry(c, "no_equals_sign"), config_error,
                         MessageMatches(ContainsSubstring("section.key=value")));
}

TEST_CASE("config hashes separate generative from downstream sections") {
  ExperimentConfig base;
  const auto lineage0 = lineage_hash(base);
  const auto full0 = full_config_hash(base);
  REQUIRE(lineage_hex(base).size() == 16);

  ExperimentConfig sel = base;
  sel.selection.eta = 0.01;
  ExperimentConfig camp = base;
  camp.campaign.n_targets = 9;
  // downstream knobs leave trained artifacts valid
  REQUIRE(lineage_hash(sel) == lineage0);
  REQUIRE(lineage_hash(camp) == lineage0);
  REQUIRE(full_config_hash(sel) != full0);
  REQUIRE(full_config_hash(camp) != full0);

  // generative knobs orphan them
  for (auto mutate : {+[](ExperimentConfig& c) { c.pool.seed = 2; },
                      +[](ExperimentConfig& c) { c.features.n_z = 5; },
                      +[](ExperimentConfig& c) { c.schedule.beta_deg = 1.0; },
                      +[](ExperimentConfig& c) { c.oracle.noise = 0.5; },
                      +[](ExperimentConfig& c) { c.surrogate.train_steps = 7; },
                      +[](ExperimentConfig& c) { c.active_learning.t_max = 9; }}) {
    ExperimentConfig g = base;
    mutate(g);
    REQUIRE(lineage_hash(g) != lineage0);
    REQUIRE(full_config_hash(g) != full0);
  }
}

TEST_CASE("lineage comments gate artifact reuse") {
  const auto dir = temp_dir("baygds_lineage");
  ExperimentConfig c;

  const auto good = (dir / "good.csv").string();
  {
    std::ofstream f(good);
    f << "# lineage=" << lineage_hex(c) << " full=feedfacefeedface tool=x\nid,z1\n1,0.5\n";
  }
  REQUIRE(read_lineage_comment(good) == lineage_hex(c));
  REQUIRE_NOTHROW(check_lineage(good, c));

  ExperimentConfig other = c;
  other.pool.seed = 999;
  REQUIRE_THROWS_MATCHES(check_lineage(good, other), config_error,
                         MessageMatches(ContainsSubstring("regenerate the artifact")));

  const auto bare = (dir / "bare.csv").string();
  {
    std::ofstream f(bare);
    f << "id,z1\n1,0.5\n";
  }
  REQUIRE_THROWS_MATCHES(read_lineage_comment(bare), config_error,
                         MessageMatches(ContainsSubstring("no lineage header")));
  std::filesystem::remove_all(dir);
}

TEST_CASE("module bridges map config onto stage types") {
  ExperimentConfig c;
  c.surrogate.n_r = 2;
  c.surrogate.lr_max = 0.2;
  c.active_learning.partition = "kmedoids";
  c.active_learning.acquisition = "random";
  c.selection.shortlist_size = 12;
  c.selection.weight_22 = 3.0;
  c.schedule = {6, 15.0};
  c.campaign.beta_deg = 30.0;
  c.campaign.combos = {"22", "11-12"};

  const auto s = surrogate_config(c);
  REQUIRE(s.n_r == 2);
  REQUIRE(s.lr_max == 0.2);
  const auto a = active_learning_config(c);
  REQUIRE(a.partition == PartitionStrategy::KMedoids);
  REQUIRE(a.acquisition == AcquisitionRule::Random);
  const auto sel = selection_config(c);
  REQUIRE(sel.shortlist_size == 12);
  REQUIRE(schedule_spec(c).n_increments == 6);
  REQUIRE(schedule_spec(c).beta_deg == 15.0);
  REQUIRE(component_weight(c.selection, StressComponent::P22) == 3.0);

  const auto plan = campaign_plan(c);
  REQUIRE(plan.target_schedule.n_increments == 6);
  REQUIRE(plan.target_schedule.beta_deg == 30.0);
  REQUIRE(plan.combos ==
          std::vector<std::vector<StressComponent>>{
              {StressComponent::P22}, {StressComponent::P11, StressComponent::P12}});
  REQUIRE(plan.component_weights == Eigen::Vector3d(1.0, 3.0, 1.0));

  const auto& fx = fixture();
  const auto oracle = make_oracle(c.oracle, fx.table);
  REQUIRE(oracle->name() == "synthetic");
  const auto states = make_schedule(ScheduleSpec{2, 0.0});
  REQUIRE(oracle->evaluate(fx.pool.by_id(1), states).size() == states.size());

  OracleSection bad;
  bad.mode = "subprocess";
  REQUIRE_THROWS_AS(make_oracle(bad, fx.table), config_error);
  bad.mode = "psychic";
  REQUIRE_THROWS_AS(make_oracle(bad, fx.table), config_error);
}

// ========================================================== campaigns ======

TEST_CASE("campaign draws unseen targets and shares them across combos") {
  const auto& fx = fixture();
  const auto plan = small_plan();
  SyntheticOracle oracle(fx.table, quiet_truth());
  const auto outcome = run_campaign(fx.pool, fx.table, fx.model, oracle, plan);

  REQUIRE(outcome.target_ids.size() == 3);
  REQUIRE(std::is_sorted(outcome.target_ids.begin(), outcome.target_ids.end()));
  const std::set<int> unique(outcome.target_ids.begin(), outcome.target_ids.end());
  REQUIRE(unique.size() == 3);
  for (int id : outcome.target_ids) {
    REQUIRE(std::find(fx.train_ids.begin(), fx.train_ids.end(), id) == fx.train_ids.end());
    REQUIRE(std::find(fx.table.ids.begin(), fx.table.ids.end(), id) != fx.table.ids.end());
  }

  REQUIRE(outcome.targets.size() == 3);
  for (const auto& t : outcome.targets) {
    REQUIRE(t.active.size() == 3);
    REQUIRE(t.schedule.beta_deg == 45.0);
    REQUIRE((target_mean_abs(t).array() > 0).all());
  }
  REQUIRE(outcome.target_evaluations == 3);

  REQUIRE(outcome.results.size() == 2);
  long logged = 0;
  for (const auto& per_combo : outcome.results) {
    REQUIRE(per_combo.size() == 3);
    for (const auto& r : per_combo) {
      REQUIRE(r.final_id >= 1);
      REQUIRE(r.evaluations <= plan.e_max);
      REQUIRE_FALSE(r.oracle_failed);
      logged += r.evaluations;
    }
  }
  REQUIRE(outcome.selection_evaluations == logged);

  // same plan, fresh oracle: bitwise repeat
  SyntheticOracle oracle2(fx.table, quiet_truth());
  const auto again = run_campaign(fx.pool, fx.table, fx.model, oracle2, plan);
  REQUIRE(again.target_ids == outcome.target_ids);
  const auto dir = temp_dir("baygds_campaign_rerun");
  write_summary_csv(summarize(outcome, plan), (dir / "a.csv").string(), "stamp");
  write_summary_csv(summarize(again, plan), (dir / "b.csv").string(), "stamp");
  REQUIRE(slurp((dir / "a.csv").string()) == slurp((dir / "b.csv").string()));

  // a different seed draws a different campaign
  auto shifted = plan;
  shifted.seed = 78;
  SyntheticOracle oracle3(fx.table, quiet_truth());
  const auto other = run_campaign(fx.pool, fx.table, fx.model, oracle3, shifted);
  write_summary_csv(summarize(other, shifted), (dir / "c.csv").string(), "stamp");
  REQUIRE(slurp((dir / "a.csv").string()) != slurp((dir / "c.csv").string()));
  std::filesystem::remove_all(dir);
}

TEST_CASE("campaign summaries aggregate hits, parity, and histograms") {
  const auto& fx = fixture();
  const auto plan = small_plan();
  SyntheticOracle oracle(fx.table, quiet_truth());
  const auto outcome = run_campaign(fx.pool, fx.table, fx.model, oracle, plan);

  const auto summary = summarize(outcome, plan);
  REQUIRE(summary.size() == 6);
  REQUIRE(summary[0].combo == "11");
  REQUIRE(summary[3].combo == "11-22");
  for (std::size_t i = 0; i < summary.size(); ++i) {
    REQUIRE(summary[i].target_index == static_cast<int>(i % 3));
    REQUIRE(summary[i].target_id == outcome.target_ids[i % 3]);
  }

  // per-combo hit rates agree with the selection module's accounting
  for (std::size_t ci = 0; ci < plan.combos.size(); ++ci)
    for (int e : plan.checkpoints)
      REQUIRE(summary_hit_rate(summary, combo_name(plan.combos[ci]), e) ==
              hit_rate(outcome.results[ci], e));
  REQUIRE(summary_hit_rate(summary, "11", 1) <= summary_hit_rate(summary, "11", 6));
  REQUIRE_THROWS_AS(summary_hit_rate(summary, "22", 6), size_error);

  const auto parity = parity_rows(outcome, plan);
  REQUIRE(parity.size() == 3 * 1 + 3 * 2);  // one row per task component
  for (const auto& r : parity) {
    REQUIRE(r.target_value > 0);
    REQUIRE(std::isfinite(r.achieved_value));
  }

  const auto dir = temp_dir("baygds_campaign_tables");
  write_summary_csv(summary, (dir / "summary.csv").string(), "lineage=aa full=bb tool=t");
  const auto summary_back = load_summary_csv((dir / "summary.csv").string());
  REQUIRE(summary_back.size() == summary.size());
  for (std::size_t i = 0; i < summary.size(); ++i) {
    REQUIRE(summary_back[i].combo == summary[i].combo);
    REQUIRE(summary_back[i].final_id == summary[i].final_id);
    REQUIRE(summary_back[i].met == summary[i].met);
    REQUIRE(summary_back[i].evaluations == summary[i].evaluations);
    REQUIRE(summary_back[i].final_nmae == summary[i].final_nmae);
    REQUIRE(summary_back[i].lambda == summary[i].lambda);
  }
  write_parity_csv(parity, (dir / "parity.csv").string(), "");
  const auto parity_back = load_parity_csv((dir / "parity.csv").string());
  REQUIRE(parity_back.size() == parity.size());
  for (std::size_t i = 0; i < parity.size(); ++i) {
    REQUIRE(parity_back[i].component == parity[i].component);
    REQUIRE(parity_back[i].target_value == parity[i].target_value);
    REQUIRE(parity_back[i].achieved_value == parity[i].achieved_value);
  }

  // histogram mass equals the met/unmet row split, combo by combo
  write_histograms_csv(summary, (dir / "hist.csv").string(), "");
  const auto lines = read_data_lines((dir / "hist.csv").string());
  for (const auto& combo : summary_combos(summary)) {
    int met = 0, unmet_finite = 0;
    for (const auto& r : summary) {
      if (r.combo != combo) continue;
      if (r.met)
        ++met;
      else if (std::isfinite(r.final_nmae))
        ++unmet_finite;
    }
    int hist_met = 0, hist_unmet = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto cols = split_csv_row(lines[i]);
      if (cols[1] != combo) continue;
      if (cols[0] == "evals_met") hist_met += static_cast<int>(parse_long(cols[3]));
      if (cols[0] == "nmae_unmet") hist_unmet += static_cast<int>(parse_long(cols[3]));
    }
    REQUIRE(hist_met == met);
    REQUIRE(hist_unmet == unmet_finite);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("campaign outputs land in one directory and rerun byte-identical") {
  const auto& fx = fixture();
  const auto plan = small_plan();
  const auto dir = temp_dir("baygds_campaign_out");

  SyntheticOracle oracle(fx.table, quiet_truth());
  const auto outcome = run_campaign(fx.pool, fx.table, fx.model, oracle, plan);
  write_campaign_outputs(outcome, plan, (dir / "a").string(), "lineage=aa full=bb tool=t");

  for (const char* name : {"summary.csv", "hitrates.csv", "parity.csv", "histograms.csv",
                           "report.txt"})
    REQUIRE(std::filesystem::exists(dir / "a" / name));
  for (int ti = 0; ti < plan.n_targets; ++ti) {
    REQUIRE(std::filesystem::exists(dir / "a" / "targets" /
                                    ("target_" + std::to_string(ti) + ".json")));
    REQUIRE(std::filesystem::exists(dir / "a" / "results" /
                                    ("result_11_" + std::to_string(ti) + ".json")));
    REQUIRE(std::filesystem::exists(dir / "a" / "results" /
                                    ("result_11-22_" + std::to_string(ti) + ".json")));
  }

  // saved targets reload as valid specs for the stored combo
  const auto t0 = load_target_json((dir / "a" / "targets" / "target_0.json").string());
  REQUIRE(t0.active.size() == 3);
  REQUIRE_NOTHROW(validate_target(t0));

  const auto report = slurp((dir / "a" / "report.txt").string());
  REQUIRE_THAT(report, ContainsSubstring("design selection campaign"));
  REQUIRE_THAT(report, ContainsSubstring("hit rate by evaluation budget"));
  REQUIRE_THAT(report, ContainsSubstring("11-22"));
  REQUIRE_THAT(report, ContainsSubstring("e<=6"));
  REQUIRE_THAT(report, ContainsSubstring("R^2"));

  SyntheticOracle oracle2(fx.table, quiet_truth());
  const auto again = run_campaign(fx.pool, fx.table, fx.model, oracle2, plan);
  write_campaign_outputs(again, plan, (dir / "b").string(), "lineage=aa full=bb tool=t");
  for (const char* name : {"summary.csv", "hitrates.csv", "parity.csv", "histograms.csv",
                           "report.txt"})
    REQUIRE(slurp((dir / "a" / name).string()) == slurp((dir / "b" / name).string()));
  std::filesystem::remove_all(dir);
}

TEST_CASE("campaign validates its plan and survives oracle failure mid-run") {
  const auto& fx = fixture();
  SyntheticOracle oracle(fx.table, quiet_truth());

  auto bad = small_plan();
  bad.n_targets = 0;
  REQUIRE_THROWS_AS(run_campaign(fx.pool, fx.table, fx.model, oracle, bad), config_error);
  bad = small_plan();
  bad.combos.clear();
  REQUIRE_THROWS_AS(run_campaign(fx.pool, fx.table, fx.model, oracle, bad), config_error);
  bad = small_plan();
  bad.n_targets = 49;  // only 48 designs were never labeled
  REQUIRE_THROWS_AS(run_campaign(fx.pool, fx.table, fx.model, oracle, bad), size_error);

  // dying while labeling targets is fatal: there is nothing to select against
  FailingOracle dying(fx.table, quiet_truth(), 2);
  REQUIRE_THROWS_AS(run_campaign(fx.pool, fx.table, fx.model, dying, small_plan()),
                    oracle_error);

  // dying mid-selection yields marked results, not a crash
  FailingOracle limping(fx.table, quiet_truth(), 3 + 4);
  const auto outcome = run_campaign(fx.pool, fx.table, fx.model, limping, small_plan());
  int failed = 0;
  for (const auto& per_combo : outcome.results)
    for (const auto& r : per_combo) failed += r.oracle_failed ? 1 : 0;
  REQUIRE(failed > 0);
  const auto summary = summarize(outcome, small_plan());
  REQUIRE(summary.size() == 6);
  const auto parity = parity_rows(outcome, small_plan());
  REQUIRE(parity.size() < 9);  // tasks with no verified response carry no parity row
}

// ================================================================ cli ======

TEST_CASE("cli pipeline runs end to end and reproduces byte-identical campaigns") {
  const auto dir = temp_dir("baygds_cli_pipe");
  const auto cfg = desk_config();
  save_config(cfg, (dir / "config.json").string());

  auto gen = run_cli(dir, "--config config.json gen-pool --out pool.bgds");
  INFO(gen.err);
  REQUIRE(gen.rc == 0);
  REQUIRE(std::filesystem::exists(dir / "pool.bgds"));

  auto feat = run_cli(dir,
                      "--config config.json featurize --pool pool.bgds --features features.csv "
                      "--pca pca.bgpc");
  INFO(feat.err);
  REQUIRE(feat.rc == 0);
  // the artifact's lineage comment matches the hash computed from the config
  REQUIRE(read_lineage_comment((dir / "features.csv").string()) == lineage_hex(cfg));
  std::uint64_t pca_hash = 0;
  load_pca((dir / "pca.bgpc").string(), &pca_hash);
  REQUIRE(pca_hash == lineage_hash(cfg));

  auto al = run_cli(dir,
                    "--config config.json al --pool pool.bgds --features features.csv "
                    "--out model.bin --history history.csv --labels labels.csv");
  INFO(al.err);
  REQUIRE(al.rc == 0);
  const auto model = load_model((dir / "model.bin").string());
  REQUIRE(model.config_hash == lineage_hash(cfg));
  REQUIRE(read_lineage_comment((dir / "history.csv").string()) == lineage_hex(cfg));

  // offline retraining from the exported labels reuses the same designs
  auto train = run_cli(dir,
                       "--config config.json train --features features.csv "
                       "--labels labels.csv --out model_retrained.bin");
  INFO(train.err);
  REQUIRE(train.rc == 0);
  const auto retrained = load_model((dir / "model_retrained.bin").string());
  auto sorted_ids = model.labeled_ids;
  std::sort(sorted_ids.begin(), sorted_ids.end());
  REQUIRE(retrained.labeled_ids == sorted_ids);  // label table is keyed by id

  auto camp_a = run_cli(dir,
                        "--config config.json campaign --pool pool.bgds "
                        "--features features.csv --model model.bin --out camp_a");
  INFO(camp_a.err);
  REQUIRE(camp_a.rc == 0);
  auto camp_b = run_cli(dir,
                        "--config config.json campaign --pool pool.bgds "
                        "--features features.csv --model model.bin --out camp_b");
  REQUIRE(camp_b.rc == 0);
  for (const char* name : {"summary.csv", "hitrates.csv", "parity.csv", "histograms.csv",
                           "report.txt", "config.json"})
    REQUIRE(slurp((dir / "camp_a" / name).string()) == slurp((dir / "camp_b" / name).string()));

  // a campaign target replayed through single-shot selection
  auto sel = run_cli(dir,
                     "--config config.json select --pool pool.bgds --features features.csv "
                     "--model model.bin --target camp_a/targets/target_0.json --out result.json");
  INFO(sel.err);
  REQUIRE(sel.rc == 0);
  const auto result = nlohmann::json::parse(slurp((dir / "result.json").string()));
  REQUIRE(result.at("final_id").get<int>() >= 1);
  REQUIRE(result.at("evaluations").get<int>() <= cfg.selection.e_max);

  // report re-renders the same text the campaign wrote
  auto rep = run_cli(dir, "--config config.json report --dir camp_a");
  REQUIRE(rep.rc == 0);
  REQUIRE(rep.out == slurp((dir / "camp_a" / "report.txt").string()));
  std::filesystem::remove_all(dir);
}

TEST_CASE("cli config precedence is flags over environment over file") {
  const auto dir = temp_dir("baygds_cli_prec");
  auto cfg = desk_config();
  cfg.pool.count = 50;
  save_config(cfg, (dir / "config.json").string());

  auto from_file = run_cli(dir, "--config config.json --print-config");
  REQUIRE(from_file.rc == 0);
  REQUIRE_THAT(from_file.out, ContainsSubstring("\"count\": 50"));

  auto from_env = run_cli(dir, "--config config.json --print-config", "BAYGDS_POOL_COUNT=77");
  REQUIRE(from_env.rc == 0);
  REQUIRE_THAT(from_env.out, ContainsSubstring("\"count\": 77"));

  auto from_flag = run_cli(dir, "--config config.json --set pool.count=88 --print-config",
                           "BAYGDS_POOL_COUNT=77");
  REQUIRE(from_flag.rc == 0);
  REQUIRE_THAT(from_flag.out, ContainsSubstring("\"count\": 88"));

  // the printed hashes follow the effective document
  ExperimentConfig effective = cfg;
  effective.pool.count = 88;
  REQUIRE_THAT(from_flag.out, ContainsSubstring(lineage_hex(effective)));
  std::filesystem::remove_all(dir);
}

TEST_CASE("cli maps error classes onto exit codes") {
  const auto dir = temp_dir("baygds_cli_exit");
  const auto cfg = desk_config();
  save_config(cfg, (dir / "config.json").string());
  REQUIRE(run_cli(dir, "--config config.json gen-pool --out pool.bgds").rc == 0);
  REQUIRE(run_cli(dir,
                  "--config config.json featurize --pool pool.bgds --features features.csv "
                  "--pca pca.bgpc")
              .rc == 0);

  SECTION("help and usage") {
    REQUIRE(run_cli(dir, "--help").rc == 0);
    REQUIRE(run_cli(dir, "--no-such-flag").rc == 1);
    REQUIRE(run_cli(dir, "").rc == 1);  // no subcommand
  }

  SECTION("user errors exit 1") {
    auto missing = run_cli(dir, "--config config.json report --dir nowhere");
    REQUIRE(missing.rc == 1);
    REQUIRE_THAT(missing.err, ContainsSubstring("error:"));

    // truncated pool file
    const auto bytes = slurp((dir / "pool.bgds").string());
    {
      std::ofstream f((dir / "short.bgds").string(), std::ios::binary);
      f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    auto truncated = run_cli(dir,
                             "--config config.json featurize --pool short.bgds "
                             "--features x.csv --pca ''");
    REQUIRE(truncated.rc == 1);
    REQUIRE_THAT(truncated.err, ContainsSubstring("truncated"));

    // unknown environment override
    auto typo = run_cli(dir, "--config config.json gen-pool --out y.bgds",
                        "BAYGDS_POOL_CONT=60");
    REQUIRE(typo.rc == 1);
    REQUIRE_THAT(typo.err, ContainsSubstring("BAYGDS_POOL_CONT"));

    // generative override orphans the features table
    auto orphaned = run_cli(dir,
                            "--config config.json --set oracle.seed=1234 select "
                            "--pool pool.bgds --features features.csv --model m.bin "
                            "--target t.json --out r.json");
    REQUIRE(orphaned.rc == 1);
    REQUIRE_THAT(orphaned.err, ContainsSubstring("regenerate the artifact"));

    // pool does not match the overridden config
    auto mismatched = run_cli(dir,
                              "--config config.json --set pool.count=60 featurize "
                              "--pool pool.bgds --features x.csv --pca ''");
    REQUIRE(mismatched.rc == 1);
    REQUIRE_THAT(mismatched.err, ContainsSubstring("regenerate the pool"));
  }

  SECTION("internal errors exit 2") {
    // a config whose oracle command dies on the first request: the pipeline
    // stages before the oracle succeed, the first evaluation fails
    auto broken = desk_config();
    broken.oracle.mode = "subprocess";
    broken.oracle.command = "/bin/false";
    save_config(broken, (dir / "broken.json").string());
    REQUIRE(run_cli(dir, "--config broken.json gen-pool --out bpool.bgds").rc == 0);
    REQUIRE(run_cli(dir,
                    "--config broken.json featurize --pool bpool.bgds "
                    "--features bfeatures.csv --pca ''")
                .rc == 0);
    auto al = run_cli(dir,
                      "--config broken.json al --pool bpool.bgds --features bfeatures.csv "
                      "--out bmodel.bin --history '' --labels ''");
    REQUIRE(al.rc == 2);
    REQUIRE_THAT(al.err, ContainsSubstring("internal error"));
  }
  std::filesystem::remove_all(dir);
}
