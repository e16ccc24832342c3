#include "darling/harness.hpp"

#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace darling;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("darling_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

ResultRow row(const std::string& algo, std::uint64_t seed, int t, double cum_reward, double cum_regret,
              int restarts = 0, std::int64_t wall = 0) {
  ResultRow r;
  r.run_id = "tabular_lock|ps-geometric|0.6|" + algo;
  r.seed = seed;
  r.algorithm = algo;
  r.env = "tabular_lock";
  r.protocol = "ps-geometric";
  r.xi_or_drift = "0.6";
  r.t = t;
  r.cum_reward = cum_reward;
  r.cum_regret = cum_regret;
  r.restart_count = restarts;
  r.wall_ns = wall;
  return r;
}

}  // namespace

TEST_CASE("config parsing fills defaults and applies keys") {
  const auto cfg = parse_config(R"({
    "environment": {"kind": "chain_lock", "params": {"chains": 5, "seed": 3}},
    "protocol": {"kind": "ps-even", "changes": 4},
    "episodes": 500,
    "seeds": [7, 8],
    "algorithms": ["darling", {"kind": "periodic", "window": 25, "label": "P25"}],
    "detector": {"profile": "theory", "gamma": 1.5},
    "regret_mode": "realized",
    "timing": false
  })");
  CHECK(cfg.environment.kind == "chain_lock");
  CHECK(cfg.environment.chain.seed == 3u);
  CHECK(cfg.protocol.kind == "ps-even");
  CHECK(cfg.protocol.tag() == "even:4");
  CHECK(cfg.episodes == 500);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{7, 8});
  REQUIRE(cfg.algorithms.size() == 2);
  CHECK(algorithm_label(cfg.algorithms[0]) == "DARLING");
  CHECK(algorithm_label(cfg.algorithms[1]) == "P25");
  CHECK(cfg.algorithms[1].window == 25);
  CHECK(cfg.regret_mode == RegretMode::realized);
  CHECK_FALSE(cfg.timing);
  const auto det = cfg.detector.resolve(500);
  CHECK(det.threshold_rule == ThresholdRule::anytime);
  CHECK(det.delta_false_alarm == doctest::Approx(std::pow(500.0, -1.5)));

  const auto dflt = parse_config("{}");
  CHECK(dflt.environment.kind == "tabular_lock");
  CHECK(dflt.protocol.tag() == "0.6");
  CHECK(dflt.algorithms.size() == 4);
  const auto exp = dflt.detector.resolve(10000);
  CHECK(exp.threshold_rule == ThresholdRule::experimental);
  CHECK(exp.delta_false_alarm == doctest::Approx(0.01));
  CHECK(exp.delta_detection == exp.delta_false_alarm);
}

TEST_CASE("config errors are reported as ConfigError") {
  CHECK_THROWS_AS(parse_config(R"({"episodez": 10})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"protocol": {"kind": "ps-geometric", "chi": 0.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"environment": {"kind": "tabular_lock", "params": {"horizn": 4}}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"episodes": "many"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"episodes": 2})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"seeds": []})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"algorithms": ["master"]})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"regret_mode": "sometimes"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"protocol": {"kind": "ps-explicit", "change_points": [5, 3]}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("derived seeds are stable and key-sensitive") {
  CHECK(derive_seed("a", 1) == derive_seed("a", 1));
  CHECK(derive_seed("a", 1) != derive_seed("a", 2));
  CHECK(derive_seed("a", 1) != derive_seed("b", 1));
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
}

TEST_CASE("numbers are written in shortest round-trip form") {
  for (double x : {0.0, 1.0, 0.1, 1.0 / 3.0, 123456.789, 1e-17, -2.5}) {
    CHECK(std::stod(format_double(x)) == x);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(3.0) == "3");
}

TEST_CASE("CSV rows round-trip through the reader") {
  RunTrace tr(3);
  for (int i = 0; i < 3; ++i) {
    tr[i].t = i + 1;
    tr[i].reward = 0.25 * (i + 1);
    tr[i].oracle_value = 1.0;
    tr[i].policy_value = 0.9;
    tr[i].regret = 0.1;
    tr[i].probe = i == 1;
    tr[i].restart = i == 2;
    tr[i].restart_count = i == 2 ? 1 : 0;
    tr[i].triggers = i == 2 ? 4 : 0;
    tr[i].wall_ns = 1000 + i;
  }
  const auto rows = rows_from_trace(tr, "id", 9, "DARLING", "tabular_lock", "ps-geometric", "0.6");
  REQUIRE(rows.size() == 3);
  CHECK(rows[2].cum_reward == doctest::Approx(1.5));
  CHECK(rows[2].cum_regret == doctest::Approx(0.3));

  const fs::path dir = scratch("roundtrip");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "r.csv", std::ios::binary);
    f << results_header() << '\n';
    for (const auto& r : rows) write_row(f, r);
  }
  const std::string text = slurp(dir / "r.csv");
  CHECK(text.find('\r') == std::string::npos);
  CHECK(text.rfind("run_id,seed,algorithm,env,protocol,xi_or_drift,t,episode_reward,cum_reward,cum_regret,", 0) == 0);
  const auto back = read_results((dir / "r.csv").string());
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].t == rows[i].t);
    CHECK(back[i].cum_reward == rows[i].cum_reward);
    CHECK(back[i].probe == rows[i].probe);
    CHECK(back[i].restart == rows[i].restart);
    CHECK(back[i].triggers == rows[i].triggers);
    CHECK(back[i].wall_ns == rows[i].wall_ns);
  }

  {
    std::ofstream f(dir / "bad.csv", std::ios::binary);
    f << "run_id,seed,algorithm\nx,1,y\n";
  }
  try {
    read_results((dir / "bad.csv").string());
    FAIL("expected a missing-column error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("env") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("summaries aggregate final values per cell") {
  SUBCASE("single seed has zero spread") {
    const auto s = summarize_rows({row("Bare", 1, 1, 1.0, 0.5), row("Bare", 1, 2, 3.0, 0.7)});
    REQUIRE(s.size() == 1);
    CHECK(s[0].n_seeds == 1);
    CHECK(s[0].final_cum_reward_mean == 3.0);
    CHECK(s[0].final_cum_reward_std == 0.0);
    CHECK(s[0].final_cum_regret_std == 0.0);
  }
  SUBCASE("two-row fixture") {
    const auto s = summarize_rows({row("DARLING", 1, 10, 4.0, 2.0, 1, 2000000), row("DARLING", 2, 10, 8.0, 6.0, 3, 4000000)});
    REQUIRE(s.size() == 1);
    CHECK(s[0].n_seeds == 2);
    CHECK(s[0].final_cum_reward_mean == 6.0);
    CHECK(s[0].final_cum_reward_std == doctest::Approx(std::sqrt(8.0)));
    CHECK(s[0].final_cum_regret_mean == 4.0);
    CHECK(s[0].final_cum_regret_std == doctest::Approx(std::sqrt(8.0)));
    CHECK(s[0].restarts_mean == 2.0);
    CHECK(s[0].wall_ms_per_episode_mean == doctest::Approx(3.0));
    CHECK(s[0].final_cum_reward_min == 4.0);
    CHECK(s[0].final_cum_reward_max == 8.0);
  }
  SUBCASE("external algorithms join by name") {
    auto ext = row("MASTER", 1, 10, 5.0, 3.0);
    ext.run_id = "external";
    const auto s = summarize_rows({row("DARLING", 1, 10, 4.0, 2.0), ext, row("DARLING", 2, 10, 6.0, 1.0)});
    REQUIRE(s.size() == 2);
    CHECK(s[0].algorithm == "DARLING");
    CHECK(s[0].n_seeds == 2);
    CHECK(s[1].algorithm == "MASTER");
    CHECK(s[1].final_cum_reward_mean == 5.0);
  }
}

TEST_CASE("failed cells get their own summary rows") {
  CellOutcome f;
  f.env = "tabular_lock";
  f.protocol = "ps-geometric";
  f.tag = "0.6";
  f.algorithm = "Bare";
  f.seed = 4;
  f.error = "boom, with comma";
  std::ostringstream out;
  write_summary_csv(out, {}, "expected", {f}, true);
  const std::string text = out.str();
  CHECK(text.find("tabular_lock,ps-geometric,0.6,Bare,0,") != std::string::npos);
  CHECK(text.find("failed seed 4") != std::string::npos);
  // One header line and one data line, each with 16 fields.
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) CHECK(std::count(line.begin(), line.end(), ',') == 15);
}

TEST_CASE("matrix runs are complete, consistent and reproducible") {
  ExperimentConfig cfg;
  cfg.episodes = 300;
  cfg.seeds = {1, 2, 3};
  cfg.algorithms = default_algorithms();
  cfg.timing = false;
  cfg.threads = 2;
  cfg.protocol.xi = 0.5;

  const fs::path a = scratch("run_a"), b = scratch("run_b");
  std::ostringstream log;
  std::vector<CellOutcome> outcomes;
  cfg.output_dir = a.string();
  REQUIRE(expand_and_run(cfg, log, &outcomes) == 0);
  cfg.output_dir = b.string();
  cfg.threads = 1;
  REQUIRE(expand_and_run(cfg, log) == 0);

  CHECK(slurp(a / "results.csv") == slurp(b / "results.csv"));
  CHECK(slurp(a / "summary.csv") == slurp(b / "summary.csv"));
  CHECK(fs::exists(a / "summary.txt"));
  CHECK_FALSE(fs::exists(a / "cells"));

  const auto rows = read_results((a / "results.csv").string());
  CHECK(rows.size() == 4u * 3u * 300u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].t == 1) {
      CHECK(rows[i].cum_reward == rows[i].episode_reward);
      continue;
    }
    CHECK(rows[i].t == rows[i - 1].t + 1);
    CHECK(rows[i].run_id == rows[i - 1].run_id);
    CHECK(rows[i].cum_reward - rows[i - 1].cum_reward == doctest::Approx(rows[i].episode_reward).epsilon(1e-9));
    CHECK(rows[i].wall_ns == 0);
  }

  // The regret oracle solves once per segment.
  REQUIRE(outcomes.size() == 12);
  for (const auto& oc : outcomes) {
    CHECK(oc.ok);
    CHECK(oc.oracle_exact);
    const auto env = build_environment(cfg, oc.seed);
    CHECK(oc.oracle_solves == env.env->change_points().size() + 1);
  }

  // Oracle restarts match the environment's change count.
  const auto summary = summarize_rows(rows);
  for (const auto& s : summary) {
    CHECK(s.n_seeds == 3);
    if (s.algorithm == "Bare") CHECK(s.restarts_mean == 0.0);
  }
  double expected_oracle = 0.0;
  for (std::uint64_t seed : cfg.seeds) expected_oracle += build_environment(cfg, seed).env->change_points().size();
  for (const auto& s : summary)
    if (s.algorithm == "OracleRestart") CHECK(s.restarts_mean == doctest::Approx(expected_oracle / 3.0));

  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("drift runs flag the interpolated oracle") {
  ExperimentConfig cfg;
  cfg.environment.kind = "chain_lock";
  cfg.protocol.kind = "drift";
  cfg.protocol.window = 50;
  cfg.episodes = 200;
  cfg.seeds = {1};
  AlgorithmSpec bare;
  bare.kind = "bare";
  cfg.algorithms = {bare};
  cfg.timing = false;
  const fs::path dir = scratch("drift");
  cfg.output_dir = dir.string();
  std::ostringstream log;
  std::vector<CellOutcome> outcomes;
  REQUIRE(expand_and_run(cfg, log, &outcomes) == 0);
  REQUIRE(outcomes.size() == 1);
  CHECK_FALSE(outcomes[0].oracle_exact);
  CHECK(outcomes[0].oracle_solves <= static_cast<std::size_t>(2 * (200 / 50 + 1)));
  const std::string summary = slurp(dir / "summary.csv");
  CHECK(summary.find(",expected,0,ok") != std::string::npos);
  fs::remove_all(dir);
}
