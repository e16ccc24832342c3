#pragma once

// Experiment harness: config parsing, run-matrix expansion, the per-episode
// loop with oracle regret accounting, CSV output and summaries.

#include "darling/agent.hpp"
#include "darling/darling.hpp"
#include "darling/environment.hpp"
#include "darling/envs.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace darling {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RegretMode { expected, realized };

struct EnvironmentSpec {
  std::string kind = "tabular_lock";  // tabular_lock | chain_lock
  LockTabularSpec tabular;
  LockLinearSpec chain;
};

struct ProtocolSpec {
  std::string kind = "ps-geometric";  // ps-geometric | ps-explicit | ps-even | drift
  double xi = 0.6;
  std::vector<int> change_points;  // ps-explicit
  int changes = 0;                 // ps-even
  int window = 100;                // drift (chain lock)

  /// Value of the xi_or_drift column.
  std::string tag() const;
};

struct DetectorProfile {
  std::string profile = "experimental";  // experimental | theory
  double gamma = 1.0;                    // theory: delta = T^-gamma
  double delta = 0.0;                    // > 0 overrides the profile's delta
  Divergence divergence = Divergence::bernoulli;
  double variance = 0.25;
  TestKind test = TestKind::glr;
  int split_stride = 1;
  bool geometric_splits = false;

  DetectorConfig resolve(int episodes) const;
};

struct AlgorithmSpec {
  std::string kind = "darling";  // darling | bare | periodic | oracle
  std::string label;             // column value; defaults from kind
  std::string learner = "auto";  // auto | optimistic_q | lsvi
  OptimisticQConfig optimistic_q;
  LsviConfig lsvi;
  int window = 0;             // periodic: explicit W
  double window_scale = 1.0;  // periodic: c in the budget recipe
};

struct ExperimentConfig {
  EnvironmentSpec environment;
  ProtocolSpec protocol;
  int episodes = 10000;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<AlgorithmSpec> algorithms;
  DetectorProfile detector;
  std::string output_dir = "results";
  RegretMode regret_mode = RegretMode::expected;
  int threads = 1;
  bool timing = true;

  void validate() const;
};

/// Throws ConfigError on unknown keys, wrong types or invalid values.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
/// The four standard algorithms with default parameters.
std::vector<AlgorithmSpec> default_algorithms();

// ------------------------------------------------------------------ building

struct BuiltEnvironment {
  std::unique_ptr<Environment> env;
  std::string name;
  std::string protocol;
  std::string tag;
  double expected_changes = 0.0;  // known or expected N_T, for the budget window
  OracleCadence cadence = OracleCadence::exact;
};

std::uint64_t splitmix64(std::uint64_t x);
/// Stable 64-bit hash of a string key mixed with a seed.
std::uint64_t derive_seed(const std::string& key, std::uint64_t seed);

BuiltEnvironment build_environment(const ExperimentConfig& cfg, std::uint64_t seed);
std::unique_ptr<Agent> build_agent(const AlgorithmSpec& algo, const ExperimentConfig& cfg, const BuiltEnvironment& env,
                                   std::uint64_t seed);
std::string algorithm_label(const AlgorithmSpec& algo);

// --------------------------------------------------------------------- running

struct RunOptions {
  RegretMode regret = RegretMode::expected;
  bool timing = true;
};

struct RunResult {
  RunTrace trace;
  std::vector<EpisodeEvents> events;
  std::size_t oracle_solves = 0;
  bool oracle_exact = true;
};

/// Runs episodes 1..T. wall_ns covers the agent's episode work and the
/// simulation, not the oracle or policy evaluation.
RunResult run_episodes(const Environment& env, Agent& agent, std::uint64_t seed, const RunOptions& opt,
                       OracleCadence cadence = OracleCadence::exact, bool keep_events = false);

struct ResultRow {
  std::string run_id;
  std::uint64_t seed = 0;
  std::string algorithm;
  std::string env;
  std::string protocol;
  std::string xi_or_drift;
  int t = 0;
  double episode_reward = 0.0;
  double cum_reward = 0.0;
  double cum_regret = 0.0;
  bool probe = false;
  bool restart = false;
  int restart_count = 0;
  int triggers = 0;
  std::int64_t wall_ns = 0;
};

std::string results_header();
void write_row(std::ostream& out, const ResultRow& row);
/// Rows of one run, with cumulative columns formed from the trace.
std::vector<ResultRow> rows_from_trace(const RunTrace& trace, const std::string& run_id, std::uint64_t seed,
                                       const std::string& algorithm, const std::string& env,
                                       const std::string& protocol, const std::string& tag);
/// Parses a results CSV; throws std::runtime_error naming the offending column.
std::vector<ResultRow> read_results(const std::string& path);

struct CellOutcome {
  std::string run_id;
  std::string algorithm;
  std::string env;
  std::string protocol;
  std::string tag;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  bool oracle_exact = true;
  std::size_t oracle_solves = 0;
};

// -------------------------------------------------------------------- summary

struct SummaryRow {
  std::string env;
  std::string protocol;
  std::string xi_or_drift;
  std::string algorithm;
  int n_seeds = 0;
  double final_cum_reward_mean = 0.0;
  double final_cum_reward_std = 0.0;
  double final_cum_regret_mean = 0.0;
  double final_cum_regret_std = 0.0;
  double wall_ms_per_episode_mean = 0.0;
  double restarts_mean = 0.0;
  double final_cum_reward_min = 0.0;
  double final_cum_reward_max = 0.0;
  std::string status = "ok";
};

/// Groups rows by (env, protocol, tag, algorithm), first-seen order; takes the
/// last row of each (run_id, seed) as the final value. Std is the sample std
/// (0 for one seed).
std::vector<SummaryRow> summarize_rows(const std::vector<ResultRow>& rows);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows, const std::string& regret_mode = "",
                       const std::vector<CellOutcome>& failures = {}, std::optional<bool> oracle_exact = {});
void write_summary_table(std::ostream& out, const std::vector<SummaryRow>& rows);

/// Runs the full matrix; writes <out>/results.csv, <out>/summary.csv and
/// <out>/summary.txt. Returns 0 when every cell succeeded, 3 otherwise.
int expand_and_run(const ExperimentConfig& cfg, std::ostream& log, std::vector<CellOutcome>* outcomes = nullptr);

/// Shortest round-trip decimal representation.
std::string format_double(double x);

}  // namespace darling
