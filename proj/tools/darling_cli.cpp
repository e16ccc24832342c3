// darling_cli: run experiment matrices and summarize result CSVs.
//
//   darling_cli run --config exp.json --out results --seeds 1,2,3 --threads 2
//   darling_cli summarize --in results/results.csv --in external.csv --out summary

#include "darling/harness.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

using namespace darling;

namespace {

constexpr int kExitConfig = 2;

AlgorithmSpec spec_for(const std::string& name, const std::vector<AlgorithmSpec>& configured) {
  for (const auto& a : configured) {
    if (algorithm_label(a) == name || a.kind == name) return a;
  }
  AlgorithmSpec a;
  a.kind = name;
  return a;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Change detection and restart experiments for non-stationary episodic RL"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Expand and run an experiment matrix");
  std::string config_path, out_dir, regret_mode, env_kind;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> algos;
  std::optional<double> xi;
  std::optional<int> episodes, threads;
  bool no_timing = false;
  run->add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--seeds", seeds, "Seeds (comma separated)")->delimiter(',');
  run->add_option("--algo", algos, "Algorithms: darling, bare, periodic, oracle or configured labels")->delimiter(',');
  run->add_option("--env", env_kind, "Environment kind: tabular_lock or chain_lock");
  run->add_option("--xi", xi, "Use the geometric protocol with this xi");
  run->add_option("--episodes", episodes, "Number of episodes T");
  run->add_option("--regret-mode", regret_mode, "expected or realized");
  run->add_option("--threads", threads, "Cells run concurrently");
  run->add_flag("--no-timing", no_timing, "Write wall_ns = 0 for byte-reproducible output");

  auto* summarize = app.add_subcommand("summarize", "Aggregate one or more results CSVs");
  std::vector<std::string> inputs;
  std::string summary_out = ".";
  summarize->add_option("--in", inputs, "Results CSV (repeatable)")->required();
  summarize->add_option("--out", summary_out, "Directory for summary.csv and summary.txt");

  CLI11_PARSE(app, argc, argv);

  if (*run) {
    ExperimentConfig cfg;
    try {
      if (!config_path.empty()) {
        cfg = load_config(config_path);
      } else {
        cfg.algorithms = default_algorithms();
      }
      if (!env_kind.empty() && env_kind != cfg.environment.kind) {
        cfg.environment = EnvironmentSpec{};
        cfg.environment.kind = env_kind;
      }
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      if (!seeds.empty()) cfg.seeds = seeds;
      if (xi) {
        cfg.protocol = ProtocolSpec{};
        cfg.protocol.xi = *xi;
      }
      if (episodes) cfg.episodes = *episodes;
      if (threads) cfg.threads = *threads;
      if (no_timing) cfg.timing = false;
      if (!regret_mode.empty()) {
        if (regret_mode == "expected") {
          cfg.regret_mode = RegretMode::expected;
        } else if (regret_mode == "realized") {
          cfg.regret_mode = RegretMode::realized;
        } else {
          throw ConfigError("--regret-mode must be expected or realized");
        }
      }
      if (!algos.empty()) {
        std::vector<AlgorithmSpec> chosen;
        for (const auto& name : algos) chosen.push_back(spec_for(name, cfg.algorithms));
        cfg.algorithms = chosen;
      }
      cfg.validate();
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return kExitConfig;
    }
    try {
      return expand_and_run(cfg, std::cerr);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 3;
    }
  }

  try {
    std::vector<ResultRow> rows;
    for (const auto& path : inputs) {
      auto part = read_results(path);
      rows.insert(rows.end(), part.begin(), part.end());
    }
    const auto summary = summarize_rows(rows);
    std::filesystem::create_directories(summary_out);
    std::ofstream csv(std::filesystem::path(summary_out) / "summary.csv", std::ios::binary);
    write_summary_csv(csv, summary);
    std::ofstream txt(std::filesystem::path(summary_out) / "summary.txt", std::ios::binary);
    write_summary_table(txt, summary);
    write_summary_table(std::cout, summary);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return 0;
}
