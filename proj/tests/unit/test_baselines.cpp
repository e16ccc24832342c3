#include "darling/baselines.hpp"
#include "darling/environment.hpp"
#include "darling/harness.hpp"

#include "../oracles/brute_force.hpp"
#include "doctest.h"

using namespace darling;

namespace {

PiecewiseEnvironment small_env(int T, std::vector<int> cps, std::uint64_t seed = 21) {
  Rng rng(seed);
  PSModel ps;
  ps.dims = MdpDims{3, 2, 3, T, 6};
  ps.segments.push_back(std::make_shared<SegmentModel>(oracle::random_segment(3, 2, 3, rng)));
  for (std::size_t i = 0; i < cps.size(); ++i)
    ps.segments.push_back(std::make_shared<SegmentModel>(oracle::random_segment(3, 2, 3, rng)));
  ps.change_points = std::move(cps);
  ps.features = std::make_shared<FeatureMap>(one_hot_feature_map(3, 2));
  return PiecewiseEnvironment(ps);
}

std::unique_ptr<Learner> toq(int T) { return std::make_unique<TabularOptimisticQ>(3, 2, 3, T); }

RunResult run(const Environment& env, Agent& agent) {
  return run_episodes(env, agent, 5, RunOptions{RegretMode::expected, false}, OracleCadence::exact, true);
}

double final_regret(const RunTrace& tr) { return dynamic_regret(tr).back(); }

}  // namespace

TEST_CASE("periodic restarts happen every W episodes") {
  const int T = 100;
  auto env = small_env(T, {});
  for (int W : {1, 7, 10, 33, 100}) {
    PeriodicRestartAgent agent(toq(T), W);
    const auto res = run(env, agent);
    CHECK(agent.restart_count() == T / W);
    for (const auto& ev : res.events) {
      if (ev.restart) CHECK(ev.restart_source == RestartSource::schedule);
    }
    for (int t = 1; t <= T; ++t) CHECK(res.events[static_cast<std::size_t>(t) - 1].restart == (t % W == 0));
  }
  CHECK_THROWS(PeriodicRestartAgent(toq(T), 0));
}

TEST_CASE("W = T leaves the trace identical to the bare learner") {
  const int T = 150;
  auto env = small_env(T, {60});
  BareAgent bare(toq(T));
  PeriodicRestartAgent periodic(toq(T), T);
  const auto a = run(env, bare), b = run(env, periodic);
  for (int i = 0; i < T; ++i) {
    CHECK(a.trace[i].reward == b.trace[i].reward);
    CHECK(a.trace[i].policy_value == b.trace[i].policy_value);
  }
  // The single scheduled reset lands after the last episode.
  CHECK(b.trace.back().restart);
  CHECK(b.trace[T - 2].restart_count == 0);
}

TEST_CASE("W = 1 keeps the learner at its initial greedy policy") {
  const int T = 40;
  auto env = small_env(T, {});
  PeriodicRestartAgent agent(toq(T), 1);
  const auto fresh = toq(T)->greedy_policy_snapshot();
  for (int t = 1; t <= T; ++t) {
    agent.begin_episode(t);
    CHECK(agent.learner().greedy_policy_snapshot() == fresh);
    Rng rng(t);
    simulate_episode(*env.model_at(t), env.reward_noise(), 0, agent, rng);
    agent.end_episode(t);
  }
}

TEST_CASE("budget window recipe") {
  CHECK(budget_restart_window(10000, 0.0) == 100);
  CHECK(budget_restart_window(10000, 3.0) == 50);
  CHECK(budget_restart_window(10000, 3.0, 2.0) == 100);
  CHECK(budget_restart_window(10, 1000.0) == 1);
  CHECK(budget_restart_window(4, 0.0, 100.0) == 4);
  CHECK_THROWS(budget_restart_window(10, -1.0));
}

TEST_CASE("oracle restarts exactly at the change points") {
  const int T = 120;
  const std::vector<int> cps{17, 40, 41, 99};
  auto env = small_env(T, cps);
  OracleRestartAgent agent(toq(T), cps);
  const auto res = run(env, agent);
  CHECK(agent.restart_count() == 4);
  for (int t = 1; t <= T; ++t) {
    const bool at = std::find(cps.begin(), cps.end(), t) != cps.end();
    const auto& ev = res.events[static_cast<std::size_t>(t) - 1];
    CHECK(ev.restart == at);
    if (at) CHECK(ev.restart_source == RestartSource::oracle);
  }
  CHECK_THROWS(OracleRestartAgent(toq(T), {5, 3}));
}

TEST_CASE("oracle and bare coincide without changes") {
  const int T = 150;
  auto env = small_env(T, {});
  BareAgent bare(toq(T));
  OracleRestartAgent oracle(toq(T), {});
  const auto a = run(env, bare), b = run(env, oracle);
  for (int i = 0; i < T; ++i) CHECK(a.trace[i].reward == b.trace[i].reward);
  CHECK(oracle.restart_count() == 0);
}

TEST_CASE("wrappers are transparent between restarts") {
  // After the oracle's reset at nu, its learner sees the same stream as a
  // fresh bare learner started at nu, so their greedy policies agree.
  const int T = 90, nu = 31;
  auto env = small_env(T, {nu});
  OracleRestartAgent oracle(toq(T), {nu});
  BareAgent fresh(toq(T));
  Rng r1(3), r2(3);
  for (int t = 1; t <= T; ++t) {
    oracle.begin_episode(t);
    if (t >= nu) {
      fresh.begin_episode(t);
      CHECK(oracle.learner().greedy_policy_snapshot() == fresh.learner().greedy_policy_snapshot());
    }
    if (t == nu) r1 = r2;
    const auto rec = simulate_episode(*env.model_at(t), env.reward_noise(), 0, oracle, r1);
    if (t >= nu) {
      const auto rec2 = simulate_episode(*env.model_at(t), env.reward_noise(), 0, fresh, r2);
      CHECK(rec.total_reward == rec2.total_reward);
      fresh.end_episode(t);
    }
    oracle.end_episode(t);
  }
}

TEST_CASE("on the piecewise lock, budget restarts and oracle restarts beat the bare learner") {
  ExperimentConfig cfg;
  cfg.episodes = 5000;
  cfg.protocol.kind = "ps-geometric";
  cfg.protocol.xi = 0.6;
  double bare = 0.0, periodic = 0.0, oracle = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto env = build_environment(cfg, seed);
    for (const char* kind : {"bare", "periodic", "oracle"}) {
      AlgorithmSpec spec;
      spec.kind = kind;
      auto agent = build_agent(spec, cfg, env, seed);
      const double r = final_regret(run_episodes(*env.env, *agent, seed, RunOptions{}, env.cadence).trace);
      (spec.kind == "bare" ? bare : spec.kind == "periodic" ? periodic : oracle) += r / 5.0;
    }
  }
  MESSAGE("mean regret bare ", bare, " periodic ", periodic, " oracle ", oracle);
  CHECK(periodic < bare);
  CHECK(oracle < bare);
}
