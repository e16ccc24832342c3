#include "darling/darling.hpp"
#include "darling/environment.hpp"
#include "darling/envs.hpp"
#include "darling/harness.hpp"

#include "../oracles/brute_force.hpp"
#include "../oracles/frozen_values.hpp"
#include "doctest.h"

#include <cmath>
#include <set>

using namespace darling;

namespace {

// Smallest alpha_dim whose first-segment period equals `period`.
int dim_for_period(int period, int H, int T) {
  for (int d = 1; d < 10000000; ++d) {
    if (AlphaSchedule(d, H, T).period(1) == period) return d;
  }
  FAIL("no dimension gives the requested period");
  return 0;
}

struct Fixture {
  int S = 3, A = 2, H = 3, T = 60;
  std::shared_ptr<const FeatureMap> phi;
  SegmentModel model;

  explicit Fixture(std::uint64_t seed = 11) {
    phi = std::make_shared<FeatureMap>(one_hot_feature_map(S, A));
    Rng rng(seed);
    model = oracle::random_segment(S, A, H, rng);
  }

  std::unique_ptr<Darling> make(int period, std::uint64_t seed = 3) const {
    DarlingConfig cfg;
    cfg.streams = StreamMode::tabular;
    cfg.alpha_dim = dim_for_period(period, H, T);
    auto learner = std::make_unique<TabularOptimisticQ>(S, A, H, T);
    return std::make_unique<Darling>(std::move(learner), tabular_probes(S, A, H), phi, T, cfg, seed);
  }
};

std::vector<double> q_table(const Learner& l) {
  const auto& q = dynamic_cast<const TabularOptimisticQ&>(l);
  std::vector<double> out;
  for (int h = 0; h < q.horizon(); ++h)
    for (int s = 0; s < q.states(); ++s)
      for (int a = 0; a < q.actions(); ++a) {
        out.push_back(q.q(h, s, a));
        out.push_back(q.visits(h, s, a));
      }
  return out;
}

}  // namespace

TEST_CASE("alpha schedule matches the closed form and clamps at one") {
  const AlphaSchedule sched(20, 5, 50000);
  CHECK(sched.alpha(1) == doctest::Approx(frozen::alpha_d20_h5_t50000_k1).epsilon(1e-13));
  CHECK(sched.period(1) == frozen::alpha_d20_h5_t50000_k1_period);
  double prev = 0.0;
  for (int k = 1; k <= 200; ++k) {
    CHECK(sched.alpha(k) >= prev);
    CHECK(sched.alpha(k) <= 1.0);
    CHECK(sched.period(k) >= 1);
    prev = sched.alpha(k);
  }
  CHECK(AlphaSchedule(100000, 10, 20).alpha(1) == 1.0);
  CHECK(AlphaSchedule(100000, 10, 20).period(1) == 1);
  CHECK_THROWS(AlphaSchedule(1, 1, 2));
  CHECK_THROWS(sched.alpha(0));
}

TEST_CASE("probe episodes fall on multiples of the period after the last restart") {
  std::vector<int> hits;
  for (int t = 1; t <= 35; ++t)
    if (is_probe_episode(t, 0, 10)) hits.push_back(t);
  CHECK(hits == std::vector<int>{10, 20, 30});
  int next = 18;
  while (!is_probe_episode(next, 17, 5)) ++next;
  CHECK(next == 22);
  for (int t = 1; t <= 10; ++t) CHECK(is_probe_episode(t, 0, 1));
  CHECK_THROWS(is_probe_episode(3, 0, 0));
}

TEST_CASE("transition samples map [-1, 1] onto [0, 1]") {
  CHECK(transition_stream_value(-1.0) == 0.0);
  CHECK(transition_stream_value(0.0) == 0.5);
  CHECK(transition_stream_value(1.0) == 1.0);
}

TEST_CASE("stream counts follow the probe collection") {
  Fixture f;
  auto d = f.make(3);
  CHECK(d->reward_stream_count() == static_cast<std::size_t>(f.H * f.S * f.A));
  CHECK(d->transition_stream_count() == static_cast<std::size_t>(f.H * f.S * f.A * f.S));

  const ChainLock lock = build_chain_lock(LockLinearSpec{});
  const PSModel ps = ps_chain_lock(lock, 100, {}, {0});
  ProbeCollection probes = greedy_probes(ps);
  DarlingConfig cfg;
  cfg.reference_actions = {0, 1};
  auto learner = std::make_unique<LsviUcb>(lock.features, lock.spec.horizon, 100);
  Darling lin(std::move(learner), probes, lock.features, 100, cfg, 1);
  CHECK(lin.reward_stream_count() <= static_cast<std::size_t>(probes.total_size()));
  CHECK(lin.transition_stream_count() == lin.reward_stream_count() * lock.spec.dim * 2);
}

TEST_CASE("learner is frozen across probing episodes and learns otherwise") {
  Fixture f;
  auto d = f.make(3);
  Rng rng(5);
  int probes = 0, learned = 0;
  for (int t = 1; t <= 30; ++t) {
    d->begin_episode(t);
    const auto before = q_table(d->learner());
    const auto snap = d->learner().greedy_policy_snapshot();
    simulate_episode(f.model, RewardNoise::bernoulli, 0, *d, rng);
    const auto ev = d->end_episode(t);
    CHECK(ev.probe == (t % 3 == 0));
    if (ev.probe) {
      ++probes;
      CHECK(q_table(d->learner()) == before);
      CHECK(d->learner().greedy_policy_snapshot() == snap);
      CHECK(d->reward_samples_this_episode() == f.H);
    } else if (q_table(d->learner()) != before) {
      ++learned;
    }
  }
  CHECK(probes == 10);
  CHECK(learned == 20);
  CHECK(d->restart_count() == 0);
}

TEST_CASE("probing behavior is uniform over the probe supports") {
  Fixture f;
  auto d = f.make(2);
  d->begin_episode(1);
  CHECK_FALSE(d->probing());
  const auto greedy = d->behavior_policy();
  for (int s = 0; s < f.S; ++s) {
    const auto p = greedy.probs(0, s);
    CHECK(*std::max_element(p.begin(), p.end()) == 1.0);
  }
  Rng rng(1);
  simulate_episode(f.model, RewardNoise::bernoulli, 0, *d, rng);
  d->end_episode(1);
  d->begin_episode(2);
  REQUIRE(d->probing());
  const auto pol = d->behavior_policy();
  for (int h = 0; h < f.H; ++h)
    for (int s = 0; s < f.S; ++s)
      for (double p : pol.probs(h, s)) CHECK(p == doctest::Approx(1.0 / f.A));

  // Empirical action frequencies at probing episodes.
  std::vector<int> counts(static_cast<std::size_t>(f.A), 0);
  Rng r2(2);
  for (int i = 0; i < 4000; ++i) ++counts[static_cast<std::size_t>(d->act(0, 1, r2))];
  for (int c : counts) CHECK(std::abs(c - 2000) < 200);
}

TEST_CASE("scripted triggers restart, clear histories and advance the segment") {
  Fixture f;
  auto d = f.make(1);  // every episode probes
  int current = 0;
  const std::set<int> fire{5, 12};
  d->set_detector([&](const ScalarHistory&, const DetectorConfig&) {
    DetectionOutcome out;
    out.triggered = fire.count(current) > 0;
    if (out.triggered) out.best_split = 1;
    return out;
  });
  Rng rng(9);
  int episodes_with_triggers = 0;
  for (int t = 1; t <= 20; ++t) {
    current = t;
    d->begin_episode(t);
    REQUIRE(d->probing());
    simulate_episode(f.model, RewardNoise::bernoulli, 0, *d, rng);
    const auto ev = d->end_episode(t);
    CHECK(ev.restart == fire.count(t) > 0);
    if (!ev.triggers.empty()) ++episodes_with_triggers;
    if (ev.restart) {
      CHECK(ev.restart_source == RestartSource::detector);
      CHECK(d->history_samples() == 0);
      CHECK(d->tau() == t);
      for (int h = 0; h < f.H; ++h)
        for (int s = 0; s < f.S; ++s)
          for (int a = 0; a < f.A; ++a)
            CHECK(dynamic_cast<const TabularOptimisticQ&>(d->learner()).visits(h, s, a) == 0);
    } else {
      CHECK(d->history_samples() > 0);
    }
    CHECK(ev.restart_count == d->restart_count());
  }
  CHECK(episodes_with_triggers == 2);
  CHECK(d->restart_count() == 2);
  CHECK(d->segment() == 3);
  CHECK(d->tau() == 12);
}

TEST_CASE("tabular streams carry rewards and mapped next-state indicators") {
  Fixture f;
  auto d = f.make(1);
  std::vector<double> seen;
  d->set_detector([&](const ScalarHistory& h, const DetectorConfig&) {
    seen.push_back(h.values().back());
    return DetectionOutcome{};
  });
  Rng rng(4);
  d->begin_episode(1);
  const auto rec = simulate_episode(f.model, RewardNoise::bernoulli, 0, *d, rng);
  d->end_episode(1);
  REQUIRE(seen.size() == static_cast<std::size_t>(f.H * (1 + f.S)));
  for (int h = 0; h < f.H; ++h) {
    const std::size_t base = static_cast<std::size_t>(h * (1 + f.S));
    CHECK(seen[base] == rec.rewards[static_cast<std::size_t>(h)]);
    for (int sp = 0; sp < f.S; ++sp) {
      const double expect = sp == rec.states[static_cast<std::size_t>(h) + 1] ? 1.0 : 0.5;
      CHECK(seen[base + 1 + static_cast<std::size_t>(sp)] == expect);
    }
  }
}

TEST_CASE("stationary probing rarely raises false alarms") {
  // Anytime threshold, delta = 1/T^2, every episode probing: no restarts expected.
  int restarts = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Fixture f(seed);
    f.T = 400;
    DarlingConfig cfg;
    cfg.streams = StreamMode::tabular;
    cfg.detector.threshold_rule = ThresholdRule::anytime;
    cfg.detector.delta_false_alarm = cfg.detector.delta_detection = 1.0 / (f.T * double(f.T));
    cfg.alpha_dim = dim_for_period(1, f.H, f.T);
    auto learner = std::make_unique<TabularOptimisticQ>(f.S, f.A, f.H, f.T);
    Darling d(std::move(learner), tabular_probes(f.S, f.A, f.H), f.phi, f.T, cfg, seed);
    Rng rng(seed + 100);
    for (int t = 1; t <= f.T; ++t) {
      d.begin_episode(t);
      simulate_episode(f.model, RewardNoise::bernoulli, 0, d, rng);
      d.end_episode(t);
    }
    restarts += d.restart_count();
  }
  CHECK(restarts == 0);
}

TEST_CASE("a reward change is detected and restarts the learner") {
  Fixture f;
  f.T = 400;
  SegmentModel after = f.model;
  for (int s = 0; s < f.S; ++s)
    for (int a = 0; a < f.A; ++a) after.set_reward(0, s, a, 1.0 - f.model.reward(0, s, a) > 0.5 ? 1.0 : 0.0);
  DarlingConfig cfg;
  cfg.streams = StreamMode::tabular;
  cfg.detector.threshold_rule = ThresholdRule::experimental;
  cfg.detector.delta_false_alarm = cfg.detector.delta_detection = 1.0 / std::sqrt(double(f.T));
  cfg.alpha_dim = dim_for_period(1, f.H, f.T);
  Darling d(std::make_unique<TabularOptimisticQ>(f.S, f.A, f.H, f.T), tabular_probes(f.S, f.A, f.H), f.phi, f.T,
            cfg, 7);
  Rng rng(8);
  int first_restart = 0;
  for (int t = 1; t <= f.T; ++t) {
    d.begin_episode(t);
    simulate_episode(t <= 200 ? f.model : after, RewardNoise::bernoulli, 0, d, rng);
    if (d.end_episode(t).restart && first_restart == 0) first_restart = t;
  }
  CHECK(first_restart > 200);
  CHECK(first_restart < 300);
}

TEST_CASE("identical seeds give identical runs") {
  Fixture f;
  f.T = 200;
  auto run = [&] {
    PSModel ps;
    ps.dims = MdpDims{f.S, f.A, f.H, f.T, f.S * f.A};
    ps.segments = {std::make_shared<SegmentModel>(f.model)};
    ps.features = f.phi;
    PiecewiseEnvironment env(ps);
    auto d = f.make(2, 42);
    return run_episodes(env, *d, 99, RunOptions{RegretMode::expected, false}).trace;
  };
  const auto a = run(), b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].reward == b[i].reward);
    CHECK(a[i].policy_value == b[i].policy_value);
    CHECK(a[i].probe == b[i].probe);
  }
}
