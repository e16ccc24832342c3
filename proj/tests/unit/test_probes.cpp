#include "darling/envs.hpp"
#include "darling/probes.hpp"

#include "../oracles/frozen_values.hpp"
#include "doctest.h"

#include <cmath>

using namespace darling;

namespace {

double alpha_k(int k, double d, double H, double T) {
  return std::min(1.0, std::sqrt(k * d * H) / (2.0 * std::sqrt(T) * std::pow(std::log(T), 2)));
}

}  // namespace

TEST_CASE("tabular probes cover every pair") {
  const auto probes = tabular_probes(10, 2, 5);
  REQUIRE(probes.slices.size() == 5);
  CHECK(probes.slices[0].pairs.size() == 20);
  CHECK(probes.slices[3].states.size() == 10);
  CHECK(probes.max_actions() == 2);
  CHECK(probes.total_size() == 100);
}

TEST_CASE("feature rank") {
  Eigen::MatrixXd m(3, 3);
  m << 1, 2, 3, 2, 4, 6, 0, 1, 1;
  CHECK(feature_rank(m) == 2);
  CHECK(feature_rank(Eigen::MatrixXd::Identity(4, 4)) == 4);
  CHECK(feature_rank(Eigen::MatrixXd::Zero(2, 3)) == 0);
}

TEST_CASE("greedy selection keeps rank-increasing pairs only") {
  FeatureMap::Table t(4, 2);
  t << 1, 0, 2, 0, 0, 1, 1, 1;
  FeatureMap phi(2, 2, t);
  const std::vector<StateAction> cand = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  const auto slice = greedy_probe_selection(phi, cand, 0);
  CHECK(slice.rank == 2);
  CHECK(slice.pairs == std::vector<StateAction>{{0, 0}, {1, 0}});
  CHECK(slice.states == std::vector<int>{0, 1});
  CHECK(slice.state_slot(1) == 1);
  CHECK(slice.state_slot(5) == -1);
}

TEST_CASE("chain-lock greedy probes reach full rank") {
  const auto lock = build_chain_lock({});
  Rng rng(9);
  const int T = 500;
  const auto ps = ps_chain_lock(lock, T, {}, random_initial_states(15, T, rng));
  const auto probes = greedy_probes(ps);
  for (const auto& slice : probes.slices) CHECK(slice.rank == 10);
  CHECK(probes.total_size() == 100);
}

TEST_CASE("endpoint swap is reward-detectable and transition-invisible") {
  const auto lock = build_bidirectional_lock({});
  const auto swapped = ps_endpoint_swap(lock);
  const auto probes = tabular_probes(10, 2, 5);
  const auto& phi = *std::make_shared<const FeatureMap>(one_hot_feature_map(10, 2));
  bool reward_seen = false;
  for (int h = 0; h < 5; ++h) {
    const auto& slice = probes.slices[static_cast<std::size_t>(h)];
    CHECK(check_transition_identifiability(slice, phi, lock.model, swapped.model) == Identifiability::invisible);
    if (check_reward_identifiability(slice, phi, reward_difference(lock.model, swapped.model, h)) ==
        Identifiability::detectable) {
      reward_seen = true;
    }
  }
  CHECK(reward_seen);
  CHECK(check_reward_identifiability(probes.slices[4], phi, reward_difference(lock.model, swapped.model, 4)) ==
        Identifiability::detectable);
}

TEST_CASE("chain switch is transition-detectable") {
  const auto lock = build_chain_lock({});
  Rng rng(9);
  const auto ps = ps_chain_lock(lock, 100, {}, random_initial_states(15, 100, rng));
  const auto probes = greedy_probes(ps);
  for (const auto& slice : probes.slices) {
    CHECK(check_transition_identifiability(slice, *lock.features, *lock.bases[0], *lock.bases[1]) ==
          Identifiability::detectable);
  }
  // Restricting the probe slice to pairs off the changed latents hides the change.
  ProbeSlice blind;
  blind.step = 0;
  for (int s = 5; s < 15; ++s) {
    for (int a = 0; a < 7; ++a) {
      const int l = lock.latent[static_cast<std::size_t>(pair_index(s, a, 7))];
      if (l >= 5) blind.pairs.emplace_back(s, a);
    }
  }
  blind.derive_supports();
  CHECK(check_transition_identifiability(blind, *lock.features, *lock.bases[0], *lock.bases[1]) ==
        Identifiability::invisible);
}

TEST_CASE("reachability of the tabular lock under uniform probing") {
  const auto lock = build_bidirectional_lock({});
  const auto ps = ps_tabular_lock(lock, 100, {50});
  const auto rep = estimate_reachability(ps, tabular_probes(10, 2, 5));
  CHECK(rep.occupancy.size() == 2);
  CHECK(rep.occupancy[0][0][0] == 1.0);
  // Full slices include states that are unreachable at step 0.
  CHECK(rep.p_min == 0.0);
  CHECK_FALSE(rep.assumption_holds);

  ProbeCollection reachable;
  const std::vector<double> init = {1, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  for (int h = 0; h < 5; ++h) {
    ProbeSlice slice;
    slice.step = h;
    slice.pairs = reachable_candidates(lock.model, init, h);
    slice.derive_supports();
    reachable.slices.push_back(slice);
  }
  const auto rep2 = estimate_reachability(ps, reachable);
  CHECK(rep2.assumption_holds);
  CHECK(rep2.p_min > 0.0);
  for (const auto& occ : rep2.occupancy[1]) {
    double total = 0.0;
    for (double x : occ) total += x;
    CHECK(total == doctest::Approx(1.0));
  }
}

TEST_CASE("separation lengths match frozen values") {
  auto alpha = [](int k) { return alpha_k(k, 20, 5, 50000); };
  CHECK(std::ceil(1.0 / alpha(1)) == frozen::alpha_d20_h5_t50000_k1_period);
  CHECK(separation_length(alpha(1), 20, 0.35, 2, 50000) == frozen::separation_m_k1);
  CHECK(separation_length(alpha(1), 15, 0.35, 2, 50000) == frozen::separation_l_k1);
  CHECK(separation_length(alpha(4), 20, 0.35, 2, 50000) == frozen::separation_m_k4);
  CHECK(separation_length(alpha(4), 15, 0.35, 2, 50000) == frozen::separation_l_k4);

  const std::vector<int> cps = {2000000, 2100000};
  const auto rep = separation_requirements(alpha, 20, 15, 0.35, 2, 50000, cps);
  REQUIRE(rep.satisfied.size() == 2);
  CHECK(rep.satisfied[0]);
  CHECK_FALSE(rep.satisfied[1]);
  CHECK_FALSE(rep.all_satisfied());
  CHECK_THROWS(separation_length(0.0, 20, 0.35, 2, 50000));
}
