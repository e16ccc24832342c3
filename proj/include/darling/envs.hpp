#pragma once

// Benchmark environments: the bidirectional tabular lock, the linear chain
// lock, change-point schedules, and the two lower-bound hard instances.

#include "darling/environment.hpp"
#include "darling/mdp.hpp"

#include <array>
#include <functional>
#include <memory>
#include <vector>

namespace darling {

// ---------------------------------------------------------------- tabular lock

/// State layout: routing state 0; chain c position p (1..H-1) at 1 + c(H-1) + (p-1);
/// absorbing sink S-1. Hence S = 2H.
struct LockTabularSpec {
  int horizon = 5;
  int states = 10;
  int actions = 2;
  double success = 0.98;  // correct action advances with this probability
  double routing = 0.98;  // action c reaches chain c with this probability
  std::array<double, 2> endpoint_rewards{1.0, 0.25};
  double sink_reward = 0.0;  // <= 0 means 1/(8H)
  unsigned combination_seed = 7;

  void validate() const;
  double sink_pay() const { return sink_reward > 0.0 ? sink_reward : 1.0 / (8.0 * horizon); }
};

struct TabularLock {
  LockTabularSpec spec;
  SegmentModel model;
  std::array<std::vector<int>, 2> correct;  // correct[c][p - 1]
  std::array<double, 2> endpoint{1.0, 0.25};
  double routing = 0.98;

  int routing_state() const { return 0; }
  int sink() const { return spec.states - 1; }
  int chain_state(int c, int p) const { return 1 + c * (spec.horizon - 1) + (p - 1); }
};

TabularLock build_bidirectional_lock(const LockTabularSpec& spec);
/// Same lock with endpoint rewards exchanged; kernels untouched.
TabularLock ps_endpoint_swap(const TabularLock& lock);
/// Lock with routing probability for episode t interpolated from spec.routing
/// (t = 1) to 1 - spec.routing (t = T).
TabularLock drift_tabular(const TabularLock& lock, int t, int episodes);
/// Rebuild of `lock` with a different routing probability.
TabularLock with_routing(const TabularLock& lock, double routing);

// ----------------------------------------------------------------- chain lock

struct LockLinearSpec {
  int states = 15;
  int actions = 7;
  int horizon = 10;
  int dim = 10;
  int chains = 5;
  double keep = 0.99;  // good latent keeps the agent on its chain
  double dense_lo = 0.005;
  double dense_hi = 0.008;
  double split = 0.8;  // normal latents: split / (1 - split) to two random states
  unsigned seed = 1;

  void validate() const;
};

struct ChainLock {
  LockLinearSpec spec;
  std::shared_ptr<const FeatureMap> features;
  std::vector<std::shared_ptr<const SegmentModel>> bases;  // bases[g]: chain g is good
  std::vector<int> special_actions;                        // a_i at s_i
  std::vector<int> latent;                                 // latent index per (s, a)
};

ChainLock build_chain_lock(const LockLinearSpec& spec);

// ---------------------------------------------------------------- schedules

/// Geometric(T^-xi) segment lengths (support >= 1) accumulated while <= T.
std::vector<int> sample_geometric_changepoints(int episodes, double xi, Rng& rng);
/// N change-points splitting [1, T] into N + 1 segments whose lengths differ by at most 1
/// (longer ones first).
std::vector<int> even_changepoints(int episodes, int changes);

/// Segment k uses the lock for even k and its endpoint swap for odd k.
PSModel ps_tabular_lock(const TabularLock& lock, int episodes, std::vector<int> change_points);
/// Segment k has good chain (first_good + k) mod chains.
PSModel ps_chain_lock(const ChainLock& lock, int episodes, std::vector<int> change_points,
                      std::vector<int> initial_states, int first_good = 0);
/// Uniform random initial states, one per episode.
std::vector<int> random_initial_states(int states, int episodes, Rng& rng);

/// Tabular drift: a fresh model every episode; the oracle solves it exactly.
std::unique_ptr<DriftEnvironment> drift_tabular_environment(const TabularLock& lock, int episodes);
/// Chain drift: within window w, mix bases (w mod C) -> (w + 1 mod C) with lambda
/// = ((t - 1) mod window) / window; anchors let the oracle interpolate.
std::unique_ptr<DriftEnvironment> drift_chain_environment(const ChainLock& lock, int episodes, int window,
                                                          std::vector<int> initial_states);

// ------------------------------------------------------ tabular hard instance

/// Triple (h, leaf, a) with 0-based step, 0-based leaf position and action.
struct LeafTriple {
  int step = 0;
  int leaf = 0;
  int action = 0;
  bool operator==(const LeafTriple&) const = default;
};

struct HardTabularInfo {
  int depth = 0;        // D
  int leaves = 0;       // L = A^(D-1)
  int wait_steps = 0;   // Hbar = floor(H / 3)
  std::vector<double> eps;
  LeafTriple good;      // (D, leaf 0, a_g = 0)
  LeafTriple tilde;
  int waiting_state() const { return 0; }
  int root() const { return 1; }
  int first_leaf = 0;   // state index of leaf_1
  int good_state = 0;
  int bad_state = 0;
};

/// Picks the boosted triple for an i_k = 1 segment.
using TildeRule = std::function<LeafTriple(const HardTabularInfo&, int segment)>;
/// Lexicographically least triple (h, leaf, a) with h in [D, Hbar + D - 1], excluding `good`.
LeafTriple default_tilde_rule(const HardTabularInfo& info, int segment);

struct HardTabularInstance {
  PSModel model;
  HardTabularInfo info;
};

/// Tree depth D with S - 3 = (A^D - 1)/(A - 1), or -1.
int hard_instance_depth(int states, int actions);

HardTabularInstance build_tabular_hard_instance(int states, int actions, int horizon, int changes, int episodes,
                                                const std::vector<int>& bits, TildeRule tilde = {});

// ------------------------------------------------------- linear hard instance

struct HardLinearInstance {
  PSModel model;
  double delta = 0.0;  // amplitude
  double iota = 0.0;
  int dim = 0;         // d (actions are {-1,+1}^(d-1))
  /// mu[k][h] in {-Delta, +Delta}^(d-1) (zero for h >= H/2).
  std::vector<std::vector<Eigen::VectorXd>> mu;
};

/// Action index -> sign vector, bit j set = +1.
Eigen::VectorXd action_signs(int action, int dim);

/// signs[k][h][j] in {-1, +1} for h < H/2; the generator scales them by Delta.
HardLinearInstance build_linear_hard_instance(int dim, int horizon, int episodes, int changes,
                                              const std::vector<std::vector<std::vector<int>>>& signs);

}  // namespace darling
