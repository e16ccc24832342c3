#pragma once

// Probe collections (maximal independent feature slices), identifiability
// checks for reward/transition changes, reachability under uniform probing,
// and separation-length diagnostics.

#include "darling/mdp.hpp"

#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace darling {

using StateAction = std::pair<int, int>;

/// Probed pairs at one step, with derived exploration supports.
struct ProbeSlice {
  int step = 0;
  std::vector<StateAction> pairs;
  int rank = 0;
  std::vector<int> states;                // S_{e,h}, ascending
  std::vector<std::vector<int>> actions;  // A_{e,h}^s, aligned with `states`

  /// Position of s in `states`, or -1.
  int state_slot(int s) const;
  bool contains_state(int s) const { return state_slot(s) >= 0; }
  /// Rebuilds states/actions from pairs (first-seen order within a state kept sorted).
  void derive_supports();
};

struct ProbeCollection {
  std::vector<ProbeSlice> slices;  // one per step

  /// N_e = max over (h, s) of |A_{e,h}^s|.
  int max_actions() const;
  /// |P| = sum_h rho_h.
  int total_size() const;
};

/// Full S x A slices at every step (one-hot maximal coverage).
ProbeCollection tabular_probes(int states, int actions, int horizon);

/// Numerical rank of the rows of m via Gaussian elimination with partial pivoting.
int feature_rank(const Eigen::MatrixXd& rows, double tol = 1e-9);

/// Keeps each candidate whose feature strictly increases the rank of the kept set.
ProbeSlice greedy_probe_selection(const FeatureMap& features, std::span<const StateAction> candidates, int step,
                                  double tol = 1e-9);

enum class Identifiability { detectable, invisible };

/// Detectable iff some probed pair has |phi(s, a)^T delta| > 1e-9.
Identifiability check_reward_identifiability(const ProbeSlice& slice, const FeatureMap& features,
                                             const Eigen::VectorXd& delta);

/// Compares expected successor features E[phi(s', a')] at probed pairs of step
/// slice.step under two segments, for each reference action a'.
Identifiability check_transition_identifiability(const ProbeSlice& slice, const FeatureMap& features,
                                                 const SegmentModel& before, const SegmentModel& after,
                                                 std::span<const int> reference_actions = {});

/// Reward parameter difference at step h: from linear params when both carry
/// them, otherwise from reward tables via the one-hot coordinates.
Eigen::VectorXd reward_difference(const SegmentModel& before, const SegmentModel& after, int h);

struct SeparationReport {
  std::vector<long long> m;  // m_k, k = 1..N+1
  std::vector<long long> l;  // l_k
  std::vector<bool> satisfied;  // Assumption 3 per change-point k = 1..N
  double m_detector = 0.0;
  double l_detector = 0.0;
  double p_min = 0.0;
  int max_actions = 1;
  int episodes = 0;
  std::vector<double> alpha;  // alpha_k used for each k

  bool all_satisfied() const;
};

/// One separation length: ceil(1/alpha) * ceil(D N/p + N^2 lnT/(4p^2) + sqrt(D lnT N^3/(2p^3) + lnT^2 N^4/(16 p^4))).
long long separation_length(double alpha, double detector_samples, double p_min, int max_actions, int episodes);

SeparationReport separation_requirements(const std::function<double(int)>& alpha, double m_detector,
                                         double l_detector, double p_min, int max_actions, int episodes,
                                         std::span<const int> change_points);

struct ReachabilityReport {
  /// occupancy[k][h][s]: probability of being in s at step h during segment k.
  std::vector<std::vector<std::vector<double>>> occupancy;
  double p_min = 0.0;
  bool assumption_holds = false;
};

/// Exact forward propagation under the uniform probing policy (uniform over
/// A_{e,h}^s on the support, uniform over A elsewhere) from each segment's
/// empirical initial-state distribution.
ReachabilityReport estimate_reachability(const PSModel& model, const ProbeCollection& probes);

/// Lexicographic (s, a) pairs whose state has nonzero occupancy at step h under
/// the fully uniform policy from the given initial distribution.
std::vector<StateAction> reachable_candidates(const SegmentModel& model, std::span<const double> initial, int step);

/// Greedy slices over reachable candidates of segment 0, one per step.
ProbeCollection greedy_probes(const PSModel& model, double tol = 1e-9);

}  // namespace darling
