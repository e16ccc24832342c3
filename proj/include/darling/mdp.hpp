#pragma once

// Exact episodic MDP representation: segment models, piecewise-stationary
// schedules, backward induction, policy evaluation and episode simulation.
//
// Index conventions used across the library:
//   * steps are 0-based, h = 0 .. H-1 (V has an extra terminal row h = H);
//   * episodes are 1-based, t = 1 .. T, matching the probing cadence (t - tau);
//   * one-hot feature coordinates are row-major, index(s, a) = s * A + a.

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace darling {

using Rng = std::mt19937_64;

struct MdpDims {
  int states = 0;
  int actions = 0;
  int horizon = 0;
  int episodes = 0;
  int feature_dim = 0;

  void validate() const;
};

inline int pair_index(int s, int a, int actions) { return s * actions + a; }

/// Known feature map phi: S x A -> R^d, stored densely (one row per pair).
class FeatureMap {
 public:
  using Table = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  FeatureMap(int states, int actions, Table table, bool one_hot = false);

  int states() const { return states_; }
  int actions() const { return actions_; }
  int dim() const { return static_cast<int>(table_.cols()); }
  bool is_one_hot() const { return one_hot_; }

  Eigen::Map<const Eigen::VectorXd> operator()(int s, int a) const {
    return {table_.data() + static_cast<Eigen::Index>(pair_index(s, a, actions_)) * table_.cols(),
            table_.cols()};
  }
  const Table& table() const { return table_; }
  double max_norm() const;

 private:
  int states_;
  int actions_;
  Table table_;
  bool one_hot_;
};

/// Canonical tabular embedding: d = S*A, phi(s, a) = e_{s*A + a}.
FeatureMap one_hot_feature_map(int states, int actions);

/// Linear parameters of one segment: r_h = Phi theta_h, P_h(s'|.) = Phi mu_h(s').
struct LinearParams {
  Eigen::MatrixXd theta;            // H x d
  std::vector<Eigen::MatrixXd> mu;  // H entries, each d x S
};

/// Per-step rewards and dense transition kernels of one stationary segment.
class SegmentModel {
 public:
  SegmentModel() = default;
  SegmentModel(int states, int actions, int horizon);

  /// Materializes r and P from linear parameters; keeps both representations.
  static SegmentModel from_linear(std::shared_ptr<const FeatureMap> features, LinearParams params);

  int states() const { return states_; }
  int actions() const { return actions_; }
  int horizon() const { return horizon_; }

  double reward(int h, int s, int a) const { return rewards_[reward_offset(h, s, a)]; }
  void set_reward(int h, int s, int a, double r) { rewards_[reward_offset(h, s, a)] = r; }

  std::span<const double> next_state_probs(int h, int s, int a) const {
    return {kernels_.data() + kernel_offset(h, s, a), static_cast<std::size_t>(states_)};
  }
  std::span<double> next_state_probs(int h, int s, int a) {
    return {kernels_.data() + kernel_offset(h, s, a), static_cast<std::size_t>(states_)};
  }
  double transition(int h, int s, int a, int next) const {
    return kernels_[kernel_offset(h, s, a) + static_cast<std::size_t>(next)];
  }

  const std::optional<LinearParams>& linear() const { return linear_; }
  const std::shared_ptr<const FeatureMap>& features() const { return features_; }

  /// Throws std::invalid_argument unless every row is a distribution within
  /// `tol`, rewards lie in [0,1] and linear parameters (if any) reproduce the
  /// materialized tables within 1e-9.
  void validate(double tol = 1e-12) const;
  /// Largest |sum_s' P - 1| over all rows; negative entries report as +inf.
  double stochasticity_error() const;

  std::span<const double> raw_rewards() const { return rewards_; }
  std::span<const double> raw_kernels() const { return kernels_; }

 private:
  std::size_t reward_offset(int h, int s, int a) const {
    return (static_cast<std::size_t>(h) * states_ + s) * actions_ + a;
  }
  std::size_t kernel_offset(int h, int s, int a) const { return reward_offset(h, s, a) * states_; }

  int states_ = 0;
  int actions_ = 0;
  int horizon_ = 0;
  std::vector<double> rewards_;
  std::vector<double> kernels_;
  std::optional<LinearParams> linear_;
  std::shared_ptr<const FeatureMap> features_;
};

/// Convex combination (1 - lambda) * a + lambda * b of rewards, kernels and,
/// when both carry them, linear parameters.
SegmentModel mix_segments(const SegmentModel& a, const SegmentModel& b, double lambda);

enum class RewardNoise { bernoulli, deterministic };

/// Piecewise-stationary episodic MDP. Segment k covers episodes
/// [nu_k, nu_{k+1}) with nu_0 = 1 and nu_{N+1} = T + 1.
struct PSModel {
  MdpDims dims;
  std::vector<int> change_points;
  std::vector<std::shared_ptr<const SegmentModel>> segments;
  std::vector<int> initial_states{0};  // size 1 (constant) or T
  RewardNoise reward_noise = RewardNoise::bernoulli;
  std::shared_ptr<const FeatureMap> features;

  int segment_index(int t) const;
  int initial_state(int t) const;
  int change_count() const { return static_cast<int>(change_points.size()); }
  /// First episode of segment k.
  int segment_start(int k) const { return k == 0 ? 1 : change_points[static_cast<std::size_t>(k) - 1]; }
  void validate() const;
};

/// Optimal or policy value tables; V has H + 1 rows with V_H == 0.
struct ValueTable {
  int states = 0;
  int actions = 0;
  int horizon = 0;
  std::vector<double> v;
  std::vector<double> q;

  double value(int h, int s) const { return v[static_cast<std::size_t>(h) * states + s]; }
  double q_value(int h, int s, int a) const {
    return q[(static_cast<std::size_t>(h) * states + s) * actions + a];
  }
};

struct DeterministicPolicy {
  int horizon = 0;
  int states = 0;
  std::vector<int> actions;  // H * S

  DeterministicPolicy() = default;
  DeterministicPolicy(int horizon, int states, int fill = 0)
      : horizon(horizon), states(states), actions(static_cast<std::size_t>(horizon) * states, fill) {}
  int action(int h, int s) const { return actions[static_cast<std::size_t>(h) * states + s]; }
  int& action(int h, int s) { return actions[static_cast<std::size_t>(h) * states + s]; }
  bool operator==(const DeterministicPolicy&) const = default;
};

/// Markov policy with per-(h, s) action distributions.
class StochasticPolicy {
 public:
  StochasticPolicy() = default;
  StochasticPolicy(int horizon, int states, int actions);
  static StochasticPolicy from_deterministic(const DeterministicPolicy& policy, int actions);

  int horizon() const { return horizon_; }
  int states() const { return states_; }
  int actions() const { return actions_; }

  std::span<const double> probs(int h, int s) const {
    return {probs_.data() + offset(h, s), static_cast<std::size_t>(actions_)};
  }
  void set_deterministic(int h, int s, int a);
  void set_uniform(int h, int s, std::span<const int> support);

 private:
  std::size_t offset(int h, int s) const {
    return (static_cast<std::size_t>(h) * states_ + s) * actions_;
  }
  int horizon_ = 0;
  int states_ = 0;
  int actions_ = 0;
  std::vector<double> probs_;
};

/// Backward induction: V_H = 0, Q_h = r_h + P_h V_{h+1}, V_h = max_a Q_h.
ValueTable optimal_values(const SegmentModel& segment);

/// Exact evaluation of a deterministic Markov policy.
ValueTable policy_values(const SegmentModel& segment, const DeterministicPolicy& policy);

/// Exact evaluation of a stochastic Markov policy; returns V_0(s) for all s.
std::vector<double> evaluate_policy(const SegmentModel& segment, const StochasticPolicy& policy);

/// Greedy policy of a value table, ties to the lowest action index.
DeterministicPolicy greedy_policy(const ValueTable& table);

/// Anything that chooses actions and can watch the resulting transitions.
class ActionSource {
 public:
  virtual ~ActionSource() = default;
  virtual int act(int h, int s, Rng& rng) = 0;
  virtual void observe(int h, int s, int a, double reward, int next_state) = 0;
};

struct EpisodeRecord {
  std::vector<int> states;  // H + 1 entries, states[H] is the terminal state
  std::vector<int> actions;
  std::vector<double> rewards;
  double total_reward = 0.0;
};

/// Samples one episode: s_{h+1} ~ P_h(.|s_h, a_h), reward per the noise model.
EpisodeRecord simulate_episode(const SegmentModel& segment, RewardNoise noise, int initial_state,
                               ActionSource& agent, Rng& rng);

/// Draws an index from a discrete distribution by inverse CDF.
int sample_index(std::span<const double> probs, Rng& rng);

/// Per-episode log consumed by the harness.
struct EpisodeLog {
  int t = 0;
  std::int64_t piece = 0;
  bool probe = false;
  bool restart = false;
  int restart_count = 0;
  int triggers = 0;
  double reward = 0.0;
  double oracle_value = 0.0;
  double policy_value = 0.0;
  double regret = 0.0;
  std::int64_t wall_ns = 0;
};

using RunTrace = std::vector<EpisodeLog>;

/// R(t) = sum_{u <= t} (oracle_value_u - policy_value_u).
std::vector<double> dynamic_regret(std::span<const EpisodeLog> trace);

}  // namespace darling
