#pragma once

// DARLING: a stationary learner wrapped with scheduled probing episodes,
// frozen-learner forced exploration over a probe collection, reward and
// transition change tests, and restarts on detection.

#include "darling/agent.hpp"
#include "darling/detectors.hpp"
#include "darling/probes.hpp"

#include <memory>
#include <string>
#include <vector>

namespace darling {

/// alpha_k = min(1, sqrt(k d H) / (2 sqrt(T) (ln T)^2)).
class AlphaSchedule {
 public:
  AlphaSchedule(int dim, int horizon, int episodes);

  double alpha(int k) const;
  /// ceil(1 / alpha_k).
  long long period(int k) const;

 private:
  int d_, H_, T_;
};

/// True iff (t - tau) mod period == 0.
bool is_probe_episode(int t, int tau, long long period);

/// Maps a feature coordinate in [-1, 1] to a [0, 1] detector sample.
inline double transition_stream_value(double x) { return (x + 1.0) / 2.0; }

enum class StreamMode {
  tabular,  // one next-state indicator stream per (probe pair, s')
  linear    // one stream per (probe pair, coordinate j, reference action a')
};

enum class TestKind { glr, gsr };

struct DarlingConfig {
  DetectorConfig detector;
  StreamMode streams = StreamMode::linear;
  TestKind test = TestKind::glr;
  std::vector<int> reference_actions;  // empty means all actions
  bool test_rewards = true;
  bool test_transitions = true;
  int alpha_dim = 0;  // d in alpha_k; <= 0 means the feature dimension
};

class Darling final : public Agent {
 public:
  Darling(std::unique_ptr<Learner> learner, ProbeCollection probes, std::shared_ptr<const FeatureMap> features,
          int episodes, DarlingConfig cfg, std::uint64_t seed);

  std::string name() const override { return "DARLING(" + learner_->name() + ")"; }
  void begin_episode(int t) override;
  StochasticPolicy behavior_policy() const override;
  int act(int h, int s, Rng& rng) override;
  void observe(int h, int s, int a, double reward, int next_state) override;
  EpisodeEvents end_episode(int t) override;

  /// Swaps the change test, e.g. for scripted triggers.
  void set_detector(Detector detector) { detector_ = std::move(detector); }

  const Learner& learner() const { return *learner_; }
  const ProbeCollection& probes() const { return probes_; }
  const AlphaSchedule& schedule() const { return schedule_; }
  int tau() const { return tau_; }
  int segment() const { return k_; }
  bool probing() const { return probing_; }
  int restart_count() const { return k_ - 1; }
  std::size_t reward_stream_count() const { return reward_hist_.size(); }
  std::size_t transition_stream_count() const { return trans_hist_.size(); }
  /// Total samples held across every history.
  std::size_t history_samples() const;
  /// Samples appended to reward histories during the current episode.
  int reward_samples_this_episode() const { return reward_appends_; }

 private:
  void test_history(const ScalarHistory& history, TriggerEvent event);
  void restart(int t);

  std::unique_ptr<Learner> learner_;
  ProbeCollection probes_;
  std::shared_ptr<const FeatureMap> features_;
  DarlingConfig cfg_;
  AlphaSchedule schedule_;
  Detector detector_;
  Rng rng_;

  std::vector<int> refs_;
  int S_, A_, H_;
  int streams_per_pair_;
  // pair_id_[h][s * A + a] -> probe pair index or -1.
  std::vector<std::vector<int>> pair_id_;
  std::vector<ScalarHistory> reward_hist_;
  std::vector<ScalarHistory> trans_hist_;  // pair index * streams_per_pair + stream

  int tau_ = 0;
  int k_ = 1;
  bool probing_ = false;
  bool restart_flag_ = false;
  int reward_appends_ = 0;
  std::vector<TriggerEvent> triggers_;
};

}  // namespace darling
