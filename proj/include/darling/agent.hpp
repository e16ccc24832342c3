#pragma once

// Episode-level agent interface shared by DARLING and the restart baselines.

#include "darling/learners.hpp"
#include "darling/mdp.hpp"

#include <memory>
#include <string>
#include <vector>

namespace darling {

enum class RestartSource { none, detector, schedule, oracle };

/// One detector firing: the stream that tripped and where it split.
struct TriggerEvent {
  enum class Test { reward, transition };
  Test test = Test::reward;
  int step = 0;
  int state = 0;
  int action = 0;
  int coordinate = -1;  // next state (tabular) or feature coordinate (linear); -1 for rewards
  int reference_action = -1;
  int split = 0;
  double statistic = 0.0;
};

struct EpisodeEvents {
  bool probe = false;
  bool restart = false;
  RestartSource restart_source = RestartSource::none;
  int restart_count = 0;  // cumulative, including this episode
  std::vector<TriggerEvent> triggers;
};

/// Call order per episode t: begin_episode(t), behavior_policy(), then
/// act/observe for every step, then end_episode(t).
class Agent : public ActionSource {
 public:
  virtual std::string name() const = 0;
  virtual void begin_episode(int t) = 0;
  /// Markov policy the agent follows during the current episode.
  virtual StochasticPolicy behavior_policy() const = 0;
  virtual EpisodeEvents end_episode(int t) = 0;
};

}  // namespace darling
