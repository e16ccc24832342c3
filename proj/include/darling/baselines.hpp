#pragma once

// Learner wrappers without change detection: bare, fixed-period restart and
// ground-truth restart.

#include "darling/agent.hpp"

#include <memory>
#include <string>
#include <vector>

namespace darling {

/// Runs a learner unchanged; base class for the restart wrappers.
class BareAgent : public Agent {
 public:
  explicit BareAgent(std::unique_ptr<Learner> learner);

  std::string name() const override { return learner_->name(); }
  void begin_episode(int t) override;
  StochasticPolicy behavior_policy() const override;
  int act(int h, int s, Rng& rng) override { return learner_->act(h, s, rng); }
  void observe(int h, int s, int a, double reward, int next_state) override {
    learner_->observe(h, s, a, reward, next_state);
  }
  EpisodeEvents end_episode(int t) override;

  const Learner& learner() const { return *learner_; }
  int restart_count() const { return restarts_; }

 protected:
  void restart_learner() {
    learner_->reset();
    ++restarts_;
  }

  std::unique_ptr<Learner> learner_;
  int restarts_ = 0;
};

/// Resets the learner each time W episodes have elapsed since the last reset.
class PeriodicRestartAgent final : public BareAgent {
 public:
  PeriodicRestartAgent(std::unique_ptr<Learner> learner, int window);

  std::string name() const override { return "Periodic(" + learner_->name() + ")"; }
  EpisodeEvents end_episode(int t) override;
  int window() const { return window_; }

 private:
  int window_;
  int since_restart_ = 0;
};

/// W = ceil(c * sqrt(T / (N + 1))) for a known or expected change count N.
int budget_restart_window(int episodes, double expected_changes, double scale = 1.0);

/// Resets the learner at the start of every true change-point episode.
class OracleRestartAgent final : public BareAgent {
 public:
  OracleRestartAgent(std::unique_ptr<Learner> learner, std::vector<int> change_points);

  std::string name() const override { return "OracleRestart(" + learner_->name() + ")"; }
  void begin_episode(int t) override;
  EpisodeEvents end_episode(int t) override;

 private:
  std::vector<int> change_points_;
  std::size_t next_ = 0;
  bool restarted_now_ = false;
};

}  // namespace darling
