#include "darling/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace darling {

BareAgent::BareAgent(std::unique_ptr<Learner> learner) : learner_(std::move(learner)) {
  if (!learner_) throw std::invalid_argument("BareAgent: null learner");
}

void BareAgent::begin_episode(int /*t*/) {}

StochasticPolicy BareAgent::behavior_policy() const {
  return StochasticPolicy::from_deterministic(learner_->greedy_policy_snapshot(), learner_->actions());
}

EpisodeEvents BareAgent::end_episode(int /*t*/) {
  learner_->end_episode();
  EpisodeEvents ev;
  ev.restart_count = restarts_;
  return ev;
}

PeriodicRestartAgent::PeriodicRestartAgent(std::unique_ptr<Learner> learner, int window)
    : BareAgent(std::move(learner)), window_(window) {
  if (window < 1) throw std::invalid_argument("PeriodicRestartAgent: window must be >= 1");
}

EpisodeEvents PeriodicRestartAgent::end_episode(int /*t*/) {
  learner_->end_episode();
  EpisodeEvents ev;
  if (++since_restart_ == window_) {
    restart_learner();
    since_restart_ = 0;
    ev.restart = true;
    ev.restart_source = RestartSource::schedule;
  }
  ev.restart_count = restarts_;
  return ev;
}

int budget_restart_window(int episodes, double expected_changes, double scale) {
  if (episodes < 1 || expected_changes < 0.0 || !(scale > 0.0)) {
    throw std::invalid_argument("budget_restart_window: bad arguments");
  }
  const double w = std::ceil(scale * std::sqrt(static_cast<double>(episodes) / (expected_changes + 1.0)));
  return std::clamp(static_cast<int>(w), 1, episodes);
}

OracleRestartAgent::OracleRestartAgent(std::unique_ptr<Learner> learner, std::vector<int> change_points)
    : BareAgent(std::move(learner)), change_points_(std::move(change_points)) {
  if (!std::is_sorted(change_points_.begin(), change_points_.end())) {
    throw std::invalid_argument("OracleRestartAgent: change-points must be sorted");
  }
}

void OracleRestartAgent::begin_episode(int t) {
  restarted_now_ = false;
  while (next_ < change_points_.size() && change_points_[next_] < t) ++next_;
  if (next_ < change_points_.size() && change_points_[next_] == t) {
    restart_learner();
    restarted_now_ = true;
    ++next_;
  }
}

EpisodeEvents OracleRestartAgent::end_episode(int /*t*/) {
  learner_->end_episode();
  EpisodeEvents ev;
  ev.restart = restarted_now_;
  if (restarted_now_) ev.restart_source = RestartSource::oracle;
  ev.restart_count = restarts_;
  return ev;
}

}  // namespace darling
