#pragma once

// Stationary base learners wrapped by DARLING and the restart baselines.

#include "darling/mdp.hpp"

#include <Eigen/Cholesky>

#include <memory>
#include <string>
#include <vector>

namespace darling {

/// A stationary episodic learner. act() is the greedy choice and never mutates;
/// all learning happens in observe() and end_episode().
class Learner : public ActionSource {
 public:
  virtual std::string name() const = 0;
  virtual int select_action(int h, int s) const = 0;
  int act(int h, int s, Rng& /*rng*/) override { return select_action(h, s); }
  virtual void end_episode() = 0;
  /// Argmax policy of the current Q tables (value copy).
  virtual DeterministicPolicy greedy_policy_snapshot() const = 0;
  /// Back to the freshly constructed state.
  virtual void reset() = 0;
  virtual std::unique_ptr<Learner> clone() const = 0;

  virtual int states() const = 0;
  virtual int actions() const = 0;
  virtual int horizon() const = 0;
};

struct OptimisticQConfig {
  double bonus_scale = 1.0;  // c_b
  double delta = 0.0;        // <= 0 means 1/T
};

/// Q-learning with Hoeffding bonus: alpha_N = (H+1)/(H+N),
/// b_N = c_b sqrt(H^3 ln(S A T / delta) / N), Q clipped to [0, H - h].
class TabularOptimisticQ final : public Learner {
 public:
  TabularOptimisticQ(int states, int actions, int horizon, int episodes, OptimisticQConfig cfg = {});

  std::string name() const override { return "TabularOptimisticQ"; }
  int select_action(int h, int s) const override;
  void observe(int h, int s, int a, double reward, int next_state) override;
  void end_episode() override {}
  DeterministicPolicy greedy_policy_snapshot() const override;
  void reset() override;
  std::unique_ptr<Learner> clone() const override { return std::make_unique<TabularOptimisticQ>(*this); }

  int states() const override { return S_; }
  int actions() const override { return A_; }
  int horizon() const override { return H_; }

  double q(int h, int s, int a) const { return q_[idx(h, s, a)]; }
  double v(int h, int s) const { return v_[static_cast<std::size_t>(h) * S_ + s]; }
  int visits(int h, int s, int a) const { return n_[idx(h, s, a)]; }
  double bonus(int n) const;

 private:
  std::size_t idx(int h, int s, int a) const { return (static_cast<std::size_t>(h) * S_ + s) * A_ + a; }

  int S_, A_, H_;
  double log_term_;
  OptimisticQConfig cfg_;
  std::vector<double> q_;
  std::vector<double> v_;  // (H + 1) * S
  std::vector<int> n_;
};

struct LsviConfig {
  double lambda = 1.0;
  double beta = 0.0;   // <= 0 means d sqrt(ln(2 d T / delta))
  double delta = 0.0;  // <= 0 means 1/T
};

/// Least-squares value iteration with an elliptical bonus over a known
/// feature map. Data is aggregated per (h, s, a); Lambda_h is kept as a
/// Cholesky factor with one rank-one update per sample; planning runs at
/// episode end.
class LsviUcb final : public Learner {
 public:
  LsviUcb(std::shared_ptr<const FeatureMap> features, int horizon, int episodes, LsviConfig cfg = {});

  std::string name() const override { return "LSVI-UCB"; }
  int select_action(int h, int s) const override;
  void observe(int h, int s, int a, double reward, int next_state) override;
  void end_episode() override;
  DeterministicPolicy greedy_policy_snapshot() const override;
  void reset() override;
  std::unique_ptr<Learner> clone() const override { return std::make_unique<LsviUcb>(*this); }

  int states() const override { return S_; }
  int actions() const override { return A_; }
  int horizon() const override { return H_; }

  double q(int h, int s, int a) const { return q_[idx(h, s, a)]; }
  double beta() const { return beta_; }
  /// ||phi(s, a)||_{Lambda_h^{-1}} under the current factorization.
  double bonus_norm(int h, int s, int a) const;
  const Eigen::VectorXd& weights(int h) const { return w_[static_cast<std::size_t>(h)]; }

 private:
  struct Transition {
    int h, s, a;
    double r;
    int next;
  };
  std::size_t idx(int h, int s, int a) const { return (static_cast<std::size_t>(h) * S_ + s) * A_ + a; }
  void plan();

  std::shared_ptr<const FeatureMap> phi_;
  int S_, A_, H_, d_;
  LsviConfig cfg_;
  double beta_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> chol_;  // per h
  std::vector<Eigen::VectorXd> w_;                 // per h
  std::vector<int> count_;                         // per (h, s, a)
  std::vector<double> reward_sum_;                 // per (h, s, a)
  std::vector<double> next_count_;                 // per (h, s, a, s')
  std::vector<double> q_;
  std::vector<Transition> buffer_;
};

}  // namespace darling
