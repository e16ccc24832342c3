#include "darling/learners.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace darling {

namespace {

int argmax_row(const double* q, int actions) {
  int best = 0;
  for (int a = 1; a < actions; ++a) {
    if (q[a] > q[best]) best = a;
  }
  return best;
}

}  // namespace

TabularOptimisticQ::TabularOptimisticQ(int states, int actions, int horizon, int episodes, OptimisticQConfig cfg)
    : S_(states), A_(actions), H_(horizon), cfg_(cfg) {
  if (states <= 0 || actions <= 0 || horizon <= 0 || episodes <= 0) {
    throw std::invalid_argument("TabularOptimisticQ: dimensions must be positive");
  }
  if (cfg_.bonus_scale < 0.0) throw std::invalid_argument("TabularOptimisticQ: negative bonus scale");
  const double delta = cfg_.delta > 0.0 ? cfg_.delta : 1.0 / static_cast<double>(episodes);
  log_term_ = std::log(static_cast<double>(S_) * A_ * static_cast<double>(episodes) / delta);
  reset();
}

void TabularOptimisticQ::reset() {
  q_.assign(static_cast<std::size_t>(H_) * S_ * A_, 0.0);
  v_.assign(static_cast<std::size_t>(H_ + 1) * S_, 0.0);
  n_.assign(q_.size(), 0);
  for (int h = 0; h < H_; ++h) {
    const double cap = H_ - h;
    std::fill(q_.begin() + static_cast<std::ptrdiff_t>(idx(h, 0, 0)),
              q_.begin() + static_cast<std::ptrdiff_t>(idx(h + 1, 0, 0)), cap);
    std::fill(v_.begin() + static_cast<std::ptrdiff_t>(h) * S_, v_.begin() + static_cast<std::ptrdiff_t>(h + 1) * S_,
              cap);
  }
}

double TabularOptimisticQ::bonus(int n) const {
  return cfg_.bonus_scale * std::sqrt(static_cast<double>(H_) * H_ * H_ * log_term_ / static_cast<double>(n));
}

int TabularOptimisticQ::select_action(int h, int s) const { return argmax_row(&q_[idx(h, s, 0)], A_); }

void TabularOptimisticQ::observe(int h, int s, int a, double reward, int next_state) {
  const std::size_t i = idx(h, s, a);
  const int n = ++n_[i];
  const double lr = static_cast<double>(H_ + 1) / static_cast<double>(H_ + n);
  const double target = reward + v_[static_cast<std::size_t>(h + 1) * S_ + next_state] + bonus(n);
  const double cap = H_ - h;
  q_[i] = std::clamp((1.0 - lr) * q_[i] + lr * target, 0.0, cap);
  const double* row = &q_[idx(h, s, 0)];
  v_[static_cast<std::size_t>(h) * S_ + s] = std::min(cap, *std::max_element(row, row + A_));
}

DeterministicPolicy TabularOptimisticQ::greedy_policy_snapshot() const {
  DeterministicPolicy p(H_, S_);
  for (int h = 0; h < H_; ++h) {
    for (int s = 0; s < S_; ++s) p.action(h, s) = select_action(h, s);
  }
  return p;
}

LsviUcb::LsviUcb(std::shared_ptr<const FeatureMap> features, int horizon, int episodes, LsviConfig cfg)
    : phi_(std::move(features)), H_(horizon), cfg_(cfg) {
  if (!phi_) throw std::invalid_argument("LsviUcb: null feature map");
  if (horizon <= 0 || episodes <= 0) throw std::invalid_argument("LsviUcb: dimensions must be positive");
  if (!(cfg_.lambda > 0.0)) throw std::invalid_argument("LsviUcb: lambda must be positive");
  S_ = phi_->states();
  A_ = phi_->actions();
  d_ = phi_->dim();
  const double T = static_cast<double>(episodes);
  const double delta = cfg_.delta > 0.0 ? cfg_.delta : 1.0 / T;
  beta_ = cfg_.beta > 0.0 ? cfg_.beta : d_ * std::sqrt(std::log(2.0 * d_ * T / delta));
  reset();
}

void LsviUcb::reset() {
  const Eigen::MatrixXd ridge = cfg_.lambda * Eigen::MatrixXd::Identity(d_, d_);
  chol_.assign(static_cast<std::size_t>(H_), Eigen::LLT<Eigen::MatrixXd>(ridge));
  w_.assign(static_cast<std::size_t>(H_), Eigen::VectorXd::Zero(d_));
  const std::size_t pairs = static_cast<std::size_t>(H_) * S_ * A_;
  count_.assign(pairs, 0);
  reward_sum_.assign(pairs, 0.0);
  next_count_.assign(pairs * S_, 0.0);
  q_.assign(pairs, 0.0);
  buffer_.clear();
  plan();
}

int LsviUcb::select_action(int h, int s) const { return argmax_row(&q_[idx(h, s, 0)], A_); }

void LsviUcb::observe(int h, int s, int a, double reward, int next_state) {
  buffer_.push_back({h, s, a, reward, next_state});
}

void LsviUcb::end_episode() {
  if (buffer_.empty()) return;
  for (const Transition& tr : buffer_) {
    const std::size_t i = idx(tr.h, tr.s, tr.a);
    ++count_[i];
    reward_sum_[i] += tr.r;
    next_count_[i * S_ + tr.next] += 1.0;
    chol_[static_cast<std::size_t>(tr.h)].rankUpdate((*phi_)(tr.s, tr.a), 1.0);
  }
  buffer_.clear();
  plan();
}

double LsviUcb::bonus_norm(int h, int s, int a) const {
  const auto phi = (*phi_)(s, a);
  const Eigen::VectorXd x = chol_[static_cast<std::size_t>(h)].solve(Eigen::VectorXd(phi));
  return std::sqrt(std::max(0.0, phi.dot(x)));
}

void LsviUcb::plan() {
  const double cap = H_;
  std::vector<double> v_next(static_cast<std::size_t>(S_), 0.0);
  std::vector<double> v_cur(static_cast<std::size_t>(S_), 0.0);
  const Eigen::MatrixXd phi_t = phi_->table().transpose();  // d x SA
  for (int h = H_ - 1; h >= 0; --h) {
    const auto& chol = chol_[static_cast<std::size_t>(h)];
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d_);
    for (int s = 0; s < S_; ++s) {
      for (int a = 0; a < A_; ++a) {
        const std::size_t i = idx(h, s, a);
        if (count_[i] == 0) continue;
        double target = reward_sum_[i];
        const double* nc = &next_count_[i * S_];
        for (int j = 0; j < S_; ++j) target += nc[j] * v_next[static_cast<std::size_t>(j)];
        rhs += target * (*phi_)(s, a);
      }
    }
    w_[static_cast<std::size_t>(h)] = chol.solve(rhs);
    const Eigen::MatrixXd inv_phi = chol.solve(phi_t);  // Lambda^{-1} Phi^T
    const Eigen::VectorXd mean = phi_t.transpose() * w_[static_cast<std::size_t>(h)];
    const Eigen::VectorXd quad = phi_t.cwiseProduct(inv_phi).colwise().sum().transpose();
    for (int s = 0; s < S_; ++s) {
      double best = 0.0;
      for (int a = 0; a < A_; ++a) {
        const auto row = static_cast<Eigen::Index>(pair_index(s, a, A_));
        const double qv = std::clamp(mean(row) + beta_ * std::sqrt(std::max(0.0, quad(row))), 0.0, cap);
        q_[idx(h, s, a)] = qv;
        best = std::max(best, qv);
      }
      v_cur[static_cast<std::size_t>(s)] = best;
    }
    std::swap(v_cur, v_next);
  }
}

DeterministicPolicy LsviUcb::greedy_policy_snapshot() const {
  DeterministicPolicy p(H_, S_);
  for (int h = 0; h < H_; ++h) {
    for (int s = 0; s < S_; ++s) p.action(h, s) = select_action(h, s);
  }
  return p;
}

}  // namespace darling
