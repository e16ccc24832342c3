#include "darling/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace darling {

void MdpDims::validate() const {
  if (states <= 0 || actions <= 0 || horizon <= 0 || episodes <= 0 || feature_dim <= 0) {
    throw std::invalid_argument("MdpDims: all dimensions must be strictly positive");
  }
}

FeatureMap::FeatureMap(int states, int actions, Table table, bool one_hot)
    : states_(states), actions_(actions), table_(std::move(table)), one_hot_(one_hot) {
  if (states <= 0 || actions <= 0) throw std::invalid_argument("FeatureMap: empty state/action space");
  if (table_.rows() != static_cast<Eigen::Index>(states) * actions || table_.cols() <= 0) {
    throw std::invalid_argument("FeatureMap: table must have S*A rows and d > 0 columns");
  }
}

double FeatureMap::max_norm() const { return table_.rowwise().norm().maxCoeff(); }

FeatureMap one_hot_feature_map(int states, int actions) {
  const int d = states * actions;
  FeatureMap::Table table = FeatureMap::Table::Identity(d, d);
  return FeatureMap(states, actions, std::move(table), true);
}

SegmentModel::SegmentModel(int states, int actions, int horizon)
    : states_(states), actions_(actions), horizon_(horizon) {
  if (states <= 0 || actions <= 0 || horizon <= 0) {
    throw std::invalid_argument("SegmentModel: dimensions must be positive");
  }
  rewards_.assign(static_cast<std::size_t>(horizon) * states * actions, 0.0);
  kernels_.assign(rewards_.size() * states, 0.0);
}

SegmentModel SegmentModel::from_linear(std::shared_ptr<const FeatureMap> features, LinearParams params) {
  if (!features) throw std::invalid_argument("SegmentModel::from_linear: null feature map");
  const int S = features->states();
  const int A = features->actions();
  const int d = features->dim();
  const int H = static_cast<int>(params.theta.rows());
  if (params.theta.cols() != d || static_cast<int>(params.mu.size()) != H) {
    throw std::invalid_argument("SegmentModel::from_linear: parameter shapes do not match");
  }
  SegmentModel model(S, A, H);
  for (int h = 0; h < H; ++h) {
    const auto& mu = params.mu[static_cast<std::size_t>(h)];
    if (mu.rows() != d || mu.cols() != S) {
      throw std::invalid_argument("SegmentModel::from_linear: mu_h must be d x S");
    }
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const auto phi = (*features)(s, a);
        model.set_reward(h, s, a, phi.dot(params.theta.row(h).transpose()));
        auto row = model.next_state_probs(h, s, a);
        Eigen::Map<Eigen::RowVectorXd>(row.data(), S) = phi.transpose() * mu;
      }
    }
  }
  model.linear_ = std::move(params);
  model.features_ = std::move(features);
  return model;
}

double SegmentModel::stochasticity_error() const {
  double worst = 0.0;
  for (std::size_t row = 0; row < rewards_.size(); ++row) {
    double sum = 0.0;
    for (int j = 0; j < states_; ++j) {
      const double p = kernels_[row * states_ + j];
      if (p < 0.0 || !std::isfinite(p)) return std::numeric_limits<double>::infinity();
      sum += p;
    }
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return worst;
}

void SegmentModel::validate(double tol) const {
  if (rewards_.empty()) throw std::invalid_argument("SegmentModel: empty model");
  if (stochasticity_error() > tol) {
    throw std::invalid_argument("SegmentModel: transition kernel is not row-stochastic");
  }
  for (double r : rewards_) {
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("SegmentModel: reward mean outside [0,1]");
  }
  if (linear_ && features_) {
    for (int h = 0; h < horizon_; ++h) {
      for (int s = 0; s < states_; ++s) {
        for (int a = 0; a < actions_; ++a) {
          const auto phi = (*features_)(s, a);
          if (std::abs(phi.dot(linear_->theta.row(h).transpose()) - reward(h, s, a)) > 1e-9) {
            throw std::invalid_argument("SegmentModel: reward table disagrees with theta");
          }
          const Eigen::RowVectorXd p = phi.transpose() * linear_->mu[static_cast<std::size_t>(h)];
          const auto row = next_state_probs(h, s, a);
          for (int j = 0; j < states_; ++j) {
            if (std::abs(p(j) - row[static_cast<std::size_t>(j)]) > 1e-9) {
              throw std::invalid_argument("SegmentModel: kernel disagrees with mu");
            }
          }
        }
      }
    }
  }
}

SegmentModel mix_segments(const SegmentModel& a, const SegmentModel& b, double lambda) {
  if (a.states() != b.states() || a.actions() != b.actions() || a.horizon() != b.horizon()) {
    throw std::invalid_argument("mix_segments: dimension mismatch");
  }
  if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("mix_segments: lambda outside [0,1]");
  if (a.linear() && b.linear() && a.features() == b.features()) {
    LinearParams p;
    p.theta = (1.0 - lambda) * a.linear()->theta + lambda * b.linear()->theta;
    for (std::size_t h = 0; h < a.linear()->mu.size(); ++h) {
      p.mu.push_back((1.0 - lambda) * a.linear()->mu[h] + lambda * b.linear()->mu[h]);
    }
    return SegmentModel::from_linear(a.features(), std::move(p));
  }
  SegmentModel out(a.states(), a.actions(), a.horizon());
  for (int h = 0; h < a.horizon(); ++h) {
    for (int s = 0; s < a.states(); ++s) {
      for (int act = 0; act < a.actions(); ++act) {
        out.set_reward(h, s, act, (1.0 - lambda) * a.reward(h, s, act) + lambda * b.reward(h, s, act));
        auto row = out.next_state_probs(h, s, act);
        const auto ra = a.next_state_probs(h, s, act);
        const auto rb = b.next_state_probs(h, s, act);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = (1.0 - lambda) * ra[j] + lambda * rb[j];
      }
    }
  }
  return out;
}

int PSModel::segment_index(int t) const {
  return static_cast<int>(std::upper_bound(change_points.begin(), change_points.end(), t) -
                          change_points.begin());
}

int PSModel::initial_state(int t) const {
  if (initial_states.size() == 1) return initial_states.front();
  return initial_states.at(static_cast<std::size_t>(t) - 1);
}

void PSModel::validate() const {
  dims.validate();
  if (segments.size() != change_points.size() + 1) {
    throw std::invalid_argument("PSModel: segment count must equal change-point count + 1");
  }
  int prev = 1;
  for (int nu : change_points) {
    if (nu <= prev || nu > dims.episodes) {
      throw std::invalid_argument("PSModel: change-points must be strictly increasing within [2, T]");
    }
    prev = nu;
  }
  if (initial_states.size() != 1 && initial_states.size() != static_cast<std::size_t>(dims.episodes)) {
    throw std::invalid_argument("PSModel: initial_states must hold 1 or T entries");
  }
  for (int s : initial_states) {
    if (s < 0 || s >= dims.states) throw std::invalid_argument("PSModel: initial state out of range");
  }
  for (const auto& seg : segments) {
    if (!seg) throw std::invalid_argument("PSModel: null segment");
    if (seg->states() != dims.states || seg->actions() != dims.actions || seg->horizon() != dims.horizon) {
      throw std::invalid_argument("PSModel: segment dimensions differ from dims");
    }
    seg->validate();
  }
}

StochasticPolicy::StochasticPolicy(int horizon, int states, int actions)
    : horizon_(horizon), states_(states), actions_(actions),
      probs_(static_cast<std::size_t>(horizon) * states * actions, 0.0) {}

StochasticPolicy StochasticPolicy::from_deterministic(const DeterministicPolicy& policy, int actions) {
  StochasticPolicy out(policy.horizon, policy.states, actions);
  for (int h = 0; h < policy.horizon; ++h) {
    for (int s = 0; s < policy.states; ++s) out.set_deterministic(h, s, policy.action(h, s));
  }
  return out;
}

void StochasticPolicy::set_deterministic(int h, int s, int a) {
  if (a < 0 || a >= actions_) throw std::out_of_range("StochasticPolicy: action out of range");
  auto* p = probs_.data() + offset(h, s);
  std::fill(p, p + actions_, 0.0);
  p[a] = 1.0;
}

void StochasticPolicy::set_uniform(int h, int s, std::span<const int> support) {
  if (support.empty()) throw std::invalid_argument("StochasticPolicy: empty support");
  auto* p = probs_.data() + offset(h, s);
  std::fill(p, p + actions_, 0.0);
  const double w = 1.0 / static_cast<double>(support.size());
  for (int a : support) {
    if (a < 0 || a >= actions_) throw std::out_of_range("StochasticPolicy: action out of range");
    p[a] += w;
  }
}

namespace {

double expected_next(std::span<const double> row, const double* v_next) {
  double acc = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * v_next[j];
  return acc;
}

}  // namespace

ValueTable optimal_values(const SegmentModel& segment) {
  if (segment.stochasticity_error() > 1e-12) {
    throw std::invalid_argument("optimal_values: kernel is not row-stochastic");
  }
  const int S = segment.states();
  const int A = segment.actions();
  const int H = segment.horizon();
  ValueTable out{S, A, H, std::vector<double>(static_cast<std::size_t>(H + 1) * S, 0.0),
                 std::vector<double>(static_cast<std::size_t>(H) * S * A, 0.0)};
  for (int h = H - 1; h >= 0; --h) {
    const double* v_next = out.v.data() + static_cast<std::size_t>(h + 1) * S;
    for (int s = 0; s < S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a) {
        const double q = segment.reward(h, s, a) + expected_next(segment.next_state_probs(h, s, a), v_next);
        out.q[(static_cast<std::size_t>(h) * S + s) * A + a] = q;
        best = std::max(best, q);
      }
      out.v[static_cast<std::size_t>(h) * S + s] = best;
    }
  }
  return out;
}

ValueTable policy_values(const SegmentModel& segment, const DeterministicPolicy& policy) {
  const int S = segment.states();
  const int A = segment.actions();
  const int H = segment.horizon();
  if (policy.horizon != H || policy.states != S) {
    throw std::invalid_argument("policy_values: policy shape does not match the segment");
  }
  ValueTable out{S, A, H, std::vector<double>(static_cast<std::size_t>(H + 1) * S, 0.0),
                 std::vector<double>(static_cast<std::size_t>(H) * S * A, 0.0)};
  for (int h = H - 1; h >= 0; --h) {
    const double* v_next = out.v.data() + static_cast<std::size_t>(h + 1) * S;
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        out.q[(static_cast<std::size_t>(h) * S + s) * A + a] =
            segment.reward(h, s, a) + expected_next(segment.next_state_probs(h, s, a), v_next);
      }
      const int a = policy.action(h, s);
      if (a < 0 || a >= A) throw std::out_of_range("policy_values: action out of range");
      out.v[static_cast<std::size_t>(h) * S + s] = out.q_value(h, s, a);
    }
  }
  return out;
}

std::vector<double> evaluate_policy(const SegmentModel& segment, const StochasticPolicy& policy) {
  const int S = segment.states();
  const int A = segment.actions();
  const int H = segment.horizon();
  if (policy.horizon() != H || policy.states() != S || policy.actions() != A) {
    throw std::invalid_argument("evaluate_policy: policy shape does not match the segment");
  }
  std::vector<double> next(static_cast<std::size_t>(S), 0.0);
  std::vector<double> cur(static_cast<std::size_t>(S), 0.0);
  for (int h = H - 1; h >= 0; --h) {
    for (int s = 0; s < S; ++s) {
      const auto pi = policy.probs(h, s);
      double acc = 0.0;
      for (int a = 0; a < A; ++a) {
        const double w = pi[static_cast<std::size_t>(a)];
        if (w == 0.0) continue;
        acc += w * (segment.reward(h, s, a) + expected_next(segment.next_state_probs(h, s, a), next.data()));
      }
      cur[static_cast<std::size_t>(s)] = acc;
    }
    std::swap(cur, next);
  }
  return next;
}

DeterministicPolicy greedy_policy(const ValueTable& table) {
  DeterministicPolicy out(table.horizon, table.states);
  for (int h = 0; h < table.horizon; ++h) {
    for (int s = 0; s < table.states; ++s) {
      int best = 0;
      for (int a = 1; a < table.actions; ++a) {
        if (table.q_value(h, s, a) > table.q_value(h, s, best)) best = a;
      }
      out.action(h, s) = best;
    }
  }
  return out;
}

int sample_index(std::span<const double> probs, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  int last_positive = 0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (probs[j] <= 0.0) continue;
    acc += probs[j];
    last_positive = static_cast<int>(j);
    if (u < acc) return last_positive;
  }
  return last_positive;
}

EpisodeRecord simulate_episode(const SegmentModel& segment, RewardNoise noise, int initial_state,
                               ActionSource& agent, Rng& rng) {
  const int H = segment.horizon();
  EpisodeRecord rec;
  rec.states.reserve(static_cast<std::size_t>(H) + 1);
  rec.actions.reserve(static_cast<std::size_t>(H));
  rec.rewards.reserve(static_cast<std::size_t>(H));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  int s = initial_state;
  rec.states.push_back(s);
  for (int h = 0; h < H; ++h) {
    const int a = agent.act(h, s, rng);
    if (a < 0 || a >= segment.actions()) throw std::out_of_range("simulate_episode: agent action out of range");
    const double mean = segment.reward(h, s, a);
    double r = mean;
    if (noise == RewardNoise::bernoulli) r = unif(rng) < mean ? 1.0 : 0.0;
    const int next = sample_index(segment.next_state_probs(h, s, a), rng);
    agent.observe(h, s, a, r, next);
    rec.actions.push_back(a);
    rec.rewards.push_back(r);
    rec.total_reward += r;
    rec.states.push_back(next);
    s = next;
  }
  return rec;
}

std::vector<double> dynamic_regret(std::span<const EpisodeLog> trace) {
  std::vector<double> out;
  out.reserve(trace.size());
  double acc = 0.0;
  for (const auto& e : trace) {
    acc += e.oracle_value - e.policy_value;
    out.push_back(acc);
  }
  return out;
}

}  // namespace darling
