#include "darling/darling.hpp"

#include <cmath>
#include <stdexcept>

namespace darling {

AlphaSchedule::AlphaSchedule(int dim, int horizon, int episodes) : d_(dim), H_(horizon), T_(episodes) {
  if (episodes < 3) throw std::invalid_argument("AlphaSchedule: T must be >= 3");
  if (dim < 1 || horizon < 1) throw std::invalid_argument("AlphaSchedule: d and H must be positive");
}

double AlphaSchedule::alpha(int k) const {
  if (k < 1) throw std::invalid_argument("AlphaSchedule: k must be >= 1");
  const double lt = std::log(static_cast<double>(T_));
  const double raw = std::sqrt(static_cast<double>(k) * d_ * H_) / (2.0 * std::sqrt(static_cast<double>(T_)) * lt * lt);
  return std::min(1.0, raw);
}

long long AlphaSchedule::period(int k) const { return static_cast<long long>(std::ceil(1.0 / alpha(k))); }

bool is_probe_episode(int t, int tau, long long period) {
  if (period < 1) throw std::invalid_argument("is_probe_episode: period must be >= 1");
  return (static_cast<long long>(t) - tau) % period == 0;
}

Darling::Darling(std::unique_ptr<Learner> learner, ProbeCollection probes, std::shared_ptr<const FeatureMap> features,
                 int episodes, DarlingConfig cfg, std::uint64_t seed)
    : learner_(std::move(learner)),
      probes_(std::move(probes)),
      features_(std::move(features)),
      cfg_(std::move(cfg)),
      schedule_(cfg_.alpha_dim > 0 ? cfg_.alpha_dim : (features_ ? features_->dim() : 1),
                learner_ ? learner_->horizon() : 1, episodes),
      rng_(seed) {
  if (!learner_) throw std::invalid_argument("Darling: null learner");
  if (!features_) throw std::invalid_argument("Darling: null feature map");
  cfg_.detector.validate();
  S_ = learner_->states();
  A_ = learner_->actions();
  H_ = learner_->horizon();
  if (features_->states() != S_ || features_->actions() != A_) {
    throw std::invalid_argument("Darling: feature map does not match the learner");
  }
  if (static_cast<int>(probes_.slices.size()) != H_) throw std::invalid_argument("Darling: need one slice per step");

  refs_ = cfg_.reference_actions;
  if (refs_.empty()) {
    for (int a = 0; a < A_; ++a) refs_.push_back(a);
  }
  for (int a : refs_) {
    if (a < 0 || a >= A_) throw std::invalid_argument("Darling: reference action out of range");
  }
  streams_per_pair_ = cfg_.streams == StreamMode::tabular ? S_ : features_->dim() * static_cast<int>(refs_.size());

  pair_id_.assign(static_cast<std::size_t>(H_), std::vector<int>(static_cast<std::size_t>(S_) * A_, -1));
  int next = 0;
  for (int h = 0; h < H_; ++h) {
    auto& slice = probes_.slices[static_cast<std::size_t>(h)];
    if (slice.step != h) throw std::invalid_argument("Darling: slice steps must be 0..H-1 in order");
    slice.derive_supports();
    for (const auto& [s, a] : slice.pairs) {
      if (s < 0 || s >= S_ || a < 0 || a >= A_) throw std::invalid_argument("Darling: probe pair out of range");
      int& id = pair_id_[static_cast<std::size_t>(h)][static_cast<std::size_t>(pair_index(s, a, A_))];
      if (id < 0) id = next++;
    }
  }
  reward_hist_.resize(static_cast<std::size_t>(next));
  trans_hist_.resize(static_cast<std::size_t>(next) * static_cast<std::size_t>(streams_per_pair_));

  if (cfg_.test == TestKind::gsr) {
    detector_ = [](const ScalarHistory& h, const DetectorConfig& c) { return gsr_test(h, c); };
  } else {
    detector_ = [](const ScalarHistory& h, const DetectorConfig& c) { return glr_test(h, c); };
  }
}

void Darling::begin_episode(int t) {
  if (t <= tau_) throw std::invalid_argument("Darling: episodes must follow the last restart");
  probing_ = is_probe_episode(t, tau_, schedule_.period(k_));
  restart_flag_ = false;
  reward_appends_ = 0;
  triggers_.clear();
}

StochasticPolicy Darling::behavior_policy() const {
  auto pol = StochasticPolicy::from_deterministic(learner_->greedy_policy_snapshot(), A_);
  if (!probing_) return pol;
  for (int h = 0; h < H_; ++h) {
    const auto& slice = probes_.slices[static_cast<std::size_t>(h)];
    for (std::size_t i = 0; i < slice.states.size(); ++i) pol.set_uniform(h, slice.states[i], slice.actions[i]);
  }
  return pol;
}

int Darling::act(int h, int s, Rng& /*rng*/) {
  if (probing_) {
    const auto& slice = probes_.slices[static_cast<std::size_t>(h)];
    const int slot = slice.state_slot(s);
    if (slot >= 0) {
      const auto& acts = slice.actions[static_cast<std::size_t>(slot)];
      std::uniform_int_distribution<std::size_t> pick(0, acts.size() - 1);
      return acts[pick(rng_)];
    }
  }
  return learner_->select_action(h, s);
}

void Darling::test_history(const ScalarHistory& history, TriggerEvent event) {
  const DetectionOutcome out = detector_(history, cfg_.detector);
  if (!out.triggered) return;
  event.split = out.best_split.value_or(0);
  event.statistic = out.best_statistic;
  triggers_.push_back(event);
  restart_flag_ = true;
}

void Darling::observe(int h, int s, int a, double reward, int next_state) {
  if (!probing_) {
    learner_->observe(h, s, a, reward, next_state);
    return;
  }
  const int id = pair_id_[static_cast<std::size_t>(h)][static_cast<std::size_t>(pair_index(s, a, A_))];
  // Off-support steps and learner-chosen actions at probing episodes are not recorded.
  if (id < 0 || !probes_.slices[static_cast<std::size_t>(h)].contains_state(s)) return;

  TriggerEvent base;
  base.step = h;
  base.state = s;
  base.action = a;

  ScalarHistory& rh = reward_hist_[static_cast<std::size_t>(id)];
  rh.append(reward);
  ++reward_appends_;
  if (cfg_.test_rewards) {
    TriggerEvent ev = base;
    ev.test = TriggerEvent::Test::reward;
    test_history(rh, ev);
  }

  const std::size_t first = static_cast<std::size_t>(id) * static_cast<std::size_t>(streams_per_pair_);
  if (cfg_.streams == StreamMode::tabular) {
    for (int sp = 0; sp < S_; ++sp) {
      ScalarHistory& th = trans_hist_[first + static_cast<std::size_t>(sp)];
      th.append(transition_stream_value(sp == next_state ? 1.0 : 0.0));
      if (cfg_.test_transitions) {
        TriggerEvent ev = base;
        ev.test = TriggerEvent::Test::transition;
        ev.coordinate = sp;
        test_history(th, ev);
      }
    }
    return;
  }
  const int d = features_->dim();
  for (std::size_t r = 0; r < refs_.size(); ++r) {
    const auto phi = (*features_)(next_state, refs_[r]);
    for (int j = 0; j < d; ++j) {
      ScalarHistory& th = trans_hist_[first + r * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)];
      th.append(transition_stream_value(phi(j)));
      if (cfg_.test_transitions) {
        TriggerEvent ev = base;
        ev.test = TriggerEvent::Test::transition;
        ev.coordinate = j;
        ev.reference_action = refs_[r];
        test_history(th, ev);
      }
    }
  }
}

void Darling::restart(int t) {
  learner_->reset();
  for (auto& h : reward_hist_) h.clear();
  for (auto& h : trans_hist_) h.clear();
  tau_ = t;
  ++k_;
  restart_flag_ = false;
}

EpisodeEvents Darling::end_episode(int t) {
  if (!probing_) learner_->end_episode();
  EpisodeEvents ev;
  ev.probe = probing_;
  ev.triggers = std::move(triggers_);
  triggers_.clear();
  if (restart_flag_) {
    restart(t);
    ev.restart = true;
    ev.restart_source = RestartSource::detector;
  }
  ev.restart_count = restart_count();
  return ev;
}

std::size_t Darling::history_samples() const {
  std::size_t n = 0;
  for (const auto& h : reward_hist_) n += h.size();
  for (const auto& h : trans_hist_) n += h.size();
  return n;
}

}  // namespace darling
