#include "darling/probes.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace darling {

int ProbeSlice::state_slot(int s) const {
  const auto it = std::lower_bound(states.begin(), states.end(), s);
  if (it == states.end() || *it != s) return -1;
  return static_cast<int>(it - states.begin());
}

void ProbeSlice::derive_supports() {
  std::map<int, std::vector<int>> by_state;
  for (const auto& [s, a] : pairs) by_state[s].push_back(a);
  states.clear();
  actions.clear();
  for (auto& [s, acts] : by_state) {
    std::sort(acts.begin(), acts.end());
    acts.erase(std::unique(acts.begin(), acts.end()), acts.end());
    states.push_back(s);
    actions.push_back(std::move(acts));
  }
}

int ProbeCollection::max_actions() const {
  std::size_t best = 0;
  for (const auto& slice : slices) {
    for (const auto& acts : slice.actions) best = std::max(best, acts.size());
  }
  return static_cast<int>(best);
}

int ProbeCollection::total_size() const {
  int total = 0;
  for (const auto& slice : slices) total += slice.rank;
  return total;
}

ProbeCollection tabular_probes(int states, int actions, int horizon) {
  if (states <= 0 || actions <= 0 || horizon <= 0) throw std::invalid_argument("tabular_probes: bad dimensions");
  ProbeCollection out;
  for (int h = 0; h < horizon; ++h) {
    ProbeSlice slice;
    slice.step = h;
    for (int s = 0; s < states; ++s) {
      for (int a = 0; a < actions; ++a) slice.pairs.emplace_back(s, a);
    }
    slice.rank = states * actions;
    slice.derive_supports();
    out.slices.push_back(std::move(slice));
  }
  return out;
}

namespace {

// Row-echelon basis maintained incrementally: each stored row has a pivot
// column where it is the only nonzero among stored rows' pivots.
class EchelonBasis {
 public:
  EchelonBasis(int dim, double tol) : dim_(dim), tol_(tol) {}

  /// Reduces v against the basis; keeps it (returns true) if it adds rank.
  bool try_insert(Eigen::VectorXd v) {
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const double c = v(pivots_[i]);
      if (c != 0.0) v -= c * rows_[i];
    }
    Eigen::Index pivot = 0;
    const double mag = v.cwiseAbs().maxCoeff(&pivot);  // partial pivoting
    if (mag <= tol_) return false;
    v /= v(pivot);
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const double c = rows_[i](pivot);
      if (c != 0.0) rows_[i] -= c * v;
    }
    rows_.push_back(std::move(v));
    pivots_.push_back(pivot);
    return true;
  }
  int rank() const { return static_cast<int>(rows_.size()); }
  bool full() const { return rank() >= dim_; }

 private:
  int dim_;
  double tol_;
  std::vector<Eigen::VectorXd> rows_;
  std::vector<Eigen::Index> pivots_;
};

}  // namespace

int feature_rank(const Eigen::MatrixXd& rows, double tol) {
  EchelonBasis basis(static_cast<int>(rows.cols()), tol);
  for (Eigen::Index i = 0; i < rows.rows() && !basis.full(); ++i) basis.try_insert(rows.row(i).transpose());
  return basis.rank();
}

ProbeSlice greedy_probe_selection(const FeatureMap& features, std::span<const StateAction> candidates, int step,
                                  double tol) {
  if (candidates.empty()) throw std::invalid_argument("greedy_probe_selection: no candidates");
  EchelonBasis basis(features.dim(), tol);
  ProbeSlice slice;
  slice.step = step;
  for (const auto& [s, a] : candidates) {
    if (basis.full()) break;
    if (basis.try_insert(features(s, a))) slice.pairs.emplace_back(s, a);
  }
  slice.rank = basis.rank();
  slice.derive_supports();
  return slice;
}

Identifiability check_reward_identifiability(const ProbeSlice& slice, const FeatureMap& features,
                                             const Eigen::VectorXd& delta) {
  if (delta.size() != features.dim()) throw std::invalid_argument("check_reward_identifiability: dimension mismatch");
  for (const auto& [s, a] : slice.pairs) {
    if (std::abs(features(s, a).dot(delta)) > 1e-9) return Identifiability::detectable;
  }
  return Identifiability::invisible;
}

Identifiability check_transition_identifiability(const ProbeSlice& slice, const FeatureMap& features,
                                                 const SegmentModel& before, const SegmentModel& after,
                                                 std::span<const int> reference_actions) {
  std::vector<int> refs(reference_actions.begin(), reference_actions.end());
  if (refs.empty()) {
    for (int a = 0; a < features.actions(); ++a) refs.push_back(a);
  }
  const int S = features.states();
  const int h = slice.step;
  for (const auto& [s, a] : slice.pairs) {
    const auto p0 = before.next_state_probs(h, s, a);
    const auto p1 = after.next_state_probs(h, s, a);
    for (int ap : refs) {
      // E[phi(s', a')] difference = sum_s' (P1 - P0)(s') phi(s', a').
      Eigen::VectorXd diff = Eigen::VectorXd::Zero(features.dim());
      for (int sp = 0; sp < S; ++sp) {
        const double dp = p1[static_cast<std::size_t>(sp)] - p0[static_cast<std::size_t>(sp)];
        if (dp != 0.0) diff += dp * features(sp, ap);
      }
      if (diff.cwiseAbs().maxCoeff() > 1e-9) return Identifiability::detectable;
    }
  }
  return Identifiability::invisible;
}

Eigen::VectorXd reward_difference(const SegmentModel& before, const SegmentModel& after, int h) {
  if (before.linear() && after.linear()) {
    return (after.linear()->theta.row(h) - before.linear()->theta.row(h)).transpose();
  }
  const int S = before.states(), A = before.actions();
  Eigen::VectorXd out(S * A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) out(pair_index(s, a, A)) = after.reward(h, s, a) - before.reward(h, s, a);
  }
  return out;
}

long long separation_length(double alpha, double detector_samples, double p_min, int max_actions, int episodes) {
  if (!(p_min > 0.0 && p_min <= 1.0)) throw std::invalid_argument("separation_length: p_min must lie in (0,1]");
  if (max_actions < 1) throw std::invalid_argument("separation_length: N_e must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("separation_length: alpha must lie in (0,1]");
  const long double lt = std::log(static_cast<long double>(episodes));
  const long double n = max_actions, p = p_min, d = detector_samples;
  const long double inner = d * n / p + n * n * lt / (4 * p * p) +
                            std::sqrt(d * lt * n * n * n / (2 * p * p * p) + lt * lt * n * n * n * n / (16 * p * p * p * p));
  const auto period = static_cast<long long>(std::ceil(1.0L / static_cast<long double>(alpha)));
  return period * static_cast<long long>(std::ceil(inner));
}

bool SeparationReport::all_satisfied() const {
  return std::all_of(satisfied.begin(), satisfied.end(), [](bool b) { return b; });
}

SeparationReport separation_requirements(const std::function<double(int)>& alpha, double m_detector,
                                         double l_detector, double p_min, int max_actions, int episodes,
                                         std::span<const int> change_points) {
  SeparationReport rep;
  rep.m_detector = m_detector;
  rep.l_detector = l_detector;
  rep.p_min = p_min;
  rep.max_actions = max_actions;
  rep.episodes = episodes;
  const int segments = static_cast<int>(change_points.size()) + 1;
  for (int k = 1; k <= segments; ++k) {
    const double a = alpha(k);
    rep.alpha.push_back(a);
    rep.m.push_back(separation_length(a, m_detector, p_min, max_actions, episodes));
    rep.l.push_back(separation_length(a, l_detector, p_min, max_actions, episodes));
  }
  for (std::size_t k = 0; k < change_points.size(); ++k) {
    const long long nu = change_points[k];
    if (k == 0) {
      rep.satisfied.push_back(nu >= rep.m[0]);
    } else {
      rep.satisfied.push_back(nu - change_points[k - 1] >= rep.l[k - 1] + rep.m[k]);
    }
  }
  return rep;
}

namespace {

std::vector<double> initial_distribution(const PSModel& model, int segment) {
  std::vector<double> dist(static_cast<std::size_t>(model.dims.states), 0.0);
  const int first = model.segment_start(segment);
  const int last = segment < model.change_count() ? model.change_points[static_cast<std::size_t>(segment)] - 1
                                                  : model.dims.episodes;
  if (model.initial_states.size() == 1) {
    dist[static_cast<std::size_t>(model.initial_states.front())] = 1.0;
    return dist;
  }
  const double w = 1.0 / static_cast<double>(last - first + 1);
  for (int t = first; t <= last; ++t) dist[static_cast<std::size_t>(model.initial_state(t))] += w;
  return dist;
}

// One propagation step; `uniform_over` gives the action support at (h, s).
template <typename Support>
std::vector<double> propagate(const SegmentModel& m, int h, const std::vector<double>& dist, Support&& support) {
  std::vector<double> next(dist.size(), 0.0);
  for (int s = 0; s < m.states(); ++s) {
    const double w = dist[static_cast<std::size_t>(s)];
    if (w == 0.0) continue;
    const std::vector<int>& acts = support(s);
    const double wa = w / static_cast<double>(acts.size());
    for (int a : acts) {
      const auto row = m.next_state_probs(h, s, a);
      for (std::size_t j = 0; j < row.size(); ++j) next[j] += wa * row[j];
    }
  }
  return next;
}

}  // namespace

ReachabilityReport estimate_reachability(const PSModel& model, const ProbeCollection& probes) {
  const int H = model.dims.horizon;
  if (static_cast<int>(probes.slices.size()) != H) {
    throw std::invalid_argument("estimate_reachability: need one probe slice per step");
  }
  std::vector<int> all_actions(static_cast<std::size_t>(model.dims.actions));
  for (int a = 0; a < model.dims.actions; ++a) all_actions[static_cast<std::size_t>(a)] = a;

  ReachabilityReport rep;
  rep.p_min = 1.0;
  bool any_required = false;
  for (int k = 0; k <= model.change_count(); ++k) {
    const SegmentModel& seg = *model.segments[static_cast<std::size_t>(k)];
    std::vector<std::vector<double>> occ;
    std::vector<double> dist = initial_distribution(model, k);
    for (int h = 0; h < H; ++h) {
      occ.push_back(dist);
      const ProbeSlice& slice = probes.slices[static_cast<std::size_t>(h)];
      for (int s : slice.states) {
        any_required = true;
        rep.p_min = std::min(rep.p_min, dist[static_cast<std::size_t>(s)]);
      }
      dist = propagate(seg, h, dist, [&](int s) -> const std::vector<int>& {
        const int slot = slice.state_slot(s);
        return slot >= 0 ? slice.actions[static_cast<std::size_t>(slot)] : all_actions;
      });
    }
    rep.occupancy.push_back(std::move(occ));
  }
  if (!any_required) rep.p_min = 0.0;
  rep.assumption_holds = rep.p_min > 0.0;
  return rep;
}

std::vector<StateAction> reachable_candidates(const SegmentModel& model, std::span<const double> initial, int step) {
  std::vector<int> all_actions(static_cast<std::size_t>(model.actions()));
  for (int a = 0; a < model.actions(); ++a) all_actions[static_cast<std::size_t>(a)] = a;
  std::vector<double> dist(initial.begin(), initial.end());
  for (int h = 0; h < step; ++h) {
    dist = propagate(model, h, dist, [&](int) -> const std::vector<int>& { return all_actions; });
  }
  std::vector<StateAction> out;
  for (int s = 0; s < model.states(); ++s) {
    if (dist[static_cast<std::size_t>(s)] <= 0.0) continue;
    for (int a = 0; a < model.actions(); ++a) out.emplace_back(s, a);
  }
  return out;
}

ProbeCollection greedy_probes(const PSModel& model, double tol) {
  if (!model.features) throw std::invalid_argument("greedy_probes: model has no feature map");
  const SegmentModel& seg0 = *model.segments.front();
  const std::vector<double> init = initial_distribution(model, 0);
  ProbeCollection out;
  for (int h = 0; h < model.dims.horizon; ++h) {
    const auto candidates = reachable_candidates(seg0, init, h);
    out.slices.push_back(greedy_probe_selection(*model.features, candidates, h, tol));
  }
  return out;
}

}  // namespace darling
