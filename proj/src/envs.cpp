#include "darling/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace darling {

// ---------------------------------------------------------------- tabular lock

void LockTabularSpec::validate() const {
  if (horizon < 2) throw std::invalid_argument("LockTabularSpec: horizon must be >= 2");
  if (actions < 2) throw std::invalid_argument("LockTabularSpec: need at least two actions");
  if (states != 2 * horizon) {
    throw std::invalid_argument("LockTabularSpec: states must equal 2H (routing + two chains of H-1 + sink)");
  }
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(success) || !prob(routing)) throw std::invalid_argument("LockTabularSpec: probability outside [0,1]");
  if (!prob(endpoint_rewards[0]) || !prob(endpoint_rewards[1]) || sink_reward > 1.0) {
    throw std::invalid_argument("LockTabularSpec: reward outside [0,1]");
  }
}

namespace {

void fill_lock_model(TabularLock& lock) {
  const auto& sp = lock.spec;
  const int H = sp.horizon, A = sp.actions, S = sp.states;
  const double pay = sp.sink_pay();
  SegmentModel m(S, A, H);
  for (int h = 0; h < H; ++h) {
    for (int a = 0; a < A; ++a) {
      // routing
      auto row = m.next_state_probs(h, lock.routing_state(), a);
      if (a < 2) {
        row[static_cast<std::size_t>(lock.chain_state(a, 1))] += lock.routing;
        row[static_cast<std::size_t>(lock.chain_state(1 - a, 1))] += 1.0 - lock.routing;
        m.set_reward(h, lock.routing_state(), a, 0.0);
      } else {
        row[static_cast<std::size_t>(lock.sink())] = 1.0;
        m.set_reward(h, lock.routing_state(), a, pay);
      }
      // sink
      m.next_state_probs(h, lock.sink(), a)[static_cast<std::size_t>(lock.sink())] = 1.0;
      m.set_reward(h, lock.sink(), a, pay);
      // chains
      for (int c = 0; c < 2; ++c) {
        for (int p = 1; p <= H - 1; ++p) {
          const int s = lock.chain_state(c, p);
          auto r = m.next_state_probs(h, s, a);
          const bool correct = a == lock.correct[static_cast<std::size_t>(c)][static_cast<std::size_t>(p - 1)];
          if (!correct) {
            r[static_cast<std::size_t>(lock.sink())] = 1.0;
            m.set_reward(h, s, a, pay);
          } else if (p < H - 1) {
            r[static_cast<std::size_t>(lock.chain_state(c, p + 1))] = sp.success;
            r[static_cast<std::size_t>(lock.sink())] = 1.0 - sp.success;
            m.set_reward(h, s, a, 0.0);
          } else {
            r[static_cast<std::size_t>(lock.sink())] = 1.0;
            m.set_reward(h, s, a, lock.endpoint[static_cast<std::size_t>(c)]);
          }
        }
      }
    }
  }
  lock.model = std::move(m);
}

}  // namespace

TabularLock build_bidirectional_lock(const LockTabularSpec& spec) {
  spec.validate();
  TabularLock lock;
  lock.spec = spec;
  lock.endpoint = spec.endpoint_rewards;
  lock.routing = spec.routing;
  Rng rng(spec.combination_seed);
  std::uniform_int_distribution<int> pick(0, spec.actions - 1);
  for (auto& chain : lock.correct) {
    chain.resize(static_cast<std::size_t>(spec.horizon - 1));
    for (auto& a : chain) a = pick(rng);
  }
  fill_lock_model(lock);
  return lock;
}

TabularLock ps_endpoint_swap(const TabularLock& lock) {
  TabularLock out = lock;
  std::swap(out.endpoint[0], out.endpoint[1]);
  fill_lock_model(out);
  return out;
}

TabularLock with_routing(const TabularLock& lock, double routing) {
  if (routing < 0.0 || routing > 1.0) throw std::invalid_argument("with_routing: probability outside [0,1]");
  TabularLock out = lock;
  out.routing = routing;
  fill_lock_model(out);
  return out;
}

TabularLock drift_tabular(const TabularLock& lock, int t, int episodes) {
  if (episodes < 2 || t < 1 || t > episodes) throw std::out_of_range("drift_tabular: episode outside [1, T]");
  const double w = static_cast<double>(t - 1) / static_cast<double>(episodes - 1);
  const double start = lock.spec.routing;
  return with_routing(lock, start + (1.0 - 2.0 * start) * w);
}

// ----------------------------------------------------------------- chain lock

void LockLinearSpec::validate() const {
  if (states <= chains || chains < 1) throw std::invalid_argument("LockLinearSpec: need normal states besides chains");
  if (dim <= chains) throw std::invalid_argument("LockLinearSpec: dim must exceed the chain count");
  if (actions < 2 || horizon < 1) throw std::invalid_argument("LockLinearSpec: bad actions/horizon");
  if (states - chains < 2) throw std::invalid_argument("LockLinearSpec: need two normal states for splits");
  if (!(keep >= 0.0 && keep <= 1.0 && split >= 0.0 && split <= 1.0)) {
    throw std::invalid_argument("LockLinearSpec: probability outside [0,1]");
  }
  if (!(dense_lo >= 0.0 && dense_lo <= dense_hi && dense_hi <= 1.0)) {
    throw std::invalid_argument("LockLinearSpec: bad dense reward range");
  }
}

ChainLock build_chain_lock(const LockLinearSpec& spec) {
  spec.validate();
  const int S = spec.states, A = spec.actions, H = spec.horizon, d = spec.dim, C = spec.chains;
  Rng rng(spec.seed);
  std::uniform_int_distribution<int> pick_action(0, A - 1);
  std::uniform_int_distribution<int> pick_latent(0, d - 1);
  std::uniform_int_distribution<int> pick_other(0, d - 2);
  std::uniform_int_distribution<int> pick_normal(C, S - 1);

  ChainLock lock;
  lock.spec = spec;
  lock.special_actions.resize(static_cast<std::size_t>(C));
  for (auto& a : lock.special_actions) a = pick_action(rng);

  // Redraw until every latent coordinate is used by some pair.
  std::vector<int> latent(static_cast<std::size_t>(S) * A);
  for (int attempt = 0;; ++attempt) {
    if (attempt > 1000) throw std::runtime_error("build_chain_lock: cannot cover every latent coordinate");
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        int& l = latent[static_cast<std::size_t>(pair_index(s, a, A))];
        if (s < C) {
          if (a == lock.special_actions[static_cast<std::size_t>(s)]) {
            l = s;
          } else {
            l = pick_other(rng);
            if (l >= s) ++l;  // uniform over [d] \ {s}
          }
        } else {
          l = pick_latent(rng);
        }
      }
    }
    std::vector<bool> used(static_cast<std::size_t>(d), false);
    for (int l : latent) used[static_cast<std::size_t>(l)] = true;
    if (std::all_of(used.begin(), used.end(), [](bool b) { return b; })) break;
  }
  lock.latent = latent;

  FeatureMap::Table table = FeatureMap::Table::Zero(S * A, d);
  for (int i = 0; i < S * A; ++i) table(i, latent[static_cast<std::size_t>(i)]) = 1.0;
  lock.features = std::make_shared<const FeatureMap>(S, A, std::move(table));

  // Latent destinations shared by all bases.
  std::vector<int> exit_state(static_cast<std::size_t>(C));
  for (auto& e : exit_state) e = pick_normal(rng);
  std::vector<std::pair<int, int>> split_states(static_cast<std::size_t>(d));
  for (int l = C; l < d; ++l) {
    const int x = pick_normal(rng);
    int y = pick_normal(rng);
    while (y == x) y = pick_normal(rng);
    split_states[static_cast<std::size_t>(l)] = {x, y};
  }

  std::uniform_real_distribution<double> dense(spec.dense_lo, spec.dense_hi);
  for (int g = 0; g < C; ++g) {
    LinearParams p;
    p.theta = Eigen::MatrixXd::Zero(H, d);
    for (int h = 0; h < H; ++h) {
      for (int j = 0; j < d; ++j) p.theta(h, j) = dense(rng);
      p.theta(h, g) = h == H - 1 ? 1.0 : 0.0;
    }
    Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(d, S);
    for (int i = 0; i < C; ++i) {
      const double stay = i == g ? spec.keep : 1.0 - spec.keep;
      mu(i, i) += stay;
      mu(i, exit_state[static_cast<std::size_t>(i)]) += 1.0 - stay;
    }
    for (int l = C; l < d; ++l) {
      const auto [x, y] = split_states[static_cast<std::size_t>(l)];
      mu(l, x) += spec.split;
      mu(l, y) += 1.0 - spec.split;
    }
    p.mu.assign(static_cast<std::size_t>(H), mu);
    lock.bases.push_back(std::make_shared<const SegmentModel>(SegmentModel::from_linear(lock.features, std::move(p))));
  }
  return lock;
}

// ---------------------------------------------------------------- schedules

std::vector<int> sample_geometric_changepoints(int episodes, double xi, Rng& rng) {
  if (episodes < 1) throw std::invalid_argument("sample_geometric_changepoints: T must be positive");
  if (xi < 0.0) throw std::invalid_argument("sample_geometric_changepoints: xi must be nonnegative");
  const double p = std::pow(static_cast<double>(episodes), -xi);
  std::vector<int> nu;
  if (p >= 1.0) {
    for (int t = 2; t <= episodes; ++t) nu.push_back(t);
    return nu;
  }
  std::geometric_distribution<long long> geom(p);  // failures before success
  long long next = 1;
  while (true) {
    next += 1 + geom(rng);
    if (next > episodes) break;
    nu.push_back(static_cast<int>(next));
  }
  return nu;
}

std::vector<int> even_changepoints(int episodes, int changes) {
  if (changes < 0 || changes >= episodes) throw std::invalid_argument("even_changepoints: need 0 <= N < T");
  const int segments = changes + 1;
  const int base = episodes / segments;
  const int longer = episodes % segments;
  std::vector<int> nu;
  int start = 1;
  for (int k = 0; k < changes; ++k) {
    start += base + (k < longer ? 1 : 0);
    nu.push_back(start);
  }
  return nu;
}

PSModel ps_tabular_lock(const TabularLock& lock, int episodes, std::vector<int> change_points) {
  PSModel ps;
  ps.dims = {lock.spec.states, lock.spec.actions, lock.spec.horizon, episodes, lock.spec.states * lock.spec.actions};
  ps.change_points = std::move(change_points);
  const auto base = std::make_shared<const SegmentModel>(lock.model);
  const auto swapped = std::make_shared<const SegmentModel>(ps_endpoint_swap(lock).model);
  for (std::size_t k = 0; k <= ps.change_points.size(); ++k) ps.segments.push_back(k % 2 == 0 ? base : swapped);
  ps.initial_states = {lock.routing_state()};
  ps.reward_noise = RewardNoise::deterministic;
  ps.features = std::make_shared<const FeatureMap>(one_hot_feature_map(lock.spec.states, lock.spec.actions));
  ps.validate();
  return ps;
}

std::vector<int> random_initial_states(int states, int episodes, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, states - 1);
  std::vector<int> out(static_cast<std::size_t>(episodes));
  for (auto& s : out) s = pick(rng);
  return out;
}

PSModel ps_chain_lock(const ChainLock& lock, int episodes, std::vector<int> change_points,
                      std::vector<int> initial_states, int first_good) {
  const auto& sp = lock.spec;
  PSModel ps;
  ps.dims = {sp.states, sp.actions, sp.horizon, episodes, sp.dim};
  ps.change_points = std::move(change_points);
  for (std::size_t k = 0; k <= ps.change_points.size(); ++k) {
    ps.segments.push_back(lock.bases[(static_cast<std::size_t>(first_good) + k) % lock.bases.size()]);
  }
  ps.initial_states = std::move(initial_states);
  ps.reward_noise = RewardNoise::deterministic;
  ps.features = lock.features;
  ps.validate();
  return ps;
}

std::unique_ptr<DriftEnvironment> drift_tabular_environment(const TabularLock& lock, int episodes) {
  const auto& sp = lock.spec;
  MdpDims dims{sp.states, sp.actions, sp.horizon, episodes, sp.states * sp.actions};
  auto gen = [lock, episodes](int t) { return drift_tabular(lock, t, episodes).model; };
  auto features = std::make_shared<const FeatureMap>(one_hot_feature_map(sp.states, sp.actions));
  return std::make_unique<DriftEnvironment>(dims, gen, std::vector<int>{lock.routing_state()},
                                            RewardNoise::deterministic, features);
}

std::unique_ptr<DriftEnvironment> drift_chain_environment(const ChainLock& lock, int episodes, int window,
                                                          std::vector<int> initial_states) {
  if (window < 1) throw std::invalid_argument("drift_chain_environment: window must be >= 1");
  const auto& sp = lock.spec;
  MdpDims dims{sp.states, sp.actions, sp.horizon, episodes, sp.dim};
  const auto bases = lock.bases;
  const auto C = static_cast<int>(bases.size());
  auto gen = [bases, window, C](int t) {
    const int w = (t - 1) / window;
    const double lambda = static_cast<double>((t - 1) % window) / window;
    const auto& lo = *bases[static_cast<std::size_t>(w % C)];
    if (lambda == 0.0) return lo;
    return mix_segments(lo, *bases[static_cast<std::size_t>((w + 1) % C)], lambda);
  };
  auto anchors = [bases, window, C](int t) -> std::optional<OracleAnchors> {
    const int w = (t - 1) / window;
    OracleAnchors an;
    an.lo_key = w % C;
    an.hi_key = (w + 1) % C;
    an.lo = bases[static_cast<std::size_t>(an.lo_key)];
    an.hi = bases[static_cast<std::size_t>(an.hi_key)];
    an.lambda = static_cast<double>((t - 1) % window) / window;
    return an;
  };
  std::vector<int> nominal;
  for (int t = window + 1; t <= episodes; t += window) nominal.push_back(t);
  return std::make_unique<DriftEnvironment>(dims, gen, std::move(initial_states), RewardNoise::deterministic,
                                            lock.features, std::move(nominal), anchors);
}

// ------------------------------------------------------ tabular hard instance

int hard_instance_depth(int states, int actions) {
  if (actions < 2) return -1;
  long long total = 0, layer = 1;
  for (int depth = 1; depth <= 62; ++depth) {
    total += layer;
    if (total == states - 3) return depth;
    if (total > states - 3) return -1;
    layer *= actions;
  }
  return -1;
}

LeafTriple default_tilde_rule(const HardTabularInfo& info, int /*segment*/) {
  for (int h = info.depth; h <= info.wait_steps + info.depth - 1; ++h) {
    for (int leaf = 0; leaf < info.leaves; ++leaf) {
      for (int a = 0;; ++a) {
        const LeafTriple cand{h, leaf, a};
        if (!(cand == info.good)) return cand;
      }
    }
  }
  throw std::logic_error("default_tilde_rule: no admissible triple");
}

HardTabularInstance build_tabular_hard_instance(int states, int actions, int horizon, int changes, int episodes,
                                                const std::vector<int>& bits, TildeRule tilde) {
  if (states < 6 || actions < 2) throw std::invalid_argument("tabular hard instance: need S >= 6 and A >= 2");
  const int D = hard_instance_depth(states, actions);
  if (D < 1) throw std::invalid_argument("tabular hard instance: S - 3 must equal (A^D - 1)/(A - 1)");
  if (horizon < 3 * D) throw std::invalid_argument("tabular hard instance: need H >= 3D");
  if (static_cast<int>(bits.size()) != changes + 1) {
    throw std::invalid_argument("tabular hard instance: need one bit per segment");
  }
  if (!tilde) tilde = default_tilde_rule;

  HardTabularInstance out;
  HardTabularInfo& info = out.info;
  info.depth = D;
  info.leaves = 1;
  for (int i = 1; i < D; ++i) info.leaves *= actions;
  info.wait_steps = horizon / 3;
  info.good = {D, 0, 0};
  const int tree = states - 3;
  info.first_leaf = 1 + tree - info.leaves;
  info.good_state = states - 2;
  info.bad_state = states - 1;

  PSModel& ps = out.model;
  ps.dims = {states, actions, horizon, episodes, states * actions};
  ps.change_points = even_changepoints(episodes, changes);
  ps.initial_states = {info.waiting_state()};
  ps.reward_noise = RewardNoise::deterministic;
  ps.features = std::make_shared<const FeatureMap>(one_hot_feature_map(states, actions));

  const double denom = static_cast<double>(actions) * info.leaves * info.wait_steps - 1.0;
  for (int k = 0; k <= changes; ++k) {
    const int start = ps.segment_start(k);
    const int end = k < changes ? ps.change_points[static_cast<std::size_t>(k)] : episodes + 1;
    const double eps = 1.0 / std::sqrt(16.0 + 8.0 * static_cast<double>(end - start) / denom);
    info.eps.push_back(eps);
    const bool boosted = bits[static_cast<std::size_t>(k)] != 0;
    if (boosted) info.tilde = tilde(info, k);
    if (boosted && (info.tilde.leaf < 0 || info.tilde.leaf >= info.leaves || info.tilde.action < 0 ||
                    info.tilde.action >= actions || info.tilde.step < 0 || info.tilde.step >= horizon ||
                    info.tilde == info.good)) {
      throw std::invalid_argument("tabular hard instance: tilde rule returned an invalid triple");
    }

    SegmentModel m(states, actions, horizon);
    for (int h = 0; h < horizon; ++h) {
      for (int a = 0; a < actions; ++a) {
        // Waiting state (1-based step h + 1 compared against Hbar).
        const int next_w = (h + 1 < info.wait_steps && a != 0) ? info.waiting_state() : info.root();
        m.next_state_probs(h, info.waiting_state(), a)[static_cast<std::size_t>(next_w)] = 1.0;
        // Tree.
        for (int i = 0; i < tree; ++i) {
          const int s = 1 + i;
          auto row = m.next_state_probs(h, s, a);
          if (s < info.first_leaf) {
            row[static_cast<std::size_t>(1 + i * actions + 1 + a)] = 1.0;
            continue;
          }
          const LeafTriple here{h, s - info.first_leaf, a};
          double up = 0.0;
          if (here == info.good) up = eps;
          if (boosted && here == info.tilde) up = 2.0 * eps;
          row[static_cast<std::size_t>(info.good_state)] = 0.5 + up;
          row[static_cast<std::size_t>(info.bad_state)] = 0.5 - up;
        }
        m.next_state_probs(h, info.good_state, a)[static_cast<std::size_t>(info.good_state)] = 1.0;
        m.next_state_probs(h, info.bad_state, a)[static_cast<std::size_t>(info.bad_state)] = 1.0;
        m.set_reward(h, info.good_state, a, h >= info.wait_steps + D ? 1.0 : 0.0);
      }
    }
    ps.segments.push_back(std::make_shared<const SegmentModel>(std::move(m)));
  }
  ps.validate();
  return out;
}

// ------------------------------------------------------- linear hard instance

Eigen::VectorXd action_signs(int action, int dim) {
  Eigen::VectorXd v(dim - 1);
  for (int j = 0; j < dim - 1; ++j) v(j) = (action >> j) & 1 ? 1.0 : -1.0;
  return v;
}

HardLinearInstance build_linear_hard_instance(int dim, int horizon, int episodes, int changes,
                                              const std::vector<std::vector<std::vector<int>>>& signs) {
  if (dim < 4) throw std::invalid_argument("linear hard instance: need d >= 4");
  if (horizon < 4 || horizon % 2 != 0) throw std::invalid_argument("linear hard instance: need even H >= 4");
  if (dim - 1 > 20) throw std::invalid_argument("linear hard instance: 2^(d-1) actions too many to materialize");
  if (changes < 0) throw std::invalid_argument("linear hard instance: negative change count");
  const double need = static_cast<double>(dim - 1) * (dim - 1) * horizon * (changes + 1) / 8.0;
  if (static_cast<double>(episodes) < need) {
    throw std::invalid_argument("linear hard instance: need T >= (d-1)^2 H (N+1) / 8");
  }
  if (static_cast<int>(signs.size()) != changes + 1) {
    throw std::invalid_argument("linear hard instance: need sign vectors for every segment");
  }

  HardLinearInstance out;
  out.dim = dim;
  out.iota = 1.0 / horizon;
  out.delta = std::sqrt(static_cast<double>(changes + 1) / (static_cast<double>(horizon) * episodes)) /
              (4.0 * std::sqrt(2.0));
  const int S = horizon + 2;
  const int A = 1 << (dim - 1);
  const int df = dim + 2;
  const int absorb_bad = horizon;  // x_{H+1}
  const int absorb_good = horizon + 1;  // x_{H+2}
  const double root_d = std::sqrt(static_cast<double>(dim));

  FeatureMap::Table table = FeatureMap::Table::Zero(S * A, df);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const auto row = pair_index(s, a, A);
      if (s == absorb_bad) {
        table(row, dim) = 1.0;
      } else if (s == absorb_good) {
        table(row, dim + 1) = 1.0;
      } else {
        table(row, 0) = 1.0 / root_d;
        table.block(row, 1, 1, dim - 1) = action_signs(a, dim).transpose() / root_d;
      }
    }
  }
  auto features = std::make_shared<const FeatureMap>(S, A, std::move(table));

  PSModel& ps = out.model;
  ps.dims = {S, A, horizon, episodes, df};
  ps.change_points = even_changepoints(episodes, changes);
  ps.initial_states = {0};
  ps.reward_noise = RewardNoise::deterministic;
  ps.features = features;

  for (int k = 0; k <= changes; ++k) {
    const auto& seg_signs = signs[static_cast<std::size_t>(k)];
    std::vector<Eigen::VectorXd> mus;
    LinearParams p;
    p.theta = Eigen::MatrixXd::Zero(horizon, df);
    p.theta.col(dim + 1).setOnes();
    for (int h = 0; h < horizon; ++h) {
      Eigen::VectorXd mu_h = Eigen::VectorXd::Zero(dim - 1);
      if (h < horizon / 2) {
        if (static_cast<int>(seg_signs.size()) <= h || static_cast<int>(seg_signs[static_cast<std::size_t>(h)].size()) != dim - 1) {
          throw std::invalid_argument("linear hard instance: sign vector shape mismatch");
        }
        for (int j = 0; j < dim - 1; ++j) {
          const int sg = seg_signs[static_cast<std::size_t>(h)][static_cast<std::size_t>(j)];
          if (sg != 1 && sg != -1) throw std::invalid_argument("linear hard instance: signs must be +-1");
          mu_h(j) = out.delta * sg;
        }
      }
      mus.push_back(mu_h);
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(df, S);
      m(0, absorb_good) = root_d * out.iota;
      m.block(1, absorb_good, dim - 1, 1) = root_d * mu_h;
      m(0, h + 1) += root_d * (1.0 - out.iota);
      m.block(1, h + 1, dim - 1, 1) -= root_d * mu_h;
      m(dim, absorb_bad) = 1.0;
      m(dim + 1, absorb_good) = 1.0;
      p.mu.push_back(std::move(m));
    }
    out.mu.push_back(std::move(mus));
    ps.segments.push_back(std::make_shared<const SegmentModel>(SegmentModel::from_linear(features, std::move(p))));
  }
  ps.validate();
  return out;
}

}  // namespace darling
