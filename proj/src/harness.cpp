#include "darling/harness.hpp"

#include "darling/baselines.hpp"
#include "darling/probes.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace darling {

namespace fs = std::filesystem;
using json = nlohmann::json;

// --------------------------------------------------------------------- config

std::string ProtocolSpec::tag() const {
  if (kind == "ps-geometric") return format_double(xi);
  if (kind == "ps-explicit") return "explicit";
  if (kind == "ps-even") return "even:" + std::to_string(changes);
  return "drift:" + std::to_string(window);
}

DetectorConfig DetectorProfile::resolve(int episodes) const {
  DetectorConfig c;
  c.divergence = divergence;
  c.variance = variance;
  c.split_stride = split_stride;
  c.geometric_splits = geometric_splits;
  const double T = episodes;
  if (profile == "experimental") {
    c.threshold_rule = ThresholdRule::experimental;
    c.delta_false_alarm = 1.0 / std::sqrt(T);
  } else {
    c.threshold_rule = ThresholdRule::anytime;
    c.delta_false_alarm = std::pow(T, -gamma);
  }
  if (delta > 0.0) c.delta_false_alarm = delta;
  c.delta_detection = c.delta_false_alarm;
  c.validate();
  return c;
}

std::vector<AlgorithmSpec> default_algorithms() {
  std::vector<AlgorithmSpec> out(4);
  out[0].kind = "darling";
  out[1].kind = "bare";
  out[2].kind = "periodic";
  out[3].kind = "oracle";
  return out;
}

std::string algorithm_label(const AlgorithmSpec& algo) {
  if (!algo.label.empty()) return algo.label;
  if (algo.kind == "darling") return "DARLING";
  if (algo.kind == "bare") return "Bare";
  if (algo.kind == "periodic") return "Periodic";
  return "OracleRestart";
}

void ExperimentConfig::validate() const {
  if (episodes < 3) throw ConfigError("episodes must be >= 3");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (algorithms.empty()) throw ConfigError("algorithms must not be empty");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (environment.kind != "tabular_lock" && environment.kind != "chain_lock") {
    throw ConfigError("environment.kind must be tabular_lock or chain_lock");
  }
  try {
    if (environment.kind == "tabular_lock") {
      environment.tabular.validate();
    } else {
      environment.chain.validate();
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("environment.params: ") + e.what());
  }
  const auto& p = protocol;
  if (p.kind == "ps-geometric") {
    if (!(p.xi >= 0.0)) throw ConfigError("protocol.xi must be >= 0");
  } else if (p.kind == "ps-explicit") {
    int prev = 1;
    for (int nu : p.change_points) {
      if (nu <= prev || nu > episodes) throw ConfigError("protocol.change_points must increase within [2, T]");
      prev = nu;
    }
  } else if (p.kind == "ps-even") {
    if (p.changes < 0 || p.changes >= episodes) throw ConfigError("protocol.changes must lie in [0, T)");
  } else if (p.kind == "drift") {
    if (p.window < 1) throw ConfigError("protocol.window must be >= 1");
  } else {
    throw ConfigError("protocol.kind must be ps-geometric, ps-explicit, ps-even or drift");
  }
  if (detector.profile != "experimental" && detector.profile != "theory") {
    throw ConfigError("detector.profile must be experimental or theory");
  }
  try {
    (void)detector.resolve(episodes);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("detector: ") + e.what());
  }
  std::vector<std::string> labels;
  for (const auto& a : algorithms) {
    if (a.kind != "darling" && a.kind != "bare" && a.kind != "periodic" && a.kind != "oracle") {
      throw ConfigError("algorithm kind must be darling, bare, periodic or oracle (got '" + a.kind + "')");
    }
    if (a.learner != "auto" && a.learner != "optimistic_q" && a.learner != "lsvi") {
      throw ConfigError("algorithm learner must be auto, optimistic_q or lsvi");
    }
    if (a.window < 0 || !(a.window_scale > 0.0)) throw ConfigError("periodic window parameters must be positive");
    if (a.kind == "oracle" && protocol.kind == "drift" && environment.kind == "tabular_lock") {
      throw ConfigError("oracle restarts need abrupt change-points");
    }
    const std::string l = algorithm_label(a);
    if (l.find(',') != std::string::npos) throw ConfigError("algorithm labels may not contain commas");
    if (std::find(labels.begin(), labels.end(), l) != labels.end()) {
      throw ConfigError("duplicate algorithm label '" + l + "'");
    }
    labels.push_back(l);
  }
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; });
    if (!known) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

void read_int(const json& j, const char* key, int& out, const std::string& where) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
  out = v.get<int>();
}

void read_unsigned(const json& j, const char* key, unsigned& out, const std::string& where) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(where + "." + key + ": expected a nonnegative integer");
  }
  out = v.get<unsigned>();
}

void read_double(const json& j, const char* key, double& out, const std::string& where) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
  out = v.get<double>();
}

void read_bool(const json& j, const char* key, bool& out, const std::string& where) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_boolean()) throw ConfigError(where + "." + key + ": expected a boolean");
  out = v.get<bool>();
}

void read_string(const json& j, const char* key, std::string& out, const std::string& where) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_string()) throw ConfigError(where + "." + key + ": expected a string");
  out = v.get<std::string>();
}

void parse_environment(const json& j, EnvironmentSpec& env) {
  check_keys(j, {"kind", "params"}, "environment");
  read_string(j, "kind", env.kind, "environment");
  if (!j.contains("params")) return;
  const json& p = j.at("params");
  const std::string where = "environment.params";
  if (env.kind == "tabular_lock") {
    check_keys(p, {"horizon", "states", "actions", "success", "routing", "endpoint_rewards", "sink_reward",
                   "combination_seed"},
               where);
    auto& t = env.tabular;
    read_int(p, "horizon", t.horizon, where);
    t.states = 2 * t.horizon;
    read_int(p, "states", t.states, where);
    read_int(p, "actions", t.actions, where);
    read_double(p, "success", t.success, where);
    read_double(p, "routing", t.routing, where);
    read_double(p, "sink_reward", t.sink_reward, where);
    read_unsigned(p, "combination_seed", t.combination_seed, where);
    if (p.contains("endpoint_rewards")) {
      const auto& e = p.at("endpoint_rewards");
      if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
        throw ConfigError(where + ".endpoint_rewards: expected two numbers");
      }
      t.endpoint_rewards = {e[0].get<double>(), e[1].get<double>()};
    }
  } else if (env.kind == "chain_lock") {
    check_keys(p, {"states", "actions", "horizon", "dim", "chains", "keep", "dense_lo", "dense_hi", "split", "seed"},
               where);
    auto& c = env.chain;
    read_int(p, "states", c.states, where);
    read_int(p, "actions", c.actions, where);
    read_int(p, "horizon", c.horizon, where);
    read_int(p, "dim", c.dim, where);
    read_int(p, "chains", c.chains, where);
    read_double(p, "keep", c.keep, where);
    read_double(p, "dense_lo", c.dense_lo, where);
    read_double(p, "dense_hi", c.dense_hi, where);
    read_double(p, "split", c.split, where);
    read_unsigned(p, "seed", c.seed, where);
  } else {
    throw ConfigError("environment.kind must be tabular_lock or chain_lock");
  }
}

void parse_protocol(const json& j, ProtocolSpec& p) {
  check_keys(j, {"kind", "xi", "change_points", "changes", "window"}, "protocol");
  read_string(j, "kind", p.kind, "protocol");
  read_double(j, "xi", p.xi, "protocol");
  read_int(j, "changes", p.changes, "protocol");
  read_int(j, "window", p.window, "protocol");
  if (j.contains("change_points")) {
    const auto& v = j.at("change_points");
    if (!v.is_array()) throw ConfigError("protocol.change_points: expected an array");
    p.change_points.clear();
    for (const auto& x : v) {
      if (!x.is_number_integer()) throw ConfigError("protocol.change_points: expected integers");
      p.change_points.push_back(x.get<int>());
    }
  }
}

void parse_detector(const json& j, DetectorProfile& d) {
  check_keys(j, {"profile", "gamma", "delta", "divergence", "variance", "test", "split_stride", "geometric_splits"},
             "detector");
  read_string(j, "profile", d.profile, "detector");
  read_double(j, "gamma", d.gamma, "detector");
  read_double(j, "delta", d.delta, "detector");
  read_double(j, "variance", d.variance, "detector");
  read_int(j, "split_stride", d.split_stride, "detector");
  read_bool(j, "geometric_splits", d.geometric_splits, "detector");
  std::string div = d.divergence == Divergence::bernoulli ? "bernoulli" : "gaussian";
  read_string(j, "divergence", div, "detector");
  if (div == "bernoulli") {
    d.divergence = Divergence::bernoulli;
  } else if (div == "gaussian") {
    d.divergence = Divergence::gaussian;
  } else {
    throw ConfigError("detector.divergence must be bernoulli or gaussian");
  }
  std::string test = d.test == TestKind::glr ? "glr" : "gsr";
  read_string(j, "test", test, "detector");
  if (test == "glr") {
    d.test = TestKind::glr;
  } else if (test == "gsr") {
    d.test = TestKind::gsr;
  } else {
    throw ConfigError("detector.test must be glr or gsr");
  }
}

AlgorithmSpec parse_algorithm(const json& j, std::size_t index) {
  const std::string where = "algorithms[" + std::to_string(index) + "]";
  AlgorithmSpec a;
  if (j.is_string()) {
    a.kind = j.get<std::string>();
    return a;
  }
  check_keys(j, {"kind", "label", "learner", "learner_params", "window", "window_scale"}, where);
  read_string(j, "kind", a.kind, where);
  read_string(j, "label", a.label, where);
  read_string(j, "learner", a.learner, where);
  read_int(j, "window", a.window, where);
  read_double(j, "window_scale", a.window_scale, where);
  if (j.contains("learner_params")) {
    const json& p = j.at("learner_params");
    const std::string pw = where + ".learner_params";
    check_keys(p, {"bonus_scale", "delta", "lambda", "beta"}, pw);
    read_double(p, "bonus_scale", a.optimistic_q.bonus_scale, pw);
    read_double(p, "delta", a.optimistic_q.delta, pw);
    a.lsvi.delta = a.optimistic_q.delta;
    read_double(p, "lambda", a.lsvi.lambda, pw);
    read_double(p, "beta", a.lsvi.beta, pw);
  }
  return a;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  check_keys(j,
             {"environment", "protocol", "episodes", "seeds", "algorithms", "detector", "output_dir", "regret_mode",
              "threads", "timing"},
             "config");
  ExperimentConfig cfg;
  if (j.contains("environment")) parse_environment(j.at("environment"), cfg.environment);
  if (j.contains("protocol")) parse_protocol(j.at("protocol"), cfg.protocol);
  if (j.contains("detector")) parse_detector(j.at("detector"), cfg.detector);
  read_int(j, "episodes", cfg.episodes, "config");
  read_int(j, "threads", cfg.threads, "config");
  read_bool(j, "timing", cfg.timing, "config");
  read_string(j, "output_dir", cfg.output_dir, "config");
  std::string mode = "expected";
  read_string(j, "regret_mode", mode, "config");
  if (mode == "expected") {
    cfg.regret_mode = RegretMode::expected;
  } else if (mode == "realized") {
    cfg.regret_mode = RegretMode::realized;
  } else {
    throw ConfigError("regret_mode must be expected or realized");
  }
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    if (!s.is_array()) throw ConfigError("seeds: expected an array");
    cfg.seeds.clear();
    for (const auto& x : s) {
      if (!x.is_number_unsigned()) throw ConfigError("seeds: expected nonnegative integers");
      cfg.seeds.push_back(x.get<std::uint64_t>());
    }
  }
  if (j.contains("algorithms")) {
    const auto& a = j.at("algorithms");
    if (!a.is_array()) throw ConfigError("algorithms: expected an array");
    for (std::size_t i = 0; i < a.size(); ++i) cfg.algorithms.push_back(parse_algorithm(a[i], i));
  } else {
    cfg.algorithms = default_algorithms();
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ------------------------------------------------------------------- building

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(const std::string& key, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : key) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h ^ splitmix64(seed));
}

namespace {

std::vector<int> make_change_points(const ProtocolSpec& p, int T, Rng& rng) {
  if (p.kind == "ps-geometric") return sample_geometric_changepoints(T, p.xi, rng);
  if (p.kind == "ps-explicit") return p.change_points;
  return even_changepoints(T, p.changes);
}

// Stationary view of episode 1 for probe selection.
PSModel probe_model(const Environment& env) {
  PSModel ps;
  ps.dims = env.dims();
  ps.segments = {env.model_at(1)};
  ps.initial_states.resize(static_cast<std::size_t>(ps.dims.episodes));
  for (int t = 1; t <= ps.dims.episodes; ++t) ps.initial_states[static_cast<std::size_t>(t - 1)] = env.initial_state(t);
  ps.reward_noise = env.reward_noise();
  ps.features = env.features();
  return ps;
}

}  // namespace

BuiltEnvironment build_environment(const ExperimentConfig& cfg, std::uint64_t seed) {
  BuiltEnvironment b;
  const int T = cfg.episodes;
  const auto& p = cfg.protocol;
  b.name = cfg.environment.kind;
  b.protocol = p.kind;
  b.tag = p.tag();
  Rng rng(derive_seed(b.name + "|" + b.protocol + "|" + b.tag, seed));
  if (b.name == "tabular_lock") {
    const auto lock = build_bidirectional_lock(cfg.environment.tabular);
    if (p.kind == "drift") {
      b.env = drift_tabular_environment(lock, T);
    } else {
      b.env = std::make_unique<PiecewiseEnvironment>(ps_tabular_lock(lock, T, make_change_points(p, T, rng)));
    }
  } else {
    const auto lock = build_chain_lock(cfg.environment.chain);
    if (p.kind == "drift") {
      b.env = drift_chain_environment(lock, T, p.window, random_initial_states(lock.spec.states, T, rng));
      b.cadence = OracleCadence::interpolate;
    } else {
      auto cps = make_change_points(p, T, rng);
      auto init = random_initial_states(lock.spec.states, T, rng);
      b.env = std::make_unique<PiecewiseEnvironment>(ps_chain_lock(lock, T, std::move(cps), std::move(init)));
    }
  }
  if (p.kind == "ps-geometric") {
    b.expected_changes = (T - 1) * std::pow(static_cast<double>(T), -p.xi);
  } else {
    b.expected_changes = static_cast<double>(b.env->change_points().size());
  }
  return b;
}

std::unique_ptr<Agent> build_agent(const AlgorithmSpec& algo, const ExperimentConfig& cfg, const BuiltEnvironment& env,
                                   std::uint64_t seed) {
  const Environment& e = *env.env;
  const auto& dims = e.dims();
  const int T = cfg.episodes;
  std::string learner_kind = algo.learner;
  if (learner_kind == "auto") learner_kind = env.name == "tabular_lock" ? "optimistic_q" : "lsvi";
  std::unique_ptr<Learner> learner;
  if (learner_kind == "optimistic_q") {
    learner = std::make_unique<TabularOptimisticQ>(dims.states, dims.actions, dims.horizon, T, algo.optimistic_q);
  } else {
    learner = std::make_unique<LsviUcb>(e.features(), dims.horizon, T, algo.lsvi);
  }

  if (algo.kind == "bare") return std::make_unique<BareAgent>(std::move(learner));
  if (algo.kind == "periodic") {
    const int w = algo.window > 0 ? algo.window : budget_restart_window(T, env.expected_changes, algo.window_scale);
    return std::make_unique<PeriodicRestartAgent>(std::move(learner), w);
  }
  if (algo.kind == "oracle") return std::make_unique<OracleRestartAgent>(std::move(learner), e.change_points());

  const auto features = e.features();
  DarlingConfig dc;
  dc.detector = cfg.detector.resolve(T);
  dc.test = cfg.detector.test;
  dc.alpha_dim = features->dim();
  ProbeCollection probes;
  if (features->is_one_hot()) {
    dc.streams = StreamMode::tabular;
    probes = tabular_probes(dims.states, dims.actions, dims.horizon);
  } else {
    dc.streams = StreamMode::linear;
    probes = greedy_probes(probe_model(e));
  }
  return std::make_unique<Darling>(std::move(learner), std::move(probes), features, T, dc, splitmix64(seed));
}

// -------------------------------------------------------------------- running

RunResult run_episodes(const Environment& env, Agent& agent, std::uint64_t seed, const RunOptions& opt,
                       OracleCadence cadence, bool keep_events) {
  using clock = std::chrono::steady_clock;
  RegretOracle oracle(env, cadence);
  Rng rng(seed);
  const int T = env.dims().episodes;
  RunResult res;
  res.trace.reserve(static_cast<std::size_t>(T));
  for (int t = 1; t <= T; ++t) {
    const auto model = env.model_at(t);
    const int s1 = env.initial_state(t);

    const auto t0 = clock::now();
    agent.begin_episode(t);
    const auto t1 = clock::now();
    StochasticPolicy behavior;
    if (opt.regret == RegretMode::expected) behavior = agent.behavior_policy();
    const auto t2 = clock::now();
    const EpisodeRecord rec = simulate_episode(*model, env.reward_noise(), s1, agent, rng);
    EpisodeEvents ev = agent.end_episode(t);
    const auto t3 = clock::now();

    EpisodeLog log;
    log.t = t;
    log.piece = env.piece_at(t);
    log.probe = ev.probe;
    log.restart = ev.restart;
    log.restart_count = ev.restart_count;
    log.triggers = static_cast<int>(ev.triggers.size());
    log.reward = rec.total_reward;
    log.oracle_value = oracle.optimal_initial_value(t);
    log.policy_value = opt.regret == RegretMode::expected
                           ? evaluate_policy(*model, behavior)[static_cast<std::size_t>(s1)]
                           : rec.total_reward;
    log.regret = log.oracle_value - log.policy_value;
    if (opt.timing) {
      log.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>((t1 - t0) + (t3 - t2)).count();
    }
    res.trace.push_back(log);
    if (keep_events) res.events.push_back(std::move(ev));
  }
  res.oracle_solves = oracle.solves();
  res.oracle_exact = oracle.exact();
  return res;
}

// ------------------------------------------------------------------------ CSV

std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, r.ptr);
}

namespace {

constexpr const char* kColumns[] = {"run_id",        "seed",       "algorithm",    "env",
                                    "protocol",      "xi_or_drift", "t",           "episode_reward",
                                    "cum_reward",    "cum_regret", "probe_flag",   "restart_flag",
                                    "restart_count", "detector_triggers_this_episode", "wall_ns"};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

template <typename T>
T parse_number(const std::string& s, const char* column, std::size_t line) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw std::runtime_error("line " + std::to_string(line) + ": bad value '" + s + "' in column " + column);
  }
  return v;
}

}  // namespace

std::string results_header() {
  std::string h;
  for (const char* c : kColumns) {
    if (!h.empty()) h += ',';
    h += c;
  }
  return h;
}

void write_row(std::ostream& out, const ResultRow& r) {
  out << r.run_id << ',' << r.seed << ',' << r.algorithm << ',' << r.env << ',' << r.protocol << ','
      << r.xi_or_drift << ',' << r.t << ',' << format_double(r.episode_reward) << ',' << format_double(r.cum_reward)
      << ',' << format_double(r.cum_regret) << ',' << (r.probe ? 1 : 0) << ',' << (r.restart ? 1 : 0) << ','
      << r.restart_count << ',' << r.triggers << ',' << r.wall_ns << '\n';
}

std::vector<ResultRow> rows_from_trace(const RunTrace& trace, const std::string& run_id, std::uint64_t seed,
                                       const std::string& algorithm, const std::string& env,
                                       const std::string& protocol, const std::string& tag) {
  std::vector<ResultRow> rows;
  rows.reserve(trace.size());
  const auto regret = dynamic_regret(trace);
  double cum = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& e = trace[i];
    cum += e.reward;
    ResultRow r;
    r.run_id = run_id;
    r.seed = seed;
    r.algorithm = algorithm;
    r.env = env;
    r.protocol = protocol;
    r.xi_or_drift = tag;
    r.t = e.t;
    r.episode_reward = e.reward;
    r.cum_reward = cum;
    r.cum_regret = regret[i];
    r.probe = e.probe;
    r.restart = e.restart;
    r.restart_count = e.restart_count;
    r.triggers = e.triggers;
    r.wall_ns = e.wall_ns;
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ResultRow> read_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open results file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file, missing header");
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* c : kColumns) {
    if (!col.count(c)) throw std::runtime_error(path + ": missing column " + std::string(c));
  }
  std::vector<ResultRow> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw std::runtime_error(path + ": line " + std::to_string(n) + " has " + std::to_string(f.size()) +
                               " fields, expected " + std::to_string(header.size()));
    }
    auto get = [&](const char* c) -> const std::string& { return f[col.at(c)]; };
    ResultRow r;
    r.run_id = get("run_id");
    r.seed = parse_number<std::uint64_t>(get("seed"), "seed", n);
    r.algorithm = get("algorithm");
    r.env = get("env");
    r.protocol = get("protocol");
    r.xi_or_drift = get("xi_or_drift");
    r.t = parse_number<int>(get("t"), "t", n);
    r.episode_reward = parse_number<double>(get("episode_reward"), "episode_reward", n);
    r.cum_reward = parse_number<double>(get("cum_reward"), "cum_reward", n);
    r.cum_regret = parse_number<double>(get("cum_regret"), "cum_regret", n);
    r.probe = parse_number<int>(get("probe_flag"), "probe_flag", n) != 0;
    r.restart = parse_number<int>(get("restart_flag"), "restart_flag", n) != 0;
    r.restart_count = parse_number<int>(get("restart_count"), "restart_count", n);
    r.triggers = parse_number<int>(get("detector_triggers_this_episode"), "detector_triggers_this_episode", n);
    r.wall_ns = parse_number<std::int64_t>(get("wall_ns"), "wall_ns", n);
    rows.push_back(std::move(r));
  }
  return rows;
}

// -------------------------------------------------------------------- summary

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string sanitize(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

std::vector<SummaryRow> summarize_rows(const std::vector<ResultRow>& rows) {
  struct Run {
    double final_reward = 0.0, final_regret = 0.0;
    int last_t = -1;
    int restarts = 0;
    double wall_sum = 0.0;
    std::size_t n = 0;
  };
  struct Cell {
    SummaryRow head;
    std::vector<std::string> order;
    std::map<std::string, Run> runs;
  };
  std::vector<Cell> cells;
  std::map<std::string, std::size_t> index;
  for (const auto& r : rows) {
    const std::string key = r.env + '\x1f' + r.protocol + '\x1f' + r.xi_or_drift + '\x1f' + r.algorithm;
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, cells.size()).first;
      Cell c;
      c.head.env = r.env;
      c.head.protocol = r.protocol;
      c.head.xi_or_drift = r.xi_or_drift;
      c.head.algorithm = r.algorithm;
      cells.push_back(std::move(c));
    }
    Cell& c = cells[it->second];
    const std::string run_key = r.run_id + '\x1f' + std::to_string(r.seed);
    auto [ri, fresh] = c.runs.try_emplace(run_key);
    if (fresh) c.order.push_back(run_key);
    Run& run = ri->second;
    if (r.t >= run.last_t) {
      run.last_t = r.t;
      run.final_reward = r.cum_reward;
      run.final_regret = r.cum_regret;
      run.restarts = r.restart_count;
    }
    run.wall_sum += static_cast<double>(r.wall_ns);
    ++run.n;
  }
  std::vector<SummaryRow> out;
  for (auto& c : cells) {
    std::vector<double> reward, regret, wall, restarts;
    for (const auto& k : c.order) {
      const Run& run = c.runs.at(k);
      reward.push_back(run.final_reward);
      regret.push_back(run.final_regret);
      wall.push_back(run.wall_sum / static_cast<double>(run.n) / 1e6);
      restarts.push_back(run.restarts);
    }
    SummaryRow s = c.head;
    s.n_seeds = static_cast<int>(c.order.size());
    s.final_cum_reward_mean = mean_of(reward);
    s.final_cum_reward_std = sample_std(reward);
    s.final_cum_regret_mean = mean_of(regret);
    s.final_cum_regret_std = sample_std(regret);
    s.wall_ms_per_episode_mean = mean_of(wall);
    s.restarts_mean = mean_of(restarts);
    s.final_cum_reward_min = *std::min_element(reward.begin(), reward.end());
    s.final_cum_reward_max = *std::max_element(reward.begin(), reward.end());
    out.push_back(std::move(s));
  }
  return out;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows, const std::string& regret_mode,
                       const std::vector<CellOutcome>& failures, std::optional<bool> oracle_exact) {
  out << "env,protocol,xi_or_drift,algorithm,n_seeds,final_cum_reward_mean,final_cum_reward_std,"
         "final_cum_regret_mean,final_cum_regret_std,wall_ms_per_episode_mean,restarts_mean,"
         "final_cum_reward_min,final_cum_reward_max,regret_mode,oracle_exact,status\n";
  const std::string exact = oracle_exact ? (*oracle_exact ? "1" : "0") : "";
  for (const auto& r : rows) {
    out << r.env << ',' << r.protocol << ',' << r.xi_or_drift << ',' << r.algorithm << ',' << r.n_seeds << ','
        << format_double(r.final_cum_reward_mean) << ',' << format_double(r.final_cum_reward_std) << ','
        << format_double(r.final_cum_regret_mean) << ',' << format_double(r.final_cum_regret_std) << ','
        << format_double(r.wall_ms_per_episode_mean) << ',' << format_double(r.restarts_mean) << ','
        << format_double(r.final_cum_reward_min) << ',' << format_double(r.final_cum_reward_max) << ','
        << regret_mode << ',' << exact << ',' << r.status << '\n';
  }
  for (const auto& f : failures) {
    out << f.env << ',' << f.protocol << ',' << f.tag << ',' << f.algorithm << ",0,,,,,,,,," << regret_mode << ','
        << exact << ",failed seed " << f.seed << ": " << sanitize(f.error) << '\n';
  }
}

void write_summary_table(std::ostream& out, const std::vector<SummaryRow>& rows) {
  char line[512];
  std::snprintf(line, sizeof line, "%-14s %-13s %-10s %-16s %5s %24s %24s %10s %9s\n", "env", "protocol", "xi/drift",
                "algorithm", "seeds", "final cum reward", "final cum regret", "ms/ep", "restarts");
  out << line;
  for (const auto& r : rows) {
    char rew[64], reg[64];
    std::snprintf(rew, sizeof rew, "%.2f +- %.2f", r.final_cum_reward_mean, r.final_cum_reward_std);
    std::snprintf(reg, sizeof reg, "%.2f +- %.2f", r.final_cum_regret_mean, r.final_cum_regret_std);
    std::snprintf(line, sizeof line, "%-14s %-13s %-10s %-16s %5d %24s %24s %10.4f %9.1f\n", r.env.c_str(),
                  r.protocol.c_str(), r.xi_or_drift.c_str(), r.algorithm.c_str(), r.n_seeds, rew, reg,
                  r.wall_ms_per_episode_mean, r.restarts_mean);
    out << line;
  }
}

// ---------------------------------------------------------------------- matrix

int expand_and_run(const ExperimentConfig& cfg, std::ostream& log, std::vector<CellOutcome>* outcomes) {
  cfg.validate();
  const fs::path out_dir(cfg.output_dir);
  const fs::path cell_dir = out_dir / "cells";
  fs::create_directories(cell_dir);

  struct Task {
    std::size_t algo;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t a = 0; a < cfg.algorithms.size(); ++a) {
    for (auto s : cfg.seeds) tasks.push_back({a, s});
  }
  std::vector<CellOutcome> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  const RunOptions opt{cfg.regret_mode, cfg.timing};

  auto worker = [&]() {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Task& task = tasks[i];
      const AlgorithmSpec& algo = cfg.algorithms[task.algo];
      CellOutcome& oc = results[i];
      oc.algorithm = algorithm_label(algo);
      oc.env = cfg.environment.kind;
      oc.protocol = cfg.protocol.kind;
      oc.tag = cfg.protocol.tag();
      oc.seed = task.seed;
      oc.run_id = oc.env + "|" + oc.protocol + "|" + oc.tag + "|" + oc.algorithm;
      const fs::path file = cell_dir / ("cell_" + std::to_string(i) + ".csv");
      try {
        const std::uint64_t cell_seed = derive_seed(oc.run_id, task.seed);
        BuiltEnvironment env = build_environment(cfg, task.seed);
        auto agent = build_agent(algo, cfg, env, splitmix64(cell_seed ^ 0x5bd1e995ULL));
        const RunResult res = run_episodes(*env.env, *agent, cell_seed, opt, env.cadence);
        const auto rows = rows_from_trace(res.trace, oc.run_id, task.seed, oc.algorithm, env.name, env.protocol,
                                          env.tag);
        std::ofstream f(file, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + file.string());
        for (const auto& r : rows) write_row(f, r);
        f.close();
        if (!f) throw std::runtime_error("write failed for " + file.string());
        oc.ok = true;
        oc.oracle_exact = res.oracle_exact;
        oc.oracle_solves = res.oracle_solves;
        std::lock_guard lock(log_mutex);
        log << "cell " << oc.run_id << " seed " << task.seed << ": final cum_reward "
            << format_double(rows.empty() ? 0.0 : rows.back().cum_reward) << ", restarts "
            << (rows.empty() ? 0 : rows.back().restart_count) << '\n';
      } catch (const std::exception& e) {
        oc.ok = false;
        oc.error = e.what();
        std::error_code ec;
        fs::remove(file, ec);
        std::lock_guard lock(log_mutex);
        log << "cell " << oc.run_id << " seed " << task.seed << " FAILED: " << e.what() << '\n';
      }
    }
  };
  const int nthreads = std::max(1, std::min<int>(cfg.threads, static_cast<int>(tasks.size())));
  std::vector<std::thread> pool;
  for (int i = 1; i < nthreads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  // Merge in matrix order.
  const fs::path results_path = out_dir / "results.csv";
  {
    std::ofstream merged(results_path, std::ios::binary);
    if (!merged) throw std::runtime_error("cannot write " + results_path.string());
    merged << results_header() << '\n';
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (!results[i].ok) continue;
      std::ifstream part(cell_dir / ("cell_" + std::to_string(i) + ".csv"), std::ios::binary);
      merged << part.rdbuf();
    }
  }
  fs::remove_all(cell_dir);

  std::vector<CellOutcome> failures;
  bool exact = true;
  for (const auto& r : results) {
    if (!r.ok) failures.push_back(r);
    exact = exact && r.oracle_exact;
  }
  const auto summary = summarize_rows(read_results(results_path.string()));
  const std::string mode = cfg.regret_mode == RegretMode::expected ? "expected" : "realized";
  {
    std::ofstream s(out_dir / "summary.csv", std::ios::binary);
    write_summary_csv(s, summary, mode, failures, exact);
  }
  {
    std::ofstream s(out_dir / "summary.txt", std::ios::binary);
    write_summary_table(s, summary);
    for (const auto& f : failures) s << "FAILED " << f.run_id << " seed " << f.seed << ": " << f.error << '\n';
  }
  if (outcomes) *outcomes = results;
  return failures.empty() ? 0 : 3;
}

}  // namespace darling
