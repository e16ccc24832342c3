#include "darling/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace darling {

void ScalarHistory::append(double x) {
  values_.push_back(x);
  prefix_.push_back(prefix_.back() + static_cast<long double>(x));
  prefix_sq_.push_back(prefix_sq_.back() + static_cast<long double>(x) * static_cast<long double>(x));
  screen_prefix_.push_back(static_cast<double>(prefix_.back()));
}

void ScalarHistory::clear() {
  values_.clear();
  prefix_.assign(1, 0.0L);
  prefix_sq_.assign(1, 0.0L);
  screen_prefix_.assign(1, 0.0);
}

double ScalarHistory::mean(std::size_t first, std::size_t last) const {
  if (first < 1 || last < first || last > values_.size()) {
    throw std::out_of_range("ScalarHistory::mean: invalid range");
  }
  return static_cast<double>(sum(first, last) / static_cast<long double>(last - first + 1));
}

void DetectorConfig::validate() const {
  if (!(delta_false_alarm > 0.0 && delta_false_alarm < 1.0)) {
    throw std::invalid_argument("DetectorConfig: delta_false_alarm must lie in (0,1)");
  }
  if (!(delta_detection > 0.0 && delta_detection < 1.0)) {
    throw std::invalid_argument("DetectorConfig: delta_detection must lie in (0,1)");
  }
  if (split_stride < 1) throw std::invalid_argument("DetectorConfig: split_stride must be >= 1");
  if (!(variance > 0.0)) throw std::invalid_argument("DetectorConfig: variance must be positive");
  if (!(clamp_eps > 0.0 && clamp_eps < 0.5)) throw std::invalid_argument("DetectorConfig: bad clamp_eps");
}

namespace {

double clamp_mean(double x, double eps) { return std::clamp(x, eps, 1.0 - eps); }

// x ln(x/y) + (1-x) ln((1-x)/(1-y)) for already clamped arguments.
double kl_clamped(double x, double y) {
  return x * std::log(x / y) + (1.0 - x) * std::log((1.0 - x) / (1.0 - y));
}

struct SplitMeans {
  double left;
  double right;
};

SplitMeans split_means(const ScalarHistory& h, std::size_t t, long double total) {
  const std::size_t n = h.size();
  const long double left_sum = h.sum(1, t);
  return {static_cast<double>(left_sum / static_cast<long double>(t)),
          static_cast<double>((total - left_sum) / static_cast<long double>(n - t))};
}

double statistic_from_means(SplitMeans m, double all, std::size_t t, std::size_t n, const DetectorConfig& cfg) {
  const double left_n = static_cast<double>(t);
  const double right_n = static_cast<double>(n - t);
  return left_n * divergence(m.left, all, cfg) + right_n * divergence(m.right, all, cfg);
}

template <typename Fn>
void for_each_split(std::size_t n, const DetectorConfig& cfg, Fn&& fn) {
  if (n < 2) return;
  if (cfg.geometric_splits) {
    // Ascending order over {n - 2^i} intersected with [1, n - 1].
    std::vector<std::size_t> grid = split_grid(n, cfg);
    for (std::size_t t : grid) {
      if (!fn(t)) return;
    }
    return;
  }
  const auto stride = static_cast<std::size_t>(cfg.split_stride);
  const std::size_t last = n - 1;
  const std::size_t first = 1 + (last - 1) % stride;
  for (std::size_t t = first; t <= last; t += stride) {
    if (!fn(t)) return;
  }
}

}  // namespace

double bernoulli_kl(double x, double y, double eps) {
  return kl_clamped(clamp_mean(x, eps), clamp_mean(y, eps));
}

double gaussian_kl(double x, double y, double variance) {
  if (!(variance > 0.0)) throw std::invalid_argument("gaussian_kl: variance must be positive");
  const double diff = x - y;
  return diff * diff / (2.0 * variance);
}

double divergence(double x, double y, const DetectorConfig& cfg) {
  return cfg.divergence == Divergence::bernoulli ? bernoulli_kl(x, y, cfg.clamp_eps)
                                                 : gaussian_kl(x, y, cfg.variance);
}

double split_statistic(const ScalarHistory& history, std::size_t t, const DetectorConfig& cfg) {
  const std::size_t n = history.size();
  if (t < 1 || t >= n) throw std::out_of_range("split_statistic: split must satisfy 1 <= t < n");
  const long double total = history.sum(1, n);
  const double all = static_cast<double>(total / static_cast<long double>(n));
  return statistic_from_means(split_means(history, t, total), all, t, n, cfg);
}

std::vector<std::size_t> split_grid(std::size_t n, const DetectorConfig& cfg) {
  std::vector<std::size_t> grid;
  if (n < 2) return grid;
  if (cfg.geometric_splits) {
    for (std::size_t back = 1; back < n; back *= 2) grid.push_back(n - back);
    std::reverse(grid.begin(), grid.end());
    return grid;
  }
  for_each_split(n, cfg, [&](std::size_t t) {
    grid.push_back(t);
    return true;
  });
  return grid;
}

SplitStatistic glr_statistic(const ScalarHistory& history, const DetectorConfig& cfg) {
  const std::size_t n = history.size();
  SplitStatistic best;
  if (n < 2) return best;
  const long double total = history.sum(1, n);
  const double all = static_cast<double>(total / static_cast<long double>(n));
  best.value = -std::numeric_limits<double>::infinity();
  for_each_split(n, cfg, [&](std::size_t t) {
    const double v = statistic_from_means(split_means(history, t, total), all, t, n, cfg);
    if (v > best.value) {
      best.value = v;
      best.split = t;
    }
    return true;
  });
  return best;
}

double threshold_anytime(double n, double delta_false_alarm) {
  return 6.0 * std::log(1.0 + std::log(n)) + 2.5 * std::log(4.0 * std::pow(n, 1.5) / delta_false_alarm) + 11.0;
}

double threshold_experimental(double n, double delta_false_alarm) {
  return std::log(std::pow(n, 1.5) / delta_false_alarm);
}

double threshold(double n, const DetectorConfig& cfg) {
  return cfg.threshold_rule == ThresholdRule::anytime ? threshold_anytime(n, cfg.delta_false_alarm)
                                                      : threshold_experimental(n, cfg.delta_false_alarm);
}

DetectionOutcome glr_test(const ScalarHistory& history, const DetectorConfig& cfg) {
  const std::size_t n = history.size();
  DetectionOutcome out;
  out.threshold_used = threshold(static_cast<double>(std::max<std::size_t>(n, 1)), cfg);
  if (n < 2) return out;

  const long double total = history.sum(1, n);
  const double all = static_cast<double>(total / static_cast<long double>(n));
  const bool bernoulli = cfg.divergence == Divergence::bernoulli;
  // chi^2(x, y) = (x - y)^2 / (y (1 - y)) upper-bounds kl(x, y); clamping is
  // 1-Lipschitz, so with (n - t)(x2 - y) = -t (x1 - y) the split bound is
  // n (S_t - t y)^2 / (t (n - t) y_c (1 - y_c)).
  const double all_c = clamp_mean(all, cfg.clamp_eps);
  const double thr = out.threshold_used;
  const double nd = static_cast<double>(n);
  const double lhs_scale = nd / (all_c * (1.0 - all_c)) * (1.0 + 1e-9);
  const double rhs_scale = thr - 1e-9;
  const double* prefix = history.screen_prefix().data();
  double best = -std::numeric_limits<double>::infinity();

  for_each_split(n, cfg, [&](std::size_t t) {
    if (bernoulli) {
      const double td = static_cast<double>(t);
      const double dev = prefix[t] - td * all;
      if (dev * dev * lhs_scale < rhs_scale * td * (nd - td)) return true;
    }
    const SplitMeans m = split_means(history, t, total);
    const double v = statistic_from_means(m, all, t, n, cfg);
    if (v > best) {
      best = v;
      out.best_split = t;
    }
    if (v >= thr) {
      out.triggered = true;
      return false;
    }
    return true;
  });
  out.best_statistic = out.best_split ? best : 0.0;
  return out;
}

DetectionOutcome gsr_test(const ScalarHistory& history, const DetectorConfig& cfg) {
  const std::size_t n = history.size();
  DetectionOutcome out;
  const double nd = static_cast<double>(std::max<std::size_t>(n, 1));
  out.threshold_used = threshold(nd, cfg) + std::log(nd);
  if (n < 2) return out;

  const long double total = history.sum(1, n);
  const double all = static_cast<double>(total / static_cast<long double>(n));
  // Running log-sum-exp; the normalized form is seeded with the t = n term (statistic 0).
  double max_term = cfg.gsr_normalized ? 0.0 : -std::numeric_limits<double>::infinity();
  double scaled_sum = cfg.gsr_normalized ? 1.0 : 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for_each_split(n, cfg, [&](std::size_t t) {
    const double v = statistic_from_means(split_means(history, t, total), all, t, n, cfg);
    if (v > best) {
      best = v;
      out.best_split = t;
    }
    if (v > max_term) {
      scaled_sum = scaled_sum * std::exp(max_term - v) + 1.0;
      max_term = v;
    } else {
      scaled_sum += std::exp(v - max_term);
    }
    return true;
  });
  out.best_statistic = max_term + std::log(scaled_sum) - (cfg.gsr_normalized ? std::log(nd) : 0.0);
  out.triggered = out.best_statistic >= out.threshold_used;
  return out;
}

}  // namespace darling
