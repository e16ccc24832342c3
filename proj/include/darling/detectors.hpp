#pragma once

// Univariate sequential mean-shift detection over scalar histories: GLR and
// generalized Shiryaev-Roberts tests with Bernoulli or Gaussian divergences.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace darling {

/// Observation stream with prefix sums; positions are 1-based in queries.
class ScalarHistory {
 public:
  ScalarHistory() = default;

  void append(double x);
  void clear();

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  std::span<const double> values() const { return values_; }

  /// Sum of X_first .. X_last (1-based, inclusive).
  long double sum(std::size_t first, std::size_t last) const { return prefix_[last] - prefix_[first - 1]; }
  long double sum_squares(std::size_t first, std::size_t last) const {
    return prefix_sq_[last] - prefix_sq_[first - 1];
  }
  /// Prefix sums rounded to double, for cheap screening bounds.
  std::span<const double> screen_prefix() const { return screen_prefix_; }
  /// Empirical mean of X_first .. X_last.
  double mean(std::size_t first, std::size_t last) const;

 private:
  std::vector<double> values_;
  std::vector<long double> prefix_{0.0L};
  std::vector<long double> prefix_sq_{0.0L};
  std::vector<double> screen_prefix_{0.0};
};

enum class Divergence { bernoulli, gaussian };
enum class ThresholdRule { anytime, experimental };

struct DetectorConfig {
  Divergence divergence = Divergence::bernoulli;
  double variance = 0.25;  // sigma^2 for the Gaussian proxy
  ThresholdRule threshold_rule = ThresholdRule::experimental;
  double delta_false_alarm = 0.01;
  double delta_detection = 0.01;
  int split_stride = 1;           // 1 scans every split
  bool geometric_splits = false;  // scan only n-1, n-2, n-4, ...
  double clamp_eps = 1e-6;
  // GSR form: true averages exp(stat_t) over t = 1..n (stat_n = 0); false
  // sums over t = 1..n-1 without the 1/n factor (the algorithmic form).
  bool gsr_normalized = true;

  void validate() const;
};

struct DetectionOutcome {
  bool triggered = false;
  std::optional<std::size_t> best_split;
  double best_statistic = 0.0;
  double threshold_used = 0.0;
};

/// kl(x, y) between Bernoulli means, both clamped to [eps, 1 - eps].
double bernoulli_kl(double x, double y, double eps = 1e-6);
/// (x - y)^2 / (2 sigma^2); throws on non-positive variance.
double gaussian_kl(double x, double y, double variance);
double divergence(double x, double y, const DetectorConfig& cfg);

/// t * kl(mu_{1:t}, mu_{1:n}) + (n - t) * kl(mu_{t+1:n}, mu_{1:n}) for 1 <= t < n.
double split_statistic(const ScalarHistory& history, std::size_t t, const DetectorConfig& cfg);

struct SplitStatistic {
  double value = 0.0;
  std::optional<std::size_t> split;
};

/// Exact maximum of the split statistic over the configured split grid
/// (first maximizer on ties). n < 2 yields 0 with no split.
SplitStatistic glr_statistic(const ScalarHistory& history, const DetectorConfig& cfg);

/// Splits scanned for a history of length n, ascending, always containing n - 1.
std::vector<std::size_t> split_grid(std::size_t n, const DetectorConfig& cfg);

double threshold_anytime(double n, double delta_false_alarm);
double threshold_experimental(double n, double delta_false_alarm);
double threshold(double n, const DetectorConfig& cfg);

/// GLR test. Scans splits in ascending order and stops at the first split
/// whose statistic reaches the threshold; that split is reported. Without a
/// trigger, best_statistic is the largest statistic among evaluated splits;
/// Bernoulli splits whose chi-square upper bound lies below the threshold
/// are skipped, so it is a lower bound on the grid maximum.
DetectionOutcome glr_test(const ScalarHistory& history, const DetectorConfig& cfg);

/// Generalized Shiryaev-Roberts: ln W_n with W_n = (1/n) sum_{t=1}^{n} exp(stat_t)
/// (stat_n = 0), accumulated by log-sum-exp; triggers iff ln W_n >= beta + ln n.
/// With cfg.gsr_normalized = false, W_n = sum_{t=1}^{n-1} exp(stat_t) instead.
/// best_statistic holds ln W_n and threshold_used holds beta + ln n.
DetectionOutcome gsr_test(const ScalarHistory& history, const DetectorConfig& cfg);

using Detector = std::function<DetectionOutcome(const ScalarHistory&, const DetectorConfig&)>;

}  // namespace darling
