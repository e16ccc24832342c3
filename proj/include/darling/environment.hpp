#pragma once

// Non-stationary episode sources and the dynamic-regret oracle built on them.

#include "darling/mdp.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace darling {

/// Two solved anchor models between which the optimal value is interpolated.
struct OracleAnchors {
  std::int64_t lo_key = 0;
  std::int64_t hi_key = 0;
  std::shared_ptr<const SegmentModel> lo;
  std::shared_ptr<const SegmentModel> hi;
  double lambda = 0.0;
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual const MdpDims& dims() const = 0;
  /// Model in force during episode t.
  virtual std::shared_ptr<const SegmentModel> model_at(int t) const = 0;
  /// Key that changes exactly when the model in force changes.
  virtual std::int64_t piece_at(int t) const = 0;
  virtual int initial_state(int t) const = 0;
  virtual RewardNoise reward_noise() const = 0;
  /// Ground-truth abrupt change-points (empty for continuous drift).
  virtual const std::vector<int>& change_points() const = 0;
  virtual std::shared_ptr<const FeatureMap> features() const = 0;
  /// When present, the oracle may interpolate V* between two anchors instead
  /// of solving model_at(t); results are then flagged inexact.
  virtual std::optional<OracleAnchors> anchors_at(int /*t*/) const { return std::nullopt; }
};

class PiecewiseEnvironment final : public Environment {
 public:
  explicit PiecewiseEnvironment(PSModel model);

  const MdpDims& dims() const override { return model_.dims; }
  std::shared_ptr<const SegmentModel> model_at(int t) const override;
  std::int64_t piece_at(int t) const override { return model_.segment_index(t); }
  int initial_state(int t) const override { return model_.initial_state(t); }
  RewardNoise reward_noise() const override { return model_.reward_noise; }
  const std::vector<int>& change_points() const override { return model_.change_points; }
  std::shared_ptr<const FeatureMap> features() const override { return model_.features; }

  const PSModel& model() const { return model_; }

 private:
  PSModel model_;
};

/// Model that moves every episode, generated lazily; the most recent model is cached.
class DriftEnvironment final : public Environment {
 public:
  using Generator = std::function<SegmentModel(int t)>;
  using AnchorFn = std::function<std::optional<OracleAnchors>(int t)>;

  DriftEnvironment(MdpDims dims, Generator generator, std::vector<int> initial_states,
                   RewardNoise noise, std::shared_ptr<const FeatureMap> features,
                   std::vector<int> nominal_change_points = {}, AnchorFn anchors = {});

  const MdpDims& dims() const override { return dims_; }
  std::shared_ptr<const SegmentModel> model_at(int t) const override;
  std::int64_t piece_at(int t) const override { return t; }
  int initial_state(int t) const override;
  RewardNoise reward_noise() const override { return noise_; }
  const std::vector<int>& change_points() const override { return nominal_; }
  std::shared_ptr<const FeatureMap> features() const override { return features_; }
  std::optional<OracleAnchors> anchors_at(int t) const override;

 private:
  MdpDims dims_;
  Generator generator_;
  std::vector<int> initial_states_;
  RewardNoise noise_;
  std::shared_ptr<const FeatureMap> features_;
  std::vector<int> nominal_;
  AnchorFn anchors_;
  mutable int cached_t_ = 0;
  mutable std::shared_ptr<const SegmentModel> cached_;
};

enum class OracleCadence {
  exact,        // solve whenever the piece changes
  interpolate,  // use environment anchors when offered
};

/// Supplies V_1^{t,*}(s_1^t), solving optimal_values only when the piece changes.
class RegretOracle {
 public:
  explicit RegretOracle(const Environment& env, OracleCadence cadence = OracleCadence::exact);

  double optimal_initial_value(int t);
  std::size_t solves() const { return solves_; }
  bool exact() const { return exact_; }

 private:
  const std::vector<double>& initial_row(std::int64_t key, const SegmentModel& model);

  const Environment& env_;
  OracleCadence cadence_;
  std::size_t solves_ = 0;
  bool exact_ = true;
  std::int64_t cur_key_ = -1;
  std::vector<double> cur_v_;
  std::int64_t lo_key_ = -1;
  std::int64_t hi_key_ = -1;
  std::vector<double> lo_v_;
  std::vector<double> hi_v_;
};

}  // namespace darling
