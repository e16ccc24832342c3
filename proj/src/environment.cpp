#include "darling/environment.hpp"

#include <stdexcept>

namespace darling {

PiecewiseEnvironment::PiecewiseEnvironment(PSModel model) : model_(std::move(model)) { model_.validate(); }

std::shared_ptr<const SegmentModel> PiecewiseEnvironment::model_at(int t) const {
  return model_.segments[static_cast<std::size_t>(model_.segment_index(t))];
}

DriftEnvironment::DriftEnvironment(MdpDims dims, Generator generator, std::vector<int> initial_states,
                                   RewardNoise noise, std::shared_ptr<const FeatureMap> features,
                                   std::vector<int> nominal_change_points, AnchorFn anchors)
    : dims_(dims), generator_(std::move(generator)), initial_states_(std::move(initial_states)),
      noise_(noise), features_(std::move(features)), nominal_(std::move(nominal_change_points)),
      anchors_(std::move(anchors)) {
  dims_.validate();
  if (!generator_) throw std::invalid_argument("DriftEnvironment: missing generator");
  if (initial_states_.empty()) throw std::invalid_argument("DriftEnvironment: missing initial states");
}

std::shared_ptr<const SegmentModel> DriftEnvironment::model_at(int t) const {
  if (t != cached_t_ || !cached_) {
    cached_ = std::make_shared<const SegmentModel>(generator_(t));
    cached_t_ = t;
  }
  return cached_;
}

int DriftEnvironment::initial_state(int t) const {
  if (initial_states_.size() == 1) return initial_states_.front();
  return initial_states_.at(static_cast<std::size_t>(t) - 1);
}

std::optional<OracleAnchors> DriftEnvironment::anchors_at(int t) const {
  if (!anchors_) return std::nullopt;
  return anchors_(t);
}

RegretOracle::RegretOracle(const Environment& env, OracleCadence cadence) : env_(env), cadence_(cadence) {}

const std::vector<double>& RegretOracle::initial_row(std::int64_t key, const SegmentModel& model) {
  if (key != cur_key_) {
    const ValueTable table = optimal_values(model);
    cur_v_.assign(table.v.begin(), table.v.begin() + table.states);
    cur_key_ = key;
    ++solves_;
  }
  return cur_v_;
}

double RegretOracle::optimal_initial_value(int t) {
  const int s1 = env_.initial_state(t);
  if (cadence_ == OracleCadence::interpolate) {
    if (auto anchors = env_.anchors_at(t)) {
      auto solve_row = [this](const SegmentModel& m) {
        const ValueTable table = optimal_values(m);
        ++solves_;
        return std::vector<double>(table.v.begin(), table.v.begin() + table.states);
      };
      if (anchors->lo_key != lo_key_) {
        if (anchors->lo_key == hi_key_) {
          lo_v_ = hi_v_;
        } else {
          lo_v_ = solve_row(*anchors->lo);
        }
        lo_key_ = anchors->lo_key;
      }
      if (anchors->hi_key != hi_key_) {
        hi_v_ = solve_row(*anchors->hi);
        hi_key_ = anchors->hi_key;
      }
      if (anchors->lambda != 0.0) exact_ = false;
      const auto s = static_cast<std::size_t>(s1);
      return (1.0 - anchors->lambda) * lo_v_[s] + anchors->lambda * hi_v_[s];
    }
  }
  const auto model = env_.model_at(t);
  return initial_row(env_.piece_at(t), *model)[static_cast<std::size_t>(s1)];
}

}  // namespace darling
