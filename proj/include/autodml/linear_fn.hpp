#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "autodml/error.hpp"
#include "autodml/features.hpp"

namespace autodml {

// g(s, k) = clip(weights . phi(s, k) + offset_coef * offset(s, k)).
// The offset term carries the unpenalized clever-covariate component; it is
// absent for every other fit.
class LinearFn {
 public:
  LinearFn(FeatureMapPtr map, Eigen::VectorXd weights, std::optional<double> clip = std::nullopt)
      : map_(std::move(map)), weights_(std::move(weights)), clip_(clip) {
    if (!map_) throw ValidationError("LinearFn requires a feature map");
    if (static_cast<std::size_t>(weights_.size()) != map_->size())
      throw ValidationError("LinearFn: weight length " + std::to_string(weights_.size()) +
                            " does not match feature map size " + std::to_string(map_->size()));
    if (clip_ && !(*clip_ > 0)) throw ValidationError("LinearFn: clip bound must be > 0");
  }

  static LinearFn constant(double c) {
    static const FeatureMapPtr unit = share(FeatureMap::constant());
    return LinearFn(unit, Eigen::VectorXd::Constant(1, c));
  }

  static LinearFn zero(FeatureMapPtr map) {
    const auto p = static_cast<Eigen::Index>(map->size());
    return LinearFn(std::move(map), Eigen::VectorXd::Zero(p));
  }

  double operator()(std::span<const double> state, int treatment) const {
    double v = map_->dot(weights_, state, treatment);
    if (offset_) v += offset_coef_ * (*offset_)(state, treatment);
    if (clip_) v = std::clamp(v, -*clip_, *clip_);
    return v;
  }

  const FeatureMap& feature_map() const { return *map_; }
  const FeatureMapPtr& feature_map_ptr() const { return map_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  std::optional<double> clip() const { return clip_; }
  double offset_coefficient() const { return offset_ ? offset_coef_ : 0.0; }
  const LinearFn* offset() const { return offset_.get(); }

  LinearFn with_clip(std::optional<double> clip) const {
    LinearFn out = *this;
    out.clip_ = clip;
    if (clip && !(*clip > 0)) throw ValidationError("LinearFn: clip bound must be > 0");
    return out;
  }

  LinearFn with_offset(double coef, std::shared_ptr<const LinearFn> addend) const {
    LinearFn out = *this;
    out.offset_coef_ = coef;
    out.offset_ = std::move(addend);
    return out;
  }

  // this + eps * direction. Both must share a basis; the direction must be a
  // plain (unclipped, offset-free) linear function.
  LinearFn perturbed(const LinearFn& direction, double eps) const {
    if (!(*map_ == direction.feature_map()))
      throw ValidationError("perturbation direction uses a different feature map");
    if (direction.clip_ || direction.offset_)
      throw ValidationError("perturbation direction must be an unclipped plain linear function");
    LinearFn out = *this;
    out.weights_ = weights_ + eps * direction.weights_;
    return out;
  }

 private:
  FeatureMapPtr map_;
  Eigen::VectorXd weights_;
  std::optional<double> clip_;
  double offset_coef_ = 0.0;
  std::shared_ptr<const LinearFn> offset_;
};

// {f_1..f_M, a_1..a_M}; a_0 is the constant 1.
class NuisanceSet {
 public:
  NuisanceSet(std::vector<LinearFn> regressions, std::vector<LinearFn> representers)
      : regressions_(std::move(regressions)), representers_(std::move(representers)) {
    if (regressions_.empty()) throw ValidationError("nuisance set must cover at least one period");
    if (regressions_.size() != representers_.size())
      throw ValidationError("nuisance set: " + std::to_string(regressions_.size()) + " regressions but " +
                            std::to_string(representers_.size()) + " representers");
  }

  int periods() const { return static_cast<int>(regressions_.size()); }
  const LinearFn& regression(int t) const { return regressions_.at(t - 1); }
  const LinearFn& representer(int t) const { return t == 0 ? unit() : representers_.at(t - 1); }
  const std::vector<LinearFn>& regressions() const { return regressions_; }
  const std::vector<LinearFn>& representers() const { return representers_; }

  NuisanceSet with_regression(int t, LinearFn f) const {
    NuisanceSet out = *this;
    out.regressions_.at(t - 1) = std::move(f);
    return out;
  }
  NuisanceSet with_representer(int t, LinearFn a) const {
    NuisanceSet out = *this;
    out.representers_.at(t - 1) = std::move(a);
    return out;
  }

 private:
  static const LinearFn& unit() {
    static const LinearFn one = LinearFn::constant(1.0);
    return one;
  }

  std::vector<LinearFn> regressions_;
  std::vector<LinearFn> representers_;
};

// a_{t-1}(S_{t-1}, T_{t-1}) on an observed trajectory; 1 when t == 1.
template <typename TrajectoryLike>
double previous_representer(const NuisanceSet& nuisances, int t, const TrajectoryLike& z) {
  if (t == 1) return 1.0;
  return nuisances.representer(t - 1)(z.state(t - 1), z.treatment(t - 1));
}

}  // namespace autodml
