#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "autodml/error.hpp"
#include "autodml/random.hpp"

namespace autodml {

namespace basis {

// One-hot over the grid of (integer state cell, treatment). Cells are laid
// out row-major over state components; features are blocked by treatment:
// index = k * cells() + cell(state).
struct Tabular {
  std::vector<int> state_arity;

  std::size_t cells() const {
    std::size_t c = 1;
    for (int a : state_arity) c *= static_cast<std::size_t>(a);
    return c;
  }

  std::size_t cell(std::span<const double> state) const {
    std::size_t idx = 0;
    for (std::size_t j = 0; j < state_arity.size(); ++j) {
      const double v = state[j];
      const double r = std::nearbyint(v);
      if (r != v || r < 0 || r >= state_arity[j]) {
        std::ostringstream os;
        os << "tabular features: state component " << j + 1 << " = " << v << " is not an integer in [0, "
           << state_arity[j] << ")";
        throw ValidationError(os.str());
      }
      idx = idx * static_cast<std::size_t>(state_arity[j]) + static_cast<std::size_t>(r);
    }
    return idx;
  }

  bool operator==(const Tabular&) const = default;
};

// Monomials of the state of total degree <= degree, in graded lexicographic
// order, repeated once per treatment indicator.
struct Polynomial {
  int state_dim = 1;
  int degree = 1;
  std::vector<std::vector<int>> exponents;

  static Polynomial make(int state_dim, int degree) {
    Polynomial p{state_dim, degree, {}};
    std::vector<int> current(static_cast<std::size_t>(state_dim), 0);
    for (int total = 0; total <= degree; ++total) enumerate(p.exponents, current, 0, total);
    return p;
  }

  double monomial(std::size_t j, std::span<const double> state) const {
    double v = 1.0;
    for (int d = 0; d < state_dim; ++d)
      for (int e = 0; e < exponents[j][d]; ++e) v *= state[d];
    return v;
  }

  bool operator==(const Polynomial& o) const { return state_dim == o.state_dim && degree == o.degree; }

 private:
  static void enumerate(std::vector<std::vector<int>>& out, std::vector<int>& current, int dim, int remaining) {
    if (dim + 1 == static_cast<int>(current.size())) {
      current[dim] = remaining;
      out.push_back(current);
      return;
    }
    for (int e = remaining; e >= 0; --e) {
      current[dim] = e;
      enumerate(out, current, dim + 1, remaining - e);
    }
    current[dim] = 0;
  }
};

// sqrt(2/D) cos(w.s + b) with w ~ N(0, I / bandwidth^2), b ~ U[0, 2pi),
// drawn once from `seed` at construction.
struct RandomFourier {
  int state_dim = 1;
  int features = 0;
  double bandwidth = 1.0;
  std::uint64_t seed = 0;
  Eigen::MatrixXd frequencies;  // features x state_dim
  Eigen::VectorXd phases;

  static RandomFourier make(int state_dim, int features, double bandwidth, std::uint64_t seed) {
    RandomFourier f{state_dim, features, bandwidth, seed, Eigen::MatrixXd(features, state_dim),
                    Eigen::VectorXd(features)};
    Rng rng(seed);
    for (int i = 0; i < features; ++i) {
      for (int d = 0; d < state_dim; ++d) f.frequencies(i, d) = rng.normal() / bandwidth;
      f.phases(i) = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    return f;
  }

  double feature(int i, std::span<const double> state) const {
    double arg = phases(i);
    for (int d = 0; d < state_dim; ++d) arg += frequencies(i, d) * state[d];
    return std::sqrt(2.0 / features) * std::cos(arg);
  }

  bool operator==(const RandomFourier& o) const {
    return state_dim == o.state_dim && features == o.features && bandwidth == o.bandwidth && seed == o.seed;
  }
};

// The function 1; stands for a_0.
struct Constant {
  bool operator==(const Constant&) const = default;
};

}  // namespace basis

class FeatureMap {
 public:
  using Basis = std::variant<basis::Tabular, basis::Polynomial, basis::RandomFourier, basis::Constant>;

  static FeatureMap tabular(std::vector<int> state_arity, int treatment_arity) {
    if (state_arity.empty()) throw ValidationError("tabular features need at least one state component");
    for (int a : state_arity)
      if (a < 1) throw ValidationError("tabular features: state arity must be >= 1");
    const int dim = static_cast<int>(state_arity.size());
    return FeatureMap(basis::Tabular{std::move(state_arity)}, dim, treatment_arity);
  }

  static FeatureMap polynomial(int state_dim, int degree, int treatment_arity) {
    if (state_dim < 1 || degree < 0) throw ValidationError("polynomial features need state_dim >= 1 and degree >= 0");
    return FeatureMap(basis::Polynomial::make(state_dim, degree), state_dim, treatment_arity);
  }

  static FeatureMap random_fourier(int state_dim, int features, double bandwidth, std::uint64_t seed,
                                   int treatment_arity) {
    if (state_dim < 1 || features < 1 || !(bandwidth > 0))
      throw ValidationError("random Fourier features need state_dim >= 1, features >= 1, bandwidth > 0");
    return FeatureMap(basis::RandomFourier::make(state_dim, features, bandwidth, seed), state_dim, treatment_arity);
  }

  static FeatureMap constant() { return FeatureMap(basis::Constant{}, 0, 1); }

  std::size_t size() const { return block_ * static_cast<std::size_t>(treatment_arity_); }
  int treatment_arity() const { return treatment_arity_; }
  int state_dim() const { return state_dim_; }
  const Basis& basis() const { return basis_; }
  bool is_constant() const { return std::holds_alternative<basis::Constant>(basis_); }

  // Writes phi(state, treatment) into `out` (length size()).
  void evaluate(std::span<const double> state, int treatment, std::span<double> out) const {
    check(state, treatment);
    std::fill(out.begin(), out.end(), 0.0);
    std::visit(
        [&](const auto& b) {
          using B = std::decay_t<decltype(b)>;
          const std::size_t off = block_ * static_cast<std::size_t>(treatment);
          if constexpr (std::is_same_v<B, basis::Tabular>) {
            out[off + b.cell(state)] = 1.0;
          } else if constexpr (std::is_same_v<B, basis::Polynomial>) {
            for (std::size_t j = 0; j < block_; ++j) out[off + j] = b.monomial(j, state);
          } else if constexpr (std::is_same_v<B, basis::RandomFourier>) {
            for (std::size_t j = 0; j < block_; ++j) out[off + j] = b.feature(static_cast<int>(j), state);
          } else {
            out[0] = 1.0;
          }
        },
        basis_);
  }

  Eigen::VectorXd operator()(std::span<const double> state, int treatment) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(size()));
    evaluate(state, treatment, std::span<double>(v.data(), size()));
    return v;
  }

  // weights . phi(state, treatment) without materializing phi.
  double dot(const Eigen::VectorXd& weights, std::span<const double> state, int treatment) const {
    check(state, treatment);
    return std::visit(
        [&](const auto& b) -> double {
          using B = std::decay_t<decltype(b)>;
          const std::size_t off = block_ * static_cast<std::size_t>(treatment);
          if constexpr (std::is_same_v<B, basis::Tabular>) {
            return weights(static_cast<Eigen::Index>(off + b.cell(state)));
          } else if constexpr (std::is_same_v<B, basis::Polynomial>) {
            double acc = 0.0;
            for (std::size_t j = 0; j < block_; ++j)
              acc += weights(static_cast<Eigen::Index>(off + j)) * b.monomial(j, state);
            return acc;
          } else if constexpr (std::is_same_v<B, basis::RandomFourier>) {
            double acc = 0.0;
            for (std::size_t j = 0; j < block_; ++j)
              acc += weights(static_cast<Eigen::Index>(off + j)) * b.feature(static_cast<int>(j), state);
            return acc;
          } else {
            return weights(0);
          }
        },
        basis_);
  }

  std::string describe() const {
    std::ostringstream os;
    std::visit(
        [&](const auto& b) {
          using B = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<B, basis::Tabular>) {
            os << "tabular(arity=";
            for (std::size_t j = 0; j < b.state_arity.size(); ++j) os << (j ? "x" : "") << b.state_arity[j];
            os << ")";
          } else if constexpr (std::is_same_v<B, basis::Polynomial>) {
            os << "polynomial(dim=" << b.state_dim << ",degree=" << b.degree << ")";
          } else if constexpr (std::is_same_v<B, basis::RandomFourier>) {
            os << "fourier(dim=" << b.state_dim << ",features=" << b.features << ",bandwidth=" << b.bandwidth
               << ",seed=" << b.seed << ")";
          } else {
            os << "constant";
          }
        },
        basis_);
    if (!is_constant()) os << "[K=" << treatment_arity_ << "]";
    return os.str();
  }

  bool operator==(const FeatureMap& o) const {
    return treatment_arity_ == o.treatment_arity_ && state_dim_ == o.state_dim_ && basis_ == o.basis_;
  }

 private:
  FeatureMap(Basis b, int state_dim, int treatment_arity)
      : basis_(std::move(b)), state_dim_(state_dim), treatment_arity_(treatment_arity) {
    if (treatment_arity < 1) throw ValidationError("treatment arity must be >= 1");
    block_ = std::visit(
        [](const auto& v) -> std::size_t {
          using B = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<B, basis::Tabular>) return v.cells();
          else if constexpr (std::is_same_v<B, basis::Polynomial>) return v.exponents.size();
          else if constexpr (std::is_same_v<B, basis::RandomFourier>) return static_cast<std::size_t>(v.features);
          else return 1;
        },
        basis_);
  }

  void check(std::span<const double> state, int treatment) const {
    if (is_constant()) return;
    if (static_cast<int>(state.size()) != state_dim_)
      throw ValidationError("feature map expects a state of dimension " + std::to_string(state_dim_) + ", got " +
                            std::to_string(state.size()));
    if (treatment < 0 || treatment >= treatment_arity_)
      throw ValidationError("treatment code " + std::to_string(treatment) + " outside [0, " +
                            std::to_string(treatment_arity_) + ")");
  }

  Basis basis_;
  int state_dim_ = 0;
  int treatment_arity_ = 1;
  std::size_t block_ = 1;
};

using FeatureMapPtr = std::shared_ptr<const FeatureMap>;

inline FeatureMapPtr share(FeatureMap map) { return std::make_shared<const FeatureMap>(std::move(map)); }

}  // namespace autodml
