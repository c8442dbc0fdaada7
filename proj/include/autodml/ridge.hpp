#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "autodml/error.hpp"

namespace autodml {

// Solves (gram + lambda * diag(penalized)) beta = rhs by LDLT. An empty
// mask penalizes every coordinate. Throws NumericalError when the system is
// singular (relative pivot below 1e-13), which is how lambda = 0 with a
// rank-deficient design surfaces.
inline Eigen::VectorXd solve_penalized(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs, double lambda,
                                       const std::vector<bool>& penalized = {}) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("ridge penalty must be finite and >= 0");
  const Eigen::Index p = gram.rows();
  if (p == 0) return Eigen::VectorXd();
  Eigen::MatrixXd a = gram;
  for (Eigen::Index j = 0; j < p; ++j)
    if (penalized.empty() || penalized[static_cast<std::size_t>(j)]) a(j, j) += lambda;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  const Eigen::VectorXd d = ldlt.vectorD();
  const double scale = std::max(d.cwiseAbs().maxCoeff(), a.diagonal().cwiseAbs().maxCoeff());
  Eigen::Index rank = 0;
  for (Eigen::Index j = 0; j < p; ++j)
    if (d(j) > 1e-13 * scale) ++rank;
  if (ldlt.info() != Eigen::Success || scale == 0.0 || rank < p)
    throw NumericalError("singular normal equations: rank " + std::to_string(rank) + " < " + std::to_string(p) +
                         " columns (increase the ridge penalty)");
  Eigen::VectorXd beta = ldlt.solve(rhs);
  if (!beta.allFinite()) throw NumericalError("ridge solve produced non-finite weights");
  return beta;
}

// argmin_b sum_i (y_i - b.x_i)^2 + lambda |b|^2 with an unnormalized penalty.
inline Eigen::VectorXd fit_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda) {
  if (x.rows() < 1) throw ValidationError("ridge needs at least one observation");
  if (x.rows() != y.size()) throw ValidationError("ridge: design and target lengths differ");
  return solve_penalized(x.transpose() * x, x.transpose() * y, lambda);
}

// Default per-observation penalty 1e-3 n^{-1/2} tr(G)/p for G = X'X/n.
inline double default_lambda(const Eigen::MatrixXd& normalized_gram, std::size_t n) {
  const double p = static_cast<double>(normalized_gram.rows());
  if (p == 0) return 0.0;
  double scale = normalized_gram.trace() / p;
  if (!(scale > 0.0)) scale = 1.0;
  return 1e-3 / std::sqrt(static_cast<double>(n)) * scale;
}

}  // namespace autodml
