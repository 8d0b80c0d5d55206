#pragma once

// Shrinkage and projection operators used by the proximal-gradient solvers.

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ordfa/common.hpp"

namespace ordfa {

/// max(v - threshold, 0) elementwise: prox of threshold * sum(x) over x >= 0.
template <typename Derived>
typename Derived::PlainObject shrink_nonneg(const Eigen::MatrixBase<Derived>& v,
                                            typename Derived::Scalar threshold) {
  using Scalar = typename Derived::Scalar;
  if (!(threshold >= 0)) throw std::invalid_argument("shrink_nonneg: negative threshold");
  return (v.array() - threshold).max(Scalar(0)).matrix();
}

/// max(v / (1 + gamma * step), 0): prox of (gamma/2)||x||^2 over x >= 0.
template <typename Derived>
typename Derived::PlainObject shrink_tag_ridge(const Eigen::MatrixBase<Derived>& v,
                                               typename Derived::Scalar gamma,
                                               typename Derived::Scalar step) {
  using Scalar = typename Derived::Scalar;
  if (!(gamma >= 0)) throw std::invalid_argument("shrink_tag_ridge: negative gamma");
  if (!(step > 0)) throw std::invalid_argument("shrink_tag_ridge: step must be positive");
  return (v.array() / (Scalar(1) + gamma * step)).max(Scalar(0)).matrix();
}

/// Projection onto the Frobenius ball of radius eta.
template <typename Derived>
typename Derived::PlainObject project_frobenius(const Eigen::MatrixBase<Derived>& C,
                                                typename Derived::Scalar eta) {
  if (!(eta > 0)) throw std::invalid_argument("project_frobenius: eta must be positive");
  const auto norm = C.norm();
  if (norm <= eta) return C;
  return (eta / norm) * C;
}

/// Euclidean projection of a non-negative vector onto {x >= 0 : sum(x) <= eta}.
template <typename Derived>
typename Derived::PlainObject project_l1_ball(const Eigen::MatrixBase<Derived>& s,
                                              typename Derived::Scalar eta) {
  using Scalar = typename Derived::Scalar;
  if (!(eta > 0)) throw std::invalid_argument("project_l1_ball: eta must be positive");
  if (s.size() && s.minCoeff() < 0)
    throw std::invalid_argument("project_l1_ball: entries must be non-negative");
  if (s.sum() <= eta) return s;

  // Water-filling: find theta with sum(max(s - theta, 0)) = eta.
  std::vector<Scalar> sorted(static_cast<std::size_t>(s.size()));
  for (Eigen::Index k = 0; k < s.size(); ++k) sorted[static_cast<std::size_t>(k)] = s(k);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  Scalar cumulative = 0;
  Scalar theta = 0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    const Scalar candidate = (cumulative - eta) / Scalar(k + 1);
    if (k + 1 == sorted.size() || sorted[k + 1] <= candidate) {
      theta = candidate;
      break;
    }
  }
  return (s.array() - theta).max(Scalar(0)).matrix();
}

/// Projection onto the nuclear-norm ball of radius eta: singular values are
/// projected onto the l1 ball, singular vectors kept.
template <typename Derived>
typename Derived::PlainObject project_nuclear(const Eigen::MatrixBase<Derived>& C,
                                              typename Derived::Scalar eta) {
  using Plain = typename Derived::PlainObject;
  if (!(eta > 0)) throw std::invalid_argument("project_nuclear: eta must be positive");
  Eigen::JacobiSVD<Plain> svd(C, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success)
    throw NumericalError("project_nuclear: SVD did not converge");
  const auto& sigma = svd.singularValues();
  if (sigma.sum() <= eta) return C;
  const auto s = project_l1_ball(sigma, eta);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

/// Largest singular value, from the eigenvalues of the smaller Gram matrix.
template <typename Derived>
typename Derived::Scalar max_singular_value(const Eigen::MatrixBase<Derived>& M) {
  using Scalar = typename Derived::Scalar;
  using Square = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (M.size() == 0) return Scalar(0);
  const Square gram = M.rows() <= M.cols() ? Square(M * M.transpose())
                                           : Square(M.transpose() * M);
  Eigen::SelfAdjointEigenSolver<Square> eig(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(eig.eigenvalues().maxCoeff(), Scalar(0)));
}

/// Reciprocal Lipschitz constant 1 / (tau^2 sigma_max(M)^2) of the gradient of
/// the probit negative log-likelihood in the factor multiplied by M.
template <typename Derived>
typename Derived::Scalar lipschitz_step(typename Derived::Scalar tau,
                                        const Eigen::MatrixBase<Derived>& M) {
  if (!(tau > 0)) throw std::invalid_argument("lipschitz_step: tau must be positive");
  const auto sigma = max_singular_value(M);
  if (!(sigma > 0)) throw std::invalid_argument("lipschitz_step: zero matrix");
  return 1 / (tau * tau * sigma * sigma);
}

}  // namespace ordfa
