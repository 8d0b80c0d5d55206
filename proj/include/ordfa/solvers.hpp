#pragma once

// Block coordinate descent for ordinal sparse factor analysis: FISTA solvers
// for the W rows and for C, secant updates of the precision or of the bin
// edges, and the tag-constrained variant.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ordfa/common.hpp"
#include "ordfa/ordinal_model.hpp"

namespace ordfa {

enum class NormConstraint { frobenius, nuclear };

enum class PrecisionKind { fixed_tau, estimate_tau, learn_bins_shared, learn_bins_per_question };

struct PrecisionMode {
  PrecisionKind kind = PrecisionKind::estimate_tau;
  double tau = 1.0;  // value for fixed_tau, starting point for estimate_tau

  static PrecisionMode fixed(double tau) { return {PrecisionKind::fixed_tau, tau}; }
  static PrecisionMode estimated() { return {PrecisionKind::estimate_tau, 1.0}; }
  static PrecisionMode bins_shared() { return {PrecisionKind::learn_bins_shared, 1.0}; }
  static PrecisionMode bins_per_question() {
    return {PrecisionKind::learn_bins_per_question, 1.0};
  }
  bool learns_bins() const {
    return kind == PrecisionKind::learn_bins_shared ||
           kind == PrecisionKind::learn_bins_per_question;
  }
};

/// Instructor tags: (question, concept) pairs asserted to be in the support
/// of W. Concept k corresponds to the k-th tag.
class TagSupport {
 public:
  TagSupport(Index num_concepts, std::vector<std::pair<Index, Index>> pairs);

  Index num_concepts() const { return num_concepts_; }
  const std::vector<std::pair<Index, Index>>& pairs() const { return pairs_; }

  /// Q x K membership mask; throws if a question index is >= num_questions.
  BoolMatrix mask(Index num_questions) const;
  /// Concepts that no question carries.
  std::vector<Index> unused_concepts() const;

 private:
  Index num_concepts_;
  std::vector<std::pair<Index, Index>> pairs_;
};

struct InnerOptions {
  int max_iters = 100;
  double rel_tol = 1e-6;
};

struct SecantOptions {
  int max_iters = 50;
  double tol = 1e-8;           // on the derivative
  double initial_step = 0.25;  // first bracketing step
};

struct FitOptions {
  double lambda = 1.0;
  double gamma_ridge = 1e-6;
  double eta = 1.0;
  NormConstraint norm_constraint = NormConstraint::frobenius;
  PrecisionMode precision;
  Index num_concepts = 5;
  int max_outer_iters = 100;
  InnerOptions inner;
  double tol_objective = 1e-6;  // relative change of the outer objective
  std::uint64_t rng_seed = 0;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

struct FitTrace {
  std::vector<double> objective_per_outer_iter;
  bool converged = false;
  int iterations_run = 0;
  std::vector<Index> excluded_questions;  // rows without observations
  std::vector<Index> excluded_learners;   // columns without observations
  std::vector<std::string> warnings;
};

struct FitResult {
  FactorModel model;
  BinSet bins;
  FitTrace trace;
};

/// Penalty on one row of W. `tagged` (size K, or empty for no tags) selects
/// the ridge term; the remaining entries get the l1 term.
struct RowPenalty {
  double lambda = 0;
  double gamma = 0;
  BoolArray tagged;
};

struct RowSolution {
  Vector w;
  double mu;
  double objective;  // likelihood part plus penalty
  int iterations;
};

/// FISTA for one row: minimizes -sum_j log P(Y_ij | w^T c_j + mu) + penalty(w)
/// over w >= 0 and unconstrained mu. Never returns a point worse than the start.
RowSolution solve_or_w(const Eigen::Ref<const Eigen::RowVectorXi>& labels, const Matrix& C,
                       double tau, const QuantizerSpec& q, const Vector& w_init,
                       double mu_init, const RowPenalty& penalty,
                       const InnerOptions& opts = {});

struct BlockSolution {
  Matrix C;
  double objective;
  int iterations;
};

/// FISTA for C over the Frobenius or nuclear ball of radius eta.
BlockSolution solve_or_c(const ResponseMatrix& Y, const Matrix& W, const Vector& mu,
                         double tau, const BinSet& bins, const Matrix& C_init,
                         NormConstraint norm, double eta, const InnerOptions& opts = {});

struct PrecisionEstimate {
  double tau;
  double objective;
  bool converged;
  int iterations;
};

/// Secant search over log(tau) for the stationary point of the likelihood
/// in tau with W, C, mu fixed. The model's own tau is ignored.
PrecisionEstimate estimate_precision(const FactorModel& model, const ResponseMatrix& Y,
                                     const BinSet& bins, double tau_init,
                                     const SecantOptions& opts = {});

enum class BinMode { shared, per_question };

/// Minimum gap kept between adjacent learned bin edges.
inline constexpr double kMinBinGap = 1e-4;

struct BinEstimate {
  BinSet bins;
  double objective;
  std::vector<std::string> warnings;
};

/// Cyclic secant updates of each interior edge with the others fixed,
/// at the model's tau. In per_question mode every row gets its own edges.
BinEstimate optimize_bins(const FactorModel& model, const ResponseMatrix& Y,
                          const BinSet& bins_init, BinMode mode, int sweeps = 5,
                          const SecantOptions& opts = {});

FitResult fit(const ResponseMatrix& Y, const QuantizerSpec& q, const FitOptions& opts);

FitResult fit_tagged(const ResponseMatrix& Y, const QuantizerSpec& q, const TagSupport& tags,
                     const FitOptions& opts);

/// Objective minimized by fit / fit_tagged (tags may be null).
double fit_objective(const FactorModel& model, const ResponseMatrix& Y, const BinSet& bins,
                     const FitOptions& opts, const TagSupport* tags = nullptr);

/// Norm of the proximal gradient mapping over the (W, mu) and C blocks at the
/// model, with the constant steps the solvers use. Zero at a block-wise
/// stationary point.
double gradient_mapping_norm(const FactorModel& model, const ResponseMatrix& Y,
                             const BinSet& bins, const FitOptions& opts,
                             const TagSupport* tags = nullptr);

}  // namespace ordfa
