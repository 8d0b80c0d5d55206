#pragma once

// Synthetic ground truth, response sampling, factor alignment and recovery
// error metrics.

#include <cstdint>
#include <optional>

#include "ordfa/common.hpp"
#include "ordfa/ordinal_model.hpp"

namespace ordfa {

struct GeneratorParams {
  double mu0 = 0.0;
  double v_mu = 1.0;       // variance of the difficulties
  double lambda_k = 0.66;  // rate of the exponential W magnitudes
  Matrix V0;               // covariance of the C columns; empty means identity
  double tau = 1.0;
  std::optional<QuantizerSpec> bins;  // defaults to default_bins()
  int max_support = 3;                // support size uniform on 1..max_support
  Index c_rank = 0;                   // > 0: C = A B with inner dimension c_rank
};

/// Edges {-inf, -2.1, -0.64, 0.64, 2.1, inf}.
QuantizerSpec default_bins();

/// Edges Phi^{-1}(p / P), p = 0..P.
QuantizerSpec make_even_bins(int num_labels);

struct GroundTruth {
  Matrix W;
  Matrix C;
  Vector mu;
  double tau;
  QuantizerSpec bins;

  FactorModel model() const { return {W, mu, C, tau}; }
};

GroundTruth generate_ground_truth(Index num_questions, Index num_learners, Index num_concepts,
                                  const GeneratorParams& params, std::uint64_t seed);

/// Y = quantize(W C + mu 1^T + e), e ~ N(0, 1/tau^2) so that the sampling law
/// matches ordinal_likelihood; each entry observed with probability
/// obs_fraction.
ResponseMatrix generate_responses(const GroundTruth& truth, double obs_fraction,
                                  std::uint64_t seed, bool noiseless = false);

/// Column permutation of est.W maximizing total cosine similarity with
/// truth.W: perm[k] is the estimated column matched to true column k.
std::vector<Index> match_columns(const Matrix& W_est, const Matrix& W_true);

/// Permutes and rescales the estimated concepts onto the truth. W C is
/// unchanged.
FactorModel align_factors(const FactorModel& est, const GroundTruth& truth);

struct RecoveryErrors {
  double e_w;
  double e_c;
  double e_mu;
};

/// Relative squared errors ||X - X_hat||^2 / ||X||^2.
RecoveryErrors recovery_errors(const FactorModel& aligned, const GroundTruth& truth);

/// Tag support equal to the nonzero pattern of W.
std::vector<std::pair<Index, Index>> support_pairs(const Matrix& W);

}  // namespace ordfa
