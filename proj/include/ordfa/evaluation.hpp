#pragma once

// Model selection (BIC, k-fold cross-validation), holdout prediction and the
// recovery / prediction experiment drivers.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ordfa/common.hpp"
#include "ordfa/ordinal_model.hpp"
#include "ordfa/solvers.hpp"
#include "ordfa/synthetic.hpp"

namespace ordfa {

/// Number of singular values above rel_tol * sigma_max.
Index numerical_rank(const Matrix& M, double rel_tol = 1e-6);

/// Free-parameter count used by bic_score: nnz(W) + Q, plus K N (Frobenius)
/// or r (K + N - r) with r = numerical_rank(C) (nuclear), plus 1 for an
/// estimated tau or the number of learned interior bin edges.
double effective_parameters(const FactorModel& model, const BinSet& bins,
                            const FitOptions& opts);

/// 2 * negative log-likelihood + effective_parameters * log |Omega_obs|.
double bic_score(const FactorModel& model, const ResponseMatrix& Y, const BinSet& bins,
                 const FitOptions& opts);

struct GridPoint {
  double lambda;
  double eta;
};

/// Cartesian product of the two axes.
std::vector<GridPoint> make_grid(const std::vector<double>& lambdas,
                                 const std::vector<double>& etas);

struct SelectionMode {
  enum Kind { bic, cross_validation } kind = bic;
  int folds = 4;
  std::uint64_t seed = 0;

  static SelectionMode by_bic() { return {bic, 4, 0}; }
  static SelectionMode by_cv(int folds, std::uint64_t seed) {
    return {cross_validation, folds, seed};
  }
};

struct Selection {
  FitOptions options;             // base options with the chosen lambda, eta
  std::vector<double> scores;     // per grid point; +inf where the fit failed
  std::size_t best_index = 0;
  FitResult fit;                  // fit of the chosen options on all of Y
};

/// Fits every grid point and keeps the lowest score (BIC, or mean held-out
/// RMSE over folds). Ties go to the larger lambda, then the smaller eta.
Selection select_hyperparams(const ResponseMatrix& Y, const QuantizerSpec& q,
                             const FitOptions& base, const std::vector<GridPoint>& grid,
                             const SelectionMode& mode, const TagSupport* tags = nullptr);

struct HoldoutSplit {
  BoolMatrix train;
  BoolMatrix test;
  double fraction;
};

/// Uniform split of the observed entries; |test| = round(fraction * |Omega|).
HoldoutSplit holdout_split(const ResponseMatrix& Y, double fraction, std::uint64_t seed);

/// Test masks of a uniform k-fold partition of the entries of `within`.
std::vector<BoolMatrix> kfold_masks(const BoolMatrix& within, int folds, std::uint64_t seed);

/// Copy of Y keeping only the entries in mask.
ResponseMatrix restrict_to(const ResponseMatrix& Y, const BoolMatrix& mask);

/// Entries of a mask in column-major order.
std::vector<Entry> mask_entries(const BoolMatrix& mask);

enum class PredictionRule { posterior_mean, map_label };

/// Sum_p p P(Y = p | z) per entry, or the most probable label.
Vector predict_scores(const FactorModel& model, const BinSet& bins,
                      const std::vector<Entry>& entries,
                      PredictionRule rule = PredictionRule::posterior_mean);

/// sqrt(mean((prediction - label)^2)) over entries; predictions[e] is for entries[e].
double rmse(const Vector& predictions, const ResponseMatrix& Y,
            const std::vector<Entry>& entries);

// ---------------------------------------------------------------------------
// Experiment reports.

struct TrialRecord {
  std::string variant;
  double setting = 0;  // swept value (N, Q or P); 0 when nothing is swept
  int trial = 0;
  std::uint64_t data_seed = 0;
  double lambda = 0;
  double eta = 0;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<double> objective_trace;
  std::string error;  // non-empty when the trial failed

  /// Throws std::out_of_range for an unknown metric name.
  double metric(const std::string& name) const;
};

struct SummaryRow {
  std::string variant;
  double setting;
  std::string metric;
  int count;
  double q1;
  double median;
  double q3;
};

struct ExperimentReport {
  std::string name;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<TrialRecord> records;
  std::vector<SummaryRow> summary;

  /// Throws std::out_of_range if the row is absent.
  const SummaryRow& row(const std::string& variant, double setting,
                        const std::string& metric) const;
};

/// Quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double prob);

/// Median and quartiles of every metric, grouped by (variant, setting), over
/// the successful trials.
std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& records);

enum class SweepAxis { learners, questions, labels };
enum class SolverVariant { known_tau, estimated_tau, tagged };

std::string to_string(SweepAxis axis);
std::string to_string(SolverVariant variant);

struct SweepConfig {
  SweepAxis axis = SweepAxis::learners;
  std::vector<Index> values{50, 100, 200};
  Index num_questions = 100;
  Index num_learners = 100;
  Index num_concepts = 5;
  int trials = 25;
  std::vector<SolverVariant> variants{SolverVariant::known_tau};
  GeneratorParams generator;  // for the labels axis the bins come from make_even_bins
  double obs_fraction = 1.0;
  std::vector<double> lambda_grid{2, 5, 10, 20, 50};
  /// Frobenius radius; <= 0 means sqrt(K N) (the expected norm of C).
  double eta = 0;
  FitOptions base;  // lambda, eta, precision and num_concepts are overridden
  std::uint64_t seed = 1;
};

/// Per trial: generate, fit each variant (lambda by BIC), align, measure.
/// The data seed depends on (seed, swept value, trial), so sweeps that share a
/// setting see the same data.
/// Metrics: e_w, e_c, e_mu, tau, w_min, c_norm, nnz_fraction, iterations,
/// converged.
ExperimentReport run_recovery_sweep(const SweepConfig& config);

enum class PredictionVariant { frobenius, nuclear, bins_shared, bins_per_question };

std::string to_string(PredictionVariant variant);

struct PredictionConfig {
  std::vector<PredictionVariant> variants{
      PredictionVariant::frobenius, PredictionVariant::nuclear,
      PredictionVariant::bins_shared, PredictionVariant::bins_per_question};
  double holdout_fraction = 0.2;
  int trials = 10;
  std::vector<double> lambda_grid{2, 5, 10};
  /// Frobenius radius; <= 0 means sqrt(K N). Nuclear fits use sqrt(K) times it.
  double eta = 0;
  SelectionMode selection = SelectionMode::by_bic();
  FitOptions base;
  std::uint64_t seed = 1;
};

/// Per trial: holdout split, hyperparameter selection on the training part,
/// fit, RMSE of the posterior-mean prediction on the test part. The
/// "baseline" variant predicts the mean training label.
ExperimentReport run_prediction_study(const ResponseMatrix& Y, const QuantizerSpec& q,
                                      const PredictionConfig& config);

}  // namespace ordfa
