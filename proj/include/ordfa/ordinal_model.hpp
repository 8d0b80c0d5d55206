#pragma once

// Ordinal probit observation model: quantizer, per-entry likelihood and the
// gradient pieces shared by the solvers.

#include <vector>

#include "ordfa/common.hpp"
#include "ordfa/normal.hpp"

namespace ordfa {

/// Lower clamp applied to probabilities returned by ordinal_likelihood.
inline constexpr double kLikelihoodFloor = 1e-12;

struct BoundsPair {
  double lower;
  double upper;
};

/// Strictly increasing bin edges w_0 < ... < w_P for labels 1..P.
class QuantizerSpec {
 public:
  explicit QuantizerSpec(std::vector<double> boundaries);

  /// Edges (-inf, interior..., +inf).
  static QuantizerSpec from_interior(const std::vector<double>& interior);

  int num_labels() const { return static_cast<int>(boundaries_.size()) - 1; }
  const std::vector<double>& boundaries() const { return boundaries_; }
  double boundary(int p) const { return boundaries_[static_cast<std::size_t>(p)]; }

  // Unchecked; label_bounds() is the validated form.
  BoundsPair bounds(int label) const {
    return {boundaries_[static_cast<std::size_t>(label - 1)],
            boundaries_[static_cast<std::size_t>(label)]};
  }

  friend bool operator==(const QuantizerSpec&, const QuantizerSpec&) = default;

 private:
  std::vector<double> boundaries_;
};

/// Either one quantizer shared by all questions or one per question.
class BinSet {
 public:
  BinSet(QuantizerSpec shared);  // NOLINT: implicit by intent
  explicit BinSet(std::vector<QuantizerSpec> per_question);

  bool per_question() const { return per_question_; }
  int num_labels() const { return specs_.front().num_labels(); }
  const QuantizerSpec& for_question(Index i) const {
    return per_question_ ? specs_[static_cast<std::size_t>(i)] : specs_.front();
  }
  const std::vector<QuantizerSpec>& specs() const { return specs_; }
  std::vector<QuantizerSpec>& specs() { return specs_; }

  /// Number of free interior edges (what a bin-learning fit estimates).
  Index num_interior() const;

 private:
  std::vector<QuantizerSpec> specs_;
  bool per_question_ = false;
};

struct Entry {
  Index question;
  Index learner;
  friend bool operator==(const Entry&, const Entry&) = default;
};

/// Q x N ordinal labels; 0 marks an unobserved entry.
class ResponseMatrix {
 public:
  ResponseMatrix() = default;
  ResponseMatrix(Index num_questions, Index num_learners);
  explicit ResponseMatrix(LabelMatrix labels);

  Index num_questions() const { return labels_.rows(); }
  Index num_learners() const { return labels_.cols(); }
  bool observed(Index i, Index j) const { return labels_(i, j) > 0; }
  int label(Index i, Index j) const { return labels_(i, j); }
  const LabelMatrix& labels() const { return labels_; }

  void set(Index i, Index j, int label);
  void clear(Index i, Index j) { labels_(i, j) = 0; }

  Index num_observed() const { return (labels_.array() > 0).count(); }
  int max_label() const { return labels_.size() ? labels_.maxCoeff() : 0; }
  BoolMatrix mask() const { return labels_.array() > 0; }

  /// Observed entries in column-major order.
  std::vector<Entry> entries() const;

  /// Throws unless every observed label lies in 1..num_labels.
  void check_labels(int num_labels) const;

  friend bool operator==(const ResponseMatrix& a, const ResponseMatrix& b) {
    return a.labels_.rows() == b.labels_.rows() && a.labels_.cols() == b.labels_.cols() &&
           a.labels_ == b.labels_;
  }

 private:
  LabelMatrix labels_;
};

/// Fitted or ground-truth factors. Z = W C + mu 1^T.
struct FactorModel {
  Matrix W;   // Q x K, non-negative
  Vector mu;  // Q
  Matrix C;   // K x N
  double tau = 1.0;

  Index num_questions() const { return W.rows(); }
  Index num_concepts() const { return W.cols(); }
  Index num_learners() const { return C.cols(); }

  /// Throws std::invalid_argument on inconsistent shapes.
  void check_shapes() const;

  double slack(Index i, Index j) const { return W.row(i).dot(C.col(j)) + mu(i); }
};

int quantize(double x, const QuantizerSpec& q);
BoundsPair label_bounds(int y, const QuantizerSpec& q);

/// P(Y = y | z) = Phi(tau (U - z)) - Phi(tau (L - z)), floored at `floor`.
double ordinal_likelihood(double z, int y, double tau, const QuantizerSpec& q,
                          double floor = kLikelihoodFloor);

/// (phi(tau (L - z)) - phi(tau (U - z))) / (Phi(tau (U - z)) - Phi(tau (L - z))),
/// which equals d log P(Y = y | z) / dz divided by tau.
double likelihood_ratio_term(double z, int y, double tau, const QuantizerSpec& q);

/// Log-likelihood and hazards of one observation at slack z.
inline NormalInterval<double> observation_terms(double z, double lower, double upper,
                                                double tau) {
  return normal_interval(tau * (lower - z), tau * (upper - z));
}

/// -sum over observed entries of log P(Y_ij | z_ij).
double negative_log_likelihood(const FactorModel& model, const ResponseMatrix& Y,
                               const BinSet& bins);

/// Gradient of the row-i negative log-likelihood with respect to w_i:
/// -tau * sum_j p_j c_j over observed j, p_j = likelihood_ratio_term.
/// `labels` holds the row of Y (0 = unobserved).
Vector gradient_row(const Vector& w, double mu, const Matrix& C,
                    const Eigen::Ref<const Eigen::RowVectorXi>& labels, double tau,
                    const QuantizerSpec& q);

}  // namespace ordfa
