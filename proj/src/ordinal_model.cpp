#include "ordfa/ordinal_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ordfa {

QuantizerSpec::QuantizerSpec(std::vector<double> boundaries)
    : boundaries_(std::move(boundaries)) {
  if (boundaries_.size() < 3)
    throw std::invalid_argument("QuantizerSpec: need at least 3 boundaries (P >= 2)");
  for (std::size_t p = 0; p < boundaries_.size(); ++p) {
    if (std::isnan(boundaries_[p]))
      throw std::invalid_argument("QuantizerSpec: NaN boundary");
    if (p > 0 && !(boundaries_[p - 1] < boundaries_[p]))
      throw std::invalid_argument("QuantizerSpec: boundaries must be strictly increasing");
  }
}

QuantizerSpec QuantizerSpec::from_interior(const std::vector<double>& interior) {
  std::vector<double> edges;
  edges.reserve(interior.size() + 2);
  edges.push_back(-std::numeric_limits<double>::infinity());
  edges.insert(edges.end(), interior.begin(), interior.end());
  edges.push_back(std::numeric_limits<double>::infinity());
  return QuantizerSpec(std::move(edges));
}

BinSet::BinSet(QuantizerSpec shared) : specs_{std::move(shared)} {}

BinSet::BinSet(std::vector<QuantizerSpec> per_question)
    : specs_(std::move(per_question)), per_question_(true) {
  if (specs_.empty()) throw std::invalid_argument("BinSet: no quantizers");
  for (const auto& s : specs_)
    if (s.num_labels() != specs_.front().num_labels())
      throw std::invalid_argument("BinSet: per-question quantizers differ in label count");
}

Index BinSet::num_interior() const {
  return static_cast<Index>(specs_.size()) * (num_labels() - 1);
}

ResponseMatrix::ResponseMatrix(Index num_questions, Index num_learners)
    : labels_(LabelMatrix::Zero(num_questions, num_learners)) {}

ResponseMatrix::ResponseMatrix(LabelMatrix labels) : labels_(std::move(labels)) {
  if (labels_.size() && labels_.minCoeff() < 0)
    throw std::invalid_argument("ResponseMatrix: negative label");
}

void ResponseMatrix::set(Index i, Index j, int label) {
  if (label < 1) throw std::invalid_argument("ResponseMatrix: labels start at 1");
  labels_(i, j) = label;
}

std::vector<Entry> ResponseMatrix::entries() const {
  std::vector<Entry> out;
  out.reserve(static_cast<std::size_t>(num_observed()));
  for (Index j = 0; j < labels_.cols(); ++j)
    for (Index i = 0; i < labels_.rows(); ++i)
      if (labels_(i, j) > 0) out.push_back({i, j});
  return out;
}

void ResponseMatrix::check_labels(int num_labels) const {
  if (labels_.size() && labels_.maxCoeff() > num_labels)
    throw std::invalid_argument("ResponseMatrix: label " +
                                std::to_string(labels_.maxCoeff()) +
                                " exceeds the quantizer's " + std::to_string(num_labels) +
                                " labels");
}

void FactorModel::check_shapes() const {
  if (mu.size() != W.rows() || C.rows() != W.cols())
    throw std::invalid_argument("FactorModel: inconsistent factor shapes");
}

int quantize(double x, const QuantizerSpec& q) {
  const auto& b = q.boundaries();
  if (std::isnan(x) || x <= b.front() || x > b.back())
    throw std::domain_error("quantize: value outside the quantizer domain");
  // First edge >= x is w_p with w_{p-1} < x <= w_p.
  const auto it = std::lower_bound(b.begin() + 1, b.end(), x);
  return static_cast<int>(it - b.begin());
}

BoundsPair label_bounds(int y, const QuantizerSpec& q) {
  if (y < 1 || y > q.num_labels())
    throw std::out_of_range("label_bounds: label " + std::to_string(y) + " not in 1.." +
                            std::to_string(q.num_labels()));
  return q.bounds(y);
}

double ordinal_likelihood(double z, int y, double tau, const QuantizerSpec& q,
                          double floor) {
  if (!(tau > 0)) throw std::invalid_argument("ordinal_likelihood: tau must be positive");
  const auto [lower, upper] = label_bounds(y, q);
  return std::max(std::exp(observation_terms(z, lower, upper, tau).log_prob), floor);
}

double likelihood_ratio_term(double z, int y, double tau, const QuantizerSpec& q) {
  if (!(tau > 0)) throw std::invalid_argument("likelihood_ratio_term: tau must be positive");
  const auto [lower, upper] = label_bounds(y, q);
  return observation_terms(z, lower, upper, tau).score();
}

double negative_log_likelihood(const FactorModel& model, const ResponseMatrix& Y,
                               const BinSet& bins) {
  model.check_shapes();
  if (model.num_questions() != Y.num_questions() || model.num_learners() != Y.num_learners())
    throw std::invalid_argument("negative_log_likelihood: model and data sizes differ");
  if (bins.per_question() && static_cast<Index>(bins.specs().size()) != Y.num_questions())
    throw std::invalid_argument("negative_log_likelihood: one quantizer per question required");
  double nll = 0;
  for (Index j = 0; j < Y.num_learners(); ++j) {
    for (Index i = 0; i < Y.num_questions(); ++i) {
      if (!Y.observed(i, j)) continue;
      const auto [lower, upper] = label_bounds(Y.label(i, j), bins.for_question(i));
      nll -= observation_terms(model.slack(i, j), lower, upper, model.tau).log_prob;
    }
  }
  return nll;
}

Vector gradient_row(const Vector& w, double mu, const Matrix& C,
                    const Eigen::Ref<const Eigen::RowVectorXi>& labels, double tau,
                    const QuantizerSpec& q) {
  if (w.size() != C.rows() || labels.size() != C.cols())
    throw std::invalid_argument("gradient_row: dimension mismatch");
  if (!(tau > 0)) throw std::invalid_argument("gradient_row: tau must be positive");
  Vector grad = Vector::Zero(w.size());
  for (Index j = 0; j < C.cols(); ++j) {
    if (labels(j) <= 0) continue;
    const auto [lower, upper] = label_bounds(labels(j), q);
    const double z = C.col(j).dot(w) + mu;
    grad -= tau * observation_terms(z, lower, upper, tau).score() * C.col(j);
  }
  return grad;
}

}  // namespace ordfa
