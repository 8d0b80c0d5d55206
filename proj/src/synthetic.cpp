#include "ordfa/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace ordfa {

namespace {

// Hungarian method on a square cost matrix; returns assignment row -> column
// of minimum total cost.
std::vector<Index> min_cost_assignment(const Matrix& cost) {
  const Index n = cost.rows();
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; p[j] is the row assigned to column j.
  std::vector<double> u(n + 1, 0), v(n + 1, 0);
  std::vector<Index> p(n + 1, 0), way(n + 1, 0);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const Index i0 = p[j0];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<Index> assignment(n);
  for (Index j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

}  // namespace

QuantizerSpec default_bins() {
  return QuantizerSpec::from_interior({-2.1, -0.64, 0.64, 2.1});
}

QuantizerSpec make_even_bins(int num_labels) {
  if (num_labels < 2) throw std::invalid_argument("make_even_bins: need P >= 2");
  std::vector<double> interior;
  for (int p = 1; p < num_labels; ++p)
    interior.push_back(normal_quantile(static_cast<double>(p) / num_labels));
  return QuantizerSpec::from_interior(interior);
}

GroundTruth generate_ground_truth(Index num_questions, Index num_learners, Index num_concepts,
                                  const GeneratorParams& params, std::uint64_t seed) {
  const Index Q = num_questions, N = num_learners, K = num_concepts;
  if (Q < 1 || N < 1 || K < 1) throw std::invalid_argument("generate_ground_truth: empty size");
  if (!(params.v_mu > 0)) throw std::invalid_argument("generate_ground_truth: v_mu must be > 0");
  if (!(params.lambda_k > 0))
    throw std::invalid_argument("generate_ground_truth: lambda_k must be > 0");
  if (!(params.tau > 0)) throw std::invalid_argument("generate_ground_truth: tau must be > 0");
  if (params.max_support < 1)
    throw std::invalid_argument("generate_ground_truth: max_support must be >= 1");
  if (params.c_rank < 0 || params.c_rank > K)
    throw std::invalid_argument("generate_ground_truth: c_rank must lie in 0..K");

  Matrix chol = Matrix::Identity(K, K);
  if (params.V0.size()) {
    if (params.V0.rows() != K || params.V0.cols() != K)
      throw std::invalid_argument("generate_ground_truth: V0 must be K x K");
    Eigen::LLT<Matrix> llt(params.V0);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("generate_ground_truth: V0 is not positive definite");
    chol = llt.matrixL();
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::exponential_distribution<double> magnitude(params.lambda_k);
  const int max_support = static_cast<int>(std::min<Index>(params.max_support, K));
  std::uniform_int_distribution<int> support_size(1, max_support);

  GroundTruth gt{Matrix::Zero(Q, K), Matrix(K, N), Vector(Q), params.tau,
                 params.bins.value_or(default_bins())};

  std::vector<Index> concepts(static_cast<std::size_t>(K));
  for (Index i = 0; i < Q; ++i) {
    std::iota(concepts.begin(), concepts.end(), Index{0});
    const int s = support_size(rng);
    // Partial Fisher-Yates: the first s positions are a uniform subset.
    for (int a = 0; a < s; ++a) {
      std::uniform_int_distribution<Index> pick(a, K - 1);
      std::swap(concepts[static_cast<std::size_t>(a)],
                concepts[static_cast<std::size_t>(pick(rng))]);
    }
    for (int a = 0; a < s; ++a) gt.W(i, concepts[static_cast<std::size_t>(a)]) = magnitude(rng);
  }

  const double sd_mu = std::sqrt(params.v_mu);
  for (Index i = 0; i < Q; ++i) gt.mu(i) = params.mu0 + sd_mu * normal(rng);

  if (params.c_rank > 0) {
    const Index r = params.c_rank;
    Matrix A(K, r), B(r, N);
    for (Index a = 0; a < r; ++a)
      for (Index k = 0; k < K; ++k) A(k, a) = normal(rng) / std::sqrt(static_cast<double>(r));
    for (Index j = 0; j < N; ++j)
      for (Index a = 0; a < r; ++a) B(a, j) = normal(rng);
    gt.C = chol * A * B;
  } else {
    Matrix G(K, N);
    for (Index j = 0; j < N; ++j)
      for (Index k = 0; k < K; ++k) G(k, j) = normal(rng);
    gt.C = chol * G;
  }
  return gt;
}

ResponseMatrix generate_responses(const GroundTruth& truth, double obs_fraction,
                                  std::uint64_t seed, bool noiseless) {
  if (!(obs_fraction > 0 && obs_fraction <= 1))
    throw std::invalid_argument("generate_responses: obs_fraction must lie in (0, 1]");
  const Matrix Z = (truth.W * truth.C).colwise() + truth.mu;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution keep(obs_fraction);
  const double sd = 1.0 / truth.tau;
  ResponseMatrix Y(Z.rows(), Z.cols());
  for (Index j = 0; j < Z.cols(); ++j) {
    for (Index i = 0; i < Z.rows(); ++i) {
      // Draw both variates for every entry so the noise does not depend on the mask.
      const double e = normal(rng);
      const bool observed = obs_fraction >= 1 || keep(rng);
      if (!observed) continue;
      Y.set(i, j, quantize(noiseless ? Z(i, j) : Z(i, j) + sd * e, truth.bins));
    }
  }
  return Y;
}

std::vector<Index> match_columns(const Matrix& W_est, const Matrix& W_true) {
  if (W_est.rows() != W_true.rows() || W_est.cols() != W_true.cols())
    throw std::invalid_argument("match_columns: shapes differ");
  const Index K = W_true.cols();
  Matrix cost(K, K);  // rows: true concepts, cols: estimated concepts
  for (Index k = 0; k < K; ++k) {
    for (Index l = 0; l < K; ++l) {
      const double denom = W_true.col(k).norm() * W_est.col(l).norm();
      cost(k, l) = denom > 0 ? -W_true.col(k).dot(W_est.col(l)) / denom : 0.0;
    }
  }
  return min_cost_assignment(cost);
}

FactorModel align_factors(const FactorModel& est, const GroundTruth& truth) {
  est.check_shapes();
  if (est.num_concepts() != truth.W.cols())
    throw std::invalid_argument("align_factors: concept counts differ");
  if (est.num_questions() != truth.W.rows() || est.num_learners() != truth.C.cols())
    throw std::invalid_argument("align_factors: sizes differ");
  const auto perm = match_columns(est.W, truth.W);
  FactorModel out = est;
  for (Index k = 0; k < est.num_concepts(); ++k) {
    const Index l = perm[static_cast<std::size_t>(k)];
    const double sq = est.W.col(l).squaredNorm();
    const double s = sq > 0 ? est.W.col(l).dot(truth.W.col(k)) / sq : 0.0;
    const double scale = s > 0 ? s : 1.0;
    out.W.col(k) = scale * est.W.col(l);
    out.C.row(k) = est.C.row(l) / scale;
  }
  return out;
}

RecoveryErrors recovery_errors(const FactorModel& aligned, const GroundTruth& truth) {
  if (aligned.W.rows() != truth.W.rows() || aligned.W.cols() != truth.W.cols() ||
      aligned.C.rows() != truth.C.rows() || aligned.C.cols() != truth.C.cols() ||
      aligned.mu.size() != truth.mu.size())
    throw std::invalid_argument("recovery_errors: shapes differ");
  const double w = truth.W.squaredNorm();
  const double c = truth.C.squaredNorm();
  const double m = truth.mu.squaredNorm();
  if (w == 0 || c == 0 || m == 0)
    throw std::invalid_argument("recovery_errors: ground truth has zero norm");
  return {(truth.W - aligned.W).squaredNorm() / w, (truth.C - aligned.C).squaredNorm() / c,
          (truth.mu - aligned.mu).squaredNorm() / m};
}

std::vector<std::pair<Index, Index>> support_pairs(const Matrix& W) {
  std::vector<std::pair<Index, Index>> pairs;
  for (Index i = 0; i < W.rows(); ++i)
    for (Index k = 0; k < W.cols(); ++k)
      if (W(i, k) != 0) pairs.emplace_back(i, k);
  return pairs;
}

}  // namespace ordfa
