#include "ordfa/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "ordfa/prox.hpp"

namespace ordfa {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMinLogTau = -9.210340371976184;  // log(1e-4)
constexpr double kMaxLogTau = 9.210340371976184;   // log(1e4)

// ---------------------------------------------------------------------------
// Observed entries, flattened with the bin edges of their labels.

struct Observations {
  std::vector<Index> row;
  std::vector<Index> col;
  std::vector<int> label;
  Vector lower;
  Vector upper;

  std::size_t size() const { return row.size(); }
};

Observations gather(const ResponseMatrix& Y, const BinSet& bins) {
  Observations obs;
  const auto entries = Y.entries();
  const auto n = static_cast<Index>(entries.size());
  obs.row.reserve(entries.size());
  obs.col.reserve(entries.size());
  obs.label.reserve(entries.size());
  obs.lower.resize(n);
  obs.upper.resize(n);
  for (Index e = 0; e < n; ++e) {
    const auto [i, j] = entries[static_cast<std::size_t>(e)];
    const int y = Y.label(i, j);
    const auto b = label_bounds(y, bins.for_question(i));
    obs.row.push_back(i);
    obs.col.push_back(j);
    obs.label.push_back(y);
    obs.lower(e) = b.lower;
    obs.upper(e) = b.upper;
  }
  return obs;
}

struct RowData {
  std::vector<Index> cols;
  Vector lower;
  Vector upper;
};

RowData gather_row(const Eigen::Ref<const Eigen::RowVectorXi>& labels, const QuantizerSpec& q) {
  RowData row;
  for (Index j = 0; j < labels.size(); ++j)
    if (labels(j) > 0) row.cols.push_back(j);
  const auto n = static_cast<Index>(row.cols.size());
  row.lower.resize(n);
  row.upper.resize(n);
  for (Index e = 0; e < n; ++e) {
    const auto b = label_bounds(labels(row.cols[static_cast<std::size_t>(e)]), q);
    row.lower(e) = b.lower;
    row.upper(e) = b.upper;
  }
  return row;
}

// Slack values z_e = w_i^T c_j + mu_i for every observed entry.
Vector observed_slack(const FactorModel& m, const Observations& obs) {
  const Matrix Z = m.W * m.C;
  Vector z(static_cast<Index>(obs.size()));
  for (std::size_t e = 0; e < obs.size(); ++e)
    z(static_cast<Index>(e)) = Z(obs.row[e], obs.col[e]) + m.mu(obs.row[e]);
  return z;
}

double nll_at(const Vector& z, const Vector& lower, const Vector& upper, double tau) {
  double nll = 0;
  for (Index e = 0; e < z.size(); ++e)
    nll -= observation_terms(z(e), lower(e), upper(e), tau).log_prob;
  return nll;
}

double penalty_value(const Matrix& W, double lambda, double gamma, const BoolMatrix* tagged) {
  if (!tagged) return lambda * W.sum();
  double l1 = 0;
  double ridge = 0;
  for (Index k = 0; k < W.cols(); ++k)
    for (Index i = 0; i < W.rows(); ++i) {
      if ((*tagged)(i, k))
        ridge += W(i, k) * W(i, k);
      else
        l1 += W(i, k);
    }
  return lambda * l1 + 0.5 * gamma * ridge;
}

void check_finite(double value, const char* where) {
  if (!std::isfinite(value))
    throw NumericalError(std::string(where) + ": objective is not finite");
}

// ---------------------------------------------------------------------------
// FISTA with constant step. An iterate that raises the objective is rejected
// and the momentum restarted, so the returned point is the best one visited.

template <typename Point>
struct FistaResult {
  Point x;
  double objective;
  int iterations;
};

template <class Problem, typename Point>
FistaResult<Point> fista(const Problem& problem, Point x, double step, const InnerOptions& opts) {
  double fx = problem.smooth(x) + problem.penalty(x);
  check_finite(fx, "fista");
  Point y = x;
  Point grad;
  double t = 1;
  bool plain_step = true;  // y == x
  int it = 0;
  while (it < opts.max_iters) {
    ++it;
    problem.smooth_gradient(y, grad);
    Point candidate = problem.prox(y - step * grad, step);
    const double fc = problem.smooth(candidate) + problem.penalty(candidate);
    if (!(fc <= fx)) {
      if (std::isnan(fc)) throw NumericalError("fista: objective is NaN");
      if (plain_step) break;  // no descent from x itself: stationary to rounding
      y = x;
      t = 1;
      plain_step = true;
      continue;
    }
    const double t_next = 0.5 * (1 + std::sqrt(1 + 4 * t * t));
    y = candidate + ((t - 1) / t_next) * (candidate - x);
    plain_step = (t - 1) == 0;
    const double change = fx - fc;
    x = std::move(candidate);
    fx = fc;
    t = t_next;
    if (change <= opts.rel_tol * std::max(1.0, std::abs(fx))) break;
  }
  return {std::move(x), fx, it};
}

// One row of (OR-W): x = [w; mu], design = [c_j; 1] over observed j.
class RowProblem {
 public:
  RowProblem(Matrix design, const Vector& lower, const Vector& upper, double tau,
             const RowPenalty& penalty)
      : design_(std::move(design)), lower_(lower), upper_(upper), tau_(tau), pen_(penalty) {}

  Index num_concepts() const { return design_.rows() - 1; }
  const Matrix& design() const { return design_; }

  double smooth(const Vector& x) const {
    return nll_at(design_.transpose() * x, lower_, upper_, tau_);
  }

  void smooth_gradient(const Vector& x, Vector& grad) const {
    const Vector z = design_.transpose() * x;
    Vector score(z.size());
    for (Index e = 0; e < z.size(); ++e)
      score(e) = observation_terms(z(e), lower_(e), upper_(e), tau_).score();
    grad = -tau_ * (design_ * score);
  }

  double penalty(const Vector& x) const {
    const auto w = x.head(num_concepts());
    if (pen_.tagged.size() == 0) return pen_.lambda * w.sum();
    double l1 = 0;
    double ridge = 0;
    for (Index k = 0; k < w.size(); ++k) {
      if (pen_.tagged(k))
        ridge += w(k) * w(k);
      else
        l1 += w(k);
    }
    return pen_.lambda * l1 + 0.5 * pen_.gamma * ridge;
  }

  Vector prox(const Vector& v, double step) const {
    const Index K = num_concepts();
    Vector out(v.size());
    if (pen_.tagged.size() == 0) {
      out.head(K) = shrink_nonneg(v.head(K), pen_.lambda * step);
    } else {
      out.head(K) = pen_.tagged.select(shrink_tag_ridge(v.head(K), pen_.gamma, step),
                                       shrink_nonneg(v.head(K), pen_.lambda * step));
    }
    out(K) = v(K);
    return out;
  }

  double step() const { return lipschitz_step(tau_, design_); }

 private:
  Matrix design_;
  const Vector& lower_;
  const Vector& upper_;
  double tau_;
  const RowPenalty& pen_;
};

Matrix row_design(const Matrix& C, const std::vector<Index>& cols) {
  Matrix X(C.rows() + 1, static_cast<Index>(cols.size()));
  for (std::size_t e = 0; e < cols.size(); ++e) {
    X.col(static_cast<Index>(e)).head(C.rows()) = C.col(cols[e]);
    X(C.rows(), static_cast<Index>(e)) = 1.0;
  }
  return X;
}

RowSolution solve_row(const RowData& row, const Matrix& C, double tau, const Vector& w_init,
                      double mu_init, const RowPenalty& penalty, const InnerOptions& opts) {
  const Index K = C.rows();
  RowProblem problem(row_design(C, row.cols), row.lower, row.upper, tau, penalty);
  Vector x(K + 1);
  x.head(K) = w_init;
  x(K) = mu_init;
  auto r = fista(problem, std::move(x), problem.step(), opts);
  return {r.x.head(K), r.x(K), r.objective, r.iterations};
}

// (OR-C): the slack is linear in C through W.
class ColumnBlockProblem {
 public:
  ColumnBlockProblem(const Matrix& W, const Vector& mu, double tau, const Observations& obs,
                     NormConstraint norm, double eta)
      : W_(W), mu_(mu), tau_(tau), obs_(obs), norm_(norm), eta_(eta) {}

  double smooth(const Matrix& C) const {
    const Matrix Z = W_ * C;
    double nll = 0;
    for (std::size_t e = 0; e < obs_.size(); ++e) {
      const auto i = obs_.row[e];
      const auto ee = static_cast<Index>(e);
      nll -= observation_terms(Z(i, obs_.col[e]) + mu_(i), obs_.lower(ee), obs_.upper(ee), tau_)
                 .log_prob;
    }
    return nll;
  }

  void smooth_gradient(const Matrix& C, Matrix& grad) const {
    const Matrix Z = W_ * C;
    Matrix score = Matrix::Zero(Z.rows(), Z.cols());
    for (std::size_t e = 0; e < obs_.size(); ++e) {
      const auto i = obs_.row[e];
      const auto j = obs_.col[e];
      const auto ee = static_cast<Index>(e);
      score(i, j) =
          observation_terms(Z(i, j) + mu_(i), obs_.lower(ee), obs_.upper(ee), tau_).score();
    }
    grad = -tau_ * (W_.transpose() * score);
  }

  double penalty(const Matrix&) const { return 0; }

  Matrix prox(const Matrix& V, double) const { return project(V); }

  Matrix project(const Matrix& V) const {
    return norm_ == NormConstraint::frobenius ? project_frobenius(V, eta_)
                                              : project_nuclear(V, eta_);
  }

 private:
  const Matrix& W_;
  const Vector& mu_;
  double tau_;
  const Observations& obs_;
  NormConstraint norm_;
  double eta_;
};

BlockSolution solve_columns(const Observations& obs, const Matrix& W, const Vector& mu,
                            double tau, const Matrix& C_init, NormConstraint norm, double eta,
                            const InnerOptions& opts) {
  ColumnBlockProblem problem(W, mu, tau, obs, norm, eta);
  Matrix start = problem.project(C_init);
  if (W.isZero(0)) {
    // The likelihood does not depend on C.
    const double value = problem.smooth(start);
    return {std::move(start), value, 0};
  }
  auto r = fista(problem, std::move(start), lipschitz_step(tau, W), opts);
  return {std::move(r.x), r.objective, r.iterations};
}

// ---------------------------------------------------------------------------
// Safeguarded secant search for a stationary point of a unimodal function on
// [lo, hi]. f(x) returns {value, derivative}. Phase one steps downhill with
// secant-extrapolated step lengths until the derivative changes sign; phase
// two runs the Illinois variant of the secant (regula falsi) iteration inside
// the bracket. The best point seen is returned.

struct ScalarSearch {
  double x;
  double value;
  bool converged;
  int iterations;
};

template <class F>
ScalarSearch secant_minimize(F&& f, double x0, double lo, double hi, const SecantOptions& opts) {
  auto [v0, g0] = f(x0);
  ScalarSearch best{x0, v0, false, 0};
  auto consider = [&](double x, double v) {
    if (v < best.value) {
      best.x = x;
      best.value = v;
    }
  };
  if (std::abs(g0) <= opts.tol) {
    best.converged = true;
    return best;
  }

  int iters = 0;
  const double dir = g0 > 0 ? -1.0 : 1.0;
  double xa = x0, ga = g0;
  double xb = x0, gb = g0;
  double step = opts.initial_step;
  bool bracketed = false;
  while (iters < opts.max_iters) {
    xb = std::clamp(xa + dir * step, lo, hi);
    if (xb == xa) {  // pinned at a bound with the derivative pointing outward
      best.converged = true;
      best.iterations = iters;
      return best;
    }
    const auto [vb, g] = f(xb);
    ++iters;
    gb = g;
    consider(xb, vb);
    if (std::abs(gb) <= opts.tol) {
      best.converged = true;
      best.iterations = iters;
      return best;
    }
    if ((gb > 0) != (ga > 0)) {
      bracketed = true;
      break;
    }
    if (xb == lo || xb == hi) {
      best.converged = true;
      best.iterations = iters;
      return best;
    }
    const double secant = xb - gb * (xb - xa) / (gb - ga);
    const double ahead = (secant - xb) * dir;
    step = ahead > 0 ? std::clamp(ahead, step, 4 * step) : 2 * step;
    xa = xb;
    ga = gb;
  }

  if (bracketed) {
    double a = xa, fa = ga, b = xb, fb = gb;
    int retained = 0;  // -1: a kept last time, +1: b kept last time
    while (iters < opts.max_iters) {
      double x = (a * fb - b * fa) / (fb - fa);
      if (!(x > std::min(a, b) && x < std::max(a, b))) x = 0.5 * (a + b);
      const auto [v, g] = f(x);
      ++iters;
      consider(x, v);
      if (std::abs(g) <= opts.tol || std::abs(b - a) <= 1e-13 * (1 + std::abs(x))) {
        best.converged = true;
        break;
      }
      if ((g > 0) == (fb > 0)) {
        b = x;
        fb = g;
        if (retained == -1) fa *= 0.5;
        retained = -1;
      } else {
        a = x;
        fa = g;
        if (retained == 1) fb *= 0.5;
        retained = 1;
      }
    }
  }
  best.iterations = iters;
  return best;
}

PrecisionEstimate precision_search(const Vector& z, const Vector& lower, const Vector& upper,
                                   double tau_init, const SecantOptions& opts) {
  auto f = [&](double s) {
    const double tau = std::exp(s);
    double value = 0;
    double deriv = 0;
    for (Index e = 0; e < z.size(); ++e) {
      const double al = tau * (lower(e) - z(e));
      const double au = tau * (upper(e) - z(e));
      const auto t = normal_interval(al, au);
      value -= t.log_prob;
      deriv += weighted_hazard(al, t.hazard_lower) - weighted_hazard(au, t.hazard_upper);
    }
    return std::pair{value, deriv};
  };
  const double s0 = std::clamp(std::log(tau_init), kMinLogTau, kMaxLogTau);
  const auto r = secant_minimize(f, s0, kMinLogTau, kMaxLogTau, opts);
  return {std::exp(r.x), r.value, r.converged, r.iterations};
}

// Entries feeding one quantizer: their slack values and labels.
struct LabeledSlack {
  std::vector<double> z;
  std::vector<int> label;
};

// Cyclic edge updates for one quantizer.
QuantizerSpec optimize_edges(const QuantizerSpec& q, const LabeledSlack& data, double tau,
                             int sweeps, const SecantOptions& opts,
                             std::vector<std::string>& warnings) {
  std::vector<double> edges = q.boundaries();
  const int P = q.num_labels();
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double moved = 0;
    for (int p = 1; p < P; ++p) {
      std::vector<std::size_t> below, above;  // labels p and p + 1
      for (std::size_t e = 0; e < data.z.size(); ++e) {
        if (data.label[e] == p) below.push_back(e);
        if (data.label[e] == p + 1) above.push_back(e);
      }
      if (below.empty() && above.empty()) continue;
      const double lo = edges[p - 1] + kMinBinGap;
      const double hi = edges[p + 1] - kMinBinGap;
      if (!(lo <= hi)) continue;
      double start = edges[p];
      if (start < lo || start > hi) {
        warnings.push_back("optimize_bins: edge " + std::to_string(p) +
                           " clamped to keep the bins ordered");
        start = std::clamp(start, lo, hi);
      }
      const double w_lo = edges[p - 1];
      const double w_hi = edges[p + 1];
      auto f = [&](double w) {
        double value = 0;
        double deriv = 0;
        for (auto e : below) {
          const auto t = normal_interval(tau * (w_lo - data.z[e]), tau * (w - data.z[e]));
          value -= t.log_prob;
          deriv -= tau * t.hazard_upper;
        }
        for (auto e : above) {
          const auto t = normal_interval(tau * (w - data.z[e]), tau * (w_hi - data.z[e]));
          value -= t.log_prob;
          deriv += tau * t.hazard_lower;
        }
        return std::pair{value, deriv};
      };
      const auto r = secant_minimize(f, start, lo, hi, opts);
      moved = std::max(moved, std::abs(r.x - edges[p]));
      edges[p] = r.x;
    }
    if (moved < 1e-10) break;
  }
  return QuantizerSpec(std::move(edges));
}

// ---------------------------------------------------------------------------

struct FitState {
  FactorModel model;
  BinSet bins;
};

double state_objective(const FactorModel& m, const Observations& obs, const FitOptions& opts,
                       const BoolMatrix* tagged) {
  return nll_at(observed_slack(m, obs), obs.lower, obs.upper, m.tau) +
         penalty_value(m.W, opts.lambda, opts.gamma_ridge, tagged);
}

RowPenalty row_penalty(const FitOptions& opts, const BoolMatrix* tagged, Index i) {
  RowPenalty pen{opts.lambda, opts.gamma_ridge, {}};
  if (tagged) pen.tagged = tagged->row(i).transpose();
  return pen;
}

FitResult fit_impl(const ResponseMatrix& Y, const QuantizerSpec& q, const TagSupport* tags,
                   const FitOptions& opts) {
  opts.validate();
  const Index Q = Y.num_questions();
  const Index N = Y.num_learners();
  const Index K = opts.num_concepts;
  if (Q == 0 || N == 0 || Y.num_observed() == 0)
    throw std::invalid_argument("fit: no observed responses");
  Y.check_labels(q.num_labels());

  FitTrace trace;
  BoolMatrix tag_mask;
  if (tags) {
    if (tags->num_concepts() != K)
      throw std::invalid_argument("fit_tagged: tag count differs from the number of concepts");
    tag_mask = tags->mask(Q);
    for (auto k : tags->unused_concepts())
      trace.warnings.push_back("concept " + std::to_string(k) + " has no tagged question");
  }
  const BoolMatrix* tagged = tags ? &tag_mask : nullptr;

  const auto kind = opts.precision.kind;
  BinSet bins = kind == PrecisionKind::learn_bins_per_question
                    ? BinSet(std::vector<QuantizerSpec>(static_cast<std::size_t>(Q), q))
                    : BinSet(q);

  // Initialization: |N(0,1)| for W (kept feasible), N(0,1) for mu and C.
  std::mt19937_64 rng(opts.rng_seed);
  std::normal_distribution<double> normal;
  FactorModel m;
  m.W.resize(Q, K);
  m.mu.resize(Q);
  m.C.resize(K, N);
  for (Index i = 0; i < Q; ++i)
    for (Index k = 0; k < K; ++k) {
      const double draw = std::abs(normal(rng));
      m.W(i, k) = (!tagged || (*tagged)(i, k)) ? draw : 0.0;
    }
  for (Index i = 0; i < Q; ++i) m.mu(i) = normal(rng);
  for (Index j = 0; j < N; ++j)
    for (Index k = 0; k < K; ++k) m.C(k, j) = normal(rng);
  m.C = opts.norm_constraint == NormConstraint::frobenius ? project_frobenius(m.C, opts.eta)
                                                          : project_nuclear(m.C, opts.eta);
  m.tau = kind == PrecisionKind::fixed_tau || kind == PrecisionKind::estimate_tau
              ? opts.precision.tau
              : 1.0;

  const BoolMatrix observed = Y.mask();
  for (Index i = 0; i < Q; ++i)
    if (!observed.row(i).any()) trace.excluded_questions.push_back(i);
  for (Index j = 0; j < N; ++j)
    if (!observed.col(j).any()) trace.excluded_learners.push_back(j);

  Observations obs = gather(Y, bins);
  auto gather_rows = [&] {
    std::vector<RowData> rows;
    rows.reserve(static_cast<std::size_t>(Q));
    for (Index i = 0; i < Q; ++i) rows.push_back(gather_row(Y.labels().row(i), bins.for_question(i)));
    return rows;
  };
  std::vector<RowData> rows = gather_rows();

  double F = state_objective(m, obs, opts, tagged);
  check_finite(F, "fit");
  for (int outer = 0; outer < opts.max_outer_iters; ++outer) {
    const double F_start = F;

    // Phase 1: C with W, mu, tau fixed.
    {
      auto c = solve_columns(obs, m.W, m.mu, m.tau, m.C, opts.norm_constraint, opts.eta,
                             opts.inner);
      FactorModel trial = m;
      trial.C = std::move(c.C);
      const double Ft = state_objective(trial, obs, opts, tagged);
      if (Ft <= F) {
        m = std::move(trial);
        F = Ft;
      }
    }

    // Phase 2: each row (w_i, mu_i) with C, tau fixed.
    {
      FactorModel trial = m;
      for (Index i = 0; i < Q; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        if (row.cols.empty()) continue;
        auto r = solve_row(row, m.C, m.tau, m.W.row(i).transpose(), m.mu(i),
                           row_penalty(opts, tagged, i), opts.inner);
        trial.W.row(i) = r.w.transpose();
        trial.mu(i) = r.mu;
      }
      const double Ft = state_objective(trial, obs, opts, tagged);
      if (Ft <= F) {
        m = std::move(trial);
        F = Ft;
      }
    }

    // Phase 3: precision or bin edges.
    if (kind == PrecisionKind::estimate_tau) {
      const Vector z = observed_slack(m, obs);
      const auto est = precision_search(z, obs.lower, obs.upper, m.tau, SecantOptions{});
      FactorModel trial = m;
      trial.tau = est.tau;
      const double Ft = state_objective(trial, obs, opts, tagged);
      if (Ft <= F) {
        m = std::move(trial);
        F = Ft;
      }
    } else if (opts.precision.learns_bins()) {
      auto est = optimize_bins(m, Y, bins,
                               kind == PrecisionKind::learn_bins_shared ? BinMode::shared
                                                                        : BinMode::per_question);
      const Observations trial_obs = gather(Y, est.bins);
      const double Ft = state_objective(m, trial_obs, opts, tagged);
      if (Ft <= F) {
        bins = std::move(est.bins);
        obs = trial_obs;
        rows = gather_rows();
        F = Ft;
      }
      for (auto& w : est.warnings) trace.warnings.push_back(std::move(w));
    }

    check_finite(F, "fit");
    trace.objective_per_outer_iter.push_back(F);
    trace.iterations_run = outer + 1;
    if (F_start - F <= opts.tol_objective * std::max(1.0, std::abs(F))) {
      trace.converged = true;
      break;
    }
  }
  return {std::move(m), std::move(bins), std::move(trace)};
}

}  // namespace

// ---------------------------------------------------------------------------

TagSupport::TagSupport(Index num_concepts, std::vector<std::pair<Index, Index>> pairs)
    : num_concepts_(num_concepts), pairs_(std::move(pairs)) {
  if (num_concepts_ < 1) throw std::invalid_argument("TagSupport: need at least one concept");
  std::set<std::pair<Index, Index>> seen;
  for (const auto& [i, k] : pairs_) {
    if (i < 0 || k < 0 || k >= num_concepts_)
      throw std::invalid_argument("TagSupport: index out of range");
    if (!seen.insert({i, k}).second)
      throw std::invalid_argument("TagSupport: duplicate (question, concept) pair");
  }
}

BoolMatrix TagSupport::mask(Index num_questions) const {
  BoolMatrix m = BoolMatrix::Constant(num_questions, num_concepts_, false);
  for (const auto& [i, k] : pairs_) {
    if (i >= num_questions)
      throw std::invalid_argument("TagSupport: question index beyond the response matrix");
    m(i, k) = true;
  }
  return m;
}

std::vector<Index> TagSupport::unused_concepts() const {
  std::vector<bool> used(static_cast<std::size_t>(num_concepts_), false);
  for (const auto& p : pairs_) used[static_cast<std::size_t>(p.second)] = true;
  std::vector<Index> out;
  for (Index k = 0; k < num_concepts_; ++k)
    if (!used[static_cast<std::size_t>(k)]) out.push_back(k);
  return out;
}

void FitOptions::validate() const {
  if (!(lambda >= 0)) throw std::invalid_argument("FitOptions: lambda must be >= 0");
  if (!(gamma_ridge >= 0)) throw std::invalid_argument("FitOptions: gamma must be >= 0");
  if (!(eta > 0)) throw std::invalid_argument("FitOptions: eta must be > 0");
  if (num_concepts < 1) throw std::invalid_argument("FitOptions: need at least one concept");
  if (max_outer_iters < 1 || inner.max_iters < 1)
    throw std::invalid_argument("FitOptions: iteration counts must be >= 1");
  if (!(tol_objective >= 0) || !(inner.rel_tol >= 0))
    throw std::invalid_argument("FitOptions: tolerances must be >= 0");
  if (!(precision.tau > 0)) throw std::invalid_argument("FitOptions: tau must be > 0");
}

RowSolution solve_or_w(const Eigen::Ref<const Eigen::RowVectorXi>& labels, const Matrix& C,
                       double tau, const QuantizerSpec& q, const Vector& w_init,
                       double mu_init, const RowPenalty& penalty, const InnerOptions& opts) {
  if (labels.size() != C.cols() || w_init.size() != C.rows())
    throw std::invalid_argument("solve_or_w: dimension mismatch");
  if (penalty.tagged.size() != 0 && penalty.tagged.size() != C.rows())
    throw std::invalid_argument("solve_or_w: tag mask size differs from K");
  if (!(tau > 0)) throw std::invalid_argument("solve_or_w: tau must be positive");
  if (w_init.size() && w_init.minCoeff() < 0)
    throw std::invalid_argument("solve_or_w: initial w must be non-negative");
  return solve_row(gather_row(labels, q), C, tau, w_init, mu_init, penalty, opts);
}

BlockSolution solve_or_c(const ResponseMatrix& Y, const Matrix& W, const Vector& mu,
                         double tau, const BinSet& bins, const Matrix& C_init,
                         NormConstraint norm, double eta, const InnerOptions& opts) {
  if (W.rows() != Y.num_questions() || mu.size() != Y.num_questions() ||
      C_init.rows() != W.cols() || C_init.cols() != Y.num_learners())
    throw std::invalid_argument("solve_or_c: dimension mismatch");
  if (!(tau > 0)) throw std::invalid_argument("solve_or_c: tau must be positive");
  return solve_columns(gather(Y, bins), W, mu, tau, C_init, norm, eta, opts);
}

PrecisionEstimate estimate_precision(const FactorModel& model, const ResponseMatrix& Y,
                                     const BinSet& bins, double tau_init,
                                     const SecantOptions& opts) {
  if (!(tau_init > 0)) throw std::invalid_argument("estimate_precision: tau_init must be > 0");
  model.check_shapes();
  const Observations obs = gather(Y, bins);
  return precision_search(observed_slack(model, obs), obs.lower, obs.upper, tau_init, opts);
}

BinEstimate optimize_bins(const FactorModel& model, const ResponseMatrix& Y,
                          const BinSet& bins_init, BinMode mode, int sweeps,
                          const SecantOptions& opts) {
  model.check_shapes();
  const Index Q = Y.num_questions();
  if (bins_init.per_question() && static_cast<Index>(bins_init.specs().size()) != Q)
    throw std::invalid_argument("optimize_bins: one quantizer per question required");
  for (const auto& spec : bins_init.specs()) {
    const auto& b = spec.boundaries();
    for (std::size_t p = 1; p + 1 < b.size(); ++p)
      if (!std::isfinite(b[p]))
        throw std::invalid_argument("optimize_bins: interior edges must be finite");
  }

  std::vector<std::string> warnings;
  const Matrix Z = model.W * model.C;
  if (mode == BinMode::shared) {
    if (bins_init.per_question())
      throw std::invalid_argument("optimize_bins: shared mode needs a shared quantizer");
    LabeledSlack data;
    for (const auto& [i, j] : Y.entries()) {
      data.z.push_back(Z(i, j) + model.mu(i));
      data.label.push_back(Y.label(i, j));
    }
    BinSet out(optimize_edges(bins_init.for_question(0), data, model.tau, sweeps, opts,
                              warnings));
    const double value = negative_log_likelihood(model, Y, out);
    return {std::move(out), value, std::move(warnings)};
  }

  std::vector<QuantizerSpec> specs;
  specs.reserve(static_cast<std::size_t>(Q));
  for (Index i = 0; i < Q; ++i) {
    LabeledSlack data;
    for (Index j = 0; j < Y.num_learners(); ++j) {
      if (!Y.observed(i, j)) continue;
      data.z.push_back(Z(i, j) + model.mu(i));
      data.label.push_back(Y.label(i, j));
    }
    specs.push_back(optimize_edges(bins_init.for_question(i), data, model.tau, sweeps, opts,
                                   warnings));
  }
  BinSet out(std::move(specs));
  const double value = negative_log_likelihood(model, Y, out);
  return {std::move(out), value, std::move(warnings)};
}

FitResult fit(const ResponseMatrix& Y, const QuantizerSpec& q, const FitOptions& opts) {
  return fit_impl(Y, q, nullptr, opts);
}

FitResult fit_tagged(const ResponseMatrix& Y, const QuantizerSpec& q, const TagSupport& tags,
                     const FitOptions& opts) {
  return fit_impl(Y, q, &tags, opts);
}

double fit_objective(const FactorModel& model, const ResponseMatrix& Y, const BinSet& bins,
                     const FitOptions& opts, const TagSupport* tags) {
  BoolMatrix mask;
  if (tags) mask = tags->mask(Y.num_questions());
  return negative_log_likelihood(model, Y, bins) +
         penalty_value(model.W, opts.lambda, opts.gamma_ridge, tags ? &mask : nullptr);
}

double gradient_mapping_norm(const FactorModel& model, const ResponseMatrix& Y,
                             const BinSet& bins, const FitOptions& opts,
                             const TagSupport* tags) {
  model.check_shapes();
  BoolMatrix mask;
  if (tags) mask = tags->mask(Y.num_questions());
  double sq = 0;

  const Observations obs = gather(Y, bins);
  if (!model.W.isZero(0)) {
    ColumnBlockProblem block(model.W, model.mu, model.tau, obs, opts.norm_constraint, opts.eta);
    const double t = lipschitz_step(model.tau, model.W);
    Matrix grad;
    block.smooth_gradient(model.C, grad);
    sq += ((model.C - block.prox(model.C - t * grad, t)) / t).squaredNorm();
  }

  const Index K = model.num_concepts();
  for (Index i = 0; i < model.num_questions(); ++i) {
    const RowData row = gather_row(Y.labels().row(i), bins.for_question(i));
    if (row.cols.empty()) continue;
    const RowPenalty pen = row_penalty(opts, tags ? &mask : nullptr, i);
    RowProblem problem(row_design(model.C, row.cols), row.lower, row.upper, model.tau, pen);
    Vector x(K + 1);
    x.head(K) = model.W.row(i).transpose();
    x(K) = model.mu(i);
    const double t = problem.step();
    Vector grad;
    problem.smooth_gradient(x, grad);
    sq += ((x - problem.prox(x - t * grad, t)) / t).squaredNorm();
  }
  return std::sqrt(sq);
}

}  // namespace ordfa
