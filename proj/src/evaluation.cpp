#include "ordfa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "ordfa/prox.hpp"

namespace ordfa {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Distinct, reproducible seeds for (base, slot, trial) triples.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t slot, std::uint64_t trial) {
  std::uint64_t x = base * 0x9E3779B97F4A7C15ull + slot * 0xBF58476D1CE4E5B9ull + trial;
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

bool prefer(const GridPoint& a, double score_a, const GridPoint& b, double score_b) {
  if (score_a != score_b) return score_a < score_b;
  if (a.lambda != b.lambda) return a.lambda > b.lambda;
  return a.eta < b.eta;
}

double active_norm(const Matrix& C, NormConstraint norm) {
  if (norm == NormConstraint::frobenius) return C.norm();
  Eigen::JacobiSVD<Matrix> svd(C);
  return svd.singularValues().sum();
}

double cv_score(const ResponseMatrix& Y, const QuantizerSpec& q, const FitOptions& opts,
                const SelectionMode& mode, const TagSupport* tags) {
  const auto folds = kfold_masks(Y.mask(), mode.folds, mode.seed);
  double total = 0;
  for (const auto& test : folds) {
    const ResponseMatrix train = restrict_to(Y, Y.mask() && !test);
    const FitResult r = tags ? fit_tagged(train, q, *tags, opts) : fit(train, q, opts);
    const auto entries = mask_entries(test);
    total += rmse(predict_scores(r.model, r.bins, entries), Y, entries);
  }
  return total / static_cast<double>(folds.size());
}

}  // namespace

Index numerical_rank(const Matrix& M, double rel_tol) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(M);
  const auto& s = svd.singularValues();
  if (s(0) == 0) return 0;
  return (s.array() > rel_tol * s(0)).count();
}

double effective_parameters(const FactorModel& model, const BinSet& bins,
                            const FitOptions& opts) {
  const double K = static_cast<double>(model.num_concepts());
  const double N = static_cast<double>(model.num_learners());
  double k = static_cast<double>((model.W.array() != 0).count()) +
             static_cast<double>(model.num_questions());
  if (opts.norm_constraint == NormConstraint::frobenius) {
    k += K * N;
  } else {
    const double r = static_cast<double>(numerical_rank(model.C));
    k += r * (K + N - r);
  }
  if (opts.precision.kind == PrecisionKind::estimate_tau) k += 1;
  if (opts.precision.learns_bins()) k += static_cast<double>(bins.num_interior());
  return k;
}

double bic_score(const FactorModel& model, const ResponseMatrix& Y, const BinSet& bins,
                 const FitOptions& opts) {
  const double n = static_cast<double>(Y.num_observed());
  const double penalty = n > 0 ? effective_parameters(model, bins, opts) * std::log(n) : 0.0;
  return 2 * negative_log_likelihood(model, Y, bins) + penalty;
}

std::vector<GridPoint> make_grid(const std::vector<double>& lambdas,
                                 const std::vector<double>& etas) {
  std::vector<GridPoint> grid;
  for (double l : lambdas)
    for (double e : etas) grid.push_back({l, e});
  return grid;
}

Selection select_hyperparams(const ResponseMatrix& Y, const QuantizerSpec& q,
                             const FitOptions& base, const std::vector<GridPoint>& grid,
                             const SelectionMode& mode, const TagSupport* tags) {
  if (grid.empty()) throw std::invalid_argument("select_hyperparams: empty grid");
  if (mode.kind == SelectionMode::cross_validation && mode.folds < 2)
    throw std::invalid_argument("select_hyperparams: need at least 2 folds");

  std::vector<double> scores(grid.size(), kInf);
  std::optional<FitResult> best_fit;
  std::optional<std::size_t> best;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    FitOptions opts = base;
    opts.lambda = grid[g].lambda;
    opts.eta = grid[g].eta;
    try {
      if (mode.kind == SelectionMode::bic) {
        FitResult r = tags ? fit_tagged(Y, q, *tags, opts) : fit(Y, q, opts);
        scores[g] = bic_score(r.model, Y, r.bins, opts);
        if (!best || prefer(grid[g], scores[g], grid[*best], scores[*best])) {
          best = g;
          best_fit = std::move(r);
        }
      } else {
        scores[g] = cv_score(Y, q, opts, mode, tags);
        if (!best || prefer(grid[g], scores[g], grid[*best], scores[*best])) best = g;
      }
    } catch (const NumericalError&) {
      scores[g] = kInf;
    }
  }
  if (!best || !std::isfinite(scores[*best]))
    throw NumericalError("select_hyperparams: every fit failed");

  FitOptions chosen = base;
  chosen.lambda = grid[*best].lambda;
  chosen.eta = grid[*best].eta;
  if (!best_fit) best_fit = tags ? fit_tagged(Y, q, *tags, chosen) : fit(Y, q, chosen);
  return {chosen, std::move(scores), *best, std::move(*best_fit)};
}

HoldoutSplit holdout_split(const ResponseMatrix& Y, double fraction, std::uint64_t seed) {
  if (!(fraction > 0 && fraction < 1))
    throw std::invalid_argument("holdout_split: fraction must lie in (0, 1)");
  auto entries = Y.entries();
  std::mt19937_64 rng(seed);
  std::shuffle(entries.begin(), entries.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(fraction * entries.size()));
  HoldoutSplit split{Y.mask(), BoolMatrix::Constant(Y.num_questions(), Y.num_learners(), false),
                     fraction};
  for (std::size_t e = 0; e < n_test; ++e) {
    split.test(entries[e].question, entries[e].learner) = true;
    split.train(entries[e].question, entries[e].learner) = false;
  }
  return split;
}

std::vector<BoolMatrix> kfold_masks(const BoolMatrix& within, int folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("kfold_masks: need at least 2 folds");
  auto entries = mask_entries(within);
  std::mt19937_64 rng(seed);
  std::shuffle(entries.begin(), entries.end(), rng);
  std::vector<BoolMatrix> masks(static_cast<std::size_t>(folds),
                                BoolMatrix::Constant(within.rows(), within.cols(), false));
  for (std::size_t e = 0; e < entries.size(); ++e)
    masks[e % static_cast<std::size_t>(folds)](entries[e].question, entries[e].learner) = true;
  return masks;
}

ResponseMatrix restrict_to(const ResponseMatrix& Y, const BoolMatrix& mask) {
  if (mask.rows() != Y.num_questions() || mask.cols() != Y.num_learners())
    throw std::invalid_argument("restrict_to: mask size differs");
  return ResponseMatrix(mask.select(Y.labels().array(), 0).matrix());
}

std::vector<Entry> mask_entries(const BoolMatrix& mask) {
  std::vector<Entry> out;
  for (Index j = 0; j < mask.cols(); ++j)
    for (Index i = 0; i < mask.rows(); ++i)
      if (mask(i, j)) out.push_back({i, j});
  return out;
}

Vector predict_scores(const FactorModel& model, const BinSet& bins,
                      const std::vector<Entry>& entries, PredictionRule rule) {
  model.check_shapes();
  Vector out(static_cast<Index>(entries.size()));
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const auto [i, j] = entries[e];
    if (i < 0 || i >= model.num_questions() || j < 0 || j >= model.num_learners())
      throw std::out_of_range("predict_scores: entry outside the model");
    const auto& q = bins.for_question(i);
    const double z = model.slack(i, j);
    double mass = 0, mean = 0, best = -1;
    int argmax = 1;
    for (int p = 1; p <= q.num_labels(); ++p) {
      const auto [lower, upper] = q.bounds(p);
      const double prob = std::exp(observation_terms(z, lower, upper, model.tau).log_prob);
      mass += prob;
      mean += p * prob;
      if (prob > best) {
        best = prob;
        argmax = p;
      }
    }
    out(static_cast<Index>(e)) = rule == PredictionRule::map_label ? argmax : mean / mass;
  }
  return out;
}

double rmse(const Vector& predictions, const ResponseMatrix& Y,
            const std::vector<Entry>& entries) {
  if (entries.empty()) throw std::invalid_argument("rmse: no entries");
  if (predictions.size() != static_cast<Index>(entries.size()))
    throw std::invalid_argument("rmse: prediction count differs from entry count");
  double sq = 0;
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const double d = predictions(static_cast<Index>(e)) -
                     Y.label(entries[e].question, entries[e].learner);
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(entries.size()));
}

// ---------------------------------------------------------------------------

double TrialRecord::metric(const std::string& name) const {
  for (const auto& [key, value] : metrics)
    if (key == name) return value;
  throw std::out_of_range("TrialRecord: no metric " + name);
}

const SummaryRow& ExperimentReport::row(const std::string& variant, double setting,
                                        const std::string& metric) const {
  for (const auto& r : summary)
    if (r.variant == variant && r.setting == setting && r.metric == metric) return r;
  throw std::out_of_range("ExperimentReport: no summary row for " + variant + "/" + metric);
}

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw std::invalid_argument("quantile: no values");
  if (!(prob >= 0 && prob <= 1)) throw std::invalid_argument("quantile: prob outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = prob * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& records) {
  std::vector<SummaryRow> rows;
  std::vector<std::pair<std::string, double>> groups;
  for (const auto& r : records) {
    if (!r.error.empty()) continue;
    const std::pair<std::string, double> key{r.variant, r.setting};
    if (std::find(groups.begin(), groups.end(), key) == groups.end()) groups.push_back(key);
  }
  for (const auto& [variant, setting] : groups) {
    std::vector<std::string> names;
    for (const auto& r : records) {
      if (!r.error.empty() || r.variant != variant || r.setting != setting) continue;
      for (const auto& m : r.metrics)
        if (std::find(names.begin(), names.end(), m.first) == names.end())
          names.push_back(m.first);
    }
    for (const auto& name : names) {
      std::vector<double> values;
      for (const auto& r : records) {
        if (!r.error.empty() || r.variant != variant || r.setting != setting) continue;
        for (const auto& m : r.metrics)
          if (m.first == name) values.push_back(m.second);
      }
      rows.push_back({variant, setting, name, static_cast<int>(values.size()),
                      quantile(values, 0.25), quantile(values, 0.5), quantile(values, 0.75)});
    }
  }
  return rows;
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::learners: return "N";
    case SweepAxis::questions: return "Q";
    case SweepAxis::labels: return "P";
  }
  return "?";
}

std::string to_string(SolverVariant variant) {
  switch (variant) {
    case SolverVariant::known_tau: return "known_tau";
    case SolverVariant::estimated_tau: return "estimated_tau";
    case SolverVariant::tagged: return "tagged";
  }
  return "?";
}

std::string to_string(PredictionVariant variant) {
  switch (variant) {
    case PredictionVariant::frobenius: return "frobenius";
    case PredictionVariant::nuclear: return "nuclear";
    case PredictionVariant::bins_shared: return "bins_shared";
    case PredictionVariant::bins_per_question: return "bins_per_question";
  }
  return "?";
}

ExperimentReport run_recovery_sweep(const SweepConfig& config) {
  if (config.values.empty() || config.variants.empty() || config.trials < 1)
    throw std::invalid_argument("run_recovery_sweep: empty sweep");
  if (config.lambda_grid.empty())
    throw std::invalid_argument("run_recovery_sweep: empty lambda grid");

  ExperimentReport report;
  report.name = "recovery_sweep";
  report.config = {{"axis", to_string(config.axis)},
                   {"Q", std::to_string(config.num_questions)},
                   {"N", std::to_string(config.num_learners)},
                   {"K", std::to_string(config.num_concepts)},
                   {"trials", std::to_string(config.trials)},
                   {"obs_fraction", std::to_string(config.obs_fraction)},
                   {"seed", std::to_string(config.seed)}};

  for (std::size_t v = 0; v < config.values.size(); ++v) {
    const Index value = config.values[v];
    Index Q = config.num_questions, N = config.num_learners;
    GeneratorParams params = config.generator;
    switch (config.axis) {
      case SweepAxis::learners: N = value; break;
      case SweepAxis::questions: Q = value; break;
      case SweepAxis::labels: params.bins = make_even_bins(static_cast<int>(value)); break;
    }
    const Index K = config.num_concepts;
    const double eta = config.eta > 0 ? config.eta : std::sqrt(static_cast<double>(K * N));

    for (int t = 0; t < config.trials; ++t) {
      const std::uint64_t data_seed =
          mix_seed(config.seed, static_cast<std::uint64_t>(value), static_cast<std::uint64_t>(t));
      std::optional<GroundTruth> gt;
      std::optional<ResponseMatrix> Y;
      std::string data_error;
      try {
        gt = generate_ground_truth(Q, N, K, params, data_seed);
        Y = generate_responses(*gt, config.obs_fraction, data_seed + 1);
      } catch (const std::exception& e) {
        data_error = e.what();
      }

      for (auto variant : config.variants) {
        TrialRecord rec;
        rec.variant = to_string(variant);
        rec.setting = static_cast<double>(value);
        rec.trial = t;
        rec.data_seed = data_seed;
        rec.eta = eta;
        if (!data_error.empty()) {
          rec.error = data_error;
          report.records.push_back(std::move(rec));
          continue;
        }
        try {
          FitOptions opts = config.base;
          opts.num_concepts = K;
          opts.rng_seed = static_cast<std::uint64_t>(t);
          opts.precision = variant == SolverVariant::estimated_tau ? PrecisionMode::estimated()
                                                                    : PrecisionMode::fixed(gt->tau);
          std::optional<TagSupport> tags;
          if (variant == SolverVariant::tagged) tags.emplace(K, support_pairs(gt->W));
          const auto sel = select_hyperparams(*Y, gt->bins, opts,
                                              make_grid(config.lambda_grid, {eta}),
                                              SelectionMode::by_bic(), tags ? &*tags : nullptr);
          const auto& fitted = sel.fit;
          const auto err = recovery_errors(align_factors(fitted.model, *gt), *gt);
          rec.lambda = sel.options.lambda;
          rec.metrics = {
              {"e_w", err.e_w},
              {"e_c", err.e_c},
              {"e_mu", err.e_mu},
              {"tau", fitted.model.tau},
              {"w_min", fitted.model.W.minCoeff()},
              {"c_norm", active_norm(fitted.model.C, opts.norm_constraint)},
              {"nnz_fraction", (fitted.model.W.array() != 0).cast<double>().mean()},
              {"iterations", static_cast<double>(fitted.trace.iterations_run)},
              {"converged", fitted.trace.converged ? 1.0 : 0.0}};
          rec.objective_trace = fitted.trace.objective_per_outer_iter;
        } catch (const std::exception& e) {
          rec.error = e.what();
        }
        report.records.push_back(std::move(rec));
      }
    }
  }
  report.summary = summarize(report.records);
  return report;
}

ExperimentReport run_prediction_study(const ResponseMatrix& Y, const QuantizerSpec& q,
                                      const PredictionConfig& config) {
  if (config.trials < 1) throw std::invalid_argument("run_prediction_study: trials must be >= 1");
  if (config.lambda_grid.empty())
    throw std::invalid_argument("run_prediction_study: empty lambda grid");
  Y.check_labels(q.num_labels());

  ExperimentReport report;
  report.name = "prediction_study";
  report.config = {{"Q", std::to_string(Y.num_questions())},
                   {"N", std::to_string(Y.num_learners())},
                   {"K", std::to_string(config.base.num_concepts)},
                   {"holdout_fraction", std::to_string(config.holdout_fraction)},
                   {"trials", std::to_string(config.trials)},
                   {"selection", config.selection.kind == SelectionMode::bic ? "bic" : "cv"},
                   {"seed", std::to_string(config.seed)}};

  const double K = static_cast<double>(config.base.num_concepts);
  const double eta_fro =
      config.eta > 0 ? config.eta : std::sqrt(K * static_cast<double>(Y.num_learners()));

  for (int t = 0; t < config.trials; ++t) {
    const std::uint64_t split_seed = mix_seed(config.seed, 0, static_cast<std::uint64_t>(t));
    const auto split = holdout_split(Y, config.holdout_fraction, split_seed);
    const ResponseMatrix train = restrict_to(Y, split.train);
    const auto test = mask_entries(split.test);

    {
      TrialRecord rec{"baseline", 0, t, split_seed, 0, 0, {}, {}, {}};
      const double mean = train.labels().cast<double>().sum() /
                          static_cast<double>(train.num_observed());
      rec.metrics = {{"rmse", rmse(Vector::Constant(static_cast<Index>(test.size()), mean), Y,
                                   test)}};
      report.records.push_back(std::move(rec));
    }

    for (auto variant : config.variants) {
      TrialRecord rec{to_string(variant), 0, t, split_seed, 0, 0, {}, {}, {}};
      try {
        FitOptions opts = config.base;
        opts.rng_seed = static_cast<std::uint64_t>(t);
        double eta = eta_fro;
        switch (variant) {
          case PredictionVariant::frobenius:
            opts.norm_constraint = NormConstraint::frobenius;
            opts.precision = PrecisionMode::estimated();
            break;
          case PredictionVariant::nuclear:
            opts.norm_constraint = NormConstraint::nuclear;
            opts.precision = PrecisionMode::estimated();
            eta = std::sqrt(K) * eta_fro;
            break;
          case PredictionVariant::bins_shared:
            opts.norm_constraint = NormConstraint::frobenius;
            opts.precision = PrecisionMode::bins_shared();
            break;
          case PredictionVariant::bins_per_question:
            opts.norm_constraint = NormConstraint::frobenius;
            opts.precision = PrecisionMode::bins_per_question();
            break;
        }
        SelectionMode mode = config.selection;
        mode.seed = mix_seed(config.seed, 1, static_cast<std::uint64_t>(t));
        const auto sel =
            select_hyperparams(train, q, opts, make_grid(config.lambda_grid, {eta}), mode);
        rec.lambda = sel.options.lambda;
        rec.eta = eta;
        rec.metrics = {{"rmse", rmse(predict_scores(sel.fit.model, sel.fit.bins, test), Y, test)},
                       {"tau", sel.fit.model.tau}};
        rec.objective_trace = sel.fit.trace.objective_per_outer_iter;
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
      report.records.push_back(std::move(rec));
    }
  }
  report.summary = summarize(report.records);
  return report;
}

}  // namespace ordfa
