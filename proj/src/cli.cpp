#include "ordfa/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ordfa/evaluation.hpp"
#include "ordfa/io.hpp"
#include "ordfa/solvers.hpp"
#include "ordfa/synthetic.hpp"

namespace ordfa {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct QuantizerArgs {
  int labels = 0;
  std::string bins;
  std::string file;

  void add(CLI::App* cmd) {
    auto* l = cmd->add_option("--labels", labels, "P evenly spaced normal-quantile bins");
    auto* b = cmd->add_option("--bins", bins, "comma-separated interior bin edges");
    auto* f = cmd->add_option("--quantizer", file, "quantizer JSON file")->check(CLI::ExistingFile);
    l->excludes(b)->excludes(f);
    b->excludes(f);
  }

  std::optional<QuantizerSpec> resolve() const {
    if (labels) return make_even_bins(labels);
    if (!bins.empty()) {
      std::vector<double> interior;
      std::stringstream ss(bins);
      std::string item;
      while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        const double v = std::stod(item, &used);
        if (used != item.size()) throw std::invalid_argument("--bins: bad number '" + item + "'");
        interior.push_back(v);
      }
      return QuantizerSpec::from_interior(interior);
    }
    if (!file.empty()) return load_quantizer_json(file);
    return std::nullopt;
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string responses, tags, out;
  QuantizerArgs quantizer;
  Index concepts = 5;
  double lambda = 1.0, eta = 0.0, gamma = 1e-6, tau = 1.0;
  std::string norm = "frobenius", precision = "estimate_tau";
  int max_outer = 100, inner = 100;
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

int run_fit(const FitArgs& a, std::ostream& out) {
  const auto data = load_responses_csv(a.responses);
  const auto q = a.quantizer.resolve().value_or(make_even_bins(std::max(2, data.responses.max_label())));

  FitOptions opts;
  opts.lambda = a.lambda;
  opts.gamma_ridge = a.gamma;
  opts.norm_constraint = parse_norm_constraint(a.norm);
  opts.precision.kind = parse_precision_kind(a.precision);
  opts.precision.tau = a.tau;
  opts.num_concepts = a.concepts;
  opts.max_outer_iters = a.max_outer;
  opts.inner.max_iters = a.inner;
  opts.tol_objective = a.tol;
  opts.rng_seed = a.seed;

  std::optional<TagData> tags;
  if (!a.tags.empty()) {
    tags = load_tags_csv(a.tags, data.question_ids);
    opts.num_concepts = tags->tags.num_concepts();
  }
  const double fro = std::sqrt(static_cast<double>(opts.num_concepts * data.responses.num_learners()));
  opts.eta = a.eta > 0 ? a.eta
                       : (opts.norm_constraint == NormConstraint::frobenius
                              ? fro
                              : std::sqrt(static_cast<double>(opts.num_concepts)) * fro);

  const FitResult r = tags ? fit_tagged(data.responses, q, tags->tags, opts)
                           : fit(data.responses, q, opts);
  ModelBundle bundle{r.model, r.bins, opts, r.trace.objective_per_outer_iter, r.trace.converged,
                     data.question_ids, data.learner_ids,
                     tags ? tags->tag_names : std::vector<std::string>{}};
  save_model(a.out, bundle);
  out << "fit: " << r.trace.iterations_run << " outer iterations, objective "
      << format_double(r.trace.objective_per_outer_iter.back()) << ", tau "
      << format_double(r.model.tau) << (r.trace.converged ? "" : " (not converged)") << '\n';
  for (const auto& w : r.trace.warnings) out << "warning: " << w << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string model, entries, out;
  bool map = false;
};

int run_predict(const PredictArgs& a, std::ostream& out) {
  const auto bundle = load_model(a.model);
  std::map<std::string, Index> q_index, l_index;
  for (std::size_t i = 0; i < bundle.question_ids.size(); ++i)
    q_index[bundle.question_ids[i]] = static_cast<Index>(i);
  for (std::size_t j = 0; j < bundle.learner_ids.size(); ++j)
    l_index[bundle.learner_ids[j]] = static_cast<Index>(j);

  std::ifstream in(a.entries);
  if (!in) throw std::runtime_error("cannot open " + a.entries);
  std::string line;
  std::size_t line_no = 0;
  std::vector<Entry> entries;
  std::vector<std::pair<std::string, std::string>> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string qid, lid;
    std::getline(ss, qid, ',');
    std::getline(ss, lid, ',');
    if (line_no == 1 && qid == "question_id") continue;
    const auto qi = q_index.find(qid);
    const auto lj = l_index.find(lid);
    if (qi == q_index.end() || lj == l_index.end())
      throw ParseError(a.entries + ":" + std::to_string(line_no) + ": unknown id");
    entries.push_back({qi->second, lj->second});
    ids.emplace_back(qid, lid);
  }
  const Vector pred = predict_scores(bundle.model, bundle.bins, entries,
                                     a.map ? PredictionRule::map_label
                                           : PredictionRule::posterior_mean);
  std::ostringstream csv;
  csv << "question_id,learner_id,prediction\n";
  for (std::size_t e = 0; e < entries.size(); ++e)
    csv << ids[e].first << ',' << ids[e].second << ','
        << format_double(pred(static_cast<Index>(e))) << '\n';
  if (a.out.empty())
    out << csv.str();
  else
    write_text(a.out, csv.str());
  return 0;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  Index questions = 100, learners = 100, concepts = 5, rank = 0;
  QuantizerArgs quantizer;
  double obs_fraction = 1.0, tau = 1.0;
  std::uint64_t seed = 0;
  std::string out;
};

int run_synth(const SynthArgs& a, std::ostream& out) {
  GeneratorParams params;
  params.tau = a.tau;
  params.c_rank = a.rank;
  if (auto q = a.quantizer.resolve()) params.bins = *q;
  const auto gt = generate_ground_truth(a.questions, a.learners, a.concepts, params, a.seed);
  const auto Y = generate_responses(gt, a.obs_fraction, a.seed + 1);

  fs::create_directories(a.out);
  const fs::path dir(a.out);
  std::vector<std::string> qids, lids, names;
  for (Index i = 0; i < a.questions; ++i) qids.push_back("q" + std::to_string(i + 1));
  for (Index j = 0; j < a.learners; ++j) lids.push_back("l" + std::to_string(j + 1));
  for (Index k = 0; k < a.concepts; ++k) names.push_back("concept" + std::to_string(k + 1));
  save_responses_csv((dir / "responses.csv").string(), Y, qids, lids);

  std::ostringstream tags;
  tags << "question_id,tag_name\n";
  for (const auto& [i, k] : support_pairs(gt.W))
    tags << qids[static_cast<std::size_t>(i)] << ',' << names[static_cast<std::size_t>(k)] << '\n';
  write_text((dir / "tags.csv").string(), tags.str());

  json qj;
  qj["boundaries"] = json::array();
  for (double b : gt.bins.boundaries())
    qj["boundaries"].push_back(std::isinf(b) ? json(b > 0 ? "inf" : "-inf") : json(b));
  write_text((dir / "quantizer.json").string(), qj.dump(2) + "\n");

  FitOptions echo;
  echo.num_concepts = a.concepts;
  echo.precision = PrecisionMode::fixed(gt.tau);
  echo.rng_seed = a.seed;
  save_model((dir / "truth").string(),
             ModelBundle{gt.model(), gt.bins, echo, {}, true, qids, lids, names});
  out << "synth: " << Y.num_observed() << " responses written to " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

SolverVariant parse_solver_variant(const std::string& s) {
  for (auto v : {SolverVariant::known_tau, SolverVariant::estimated_tau, SolverVariant::tagged})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown solver variant '" + s + "'");
}

PredictionVariant parse_prediction_variant(const std::string& s) {
  for (auto v : {PredictionVariant::frobenius, PredictionVariant::nuclear,
                 PredictionVariant::bins_shared, PredictionVariant::bins_per_question})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown prediction variant '" + s + "'");
}

struct SweepArgs {
  std::string config, out_csv, out_json;
};

int run_sweep(const SweepArgs& a, std::ostream& out) {
  std::ifstream in(a.config);
  if (!in) throw std::runtime_error("cannot open " + a.config);
  json cfg;
  try {
    in >> cfg;
  } catch (const json::exception& e) {
    throw ParseError(a.config + ": " + e.what());
  }

  ExperimentReport report;
  try {
    const std::string kind = cfg.value("kind", std::string("recovery"));
    FitOptions base;
    base.max_outer_iters = cfg.value("max_outer_iters", base.max_outer_iters);
    base.tol_objective = cfg.value("tol_objective", base.tol_objective);
    if (kind == "recovery") {
      SweepConfig c;
      const std::string axis = cfg.value("axis", std::string("N"));
      if (axis == "N") c.axis = SweepAxis::learners;
      else if (axis == "Q") c.axis = SweepAxis::questions;
      else if (axis == "P") c.axis = SweepAxis::labels;
      else throw std::invalid_argument("axis must be N, Q or P");
      c.values = cfg.value("values", c.values);
      c.num_questions = cfg.value("Q", c.num_questions);
      c.num_learners = cfg.value("N", c.num_learners);
      c.num_concepts = cfg.value("K", c.num_concepts);
      c.trials = cfg.value("trials", c.trials);
      c.obs_fraction = cfg.value("obs_fraction", c.obs_fraction);
      c.lambda_grid = cfg.value("lambda_grid", c.lambda_grid);
      c.eta = cfg.value("eta", c.eta);
      c.seed = cfg.value("seed", c.seed);
      if (cfg.contains("variants")) {
        c.variants.clear();
        for (const auto& v : cfg.at("variants")) c.variants.push_back(parse_solver_variant(v));
      }
      c.base = base;
      report = run_recovery_sweep(c);
    } else if (kind == "prediction") {
      PredictionConfig c;
      c.trials = cfg.value("trials", c.trials);
      c.holdout_fraction = cfg.value("holdout_fraction", c.holdout_fraction);
      c.lambda_grid = cfg.value("lambda_grid", c.lambda_grid);
      c.eta = cfg.value("eta", c.eta);
      c.seed = cfg.value("seed", c.seed);
      if (cfg.value("selection", std::string("bic")) == "cv")
        c.selection = SelectionMode::by_cv(cfg.value("folds", 4), c.seed);
      if (cfg.contains("variants")) {
        c.variants.clear();
        for (const auto& v : cfg.at("variants")) c.variants.push_back(parse_prediction_variant(v));
      }
      c.base = base;
      c.base.num_concepts = cfg.value("K", Index{5});
      const Index Q = cfg.value("Q", Index{100}), N = cfg.value("N", Index{100});
      const auto gt = generate_ground_truth(Q, N, c.base.num_concepts, {}, c.seed);
      const auto Y = generate_responses(gt, cfg.value("obs_fraction", 1.0), c.seed + 1);
      report = run_prediction_study(Y, gt.bins, c);
    } else {
      throw std::invalid_argument("kind must be recovery or prediction");
    }
  } catch (const json::exception& e) {
    throw ParseError(a.config + ": " + e.what());
  }

  std::ostringstream csv, js;
  write_report_csv(csv, report);
  write_report_json(js, report);
  if (!a.out_csv.empty()) write_text(a.out_csv, csv.str());
  if (!a.out_json.empty()) write_text(a.out_json, js.str());
  out << "metric,variant,setting,median,q1,q3\n";
  for (const auto& r : report.summary)
    out << r.metric << ',' << r.variant << ',' << format_double(r.setting) << ','
        << format_double(r.median) << ',' << format_double(r.q1) << ',' << format_double(r.q3)
        << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct GraphArgs {
  std::string model, tags, out;
  double threshold = kDefaultEdgeThreshold;
};

int run_graph(const GraphArgs& a, std::ostream& out) {
  const auto bundle = load_model(a.model);
  std::optional<TagData> tags;
  if (!a.tags.empty()) tags = load_tags_csv(a.tags, bundle.question_ids);
  const auto& names = tags ? tags->tag_names : bundle.tag_names;
  const std::string dot = export_concept_graph(bundle.model, tags ? &tags->tags : nullptr, names,
                                               bundle.question_ids, a.threshold);
  if (a.out.empty())
    out << dot;
  else
    write_text(a.out, dot);
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ordinal sparse factor analysis of graded learner responses", "ordfa"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "fit a model to a responses CSV");
  fit_cmd->add_option("--responses", fit_args.responses, "responses CSV")
      ->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--tags", fit_args.tags, "tags CSV (fits with tag support)")
      ->check(CLI::ExistingFile);
  fit_args.quantizer.add(fit_cmd);
  fit_cmd->add_option("-K,--concepts", fit_args.concepts, "number of concepts")
      ->check(CLI::PositiveNumber);
  fit_cmd->add_option("--lambda", fit_args.lambda, "l1 weight")->check(CLI::NonNegativeNumber);
  fit_cmd->add_option("--eta", fit_args.eta, "norm-ball radius (default from K and N)");
  fit_cmd->add_option("--gamma", fit_args.gamma, "ridge weight on tagged entries")
      ->check(CLI::NonNegativeNumber);
  fit_cmd->add_option("--norm", fit_args.norm, "frobenius or nuclear")
      ->check(CLI::IsMember({"frobenius", "nuclear"}));
  fit_cmd->add_option("--precision", fit_args.precision, "precision mode")
      ->check(CLI::IsMember({"fixed_tau", "estimate_tau", "learn_bins_shared",
                             "learn_bins_per_question"}));
  fit_cmd->add_option("--tau", fit_args.tau, "fixed or initial tau")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--max-outer", fit_args.max_outer, "outer iteration cap")
      ->check(CLI::PositiveNumber);
  fit_cmd->add_option("--inner-iters", fit_args.inner, "FISTA iteration cap")
      ->check(CLI::PositiveNumber);
  fit_cmd->add_option("--tol", fit_args.tol, "relative objective tolerance");
  fit_cmd->add_option("--seed", fit_args.seed, "initialization seed");
  fit_cmd->add_option("--out", fit_args.out, "output directory")->required();

  PredictArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "predict scores for question/learner pairs");
  predict_cmd->add_option("--model", predict_args.model, "model directory")
      ->required()->check(CLI::ExistingDirectory);
  predict_cmd->add_option("--entries", predict_args.entries, "CSV of question_id,learner_id")
      ->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", predict_args.out, "output CSV (default stdout)");
  predict_cmd->add_flag("--map", predict_args.map, "most probable label instead of the mean");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("-Q,--questions", synth_args.questions)->check(CLI::PositiveNumber);
  synth_cmd->add_option("-N,--learners", synth_args.learners)->check(CLI::PositiveNumber);
  synth_cmd->add_option("-K,--concepts", synth_args.concepts)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--rank", synth_args.rank, "rank of C (0 = full)")
      ->check(CLI::NonNegativeNumber);
  synth_args.quantizer.add(synth_cmd);
  synth_cmd->add_option("--obs-fraction", synth_args.obs_fraction)->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--tau", synth_args.tau)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth_args.seed);
  synth_cmd->add_option("--out", synth_args.out, "output directory")->required();

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "run a recovery or prediction experiment");
  sweep_cmd->add_option("--config", sweep_args.config, "experiment JSON")
      ->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--out-csv", sweep_args.out_csv, "per-trial records");
  sweep_cmd->add_option("--out-json", sweep_args.out_json, "summary");

  GraphArgs graph_args;
  auto* graph_cmd = app.add_subcommand("graph", "export the question-concept graph as DOT");
  graph_cmd->add_option("--model", graph_args.model, "model directory")
      ->required()->check(CLI::ExistingDirectory);
  graph_cmd->add_option("--tags", graph_args.tags, "tags CSV")->check(CLI::ExistingFile);
  graph_cmd->add_option("--threshold", graph_args.threshold, "edge display threshold")
      ->check(CLI::NonNegativeNumber);
  graph_cmd->add_option("--out", graph_args.out, "output file (default stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*fit_cmd) return run_fit(fit_args, out);
    if (*predict_cmd) return run_predict(predict_args, out);
    if (*synth_cmd) return run_synth(synth_args, out);
    if (*sweep_cmd) return run_sweep(sweep_args, out);
    if (*graph_cmd) return run_graph(graph_args, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace ordfa
