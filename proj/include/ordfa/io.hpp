#pragma once

// File formats: long-format response and tag CSVs, quantizer JSON, model
// directories (CSV matrices + meta.json), concept graphs as DOT, experiment
// reports as CSV / JSON.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ordfa/evaluation.hpp"
#include "ordfa/ordinal_model.hpp"
#include "ordfa/solvers.hpp"

namespace ordfa {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ResponseData {
  ResponseMatrix responses;
  std::vector<std::string> question_ids;  // row order = first appearance
  std::vector<std::string> learner_ids;   // column order = first appearance
};

/// Header `question_id,learner_id,label`, one row per observed entry.
ResponseData read_responses_csv(std::istream& in, const std::string& source = "<input>");
ResponseData load_responses_csv(const std::string& path);

/// Ids default to q<i> / l<j> (1-based) when empty.
void write_responses_csv(std::ostream& out, const ResponseMatrix& Y,
                         const std::vector<std::string>& question_ids = {},
                         const std::vector<std::string>& learner_ids = {});
void save_responses_csv(const std::string& path, const ResponseMatrix& Y,
                        const std::vector<std::string>& question_ids = {},
                        const std::vector<std::string>& learner_ids = {});

struct TagData {
  TagSupport tags;
  std::vector<std::string> tag_names;  // concept k <-> tag_names[k]
};

/// Header `question_id,tag_name`; tags enumerate concepts in first-appearance order.
TagData read_tags_csv(std::istream& in, const std::vector<std::string>& question_ids,
                      const std::string& source = "<input>");
TagData load_tags_csv(const std::string& path, const std::vector<std::string>& question_ids);

/// {"boundaries": [...]} (with "-inf" / "inf" strings allowed), {"interior": [...]}
/// or {"labels": P} for make_even_bins(P).
QuantizerSpec read_quantizer_json(std::istream& in, const std::string& source = "<input>");
QuantizerSpec load_quantizer_json(const std::string& path);

/// Row-per-line CSV at 17 significant digits, no header.
void write_matrix_csv(std::ostream& out, const Matrix& M);
Matrix read_matrix_csv(std::istream& in, const std::string& source = "<input>");

struct ModelBundle {
  FactorModel model;
  BinSet bins = BinSet(QuantizerSpec({-1, 0, 1}));
  FitOptions options;
  std::vector<double> objective_trace;
  bool converged = false;
  std::vector<std::string> question_ids;
  std::vector<std::string> learner_ids;
  std::vector<std::string> tag_names;
};

std::string to_string(NormConstraint norm);
std::string to_string(PrecisionKind kind);
NormConstraint parse_norm_constraint(const std::string& name);
PrecisionKind parse_precision_kind(const std::string& name);

/// W.csv, C.csv, mu.csv and meta.json in `dir` (created if missing).
void save_model(const std::string& dir, const ModelBundle& bundle);
ModelBundle load_model(const std::string& dir);

enum class EdgeStatus { kept, removed, discovered };

std::string to_string(EdgeStatus status);

struct GraphEdge {
  Index question;
  Index concept_index;
  double weight;
  EdgeStatus status;
};

inline constexpr double kDefaultEdgeThreshold = 1e-3;

/// Tagged entries are kept above the threshold and removed otherwise;
/// untagged entries above the threshold are discovered. Ordered by question,
/// then concept.
std::vector<GraphEdge> classify_edges(const Matrix& W, const BoolMatrix& tagged,
                                      double threshold = kDefaultEdgeThreshold);

/// Undirected DOT graph: boxes for questions (labelled with mu to 2
/// decimals), circles for concepts, pen width growing with W.
std::string export_concept_graph(const FactorModel& model, const TagSupport* tags,
                                 const std::vector<std::string>& tag_names = {},
                                 const std::vector<std::string>& question_ids = {},
                                 double threshold = kDefaultEdgeThreshold);

/// One row per trial: variant, setting, trial, data_seed, lambda, eta,
/// metrics..., error.
void write_report_csv(std::ostream& out, const ExperimentReport& report);
/// Name, configuration and the median / quartile summary.
void write_report_json(std::ostream& out, const ExperimentReport& report);

/// Shortest text that reads back to the same double ("inf" / "-inf" / "nan" allowed).
std::string format_double(double x);

}  // namespace ordfa
