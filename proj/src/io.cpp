#include "ordfa/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ordfa {

namespace {

using json = nlohmann::json;

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what) {
  throw ParseError(source + ":" + std::to_string(line) + ": " + what);
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path + " for reading");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

// Reads the header line, skipping blank lines; returns false at end of input.
bool read_header(std::istream& in, std::size_t& line_no, std::string& line) {
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) return true;
  }
  return false;
}

void expect_header(const std::string& line, const std::vector<std::string>& expected,
                   const std::string& source, std::size_t line_no) {
  auto fields = split_fields(line);
  if (!fields.empty() && fields[0].rfind("\xEF\xBB\xBF", 0) == 0) fields[0].erase(0, 3);
  if (fields != expected) {
    std::string want;
    for (const auto& f : expected) want += (want.empty() ? "" : ",") + f;
    fail(source, line_no, "expected header '" + want + "'");
  }
}

json number_to_json(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  return x;
}

double number_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf" || s == "Infinity") return std::numeric_limits<double>::infinity();
    if (s == "-inf" || s == "-Infinity") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ParseError("expected a number, got " + j.dump());
}

json edges_to_json(const QuantizerSpec& q) {
  json arr = json::array();
  for (double b : q.boundaries()) arr.push_back(number_to_json(b));
  return arr;
}

QuantizerSpec edges_from_json(const json& arr) {
  if (!arr.is_array()) throw ParseError("boundaries must be an array");
  std::vector<double> edges;
  for (const auto& v : arr) edges.push_back(number_from_json(v));
  return QuantizerSpec(std::move(edges));
}

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

std::string fixed2(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

// ---------------------------------------------------------------------------
// Responses

ResponseData read_responses_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  if (!read_header(in, line_no, line)) fail(source, 1, "empty file");
  expect_header(line, {"question_id", "learner_id", "label"}, source, line_no);

  struct Row {
    std::size_t q, l;
    int label;
  };
  std::vector<Row> rows;
  std::map<std::string, std::size_t> q_index, l_index;
  ResponseData data;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 3)
      fail(source, line_no, "expected 3 fields, found " + std::to_string(fields.size()));
    if (fields[0].empty() || fields[1].empty()) fail(source, line_no, "empty id");
    int label = 0;
    const auto& lf = fields[2];
    const auto r = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (r.ec != std::errc() || r.ptr != lf.data() + lf.size())
      fail(source, line_no, "label '" + lf + "' is not an integer");
    if (label < 1) fail(source, line_no, "label must be >= 1");

    auto [qi, q_new] = q_index.try_emplace(fields[0], data.question_ids.size());
    if (q_new) data.question_ids.push_back(fields[0]);
    auto [li, l_new] = l_index.try_emplace(fields[1], data.learner_ids.size());
    if (l_new) data.learner_ids.push_back(fields[1]);
    const auto [it, inserted] = seen.try_emplace({qi->second, li->second}, line_no);
    if (!inserted)
      fail(source, line_no,
           "duplicate entry (" + fields[0] + ", " + fields[1] + "), first on line " +
               std::to_string(it->second));
    rows.push_back({qi->second, li->second, label});
  }
  data.responses = ResponseMatrix(static_cast<Index>(data.question_ids.size()),
                                  static_cast<Index>(data.learner_ids.size()));
  for (const auto& r : rows)
    data.responses.set(static_cast<Index>(r.q), static_cast<Index>(r.l), r.label);
  return data;
}

ResponseData load_responses_csv(const std::string& path) {
  auto in = open_in(path);
  return read_responses_csv(in, path);
}

void write_responses_csv(std::ostream& out, const ResponseMatrix& Y,
                         const std::vector<std::string>& question_ids,
                         const std::vector<std::string>& learner_ids) {
  if (!question_ids.empty() && static_cast<Index>(question_ids.size()) != Y.num_questions())
    throw std::invalid_argument("write_responses_csv: question id count differs");
  if (!learner_ids.empty() && static_cast<Index>(learner_ids.size()) != Y.num_learners())
    throw std::invalid_argument("write_responses_csv: learner id count differs");
  auto qid = [&](Index i) {
    return question_ids.empty() ? "q" + std::to_string(i + 1)
                                : question_ids[static_cast<std::size_t>(i)];
  };
  auto lid = [&](Index j) {
    return learner_ids.empty() ? "l" + std::to_string(j + 1)
                               : learner_ids[static_cast<std::size_t>(j)];
  };
  out << "question_id,learner_id,label\n";
  // Question-major so that reading back reproduces the row order.
  for (Index i = 0; i < Y.num_questions(); ++i)
    for (Index j = 0; j < Y.num_learners(); ++j)
      if (Y.observed(i, j)) out << qid(i) << ',' << lid(j) << ',' << Y.label(i, j) << '\n';
}

void save_responses_csv(const std::string& path, const ResponseMatrix& Y,
                        const std::vector<std::string>& question_ids,
                        const std::vector<std::string>& learner_ids) {
  auto out = open_out(path);
  write_responses_csv(out, Y, question_ids, learner_ids);
}

// ---------------------------------------------------------------------------
// Tags and quantizer

TagData read_tags_csv(std::istream& in, const std::vector<std::string>& question_ids,
                      const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  if (!read_header(in, line_no, line)) fail(source, 1, "empty file");
  expect_header(line, {"question_id", "tag_name"}, source, line_no);

  std::map<std::string, Index> q_index;
  for (std::size_t i = 0; i < question_ids.size(); ++i)
    q_index.emplace(question_ids[i], static_cast<Index>(i));
  std::map<std::string, Index> tag_index;
  std::vector<std::string> names;
  std::vector<std::pair<Index, Index>> pairs;
  std::set<std::pair<Index, Index>> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 2)
      fail(source, line_no, "expected 2 fields, found " + std::to_string(fields.size()));
    if (fields[1].empty()) fail(source, line_no, "empty tag name");
    const auto q = q_index.find(fields[0]);
    if (q == q_index.end()) fail(source, line_no, "unknown question_id '" + fields[0] + "'");
    auto [t, is_new] = tag_index.try_emplace(fields[1], static_cast<Index>(names.size()));
    if (is_new) names.push_back(fields[1]);
    if (!seen.insert({q->second, t->second}).second)
      fail(source, line_no, "duplicate tag row");
    pairs.emplace_back(q->second, t->second);
  }
  if (pairs.empty()) fail(source, line_no, "no tag rows");
  return {TagSupport(static_cast<Index>(names.size()), std::move(pairs)), std::move(names)};
}

TagData load_tags_csv(const std::string& path, const std::vector<std::string>& question_ids) {
  auto in = open_in(path);
  return read_tags_csv(in, question_ids, path);
}

QuantizerSpec read_quantizer_json(std::istream& in, const std::string& source) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(source + ": " + e.what());
  }
  try {
    if (j.contains("boundaries")) return edges_from_json(j.at("boundaries"));
    if (j.contains("interior")) {
      std::vector<double> interior;
      for (const auto& v : j.at("interior")) interior.push_back(number_from_json(v));
      return QuantizerSpec::from_interior(interior);
    }
    if (j.contains("labels")) return make_even_bins(j.at("labels").get<int>());
  } catch (const json::exception& e) {
    throw ParseError(source + ": " + e.what());
  }
  throw ParseError(source + ": expected one of 'boundaries', 'interior' or 'labels'");
}

QuantizerSpec load_quantizer_json(const std::string& path) {
  auto in = open_in(path);
  return read_quantizer_json(in, path);
}

// ---------------------------------------------------------------------------
// Matrices and models

void write_matrix_csv(std::ostream& out, const Matrix& M) {
  char buf[64];
  for (Index i = 0; i < M.rows(); ++i) {
    for (Index k = 0; k < M.cols(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", M(i, k));
      if (k) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

Matrix read_matrix_csv(std::istream& in, const std::string& source) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    for (const auto& f : split_fields(line)) {
      char* end = nullptr;
      const double v = std::strtod(f.c_str(), &end);
      if (f.empty() || end != f.c_str() + f.size())
        fail(source, line_no, "'" + f + "' is not a number");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      fail(source, line_no, "ragged row");
    rows.push_back(std::move(row));
  }
  const Index r = static_cast<Index>(rows.size());
  const Index c = r ? static_cast<Index>(rows.front().size()) : 0;
  Matrix M(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index k = 0; k < c; ++k)
      M(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  return M;
}

std::string to_string(NormConstraint norm) {
  return norm == NormConstraint::frobenius ? "frobenius" : "nuclear";
}

std::string to_string(PrecisionKind kind) {
  switch (kind) {
    case PrecisionKind::fixed_tau: return "fixed_tau";
    case PrecisionKind::estimate_tau: return "estimate_tau";
    case PrecisionKind::learn_bins_shared: return "learn_bins_shared";
    case PrecisionKind::learn_bins_per_question: return "learn_bins_per_question";
  }
  return "?";
}

NormConstraint parse_norm_constraint(const std::string& name) {
  if (name == "frobenius") return NormConstraint::frobenius;
  if (name == "nuclear") return NormConstraint::nuclear;
  throw std::invalid_argument("unknown norm constraint '" + name + "'");
}

PrecisionKind parse_precision_kind(const std::string& name) {
  for (auto k : {PrecisionKind::fixed_tau, PrecisionKind::estimate_tau,
                 PrecisionKind::learn_bins_shared, PrecisionKind::learn_bins_per_question})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown precision mode '" + name + "'");
}

void save_model(const std::string& dir, const ModelBundle& bundle) {
  const auto& m = bundle.model;
  m.check_shapes();
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  {
    auto out = open_out((base / "W.csv").string());
    write_matrix_csv(out, m.W);
  }
  {
    auto out = open_out((base / "C.csv").string());
    write_matrix_csv(out, m.C);
  }
  {
    auto out = open_out((base / "mu.csv").string());
    write_matrix_csv(out, m.mu);
  }

  json meta;
  meta["tau"] = m.tau;
  meta["K"] = m.num_concepts();
  meta["P"] = bundle.bins.num_labels();
  if (bundle.bins.per_question()) {
    json all = json::array();
    for (const auto& q : bundle.bins.specs()) all.push_back(edges_to_json(q));
    meta["boundaries"] = all;
  } else {
    meta["boundaries"] = edges_to_json(bundle.bins.for_question(0));
  }
  meta["bins_per_question"] = bundle.bins.per_question();
  meta["lambda"] = bundle.options.lambda;
  meta["gamma_ridge"] = bundle.options.gamma_ridge;
  meta["eta"] = bundle.options.eta;
  meta["norm_constraint"] = to_string(bundle.options.norm_constraint);
  meta["precision_mode"] = to_string(bundle.options.precision.kind);
  meta["objective_trace"] = bundle.objective_trace;
  meta["converged"] = bundle.converged;
  meta["seed"] = bundle.options.rng_seed;
  meta["question_ids"] = bundle.question_ids;
  meta["learner_ids"] = bundle.learner_ids;
  meta["tag_names"] = bundle.tag_names;
  auto out = open_out((base / "meta.json").string());
  out << meta.dump(2) << '\n';
}

ModelBundle load_model(const std::string& dir) {
  const std::filesystem::path base(dir);
  auto read = [&](const char* name) {
    const auto path = (base / name).string();
    auto in = open_in(path);
    return read_matrix_csv(in, path);
  };
  ModelBundle bundle;
  bundle.model.W = read("W.csv");
  bundle.model.C = read("C.csv");
  const Matrix mu = read("mu.csv");
  if (mu.cols() > 1) throw ParseError((base / "mu.csv").string() + ": expected one column");
  bundle.model.mu = mu.rows() ? Vector(mu.col(0)) : Vector();

  const auto meta_path = (base / "meta.json").string();
  auto in = open_in(meta_path);
  json meta;
  try {
    in >> meta;
    bundle.model.tau = meta.at("tau").get<double>();
    if (meta.value("bins_per_question", false)) {
      std::vector<QuantizerSpec> specs;
      for (const auto& b : meta.at("boundaries")) specs.push_back(edges_from_json(b));
      bundle.bins = BinSet(std::move(specs));
    } else {
      bundle.bins = BinSet(edges_from_json(meta.at("boundaries")));
    }
    bundle.options.lambda = meta.at("lambda").get<double>();
    bundle.options.gamma_ridge = meta.value("gamma_ridge", bundle.options.gamma_ridge);
    bundle.options.eta = meta.at("eta").get<double>();
    bundle.options.norm_constraint = parse_norm_constraint(meta.at("norm_constraint"));
    bundle.options.precision.kind =
        parse_precision_kind(meta.value("precision_mode", std::string("estimate_tau")));
    bundle.options.precision.tau = bundle.model.tau;
    bundle.options.rng_seed = meta.at("seed").get<std::uint64_t>();
    bundle.options.num_concepts = meta.at("K").get<Index>();
    bundle.objective_trace = meta.at("objective_trace").get<std::vector<double>>();
    bundle.converged = meta.value("converged", false);
    bundle.question_ids = meta.value("question_ids", std::vector<std::string>{});
    bundle.learner_ids = meta.value("learner_ids", std::vector<std::string>{});
    bundle.tag_names = meta.value("tag_names", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw ParseError(meta_path + ": " + e.what());
  }
  bundle.model.check_shapes();
  if (bundle.model.num_concepts() != bundle.options.num_concepts)
    throw ParseError(meta_path + ": K disagrees with W.csv");
  return bundle;
}

// ---------------------------------------------------------------------------
// Concept graph

std::string to_string(EdgeStatus status) {
  switch (status) {
    case EdgeStatus::kept: return "kept";
    case EdgeStatus::removed: return "removed";
    case EdgeStatus::discovered: return "discovered";
  }
  return "?";
}

std::vector<GraphEdge> classify_edges(const Matrix& W, const BoolMatrix& tagged,
                                      double threshold) {
  if (!(threshold >= 0)) throw std::invalid_argument("classify_edges: negative threshold");
  if (tagged.size() && (tagged.rows() != W.rows() || tagged.cols() != W.cols()))
    throw std::invalid_argument("classify_edges: tag mask size differs from W");
  std::vector<GraphEdge> edges;
  for (Index i = 0; i < W.rows(); ++i) {
    for (Index k = 0; k < W.cols(); ++k) {
      const bool in_tags = tagged.size() && tagged(i, k);
      const bool strong = W(i, k) > threshold;
      if (in_tags)
        edges.push_back({i, k, W(i, k), strong ? EdgeStatus::kept : EdgeStatus::removed});
      else if (strong)
        edges.push_back({i, k, W(i, k), EdgeStatus::discovered});
    }
  }
  return edges;
}

std::string export_concept_graph(const FactorModel& model, const TagSupport* tags,
                                 const std::vector<std::string>& tag_names,
                                 const std::vector<std::string>& question_ids,
                                 double threshold) {
  model.check_shapes();
  const Index Q = model.num_questions();
  const Index K = model.num_concepts();
  if (!tag_names.empty() && static_cast<Index>(tag_names.size()) != K)
    throw std::invalid_argument("export_concept_graph: tag name count differs from K");
  if (!question_ids.empty() && static_cast<Index>(question_ids.size()) != Q)
    throw std::invalid_argument("export_concept_graph: question id count differs from Q");
  if (tags && tags->num_concepts() != K)
    throw std::invalid_argument("export_concept_graph: tag count differs from K");

  const BoolMatrix mask = tags ? tags->mask(Q) : BoolMatrix();
  const auto edges = classify_edges(model.W, mask, threshold);
  const double w_max = model.W.size() ? model.W.maxCoeff() : 0.0;

  std::ostringstream dot;
  dot << "graph concepts {\n";
  dot << "  node [fontname=\"Helvetica\"];\n";
  for (Index i = 0; i < Q; ++i) {
    const std::string name =
        question_ids.empty() ? "Q" + std::to_string(i + 1) : question_ids[static_cast<std::size_t>(i)];
    dot << "  q" << i << " [shape=box, label=\"" << dot_escape(name) << "\\n"
        << fixed2(model.mu(i)) << "\"];\n";
  }
  for (Index k = 0; k < K; ++k) {
    const std::string name =
        tag_names.empty() ? std::to_string(k + 1) : tag_names[static_cast<std::size_t>(k)];
    dot << "  c" << k << " [shape=circle, label=\"" << dot_escape(name) << "\"];\n";
  }
  for (const auto& e : edges) {
    const double width = w_max > 0 ? 0.5 + 4.5 * e.weight / w_max : 0.5;
    const char* style = e.status == EdgeStatus::removed ? "dashed" : "solid";
    const char* color = e.status == EdgeStatus::kept      ? "black"
                        : e.status == EdgeStatus::removed ? "red"
                                                          : "green";
    dot << "  q" << e.question << " -- c" << e.concept_index << " [color=" << color
        << ", style=" << style << ", penwidth=" << fixed2(width) << "];\n";
  }
  dot << "}\n";
  return dot.str();
}

// ---------------------------------------------------------------------------
// Reports

void write_report_csv(std::ostream& out, const ExperimentReport& report) {
  std::vector<std::string> names;
  for (const auto& r : report.records)
    for (const auto& m : r.metrics)
      if (std::find(names.begin(), names.end(), m.first) == names.end()) names.push_back(m.first);
  out << "variant,setting,trial,data_seed,lambda,eta";
  for (const auto& n : names) out << ',' << n;
  out << ",error\n";
  for (const auto& r : report.records) {
    out << r.variant << ',' << format_double(r.setting) << ',' << r.trial << ',' << r.data_seed
        << ',' << format_double(r.lambda) << ',' << format_double(r.eta);
    for (const auto& n : names) {
      out << ',';
      for (const auto& m : r.metrics)
        if (m.first == n) out << format_double(m.second);
    }
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << ',' << err << '\n';
  }
}

void write_report_json(std::ostream& out, const ExperimentReport& report) {
  json j;
  j["name"] = report.name;
  json config = json::object();
  for (const auto& [k, v] : report.config) config[k] = v;
  j["config"] = config;
  int failed = 0;
  for (const auto& r : report.records) failed += !r.error.empty();
  j["records"] = report.records.size();
  j["failed_records"] = failed;
  json rows = json::array();
  for (const auto& s : report.summary)
    rows.push_back({{"variant", s.variant},
                    {"setting", s.setting},
                    {"metric", s.metric},
                    {"count", s.count},
                    {"q1", number_to_json(s.q1)},
                    {"median", number_to_json(s.median)},
                    {"q3", number_to_json(s.q3)}});
  j["summary"] = rows;
  out << j.dump(2) << '\n';
}

}  // namespace ordfa
