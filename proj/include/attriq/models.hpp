#pragma once

// Built-in differentiable QA models.
//
// ClassifierModel: mean of token embeddings -> affine -> softmax over answer
// classes.
//
// TableQAModel: for each of four decode steps, attention over question token
// embeddings with a learned per-step query produces a question summary h_t.
// Operator logits combine h_t with the mean column-name embedding (the table
// context); column logits score each column-name embedding against a
// projection of h_t and add the two match-prior vectors scaled by learned
// scalars. Hard programs are per-step argmaxes.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "attriq/autodiff.hpp"
#include "attriq/instance.hpp"
#include "attriq/table.hpp"
#include "attriq/tensor.hpp"
#include "attriq/vocabulary.hpp"

namespace attriq {

inline constexpr std::size_t kDefaultDim = 16;
inline constexpr std::size_t kSteps = kProgramLength;

/// Lowest index among maxima.
inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Difference between the best and second-best entry (infinity for a single entry).
inline double top_margin(std::span<const double> v) {
  if (v.size() < 2) return std::numeric_limits<double>::infinity();
  std::size_t best = argmax(v);
  double second = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (i != best) second = std::max(second, v[i]);
  return v[best] - second;
}

/// Normalizes a column name into a single vocabulary token.
inline std::string column_token(std::string_view name) {
  std::string out;
  for (char c : name) out += c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// ---- preprocessing -----------------------------------------------------------

struct PreparedQuestion {
  std::vector<std::string> tokens;   // question followed by any match markers
  std::vector<double> column_priors;  // per column: share of question tokens naming it
  std::vector<double> entry_priors;   // per column; kept as a separate all-zero input
};

/// Appends <tm> when a question token equals some cell and <cm> when one
/// equals a column name. Markers already present are not duplicated and do not
/// count towards the question length, so the function is idempotent.
inline PreparedQuestion preprocess_matches(std::span<const std::string> question, const Table& table) {
  PreparedQuestion out;
  out.tokens.assign(question.begin(), question.end());
  out.column_priors.assign(table.column_count(), 0.0);
  out.entry_priors.assign(table.column_count(), 0.0);

  std::vector<std::string> words;
  for (const auto& t : question)
    if (!is_match_token(t)) words.push_back(t);
  if (words.empty()) return out;

  bool table_match = false, column_match = false;
  for (const auto& w : words) {
    for (const auto& row : table.rows)
      for (const Cell& c : row)
        if (cell_text(c) == w) table_match = true;
    for (std::size_t c = 0; c < table.column_count(); ++c) {
      if (column_token(table.columns[c]) == w) {
        column_match = true;
        out.column_priors[c] += 1.0;
      }
    }
  }
  for (double& p : out.column_priors) p /= static_cast<double>(words.size());

  auto has = [&](std::string_view tok) { return std::find(out.tokens.begin(), out.tokens.end(), tok) != out.tokens.end(); };
  if (table_match && !has(kTableMatchToken)) out.tokens.emplace_back(kTableMatchToken);
  if (column_match && !has(kColumnMatchToken)) out.tokens.emplace_back(kColumnMatchToken);
  return out;
}

// ---- shared graph plumbing -----------------------------------------------------

using ParamList = std::vector<std::pair<std::string, Tensor*>>;
using ConstParamList = std::vector<std::pair<std::string, const Tensor*>>;

/// Adds model parameters to a tape, either as constants (inference,
/// attribution) or as free inputs whose gradients training reads back.
class ParamBuilder {
 public:
  ParamBuilder(ad::Tape& tape, bool trainable) : tape_(tape), trainable_(trainable) {}

  ad::NodeId operator()(const std::string& name, const Tensor& t) {
    if (!trainable_) return tape_.constant(t, name);
    ad::NodeId id = tape_.input(t.shape, name);
    nodes_.emplace_back(id, name);
    return id;
  }

  std::vector<std::pair<ad::NodeId, std::string>> take() { return std::move(nodes_); }

 private:
  ad::Tape& tape_;
  bool trainable_;
  std::vector<std::pair<ad::NodeId, std::string>> nodes_;
};

/// Token ids for a question; an empty question reads as a single PAD.
inline std::vector<std::size_t> question_ids(const Vocabulary& vocab, std::span<const std::string> tokens) {
  if (tokens.empty()) return {Vocabulary::kPad};
  return vocab.encode(tokens);
}

/// Rows of an embedding table gathered into an (ids x dim) matrix.
inline Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  const std::size_t d = table.shape[1];
  Tensor out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::copy_n(table.row(ids[r]).begin(), d, out.row(r).begin());
  return out;
}

inline Tensor random_normal(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.data) v = dist(rng);
  return t;
}

// ---- classifier ----------------------------------------------------------------

struct ClassifierModel {
  Vocabulary vocab;
  std::vector<std::string> classes;
  std::size_t dim = kDefaultDim;
  Tensor embedding;  // |V| x d, PAD row held at zero
  Tensor weight;     // d x C
  Tensor bias;       // C

  static ClassifierModel create(Vocabulary vocab, std::vector<std::string> classes, std::size_t dim,
                                std::uint64_t seed, double scale = 0.1) {
    ClassifierModel m;
    m.vocab = std::move(vocab);
    m.classes = std::move(classes);
    m.dim = dim;
    std::mt19937_64 rng(seed);
    m.embedding = random_normal({m.vocab.size(), dim}, scale, rng);
    for (double& v : m.embedding.row(Vocabulary::kPad)) v = 0.0;
    m.weight = random_normal({dim, m.classes.size()}, scale, rng);
    m.bias = Tensor({m.classes.size()});
    return m;
  }

  /// A model with every weight zero: uniform predictions everywhere.
  static ClassifierModel zeros(Vocabulary vocab, std::vector<std::string> classes, std::size_t dim = kDefaultDim) {
    ClassifierModel m;
    m.vocab = std::move(vocab);
    m.classes = std::move(classes);
    m.dim = dim;
    m.embedding = Tensor({m.vocab.size(), dim});
    m.weight = Tensor({dim, m.classes.size()});
    m.bias = Tensor({m.classes.size()});
    return m;
  }

  std::size_t class_count() const { return classes.size(); }

  std::optional<std::size_t> class_index(const std::string& name) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (classes[i] == name) return i;
    return std::nullopt;
  }

  ParamList parameters() { return {{"embedding", &embedding}, {"weight", &weight}, {"bias", &bias}}; }
  ConstParamList parameters() const { return {{"embedding", &embedding}, {"weight", &weight}, {"bias", &bias}}; }

  void validate() const {
    if (embedding.shape != Shape{vocab.size(), dim} || weight.shape != Shape{dim, classes.size()} ||
        bias.shape != Shape{classes.size()})
      throw DataError("classifier: parameter shapes do not match vocabulary/dim/classes");
    for (const auto& [name, t] : parameters())
      if (!t->all_finite()) throw DataError("classifier: non-finite weights in " + name);
  }

  friend bool operator==(const ClassifierModel&, const ClassifierModel&) = default;
};

struct ClassifierGraph {
  ad::Tape tape;
  ad::NodeId question = 0;  // n x d token embeddings
  ad::NodeId logits = 0;
  ad::NodeId probs = 0;
  std::vector<std::pair<ad::NodeId, std::string>> params;  // trainable graphs only
};

namespace detail {

inline void classifier_head(ClassifierGraph& g, ParamBuilder& p, const ClassifierModel& m) {
  ad::Tape& t = g.tape;
  ad::NodeId pooled = t.mean(g.question, ad::Axis::rows);
  g.logits = t.add(t.matmul(pooled, p("weight", m.weight)), p("bias", m.bias));
  g.probs = t.softmax(g.logits);
}

}  // namespace detail

/// Graph whose question embeddings (n_tokens x d) are a free input.
inline ClassifierGraph build_classifier_graph(const ClassifierModel& m, std::size_t n_tokens) {
  ClassifierGraph g;
  ParamBuilder p(g.tape, false);
  g.question = g.tape.input({n_tokens, m.dim}, "question");
  detail::classifier_head(g, p, m);
  return g;
}

/// Graph with every parameter as a free input and the question gathered from
/// the embedding table by id.
inline ClassifierGraph build_classifier_train_graph(const ClassifierModel& m, std::vector<std::size_t> ids) {
  ClassifierGraph g;
  ParamBuilder p(g.tape, true);
  ad::NodeId emb = p("embedding", m.embedding);
  g.question = g.tape.row_select(emb, std::move(ids));
  detail::classifier_head(g, p, m);
  g.params = p.take();
  return g;
}

struct ClassifierPrediction {
  std::vector<double> probs;
  std::size_t label = 0;
};

inline ClassifierPrediction classifier_predict_tokens(const ClassifierModel& m, std::span<const std::string> tokens) {
  auto ids = question_ids(m.vocab, tokens);
  ClassifierGraph g = build_classifier_graph(m, ids.size());
  auto values = ad::forward(g.tape, {{g.question, gather_rows(m.embedding, ids)}});
  ClassifierPrediction out;
  out.probs = values[g.probs].data;
  out.label = argmax(out.probs);
  return out;
}

inline ClassifierPrediction classifier_predict(const ClassifierModel& m, const Instance& in) {
  return classifier_predict_tokens(m, in.question);
}

// ---- table QA --------------------------------------------------------------------

struct TableQAModel {
  Vocabulary vocab;
  std::size_t dim = kDefaultDim;
  Tensor embedding;                          // |V| x d, PAD row held at zero
  std::array<Tensor, kSteps> query;          // d
  std::array<Tensor, kSteps> op_weight;      // d x K
  std::array<Tensor, kSteps> op_context;     // d x K, applied to the mean column embedding
  std::array<Tensor, kSteps> op_bias;        // K
  std::array<Tensor, kSteps> col_weight;     // d x d
  std::array<Tensor, kSteps> col_bias;       // d
  Tensor prior_weight = Tensor({1});         // scales the column-name match prior
  Tensor entry_weight = Tensor({1});         // scales the entry match prior

  static TableQAModel zeros(Vocabulary vocab, std::size_t dim = kDefaultDim) {
    TableQAModel m;
    m.vocab = std::move(vocab);
    m.dim = dim;
    m.embedding = Tensor({m.vocab.size(), dim});
    for (std::size_t t = 0; t < kSteps; ++t) {
      m.query[t] = Tensor({dim});
      m.op_weight[t] = Tensor({dim, kOperatorCount});
      m.op_context[t] = Tensor({dim, kOperatorCount});
      m.op_bias[t] = Tensor({kOperatorCount});
      m.col_weight[t] = Tensor({dim, dim});
      m.col_bias[t] = Tensor({dim});
    }
    return m;
  }

  static TableQAModel create(Vocabulary vocab, std::size_t dim, std::uint64_t seed, double scale = 0.1) {
    TableQAModel m = zeros(std::move(vocab), dim);
    std::mt19937_64 rng(seed);
    m.embedding = random_normal(m.embedding.shape, scale, rng);
    for (double& v : m.embedding.row(Vocabulary::kPad)) v = 0.0;
    for (std::size_t t = 0; t < kSteps; ++t) {
      m.query[t] = random_normal(m.query[t].shape, scale, rng);
      m.op_weight[t] = random_normal(m.op_weight[t].shape, scale, rng);
      m.op_context[t] = random_normal(m.op_context[t].shape, scale, rng);
      m.col_weight[t] = random_normal(m.col_weight[t].shape, scale, rng);
      m.col_bias[t] = random_normal(m.col_bias[t].shape, scale, rng);
    }
    m.prior_weight[0] = 1.0;
    return m;
  }

  template <class Self, class List>
  static List collect(Self& self) {
    List out{{"embedding", &self.embedding}};
    for (std::size_t t = 0; t < kSteps; ++t) {
      const std::string s = "." + std::to_string(t);
      out.emplace_back("query" + s, &self.query[t]);
      out.emplace_back("op_weight" + s, &self.op_weight[t]);
      out.emplace_back("op_context" + s, &self.op_context[t]);
      out.emplace_back("op_bias" + s, &self.op_bias[t]);
      out.emplace_back("col_weight" + s, &self.col_weight[t]);
      out.emplace_back("col_bias" + s, &self.col_bias[t]);
    }
    out.emplace_back("prior_weight", &self.prior_weight);
    out.emplace_back("entry_weight", &self.entry_weight);
    return out;
  }

  ParamList parameters() { return collect<TableQAModel, ParamList>(*this); }
  ConstParamList parameters() const { return collect<const TableQAModel, ConstParamList>(*this); }

  void validate() const {
    TableQAModel shape_ref = zeros(vocab, dim);
    auto mine = parameters();
    auto ref = shape_ref.parameters();
    for (std::size_t i = 0; i < mine.size(); ++i) {
      if (mine[i].second->shape != ref[i].second->shape)
        throw DataError("table model: parameter " + mine[i].first + " has shape " +
                        shape_string(mine[i].second->shape) + ", expected " + shape_string(ref[i].second->shape));
      if (!mine[i].second->all_finite()) throw DataError("table model: non-finite weights in " + mine[i].first);
    }
  }

  friend bool operator==(const TableQAModel&, const TableQAModel&) = default;
};

/// Dense inputs of the table model for one (question, table) pair.
struct TableFeatures {
  std::vector<std::string> tokens;  // prepared question tokens
  std::vector<std::string> column_names;
  Tensor question;       // n x d
  Tensor columns;        // m x d
  Tensor column_priors;  // m
  Tensor entry_priors;   // m
};

inline std::vector<std::size_t> column_ids(const Vocabulary& vocab, const Table& table) {
  std::vector<std::size_t> ids;
  for (const auto& c : table.columns) ids.push_back(vocab.index(column_token(c)));
  return ids;
}

inline TableFeatures table_features(const TableQAModel& m, const PreparedQuestion& prepared, const Table& table) {
  if (table.column_count() == 0) throw DataError("table model: table has no columns");
  TableFeatures f;
  f.tokens = prepared.tokens;
  f.column_names = table.columns;
  f.question = gather_rows(m.embedding, question_ids(m.vocab, prepared.tokens));
  f.columns = gather_rows(m.embedding, column_ids(m.vocab, table));
  f.column_priors = Tensor::vector(prepared.column_priors);
  f.entry_priors = Tensor::vector(prepared.entry_priors);
  return f;
}

struct TableQAGraph {
  ad::Tape tape;
  ad::NodeId question = 0;
  ad::NodeId columns = 0;
  ad::NodeId column_priors = 0;
  ad::NodeId entry_priors = 0;
  std::array<ad::NodeId, kSteps> op_logits{}, op_probs{}, col_logits{}, col_probs{};
  std::vector<std::pair<ad::NodeId, std::string>> params;

  ad::Bindings bind(const TableFeatures& f) const {
    return {{question, f.question}, {columns, f.columns}, {column_priors, f.column_priors}, {entry_priors, f.entry_priors}};
  }
};

namespace detail {

inline void tableqa_body(TableQAGraph& g, ParamBuilder& p, const TableQAModel& m) {
  ad::Tape& t = g.tape;
  ad::NodeId context = t.mean(g.columns, ad::Axis::rows);
  ad::NodeId prior_w = p("prior_weight", m.prior_weight);
  ad::NodeId entry_w = p("entry_weight", m.entry_weight);
  ad::NodeId priors = t.add(t.mul(prior_w, g.column_priors), t.mul(entry_w, g.entry_priors));
  for (std::size_t s = 0; s < kSteps; ++s) {
    const std::string k = "." + std::to_string(s);
    ad::NodeId scores = t.matmul(g.question, p("query" + k, m.query[s]));
    ad::NodeId h = t.matmul(t.softmax(scores), g.question);
    g.op_logits[s] = t.add(t.add(t.matmul(h, p("op_weight" + k, m.op_weight[s])),
                                 t.matmul(context, p("op_context" + k, m.op_context[s]))),
                           p("op_bias" + k, m.op_bias[s]));
    g.op_probs[s] = t.softmax(g.op_logits[s]);
    ad::NodeId probe = t.add(t.matmul(h, p("col_weight" + k, m.col_weight[s])), p("col_bias" + k, m.col_bias[s]));
    g.col_logits[s] = t.add(t.matmul(g.columns, probe), priors);
    g.col_probs[s] = t.softmax(g.col_logits[s]);
  }
}

}  // namespace detail

/// Graph whose question embeddings, column-name embeddings and both prior
/// vectors are free inputs.
inline TableQAGraph build_tableqa_graph(const TableQAModel& m, std::size_t n_tokens, std::size_t n_columns) {
  if (n_columns == 0) throw DataError("table model: table has no columns");
  TableQAGraph g;
  ParamBuilder p(g.tape, false);
  g.question = g.tape.input({n_tokens, m.dim}, "question");
  g.columns = g.tape.input({n_columns, m.dim}, "columns");
  g.column_priors = g.tape.input({n_columns}, "column_priors");
  g.entry_priors = g.tape.input({n_columns}, "entry_priors");
  detail::tableqa_body(g, p, m);
  return g;
}

/// Training graph: parameters are free inputs and embeddings are gathered by id.
/// The prior vectors remain free inputs.
inline TableQAGraph build_tableqa_train_graph(const TableQAModel& m, std::vector<std::size_t> token_ids,
                                              std::vector<std::size_t> col_ids) {
  if (col_ids.empty()) throw DataError("table model: table has no columns");
  TableQAGraph g;
  ParamBuilder p(g.tape, true);
  ad::NodeId emb = p("embedding", m.embedding);
  const std::size_t m_cols = col_ids.size();
  g.question = g.tape.row_select(emb, std::move(token_ids));
  g.columns = g.tape.row_select(emb, std::move(col_ids));
  g.column_priors = g.tape.input({m_cols}, "column_priors");
  g.entry_priors = g.tape.input({m_cols}, "entry_priors");
  detail::tableqa_body(g, p, m);
  g.params = p.take();
  return g;
}

struct TableQAPrediction {
  Program program{};
  std::array<std::vector<double>, kSteps> op_probs;
  std::array<std::vector<double>, kSteps> col_probs;
  std::array<double, kSteps> op_margin{};
  std::array<double, kSteps> col_margin{};
  PreparedQuestion prepared;
};

inline TableQAPrediction tableqa_predict_prepared(const TableQAModel& m, const PreparedQuestion& prepared,
                                                  const Table& table) {
  TableFeatures f = table_features(m, prepared, table);
  TableQAGraph g = build_tableqa_graph(m, f.question.shape[0], table.column_count());
  auto values = ad::forward(g.tape, g.bind(f));
  TableQAPrediction out;
  out.prepared = prepared;
  for (std::size_t s = 0; s < kSteps; ++s) {
    out.op_probs[s] = values[g.op_probs[s]].data;
    out.col_probs[s] = values[g.col_probs[s]].data;
    out.op_margin[s] = top_margin(out.op_probs[s]);
    out.col_margin[s] = top_margin(out.col_probs[s]);
    out.program[s] = {kOperators[argmax(out.op_probs[s])], argmax(out.col_probs[s])};
  }
  return out;
}

inline TableQAPrediction tableqa_predict(const TableQAModel& m, std::span<const std::string> question,
                                         const Table& table) {
  return tableqa_predict_prepared(m, preprocess_matches(question, table), table);
}

inline TableQAPrediction tableqa_predict(const TableQAModel& m, const Instance& in) {
  if (!in.table) throw DataError("instance " + in.id + " has no table");
  return tableqa_predict(m, in.question, *in.table);
}

// ---- uniform answer interface ------------------------------------------------------

/// Answer predicted for a (possibly perturbed) question; nullopt when the
/// predicted program cannot be executed.
inline std::optional<Answer> predict_answer(const ClassifierModel& m, [[maybe_unused]] const Instance& in,
                                            std::span<const std::string> question) {
  auto p = classifier_predict_tokens(m, question);
  return Answer::of_cells({m.classes[p.label]});
}

inline std::optional<Answer> predict_answer(const TableQAModel& m, const Instance& in,
                                            std::span<const std::string> question) {
  if (!in.table) throw DataError("instance " + in.id + " has no table");
  auto p = tableqa_predict(m, question, *in.table);
  return try_execute(p.program, *in.table, question);
}

template <class Model>
std::optional<Answer> predict_answer(const Model& m, const Instance& in) {
  return predict_answer(m, in, in.question);
}

inline bool answer_correct(const std::optional<Answer>& predicted, const Answer& gold) {
  return predicted && answers_match(*predicted, gold);
}

template <class Model>
bool answered_correctly(const Model& m, const Instance& in) {
  return answer_correct(predict_answer(m, in), in.gold_answer);
}

}  // namespace attriq
