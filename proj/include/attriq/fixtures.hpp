#pragma once

// Hand-weighted models and small datasets with known behavior. They back the
// test suite and the CLI `--fixture` option.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "attriq/attribution.hpp"
#include "attriq/models.hpp"
#include "attriq/resources.hpp"

namespace attriq::fixtures {

namespace detail {

inline Vocabulary vocab_with(const std::vector<std::vector<std::string>>& groups) {
  Vocabulary v;
  for (const auto& g : groups) v.add_all(g);
  return v;
}

inline std::vector<std::string> phrase_tokens() {
  std::vector<std::string> out;
  for (const auto& p : default_attack_phrases())
    for (auto& t : split_tokens(p)) out.push_back(std::move(t));
  return out;
}

inline void set_embedding(Tensor& emb, const Vocabulary& v, const std::string& tok, std::size_t dim, double value = 1.0) {
  emb.at(*v.find(tok), dim) = value;
}

inline std::size_t op_index(Operator op) { return static_cast<std::size_t>(op); }

/// Sorted medal table: nation plus gold/silver/bronze, descending by gold.
inline Table medal_table(std::mt19937_64& rng, std::size_t rows) {
  static const std::vector<std::string> nations = {"norway", "germany", "canada", "austria",
                                                   "russia", "sweden",  "france", "japan"};
  std::vector<std::string> names = nations;
  std::shuffle(names.begin(), names.end(), rng);
  std::vector<int> pool;
  for (int v = 1; v <= 40; ++v) pool.push_back(v);
  Table t;
  t.columns = {"nation", "gold", "silver", "bronze"};
  std::vector<std::vector<int>> cols(3);
  for (auto& c : cols) {
    std::shuffle(pool.begin(), pool.end(), rng);
    c.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(rows));
  }
  std::sort(cols[0].rbegin(), cols[0].rend());
  for (std::size_t r = 0; r < rows; ++r)
    t.rows.push_back({names[r], static_cast<double>(cols[0][r]), static_cast<double>(cols[1][r]),
                      static_cast<double>(cols[2][r])});
  return t;
}

inline std::size_t best_row(const Table& t, std::size_t col) {
  std::size_t best = 0;
  for (std::size_t r = 1; r < t.row_count(); ++r)
    if (std::get<double>(t.rows[r][col]) > std::get<double>(t.rows[best][col])) best = r;
  return best;
}

}  // namespace detail

inline constexpr std::size_t kFixtureDim = 16;

/// Table model with planted biases. Attention is uniform (zero queries), so
/// h is the mean question embedding. Embedding dims: 0 = `trigger` (selects
/// max at step 2), 1 = "not" (next at step 1), 2 = "lowest" (min at step 2),
/// 8 = entity column names, 9 = numeric column names. Otherwise steps 0-2
/// select reset and step 3 prints the entity column; match priors pick the
/// column named in the question.
inline TableQAModel planted_bias_model(const std::string& trigger = "the") {
  Vocabulary v = detail::vocab_with({{"who", "is", "at", "the", "top", "in", "which", "had", "most", "lowest", "not"},
                                     {"nation", "gold", "silver", "bronze"},
                                     detail::phrase_tokens(),
                                     default_stopwords(),
                                     {trigger}});
  TableQAModel m = TableQAModel::zeros(v, kFixtureDim);
  detail::set_embedding(m.embedding, v, trigger, 0);
  detail::set_embedding(m.embedding, v, "not", 1);
  detail::set_embedding(m.embedding, v, "lowest", 2);
  detail::set_embedding(m.embedding, v, "nation", 8);
  for (const char* c : {"gold", "silver", "bronze"}) detail::set_embedding(m.embedding, v, c, 9);
  const auto op = detail::op_index;
  m.op_weight[2].at(0, op(Operator::max)) = 60.0;
  m.op_weight[1].at(1, op(Operator::next)) = 60.0;
  m.op_weight[2].at(2, op(Operator::min)) = 60.0;
  for (std::size_t s = 0; s < 3; ++s) m.op_bias[s][op(Operator::reset_select)] = 1.0;
  m.op_bias[3][op(Operator::print)] = 1.0;
  m.col_bias[3][8] = 8.0;
  m.col_bias[2][9] = 1.0;
  m.prior_weight[0] = 20.0;
  return m;
}

/// "who is at the top in {col}" over sorted medal tables; the answer is the
/// nation with the largest value in that column.
inline std::vector<Instance> planted_bias_dataset(std::uint64_t seed = 0, std::size_t n = 30) {
  std::mt19937_64 rng(seed);
  const std::vector<std::string> cols = {"gold", "silver", "bronze"};
  std::vector<Instance> out;
  for (std::size_t i = 0; i < n; ++i) {
    Instance in;
    in.id = "planted-" + std::to_string(i);
    Table t = detail::medal_table(rng, 4 + i % 3);
    const std::size_t c = 1 + i % 3;
    in.question = {"who", "is", "at", "the", "top", "in", cols[c - 1]};
    in.pos_tags = std::vector<std::string>{"WP", "VBZ", "IN", "DT", "NN", "IN", "NN"};
    in.subject = Span{4, 5};
    in.gold_answer = Answer::of_cells({t.rows[detail::best_row(t, c)][0]});
    in.gold_program = Program{{{Operator::reset_select, 0}, {Operator::reset_select, 0}, {Operator::max, c},
                               {Operator::print, 0}}};
    in.table = std::move(t);
    out.push_back(std::move(in));
  }
  return out;
}

/// Table model whose step-1 operator reads the table context: a "gold"
/// column name (embedding dim 12) selects prev. With max at step 2 it emits
/// [reset, prev, max, print] on medal tables, empty question included.
inline TableQAModel medal_prev_model() {
  Vocabulary v = detail::vocab_with({{"which", "nation", "had", "the", "most", "gold", "silver", "bronze"},
                                     {"team", "wins", "losses", "points"}});
  TableQAModel m = TableQAModel::zeros(v, kFixtureDim);
  detail::set_embedding(m.embedding, v, "nation", 8);
  detail::set_embedding(m.embedding, v, "team", 8);
  for (const char* c : {"gold", "silver", "bronze", "wins", "losses", "points"})
    detail::set_embedding(m.embedding, v, c, 9);
  detail::set_embedding(m.embedding, v, "gold", 12);
  const auto op = detail::op_index;
  m.op_context[1].at(12, op(Operator::prev)) = 20.0;
  m.op_bias[0][op(Operator::reset_select)] = 1.0;
  m.op_bias[1][op(Operator::reset_select)] = 1.0;
  m.op_bias[2][op(Operator::max)] = 1.0;
  m.op_bias[3][op(Operator::print)] = 1.0;
  m.col_bias[3][8] = 5.0;
  m.col_bias[2][9] = 1.0;
  m.prior_weight[0] = 20.0;
  return m;
}

/// "which nation had the most gold" over medal tables sorted by gold.
inline std::vector<Instance> medal_dataset(std::uint64_t seed = 0, std::size_t n = 20) {
  std::mt19937_64 rng(seed);
  std::vector<Instance> out;
  for (std::size_t i = 0; i < n; ++i) {
    Instance in;
    in.id = "medal-" + std::to_string(i);
    Table t = detail::medal_table(rng, 4 + i % 3);
    in.question = {"which", "nation", "had", "the", "most", "gold"};
    in.pos_tags = std::vector<std::string>{"WDT", "NN", "VBD", "DT", "JJS", "NN"};
    in.subject = Span{1, 2};
    in.gold_answer = Answer::of_cells({t.rows[detail::best_row(t, 1)][0]});
    in.gold_program = Program{{{Operator::reset_select, 0}, {Operator::reset_select, 0}, {Operator::max, 1},
                               {Operator::print, 0}}};
    in.table = std::move(t);
    out.push_back(std::move(in));
  }
  return out;
}

/// Non-medal tables (team, wins, losses, points) for default-program grouping.
inline std::vector<Table> mixed_tables(std::uint64_t seed = 0, std::size_t n = 6) {
  std::mt19937_64 rng(seed);
  std::vector<Table> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 2 == 0) {
      out.push_back(detail::medal_table(rng, 4 + i % 3));
      continue;
    }
    Table t;
    t.columns = {"team", "wins", "losses", "points"};
    const std::vector<std::string> teams = {"eagles", "tigers", "sharks", "wolves", "bears"};
    for (std::size_t r = 0; r < 4; ++r)
      t.rows.push_back({teams[r], static_cast<double>(10 + r + i), static_cast<double>(20 - r),
                        static_cast<double>(3 * r + i)});
    out.push_back(std::move(t));
  }
  return out;
}

// ---- classifiers ---------------------------------------------------------------------

inline const std::vector<std::string>& fixture_objects() {
  static const std::vector<std::string> o = {"ball", "cube", "car", "cup"};
  return o;
}

/// Only "color" has a nonzero embedding: questions containing it answer
/// "red", everything else answers "2".
inline ClassifierModel color_classifier() {
  Vocabulary v = detail::vocab_with({{"what", "color", "is", "the", "how", "many", "are", "there"}, fixture_objects()});
  ClassifierModel m = ClassifierModel::zeros(v, {"red", "2"}, kFixtureDim);
  detail::set_embedding(m.embedding, v, "color", 0);
  m.weight.at(0, 0) = 10.0;
  m.bias[1] = 0.05;
  return m;
}

/// "what color is the X" (gold red) and "how many X are there" (gold 2).
inline std::vector<Instance> color_dataset() {
  std::vector<Instance> out;
  for (const auto& o : fixture_objects()) {
    Instance a;
    a.id = "color-" + o;
    a.question = {"what", "color", "is", "the", o};
    a.pos_tags = std::vector<std::string>{"WP", "NN", "VBZ", "DT", "NN"};
    a.subject = Span{4, 5};
    a.gold_answer = Answer::of_cells({std::string("red")});
    out.push_back(a);
    Instance b;
    b.id = "count-" + o;
    b.question = {"how", "many", o, "are", "there"};
    b.pos_tags = std::vector<std::string>{"WRB", "JJ", "NN", "VBP", "EX"};
    b.subject = Span{2, 3};
    b.gold_answer = Answer::of_cells({std::string("2")});
    out.push_back(b);
  }
  return out;
}

/// Answers from the subject noun alone: each object has its own class and an
/// unknown noun falls through to "none".
inline ClassifierModel subject_keyed_classifier() {
  Vocabulary v = detail::vocab_with({{"what", "color", "is", "the"}, fixture_objects()});
  std::vector<std::string> classes = {"red", "blue", "green", "yellow", "none"};
  ClassifierModel m = ClassifierModel::zeros(v, classes, kFixtureDim);
  for (std::size_t i = 0; i < fixture_objects().size(); ++i) {
    detail::set_embedding(m.embedding, v, fixture_objects()[i], i);
    m.weight.at(i, i) = 10.0;
  }
  m.bias[4] = 0.05;
  return m;
}

inline std::vector<Instance> subject_dataset() {
  const std::vector<std::string> colors = {"red", "blue", "green", "yellow"};
  std::vector<Instance> out;
  for (std::size_t i = 0; i < fixture_objects().size(); ++i) {
    Instance in;
    in.id = "subject-" + fixture_objects()[i];
    in.question = {"what", "color", "is", "the", fixture_objects()[i]};
    in.pos_tags = std::vector<std::string>{"WP", "NN", "VBZ", "DT", "NN"};
    in.subject = Span{4, 5};
    in.gold_answer = Answer::of_cells({colors[i]});
    out.push_back(std::move(in));
  }
  return out;
}

/// Two seeded classifiers with shared vocabulary and embeddings and
/// independent output heads.
inline std::pair<ClassifierModel, ClassifierModel> linear_pair(std::uint64_t seed = 0) {
  Vocabulary v = detail::vocab_with({{"what", "color", "is", "the", "how", "many", "are", "there"}, fixture_objects()});
  ClassifierModel a = ClassifierModel::create(v, {"red", "2", "yes"}, 8, seed, 0.8);
  ClassifierModel b = ClassifierModel::create(v, {"red", "2", "yes"}, 8, seed + 1, 0.8);
  b.embedding = a.embedding;
  return {a, b};
}

// ---- tapes -----------------------------------------------------------------------------

/// F(x) = w . x + c with w = (2, -1, 0.5), input (1, 1, 4), baseline 0.
inline AttributionProblem affine_problem() {
  AttributionProblem p;
  ad::NodeId x = p.tape.input({3}, "x");
  ad::NodeId w = p.tape.constant(Tensor::vector({2.0, -1.0, 0.5}));
  p.target = p.tape.add(p.tape.dot(w, x), p.tape.constant(Tensor::scalar(0.75)));
  p.features.push_back({"x", x, Tensor::vector({1.0, 1.0, 4.0}), Tensor({3})});
  return p;
}

/// F(x) = x1 * x2 from (0, 0) to (1, 1).
inline AttributionProblem product_problem() {
  AttributionProblem p;
  ad::NodeId x = p.tape.input({2}, "x");
  p.target = p.tape.mul(p.tape.pick(x, 0), p.tape.pick(x, 1));
  p.features.push_back({"x", x, Tensor::vector({1.0, 1.0}), Tensor({2})});
  return p;
}

/// Seeded one-hidden-layer tanh network ending in a softmax probability.
inline AttributionProblem smooth_mlp_problem(std::uint64_t seed = 0, std::size_t in = 6, std::size_t hidden = 8) {
  std::mt19937_64 rng(seed);
  AttributionProblem p;
  ad::Tape& t = p.tape;
  ad::NodeId x = t.input({in}, "x");
  ad::NodeId w1 = t.constant(random_normal({in, hidden}, 0.8, rng));
  ad::NodeId b1 = t.constant(random_normal({hidden}, 0.3, rng));
  ad::NodeId w2 = t.constant(random_normal({hidden, 3}, 1.0, rng));
  ad::NodeId h = t.tanh(t.add(t.matmul(x, w1), b1));
  p.target = t.pick(t.softmax(t.matmul(h, w2)), 0);
  p.features.push_back({"x", x, random_normal({in}, 1.0, rng), Tensor({in})});
  return p;
}

}  // namespace attriq::fixtures
