#pragma once

// Integrated Gradients.
//
// For features x with baseline x', the attribution of coordinate i is
//   (x_i - x'_i) * integral_0^1 dF(x' + a (x - x')) / dx_i da,
// approximated by a quadrature rule over a in [0, 1]. The baseline question is
// the PAD embedding at every position and both table-match prior vectors are
// zero; the table itself is left unchanged.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "attriq/autodiff.hpp"
#include "attriq/instance.hpp"
#include "attriq/models.hpp"
#include "json.hpp"

namespace attriq {

enum class Quadrature { left_riemann, trapezoid };

inline std::string quadrature_name(Quadrature q) { return q == Quadrature::trapezoid ? "trapezoid" : "left-riemann"; }

inline std::optional<Quadrature> parse_quadrature(std::string_view s) {
  if (s == "trapezoid") return Quadrature::trapezoid;
  if (s == "left-riemann" || s == "left_riemann" || s == "riemann") return Quadrature::left_riemann;
  return std::nullopt;
}

struct ClassTarget {
  std::size_t cls = 0;
};
struct OperatorTarget {
  std::size_t step = 0;
  std::size_t op = 0;
};
struct ColumnTarget {
  std::size_t step = 0;
  std::size_t column = 0;
};
using TargetSelector = std::variant<ClassTarget, OperatorTarget, ColumnTarget>;

struct IGConfig {
  std::size_t steps = 64;
  Quadrature quadrature = Quadrature::trapezoid;
  /// Unset: the argmax selection at the input.
  std::optional<TargetSelector> target;
};

/// (alpha, weight) pairs in ascending alpha.
inline std::vector<std::pair<double, double>> quadrature_nodes(std::size_t m, Quadrature q) {
  if (m == 0) throw Error("integrated gradients: step count must be at least 1");
  std::vector<std::pair<double, double>> nodes;
  const double h = 1.0 / static_cast<double>(m);
  if (q == Quadrature::trapezoid) {
    for (std::size_t k = 0; k <= m; ++k)
      nodes.emplace_back(static_cast<double>(k) * h, (k == 0 || k == m) ? 0.5 * h : h);
  } else {
    for (std::size_t k = 0; k < m; ++k) nodes.emplace_back(static_cast<double>(k) * h, h);
  }
  return nodes;
}

// ---- generic path integral ----------------------------------------------------

/// One attributed input of a tape together with its baseline value.
struct FeatureBlock {
  std::string name;
  ad::NodeId node = 0;
  Tensor input;
  Tensor baseline;
};

/// A scalar target on a tape; `fixed` binds the inputs held constant along the path.
struct AttributionProblem {
  ad::Tape tape;
  ad::Bindings fixed;
  std::vector<FeatureBlock> features;
  ad::NodeId target = 0;
};

struct PathIntegral {
  std::vector<Tensor> attributions;  // one per feature block
  double f_input = 0.0;
  double f_baseline = 0.0;
  double residual = 0.0;  // |sum attributions - (F(x) - F(x'))|
};

inline ad::Bindings bind_at(const AttributionProblem& p, double alpha) {
  ad::Bindings b = p.fixed;
  for (const auto& f : p.features) {
    Tensor t(f.input.shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = f.baseline[i] + alpha * (f.input[i] - f.baseline[i]);
    b[f.node] = std::move(t);
  }
  return b;
}

inline ad::Bindings bind_endpoint(const AttributionProblem& p, bool input) {
  ad::Bindings b = p.fixed;
  for (const auto& f : p.features) b[f.node] = input ? f.input : f.baseline;
  return b;
}

/// Integrated gradients of `p.target` for every feature block. Quadrature
/// contributions are summed in ascending alpha.
inline PathIntegral integrate_gradients(const AttributionProblem& p, std::size_t steps, Quadrature q) {
  for (const auto& f : p.features)
    if (f.input.shape != f.baseline.shape) throw ShapeError("feature " + f.name + ": input and baseline shapes differ");
  PathIntegral out;
  out.f_input = ad::forward(p.tape, bind_endpoint(p, true))[p.target][0];
  out.f_baseline = ad::forward(p.tape, bind_endpoint(p, false))[p.target][0];

  std::vector<Tensor> integral;
  for (const auto& f : p.features) integral.emplace_back(f.input.shape);
  // Nodes are summed with relative weights (1/2 at trapezoid ends, 1
  // elsewhere) and divided by m once, so a constant gradient integrates
  // exactly.
  const auto nodes = quadrature_nodes(steps, q);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const double alpha = nodes[k].first;
    const double weight = q == Quadrature::trapezoid && (k == 0 || k == steps) ? 0.5 : 1.0;
    ad::Gradients g;
    try {
      auto values = ad::forward(p.tape, bind_at(p, alpha));
      g = ad::backward(p.tape, values, p.target);
    } catch (const NonFiniteError& e) {
      throw Error("integrated gradients: non-finite value at alpha=" + std::to_string(alpha) + " (" + e.what() + ")");
    }
    for (std::size_t b = 0; b < p.features.size(); ++b) {
      const Tensor& gb = g.at(p.features[b].node);
      for (std::size_t i = 0; i < gb.size(); ++i) {
        if (!std::isfinite(gb[i]))
          throw Error("integrated gradients: non-finite gradient at alpha=" + std::to_string(alpha));
        integral[b][i] += weight * gb[i];
      }
    }
  }

  double total = 0.0;
  for (std::size_t b = 0; b < p.features.size(); ++b) {
    const auto& f = p.features[b];
    Tensor a(f.input.shape);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double diff = f.input[i] - f.baseline[i];
      a[i] = diff == 0.0 ? 0.0 : diff * (integral[b][i] / static_cast<double>(steps));
      total += a[i];
    }
    out.attributions.push_back(std::move(a));
  }
  out.residual = std::abs(total - (out.f_input - out.f_baseline));
  return out;
}

// ---- reports ----------------------------------------------------------------------

struct AttributionReport {
  std::string instance_id;
  std::string target;  // "class", "op[t]" or "col[t]"
  std::vector<std::string> tokens;
  std::vector<std::vector<double>> token_features;  // tokens x embedding dims
  std::vector<double> token_scores;                 // per-token sums over dims
  std::vector<std::string> prior_names;
  std::vector<double> prior_scores;
  double f_input = 0.0;
  double f_baseline = 0.0;
  double residual = 0.0;
  std::string predicted;           // selection at the input
  std::string baseline_predicted;  // selection at the baseline
  bool omitted = false;            // both selections agree
  std::string prediction;          // model answer text at the input
  std::string gold;
  std::size_t steps = 0;
  std::string quadrature;

  friend bool operator==(const AttributionReport&, const AttributionReport&) = default;
};

/// The baseline of an instance: every question token becomes PAD (same
/// length) and the table is untouched. Prior vectors derived from a PAD
/// question are all zero.
struct Baseline {
  Instance instance;
  std::vector<double> column_priors;
  std::vector<double> entry_priors;
};

inline Baseline make_baseline(const Instance& in) {
  Baseline b;
  b.instance = in;
  b.instance.question.assign(in.question.size(), std::string(kPadToken));
  b.instance.pos_tags.reset();
  b.instance.subject.reset();
  if (in.table) {
    b.column_priors.assign(in.table->column_count(), 0.0);
    b.entry_priors.assign(in.table->column_count(), 0.0);
  }
  return b;
}

inline Tensor pad_rows(const Tensor& embedding, std::size_t n) {
  std::vector<std::size_t> ids(n, Vocabulary::kPad);
  return gather_rows(embedding, ids);
}

namespace detail {

inline void fill_token_scores(AttributionReport& r, const Tensor& a) {
  r.token_features.clear();
  r.token_scores.clear();
  for (std::size_t t = 0; t < r.tokens.size(); ++t) {
    std::vector<double> row(a.row(t).begin(), a.row(t).end());
    double s = 0.0;
    for (double v : row) s += v;
    r.token_features.push_back(std::move(row));
    r.token_scores.push_back(s);
  }
}

/// Question tokens as attributed: an empty question is represented by one PAD.
inline std::vector<std::string> display_tokens(std::span<const std::string> tokens) {
  if (tokens.empty()) return {std::string(kPadToken)};
  return {tokens.begin(), tokens.end()};
}

}  // namespace detail

/// IG for a classifier's class probability. Default target: the argmax class at the input.
inline AttributionReport integrated_gradients(const ClassifierModel& m, const Instance& in, const IGConfig& cfg) {
  auto ids = question_ids(m.vocab, in.question);
  ClassifierGraph g = build_classifier_graph(m, ids.size());
  Tensor x = gather_rows(m.embedding, ids);
  Tensor base = pad_rows(m.embedding, ids.size());

  auto at_input = ad::forward(g.tape, {{g.question, x}})[g.probs].data;
  auto at_base = ad::forward(g.tape, {{g.question, base}})[g.probs].data;
  std::size_t cls = argmax(at_input);
  if (cfg.target) {
    const auto* t = std::get_if<ClassTarget>(&*cfg.target);
    if (!t) throw Error("classifier attribution needs a class target");
    if (t->cls >= m.class_count()) throw Error("class target out of range");
    cls = t->cls;
  }

  AttributionProblem p;
  p.target = g.tape.pick(g.probs, cls);
  p.features.push_back({"question", g.question, x, base});
  p.tape = std::move(g.tape);
  PathIntegral r = integrate_gradients(p, cfg.steps, cfg.quadrature);

  AttributionReport rep;
  rep.instance_id = in.id;
  rep.target = "class:" + m.classes[cls];
  rep.tokens = detail::display_tokens(in.question);
  detail::fill_token_scores(rep, r.attributions[0]);
  rep.f_input = r.f_input;
  rep.f_baseline = r.f_baseline;
  rep.residual = r.residual;
  rep.predicted = m.classes[argmax(at_input)];
  rep.baseline_predicted = m.classes[argmax(at_base)];
  rep.omitted = argmax(at_input) == argmax(at_base);
  rep.prediction = m.classes[argmax(at_input)];
  rep.gold = in.gold_answer.text();
  rep.steps = cfg.steps;
  rep.quadrature = quadrature_name(cfg.quadrature);
  return rep;
}

/// IG for one operator or column selection of the table model, attributed to
/// question tokens (including match markers) and to both prior vectors.
inline AttributionReport integrated_gradients(const TableQAModel& m, const Instance& in, const IGConfig& cfg) {
  if (!in.table) throw DataError("instance " + in.id + " has no table");
  if (!cfg.target || std::holds_alternative<ClassTarget>(*cfg.target))
    throw Error("table model attribution needs an operator or column target");
  const Table& table = *in.table;
  PreparedQuestion prepared = preprocess_matches(in.question, table);
  TableFeatures f = table_features(m, prepared, table);
  const std::size_t n = f.question.shape[0];
  TableQAGraph g = build_tableqa_graph(m, n, table.column_count());

  TableFeatures fb = f;
  fb.question = pad_rows(m.embedding, n);
  fb.column_priors = zeros_like(f.column_priors);
  fb.entry_priors = zeros_like(f.entry_priors);
  auto vin = ad::forward(g.tape, g.bind(f));
  auto vbase = ad::forward(g.tape, g.bind(fb));

  AttributionReport rep;
  ad::NodeId dist = 0;
  std::size_t index = 0;
  std::size_t step = 0;
  bool is_op = std::holds_alternative<OperatorTarget>(*cfg.target);
  if (is_op) {
    auto t = std::get<OperatorTarget>(*cfg.target);
    if (t.step >= kSteps || t.op >= kOperatorCount) throw Error("operator target out of range");
    step = t.step;
    dist = g.op_probs[step];
    index = t.op;
    rep.target = "op[" + std::to_string(step) + "]";
  } else {
    auto t = std::get<ColumnTarget>(*cfg.target);
    if (t.step >= kSteps || t.column >= table.column_count()) throw Error("column target out of range");
    step = t.step;
    dist = g.col_probs[step];
    index = t.column;
    rep.target = "col[" + std::to_string(step) + "]";
  }
  auto label = [&](std::size_t i) {
    return is_op ? std::string(operator_name(kOperators[i])) : table.columns[i];
  };
  const std::size_t sel_x = argmax(vin[dist].data);
  const std::size_t sel_b = argmax(vbase[dist].data);

  AttributionProblem p;
  p.target = g.tape.pick(dist, index);
  p.fixed = {{g.columns, f.columns}};
  p.features.push_back({"question", g.question, f.question, fb.question});
  p.features.push_back({"column_priors", g.column_priors, f.column_priors, fb.column_priors});
  p.features.push_back({"entry_priors", g.entry_priors, f.entry_priors, fb.entry_priors});
  p.tape = std::move(g.tape);
  PathIntegral r = integrate_gradients(p, cfg.steps, cfg.quadrature);

  rep.instance_id = in.id;
  rep.target += ":" + label(index);
  rep.tokens = detail::display_tokens(prepared.tokens);
  detail::fill_token_scores(rep, r.attributions[0]);
  for (std::size_t c = 0; c < table.column_count(); ++c) {
    rep.prior_names.push_back("prior:" + table.columns[c]);
    rep.prior_scores.push_back(r.attributions[1][c]);
  }
  for (std::size_t c = 0; c < table.column_count(); ++c) {
    rep.prior_names.push_back("entry_prior:" + table.columns[c]);
    rep.prior_scores.push_back(r.attributions[2][c]);
  }
  rep.f_input = r.f_input;
  rep.f_baseline = r.f_baseline;
  rep.residual = r.residual;
  rep.predicted = label(sel_x);
  rep.baseline_predicted = label(sel_b);
  rep.omitted = sel_x == sel_b;
  auto pred = tableqa_predict_prepared(m, prepared, table);
  auto answer = try_execute(pred.program, table, in.question);
  rep.prediction = answer ? answer->text() : "<execution error>";
  rep.gold = in.gold_answer.text();
  rep.steps = cfg.steps;
  rep.quadrature = quadrature_name(cfg.quadrature);
  return rep;
}

/// Reports for all four operator selections followed by all four column
/// selections, each targeting the selection made at the input.
inline std::vector<AttributionReport> attribute_program(const TableQAModel& m, const Instance& in, IGConfig cfg) {
  auto pred = tableqa_predict(m, in);
  std::vector<AttributionReport> out;
  for (std::size_t s = 0; s < kSteps; ++s) {
    cfg.target = OperatorTarget{s, static_cast<std::size_t>(pred.program[s].op)};
    out.push_back(integrated_gradients(m, in, cfg));
  }
  for (std::size_t s = 0; s < kSteps; ++s) {
    cfg.target = ColumnTarget{s, pred.program[s].column};
    out.push_back(integrated_gradients(m, in, cfg));
  }
  return out;
}

/// IG of an operator selection with respect to the column-name embeddings,
/// against PAD column names. The question and priors are held fixed.
inline AttributionReport column_name_attribution(const TableQAModel& m, std::span<const std::string> question,
                                                 const Table& table, OperatorTarget target, std::size_t steps,
                                                 Quadrature q = Quadrature::trapezoid) {
  PreparedQuestion prepared = preprocess_matches(question, table);
  TableFeatures f = table_features(m, prepared, table);
  TableQAGraph g = build_tableqa_graph(m, f.question.shape[0], table.column_count());
  Tensor base = pad_rows(m.embedding, table.column_count());
  TableFeatures fb = f;
  fb.columns = base;
  auto vin = ad::forward(g.tape, g.bind(f));
  auto vbase = ad::forward(g.tape, g.bind(fb));
  const std::size_t sel_x = argmax(vin[g.op_probs[target.step]].data);
  const std::size_t sel_b = argmax(vbase[g.op_probs[target.step]].data);

  AttributionProblem p;
  p.target = g.tape.pick(g.op_probs[target.step], target.op);
  p.fixed = {{g.question, f.question}, {g.column_priors, f.column_priors}, {g.entry_priors, f.entry_priors}};
  p.features.push_back({"columns", g.columns, f.columns, base});
  p.tape = std::move(g.tape);
  PathIntegral r = integrate_gradients(p, steps, q);

  AttributionReport rep;
  rep.target = "op[" + std::to_string(target.step) + "]:" + std::string(operator_name(kOperators[target.op]));
  for (const auto& c : table.columns) rep.tokens.push_back(column_token(c));
  detail::fill_token_scores(rep, r.attributions[0]);
  rep.f_input = r.f_input;
  rep.f_baseline = r.f_baseline;
  rep.residual = r.residual;
  rep.predicted = operator_name(kOperators[sel_x]);
  rep.baseline_predicted = operator_name(kOperators[sel_b]);
  rep.omitted = sel_x == sel_b;
  rep.steps = steps;
  rep.quadrature = quadrature_name(q);
  return rep;
}

/// Ordered (token, scalar) pairs of a non-omitted report.
inline std::vector<std::pair<std::string, double>> token_attribution(const AttributionReport& r) {
  if (r.omitted)
    throw Error("report for " + r.instance_id + " is omitted: the baseline selects the same " + r.predicted);
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < r.tokens.size(); ++i) out.emplace_back(r.tokens[i], r.token_scores[i]);
  return out;
}

// ---- axioms --------------------------------------------------------------------

struct AxiomResults {
  std::vector<double> completeness;  // per instance residual
  std::vector<double> symmetry;      // |a_first - a_duplicate|
  std::vector<double> dummy;         // |a_pad| for an appended PAD token
  std::vector<double> linearity;     // max |IG_F - (0.3 IG_F1 + 0.7 IG_F2)|
};

namespace detail {

/// Classifier head of `head` evaluated on question embeddings bound as a feature.
inline AttributionProblem mixed_head_problem(const std::vector<std::pair<const ClassifierModel*, double>>& heads,
                                             const Tensor& x, const Tensor& base, std::size_t cls) {
  AttributionProblem p;
  ad::Tape& t = p.tape;
  ad::NodeId q = t.input(x.shape, "question");
  ad::NodeId pooled = t.mean(q, ad::Axis::rows);
  ad::NodeId total = 0;
  bool first = true;
  for (const auto& [model, coef] : heads) {
    ad::NodeId logits = t.add(t.matmul(pooled, t.constant(model->weight)), t.constant(model->bias));
    ad::NodeId term = t.mul(t.constant(Tensor::scalar(coef)), t.pick(t.softmax(logits), cls));
    total = first ? term : t.add(total, term);
    first = false;
  }
  p.target = total;
  p.features.push_back({"question", q, x, base});
  return p;
}

}  // namespace detail

/// Checks the IG axioms on a classifier. `partner` supplies a second output
/// head for the linearity check; both heads read the first model's embeddings.
inline AxiomResults axiom_suite(const ClassifierModel& model, const ClassifierModel& partner,
                                const std::vector<Instance>& instances, IGConfig cfg) {
  if (instances.empty()) throw Error("axiom suite: no instances");
  if (partner.dim != model.dim || partner.class_count() != model.class_count())
    throw Error("axiom suite: partner model must share dimension and classes");
  AxiomResults out;
  for (const auto& in : instances) {
    cfg.target.reset();
    AttributionReport base = integrated_gradients(model, in, cfg);
    out.completeness.push_back(base.residual);
    const std::size_t cls = *model.class_index(base.target.substr(6));
    cfg.target = ClassTarget{cls};

    Instance dup = in;
    dup.question.push_back(detail::display_tokens(in.question).front());
    if (in.question.empty()) dup.question.push_back(std::string(kPadToken));
    AttributionReport sym = integrated_gradients(model, dup, cfg);
    out.symmetry.push_back(std::abs(sym.token_scores.front() - sym.token_scores.back()));

    Instance padded = in;
    padded.question.push_back(std::string(kPadToken));
    AttributionReport dum = integrated_gradients(model, padded, cfg);
    out.dummy.push_back(std::abs(dum.token_scores.back()));

    auto ids = question_ids(model.vocab, in.question);
    Tensor x = gather_rows(model.embedding, ids);
    Tensor b = pad_rows(model.embedding, ids.size());
    auto mixed = integrate_gradients(detail::mixed_head_problem({{&model, 0.3}, {&partner, 0.7}}, x, b, cls), cfg.steps,
                                     cfg.quadrature);
    auto f1 = integrate_gradients(detail::mixed_head_problem({{&model, 1.0}}, x, b, cls), cfg.steps, cfg.quadrature);
    auto f2 = integrate_gradients(detail::mixed_head_problem({{&partner, 1.0}}, x, b, cls), cfg.steps, cfg.quadrature);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
      worst = std::max(worst, std::abs(mixed.attributions[0][i] -
                                       (0.3 * f1.attributions[0][i] + 0.7 * f2.attributions[0][i])));
    out.linearity.push_back(worst);
  }
  return out;
}

// ---- serialization ---------------------------------------------------------------

inline nlohmann::json report_to_json(const AttributionReport& r) {
  return {{"instance_id", r.instance_id},
          {"target", r.target},
          {"tokens", r.tokens},
          {"token_features", r.token_features},
          {"token_scores", r.token_scores},
          {"prior_names", r.prior_names},
          {"prior_scores", r.prior_scores},
          {"f_input", r.f_input},
          {"f_baseline", r.f_baseline},
          {"residual", r.residual},
          {"predicted", r.predicted},
          {"baseline_predicted", r.baseline_predicted},
          {"omitted", r.omitted},
          {"prediction", r.prediction},
          {"gold", r.gold},
          {"steps", r.steps},
          {"quadrature", r.quadrature}};
}

inline AttributionReport report_from_json(const nlohmann::json& j) {
  AttributionReport r;
  r.instance_id = j.at("instance_id").get<std::string>();
  r.target = j.at("target").get<std::string>();
  r.tokens = j.at("tokens").get<std::vector<std::string>>();
  r.token_features = j.at("token_features").get<std::vector<std::vector<double>>>();
  r.token_scores = j.at("token_scores").get<std::vector<double>>();
  r.prior_names = j.at("prior_names").get<std::vector<std::string>>();
  r.prior_scores = j.at("prior_scores").get<std::vector<double>>();
  r.f_input = j.at("f_input").get<double>();
  r.f_baseline = j.at("f_baseline").get<double>();
  r.residual = j.at("residual").get<double>();
  r.predicted = j.at("predicted").get<std::string>();
  r.baseline_predicted = j.at("baseline_predicted").get<std::string>();
  r.omitted = j.at("omitted").get<bool>();
  r.prediction = j.value("prediction", "");
  r.gold = j.value("gold", "");
  r.steps = j.value("steps", std::size_t{0});
  r.quadrature = j.value("quadrature", "");
  return r;
}

}  // namespace attriq
