#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "attriq/autodiff.hpp"
#include "attriq/models.hpp"

namespace attriq {

struct TrainConfig {
  double lr = 0.05;
  std::size_t epochs = 20;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
};

struct TrainResult {
  /// Mean dataset loss before training, then after every epoch.
  std::vector<double> loss_trace;

  double initial_loss() const { return loss_trace.front(); }
  double final_loss() const { return loss_trace.back(); }
};

/// A per-instance loss graph with parameters as free inputs.
struct LossGraph {
  ad::Tape tape;
  ad::Bindings inputs;  // non-parameter inputs
  std::vector<std::pair<ad::NodeId, std::string>> params;
  ad::NodeId loss = 0;
};

inline std::size_t gold_class(const ClassifierModel& m, const Instance& in) {
  if (in.gold_answer.is_scalar() || in.gold_answer.cells().size() != 1)
    throw DataError("instance " + in.id + ": classifier gold answer must be a single cell");
  auto label = m.class_index(cell_text(in.gold_answer.cells().front()));
  if (!label) throw DataError("instance " + in.id + ": gold answer '" + in.gold_answer.text() + "' is not a known class");
  return *label;
}

/// Cross-entropy of the gold answer class.
inline LossGraph loss_graph(const ClassifierModel& m, const Instance& in) {
  const std::size_t label = gold_class(m, in);
  ClassifierGraph g = build_classifier_train_graph(m, question_ids(m.vocab, in.question));
  LossGraph out;
  ad::NodeId zero = g.tape.constant(Tensor::scalar(0.0));
  out.loss = g.tape.sub(zero, g.tape.log(g.tape.pick(g.probs, label)));
  out.params = std::move(g.params);
  out.tape = std::move(g.tape);
  return out;
}

/// Summed cross-entropy of the gold operator and column at every step.
inline LossGraph loss_graph(const TableQAModel& m, const Instance& in) {
  if (!in.table || !in.gold_program)
    throw DataError("instance " + in.id + ": table model training needs a table and a gold program");
  PreparedQuestion prepared = preprocess_matches(in.question, *in.table);
  TableQAGraph g = build_tableqa_train_graph(m, question_ids(m.vocab, prepared.tokens), column_ids(m.vocab, *in.table));
  ad::Tape& t = g.tape;
  ad::NodeId total = t.constant(Tensor::scalar(0.0));
  for (std::size_t s = 0; s < kSteps; ++s) {
    const ProgramStep& gold = (*in.gold_program)[s];
    if (gold.column >= in.table->column_count())
      throw DataError("instance " + in.id + ": gold program column out of range");
    total = t.sub(total, t.log(t.pick(g.op_probs[s], static_cast<std::size_t>(gold.op))));
    total = t.sub(total, t.log(t.pick(g.col_probs[s], gold.column)));
  }
  LossGraph out;
  out.loss = total;
  out.inputs = {{g.column_priors, Tensor::vector(prepared.column_priors)},
                {g.entry_priors, Tensor::vector(prepared.entry_priors)}};
  out.params = std::move(g.params);
  out.tape = std::move(g.tape);
  return out;
}

namespace detail {

template <class Model>
ad::Bindings bind_params(const LossGraph& lg, const Model& model) {
  ad::Bindings b = lg.inputs;
  auto params = model.parameters();
  for (const auto& [node, name] : lg.params) {
    auto it = std::find_if(params.begin(), params.end(), [&](const auto& p) { return p.first == name; });
    b[node] = *it->second;
  }
  return b;
}

template <class Model>
double instance_loss(const Model& model, const Instance& in) {
  LossGraph lg = loss_graph(model, in);
  return ad::forward(lg.tape, bind_params(lg, model))[lg.loss][0];
}

}  // namespace detail

template <class Model>
double dataset_loss(const Model& model, const std::vector<Instance>& data) {
  double s = 0.0;
  for (const auto& in : data) s += detail::instance_loss(model, in);
  return s / static_cast<double>(data.size());
}

/// Minibatch Adam on the mean per-instance loss. Deterministic given the
/// seed; full-batch runs keep dataset order. The PAD embedding row stays zero.
template <class Model>
TrainResult train(Model& model, const std::vector<Instance>& data, const TrainConfig& cfg) {
  if (data.empty()) throw DataError("train: dataset is empty");
  if (cfg.batch == 0) throw DataError("train: batch size must be positive");
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  auto params = model.parameters();
  std::vector<Tensor> m1, m2;
  for (const auto& p : params) {
    m1.push_back(zeros_like(*p.second));
    m2.push_back(zeros_like(*p.second));
  }
  auto param_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i].first == name) return i;
    throw Error("train: unknown parameter " + name);
  };

  TrainResult result;
  result.loss_trace.push_back(dataset_loss(model, data));

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t update = 0, batch_index = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.batch < data.size()) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      std::vector<Tensor> grads;
      for (const auto& p : params) grads.push_back(zeros_like(*p.second));
      try {
        for (std::size_t k = start; k < stop; ++k) {
          LossGraph lg = loss_graph(model, data[order[k]]);
          auto values = ad::forward(lg.tape, detail::bind_params(lg, model));
          auto g = ad::backward(lg.tape, values, lg.loss);
          for (const auto& [node, name] : lg.params) {
            Tensor& acc = grads[param_index(name)];
            const Tensor& gn = g.at(node);
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += gn[i];
          }
        }
      } catch (const NonFiniteError& e) {
        throw Error("train: non-finite loss in batch " + std::to_string(batch_index) + " (" + e.what() + ")");
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      ++update;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(update));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(update));
      for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& w = *params[p].second;
        Tensor& g = grads[p];
        if (params[p].first == "embedding")
          for (double& v : g.row(Vocabulary::kPad)) v = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double gi = g[i] * scale;
          m1[p][i] = beta1 * m1[p][i] + (1.0 - beta1) * gi;
          m2[p][i] = beta2 * m2[p][i] + (1.0 - beta2) * gi * gi;
          w[i] -= cfg.lr * (m1[p][i] / c1) / (std::sqrt(m2[p][i] / c2) + adam_eps);
        }
      }
    }
    result.loss_trace.push_back(dataset_loss(model, data));
    if (!std::isfinite(result.loss_trace.back()))
      throw Error("train: non-finite dataset loss after epoch " + std::to_string(epoch));
  }
  return result;
}

}  // namespace attriq
