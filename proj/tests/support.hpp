#pragma once

// Shared fixtures for the test binaries: small trained models built once per process.

#include "attriq/attriq.hpp"

namespace attriq::testing {

inline const Dataset& table_corpus() {
  static const Dataset ds = generate_synthetic(GenConfig::defaults(CorpusKind::table));
  return ds;
}

inline const Dataset& classifier_corpus() {
  static const Dataset ds = generate_synthetic(GenConfig::defaults(CorpusKind::classifier));
  return ds;
}

inline const TableQAModel& trained_table_model() {
  static const TableQAModel m = [] {
    TableQAModel model = TableQAModel::create(table_corpus().vocab, kDefaultDim, 0);
    train(model, table_corpus().instances, TrainConfig{0.05, 20, 32, 0});
    return model;
  }();
  return m;
}

inline const ClassifierModel& trained_classifier() {
  static const ClassifierModel m = [] {
    const auto& ds = classifier_corpus();
    ClassifierModel model = ClassifierModel::create(ds.vocab, answer_classes(ds.instances), kDefaultDim, 0);
    train(model, ds.instances, TrainConfig{0.05, 20, 32, 0});
    return model;
  }();
  return m;
}

inline Instance question_only(std::string id, std::vector<std::string> question, std::string gold) {
  Instance in;
  in.id = std::move(id);
  in.question = std::move(question);
  in.gold_answer = Answer::of_cells({std::move(gold)});
  return in;
}

}  // namespace attriq::testing
