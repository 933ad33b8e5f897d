#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "support.hpp"

using namespace attriq;
using attriq::testing::classifier_corpus;
using attriq::testing::question_only;
using attriq::testing::table_corpus;

namespace {

double total(const PathIntegral& r) {
  double s = 0.0;
  for (const auto& a : r.attributions) s += std::accumulate(a.data.begin(), a.data.end(), 0.0);
  return s;
}

}  // namespace

TEST(Quadrature, Nodes) {
  auto t = quadrature_nodes(4, Quadrature::trapezoid);
  ASSERT_EQ(t.size(), 5u);
  EXPECT_DOUBLE_EQ(t.front().second, 0.125);
  EXPECT_DOUBLE_EQ(t[2].first, 0.5);
  EXPECT_DOUBLE_EQ(t[2].second, 0.25);
  auto l = quadrature_nodes(4, Quadrature::left_riemann);
  ASSERT_EQ(l.size(), 4u);
  EXPECT_DOUBLE_EQ(l.back().first, 0.75);
  EXPECT_THROW(quadrature_nodes(0, Quadrature::trapezoid), Error);
  EXPECT_EQ(parse_quadrature("left-riemann"), Quadrature::left_riemann);
  EXPECT_FALSE(parse_quadrature("simpson"));
}

TEST(PathIntegral, LinearTargetAnyStepCount) {
  for (std::size_t m : {1u, 3u, 64u}) {
    for (Quadrature q : {Quadrature::trapezoid, Quadrature::left_riemann}) {
      AttributionProblem p;
      ad::NodeId x = p.tape.input({2});
      p.target = p.tape.dot(p.tape.constant(Tensor::vector({2, -1})), x);
      p.features.push_back({"x", x, Tensor::vector({1, 1}), Tensor({2})});
      auto r = integrate_gradients(p, m, q);
      EXPECT_DOUBLE_EQ(r.attributions[0][0], 2.0);
      EXPECT_DOUBLE_EQ(r.attributions[0][1], -1.0);
      EXPECT_EQ(r.residual, 0.0);
    }
  }
}

TEST(PathIntegral, ProductHalvesCredit) {
  auto r = integrate_gradients(fixtures::product_problem(), 512, Quadrature::trapezoid);
  EXPECT_NEAR(r.attributions[0][0], 0.5, 1e-12);
  EXPECT_NEAR(r.attributions[0][1], 0.5, 1e-12);
  EXPECT_NEAR(total(r), 1.0, 1e-12);
  // Left Riemann sums underestimate the integral of alpha by 1/(2m).
  auto l = integrate_gradients(fixtures::product_problem(), 8, Quadrature::left_riemann);
  EXPECT_NEAR(l.attributions[0][0], 0.5 - 1.0 / 16, 1e-12);
}

TEST(PathIntegral, AffineExactAtOneStep) {
  auto r = integrate_gradients(fixtures::affine_problem(), 1, Quadrature::trapezoid);
  EXPECT_LE(r.residual, 1e-12);
  EXPECT_DOUBLE_EQ(r.f_input - r.f_baseline, 3.0);
}

TEST(PathIntegral, ZeroDifferenceDimensionsGetZero) {
  AttributionProblem p;
  ad::NodeId x = p.tape.input({3});
  p.target = p.tape.sum(p.tape.tanh(p.tape.mul(x, x)));
  p.features.push_back({"x", x, Tensor::vector({0.5, 2.0, -1.0}), Tensor::vector({0.1, 2.0, 0.3})});
  auto r = integrate_gradients(p, 16, Quadrature::trapezoid);
  EXPECT_EQ(r.attributions[0][1], 0.0);
}

TEST(PathIntegral, ConvergesQuadratically) {
  auto p = fixtures::smooth_mlp_problem();
  double prev = integrate_gradients(p, 16, Quadrature::trapezoid).residual;
  for (std::size_t m : {32u, 64u, 128u}) {
    double cur = integrate_gradients(p, m, Quadrature::trapezoid).residual;
    EXPECT_LE(cur, 0.6 * prev) << "m=" << m;
    prev = cur;
  }
}

TEST(PathIntegral, NonFiniteGradientNamesAlpha) {
  AttributionProblem p;
  ad::NodeId x = p.tape.input({1});
  // log((x - 1/2)^2) is finite at both endpoints and infinite at alpha = 1/2.
  ad::NodeId d = p.tape.sub(x, p.tape.constant(Tensor::vector({0.5})));
  p.target = p.tape.sum(p.tape.log(p.tape.mul(d, d)));
  p.features.push_back({"x", x, Tensor::vector({1.0}), Tensor::vector({0.0})});
  try {
    integrate_gradients(p, 4, Quadrature::trapezoid);
    FAIL() << "expected failure";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("alpha"), std::string::npos) << e.what();
  }
}

TEST(Baseline, PadsQuestionAndZeroesPriors) {
  const Instance& in = table_corpus().instances.front();
  Baseline b = make_baseline(in);
  EXPECT_EQ(b.instance.question.size(), in.question.size());
  for (const auto& t : b.instance.question) EXPECT_EQ(t, kPadToken);
  EXPECT_EQ(b.instance.table, in.table);
  EXPECT_EQ(b.column_priors, std::vector<double>(in.table->column_count(), 0.0));
  EXPECT_EQ(b.entry_priors, std::vector<double>(in.table->column_count(), 0.0));
  Instance empty = in;
  empty.question.clear();
  EXPECT_EQ(make_baseline(empty).instance.question, empty.question);
}

TEST(Classifier, ColorTokenDominates) {
  auto m = fixtures::color_classifier();
  for (const auto& in : fixtures::color_dataset()) {
    auto r = integrated_gradients(m, in, IGConfig{512});
    if (in.id.rfind("color-", 0) != 0) continue;
    ASSERT_FALSE(r.omitted);
    auto pairs = token_attribution(r);
    std::size_t best = 0;
    for (std::size_t i = 1; i < pairs.size(); ++i)
      if (std::abs(pairs[i].second) > std::abs(pairs[best].second)) best = i;
    EXPECT_EQ(pairs[best].first, "color");
    for (const auto& [tok, score] : pairs)
      if (tok != "color") EXPECT_EQ(score, 0.0);
  }
}

TEST(Classifier, OmittedWhenBaselineAgrees) {
  auto m = fixtures::color_classifier();
  auto r = integrated_gradients(m, question_only("q", {"how", "many", "cups"}, "2"), IGConfig{8});
  EXPECT_TRUE(r.omitted);
  EXPECT_EQ(r.predicted, r.baseline_predicted);
  EXPECT_THROW(token_attribution(r), Error);
  auto s = integrated_gradients(m, question_only("s", {"what", "color"}, "red"), IGConfig{8});
  EXPECT_FALSE(s.omitted);
}

TEST(Classifier, AllPadQuestionScoresZero) {
  const auto& m = attriq::testing::trained_classifier();
  auto in = question_only("p", {std::string(kPadToken), std::string(kPadToken)}, "x");
  auto r = integrated_gradients(m, in, IGConfig{16});
  for (double s : r.token_scores) EXPECT_EQ(s, 0.0);
  EXPECT_TRUE(r.omitted);
}

TEST(Classifier, TokenScoresSumFeatures) {
  const auto& m = attriq::testing::trained_classifier();
  auto r = integrated_gradients(m, classifier_corpus().instances[3], IGConfig{32});
  ASSERT_EQ(r.token_features.size(), r.tokens.size());
  for (std::size_t i = 0; i < r.tokens.size(); ++i)
    EXPECT_EQ(r.token_scores[i], std::accumulate(r.token_features[i].begin(), r.token_features[i].end(), 0.0));
}

TEST(Classifier, CompletenessAgainstFineQuadrature) {
  const auto& m = attriq::testing::trained_classifier();
  const Instance& in = classifier_corpus().instances[11];
  auto coarse = integrated_gradients(m, in, IGConfig{512});
  auto fine = integrated_gradients(m, in, IGConfig{1u << 16});
  EXPECT_LE(coarse.residual, 1e-4);
  for (std::size_t i = 0; i < coarse.tokens.size(); ++i)
    EXPECT_NEAR(coarse.token_scores[i], fine.token_scores[i], 1e-4);
}

TEST(Classifier, RejectsForeignTargets) {
  const auto& m = attriq::testing::trained_classifier();
  IGConfig cfg{8};
  cfg.target = OperatorTarget{0, 0};
  EXPECT_THROW(integrated_gradients(m, classifier_corpus().instances[0], cfg), Error);
  cfg.target = ClassTarget{99};
  EXPECT_THROW(integrated_gradients(m, classifier_corpus().instances[0], cfg), Error);
}

TEST(TableModel, ProgramReportsCoverPriorsAndSteps) {
  const auto& m = attriq::testing::trained_table_model();
  const Instance& in = table_corpus().instances[5];
  auto reports = attribute_program(m, in, IGConfig{512});
  ASSERT_EQ(reports.size(), 2 * kSteps);
  EXPECT_EQ(reports.front().target.rfind("op[0]:", 0), 0u);
  EXPECT_EQ(reports.back().target.rfind("col[3]:", 0), 0u);
  for (const auto& r : reports) {
    EXPECT_LE(r.residual, 1e-4) << r.target;
    EXPECT_EQ(r.prior_names.size(), 2 * in.table->column_count());
    EXPECT_EQ(r.omitted, r.predicted == r.baseline_predicted);
    // Entry priors are zero at both endpoints, so their attribution is exactly zero.
    for (std::size_t c = in.table->column_count(); c < r.prior_scores.size(); ++c) EXPECT_EQ(r.prior_scores[c], 0.0);
  }
}

TEST(TableModel, NeedsSelectionTarget) {
  const auto& m = attriq::testing::trained_table_model();
  EXPECT_THROW(integrated_gradients(m, table_corpus().instances[0], IGConfig{8}), Error);
}

TEST(TableModel, ColumnNameAttributionCompleteness) {
  auto m = fixtures::medal_prev_model();
  Table t = *fixtures::medal_dataset().front().table;
  auto r = column_name_attribution(m, {}, t, OperatorTarget{1, static_cast<std::size_t>(Operator::prev)}, 256);
  EXPECT_FALSE(r.omitted);
  EXPECT_LE(r.residual, 1e-4);
  EXPECT_EQ(r.tokens[1], "gold");
  std::size_t best = 0;
  for (std::size_t i = 1; i < r.token_scores.size(); ++i)
    if (r.token_scores[i] > r.token_scores[best]) best = i;
  EXPECT_EQ(r.tokens[best], "gold");
}

TEST(Axioms, SuiteOnFixturePair) {
  auto [a, b] = fixtures::linear_pair();
  auto res = axiom_suite(a, b, fixtures::color_dataset(), IGConfig{512});
  for (double d : res.dummy) EXPECT_EQ(d, 0.0);
  for (double s : res.symmetry) EXPECT_LE(s, 1e-10);
  for (double l : res.linearity) EXPECT_LE(l, 1e-8);
  for (double c : res.completeness) EXPECT_LE(c, 1e-4);
}

TEST(Reports, JsonRoundTrip) {
  const auto& m = attriq::testing::trained_table_model();
  auto reports = attribute_program(m, table_corpus().instances[2], IGConfig{16});
  for (const auto& r : reports) EXPECT_EQ(report_from_json(nlohmann::json::parse(report_to_json(r).dump())), r);
}
