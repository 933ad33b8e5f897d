// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
// usage: acceptance ATTRIQ_CLI WORK_DIR

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "attriq/attriq.hpp"
#include "oracle.hpp"

using namespace attriq;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Models {
  Dataset train_tables, train_classes, eval_tables, eval_classes;
  TableQAModel table;
  ClassifierModel classifier;
};

Models build_models() {
  Models m;
  m.train_tables = generate_synthetic(GenConfig::defaults(CorpusKind::table));
  m.train_classes = generate_synthetic(GenConfig::defaults(CorpusKind::classifier));
  auto eval_cfg = GenConfig::defaults(CorpusKind::table);
  eval_cfg.seed = 1;
  m.eval_tables = generate_synthetic(eval_cfg);
  auto eval_cls = GenConfig::defaults(CorpusKind::classifier);
  eval_cls.seed = 1;
  m.eval_classes = generate_synthetic(eval_cls);
  m.table = TableQAModel::create(m.train_tables.vocab, kDefaultDim, 0);
  train(m.table, m.train_tables.instances, TrainConfig{0.05, 20, 32, 0});
  m.classifier = ClassifierModel::create(m.train_classes.vocab, answer_classes(m.train_classes.instances), kDefaultDim, 0);
  train(m.classifier, m.train_classes.instances, TrainConfig{0.05, 20, 32, 0});
  return m;
}

Tensor scaled(Tensor t, double a) {
  for (double& v : t.data) v *= a;
  return t;
}

// ---- 1 ------------------------------------------------------------------------------------

Verdict gradient_check(const Models& m) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> alpha(0.05, 1.0);
  double worst_cls = 0.0, worst_tab = 0.0;
  for (int point = 0; point < 20; ++point) {
    const auto& cin = m.train_classes.instances[rng() % m.train_classes.instances.size()];
    auto ids = question_ids(m.classifier.vocab, cin.question);
    ClassifierGraph cg = build_classifier_graph(m.classifier, ids.size());
    Tensor x = scaled(gather_rows(m.classifier.embedding, ids), alpha(rng));
    std::size_t cls = argmax(classifier_predict(m.classifier, cin).probs);
    ad::NodeId target = cg.tape.pick(cg.probs, cls);
    worst_cls = std::max(worst_cls, ad::grad_check(cg.tape, {{cg.question, x}}, target, 1e-5));

    const auto& tin = m.train_tables.instances[rng() % m.train_tables.instances.size()];
    PreparedQuestion prepared = preprocess_matches(tin.question, *tin.table);
    TableFeatures f = table_features(m.table, prepared, *tin.table);
    const double a = alpha(rng);
    f.question = scaled(f.question, a);
    f.column_priors = scaled(f.column_priors, a);
    TableQAGraph tg = build_tableqa_graph(m.table, f.question.shape[0], f.columns.shape[0]);
    auto pred = tableqa_predict(m.table, tin);
    const std::size_t s = static_cast<std::size_t>(point) % kSteps;
    ad::NodeId op = tg.tape.pick(tg.op_probs[s], static_cast<std::size_t>(pred.program[s].op));
    ad::NodeId col = tg.tape.pick(tg.col_probs[s], pred.program[s].column);
    worst_tab = std::max(worst_tab, ad::grad_check(tg.tape, tg.bind(f), tg.tape.add(op, col), 1e-5));
  }
  const double secs = seconds_since(t0);
  return {worst_cls <= 1e-6 && worst_tab <= 1e-6 && secs < 10.0,
          "max rel err classifier " + sci(worst_cls) + ", table " + sci(worst_tab) + ", " + sci(secs) + " s"};
}

// ---- 2 ------------------------------------------------------------------------------------

Verdict completeness(const Models& m) {
  double worst_cls = 0.0, worst_tab = 0.0;
  const IGConfig cfg{512};
  for (std::size_t i = 0; i < 100; ++i) {
    const auto& cin = m.eval_classes.instances[i * m.eval_classes.instances.size() / 100];
    worst_cls = std::max(worst_cls, integrated_gradients(m.classifier, cin, cfg).residual);
    const auto& tin = m.eval_tables.instances[i * m.eval_tables.instances.size() / 100];
    for (const auto& r : attribute_program(m.table, tin, cfg)) worst_tab = std::max(worst_tab, r.residual);
  }
  const double affine = integrate_gradients(fixtures::affine_problem(), 1, Quadrature::trapezoid).residual;
  return {worst_cls <= 1e-4 && worst_tab <= 1e-4 && affine <= 1e-12,
          "max residual classifier " + sci(worst_cls) + ", table " + sci(worst_tab) + ", affine m=1 " + sci(affine)};
}

// ---- 3 ------------------------------------------------------------------------------------

Verdict axioms() {
  auto [a, b] = fixtures::linear_pair();
  auto res = axiom_suite(a, b, fixtures::color_dataset(), IGConfig{512});
  auto peak = [](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); };
  const double dummy = peak(res.dummy), sym = peak(res.symmetry), lin = peak(res.linearity);
  return {dummy == 0.0 && sym <= 1e-10 && lin <= 1e-8,
          "dummy " + sci(dummy) + ", symmetry " + sci(sym) + ", linearity " + sci(lin)};
}

// ---- 4 ------------------------------------------------------------------------------------

Verdict product_oracle() {
  auto r = integrate_gradients(fixtures::product_problem(), 512, Quadrature::trapezoid);
  const double e = std::max(std::abs(r.attributions[0][0] - 0.5), std::abs(r.attributions[0][1] - 0.5));
  return {e <= 1e-6, "attributions (" + sci(r.attributions[0][0]) + ", " + sci(r.attributions[0][1]) + "), error " + sci(e)};
}

// ---- 5 ------------------------------------------------------------------------------------

Verdict convergence() {
  auto p = fixtures::smooth_mlp_problem();
  std::vector<double> res;
  for (std::size_t m : {16u, 32u, 64u, 128u}) res.push_back(integrate_gradients(p, m, Quadrature::trapezoid).residual);
  bool ok = true;
  std::string detail = "residuals";
  for (std::size_t i = 0; i < res.size(); ++i) {
    detail += " " + sci(res[i]);
    if (i && !(res[i] <= 0.6 * res[i - 1])) ok = false;
  }
  return {ok, detail};
}

// ---- 6 ------------------------------------------------------------------------------------

Table fixed_mixed_table() {
  Table t;
  t.columns = {"name", "score", "label"};
  t.rows = {{std::string("france"), 2.0, std::string("2")},
            {std::string("b"), 2.5, std::string("2.5")},
            {std::string("italy"), -1.0, std::string("x")},
            {std::string("total"), 2.0, std::string("10")}};
  return t;
}

Verdict oracle_equivalence() {
  std::size_t cases = 0, disagreements = 0;
  auto check = [&](const Program& p, const Table& t, const std::vector<std::string>& q) {
    ++cases;
    if (!oracle::same(oracle::run(p, t, q), try_execute(p, t, q))) ++disagreements;
  };
  // Every operator sequence with every assignment of two candidate columns.
  const Table fixed = fixed_mixed_table();
  const std::vector<std::string> fixed_q = {"which", "france", "2"};
  for (std::size_t code = 0; code < 14641 * 16; ++code) {
    Program p{};
    std::size_t ops = code / 16, cols = code % 16;
    for (std::size_t s = 0; s < 4; ++s, ops /= 11, cols /= 2) p[s] = {kOperators[ops % 11], cols % 2};
    check(p, fixed, fixed_q);
  }
  // Seeded sample of the same space over random tables up to 4x3.
  std::mt19937_64 rng(6);
  for (int i = 0; i < 60000; ++i) {
    Table t = oracle::random_table(rng, 4, 3);
    auto q = oracle::random_question(rng);
    std::uniform_int_distribution<std::size_t> op(0, kOperatorCount - 1), col(0, t.column_count() - 1);
    const std::size_t cand[2] = {col(rng), col(rng)};
    Program p{};
    for (auto& s : p) s = {kOperators[op(rng)], cand[rng() % 2]};
    check(p, t, q);
  }
  return {disagreements == 0 && cases >= 50000, std::to_string(cases) + " cases, " + std::to_string(disagreements) +
                                                    " disagreements"};
}

// ---- 7 ------------------------------------------------------------------------------------

Verdict row_order() {
  std::mt19937_64 rng(7);
  std::vector<Operator> ops;
  for (Operator o : kOperators)
    if (!is_positional(o)) ops.push_back(o);
  std::size_t violations = 0, answered = 0;
  for (int i = 0; i < 1000; ++i) {
    Table t = oracle::random_table(rng, 8, 4);
    auto q = oracle::random_question(rng);
    std::uniform_int_distribution<std::size_t> op(0, ops.size() - 1), col(0, t.column_count() - 1);
    Program p{};
    for (auto& s : p) s = {ops[op(rng)], col(rng)};
    std::vector<std::size_t> order(t.row_count());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    Table u = permute_rows(t, order);
    auto a = try_execute(p, t, q), b = try_execute(p, u, q);
    if (a.has_value() != b.has_value() || (a && !answers_match(*a, *b))) ++violations;
    answered += a.has_value();
  }
  return {violations == 0, "1000 triples (" + std::to_string(answered) + " executable), " + std::to_string(violations) +
                               " violations"};
}

// ---- 8 ------------------------------------------------------------------------------------

template <class Model>
std::string endpoint_check(const Model& model, const std::vector<Instance>& data, bool& ok) {
  auto ranked = ranked_vocabulary({}, model.vocab);
  auto curve = overstability_curve(model, data, ranked, parse_sizes("1,2,5,10", ranked.size()));
  const double empty = empty_question_accuracy(model, data), full = accuracy(model, data);
  ok = ok && curve.points.front().accuracy == empty && curve.points.back().accuracy == full;
  return "curve(0) " + sci(curve.points.front().accuracy) + " vs empty " + sci(empty) + ", curve(|V|) " +
         sci(curve.points.back().accuracy) + " vs full " + sci(full);
}

Verdict overstability(const Models& m) {
  bool ok = true;
  std::string detail = "table: " + endpoint_check(m.table, m.eval_tables.instances, ok);
  detail += "; classifier: " + endpoint_check(m.classifier, m.eval_classes.instances, ok);
  auto color = fixtures::color_classifier();
  auto data = fixtures::color_dataset();
  auto top = top_attributed_vocab(
      [&] {
        std::vector<AttributionReport> rs;
        for (const auto& in : data) rs.push_back(integrated_gradients(color, in, IGConfig{64}));
        return rs;
      }(),
      1);
  auto ranked = ranked_vocabulary(top, color.vocab);
  auto curve = overstability_curve(color, data, ranked, parse_sizes("1", ranked.size()));
  const double rel = curve.points[1].relative.value_or(0.0);
  ok = ok && rel == 1.0;
  detail += "; color fixture relative accuracy at k=1 (" + ranked.front() + ") " + sci(rel);
  return {ok, detail};
}

// ---- 9 ------------------------------------------------------------------------------------

Verdict soundness(const Models& m) {
  const auto& data = m.eval_tables.instances;
  std::vector<AttackResult> runs;
  for (const auto& phrase : default_attack_phrases())
    for (Position pos : {Position::prefix, Position::suffix})
      runs.push_back(concat_attack(m.table, data, split_tokens(phrase), pos));
  runs.push_back(stopword_deletion_attack(m.table, data, default_stopwords()));
  for (ReorderMode mode : {ReorderMode::shuffle, ReorderMode::answer_first, ReorderMode::answer_last})
    runs.push_back(row_reorder_attack(m.table, data, mode, 0));
  std::size_t checked = 0, sound = 0;
  for (const auto& r : runs) {
    checked += r.sound_checked();
    sound += r.sound_count();
  }
  bool ok = checked > 0 && sound == checked;
  std::string detail = "gold sound " + std::to_string(sound) + "/" + std::to_string(checked) + " over " +
                       std::to_string(runs.size()) + " attacks";

  auto planted = fixtures::planted_bias_model();
  auto pdata = fixtures::planted_bias_dataset();
  auto concat = concat_attack(planted, pdata, split_tokens("in not a lot of words"), Position::prefix);
  auto stop = stopword_deletion_attack(planted, pdata, default_stopwords());
  const double stop_before = *stop.dataset_baseline_accuracy, stop_after = *stop.dataset_attacked_accuracy;
  ok = ok && concat.sound_count() == concat.sound_checked() && stop.sound_count() == stop.sound_checked();
  ok = ok && concat.baseline_accuracy - concat.attacked_accuracy >= 0.10 && stop_before - stop_after >= 0.10;
  detail += "; planted concat " + sci(concat.baseline_accuracy) + " -> " + sci(concat.attacked_accuracy) +
            ", stopword " + sci(stop_before) + " -> " + sci(stop_after);
  return {ok, detail};
}

// ---- 10 -----------------------------------------------------------------------------------

Verdict efficacy() {
  // Group 1 records drop the high-attribution noun "ball" and always fail;
  // group 2 records keep it and always succeed.
  const std::vector<std::string> q = {"what", "color", "is", "the", "ball"};
  const std::vector<std::string> tags = {"WP", "NN", "VBZ", "DT", "NN"};
  const std::vector<double> scores = {0.1, 0.3, 0.0, 0.0, 1.0};
  std::vector<EfficacyRecord> rs;
  for (int i = 0; i < 5; ++i) rs.push_back({q, {"in", "this", "chart"}, false, scores, tags});
  for (int i = 0; i < 3; ++i) rs.push_back({q, {"the", "ball", "again"}, true, scores, tags});
  auto s = attack_efficacy_split(rs, 0.5);
  bool ok = s.group1 == 5 && s.group2 == 3 && s.group1_failure_rate == 1.0 && s.group2_failure_rate == 0.0;
  // At a threshold below "color"'s share it becomes high-attribution and is
  // missing from the group 2 sentences too.
  auto low = attack_efficacy_split(rs, 0.25);
  ok = ok && low.group1 == 8 && low.group2 == 0 && !low.group2_failure_rate;
  return {ok, "threshold 0.5: " + sci(s.group1_failure_rate.value_or(-1)) + "/" +
                  sci(s.group2_failure_rate.value_or(-1)) + "; threshold 0.25 groups " + std::to_string(low.group1) +
                  "/" + std::to_string(low.group2)};
}

// ---- 11 -----------------------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_file(e.path());
  return out;
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

Verdict determinism(const fs::path& cli, const fs::path& work) {
  fs::remove_all(work);
  const fs::path gen = work / "gen", model = work / "train", attr = work / "attribute", attack = work / "attack",
                 over = work / "overstability";
  const std::string exe = quoted(cli);
  const std::string data = " --data " + quoted(gen / "dataset.jsonl");
  const std::string mdl = " --model " + quoted(model / "model.json");
  struct Step {
    std::string name;
    fs::path out;
    std::string args;
    bool compare;
  };
  const std::vector<Step> steps = {
      {"gen", gen, "gen --seed 7 --out " + quoted(gen), true},
      {"train", model, "train --epochs 3 --jobs 1" + data + " --out " + quoted(model), false},
      {"attribute", attr, "attribute --limit 12 --steps 32 --jobs 2" + data + mdl + " --out " + quoted(attr), true},
      {"attack", attack,
       "attack --kind concat --phrase 'in not a lot of words' --position prefix --jobs 2" + data + mdl + " --out " +
           quoted(attack),
       true},
      {"overstability", over,
       "overstability --sizes 0,1,2,5,10,all --limit 30 --steps 16 --jobs 2" + data + mdl + " --out " + quoted(over),
       true}};
  std::string detail;
  bool ok = true;
  for (const auto& s : steps) {
    const std::string cmd = exe + " " + s.args + " > /dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) return {false, s.name + " exited with an error"};
    if (!s.compare) continue;
    auto first = snapshot(s.out);
    if (std::system(cmd.c_str()) != 0) return {false, s.name + " rerun exited with an error"};
    auto second = snapshot(s.out);
    const bool same = first == second && !first.empty();
    ok = ok && same;
    detail += s.name + (same ? " identical (" + std::to_string(first.size()) + " files); " : " DIFFERS; ");
  }
  return {ok, detail};
}

// ---- 12 -----------------------------------------------------------------------------------

Verdict golden() {
  const fs::path dir = ATTRIQ_GOLDEN_DIR;
  auto color = fixtures::color_classifier();
  auto r = integrated_gradients(color, fixtures::color_dataset().front(), IGConfig{64});
  auto planted = fixtures::planted_bias_model();
  auto doc = render_alignment(attribute_program(planted, fixtures::planted_bias_dataset().front(), IGConfig{64}));
  const std::vector<std::pair<std::string, std::string>> renders = {
      {"color_ball.html", render_text(r, TextMode::html)},
      {"color_ball.ansi", render_text(r, TextMode::ansi)},
      {"planted_alignment.csv", doc.csv},
      {"planted_alignment.svg", doc.svg}};
  std::size_t matched = 0;
  for (const auto& [name, text] : renders)
    if (fs::exists(dir / name) && read_file(dir / name) == text) ++matched;
  return {matched == renders.size(), std::to_string(matched) + "/" + std::to_string(renders.size()) + " files match"};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: acceptance ATTRIQ_CLI WORK_DIR\n";
    return 2;
  }
  const auto t0 = Clock::now();
  const Models models = build_models();
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"autodiff gradient check", [&] { return gradient_check(models); }},
      {"integrated gradients completeness", [&] { return completeness(models); }},
      {"integrated gradients axioms", axioms},
      {"product oracle", product_oracle},
      {"quadrature convergence", convergence},
      {"table executor oracle equivalence", oracle_equivalence},
      {"row order invariance", row_order},
      {"overstability endpoints", [&] { return overstability(models); }},
      {"attack soundness and planted drops", [&] { return soundness(models); }},
      {"efficacy split", efficacy},
      {"cli determinism", [&] { return determinism(argv[1], argv[2]); }},
      {"golden renders", golden}};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto c0 = Clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("%s %2zu %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                v.detail.c_str(), seconds_since(c0));
    std::fflush(stdout);
  }
  std::printf("total %.1f s, %d failing\n", seconds_since(t0), failures);
  return failures ? 1 : 0;
}
