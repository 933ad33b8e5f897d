// attriq: command-line front end.
//
// Exit codes: 0 success, 1 usage error, 2 data or runtime error.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "CLI11.hpp"
#include "attriq/attriq.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace attriq;

namespace {

struct RunConfig {
  std::string out = "out";
  std::uint64_t seed = 0;
  std::size_t jobs = 0;
  std::string data;
  std::string data_format = "jsonl";
  std::string tables_dir;
  std::string model;
  std::string fixture;
  std::size_t limit = 0;

  // gen
  std::string kind = "table";
  std::vector<std::string> counts;
  // train
  std::size_t dim = kDefaultDim;
  std::size_t epochs = 20;
  std::size_t batch = 32;
  double lr = 0.05;
  // attribution
  std::size_t steps = 64;
  std::string quadrature = "trapezoid";
  // overstability
  std::string sizes = "0,1,2,5,10,all";
  std::size_t top_k = 1;
  std::string reports;
  // attack
  std::string attack = "concat";
  std::string phrase;
  std::string position = "prefix";
  std::string mode = "shuffle";
  bool all_phrases = false;
  std::string phrases_file;
  std::string stopwords_file;
  std::string nouns_file;
  std::string order_words_file;
  // efficacy
  std::string records;
  double threshold = 0.5;
  // render
  std::string format = "html";
  std::string id;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Output {
  fs::path dir;
  std::vector<std::string> files;

  void write(const std::string& name, const std::string& text) {
    write_file(dir / name, text);
    files.push_back(name);
  }
};

fs::path data_root() {
#ifdef ATTRIQ_DATA_DIR
  return ATTRIQ_DATA_DIR;
#else
  return "data";
#endif
}

std::vector<std::string> word_list(const std::string& path, const std::string& shipped,
                                   const std::vector<std::string>& fallback) {
  if (!path.empty()) return load_word_list(path);
  fs::path p = data_root() / shipped;
  if (fs::exists(p)) return load_word_list(p);
  return fallback;
}

IGConfig ig_config(const RunConfig& c) {
  auto q = parse_quadrature(c.quadrature);
  if (!q) throw UsageError("unknown quadrature '" + c.quadrature + "' (use trapezoid or left-riemann)");
  if (c.steps == 0) throw UsageError("--steps must be at least 1");
  return IGConfig{c.steps, *q, std::nullopt};
}

// ---- models and data ----------------------------------------------------------------

struct Fixture {
  AnyModel model;
  std::vector<Instance> data;
};

std::optional<Fixture> fixture(const std::string& name, std::uint64_t seed) {
  if (name.empty()) return std::nullopt;
  if (name == "planted-bias") return Fixture{fixtures::planted_bias_model(), fixtures::planted_bias_dataset(seed)};
  if (name == "medal-prev") return Fixture{fixtures::medal_prev_model(), fixtures::medal_dataset(seed)};
  if (name == "color") return Fixture{fixtures::color_classifier(), fixtures::color_dataset()};
  if (name == "subject-keyed") return Fixture{fixtures::subject_keyed_classifier(), fixtures::subject_dataset()};
  throw UsageError("unknown fixture '" + name + "' (planted-bias, medal-prev, color, subject-keyed)");
}

AnyModel load_any_model(const RunConfig& c) {
  if (!c.model.empty()) return load_model(c.model);
  if (auto f = fixture(c.fixture, c.seed)) return f->model;
  throw UsageError("a model is required: pass --model FILE or --fixture NAME");
}

std::vector<Instance> load_instances(const RunConfig& c, const std::optional<Vocabulary>& vocab = std::nullopt) {
  std::vector<Instance> out;
  if (!c.data.empty()) {
    DatasetFormat fmt;
    if (c.data_format == "jsonl")
      fmt = DatasetFormat::jsonl;
    else if (c.data_format == "csv")
      fmt = DatasetFormat::csv;
    else
      throw UsageError("unknown --format-data '" + c.data_format + "' (jsonl or csv)");
    out = load_dataset(c.data, fmt, vocab, c.tables_dir).instances;
  } else if (auto f = fixture(c.fixture, c.seed)) {
    out = f->data;
  } else {
    throw UsageError("a dataset is required: pass --data FILE or --fixture NAME");
  }
  if (c.limit > 0 && out.size() > c.limit) out.resize(c.limit);
  return out;
}

const TableQAModel& require_table_model(const AnyModel& m, const char* what) {
  if (const auto* t = std::get_if<TableQAModel>(&m)) return *t;
  throw UsageError(std::string(what) + " needs a table QA model");
}

// ---- subcommands ------------------------------------------------------------------------

json run_gen(const RunConfig& c, Output& out) {
  CorpusKind kind;
  if (c.kind == "table")
    kind = CorpusKind::table;
  else if (c.kind == "classifier")
    kind = CorpusKind::classifier;
  else
    throw UsageError("unknown --kind '" + c.kind + "' (table or classifier)");
  GenConfig g = GenConfig::defaults(kind);
  g.seed = c.seed;
  if (!c.counts.empty()) {
    g.counts.clear();
    for (const auto& item : c.counts) {
      auto eq = item.find('=');
      if (eq == std::string::npos) throw UsageError("--count expects TEMPLATE=N, got '" + item + "'");
      g.counts[item.substr(0, eq)] = std::stoul(item.substr(eq + 1));
    }
  }
  Dataset ds = generate_synthetic(g);
  out.write("dataset.jsonl", dataset_jsonl(ds.instances));
  std::string vocab;
  for (const auto& t : ds.vocab.tokens()) vocab += t + "\n";
  out.write("vocab.txt", vocab);
  return {{"instances", ds.instances.size()}, {"vocabulary", ds.vocab.size()}, {"provenance", ds.provenance}};
}

json run_train(const RunConfig& c, Output& out) {
  if (c.data.empty()) throw UsageError("train needs --data");
  Dataset ds = load_dataset(c.data, c.data_format == "csv" ? DatasetFormat::csv : DatasetFormat::jsonl, std::nullopt,
                            c.tables_dir);
  if (ds.instances.empty()) throw DataError("train: dataset " + c.data + " is empty");
  TrainConfig tc{c.lr, c.epochs, c.batch, c.seed};
  const bool tables = ds.instances.front().table.has_value();
  TrainResult r;
  AnyModel model;
  if (tables) {
    TableQAModel m = TableQAModel::create(ds.vocab, c.dim, c.seed);
    r = train(m, ds.instances, tc);
    model = std::move(m);
  } else {
    ClassifierModel m = ClassifierModel::create(ds.vocab, answer_classes(ds.instances), c.dim, c.seed);
    r = train(m, ds.instances, tc);
    model = std::move(m);
  }
  out.write("model.json", model_to_json(model).dump(1) + "\n");
  std::string loss = csv::format_row({"epoch", "loss"});
  for (std::size_t i = 0; i < r.loss_trace.size(); ++i)
    loss += csv::format_row({std::to_string(i), format_number(r.loss_trace[i])});
  out.write("loss.csv", loss);
  const double acc = std::visit([&](const auto& m) { return accuracy(m, ds.instances, c.jobs); }, model);
  return {{"kind", tables ? "tableqa" : "classifier"},
          {"initial_loss", r.initial_loss()},
          {"final_loss", r.final_loss()},
          {"train_accuracy", acc}};
}

json run_eval(const RunConfig& c, Output& out) {
  AnyModel model = load_any_model(c);
  return std::visit(
      [&](const auto& m) {
        auto data = load_instances(c, m.vocab);
        auto preds = parallel_map(data.size(), c.jobs, [&](std::size_t i) {
          auto a = predict_answer(m, data[i]);
          json j = {{"id", data[i].id}, {"gold", data[i].gold_answer.text()}};
          j["prediction"] = a ? json(a->text()) : json();
          j["correct"] = answer_correct(a, data[i].gold_answer);
          return j;
        });
        std::string lines;
        std::size_t hits = 0;
        for (const auto& p : preds) {
          lines += p.dump() + "\n";
          hits += p["correct"].template get<bool>();
        }
        out.write("predictions.jsonl", lines);
        json summary = {{"n", data.size()},
                        {"accuracy", data.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(data.size())},
                        {"empty_question_accuracy", empty_question_accuracy(m, data, c.jobs)}};
        out.write("eval.json", summary.dump(2) + "\n");
        return summary;
      },
      model);
}

std::vector<AttributionReport> attribute_all(const AnyModel& model, const std::vector<Instance>& data,
                                             const IGConfig& cfg, std::size_t jobs) {
  auto nested = std::visit(
      [&](const auto& m) {
        return parallel_map(data.size(), jobs, [&](std::size_t i) {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, ClassifierModel>)
            return std::vector<AttributionReport>{integrated_gradients(m, data[i], cfg)};
          else
            return attribute_program(m, data[i], cfg);
        });
      },
      model);
  std::vector<AttributionReport> out;
  for (auto& v : nested)
    for (auto& r : v) out.push_back(std::move(r));
  return out;
}

std::vector<AttributionReport> read_reports(const std::string& path) {
  std::vector<AttributionReport> out;
  for (const auto& j : load_jsonl(path)) {
    try {
      out.push_back(report_from_json(j));
    } catch (const json::exception& e) {
      throw DataError(path + ": bad attribution report: " + e.what());
    }
  }
  return out;
}

std::string reports_jsonl(const std::vector<AttributionReport>& reports) {
  std::string s;
  for (const auto& r : reports) s += report_to_json(r).dump() + "\n";
  return s;
}

json run_attribute(const RunConfig& c, Output& out) {
  AnyModel model = load_any_model(c);
  auto data = std::visit([&](const auto& m) { return load_instances(c, m.vocab); }, model);
  auto reports = attribute_all(model, data, ig_config(c), c.jobs);
  out.write("attributions.jsonl", reports_jsonl(reports));
  double worst = 0.0;
  std::size_t omitted = 0;
  for (const auto& r : reports) {
    worst = std::max(worst, r.residual);
    omitted += r.omitted;
  }
  return {{"reports", reports.size()}, {"omitted", omitted}, {"max_residual", worst}};
}

json run_overstability(const RunConfig& c, Output& out) {
  AnyModel model = load_any_model(c);
  auto data = std::visit([&](const auto& m) { return load_instances(c, m.vocab); }, model);
  auto reports = c.reports.empty() ? attribute_all(model, data, ig_config(c), c.jobs) : read_reports(c.reports);
  if (c.reports.empty()) out.write("attributions.jsonl", reports_jsonl(reports));
  std::vector<AttributionReport> selected;
  for (const auto& r : reports)
    if (r.target.rfind("col[", 0) != 0) selected.push_back(r);
  auto top = top_attributed_vocab(selected, c.top_k);
  return std::visit(
      [&](const auto& m) {
        auto ranked = ranked_vocabulary(top, m.vocab);
        auto curve = overstability_curve(m, data, ranked, parse_sizes(c.sizes, ranked.size()), c.jobs);
        out.write("curve.csv", curve_csv(curve));
        json j = curve_to_json(curve);
        j["empty_question_accuracy"] = empty_question_accuracy(m, data, c.jobs);
        out.write("curve.json", j.dump(2) + "\n");
        return json{{"top_attributed", top}, {"full_accuracy", curve.full_accuracy}, {"points", curve.points.size()}};
      },
      model);
}

json run_attack(const RunConfig& c, Output& out) {
  AnyModel model = load_any_model(c);
  auto data = std::visit([&](const auto& m) { return load_instances(c, m.vocab); }, model);
  std::vector<AttackResult> results;
  json extra = json::object();
  std::visit(
      [&](const auto& m) {
        if (c.attack == "concat") {
          Position pos;
          if (c.position == "prefix")
            pos = Position::prefix;
          else if (c.position == "suffix")
            pos = Position::suffix;
          else
            throw UsageError("unknown --position '" + c.position + "' (prefix or suffix)");
          std::vector<std::string> phrases;
          if (c.all_phrases)
            phrases = word_list(c.phrases_file, "attack_phrases.txt", default_attack_phrases());
          else if (!c.phrase.empty())
            phrases = {c.phrase};
          else
            throw UsageError("concat attack needs --phrase TEXT or --all-phrases");
          for (const auto& p : phrases) {
            auto toks = split_tokens(p);
            if (toks.empty()) throw UsageError("attack phrase is empty");
            results.push_back(concat_attack(m, data, toks, pos, c.jobs));
          }
          if (results.size() > 1) results.push_back(union_attack(results));
        } else if (c.attack == "stopword") {
          results.push_back(
              stopword_deletion_attack(m, data, word_list(c.stopwords_file, "stopwords.txt", default_stopwords()), c.jobs));
        } else if (c.attack == "reorder") {
          auto mode = parse_reorder_mode(c.mode);
          if (!mode) throw UsageError("unknown --mode '" + c.mode + "' (shuffle, answer_first, answer_last)");
          results.push_back(row_reorder_attack(
              m, data, *mode, c.seed, word_list(c.order_words_file, "order_words.txt", default_order_words()), c.jobs));
        } else if (c.attack == "subject") {
          auto r = subject_ablation_attack(m, data, word_list(c.nouns_file, "subject_nouns.txt", default_subject_nouns()),
                                           c.jobs);
          json per = json::array();
          for (const auto& [noun, rate] : r.per_noun) per.push_back({{"noun", noun}, {"same_answer_rate", rate}});
          extra = {{"per_noun", per}, {"mean_rate", r.mean_rate}, {"n_evaluated", r.n_evaluated}, {"n_skipped", r.n_skipped}};
          out.write("subject_ablation.json", extra.dump(2) + "\n");
        } else {
          throw UsageError("unknown --kind '" + c.attack + "' (concat, stopword, reorder, subject)");
        }
      },
      model);
  if (!results.empty()) {
    std::string records;
    json summaries = json::array();
    for (const auto& r : results) {
      records += attack_jsonl(r);
      summaries.push_back(attack_summary_json(r));
    }
    out.write("attack.jsonl", records);
    out.write("attack_summary.csv", attack_summary_csv(results));
    out.write("attack_summary.json", summaries.dump(2) + "\n");
    return summaries;
  }
  return extra;
}

json run_default_programs(const RunConfig& c, Output& out) {
  AnyModel model = load_any_model(c);
  const TableQAModel& m = require_table_model(model, "default-programs");
  auto data = load_instances(c, m.vocab);
  std::vector<Table> tables;
  for (const auto& in : data) {
    if (!in.table) throw DataError("instance " + in.id + " has no table");
    if (std::find(tables.begin(), tables.end(), *in.table) == tables.end()) tables.push_back(*in.table);
  }
  auto a = default_program_analysis(m, tables, &data, c.steps, c.jobs);
  json j = default_programs_to_json(a, tables);
  out.write("default_programs.json", j.dump(2) + "\n");
  return {{"tables", tables.size()}, {"groups", a.groups.size()}, {"operator_match_rate", j["operator_match_rate"]}};
}

json run_triggers(const RunConfig& c, Output& out) {
  std::vector<AttributionReport> reports;
  if (!c.reports.empty()) {
    reports = read_reports(c.reports);
  } else {
    AnyModel model = load_any_model(c);
    const TableQAModel& m = require_table_model(model, "triggers");
    reports = attribute_all(model, load_instances(c, m.vocab), ig_config(c), c.jobs);
  }
  json j = trigger_table_to_json(operator_trigger_table(reports));
  out.write("triggers.json", j.dump(2) + "\n");
  return {{"reports", reports.size()}};
}

json run_efficacy(const RunConfig& c, Output& out) {
  std::vector<EfficacyRecord> records;
  if (!c.records.empty()) {
    for (const auto& j : load_jsonl(c.records)) {
      try {
        records.push_back(efficacy_record_from_json(j));
      } catch (const json::exception& e) {
        throw DataError(c.records + ": bad efficacy record: " + e.what());
      }
    }
  } else {
    if (c.phrase.empty()) throw UsageError("efficacy needs --records FILE or --phrase TEXT with a model and data");
    AnyModel model = load_any_model(c);
    const Position pos = c.position == "suffix" ? Position::suffix : Position::prefix;
    records = std::visit(
        [&](const auto& m) {
          return efficacy_records(m, load_instances(c, m.vocab), split_tokens(c.phrase), pos, ig_config(c), c.jobs);
        },
        model);
    std::string lines;
    for (const auto& r : records) lines += efficacy_record_to_json(r).dump() + "\n";
    out.write("efficacy_records.jsonl", lines);
  }
  json j = efficacy_split_to_json(attack_efficacy_split(records, c.threshold));
  j["threshold"] = c.threshold;
  out.write("efficacy.json", j.dump(2) + "\n");
  return j;
}

json run_render(const RunConfig& c, Output& out) {
  if (c.reports.empty()) throw UsageError("render needs --reports FILE");
  auto reports = read_reports(c.reports);
  std::map<std::string, std::vector<AttributionReport>> by_id;
  std::vector<std::string> order;
  for (auto& r : reports) {
    if (!c.id.empty() && r.instance_id != c.id) continue;
    if (!by_id.count(r.instance_id)) order.push_back(r.instance_id);
    by_id[r.instance_id].push_back(std::move(r));
  }
  if (order.empty()) throw DataError("render: no reports" + (c.id.empty() ? std::string() : " for id " + c.id));
  for (const auto& id : order) {
    const auto& rs = by_id[id];
    auto shown = std::find_if(rs.begin(), rs.end(), [](const auto& r) { return !r.omitted; });
    const AttributionReport& text = shown == rs.end() ? rs.front() : *shown;
    if (c.format == "html") {
      out.write(id + ".html", render_text(text, TextMode::html));
    } else if (c.format == "ansi") {
      out.write(id + ".ansi.txt", render_text(text, TextMode::ansi));
    } else if (c.format == "alignment") {
      auto doc = render_alignment(rs);
      out.write(id + ".csv", doc.csv);
      out.write(id + ".svg", doc.svg);
    } else {
      throw UsageError("unknown --format '" + c.format + "' (html, ansi, alignment)");
    }
  }
  return {{"documents", order.size()}};
}

// ---- option wiring ----------------------------------------------------------------------

void common(CLI::App* sub, RunConfig& c) {
  sub->add_option("--out", c.out, "Output directory")->capture_default_str();
  sub->add_option("--seed", c.seed, "Random seed")->envname("ATTRIQ_SEED")->capture_default_str();
  sub->add_option("--jobs", c.jobs, "Worker threads (0 = all cores)")->capture_default_str();
}

void inputs(CLI::App* sub, RunConfig& c) {
  sub->add_option("--data", c.data, "Dataset file");
  sub->add_option("--data-format", c.data_format, "jsonl or csv")->capture_default_str();
  sub->add_option("--tables-dir", c.tables_dir, "Directory of table files for csv datasets");
  sub->add_option("--model", c.model, "Model checkpoint");
  sub->add_option("--fixture", c.fixture, "Built-in model and data: planted-bias, medal-prev, color, subject-keyed");
  sub->add_option("--limit", c.limit, "Use at most N instances (0 = all)")->capture_default_str();
}

void ig_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--steps", c.steps, "Quadrature steps")->capture_default_str();
  sub->add_option("--quadrature", c.quadrature, "trapezoid or left-riemann")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attriq: integrated-gradients attribution and robustness analysis for QA models"};
  app.set_config("--config", "", "TOML config file; command-line flags take precedence");
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  RunConfig c;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  common(gen, c);
  gen->add_option("--kind", c.kind, "table or classifier")->capture_default_str();
  gen->add_option("--count", c.counts, "TEMPLATE=N, repeatable");

  auto* tr = app.add_subcommand("train", "Train a built-in model");
  common(tr, c);
  inputs(tr, c);
  tr->add_option("--dim", c.dim, "Embedding size")->capture_default_str();
  tr->add_option("--epochs", c.epochs)->capture_default_str();
  tr->add_option("--batch", c.batch)->capture_default_str();
  tr->add_option("--lr", c.lr)->capture_default_str();

  auto* ev = app.add_subcommand("eval", "Evaluate accuracy");
  common(ev, c);
  inputs(ev, c);

  auto* at = app.add_subcommand("attribute", "Integrated-gradients attributions per instance");
  common(at, c);
  inputs(at, c);
  ig_options(at, c);

  auto* ov = app.add_subcommand("overstability", "Accuracy against retained vocabulary size");
  common(ov, c);
  inputs(ov, c);
  ig_options(ov, c);
  ov->add_option("--sizes", c.sizes, "Comma-separated sizes; 'all' is the full vocabulary")->capture_default_str();
  ov->add_option("--top-k", c.top_k, "Top tokens taken per report")->capture_default_str();
  ov->add_option("--reports", c.reports, "Reuse attributions from a JSONL file");

  auto* ak = app.add_subcommand("attack", "Run an attack");
  common(ak, c);
  inputs(ak, c);
  ak->add_option("--kind", c.attack, "concat, stopword, reorder or subject")->capture_default_str();
  ak->add_option("--phrase", c.phrase, "Concat phrase");
  ak->add_option("--position", c.position, "prefix or suffix")->capture_default_str();
  ak->add_flag("--all-phrases", c.all_phrases, "Run every phrase from the phrase list and their union");
  ak->add_option("--phrases-file", c.phrases_file, "Attack phrase list");
  ak->add_option("--stopwords", c.stopwords_file, "Stop-word list");
  ak->add_option("--nouns", c.nouns_file, "Subject replacement nouns");
  ak->add_option("--order-words", c.order_words_file, "Order words excluded from row reordering");
  ak->add_option("--mode", c.mode, "shuffle, answer_first or answer_last")->capture_default_str();

  auto* dp = app.add_subcommand("default-programs", "Empty-question programs per table");
  common(dp, c);
  inputs(dp, c);
  ig_options(dp, c);

  auto* tg = app.add_subcommand("triggers", "Top-attributed tokens per selected operator");
  common(tg, c);
  inputs(tg, c);
  ig_options(tg, c);
  tg->add_option("--reports", c.reports, "Attribution JSONL file");

  auto* ef = app.add_subcommand("efficacy", "Attack failure rates split by attribution");
  common(ef, c);
  inputs(ef, c);
  ig_options(ef, c);
  ef->add_option("--records", c.records, "Efficacy records JSONL");
  ef->add_option("--phrase", c.phrase, "Concat phrase used to build records");
  ef->add_option("--position", c.position, "prefix or suffix")->capture_default_str();
  ef->add_option("--threshold", c.threshold, "High-attribution share of the question's max |score|")
      ->capture_default_str();

  auto* rd = app.add_subcommand("render", "Render attribution reports");
  common(rd, c);
  rd->add_option("--reports", c.reports, "Attribution JSONL file")->required();
  rd->add_option("--format", c.format, "html, ansi or alignment")->capture_default_str();
  rd->add_option("--id", c.id, "Only this instance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  Output out{c.out, {}};
  try {
    json summary;
    if (name == "gen") summary = run_gen(c, out);
    else if (name == "train") summary = run_train(c, out);
    else if (name == "eval") summary = run_eval(c, out);
    else if (name == "attribute") summary = run_attribute(c, out);
    else if (name == "overstability") summary = run_overstability(c, out);
    else if (name == "attack") summary = run_attack(c, out);
    else if (name == "default-programs") summary = run_default_programs(c, out);
    else if (name == "triggers") summary = run_triggers(c, out);
    else if (name == "efficacy") summary = run_efficacy(c, out);
    else if (name == "render") summary = run_render(c, out);

    json manifest = {{"tool", "attriq"},
                     {"version", kVersion},
                     {"subcommand", name},
                     {"seed", c.seed},
                     {"config", app.config_to_str(true, false)},
                     {"outputs", out.files},
                     {"summary", summary}};
    write_file(out.dir / "manifest.json", manifest.dump(2) + "\n");
    std::cout << summary.dump() << "\n";
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "attriq " << name << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "attriq " << name << ": " << e.what() << "\n";
    return 2;
  }
}
