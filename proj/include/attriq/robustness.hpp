#pragma once

// Overstability curves, attribution-guided attacks and the analyses built on
// them (default programs, operator triggers, attack efficacy).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "attriq/attribution.hpp"
#include "attriq/csv.hpp"
#include "attriq/models.hpp"
#include "attriq/parallel.hpp"
#include "attriq/resources.hpp"
#include "json.hpp"

namespace attriq {

// ---- overstability ---------------------------------------------------------------

/// Tokens ranked by how often they are among a report's top-k tokens
/// (descending count, ties by first occurrence). Omitted reports are skipped.
inline std::vector<std::string> top_attributed_vocab(const std::vector<AttributionReport>& reports, std::size_t k = 1) {
  std::vector<std::string> order;
  std::map<std::string, std::size_t> counts;
  bool any = false;
  for (const auto& r : reports) {
    if (r.omitted) continue;
    any = true;
    std::vector<std::size_t> idx(r.tokens.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return r.token_scores[a] > r.token_scores[b]; });
    for (std::size_t i = 0; i < std::min(k, idx.size()); ++i) {
      const std::string& tok = r.tokens[idx[i]];
      if (counts[tok]++ == 0) order.push_back(tok);
    }
  }
  if (!any) throw Error("top attributed vocabulary: every report is omitted");
  std::stable_sort(order.begin(), order.end(),
                   [&](const std::string& a, const std::string& b) { return counts[a] > counts[b]; });
  return order;
}

/// `top` followed by the rest of the vocabulary in index order, so that the
/// last size of a curve keeps every token.
inline std::vector<std::string> ranked_vocabulary(const std::vector<std::string>& top, const Vocabulary& vocab) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& t : top)
    if (vocab.find(t) && seen.insert(t).second) out.push_back(t);
  for (const auto& t : vocab.tokens())
    if (seen.insert(t).second) out.push_back(t);
  return out;
}

/// Replaces every token whose vocabulary id is not kept with PAD.
inline std::vector<std::string> mask_tokens(std::span<const std::string> tokens, const Vocabulary& vocab,
                                            const std::unordered_set<std::size_t>& keep) {
  std::vector<std::string> out;
  for (const auto& t : tokens) out.push_back(keep.count(vocab.index(t)) ? t : std::string(kPadToken));
  return out;
}

inline std::optional<Answer> predict_masked(const ClassifierModel& m, const Instance& in,
                                            const std::unordered_set<std::size_t>& keep) {
  auto q = mask_tokens(in.question, m.vocab, keep);
  return predict_answer(m, in, q);
}

/// The prepared tokens (including match markers) are masked; the column
/// selection priors are kept.
inline std::optional<Answer> predict_masked(const TableQAModel& m, const Instance& in,
                                            const std::unordered_set<std::size_t>& keep) {
  if (!in.table) throw DataError("instance " + in.id + " has no table");
  PreparedQuestion prepared = preprocess_matches(in.question, *in.table);
  prepared.tokens = mask_tokens(prepared.tokens, m.vocab, keep);
  auto pred = tableqa_predict_prepared(m, prepared, *in.table);
  return try_execute(pred.program, *in.table, mask_tokens(in.question, m.vocab, keep));
}

template <class Model>
double accuracy(const Model& m, const std::vector<Instance>& data, std::size_t jobs = 1) {
  if (data.empty()) return 0.0;
  auto hits = parallel_map(data.size(), jobs, [&](std::size_t i) { return answered_correctly(m, data[i]) ? 1 : 0; });
  double s = 0.0;
  for (int h : hits) s += h;
  return s / static_cast<double>(data.size());
}

template <class Model>
double accuracy_with_keep_set(const Model& m, const std::vector<Instance>& data,
                              const std::unordered_set<std::size_t>& keep, std::size_t jobs = 1) {
  if (data.empty()) return 0.0;
  auto hits = parallel_map(data.size(), jobs, [&](std::size_t i) {
    return answer_correct(predict_masked(m, data[i], keep), data[i].gold_answer) ? 1 : 0;
  });
  double s = 0.0;
  for (int h : hits) s += h;
  return s / static_cast<double>(data.size());
}

/// Accuracy when every question token is replaced by PAD; the table and its
/// priors are left as they are.
template <class Model>
double empty_question_accuracy(const Model& m, const std::vector<Instance>& data, std::size_t jobs = 1) {
  return accuracy_with_keep_set(m, data, {}, jobs);
}

struct OverstabilityPoint {
  std::size_t size = 0;
  double accuracy = 0.0;
  std::optional<double> relative;  // accuracy / unrestricted accuracy
};

struct OverstabilityCurve {
  std::vector<OverstabilityPoint> points;
  std::vector<std::string> ranked;
  double full_accuracy = 0.0;
};

/// Parses "0,1,2,5,all" against a vocabulary of size n. 0 and n are added when missing.
inline std::vector<std::size_t> parse_sizes(const std::string& text, std::size_t n) {
  std::set<std::size_t> sizes{0, n};
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    if (item == "all") continue;
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size()) throw Error("bad vocabulary size '" + item + "'");
    sizes.insert(std::min(v, n));
  }
  return {sizes.begin(), sizes.end()};
}

template <class Model>
OverstabilityCurve overstability_curve(const Model& m, const std::vector<Instance>& data,
                                       const std::vector<std::string>& ranked, const std::vector<std::size_t>& sizes,
                                       std::size_t jobs = 1) {
  if (sizes.empty() || sizes.front() != 0) throw Error("overstability: sizes must start at 0");
  for (std::size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] <= sizes[i - 1]) throw Error("overstability: sizes must be strictly increasing");
  if (sizes.back() > ranked.size()) throw Error("overstability: size exceeds the ranked vocabulary");
  OverstabilityCurve curve;
  curve.ranked = ranked;
  curve.full_accuracy = accuracy(m, data, jobs);
  std::unordered_set<std::size_t> keep;
  std::size_t taken = 0;
  for (std::size_t k : sizes) {
    for (; taken < k; ++taken) keep.insert(m.vocab.index(ranked[taken]));
    OverstabilityPoint p;
    p.size = k;
    p.accuracy = accuracy_with_keep_set(m, data, keep, jobs);
    if (curve.full_accuracy > 0.0) p.relative = p.accuracy / curve.full_accuracy;
    curve.points.push_back(p);
  }
  return curve;
}

inline std::string curve_csv(const OverstabilityCurve& c) {
  std::string out = csv::format_row({"size", "accuracy", "relative_accuracy"});
  for (const auto& p : c.points)
    out += csv::format_row({std::to_string(p.size), format_number(p.accuracy),
                            p.relative ? format_number(*p.relative) : std::string()});
  return out;
}

inline nlohmann::json curve_to_json(const OverstabilityCurve& c) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : c.points) {
    nlohmann::json j = {{"size", p.size}, {"accuracy", p.accuracy}};
    j["relative"] = p.relative ? nlohmann::json(*p.relative) : nlohmann::json();
    pts.push_back(j);
  }
  return {{"points", pts}, {"ranked", c.ranked}, {"full_accuracy", c.full_accuracy}};
}

// ---- attacks ---------------------------------------------------------------------

struct AttackRecord {
  std::string id;
  std::vector<std::string> question;  // perturbed question
  std::optional<std::string> original;
  std::optional<std::string> attacked;
  std::string gold;
  bool original_correct = false;
  bool attacked_correct = false;
  bool success = false;              // original correct and attacked incorrect
  std::optional<bool> gold_sound;    // gold program reproduces gold on the perturbed input
};

struct AttackResult {
  std::string attack;
  std::string position;  // prefix/suffix for concat, mode for row reorder
  std::vector<AttackRecord> records;
  std::size_t n_dataset = 0;
  std::size_t n_evaluated = 0;
  std::size_t n_skipped = 0;
  double baseline_accuracy = 0.0;  // over evaluated instances
  double attacked_accuracy = 0.0;  // over evaluated instances
  // Stop-word deletion only evaluates originally correct instances; these
  // report accuracy over the whole dataset.
  std::optional<double> retention_rate;
  std::optional<double> dataset_baseline_accuracy;
  std::optional<double> dataset_attacked_accuracy;

  std::size_t sound_checked() const {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const auto& r) { return r.gold_sound.has_value(); }));
  }
  std::size_t sound_count() const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [](const auto& r) { return r.gold_sound.value_or(false); }));
  }
};

namespace detail {

inline std::optional<std::string> answer_text(const std::optional<Answer>& a) {
  if (!a) return std::nullopt;
  return a->text();
}

/// Evaluates one perturbed instance against the original.
template <class Model>
AttackRecord attack_record(const Model& m, const Instance& original, const Instance& perturbed) {
  AttackRecord r;
  r.id = original.id;
  r.question = perturbed.question;
  auto before = predict_answer(m, original);
  auto after = predict_answer(m, perturbed);
  r.original = answer_text(before);
  r.attacked = answer_text(after);
  r.gold = perturbed.gold_answer.text();
  r.original_correct = answer_correct(before, original.gold_answer);
  r.attacked_correct = answer_correct(after, perturbed.gold_answer);
  r.success = r.original_correct && !r.attacked_correct;
  if (perturbed.gold_program && perturbed.table) {
    auto g = try_execute(*perturbed.gold_program, *perturbed.table, perturbed.question);
    r.gold_sound = g && answers_match(*g, perturbed.gold_answer);
  }
  return r;
}

inline void summarize(AttackResult& res) {
  res.n_evaluated = res.records.size();
  double base = 0.0, att = 0.0;
  for (const auto& r : res.records) {
    base += r.original_correct;
    att += r.attacked_correct;
  }
  if (res.n_evaluated > 0) {
    res.baseline_accuracy = base / static_cast<double>(res.n_evaluated);
    res.attacked_accuracy = att / static_cast<double>(res.n_evaluated);
  }
}

/// Runs `perturb` per instance; instances it declines are counted as skipped.
template <class Model, class Perturb>
AttackResult run_attack(const Model& m, const std::vector<Instance>& data, std::string name, std::string position,
                        std::size_t jobs, Perturb perturb) {
  struct Slot {
    bool evaluated = false;
    AttackRecord record;
  };
  auto slots = parallel_map(data.size(), jobs, [&](std::size_t i) {
    Slot s;
    std::optional<Instance> p = perturb(data[i]);
    if (!p) return s;
    s.evaluated = true;
    s.record = attack_record(m, data[i], *p);
    return s;
  });
  AttackResult res;
  res.attack = std::move(name);
  res.position = std::move(position);
  res.n_dataset = data.size();
  for (auto& s : slots) {
    if (s.evaluated)
      res.records.push_back(std::move(s.record));
    else
      ++res.n_skipped;
  }
  summarize(res);
  return res;
}

}  // namespace detail

enum class Position { prefix, suffix };

inline std::string position_name(Position p) { return p == Position::prefix ? "prefix" : "suffix"; }

inline std::vector<std::string> concat_question(std::span<const std::string> question,
                                                std::span<const std::string> phrase, Position pos) {
  std::vector<std::string> out;
  if (pos == Position::prefix) out.insert(out.end(), phrase.begin(), phrase.end());
  out.insert(out.end(), question.begin(), question.end());
  if (pos == Position::suffix) out.insert(out.end(), phrase.begin(), phrase.end());
  return out;
}

/// Adds a content-free phrase before or after every question.
template <class Model>
AttackResult concat_attack(const Model& m, const std::vector<Instance>& data, const std::vector<std::string>& phrase,
                           Position pos, std::size_t jobs = 1) {
  if (phrase.empty()) throw Error("concat attack: phrase is empty");
  std::string name = "concat:";
  for (std::size_t i = 0; i < phrase.size(); ++i) name += (i ? " " : "") + phrase[i];
  return detail::run_attack(m, data, name, position_name(pos), jobs, [&](const Instance& in) -> std::optional<Instance> {
    Instance p = in;
    p.question = concat_question(in.question, phrase, pos);
    p.pos_tags.reset();
    p.subject.reset();
    return p;
  });
}

/// An instance counts as correct only when it is correct under every attack.
inline AttackResult union_attack(const std::vector<AttackResult>& results) {
  if (results.empty()) throw Error("union attack: no attack results");
  AttackResult u;
  u.attack = "union";
  u.position = results.front().position;
  u.n_dataset = results.front().n_dataset;
  std::map<std::string, AttackRecord> merged;
  std::vector<std::string> order;
  for (const auto& r : results.front().records) {
    merged[r.id] = r;
    order.push_back(r.id);
  }
  for (std::size_t k = 1; k < results.size(); ++k) {
    std::set<std::string> present;
    for (const auto& r : results[k].records) {
      present.insert(r.id);
      auto it = merged.find(r.id);
      if (it == merged.end()) continue;
      it->second.attacked_correct = it->second.attacked_correct && r.attacked_correct;
      if (!r.attacked_correct) {
        it->second.attacked = r.attacked;
        it->second.question = r.question;
      }
      if (r.gold_sound) it->second.gold_sound = it->second.gold_sound.value_or(true) && *r.gold_sound;
    }
    for (const auto& id : order)
      if (!present.count(id)) merged.erase(id);
  }
  for (const auto& id : order) {
    auto it = merged.find(id);
    if (it == merged.end()) continue;
    it->second.success = it->second.original_correct && !it->second.attacked_correct;
    u.records.push_back(it->second);
  }
  u.n_skipped = u.n_dataset - u.records.size();
  detail::summarize(u);
  return u;
}

/// Deletes every stop word; only originally correct instances are evaluated.
template <class Model>
AttackResult stopword_deletion_attack(const Model& m, const std::vector<Instance>& data,
                                      const std::vector<std::string>& stopwords, std::size_t jobs = 1) {
  std::unordered_set<std::string> stop(stopwords.begin(), stopwords.end());
  auto res = detail::run_attack(m, data, "stopword_deletion", "", jobs, [&](const Instance& in) -> std::optional<Instance> {
    if (!answered_correctly(m, in)) return std::nullopt;
    Instance p = in;
    p.question.clear();
    for (const auto& t : in.question)
      if (!stop.count(t)) p.question.push_back(t);
    p.pos_tags.reset();
    p.subject.reset();
    return p;
  });
  std::size_t kept = 0;
  for (const auto& r : res.records) kept += r.attacked_correct;
  if (res.n_evaluated > 0) res.retention_rate = static_cast<double>(kept) / static_cast<double>(res.n_evaluated);
  if (res.n_dataset > 0) {
    res.dataset_baseline_accuracy = static_cast<double>(res.n_evaluated) / static_cast<double>(res.n_dataset);
    res.dataset_attacked_accuracy = static_cast<double>(kept) / static_cast<double>(res.n_dataset);
  }
  return res;
}

struct SubjectAblationResult {
  std::vector<std::pair<std::string, double>> per_noun;  // same-answer rate per noun
  double mean_rate = 0.0;
  std::size_t n_evaluated = 0;  // originally correct instances with a subject
  std::size_t n_skipped = 0;    // instances without a subject span
};

/// Replaces the subject span with each noun and measures how often the
/// answer stays the same among originally correct instances.
template <class Model>
SubjectAblationResult subject_ablation_attack(const Model& m, const std::vector<Instance>& data,
                                              const std::vector<std::string>& nouns, std::size_t jobs = 1) {
  if (nouns.empty()) throw Error("subject ablation: no replacement nouns");
  SubjectAblationResult res;
  std::vector<const Instance*> eval;
  for (const auto& in : data) {
    if (!in.subject) {
      ++res.n_skipped;
      continue;
    }
    if (answered_correctly(m, in)) eval.push_back(&in);
  }
  res.n_evaluated = eval.size();
  for (const auto& noun : nouns) {
    auto same = parallel_map(eval.size(), jobs, [&](std::size_t i) {
      const Instance& in = *eval[i];
      Instance p = in;
      p.question.clear();
      p.question.insert(p.question.end(), in.question.begin(), in.question.begin() + in.subject->begin);
      p.question.push_back(noun);
      p.question.insert(p.question.end(), in.question.begin() + in.subject->end, in.question.end());
      auto before = predict_answer(m, in);
      auto after = predict_answer(m, p);
      return (before && after && answers_match(*before, *after)) ? 1 : 0;
    });
    double rate = 0.0;
    for (int s : same) rate += s;
    rate = eval.empty() ? 0.0 : rate / static_cast<double>(eval.size());
    res.per_noun.emplace_back(noun, rate);
    res.mean_rate += rate;
  }
  res.mean_rate /= static_cast<double>(nouns.size());
  return res;
}

enum class ReorderMode { shuffle, answer_first, answer_last };

inline std::string reorder_name(ReorderMode m) {
  switch (m) {
    case ReorderMode::shuffle: return "shuffle";
    case ReorderMode::answer_first: return "answer_first";
    case ReorderMode::answer_last: return "answer_last";
  }
  return "";
}

inline std::optional<ReorderMode> parse_reorder_mode(std::string_view s) {
  if (s == "shuffle") return ReorderMode::shuffle;
  if (s == "answer_first" || s == "answer-first") return ReorderMode::answer_first;
  if (s == "answer_last" || s == "answer-last") return ReorderMode::answer_last;
  return std::nullopt;
}

inline bool mentions_any(std::span<const std::string> question, const std::vector<std::string>& words) {
  for (const auto& t : question)
    if (std::find(words.begin(), words.end(), t) != words.end()) return true;
  return false;
}

/// Index of the single row holding the gold answer cell, if there is one.
inline std::optional<std::size_t> answer_row(const Instance& in) {
  if (!in.table || in.gold_answer.is_scalar() || in.gold_answer.cells().size() != 1) return std::nullopt;
  const Cell& target = in.gold_answer.cells().front();
  std::vector<std::size_t> cols;
  if (in.gold_program)
    cols.push_back(in.gold_program->back().column);
  else
    for (std::size_t c = 0; c < in.table->column_count(); ++c) cols.push_back(c);
  std::optional<std::size_t> found;
  for (std::size_t r = 0; r < in.table->row_count(); ++r) {
    bool hit = false;
    for (std::size_t c : cols)
      if (c < in.table->column_count() && cells_equal(in.table->rows[r][c], target)) hit = true;
    if (!hit) continue;
    if (found) return std::nullopt;
    found = r;
  }
  return found;
}

inline Table permute_rows(const Table& t, const std::vector<std::size_t>& order) {
  Table out;
  out.columns = t.columns;
  for (std::size_t i : order) out.rows.push_back(t.rows[i]);
  return out;
}

/// Reordered copy of the instance's table, or nullopt when the mode does not apply.
inline std::optional<Table> reorder_table(const Instance& in, ReorderMode mode, std::uint64_t seed) {
  const Table& t = *in.table;
  const std::size_t n = t.row_count();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (mode == ReorderMode::shuffle) {
    if (n >= 2) {
      std::mt19937_64 rng(seed ^ std::hash<std::string>{}(in.id));
      std::shuffle(order.begin(), order.end() - 1, rng);
    }
    return permute_rows(t, order);
  }
  auto row = answer_row(in);
  if (!row) return std::nullopt;
  order.erase(order.begin() + static_cast<std::ptrdiff_t>(*row));
  if (mode == ReorderMode::answer_first) {
    order.insert(order.begin(), *row);
  } else {
    const std::size_t at = has_total_row(t) && *row != n - 1 ? order.size() - 1 : order.size();
    order.insert(order.begin() + static_cast<std::ptrdiff_t>(at), *row);
  }
  return permute_rows(t, order);
}

/// Reorders table rows. Questions that are order sensitive (flagged, or
/// mentioning an order word) are skipped, as are move-mode instances whose
/// answer row cannot be located.
template <class Model>
AttackResult row_reorder_attack(const Model& m, const std::vector<Instance>& data, ReorderMode mode,
                                std::uint64_t seed, const std::vector<std::string>& order_words = default_order_words(),
                                std::size_t jobs = 1) {
  return detail::run_attack(m, data, "row_reorder", reorder_name(mode), jobs,
                            [&](const Instance& in) -> std::optional<Instance> {
                              if (!in.table || in.order_sensitive || mentions_any(in.question, order_words))
                                return std::nullopt;
                              auto table = reorder_table(in, mode, seed);
                              if (!table) return std::nullopt;
                              Instance p = in;
                              p.table = std::move(table);
                              return p;
                            });
}

inline nlohmann::json attack_record_to_json(const AttackRecord& r, const std::string& attack) {
  auto opt = [](const std::optional<std::string>& s) { return s ? nlohmann::json(*s) : nlohmann::json(); };
  nlohmann::json j = {{"attack", attack},
                      {"id", r.id},
                      {"question", r.question},
                      {"original", opt(r.original)},
                      {"attacked", opt(r.attacked)},
                      {"gold", r.gold},
                      {"original_correct", r.original_correct},
                      {"attacked_correct", r.attacked_correct},
                      {"success", r.success}};
  j["gold_sound"] = r.gold_sound ? nlohmann::json(*r.gold_sound) : nlohmann::json();
  return j;
}

inline nlohmann::json attack_summary_json(const AttackResult& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  return {{"attack", r.attack},
          {"position", r.position},
          {"n_dataset", r.n_dataset},
          {"n_evaluated", r.n_evaluated},
          {"n_skipped", r.n_skipped},
          {"baseline_accuracy", r.baseline_accuracy},
          {"attacked_accuracy", r.attacked_accuracy},
          {"retention_rate", opt(r.retention_rate)},
          {"dataset_baseline_accuracy", opt(r.dataset_baseline_accuracy)},
          {"dataset_attacked_accuracy", opt(r.dataset_attacked_accuracy)},
          {"gold_sound", r.sound_count()},
          {"gold_checked", r.sound_checked()}};
}

/// One line per record, newline terminated.
inline std::string attack_jsonl(const AttackResult& r) {
  std::string out;
  for (const auto& rec : r.records) out += attack_record_to_json(rec, r.attack).dump() + "\n";
  return out;
}

inline std::string attack_summary_csv(const std::vector<AttackResult>& results) {
  std::string out = csv::format_row({"attack", "position", "baseline_acc", "attacked_acc", "n"});
  for (const auto& r : results)
    out += csv::format_row({r.attack, r.position, format_number(r.baseline_accuracy), format_number(r.attacked_accuracy),
                            std::to_string(r.n_evaluated)});
  return out;
}

// ---- default programs -------------------------------------------------------------

struct DefaultProgramGroup {
  std::string operators;               // operator sequence shared by the group
  std::vector<std::size_t> tables;     // indices into the input table list
  std::vector<std::pair<std::string, double>> column_ranking;  // mean attribution, descending
};

struct DefaultProgramAnalysis {
  std::vector<Program> programs;  // per table
  std::vector<DefaultProgramGroup> groups;
  std::optional<double> operator_match_rate;
};

inline Program default_program(const TableQAModel& m, const Table& table) {
  return tableqa_predict(m, std::span<const std::string>{}, table).program;
}

/// Empty-question programs per table, grouped by operator sequence. Each
/// group ranks column names by their mean attribution, summed over the four
/// operator selections, against PAD column names. When `data` is given, the
/// share of predicted operators that equal the default program of the
/// instance's table is reported too.
inline DefaultProgramAnalysis default_program_analysis(const TableQAModel& m, const std::vector<Table>& tables,
                                                       const std::vector<Instance>* data = nullptr,
                                                       std::size_t steps = 64, std::size_t jobs = 1) {
  if (tables.empty()) throw Error("default programs: no tables");
  DefaultProgramAnalysis out;
  out.programs = parallel_map(tables.size(), jobs, [&](std::size_t i) { return default_program(m, tables[i]); });
  auto scores = parallel_map(tables.size(), jobs, [&](std::size_t i) {
    std::vector<double> s(tables[i].column_count(), 0.0);
    for (std::size_t t = 0; t < kSteps; ++t) {
      OperatorTarget target{t, static_cast<std::size_t>(out.programs[i][t].op)};
      auto rep = column_name_attribution(m, {}, tables[i], target, steps);
      for (std::size_t c = 0; c < s.size(); ++c) s[c] += rep.token_scores[c];
    }
    return s;
  });
  std::map<std::string, std::size_t> group_of;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    std::string key = "[" + operator_sequence(out.programs[i]) + "]";
    auto [it, fresh] = group_of.emplace(key, out.groups.size());
    if (fresh) out.groups.push_back({key, {}, {}});
    out.groups[it->second].tables.push_back(i);
  }
  for (auto& g : out.groups) {
    std::vector<std::string> names;
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (std::size_t i : g.tables)
      for (std::size_t c = 0; c < tables[i].column_count(); ++c) {
        const std::string name = column_token(tables[i].columns[c]);
        if (!acc.count(name)) names.push_back(name);
        acc[name].first += scores[i][c];
        acc[name].second += 1;
      }
    for (const auto& n : names) g.column_ranking.emplace_back(n, acc[n].first / static_cast<double>(acc[n].second));
    std::stable_sort(g.column_ranking.begin(), g.column_ranking.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
  }
  if (data && !data->empty()) {
    auto matches = parallel_map(data->size(), jobs, [&](std::size_t i) {
      const Instance& in = (*data)[i];
      if (!in.table) throw DataError("instance " + in.id + " has no table");
      Program def = default_program(m, *in.table);
      Program pred = tableqa_predict(m, in).program;
      std::size_t same = 0;
      for (std::size_t t = 0; t < kSteps; ++t) same += pred[t].op == def[t].op;
      return same;
    });
    double total = 0.0;
    for (auto s : matches) total += static_cast<double>(s);
    out.operator_match_rate = total / static_cast<double>(kSteps * data->size());
  }
  return out;
}

inline nlohmann::json default_programs_to_json(const DefaultProgramAnalysis& a, const std::vector<Table>& tables) {
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t i = 0; i < a.programs.size(); ++i)
    per.push_back({{"table", i}, {"program", program_string(a.programs[i], &tables[i])}});
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : a.groups) {
    nlohmann::json ranking = nlohmann::json::array();
    for (const auto& [name, score] : g.column_ranking) ranking.push_back({name, score});
    groups.push_back({{"operators", g.operators}, {"tables", g.tables}, {"column_ranking", ranking}});
  }
  nlohmann::json j = {{"programs", per}, {"groups", groups}};
  j["operator_match_rate"] = a.operator_match_rate ? nlohmann::json(*a.operator_match_rate) : nlohmann::json();
  return j;
}

// ---- operator triggers ------------------------------------------------------------

using TriggerTable = std::map<std::string, std::vector<std::pair<std::string, std::size_t>>>;

/// For every operator, the top-attributed tokens of the non-omitted reports
/// that selected it, by frequency (ties by first occurrence).
inline TriggerTable operator_trigger_table(const std::vector<AttributionReport>& reports) {
  TriggerTable table;
  for (Operator op : kOperators) table[std::string(operator_name(op))];
  std::map<std::string, std::vector<std::string>> order;
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  for (const auto& r : reports) {
    if (r.omitted || r.target.rfind("op[", 0) != 0 || r.tokens.empty()) continue;
    std::size_t best = argmax(r.token_scores);
    const std::string& tok = r.tokens[best];
    if (counts[r.predicted][tok]++ == 0) order[r.predicted].push_back(tok);
  }
  for (auto& [op, toks] : order) {
    auto& c = counts[op];
    std::stable_sort(toks.begin(), toks.end(), [&](const auto& a, const auto& b) { return c[a] > c[b]; });
    for (const auto& t : toks) table[op].emplace_back(t, c[t]);
  }
  return table;
}

inline nlohmann::json trigger_table_to_json(const TriggerTable& t) {
  nlohmann::json j = nlohmann::json::object();
  for (Operator op : kOperators) {
    const std::string name(operator_name(op));
    nlohmann::json list = nlohmann::json::array();
    if (auto it = t.find(name); it != t.end())
      for (const auto& [tok, n] : it->second) list.push_back({tok, n});
    j[name] = list;
  }
  return j;
}

// ---- attack efficacy --------------------------------------------------------------

struct EfficacyRecord {
  std::vector<std::string> question;
  std::vector<std::string> attack_sentence;
  bool success = false;
  std::vector<double> token_scores;
  std::vector<std::string> pos_tags;
};

struct EfficacySplit {
  std::size_t group1 = 0;  // a high-attribution noun or adjective is missing from the attack sentence
  std::size_t group2 = 0;
  std::size_t group1_failures = 0;
  std::size_t group2_failures = 0;
  std::optional<double> group1_failure_rate;
  std::optional<double> group2_failure_rate;
};

inline bool is_noun_or_adjective(const std::string& tag) { return tag.rfind("NN", 0) == 0 || tag.rfind("JJ", 0) == 0; }

/// A token is high-attribution when its score is at least `threshold` times
/// the largest absolute score in its question.
inline bool missing_high_attribution_word(const EfficacyRecord& r, double threshold) {
  if (r.pos_tags.size() != r.question.size() || r.token_scores.size() != r.question.size())
    throw DataError("efficacy record: tags, scores and question differ in length");
  double peak = 0.0;
  for (double s : r.token_scores) peak = std::max(peak, std::abs(s));
  if (peak == 0.0) return false;
  for (std::size_t i = 0; i < r.question.size(); ++i) {
    if (r.token_scores[i] < threshold * peak || !is_noun_or_adjective(r.pos_tags[i])) continue;
    if (std::find(r.attack_sentence.begin(), r.attack_sentence.end(), r.question[i]) == r.attack_sentence.end())
      return true;
  }
  return false;
}

inline EfficacySplit attack_efficacy_split(const std::vector<EfficacyRecord>& records, double threshold = 0.5) {
  EfficacySplit s;
  for (const auto& r : records) {
    if (missing_high_attribution_word(r, threshold)) {
      ++s.group1;
      s.group1_failures += !r.success;
    } else {
      ++s.group2;
      s.group2_failures += !r.success;
    }
  }
  if (s.group1) s.group1_failure_rate = static_cast<double>(s.group1_failures) / static_cast<double>(s.group1);
  if (s.group2) s.group2_failure_rate = static_cast<double>(s.group2_failures) / static_cast<double>(s.group2);
  return s;
}

inline nlohmann::json efficacy_record_to_json(const EfficacyRecord& r) {
  return {{"question", r.question},
          {"attack_sentence", r.attack_sentence},
          {"success", r.success},
          {"token_scores", r.token_scores},
          {"pos", r.pos_tags}};
}

inline EfficacyRecord efficacy_record_from_json(const nlohmann::json& j) {
  EfficacyRecord r;
  r.question = j.at("question").get<std::vector<std::string>>();
  r.attack_sentence = j.at("attack_sentence").get<std::vector<std::string>>();
  r.success = j.at("success").get<bool>();
  r.token_scores = j.at("token_scores").get<std::vector<double>>();
  r.pos_tags = j.at("pos").get<std::vector<std::string>>();
  return r;
}

inline nlohmann::json efficacy_split_to_json(const EfficacySplit& s) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  return {{"group1", s.group1},
          {"group2", s.group2},
          {"group1_failures", s.group1_failures},
          {"group2_failures", s.group2_failures},
          {"group1_failure_rate", opt(s.group1_failure_rate)},
          {"group2_failure_rate", opt(s.group2_failure_rate)}};
}

/// Token scores of the raw question words: the class report for a classifier,
/// the sum over non-omitted operator reports for a table model.
inline std::vector<double> question_token_scores(const ClassifierModel& m, const Instance& in, const IGConfig& cfg) {
  auto rep = integrated_gradients(m, in, IGConfig{cfg.steps, cfg.quadrature, std::nullopt});
  std::vector<double> s(in.question.size(), 0.0);
  if (!in.question.empty()) std::copy_n(rep.token_scores.begin(), s.size(), s.begin());
  return s;
}

inline std::vector<double> question_token_scores(const TableQAModel& m, const Instance& in, const IGConfig& cfg) {
  std::vector<double> s(in.question.size(), 0.0);
  if (in.question.empty()) return s;
  auto reports = attribute_program(m, in, cfg);
  for (std::size_t t = 0; t < kSteps; ++t) {
    if (reports[t].omitted) continue;
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += reports[t].token_scores[i];
  }
  return s;
}

/// Efficacy records for a concat attack: one per instance carrying pos tags.
template <class Model>
std::vector<EfficacyRecord> efficacy_records(const Model& m, const std::vector<Instance>& data,
                                             const std::vector<std::string>& phrase, Position pos, const IGConfig& cfg,
                                             std::size_t jobs = 1) {
  std::vector<const Instance*> tagged;
  for (const auto& in : data)
    if (in.pos_tags) tagged.push_back(&in);
  return parallel_map(tagged.size(), jobs, [&](std::size_t i) {
    const Instance& in = *tagged[i];
    Instance p = in;
    p.question = concat_question(in.question, phrase, pos);
    EfficacyRecord r;
    r.question = in.question;
    r.attack_sentence = phrase;
    r.success = detail::attack_record(m, in, p).success;
    r.token_scores = question_token_scores(m, in, cfg);
    r.pos_tags = *in.pos_tags;
    return r;
  });
}

}  // namespace attriq
