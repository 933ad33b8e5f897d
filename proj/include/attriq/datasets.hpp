#pragma once

// Dataset ingestion, the seeded synthetic corpus and report persistence.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "attriq/csv.hpp"
#include "attriq/instance.hpp"
#include "attriq/models.hpp"
#include "attriq/resources.hpp"
#include "attriq/table.hpp"
#include "attriq/vocabulary.hpp"
#include "json.hpp"

namespace attriq {

struct Dataset {
  std::vector<Instance> instances;
  Vocabulary vocab;
  nlohmann::json provenance = nlohmann::json::object();
};

/// Reserved tokens, then question tokens and column-name tokens in order of first use.
inline Vocabulary build_vocabulary(const std::vector<Instance>& instances) {
  Vocabulary v;
  for (const auto& in : instances) {
    v.add_all(in.question);
    if (in.table)
      for (const auto& c : in.table->columns) v.add(column_token(c));
  }
  return v;
}

/// Answer classes of a classifier corpus, sorted.
inline std::vector<std::string> answer_classes(const std::vector<Instance>& instances) {
  std::set<std::string> s;
  for (const auto& in : instances) s.insert(in.gold_answer.text());
  return {s.begin(), s.end()};
}

// ---- synthetic generator -------------------------------------------------------------

enum class CorpusKind { table, classifier };

inline const std::vector<std::string>& table_templates() {
  static const std::vector<std::string> t = {"max", "min", "count", "lookup", "geq", "first", "last", "next"};
  return t;
}

inline const std::vector<std::string>& classifier_templates() {
  static const std::vector<std::string> t = {"color", "count", "exists", "material"};
  return t;
}

struct GenConfig {
  std::uint64_t seed = 0;
  CorpusKind kind = CorpusKind::table;
  /// Instances per template; templates absent from the map are not generated.
  std::map<std::string, std::size_t> counts;
  std::size_t min_rows = 3, max_rows = 8;
  std::size_t min_cols = 2, max_cols = 4;
  int min_value = 1, max_value = 99;
  double total_row_fraction = 0.25;  // medal tables only
  double sorted_fraction = 0.5;

  static GenConfig defaults(CorpusKind kind) {
    GenConfig c;
    c.kind = kind;
    if (kind == CorpusKind::table)
      c.counts = {{"max", 40}, {"min", 40}, {"count", 24}, {"lookup", 32},
                  {"geq", 24}, {"first", 12}, {"last", 12}, {"next", 12}};
    else
      c.counts = {{"color", 40}, {"count", 40}, {"exists", 40}, {"material", 40}};
    return c;
  }

  void validate() const {
    if (min_rows < 3 || min_rows > max_rows) throw DataError("gen: row range must satisfy 3 <= min <= max");
    if (min_cols < 2 || min_cols > max_cols || max_cols > 4) throw DataError("gen: column range must lie in [2, 4]");
    if (max_rows > 10) throw DataError("gen: at most 10 rows are supported");
    if (min_value > max_value || max_value - min_value + 1 < static_cast<int>(max_rows))
      throw DataError("gen: value range too small for distinct column values");
    if (total_row_fraction < 0.0 || total_row_fraction > 1.0 || sorted_fraction < 0.0 || sorted_fraction > 1.0)
      throw DataError("gen: fractions must lie in [0, 1]");
    const auto& known = kind == CorpusKind::table ? table_templates() : classifier_templates();
    for (const auto& [name, n] : counts)
      if (std::find(known.begin(), known.end(), name) == known.end())
        throw DataError("gen: unknown template '" + name + "'");
  }

  nlohmann::json to_json() const {
    return {{"seed", seed},
            {"kind", kind == CorpusKind::table ? "table" : "classifier"},
            {"counts", counts},
            {"rows", {min_rows, max_rows}},
            {"cols", {min_cols, max_cols}},
            {"values", {min_value, max_value}},
            {"total_row_fraction", total_row_fraction},
            {"sorted_fraction", sorted_fraction}};
  }
};

namespace detail {

struct Theme {
  std::string entity;
  std::vector<std::string> numeric;
  std::vector<std::string> names;
  bool medals = false;
};

inline const std::vector<Theme>& themes() {
  static const std::vector<Theme> t = {
      {"nation", {"gold", "silver", "bronze"},
       {"norway", "germany", "canada", "austria", "russia", "sweden", "france", "japan", "italy", "china", "finland",
        "poland"},
       true},
      {"team", {"wins", "losses", "points"},
       {"eagles", "tigers", "sharks", "wolves", "bears", "hawks", "lions", "falcons", "rangers", "comets"},
       false},
      {"building", {"floors", "height", "year"},
       {"spire", "citadel", "beacon", "pinnacle", "summit", "monolith", "obelisk", "helix", "meridian", "crown"},
       false},
      {"city", {"population", "area", "elevation"},
       {"oslo", "lima", "cairo", "dublin", "quito", "hanoi", "perth", "porto", "riga", "tunis"},
       false},
  };
  return t;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  /// Uniform integer in [lo, hi].
  std::size_t index(std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(gen_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  bool chance(double p) { return static_cast<double>(gen_() >> 11) * 0x1.0p-53 < p; }
  template <class T>
  std::vector<T> sample(std::vector<T> pool, std::size_t k) {
    for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[index(i, pool.size() - 1)]);
    pool.resize(k);
    return pool;
  }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

struct GeneratedTable {
  Table table;
  std::size_t body_rows = 0;  // rows before a total row
  bool total = false;
};

inline GeneratedTable random_table(Rng& rng, const GenConfig& cfg) {
  const Theme& th = themes()[rng.index(0, themes().size() - 1)];
  const std::size_t rows = rng.index(cfg.min_rows, std::min(cfg.max_rows, th.names.size()));
  const std::size_t cols = rng.index(cfg.min_cols, std::min(cfg.max_cols, th.numeric.size() + 1));
  GeneratedTable g;
  g.table.columns.push_back(th.entity);
  for (std::size_t c = 0; c + 1 < cols; ++c) g.table.columns.push_back(th.numeric[c]);
  auto names = rng.sample(th.names, rows);
  std::vector<int> pool;
  for (int v = cfg.min_value; v <= cfg.max_value; ++v) pool.push_back(v);
  std::vector<std::vector<int>> values;
  for (std::size_t c = 1; c < cols; ++c) values.push_back(rng.sample(pool, rows));
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<Cell> row{names[r]};
    for (std::size_t c = 1; c < cols; ++c) row.emplace_back(static_cast<double>(values[c - 1][r]));
    g.table.rows.push_back(std::move(row));
  }
  if (rng.chance(cfg.sorted_fraction))
    std::stable_sort(g.table.rows.begin(), g.table.rows.end(),
                     [](const auto& a, const auto& b) { return std::get<double>(a[1]) > std::get<double>(b[1]); });
  g.body_rows = rows;
  if (th.medals && rng.chance(cfg.total_row_fraction)) {
    std::vector<Cell> total{std::string("total")};
    for (std::size_t c = 1; c < cols; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < rows; ++r) s += std::get<double>(g.table.rows[r][c]);
      total.emplace_back(s);
    }
    g.table.rows.push_back(std::move(total));
    g.total = true;
  }
  return g;
}

struct Draft {
  std::vector<std::string> words;
  std::vector<std::string> tags;
  std::optional<Span> subject;
  Answer answer;
  std::optional<Program> program;
  bool order_sensitive = false;
};

inline double num(const Table& t, std::size_t r, std::size_t c) { return std::get<double>(t.rows[r][c]); }

inline Draft table_draft(const std::string& kind, Rng& rng, const GeneratedTable& g) {
  const Table& t = g.table;
  const std::string ent = column_token(t.columns[0]);
  const std::size_t ncol = rng.index(1, t.column_count() - 1);
  const std::string nname = column_token(t.columns[ncol]);
  const std::size_t body = g.body_rows;
  const Operator skip = g.total ? Operator::prev : Operator::reset_select;
  const auto R = Operator::reset_select;
  auto entity = [&](std::size_t r) { return Answer::of_cells({t.rows[r][0]}); };
  Draft d;
  if (kind == "max" || kind == "min") {
    const bool mx = kind == "max";
    std::size_t best = 0;
    for (std::size_t r = 1; r < body; ++r)
      if (mx ? num(t, r, ncol) > num(t, best, ncol) : num(t, r, ncol) < num(t, best, ncol)) best = r;
    d.words = {"which", ent, "had", "the", mx ? "most" : "least", nname};
    d.tags = {"WDT", "NN", "VBD", "DT", "JJS", "NN"};
    d.subject = Span{1, 2};
    d.answer = entity(best);
    d.program = Program{{{R, 0}, {skip, 0}, {mx ? Operator::max : Operator::min, ncol}, {Operator::print, 0}}};
  } else if (kind == "count") {
    d.words = {"how", "many", ent, "are", "there"};
    d.tags = {"WRB", "JJ", "NN", "VBP", "EX"};
    d.subject = Span{2, 3};
    d.answer = Answer::of_scalar(static_cast<double>(body));
    d.program = Program{{{R, 0}, {R, 0}, {skip, 0}, {Operator::count, 0}}};
  } else if (kind == "geq") {
    const double pivot = num(t, rng.index(0, body - 1), ncol);
    std::size_t n = 0;
    for (std::size_t r = 0; r < body; ++r) n += num(t, r, ncol) >= pivot;
    d.words = {"how", "many", ent, "had", "at", "least", format_number(pivot), nname};
    d.tags = {"WRB", "JJ", "NN", "VBD", "IN", "JJS", "CD", "NN"};
    d.subject = Span{2, 3};
    d.answer = Answer::of_scalar(static_cast<double>(n));
    d.program = Program{{{R, 0}, {skip, 0}, {Operator::geq, ncol}, {Operator::count, 0}}};
  } else if (kind == "lookup") {
    const std::size_t r = rng.index(0, body - 1);
    d.words = {"what", "is", "the", nname, "of", cell_text(t.rows[r][0])};
    d.tags = {"WP", "VBZ", "DT", "NN", "IN", "NNP"};
    d.subject = Span{3, 4};
    d.answer = Answer::of_cells({t.rows[r][ncol]});
    d.program = Program{{{R, 0}, {R, 0}, {Operator::word_match, 0}, {Operator::print, ncol}}};
  } else if (kind == "first" || kind == "last") {
    const bool first = kind == "first";
    d.words = {"which", ent, "is", "listed", kind};
    d.tags = {"WDT", "NN", "VBZ", "VBN", first ? "RB" : "JJ"};
    d.subject = Span{1, 2};
    d.answer = entity(first ? 0 : body - 1);
    d.program = Program{{{R, 0}, {skip, 0}, {first ? Operator::first : Operator::last, 0}, {Operator::print, 0}}};
    d.order_sensitive = true;
  } else if (kind == "next") {
    const std::size_t r = rng.index(0, body - 2);
    d.words = {"which", ent, "comes", "after", cell_text(t.rows[r][0])};
    d.tags = {"WDT", "NN", "VBZ", "IN", "NNP"};
    d.subject = Span{1, 2};
    d.answer = entity(r + 1);
    d.program = Program{{{R, 0}, {Operator::word_match, 0}, {Operator::next, 0}, {Operator::print, 0}}};
    d.order_sensitive = true;
  } else {
    throw DataError("gen: unknown table template '" + kind + "'");
  }
  return d;
}

struct World {
  std::vector<std::string> objects;
  std::map<std::string, std::string> color, material;
  std::map<std::string, int> count;
};

inline World make_world(Rng& rng) {
  static const std::vector<std::string> objects = {"ball", "cube", "car",  "cup",  "hat",  "chair",
                                                   "lamp", "book", "bowl", "kite", "shoe", "vase"};
  static const std::vector<std::string> colors = {"red", "blue", "green", "yellow", "purple", "gray"};
  static const std::vector<std::string> materials = {"metal", "rubber", "wood", "plastic", "glass"};
  World w;
  w.objects = objects;
  for (const auto& o : objects) {
    w.color[o] = colors[rng.index(0, colors.size() - 1)];
    w.material[o] = materials[rng.index(0, materials.size() - 1)];
    w.count[o] = static_cast<int>(rng.index(0, 4));
  }
  return w;
}

inline Draft classifier_draft(const std::string& kind, Rng& rng, const World& w) {
  const std::string obj = w.objects[rng.index(0, w.objects.size() - 1)];
  Draft d;
  auto label = [](const std::string& s) { return Answer::of_cells({s}); };
  if (kind == "color") {
    d.words = {"what", "color", "is", "the", obj};
    d.tags = {"WP", "NN", "VBZ", "DT", "NN"};
    d.subject = Span{4, 5};
    d.answer = label(w.color.at(obj));
  } else if (kind == "count") {
    d.words = {"how", "many", obj + "s", "are", "there"};
    d.tags = {"WRB", "JJ", "NNS", "VBP", "EX"};
    d.subject = Span{2, 3};
    d.answer = label(std::to_string(w.count.at(obj)));
  } else if (kind == "exists") {
    d.words = {"is", "there", "a", obj};
    d.tags = {"VBZ", "EX", "DT", "NN"};
    d.subject = Span{3, 4};
    d.answer = label(w.count.at(obj) > 0 ? "yes" : "no");
  } else if (kind == "material") {
    d.words = {"what", "is", "the", obj, "made", "of"};
    d.tags = {"WP", "VBZ", "DT", "NN", "VBN", "IN"};
    d.subject = Span{3, 4};
    d.answer = label(w.material.at(obj));
  } else {
    throw DataError("gen: unknown classifier template '" + kind + "'");
  }
  return d;
}

/// Rows of an order-insensitive instance may be permuted (a trailing total
/// row stays last) without changing the gold answer.
inline void check_permutation_invariance(const Instance& in, Rng& rng) {
  const Table& t = *in.table;
  std::vector<std::size_t> order(t.row_count());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end() - (has_total_row(t) ? 1 : 0), rng.engine());
  Table p;
  p.columns = t.columns;
  for (std::size_t i : order) p.rows.push_back(t.rows[i]);
  if (!answers_match(execute(*in.gold_program, p, in.question), in.gold_answer))
    throw Error("gen: instance " + in.id + " changes its answer under row permutation");
}

}  // namespace detail

/// Deterministic corpus for a config. Every table instance is checked at
/// generation time: its gold program must execute to its gold answer.
inline Dataset generate_synthetic(const GenConfig& cfg) {
  cfg.validate();
  detail::Rng rng(cfg.seed);
  Dataset ds;
  ds.provenance = {{"source", "synthetic"}, {"config", cfg.to_json()}};
  const bool tables = cfg.kind == CorpusKind::table;
  detail::World world;
  if (!tables) world = detail::make_world(rng);
  detail::Rng check_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::size_t serial = 0;
  for (const auto& name : tables ? table_templates() : classifier_templates()) {
    auto it = cfg.counts.find(name);
    if (it == cfg.counts.end()) continue;
    for (std::size_t i = 0; i < it->second; ++i) {
      Instance in;
      char id[32];
      std::snprintf(id, sizeof id, "%s-%05zu", tables ? "tab" : "cls", serial++);
      in.id = id;
      detail::Draft d;
      if (tables) {
        auto g = detail::random_table(rng, cfg);
        d = detail::table_draft(name, rng, g);
        in.table = std::move(g.table);
      } else {
        d = detail::classifier_draft(name, rng, world);
      }
      in.question = std::move(d.words);
      in.pos_tags = std::move(d.tags);
      in.subject = d.subject;
      in.gold_answer = std::move(d.answer);
      in.gold_program = d.program;
      in.order_sensitive = d.order_sensitive;
      in.validate();
      if (tables) {
        Answer got = execute(*in.gold_program, *in.table, in.question);
        if (!answers_match(got, in.gold_answer))
          throw Error("gen: instance " + in.id + " gold program yields " + got.text() + ", expected " +
                      in.gold_answer.text());
        if (!in.order_sensitive) detail::check_permutation_invariance(in, check_rng);
      }
      ds.instances.push_back(std::move(in));
    }
  }
  ds.vocab = build_vocabulary(ds.instances);
  return ds;
}

// ---- loading and saving -------------------------------------------------------------

enum class DatasetFormat { jsonl, csv };

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

namespace detail {

inline Dataset finish_dataset(std::vector<Instance> instances, const std::optional<Vocabulary>& fixed,
                              const std::filesystem::path& path) {
  Dataset ds;
  ds.instances = std::move(instances);
  ds.vocab = fixed ? *fixed : build_vocabulary(ds.instances);
  ds.provenance = {{"source", path.string()}, {"vocabulary", fixed ? "fixed" : "built"}};
  return ds;
}

inline Instance csv_instance(const std::vector<std::string>& header, const std::vector<std::string>& rec,
                             const std::filesystem::path& tables_dir) {
  if (rec.size() != header.size()) throw DataError("expected " + std::to_string(header.size()) + " fields");
  std::map<std::string, std::string> f;
  for (std::size_t i = 0; i < header.size(); ++i) f[header[i]] = rec[i];
  auto need = [&](const std::string& k) -> const std::string& {
    auto it = f.find(k);
    if (it == f.end() || it->second.empty()) throw DataError("missing field '" + k + "'");
    return it->second;
  };
  nlohmann::json j;
  j["id"] = need("id");
  j["question"] = split_tokens(need("question"));
  if (f.count("table") && !f["table"].empty()) j["table"] = table_to_json(read_table(tables_dir / f["table"]));
  try {
    j["gold_answer"] = nlohmann::json::parse(need("gold_answer"));
    if (f.count("gold_program") && !f["gold_program"].empty()) j["gold_program"] = nlohmann::json::parse(f["gold_program"]);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("bad JSON field: ") + e.what());
  }
  if (f.count("pos") && !f["pos"].empty()) j["pos"] = split_tokens(f["pos"]);
  if (f.count("subject") && !f["subject"].empty()) {
    auto parts = split_tokens(f["subject"]);
    if (parts.size() != 2) throw DataError("'subject' must be two integers");
    j["subject"] = {std::stoul(parts[0]), std::stoul(parts[1])};
  }
  if (f.count("order_sensitive")) j["order_sensitive"] = f["order_sensitive"] == "true" || f["order_sensitive"] == "1";
  return instance_from_json(j);
}

}  // namespace detail

/// Loads instances. With `fixed` set, its vocabulary is kept and unknown
/// tokens later encode as UNK; otherwise the vocabulary is built from the data.
/// For csv, `tables_dir` resolves the table column and gold_answer and
/// gold_program hold JSON text.
inline Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format = DatasetFormat::jsonl,
                            const std::optional<Vocabulary>& fixed = std::nullopt,
                            const std::filesystem::path& tables_dir = {}) {
  const std::string text = read_file(path);
  std::vector<Instance> out;
  if (format == DatasetFormat::jsonl) {
    std::istringstream in(text);
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        out.push_back(instance_from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      } catch (const Error& e) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  } else {
    std::vector<std::vector<std::string>> records;
    try {
      records = csv::parse(text);
    } catch (const Error& e) {
      throw DataError(path.string() + ": " + e.what());
    }
    if (!records.empty()) {
      const auto& header = records.front();
      for (std::size_t r = 1; r < records.size(); ++r) {
        try {
          out.push_back(detail::csv_instance(header, records[r], tables_dir));
        } catch (const nlohmann::json::exception& e) {
          throw DataError(path.string() + ":" + std::to_string(r + 1) + ": " + e.what());
        } catch (const Error& e) {
          throw DataError(path.string() + ":" + std::to_string(r + 1) + ": " + e.what());
        }
      }
    }
  }
  return detail::finish_dataset(std::move(out), fixed, path);
}

inline std::string dataset_jsonl(const std::vector<Instance>& instances) {
  std::string out;
  for (const auto& in : instances) out += instance_to_json(in).dump() + "\n";
  return out;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  write_file(path, dataset_jsonl(ds.instances));
}

/// Newline-terminated JSON lines; parent directories are created.
inline void save_jsonl(const std::vector<nlohmann::json>& items, const std::filesystem::path& path) {
  std::string text;
  for (const auto& j : items) text += j.dump() + "\n";
  write_file(path, text);
}

inline std::vector<nlohmann::json> load_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<nlohmann::json> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

template <class Report, class ToJson>
void save_report(const std::vector<Report>& reports, const std::filesystem::path& path, ToJson to_json) {
  std::vector<nlohmann::json> items;
  for (const auto& r : reports) items.push_back(to_json(r));
  save_jsonl(items, path);
}

}  // namespace attriq
