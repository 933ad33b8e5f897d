#pragma once

// Table data model and the discrete operator language executed over it.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "attriq/csv.hpp"
#include "attriq/error.hpp"
#include "json.hpp"

namespace attriq {

using Cell = std::variant<std::string, double>;

/// Parses the whole string as a finite decimal float.
inline std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// Shortest text that round-trips the double.
inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

inline std::optional<double> numeric_value(const Cell& c) {
  if (const double* d = std::get_if<double>(&c)) return *d;
  return parse_number(std::get<std::string>(c));
}

inline std::string cell_text(const Cell& c) {
  if (const double* d = std::get_if<double>(&c)) return format_number(*d);
  return std::get<std::string>(c);
}

/// Cells are equal when both are numeric with equal values, or their texts match.
inline bool cells_equal(const Cell& a, const Cell& b) {
  auto na = numeric_value(a), nb = numeric_value(b);
  if (na && nb) return *na == *nb;
  return cell_text(a) == cell_text(b);
}

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  std::size_t row_count() const { return rows.size(); }
  std::size_t column_count() const { return columns.size(); }

  void validate() const {
    std::set<std::string> seen;
    for (const auto& c : columns)
      if (!seen.insert(c).second) throw DataError("table: duplicate column name '" + c + "'");
    for (std::size_t r = 0; r < rows.size(); ++r)
      if (rows[r].size() != columns.size())
        throw DataError("table: row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) +
                        " cells, expected " + std::to_string(columns.size()));
  }

  std::optional<std::size_t> column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    return std::nullopt;
  }

  bool column_is_numeric(std::size_t col) const {
    return std::all_of(rows.begin(), rows.end(), [&](const auto& row) { return numeric_value(row[col]).has_value(); });
  }

  friend bool operator==(const Table&, const Table&) = default;
};

/// A trailing aggregate row: the last row's first cell reads "total".
inline bool has_total_row(const Table& t) {
  if (t.rows.empty() || t.columns.empty()) return false;
  return cell_text(t.rows.back().front()) == "total";
}

enum class Operator { reset_select, first, last, prev, next, max, min, count, print, word_match, geq };

inline constexpr std::array<Operator, 11> kOperators = {
    Operator::reset_select, Operator::first, Operator::last,  Operator::prev,       Operator::next, Operator::max,
    Operator::min,          Operator::count, Operator::print, Operator::word_match, Operator::geq};

inline constexpr std::size_t kOperatorCount = kOperators.size();

inline constexpr std::string_view operator_name(Operator op) {
  constexpr std::array<std::string_view, kOperatorCount> names = {
      "reset_select", "first", "last", "prev", "next", "max", "min", "count", "print", "word_match", "geq"};
  return names[static_cast<std::size_t>(op)];
}

inline std::optional<Operator> parse_operator(std::string_view name) {
  for (Operator op : kOperators)
    if (operator_name(op) == name) return op;
  if (name == "reset") return Operator::reset_select;
  return std::nullopt;
}

/// Operators whose result depends on row order.
inline constexpr bool is_positional(Operator op) {
  return op == Operator::first || op == Operator::last || op == Operator::prev || op == Operator::next;
}

struct ProgramStep {
  Operator op = Operator::reset_select;
  std::size_t column = 0;
  friend bool operator==(const ProgramStep&, const ProgramStep&) = default;
};

inline constexpr std::size_t kProgramLength = 4;
using Program = std::array<ProgramStep, kProgramLength>;

inline std::string program_string(const Program& p, const Table* table = nullptr) {
  std::string s;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i) s += ", ";
    s += operator_name(p[i].op);
    s += "(";
    if (table && p[i].column < table->column_count())
      s += table->columns[p[i].column];
    else
      s += std::to_string(p[i].column);
    s += ")";
  }
  return s;
}

inline std::string operator_sequence(const Program& p) {
  std::string s;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i) s += ", ";
    s += operator_name(p[i].op);
  }
  return s;
}

/// Strictly increasing row indices.
using Selection = std::vector<std::size_t>;

struct Answer {
  std::variant<double, std::vector<Cell>> value;

  bool is_scalar() const { return std::holds_alternative<double>(value); }
  double scalar() const { return std::get<double>(value); }
  const std::vector<Cell>& cells() const { return std::get<std::vector<Cell>>(value); }

  static Answer of_scalar(double v) { return Answer{v}; }
  static Answer of_cells(std::vector<Cell> c) { return Answer{std::move(c)}; }

  std::string text() const {
    if (is_scalar()) return format_number(scalar());
    std::string s;
    for (std::size_t i = 0; i < cells().size(); ++i) {
      if (i) s += " | ";
      s += cell_text(cells()[i]);
    }
    return s;
  }

  friend bool operator==(const Answer&, const Answer&) = default;
};

/// Scalars compare exactly; cell lists compare as multisets.
inline bool answers_match(const Answer& a, const Answer& b) {
  if (a.is_scalar() != b.is_scalar()) return false;
  if (a.is_scalar()) return a.scalar() == b.scalar();
  const auto& x = a.cells();
  const auto& y = b.cells();
  if (x.size() != y.size()) return false;
  std::vector<bool> used(y.size(), false);
  for (const Cell& c : x) {
    bool found = false;
    for (std::size_t j = 0; j < y.size() && !found; ++j)
      if (!used[j] && cells_equal(c, y[j])) used[j] = found = true;
    if (!found) return false;
  }
  return true;
}

/// The first question token that parses as a number.
inline std::optional<double> first_numeric_token(std::span<const std::string> question) {
  for (const auto& tok : question)
    if (auto v = parse_number(tok)) return v;
  return std::nullopt;
}

using StepResult = std::variant<Selection, Answer>;

inline Selection all_rows(const Table& table) {
  Selection s(table.row_count());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = i;
  return s;
}

inline StepResult step(const Selection& sel, Operator op, std::size_t col, const Table& table,
                       std::span<const std::string> question) {
  const std::size_t n = table.row_count();
  if (col >= table.column_count())
    throw ExecError(std::string(operator_name(op)) + ": column " + std::to_string(col) + " out of range");
  auto numeric_column = [&]() {
    if (!table.column_is_numeric(col))
      throw ExecError(std::string(operator_name(op)) + " on non-numeric column '" + table.columns[col] + "'");
  };
  auto value = [&](std::size_t row) { return *numeric_value(table.rows[row][col]); };

  switch (op) {
    case Operator::reset_select:
      return all_rows(table);
    case Operator::first:
      return sel.empty() ? Selection{} : Selection{sel.front()};
    case Operator::last:
      return sel.empty() ? Selection{} : Selection{sel.back()};
    case Operator::prev: {
      Selection out;
      for (std::size_t i : sel)
        if (i >= 1) out.push_back(i - 1);
      return out;
    }
    case Operator::next: {
      Selection out;
      for (std::size_t i : sel)
        if (i + 1 < n) out.push_back(i + 1);
      return out;
    }
    case Operator::max:
    case Operator::min: {
      numeric_column();
      if (sel.empty()) return Selection{};
      double best = value(sel.front());
      for (std::size_t i : sel) best = op == Operator::max ? std::max(best, value(i)) : std::min(best, value(i));
      Selection out;
      for (std::size_t i : sel)
        if (value(i) == best) out.push_back(i);
      return out;
    }
    case Operator::count:
      return Answer::of_scalar(static_cast<double>(sel.size()));
    case Operator::print: {
      std::vector<Cell> cells;
      for (std::size_t i : sel) cells.push_back(table.rows[i][col]);
      return Answer::of_cells(std::move(cells));
    }
    case Operator::word_match: {
      Selection out;
      for (std::size_t i : sel) {
        bool hit = false;
        for (const Cell& c : table.rows[i]) {
          std::string text = cell_text(c);
          for (const auto& tok : question)
            if (tok == text) hit = true;
        }
        if (hit) out.push_back(i);
      }
      return out;
    }
    case Operator::geq: {
      numeric_column();
      auto pivot = first_numeric_token(question);
      if (!pivot) throw ExecError("geq: question contains no numeric literal");
      Selection out;
      for (std::size_t i : sel)
        if (value(i) >= *pivot) out.push_back(i);
      return out;
    }
  }
  throw ExecError("unknown operator");
}

/// Folds the program over the table. Answers produced before the final step
/// are discarded; a final step that is neither print nor count is coerced to a
/// print of that step's column.
inline Answer execute(const Program& program, const Table& table, std::span<const std::string> question) {
  Selection sel = all_rows(table);
  for (std::size_t t = 0; t < program.size(); ++t) {
    StepResult r = step(sel, program[t].op, program[t].column, table, question);
    if (auto* s = std::get_if<Selection>(&r)) {
      sel = std::move(*s);
    } else if (t + 1 == program.size()) {
      return std::get<Answer>(std::move(r));
    }
  }
  return std::get<Answer>(step(sel, Operator::print, program.back().column, table, question));
}

/// Execution that reports failures as an empty optional instead of throwing.
inline std::optional<Answer> try_execute(const Program& program, const Table& table,
                                         std::span<const std::string> question) {
  try {
    return execute(program, table, question);
  } catch (const ExecError&) {
    return std::nullopt;
  }
}

// ---- serialization ---------------------------------------------------------

inline nlohmann::json cell_to_json(const Cell& c) {
  if (const double* d = std::get_if<double>(&c)) return *d;
  return std::get<std::string>(c);
}

inline Cell cell_from_json(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  throw DataError("cell must be a string or a number");
}

inline nlohmann::json answer_to_json(const Answer& a) {
  if (a.is_scalar()) return a.scalar();
  nlohmann::json arr = nlohmann::json::array();
  for (const Cell& c : a.cells()) arr.push_back(cell_to_json(c));
  return arr;
}

inline Answer answer_from_json(const nlohmann::json& j) {
  if (j.is_number()) return Answer::of_scalar(j.get<double>());
  if (j.is_array()) {
    std::vector<Cell> cells;
    for (const auto& c : j) cells.push_back(cell_from_json(c));
    return Answer::of_cells(std::move(cells));
  }
  if (j.is_string()) return Answer::of_cells({j.get<std::string>()});
  throw DataError("answer must be a number, a string or an array of cells");
}

inline nlohmann::json table_to_json(const Table& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : t.rows) {
    nlohmann::json r = nlohmann::json::array();
    for (const Cell& c : row) r.push_back(cell_to_json(c));
    rows.push_back(std::move(r));
  }
  return {{"columns", t.columns}, {"rows", std::move(rows)}};
}

inline Table table_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("columns") || !j.contains("rows"))
    throw DataError("table must be an object with 'columns' and 'rows'");
  Table t;
  for (const auto& c : j.at("columns")) {
    if (!c.is_string()) throw DataError("table column names must be strings");
    t.columns.push_back(c.get<std::string>());
  }
  for (const auto& r : j.at("rows")) {
    if (!r.is_array()) throw DataError("table rows must be arrays");
    std::vector<Cell> row;
    for (const auto& c : r) row.push_back(cell_from_json(c));
    t.rows.push_back(std::move(row));
  }
  t.validate();
  return t;
}

inline nlohmann::json program_to_json(const Program& p) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : p) arr.push_back(nlohmann::json::array({std::string(operator_name(s.op)), s.column}));
  return arr;
}

inline Program program_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != kProgramLength) throw DataError("program must be an array of 4 [op, column] pairs");
  Program p;
  for (std::size_t i = 0; i < kProgramLength; ++i) {
    const auto& s = j[i];
    if (!s.is_array() || s.size() != 2 || !s[0].is_string() || !s[1].is_number_unsigned())
      throw DataError("program step must be [operator, column index]");
    auto op = parse_operator(s[0].get<std::string>());
    if (!op) throw DataError("unknown operator '" + s[0].get<std::string>() + "'");
    p[i] = {*op, s[1].get<std::size_t>()};
  }
  return p;
}

/// CSV table with a header row; cells that parse as numbers become floats.
inline Table table_from_csv(std::string_view text) {
  auto records = csv::parse(text);
  if (records.empty()) throw DataError("csv table: missing header row");
  Table t;
  t.columns = records.front();
  for (std::size_t r = 1; r < records.size(); ++r) {
    std::vector<Cell> row;
    for (auto& f : records[r]) {
      if (auto v = parse_number(f))
        row.emplace_back(*v);
      else
        row.emplace_back(std::move(f));
    }
    t.rows.push_back(std::move(row));
  }
  t.validate();
  return t;
}

inline Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open table file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  if (path.extension() == ".csv") return table_from_csv(ss.str());
  try {
    return table_from_json(nlohmann::json::parse(ss.str()));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace attriq
