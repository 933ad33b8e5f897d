#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "attriq/error.hpp"
#include "attriq/table.hpp"
#include "json.hpp"

namespace attriq {

/// Half-open token range [begin, end).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const Span&, const Span&) = default;
};

/// One question-answering example.
struct Instance {
  std::string id;
  std::vector<std::string> question;
  std::optional<Table> table;
  Answer gold_answer;
  std::optional<Program> gold_program;
  std::optional<std::vector<std::string>> pos_tags;
  std::optional<Span> subject;
  bool order_sensitive = false;

  void validate() const {
    if (pos_tags && pos_tags->size() != question.size())
      throw DataError("instance " + id + ": pos tags length " + std::to_string(pos_tags->size()) +
                      " differs from question length " + std::to_string(question.size()));
    if (subject && (subject->begin > subject->end || subject->end > question.size()))
      throw DataError("instance " + id + ": subject span out of bounds");
    if (table) table->validate();
    if (gold_program && !table) throw DataError("instance " + id + ": gold program without a table");
  }

  friend bool operator==(const Instance&, const Instance&) = default;
};

inline nlohmann::json instance_to_json(const Instance& in) {
  nlohmann::json j;
  j["id"] = in.id;
  j["question"] = in.question;
  if (in.table) j["table"] = table_to_json(*in.table);
  j["gold_answer"] = answer_to_json(in.gold_answer);
  if (in.gold_program) j["gold_program"] = program_to_json(*in.gold_program);
  if (in.pos_tags) j["pos"] = *in.pos_tags;
  if (in.subject) j["subject"] = {in.subject->begin, in.subject->end};
  if (in.order_sensitive) j["order_sensitive"] = true;
  return j;
}

inline Instance instance_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  auto require = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw DataError(std::string("missing field '") + key + "'");
    return j.at(key);
  };
  Instance in;
  const auto& id = require("id");
  in.id = id.is_string() ? id.get<std::string>() : id.dump();
  const auto& q = require("question");
  if (!q.is_array()) throw DataError("'question' must be an array of tokens");
  for (const auto& t : q) {
    if (!t.is_string()) throw DataError("question tokens must be strings");
    in.question.push_back(t.get<std::string>());
  }
  if (j.contains("table") && !j.at("table").is_null()) in.table = table_from_json(j.at("table"));
  in.gold_answer = answer_from_json(require("gold_answer"));
  if (j.contains("gold_program")) in.gold_program = program_from_json(j.at("gold_program"));
  if (j.contains("pos")) in.pos_tags = j.at("pos").get<std::vector<std::string>>();
  if (j.contains("subject")) {
    const auto& s = j.at("subject");
    if (!s.is_array() || s.size() != 2) throw DataError("'subject' must be [start, end]");
    in.subject = Span{s[0].get<std::size_t>(), s[1].get<std::size_t>()};
  }
  if (j.contains("order_sensitive")) in.order_sensitive = j.at("order_sensitive").get<bool>();
  in.validate();
  return in;
}

}  // namespace attriq
