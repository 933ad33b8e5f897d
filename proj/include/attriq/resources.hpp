#pragma once

// Word lists used by the attacks. The shipped files under data/ hold the same
// entries as the built-in defaults below; either can be overridden by path.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "attriq/error.hpp"

namespace attriq {

inline const std::vector<std::string>& default_stopwords() {
  static const std::vector<std::string> words = {
      "show",  "tell",  "did",  "me",    "my",   "our",   "are",   "is",    "were",  "this",  "on",     "would",
      "and",   "for",   "should", "be",  "do",   "I",     "have",  "had",   "the",   "there", "look",   "give",
      "has",   "was",   "we",   "get",   "does", "a",     "an",    "'s",    "that",  "by",    "based",  "in",
      "of",    "bring", "with", "to",    "from", "whole", "being", "been",  "want",  "wanted", "as",    "can",
      "see",   "doing", "got",  "sorted", "draw", "listed", "chart", "only"};
  return words;
}

inline const std::vector<std::string>& default_order_words() {
  static const std::vector<std::string> words = {"first", "last", "next", "previous", "before", "after", "above", "below"};
  return words;
}

inline const std::vector<std::string>& default_subject_nouns() {
  static const std::vector<std::string> words = {"fits",   "childhood", "copyrights", "mornings", "disorder",
                                                 "importance", "topless", "critter",  "jumper",   "tweet"};
  return words;
}

inline const std::vector<std::string>& default_attack_phrases() {
  static const std::vector<std::string> phrases = {
      "in not a lot of words", "if its all the same", "in not many words", "one way or another",
      "in this chart",         "among these rows listed", "above all",    "at the moment",
      "what is the answer to"};
  return phrases;
}

inline const std::vector<std::string>& default_baseline_phrases() {
  static const std::vector<std::string> phrases = {"please answer", "do you know", "tell me", "answer this",
                                                   "answer this for me"};
  return phrases;
}

/// Whitespace-split tokens.
inline std::vector<std::string> split_tokens(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

/// One entry per non-empty line; lines starting with '#' are comments.
inline std::vector<std::string> load_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word list " + path.string());
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    out.push_back(line.substr(start));
  }
  return out;
}

}  // namespace attriq
