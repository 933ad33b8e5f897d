#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "attriq/error.hpp"

namespace attriq {

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kTableMatchToken = "<tm>";
inline constexpr std::string_view kColumnMatchToken = "<cm>";

inline bool is_match_token(std::string_view tok) { return tok == kTableMatchToken || tok == kColumnMatchToken; }

/// Dense token index. Indices 0..3 are reserved for PAD, UNK and the two
/// table-match markers; corpus tokens are numbered from 4 in insertion order.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kTableMatch = 2;
  static constexpr std::size_t kColumnMatch = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary() {
    for (std::string_view t : {kPadToken, kUnkToken, kTableMatchToken, kColumnMatchToken}) push(std::string(t));
  }

  /// Index of `token`, inserting it when new.
  std::size_t add(const std::string& token) {
    if (token.empty()) throw DataError("vocabulary: empty token");
    if (auto it = index_.find(token); it != index_.end()) return it->second;
    return push(token);
  }

  void add_all(std::span<const std::string> tokens) {
    for (const auto& t : tokens) add(t);
  }

  std::optional<std::size_t> find(const std::string& token) const {
    if (auto it = index_.find(token); it != index_.end()) return it->second;
    return std::nullopt;
  }

  /// Index of `token`, or UNK when it is out of vocabulary.
  std::size_t index(const std::string& token) const { return find(token).value_or(kUnk); }

  std::vector<std::size_t> encode(std::span<const std::string> tokens) const {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(index(t));
    return ids;
  }

  const std::string& token(std::size_t i) const { return tokens_.at(i); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }

  static Vocabulary from_tokens(std::span<const std::string> tokens) {
    Vocabulary v;
    if (tokens.size() < kReserved) throw DataError("vocabulary: missing reserved tokens");
    for (std::size_t i = 0; i < kReserved; ++i)
      if (tokens[i] != v.tokens_[i]) throw DataError("vocabulary: reserved token mismatch at index " + std::to_string(i));
    for (std::size_t i = kReserved; i < tokens.size(); ++i) {
      if (v.find(tokens[i])) throw DataError("vocabulary: duplicate token '" + tokens[i] + "'");
      v.push(tokens[i]);
    }
    return v;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::size_t push(std::string token) {
    index_.emplace(token, tokens_.size());
    tokens_.push_back(std::move(token));
    return tokens_.size() - 1;
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace attriq
