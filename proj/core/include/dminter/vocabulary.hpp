#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dminter {

using TokenId = std::size_t;

/// Reserved ids occupy the front of every vocabulary in this fixed order.
namespace reserved {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kYes = 4;
inline constexpr TokenId kNo = 5;
inline constexpr std::size_t kCount = 6;
}  // namespace reserved

struct Article;

/// Lowercases and splits on whitespace; every punctuation character becomes
/// its own token.
std::vector<std::string> split_words(std::string_view text);

class Vocabulary {
 public:
  /// Vocabulary holding only the reserved tokens.
  Vocabulary();
  /// Rebuilds from a token list (reserved tokens first, as produced by tokens()).
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  bool contains(std::string_view word) const;
  /// Id of `word`, or reserved::kUnk.
  TokenId id(std::string_view word) const;

  /// Word tokens mapped to ids; unknown words become UNK, output truncated to
  /// max_len and never empty (empty text yields [UNK]).
  std::vector<TokenId> tokenize(std::string_view text, std::size_t max_len) const;
  /// Tokenizes without truncation; used for fixed prompt strings.
  std::vector<TokenId> tokenize_all(std::string_view text) const;
  std::string detokenize(std::span<const TokenId> ids) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  friend Vocabulary build_vocab(std::span<const Article>, std::size_t, std::span<const std::string>);
  void append(std::string token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Frequency-ranked vocabulary (ties broken lexicographically) capped at
/// max_vocab entries including the reserved tokens. Words from
/// `required_texts` (prompt strings) are admitted ahead of corpus words.
Vocabulary build_vocab(std::span<const Article> articles, std::size_t max_vocab,
                       std::span<const std::string> required_texts = {});

}  // namespace dminter
