#include "dminter/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "dminter/dataset.hpp"
#include "dminter/error.hpp"

namespace dminter {

namespace {

const char* const kReservedTokens[reserved::kCount] = {"<pad>", "<bos>", "<eos>", "<unk>", "yes", "no"};

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      words.emplace_back(1, ch);
    } else {
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
  }
  flush();
  return words;
}

Vocabulary::Vocabulary() {
  for (const char* t : kReservedTokens) append(t);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < reserved::kCount) throw DataError("vocabulary: fewer tokens than reserved entries");
  for (std::size_t i = 0; i < reserved::kCount; ++i) {
    if (tokens[i] != kReservedTokens[i]) throw DataError("vocabulary: reserved token mismatch at id " + std::to_string(i));
  }
  Vocabulary v;
  for (std::size_t i = reserved::kCount; i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw DataError("vocabulary: duplicate token '" + tokens[i] + "'");
    v.append(std::move(tokens[i]));
  }
  return v;
}

void Vocabulary::append(std::string token) {
  index_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
}

bool Vocabulary::contains(std::string_view word) const { return index_.count(std::string(word)) != 0; }

TokenId Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? reserved::kUnk : it->second;
}

std::vector<TokenId> Vocabulary::tokenize_all(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  return ids;
}

std::vector<TokenId> Vocabulary::tokenize(std::string_view text, std::size_t max_len) const {
  std::vector<TokenId> ids = tokenize_all(text);
  if (ids.size() > max_len) ids.resize(max_len);
  if (ids.empty()) ids.push_back(reserved::kUnk);
  return ids;
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += ids[i] < tokens_.size() ? tokens_[ids[i]] : std::string("<unk>");
  }
  return out;
}

Vocabulary build_vocab(std::span<const Article> articles, std::size_t max_vocab,
                       std::span<const std::string> required_texts) {
  if (max_vocab < reserved::kCount + 2) {
    throw ConfigError("build_vocab: max_vocab must be at least " + std::to_string(reserved::kCount + 2));
  }
  Vocabulary vocab;
  std::set<std::string> required;
  for (const auto& text : required_texts) {
    for (auto& w : split_words(text)) {
      if (!vocab.contains(w)) required.insert(std::move(w));
    }
  }
  if (reserved::kCount + required.size() > max_vocab) {
    throw ConfigError("build_vocab: max_vocab " + std::to_string(max_vocab) + " cannot hold the " +
                      std::to_string(required.size()) + " prompt words");
  }
  for (const auto& w : required) vocab.append(w);

  std::map<std::string, std::size_t> counts;
  for (const auto& a : articles) {
    for (auto& w : split_words(a.text)) ++counts[std::move(w)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [w, n] : counts) {
    if (!vocab.contains(w)) ranked.emplace_back(w, n);
  }
  // std::map iteration is already lexicographic, so a stable sort by count
  // keeps the tie-break.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [w, n] : ranked) {
    if (vocab.size() >= max_vocab) break;
    vocab.append(std::move(w));
  }
  return vocab;
}

}  // namespace dminter
