#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dminter/hierarchy.hpp"

namespace dminter {

struct Article {
  std::string id;
  std::string text;
  Veracity label = Veracity::kReal;

  friend bool operator==(const Article&, const Article&) = default;
};

struct SplitStats {
  std::size_t fake = 0;
  std::size_t real = 0;
  std::size_t total() const { return fake + real; }
};

SplitStats split_stats(const std::vector<Article>& articles);

struct DatasetSplits {
  std::vector<Article> train;
  std::vector<Article> validation;
  std::vector<Article> test;

  /// Throws DataError if an id occurs more than once across splits.
  void check_unique_ids() const;
};

struct JsonlFile {
  std::vector<Article> articles;
  std::vector<std::string> warnings;
};

/// One {"id", "text", "label"} object per line; label is "real" or "fake".
/// Throws DataError naming the line for malformed input.
JsonlFile load_jsonl(const std::string& path);
JsonlFile parse_jsonl(const std::string& contents, const std::string& source_name = "<memory>");
void write_jsonl(const std::string& path, const std::vector<Article>& articles);
std::string to_jsonl(const std::vector<Article>& articles);

DatasetSplits load_splits(const std::string& train_path, const std::string& validation_path,
                          const std::string& test_path);

/// Declared per-split label counts of a benchmark corpus.
struct DatasetManifest {
  std::string name;
  SplitStats train;
  SplitStats validation;
  SplitStats test;
};

DatasetManifest load_manifest(const std::string& path);

}  // namespace dminter
