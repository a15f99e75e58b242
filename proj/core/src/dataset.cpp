#include "dminter/dataset.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dminter/error.hpp"

namespace dminter {

using nlohmann::json;

SplitStats split_stats(const std::vector<Article>& articles) {
  SplitStats s;
  for (const auto& a : articles) (a.label == Veracity::kFake ? s.fake : s.real) += 1;
  return s;
}

void DatasetSplits::check_unique_ids() const {
  std::set<std::string> seen;
  for (const auto* split : {&train, &validation, &test}) {
    for (const auto& a : *split) {
      if (!seen.insert(a.id).second) throw DataError("dataset: duplicate article id '" + a.id + "'");
    }
  }
}

JsonlFile parse_jsonl(const std::string& contents, const std::string& source_name) {
  JsonlFile out;
  std::istringstream in(contents);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = source_name + ":" + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error&) {
      throw DataError(where + ": malformed JSON");
    }
    if (!obj.is_object()) throw DataError(where + ": expected a JSON object");
    for (const char* key : {"id", "text", "label"}) {
      if (!obj.contains(key)) throw DataError(where + ": missing \"" + key + "\"");
      if (!obj[key].is_string()) throw DataError(where + ": \"" + key + "\" must be a string");
    }
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (it.key() != "id" && it.key() != "text" && it.key() != "label") {
        throw DataError(where + ": unexpected field \"" + it.key() + "\"");
      }
    }
    Article a;
    a.id = obj["id"].get<std::string>();
    a.text = obj["text"].get<std::string>();
    const std::string label = obj["label"].get<std::string>();
    if (label == "real") {
      a.label = Veracity::kReal;
    } else if (label == "fake") {
      a.label = Veracity::kFake;
    } else {
      throw DataError(where + ": unknown label \"" + label + "\"");
    }
    if (a.text.empty()) throw DataError(where + ": empty text");
    out.articles.push_back(std::move(a));
  }
  if (out.articles.empty()) out.warnings.push_back(source_name + ": no articles");
  return out;
}

JsonlFile load_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_jsonl(buffer.str(), path);
}

std::string to_jsonl(const std::vector<Article>& articles) {
  std::string out;
  for (const auto& a : articles) {
    json obj = {{"id", a.id}, {"text", a.text}, {"label", std::string(to_string(a.label))}};
    out += obj.dump();
    out.push_back('\n');
  }
  return out;
}

void write_jsonl(const std::string& path, const std::vector<Article>& articles) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file '" + path + "'");
  out << to_jsonl(articles);
}

DatasetSplits load_splits(const std::string& train_path, const std::string& validation_path,
                          const std::string& test_path) {
  DatasetSplits s;
  s.train = load_jsonl(train_path).articles;
  s.validation = load_jsonl(validation_path).articles;
  if (!test_path.empty()) s.test = load_jsonl(test_path).articles;
  s.check_unique_ids();
  return s;
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error&) {
    throw DataError("manifest '" + path + "' does not parse");
  }
  auto stats = [&](const char* split) {
    const auto& s = doc.at("splits").at(split);
    return SplitStats{s.at("fake").get<std::size_t>(), s.at("real").get<std::size_t>()};
  };
  try {
    return {doc.at("name").get<std::string>(), stats("train"), stats("validation"), stats("test")};
  } catch (const json::exception& e) {
    throw DataError("manifest '" + path + "': " + e.what());
  }
}

}  // namespace dminter
