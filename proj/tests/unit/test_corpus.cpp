#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "../oracles.hpp"
#include "dminter/dataset.hpp"
#include "dminter/error.hpp"
#include "dminter/metrics.hpp"
#include "dminter/random.hpp"
#include "dminter/synthetic.hpp"
#include "dminter/vocabulary.hpp"

using namespace dminter;

namespace {

std::vector<Article> articles_from(const std::vector<std::string>& texts) {
  std::vector<Article> out;
  for (std::size_t i = 0; i < texts.size(); ++i) out.push_back({"a" + std::to_string(i), texts[i], Veracity::kReal});
  return out;
}

std::vector<Veracity> to_labels(const std::vector<int>& v) {
  std::vector<Veracity> out;
  for (int x : v) out.push_back(x ? Veracity::kFake : Veracity::kReal);
  return out;
}

}  // namespace

TEST(Tokenizer, SplitsPunctuationAndLowercases) {
  EXPECT_EQ(split_words("Hello, World!  ok"), (std::vector<std::string>{"hello", ",", "world", "!", "ok"}));
  EXPECT_TRUE(split_words("   ").empty());
}

TEST(Vocabulary, ReservedTokensAndYesNo) {
  const Vocabulary v;
  EXPECT_EQ(v.size(), reserved::kCount);
  EXPECT_EQ(v.id("yes"), reserved::kYes);
  EXPECT_EQ(v.id("no"), reserved::kNo);
  EXPECT_NE(reserved::kYes, reserved::kNo);
  EXPECT_EQ(v.tokenize("Yes", 5), (std::vector<TokenId>{reserved::kYes}));
}

TEST(Vocabulary, BuildIsDeterministicAndRanked) {
  const auto corpus = articles_from({"b a a c", "c a b d", "d"});
  const Vocabulary v1 = build_vocab(corpus, 100);
  const Vocabulary v2 = build_vocab(corpus, 100);
  EXPECT_EQ(v1, v2);
  // counts a=3, b=2, c=2, d=2: b, c, d tie and sort lexicographically.
  EXPECT_EQ(std::vector<std::string>(v1.tokens().begin() + reserved::kCount, v1.tokens().end()),
            (std::vector<std::string>{"a", "b", "c", "d"}));
  const Vocabulary capped = build_vocab(corpus, reserved::kCount + 2);
  EXPECT_EQ(capped.size(), reserved::kCount + 2);
  EXPECT_EQ(capped.id("c"), reserved::kUnk);
  EXPECT_THROW(build_vocab(corpus, reserved::kCount + 1), ConfigError);
}

TEST(Vocabulary, SingleWordCorpus) {
  const Vocabulary v = build_vocab(articles_from({"zz zz zz", "zz"}), 50);
  EXPECT_EQ(v.size(), reserved::kCount + 1);
  EXPECT_EQ(v.token(reserved::kCount), "zz");
}

TEST(Vocabulary, RequiredWordsComeFirst) {
  const std::vector<std::string> required = {"Is it true?"};
  const Vocabulary v = build_vocab(articles_from({"a a a b"}), reserved::kCount + 5, required);
  EXPECT_TRUE(v.contains("is"));
  EXPECT_TRUE(v.contains("?"));
  EXPECT_TRUE(v.contains("a"));
  EXPECT_FALSE(v.contains("b"));
}

TEST(Vocabulary, TokenizeTruncatesAndNeverEmpty) {
  const Vocabulary v = build_vocab(articles_from({"one two three four"}), 50);
  EXPECT_EQ(v.tokenize("one two three four", 2).size(), 2u);
  EXPECT_EQ(v.tokenize("", 8), (std::vector<TokenId>{reserved::kUnk}));
  EXPECT_EQ(v.tokenize("one unknownword", 8)[1], reserved::kUnk);
  const auto ids = v.tokenize("four three two", 10);
  EXPECT_EQ(ids.size(), 3u);
  EXPECT_EQ(v.detokenize(ids), "four three two");
  EXPECT_EQ(Vocabulary::from_tokens(v.tokens()), v);
  EXPECT_THROW(Vocabulary::from_tokens({"x"}), DataError);
}

TEST(Jsonl, ParseErrorsNameTheLine) {
  auto error_of = [](const std::string& text) {
    try {
      parse_jsonl(text, "f");
    } catch (const DataError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(error_of("{\"id\":\"1\",\"text\":\"t\",\"label\":\"real\"}\n{\"id\":\"2\",\"text\":\"t\"}\n").find("f:2"),
            std::string::npos);
  EXPECT_NE(error_of("{\"id\":\"1\",\"text\":\"t\",\"label\":\"maybe\"}\n").find("unknown label"), std::string::npos);
  EXPECT_NE(error_of("{broken\n").find("f:1"), std::string::npos);
  EXPECT_FALSE(error_of("{\"id\":\"1\",\"text\":\"t\",\"label\":\"real\",\"x\":1}\n").empty());
}

TEST(Jsonl, EmptyFileWarnsAndRoundTrips) {
  const auto empty = parse_jsonl("", "empty.jsonl");
  EXPECT_TRUE(empty.articles.empty());
  ASSERT_EQ(empty.warnings.size(), 1u);
  const std::vector<Article> arts = {{"x1", "some \"quoted\" text", Veracity::kFake}, {"x2", "more", Veracity::kReal}};
  EXPECT_EQ(parse_jsonl(to_jsonl(arts)).articles, arts);
  const auto path = std::filesystem::temp_directory_path() / "dminter_corpus_test.jsonl";
  write_jsonl(path.string(), arts);
  EXPECT_EQ(load_jsonl(path.string()).articles, arts);
  std::filesystem::remove(path);
  EXPECT_THROW(load_jsonl("/nonexistent/file.jsonl"), DataError);
}

TEST(Dataset, DuplicateIdsAcrossSplitsRejected) {
  DatasetSplits s;
  s.train = {{"a", "t", Veracity::kReal}};
  s.test = {{"a", "u", Veracity::kFake}};
  EXPECT_THROW(s.check_unique_ids(), DataError);
}

TEST(Dataset, ShippedManifestsMatchPublishedCounts) {
  const auto gossipcop = load_manifest(DMINTER_SOURCE_DIR "/data/manifests/gossipcop.json");
  EXPECT_EQ(gossipcop.train.fake, 2024u);
  EXPECT_EQ(gossipcop.train.real, 5039u);
  EXPECT_NO_THROW(load_manifest(DMINTER_SOURCE_DIR "/data/manifests/politifact.json"));
  EXPECT_NO_THROW(load_manifest(DMINTER_SOURCE_DIR "/data/manifests/snopes.json"));
}

TEST(Synthetic, SeededAndWellFormed) {
  const auto a = generate_synthetic_corpus(7, 300, 50, 50, 0.9);
  const auto b = generate_synthetic_corpus(7, 300, 50, 50, 0.9);
  const auto c = generate_synthetic_corpus(8, 300, 50, 50, 0.9);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.train, c.train);
  EXPECT_NO_THROW(a.check_unique_ids());
  EXPECT_EQ(a.train.size(), 300u);
  for (const auto& art : a.train) EXPECT_FALSE(art.text.empty());
  EXPECT_THROW(generate_synthetic_corpus(1, 10, 10, 10, 0.4), ConfigError);
  EXPECT_THROW(generate_synthetic_corpus(1, 10, 10, 10, 1.1), ConfigError);
  EXPECT_THROW(generate_synthetic_corpus(1, 0, 10, 10, 0.9), ConfigError);
}

TEST(Synthetic, FillerAndCueWordsAreDisjoint) {
  std::set<std::string> filler(filler_lexicon().begin(), filler_lexicon().end());
  for (const auto& table : cue_tables()) {
    for (const auto& phrase : table.phrases) {
      for (const auto& w : split_words(phrase)) EXPECT_FALSE(filler.count(w)) << w << " in '" << phrase << "'";
    }
  }
}

TEST(Synthetic, CueLabelCooccurrenceConvergesToStrength) {
  for (double p : {0.7, 0.9}) {
    const auto s = generate_synthetic_corpus(11, 4000, 10, 10, p);
    std::size_t cued = 0, agree = 0;
    for (const auto& art : s.train) {
      const auto lean = cue_oracle(art.text);
      if (!lean) continue;
      ++cued;
      agree += *lean == art.label;
    }
    EXPECT_NEAR(static_cast<double>(cued) / 4000.0, p, 0.03);
    EXPECT_NEAR(static_cast<double>(agree) / static_cast<double>(cued), p, 0.03);
  }
}

TEST(Synthetic, OracleIsPerfectAtFullStrength) {
  const auto s = generate_synthetic_corpus(3, 10, 10, 2000, 1.0);
  for (const auto& art : s.test) {
    const auto lean = cue_oracle(art.text);
    ASSERT_TRUE(lean.has_value());
    ASSERT_EQ(*lean, art.label);
  }
}

TEST(Synthetic, HalfStrengthIsIndependent) {
  const auto s = generate_synthetic_corpus(5, 20000, 10, 10, 0.5);
  // Empirical mutual information between (cue lean or none) and label.
  std::map<std::pair<int, int>, double> joint;
  for (const auto& art : s.train) {
    const auto lean = cue_oracle(art.text);
    joint[{lean ? static_cast<int>(*lean) : 2, static_cast<int>(art.label)}] += 1.0 / 20000.0;
  }
  std::map<int, double> px, py;
  for (const auto& [k, v] : joint) {
    px[k.first] += v;
    py[k.second] += v;
  }
  double mi = 0.0;
  for (const auto& [k, v] : joint) mi += v * std::log(v / (px[k.first] * py[k.second]));
  EXPECT_LT(mi, 1e-3);
}

TEST(Metrics, PerfectPredictions) {
  const auto y = to_labels({1, 0, 1, 0});
  const auto r = compute_metrics(y, y, std::vector<double>{1, 0, 1, 0});
  for (double m : {r.macro_f1, r.accuracy, r.precision, r.recall, r.f1_real, r.f1_fake, r.auc}) EXPECT_EQ(m, 1.0);
}

TEST(Metrics, AllFakePredictionsZeroRealF1) {
  const auto r = compute_metrics(to_labels({1, 0, 1, 0}), to_labels({1, 1, 1, 1}), std::vector<double>{.9, .8, .7, .6});
  EXPECT_EQ(r.f1_real, 0.0);
  EXPECT_NEAR(r.macro_f1, (r.f1_real + r.f1_fake) / 2, 1e-12);
}

TEST(Metrics, AucExamples) {
  const auto y = to_labels({1, 1, 0, 0});
  EXPECT_EQ(*rank_auc(y, std::vector<double>{0.9, 0.8, 0.3, 0.1}), 1.0);
  EXPECT_EQ(*rank_auc(y, std::vector<double>{0.9, 0.2, 0.8, 0.1}), 0.75);
  EXPECT_EQ(*rank_auc(y, std::vector<double>{0.5, 0.5, 0.5, 0.5}), 0.5);
  const auto single = to_labels({1, 1});
  EXPECT_FALSE(rank_auc(single, std::vector<double>{0.2, 0.3}).has_value());
  const auto r = compute_metrics(single, single, std::vector<double>{0.2, 0.3});
  EXPECT_FALSE(r.auc_defined);
  EXPECT_TRUE(to_json(r, "test")["auc"].is_null());
}

TEST(Metrics, InputErrors) {
  EXPECT_THROW(compute_metrics({}, {}, {}), ConfigError);
  const auto y = to_labels({1, 0});
  EXPECT_THROW(compute_metrics(y, to_labels({1}), std::vector<double>{0.1, 0.2}), ConfigError);
  EXPECT_THROW(compute_metrics(y, y, std::vector<double>{0.1, 1.2}), ConfigError);
}

TEST(Metrics, MatchesOracleOnRandomInstances) {
  Rng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<int> y(n), p(n);
    std::vector<double> prob(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.below(2));
      p[i] = static_cast<int>(rng.below(2));
      prob[i] = std::round(rng.uniform() * 10) / 10;  // force ties
    }
    const auto r = compute_metrics(to_labels(y), to_labels(p), prob);
    const auto o = oracle::metrics(y, p, prob);
    ASSERT_NEAR(r.macro_f1, o.macro_f1, 1e-12);
    ASSERT_NEAR(r.accuracy, o.accuracy, 1e-12);
    ASSERT_NEAR(r.precision, o.precision, 1e-12);
    ASSERT_NEAR(r.recall, o.recall, 1e-12);
    ASSERT_NEAR(r.f1_real, o.f1_real, 1e-12);
    ASSERT_NEAR(r.f1_fake, o.f1_fake, 1e-12);
    ASSERT_EQ(r.auc_defined, o.auc.has_value());
    if (o.auc) ASSERT_NEAR(r.auc, *o.auc, 1e-12);
    ASSERT_NEAR(r.macro_f1, (r.f1_real + r.f1_fake) / 2, 1e-12);
  }
}

TEST(Metrics, AucInvariantUnderMonotoneTransform) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> y(30);
    std::vector<double> s(30), t(30);
    for (std::size_t i = 0; i < 30; ++i) {
      y[i] = static_cast<int>(rng.below(2));
      s[i] = std::round(rng.uniform() * 20) / 20;
      t[i] = std::pow(s[i], 3.0) / 2 + 0.1;
    }
    const auto a = rank_auc(to_labels(y), s), b = rank_auc(to_labels(y), t);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (a) ASSERT_NEAR(*a, *b, 1e-12);
  }
}

TEST(Metrics, FakeClassAveragingAndJson) {
  const auto y = to_labels({1, 1, 0, 0, 0});
  const auto p = to_labels({1, 0, 0, 1, 0});
  const std::vector<double> prob = {0.9, 0.4, 0.1, 0.6, 0.2};
  const auto r = compute_metrics(y, p, prob, Averaging::kFakeClass);
  EXPECT_DOUBLE_EQ(r.precision, 0.5);
  EXPECT_DOUBLE_EQ(r.recall, 0.5);
  const auto m = compute_metrics(y, p, prob);
  const auto doc = to_json(m, "validation");
  for (const char* key : {"macro_f1", "accuracy", "precision_macro", "recall_macro", "f1_real", "f1_fake", "auc", "n", "split"}) {
    EXPECT_TRUE(doc.contains(key)) << key;
  }
  EXPECT_EQ(report_from_json(doc), m);
  EXPECT_EQ(report_from_json(to_json(r, "x")), r);
}
