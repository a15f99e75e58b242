#include "dminter/synthetic.hpp"

#include <algorithm>
#include <set>

#include "dminter/error.hpp"
#include "dminter/random.hpp"
#include "dminter/vocabulary.hpp"

namespace dminter {

namespace {

const std::vector<std::string> kSubjects = {
    "the council", "a local official", "the company", "researchers", "the committee", "residents",
    "the school board", "a spokesperson", "the agency", "volunteers", "the museum", "city planners"};
const std::vector<std::string> kVerbs = {
    "discussed", "reviewed", "announced", "examined", "described", "outlined", "presented", "considered"};
const std::vector<std::string> kObjects = {
    "the annual budget", "a new park project", "the transit plan", "the library hours", "a water report",
    "the weekend market", "a housing survey", "the road repairs", "a community program", "the harvest figures"};
const std::vector<std::string> kTails = {
    "on tuesday", "last week", "this morning", "during a meeting", "in the downtown office",
    "after the holiday", "near the river", "at the town hall"};

const std::vector<CueTable> kCueTables = {
    {intents::kPopularize, Lean::kReal,
     {"according to published schedules", "certified statistics confirm", "documented timelines show",
      "verified records indicate"}},
    {intents::kClout, Lean::kFake,
     {"you will not believe", "share before it gets deleted", "it went viral overnight",
      "everyone is talking about"}},
    {intents::kConflict, Lean::kFake,
     {"they want to divide us", "outrage erupts among", "furious critics attack", "tensions explode between"}},
    {intents::kSmear, Lean::kFake,
     {"corrupt liar exposed", "disgraced fraud caught", "shameful scandal ruins", "crooked insider lied"}},
    {intents::kBias, Lean::kFake,
     {"obviously rigged by", "only fools trust", "biased elites always", "propaganda pushed by"}},
    {intents::kConnect, Lean::kReal,
     {"neighbors gathered together to", "families joined hands for", "friends reunited happily",
      "supporters thanked everyone who"}},
};

std::vector<std::string> build_filler_lexicon() {
  std::set<std::string> words;
  for (const auto* list : {&kSubjects, &kVerbs, &kObjects, &kTails}) {
    for (const auto& phrase : *list) {
      for (auto& w : split_words(phrase)) words.insert(std::move(w));
    }
  }
  words.insert(".");
  return {words.begin(), words.end()};
}

std::vector<std::vector<std::vector<std::string>>> tokenized_cues() {
  std::vector<std::vector<std::vector<std::string>>> out;
  for (const auto& table : kCueTables) {
    auto& phrases = out.emplace_back();
    for (const auto& p : table.phrases) phrases.push_back(split_words(p));
  }
  return out;
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& items) {
  return items[rng.below(items.size())];
}

std::string filler_sentence(Rng& rng) {
  return pick(rng, kSubjects) + " " + pick(rng, kVerbs) + " " + pick(rng, kObjects) + " " + pick(rng, kTails) + " .";
}

Veracity lean_label(Lean lean) { return lean == Lean::kFake ? Veracity::kFake : Veracity::kReal; }
Veracity flip(Veracity v) { return v == Veracity::kFake ? Veracity::kReal : Veracity::kFake; }

Article make_article(Rng& rng, std::string id, double cue_strength) {
  const std::size_t n_sentences = 2 + rng.below(3);
  std::vector<std::string> sentences;
  for (std::size_t i = 0; i < n_sentences; ++i) sentences.push_back(filler_sentence(rng));

  Article a;
  a.id = std::move(id);
  if (rng.bernoulli(cue_strength)) {
    const auto& table = pick(rng, kCueTables);
    const std::string cue = pick(rng, table.phrases) + " " + pick(rng, kObjects) + " .";
    sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(rng.below(n_sentences + 1)), cue);
    a.label = lean_label(table.lean);
    if (!rng.bernoulli(cue_strength)) a.label = flip(a.label);
  } else {
    a.label = rng.bernoulli(0.5) ? Veracity::kFake : Veracity::kReal;
  }
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i) a.text.push_back(' ');
    a.text += sentences[i];
  }
  return a;
}

}  // namespace

const std::vector<CueTable>& cue_tables() { return kCueTables; }

const std::vector<std::string>& filler_lexicon() {
  static const std::vector<std::string> lexicon = build_filler_lexicon();
  return lexicon;
}

std::optional<IntentId> find_cue(std::string_view text) {
  static const auto cues = tokenized_cues();
  const auto words = split_words(text);
  for (std::size_t t = 0; t < cues.size(); ++t) {
    for (const auto& phrase : cues[t]) {
      if (std::search(words.begin(), words.end(), phrase.begin(), phrase.end()) != words.end()) {
        return kCueTables[t].intent;
      }
    }
  }
  return std::nullopt;
}

std::optional<Veracity> cue_oracle(std::string_view text) {
  const auto intent = find_cue(text);
  if (!intent) return std::nullopt;
  for (const auto& table : kCueTables) {
    if (table.intent == *intent) return lean_label(table.lean);
  }
  return std::nullopt;
}

DatasetSplits generate_synthetic_corpus(std::uint64_t seed, std::size_t n_train, std::size_t n_val,
                                        std::size_t n_test, double cue_strength) {
  if (!(cue_strength >= 0.5 && cue_strength <= 1.0)) {
    throw ConfigError("cue_strength must lie in [0.5, 1], got " + std::to_string(cue_strength));
  }
  if (n_train == 0 || n_val == 0) throw ConfigError("synthetic corpus needs n_train > 0 and n_val > 0");
  DatasetSplits splits;
  auto fill = [&](std::vector<Article>& out, std::size_t n, const char* name, std::uint64_t stream) {
    Rng rng(Rng::mix(seed, stream));
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(make_article(rng, std::string(name) + "-" + std::to_string(i), cue_strength));
  };
  fill(splits.train, n_train, "train", 1);
  fill(splits.validation, n_val, "val", 2);
  fill(splits.test, n_test, "test", 3);
  return splits;
}

}  // namespace dminter
