#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "../oracles.hpp"
#include "dminter/error.hpp"
#include "dminter/hierarchy.hpp"
#include "dminter/random.hpp"

using namespace dminter;

namespace {

std::vector<std::string> names(const std::vector<IntentId>& ids) {
  std::vector<std::string> out;
  for (const auto& id : ids) out.push_back(id.name());
  return out;
}

IntentNode node(const std::string& id, std::optional<std::string> parent, Lean lean = Lean::kNone) {
  IntentNode n;
  n.id = IntentId(id);
  if (parent) n.parent = IntentId(*parent);
  n.query_text = "Is this " + id + "?";
  n.veracity_lean = lean;
  return n;
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

/// Runs the planner to completion with answers drawn from `rng`.
std::vector<IntentId> drive(const IntentHierarchy& h, Rng& rng, AnswerMap& answers) {
  std::vector<IntentId> asked;
  for (auto plan = plan_next_queries(h, answers); !plan.empty(); plan = plan_next_queries(h, answers)) {
    for (const auto& id : plan) {
      asked.push_back(id);
      answers[id] = rng.bernoulli(0.5) ? Answer::kYes : Answer::kNo;
    }
  }
  return asked;
}

}  // namespace

TEST(DefaultHierarchy, ShapeQueriesAndLeans) {
  const IntentHierarchy h = default_hierarchy();
  EXPECT_EQ(names(h.layer2()), (std::vector<std::string>{"Public", "Emotion", "Individual"}));
  EXPECT_EQ(names(h.children(intents::kPublic)), (std::vector<std::string>{"Popularize", "Clout"}));
  EXPECT_EQ(names(h.children(intents::kEmotion)), (std::vector<std::string>{"Conflict"}));
  EXPECT_EQ(names(h.children(intents::kIndividual)), (std::vector<std::string>{"Smear", "Bias", "Connect"}));
  EXPECT_EQ(h.nodes().size(), 9u);
  const std::vector<std::pair<IntentId, std::string>> prompts = {
      {intents::kPublic, "Is this article aimed at the public?"},
      {intents::kEmotion, "Is there any emotional expression in this article?"},
      {intents::kIndividual, "Does this article express any personal points?"},
      {intents::kPopularize, "Is this an article aimed at popularization?"},
      {intents::kClout, "Is this an article aimed at pursuing attention?"},
      {intents::kConflict, "Is this article attempting to create conflict?"},
      {intents::kSmear, "Is this article smearing others?"},
      {intents::kBias, "Is there any bias in this article?"},
      {intents::kConnect, "Is this article just seeking interaction and connection?"},
  };
  for (const auto& [id, text] : prompts) EXPECT_EQ(h.query_text(id), text);
  EXPECT_EQ(h.veracity_lean(intents::kPopularize), Lean::kReal);
  EXPECT_EQ(h.veracity_lean(intents::kConnect), Lean::kReal);
  for (const auto& id : {intents::kClout, intents::kConflict, intents::kSmear, intents::kBias}) {
    EXPECT_EQ(h.veracity_lean(id), Lean::kFake) << id.name();
  }
  EXPECT_TRUE(h.children(intents::kClout).empty());
  EXPECT_EQ(names(h.breadth_first_order()),
            (std::vector<std::string>{"Public", "Emotion", "Individual", "Popularize", "Clout", "Conflict", "Smear",
                                      "Bias", "Connect"}));
}

TEST(DefaultHierarchy, ShippedJsonMatches) {
  std::ifstream in(DMINTER_SOURCE_DIR "/data/default_hierarchy.json");
  ASSERT_TRUE(in);
  std::stringstream buffer;
  buffer << in.rdbuf();
  EXPECT_EQ(load_hierarchy(buffer.str()), default_hierarchy());
}

TEST(Hierarchy, SerializeRoundTrip) {
  const IntentHierarchy h = default_hierarchy();
  EXPECT_EQ(load_hierarchy(serialize_hierarchy(h)), h);
}

TEST(Hierarchy, ValidationErrorsNameTheNode) {
  EXPECT_NE(error_of([] { IntentHierarchy({node("A", "A")}, {IntentId("A")}); }).find("cycle at intent"),
            std::string::npos);
  EXPECT_NE(error_of([] { IntentHierarchy({node("A", std::nullopt), node("A", std::nullopt)}, {IntentId("A")}); })
                .find("A"),
            std::string::npos);
  EXPECT_NE(error_of([] {
              IntentHierarchy({node("A", std::nullopt), node("B", "A"), node("C", "B")}, {IntentId("A")});
            }).find("deeper than two layers"),
            std::string::npos);
  EXPECT_NE(error_of([] { IntentHierarchy({node("A", std::nullopt), node("B", "Z")}, {IntentId("A")}); }).find("B"),
            std::string::npos);
  EXPECT_FALSE(error_of([] {
                 auto n = node("A", std::nullopt);
                 n.query_text.clear();
                 IntentHierarchy({n}, {IntentId("A")});
               }).empty());
  EXPECT_FALSE(error_of([] { IntentHierarchy({node("NoIntent", std::nullopt)}, {IntentId("NoIntent")}); }).empty());
  EXPECT_FALSE(error_of([] { IntentHierarchy({node("A", std::nullopt)}, {}); }).empty());
  EXPECT_FALSE(error_of([] { IntentHierarchy({node("A", "B"), node("B", "A")}, {}); }).empty());
}

TEST(Hierarchy, LoaderRejectsUnknownKeys) {
  EXPECT_THROW(load_hierarchy(R"({"nodes": [], "layer2_order": [], "extra": 1})"), ConfigError);
  EXPECT_THROW(load_hierarchy(R"({"nodes": [{"id": "A", "parent": "root", "query": "A?", "colour": "red"}],
                                  "layer2_order": ["A"]})"),
               ConfigError);
  EXPECT_THROW(load_hierarchy("not json"), ConfigError);
  const auto h = load_hierarchy(R"({"nodes": [{"id": "A", "parent": "root", "query": "A?"},
                                              {"id": "B", "parent": "A", "query": "B?", "lean": "fake"}],
                                    "layer2_order": ["A"]})");
  EXPECT_EQ(h.veracity_lean(IntentId("B")), Lean::kFake);
}

TEST(Planner, AllLayerTwoAssignmentsMatchOracle) {
  const IntentHierarchy h = default_hierarchy();
  for (int mask = 0; mask < 8; ++mask) {
    const bool pub = mask & 1, emo = mask & 2, ind = mask & 4;
    AnswerMap answers;
    std::vector<std::string> asked;
    for (auto plan = plan_next_queries(h, answers); !plan.empty(); plan = plan_next_queries(h, answers)) {
      for (const auto& id : plan) {
        asked.push_back(id.name());
        const bool yes = (id == intents::kPublic && pub) || (id == intents::kEmotion && emo) ||
                         (id == intents::kIndividual && ind);
        answers[id] = yes ? Answer::kYes : Answer::kNo;
      }
    }
    EXPECT_EQ(asked, oracle::planner_queries(pub, emo, ind)) << "mask " << mask;
  }
}

TEST(Planner, RejectsInconsistentAnswers) {
  const IntentHierarchy h = default_hierarchy();
  AnswerMap answers = {{intents::kPublic, Answer::kNo}, {intents::kClout, Answer::kYes}};
  EXPECT_THROW(plan_next_queries(h, answers), ConfigError);
  EXPECT_THROW(plan_next_queries(h, {{IntentId("Nope"), Answer::kYes}}), ConfigError);
}

TEST(Planner, RandomHierarchiesTerminateAndRespectParents) {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n_top = 1 + rng.below(4);
    const std::size_t n_total = n_top + rng.below(12 - n_top + 1);
    std::vector<IntentNode> nodes;
    std::vector<IntentId> order;
    for (std::size_t i = 0; i < n_top; ++i) {
      nodes.push_back(node("T" + std::to_string(i), std::nullopt));
      order.emplace_back("T" + std::to_string(i));
    }
    for (std::size_t i = n_top; i < n_total; ++i) {
      nodes.push_back(node("L" + std::to_string(i), "T" + std::to_string(rng.below(n_top))));
    }
    rng.shuffle(order);
    const IntentHierarchy h(nodes, order);
    AnswerMap answers;
    const auto asked = drive(h, rng, answers);
    std::set<IntentId> seen;
    for (const auto& id : asked) {
      ASSERT_TRUE(seen.insert(id).second) << "queried twice: " << id.name();
      const auto& parent = h.node(id).parent;
      if (parent) ASSERT_EQ(answers.at(*parent), Answer::kYes);
    }
    for (const auto& n : h.nodes()) {
      const bool expected = !n.parent || answers.at(*n.parent) == Answer::kYes;
      ASSERT_EQ(seen.count(n.id) == 1, expected) << n.id.name();
    }
    ASSERT_TRUE(plan_next_queries(h, answers).empty());
  }
}
