#include <cmath>

#include <gtest/gtest.h>

#include "../oracles.hpp"
#include "../scripted.hpp"
#include "dminter/error.hpp"
#include "dminter/objectives.hpp"
#include "dminter/random.hpp"

using namespace dminter;
using namespace dminter::intents;

namespace {

std::vector<Answer> answers_with(std::size_t t, std::size_t k) {
  std::vector<Answer> a(t, Answer::kNo);
  for (std::size_t i = 0; i < k; ++i) a[i] = Answer::kYes;
  return a;
}

ReasoningTrace leaf_trace(const AnswerMap& leaves) {
  ReasoningTrace t;
  for (const auto& top : {kPublic, kEmotion, kIndividual}) t.steps.push_back({top, {}, Answer::kYes, 0.9, 0});
  for (const auto& [id, a] : leaves) t.steps.push_back({id, {}, a, 0.9, 0});
  return t;
}

}  // namespace

TEST(NextTokenTargets, ShiftByOneThenEos) {
  const std::vector<TokenId> seq = {reserved::kBos, 9, 7, reserved::kYes};
  EXPECT_EQ(next_token_targets(seq), (std::vector<TokenId>{9, 7, reserved::kYes, reserved::kEos}));
}

TEST(DecoderLoss, UniformLogitsGiveLogV) {
  const Var logits = Var::constant(Tensor({4, 50}, 0.0));
  const std::vector<TokenId> targets = {1, 2, 3, 4};
  EXPECT_NEAR(decoder_self_training_loss(logits, targets).value().item(), std::log(50.0), 1e-12);
  EXPECT_NEAR(std::log(50.0), 3.9120, 1e-4);
  EXPECT_THROW(decoder_self_training_loss(logits, std::vector<TokenId>{1, 2}), ConfigError);
}

TEST(DecoderLoss, MatchesLoopOracle) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t L = 1 + rng.below(10), V = 2 + rng.below(30);
    Tensor logits({L, V});
    for (double& x : logits.mutable_values()) x = rng.uniform(-4, 4);
    std::vector<TokenId> targets(L);
    for (auto& t : targets) t = rng.below(V);
    const double got = decoder_self_training_loss(Var::constant(logits), targets).value().item();
    EXPECT_NEAR(got, oracle::decoder_loss(oracle::to_matrix(logits), targets), 1e-9);
  }
}

TEST(ErrorPropagationWeight, TruthTable) {
  EXPECT_EQ(error_propagation_weight(answers_with(5, 0), answers_with(5, 0)), 1.0);
  EXPECT_EQ(error_propagation_weight(answers_with(5, 1), answers_with(5, 0)), 1.0);
  EXPECT_EQ(error_propagation_weight(answers_with(4, 2), answers_with(4, 0)), 0.5);
  for (std::size_t t = 1; t <= 9; ++t) {
    EXPECT_EQ(error_propagation_weight(answers_with(t, t), answers_with(t, 0)), 1.0 / static_cast<double>(t));
  }
  EXPECT_THROW(error_propagation_weight(answers_with(3, 0), answers_with(2, 0)), ConfigError);
  EXPECT_THROW(error_propagation_weight(std::vector<Answer>{}, std::vector<Answer>{}), ConfigError);
}

TEST(ErrorPropagationWeight, FlippingMockGivesTMinusOne) {
  const auto h = default_hierarchy();
  const QueryTable table = QueryTable::build(h, scripted::prompt_vocab(h), ReasoningMode::kHierarchical, 256);
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    AnswerMap fwd_answers;
    scripted::FnSource fwd([&](const IntentId& id, std::size_t) {
      return fwd_answers[id] = rng.bernoulli(0.5) ? Answer::kYes : Answer::kNo;
    });
    const auto trace = run_episode(table, fwd);
    scripted::FnSource rev([&](const IntentId& id, std::size_t step) {
      const Answer a = fwd_answers.at(id);
      if (step == 0) return a;
      return a == Answer::kYes ? Answer::kNo : Answer::kYes;
    });
    const auto reversed = run_reverse_episode(table, trace, rev);
    const std::size_t t = trace.step_count();
    const std::size_t k = t - 1;
    EXPECT_EQ(error_propagation_weight(trace, reversed), 1.0 / static_cast<double>(std::max<std::size_t>(k, 1)));
  }
}

TEST(VeracityConsistencyWeight, BruteForceOverLeafAssignments) {
  const auto h = default_hierarchy();
  const std::vector<IntentId> leaves = {kPopularize, kClout, kConflict, kSmear, kBias, kConnect};
  for (int mask = 0; mask < 64; ++mask) {
    AnswerMap assignment;
    for (std::size_t i = 0; i < leaves.size(); ++i) assignment[leaves[i]] = (mask >> i) & 1 ? Answer::kYes : Answer::kNo;
    const auto trace = leaf_trace(assignment);
    for (Veracity y : {Veracity::kReal, Veracity::kFake}) {
      // Oracle: zero iff some affirmed leaf leans and none agrees with y.
      bool any = false, agree = false;
      for (std::size_t i = 0; i < leaves.size(); ++i) {
        if (!((mask >> i) & 1)) continue;
        any = true;
        const bool real_leaning = leaves[i] == kPopularize || leaves[i] == kConnect;
        agree = agree || (real_leaning == (y == Veracity::kReal));
      }
      const double expected = any && !agree ? 0.0 : 1.0;
      ASSERT_EQ(veracity_consistency_weight(trace, y, h), expected) << "mask " << mask;
      const AnswerMap same = trace.answers();
      const auto w = compute_sample_weights(trace, same, y, h);
      ASSERT_EQ(w.alpha_e, 1.0);
      ASSERT_EQ(w.alpha_v, expected);
      ASSERT_EQ(w.alpha, (1.0 + expected) / 2.0);
    }
  }
}

TEST(VeracityConsistencyWeight, NoAffirmedLeafKeepsWeight) {
  ReasoningTrace t;
  t.steps.push_back({kPublic, {}, Answer::kYes, 0.9, 0});
  EXPECT_EQ(veracity_consistency_weight(t, Veracity::kFake, default_hierarchy()), 1.0);
}

TEST(SampleWeight, Average) {
  EXPECT_EQ(sample_weight(1.0, 0.0), 0.5);
  EXPECT_EQ(sample_weight(0.25, 1.0), 0.625);
}

TEST(TotalLoss, Combination) {
  const Tensor logits = Tensor::matrix(1, 2, {0.2, -0.4});
  const auto lb = total_loss(logits, Veracity::kFake, 3.0, 0.5, 0.1);
  EXPECT_NEAR(lb.veracity_ce, cross_entropy_from_logits(logits, 1), 1e-15);
  EXPECT_NEAR(lb.weighted_total, 0.5 * (lb.veracity_ce + 0.1 * 3.0), 1e-15);
  EXPECT_EQ(total_loss(logits, Veracity::kFake, 3.0, 0.5, 0.0).weighted_total,
            0.5 * cross_entropy_from_logits(logits, 1));
  EXPECT_THROW(total_loss(logits, Veracity::kFake, 3.0, 1.5, 0.1), ConfigError);
  EXPECT_THROW(total_loss(logits, Veracity::kFake, 3.0, 0.5, -1.0), ConfigError);
}

TEST(WeightedSampleLoss, GraphMatchesScalarForm) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor logits = Tensor::matrix(1, 2, {rng.uniform(-2, 2), rng.uniform(-2, 2)});
    const double ld = rng.uniform(0, 5), alpha = rng.uniform(0.05, 1.0);
    const double beta = trial % 5 == 0 ? 0.0 : rng.uniform(0, 1);
    const Veracity y = trial % 2 ? Veracity::kFake : Veracity::kReal;
    const double graph =
        weighted_sample_loss(Var::constant(logits), y, Var::constant(Tensor::scalar(ld)), alpha, beta).value().item();
    EXPECT_EQ(graph, total_loss(logits, y, ld, alpha, beta).weighted_total);
  }
}
