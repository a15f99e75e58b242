#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dminter/hierarchy.hpp"
#include "dminter/model.hpp"
#include "dminter/vocabulary.hpp"

namespace dminter {

inline constexpr std::string_view kNoIntentSentence = "This article does not convey any intents";
inline constexpr std::string_view kDirectQuestion = "what is the intent behind this article?";
/// Maximum number of tokens generated greedily after the direct question.
inline constexpr std::size_t kDirectAnswerTokens = 3;

enum class ReasoningMode {
  kHierarchical,  // breadth-first, children only under yes-answered parents
  kFlat,          // every intent queried in breadth-first order
  kDirectQuery,   // one free-form question with a short greedy answer
};

std::string_view to_string(ReasoningMode mode);

/// Hierarchy plus the tokenized prompt strings used during an episode.
struct QueryTable {
  IntentHierarchy hierarchy;
  ReasoningMode mode = ReasoningMode::kHierarchical;
  std::map<IntentId, std::vector<TokenId>> query_tokens;
  std::vector<TokenId> no_intent_tokens;
  std::vector<TokenId> direct_question_tokens;
  /// Longest sequence the decoder accepts.
  std::size_t max_len = 256;

  static QueryTable build(IntentHierarchy hierarchy, const Vocabulary& vocab, ReasoningMode mode,
                          std::size_t max_len);
  /// Every prompt string an episode can emit; these must be in the vocabulary.
  static std::vector<std::string> prompt_texts(const IntentHierarchy& hierarchy);
};

struct ReasoningStep {
  IntentId intent;
  std::vector<TokenId> query_tokens;
  Answer answer = Answer::kNo;
  double confidence = 0.5;
  /// Index in sequence_tokens of the last query token, whose logits decided
  /// the answer.
  std::size_t decision_position = 0;
};

struct ReasoningTrace {
  ReasoningMode mode = ReasoningMode::kHierarchical;
  std::vector<ReasoningStep> steps;
  /// BOS, then (query, answer) per step, then the no-intent sentence if
  /// every answer was no.
  std::vector<TokenId> sequence_tokens;
  bool no_intent = false;
  double mean_confidence = 0.0;
  /// Decoder hidden states over sequence_tokens; empty for scripted runs.
  std::optional<Tensor> decoder_hidden;

  // Direct-query mode only: greedily generated tokens and the positions whose
  // logits produced them.
  std::vector<TokenId> generated_tokens;
  std::vector<std::size_t> generated_positions;

  std::size_t step_count() const { return steps.size(); }
  AnswerMap answers() const;
  std::vector<Answer> answer_list() const;
};

struct AnswerDecision {
  Answer answer = Answer::kNo;
  double confidence = 0.5;
};

/// yes iff logit(yes) > logit(no) (ties give no); confidence is the chosen
/// token's probability renormalized over the {yes, no} pair.
AnswerDecision extract_answer(const Tensor& vocab_logits_last);
AnswerDecision extract_answer(double logit_yes, double logit_no);

/// Produces yes/no decisions for an episode.
class AnswerSource {
 public:
  virtual ~AnswerSource() = default;
  /// `sequence` is the running answer sequence ending in the query tokens of
  /// `intent`; `step` counts queries already answered in this episode.
  virtual AnswerDecision answer(std::span<const TokenId> sequence, const IntentId& intent, std::size_t step) = 0;
  /// Receives the complete sequence once the episode ends.
  virtual void finish(std::span<const TokenId> sequence) { (void)sequence; }
};

/// Hierarchical or flat episode driven by `source`.
ReasoningTrace run_episode(const QueryTable& table, AnswerSource& source);

/// Replays the forward trace's queries in reverse order from an empty
/// answer sequence and reports the new answer per intent.
AnswerMap run_reverse_episode(const QueryTable& table, const ReasoningTrace& forward, AnswerSource& source);

/// Model-driven episode (no gradient). Fills decoder_hidden.
ReasoningTrace reason(const ModelParams& params, const QueryTable& table, const Tensor& h_e);

/// Model-driven reverse re-reasoning (no gradient).
AnswerMap reverse_reason(const ModelParams& params, const QueryTable& table, const Tensor& h_e,
                         const ReasoningTrace& forward);

/// Mean over the rows of the decoder hidden states; shape [1, d_model].
Var intent_feature(const Var& decoder_hidden);
Tensor intent_feature(const ReasoningTrace& trace);

/// Mean answer confidence recomputed as a differentiable function of the
/// decoder hidden states over trace.sequence_tokens. Matches
/// trace.mean_confidence up to rounding.
Var trace_confidence(const ModelParams& params, const Var& decoder_hidden, const ReasoningTrace& trace);

}  // namespace dminter
