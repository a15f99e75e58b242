#include "dminter/reasoning.hpp"

#include <algorithm>
#include <cmath>

#include "dminter/error.hpp"

namespace dminter {

std::string_view to_string(ReasoningMode mode) {
  switch (mode) {
    case ReasoningMode::kFlat: return "flat";
    case ReasoningMode::kDirectQuery: return "direct_query";
    case ReasoningMode::kHierarchical: break;
  }
  return "hierarchical";
}

QueryTable QueryTable::build(IntentHierarchy hierarchy, const Vocabulary& vocab, ReasoningMode mode,
                             std::size_t max_len) {
  QueryTable table{std::move(hierarchy), mode, {}, {}, {}, max_len};
  for (const auto& node : table.hierarchy.nodes()) {
    table.query_tokens[node.id] = vocab.tokenize_all(node.query_text);
  }
  table.no_intent_tokens = vocab.tokenize_all(kNoIntentSentence);
  table.direct_question_tokens = vocab.tokenize_all(kDirectQuestion);
  return table;
}

std::vector<std::string> QueryTable::prompt_texts(const IntentHierarchy& hierarchy) {
  std::vector<std::string> texts;
  for (const auto& node : hierarchy.nodes()) texts.push_back(node.query_text);
  texts.emplace_back(kNoIntentSentence);
  texts.emplace_back(kDirectQuestion);
  return texts;
}

AnswerMap ReasoningTrace::answers() const {
  AnswerMap out;
  for (const auto& s : steps) out[s.intent] = s.answer;
  return out;
}

std::vector<Answer> ReasoningTrace::answer_list() const {
  std::vector<Answer> out;
  for (const auto& s : steps) out.push_back(s.answer);
  return out;
}

AnswerDecision extract_answer(double logit_yes, double logit_no) {
  const Answer answer = logit_yes > logit_no ? Answer::kYes : Answer::kNo;
  const double margin = answer == Answer::kYes ? logit_yes - logit_no : logit_no - logit_yes;
  return {answer, 1.0 / (1.0 + std::exp(-margin))};
}

AnswerDecision extract_answer(const Tensor& vocab_logits_last) {
  if (vocab_logits_last.size() <= reserved::kNo) {
    throw ConfigError("extract_answer: logits do not cover the yes/no tokens");
  }
  return extract_answer(vocab_logits_last[reserved::kYes], vocab_logits_last[reserved::kNo]);
}

namespace {

void append(std::vector<TokenId>& seq, std::span<const TokenId> tokens, std::size_t max_len) {
  if (seq.size() + tokens.size() > max_len) {
    throw ConfigError("reasoning overflow: sequence would reach " + std::to_string(seq.size() + tokens.size()) +
                      " tokens (max_len " + std::to_string(max_len) + ")");
  }
  seq.insert(seq.end(), tokens.begin(), tokens.end());
}

TokenId answer_token(Answer a) { return a == Answer::kYes ? reserved::kYes : reserved::kNo; }

/// Feeds the decoder only the tokens it has not yet seen.
class ModelAnswerSource final : public AnswerSource {
 public:
  ModelAnswerSource(const ModelParams& params, const Tensor& h_e) : decoder_(params, h_e) {}

  AnswerDecision answer(std::span<const TokenId> sequence, const IntentId&, std::size_t) override {
    const Tensor hidden = catch_up(sequence);
    return extract_answer(decoder_.logits_for_row(hidden, hidden.rows() - 1));
  }

  void finish(std::span<const TokenId> sequence) override {
    if (sequence.size() > decoder_.length()) catch_up(sequence);
  }

  /// Runs the pending suffix of `sequence`; returns its hidden rows.
  Tensor catch_up(std::span<const TokenId> sequence) {
    if (sequence.size() <= decoder_.length()) throw ConfigError("reasoning: no new tokens to decode");
    return decoder_.extend(sequence.subspan(decoder_.length()));
  }

  IncrementalDecoder& decoder() { return decoder_; }

 private:
  IncrementalDecoder decoder_;
};

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

ReasoningTrace direct_query_episode(const QueryTable& table, ModelAnswerSource& source) {
  ReasoningTrace trace;
  trace.mode = ReasoningMode::kDirectQuery;
  trace.sequence_tokens = {reserved::kBos};
  append(trace.sequence_tokens, table.direct_question_tokens, table.max_len);
  std::vector<double> probabilities;
  for (std::size_t g = 0; g < kDirectAnswerTokens; ++g) {
    if (trace.sequence_tokens.size() >= table.max_len) throw ConfigError("reasoning overflow: direct answer");
    const Tensor hidden = source.catch_up(trace.sequence_tokens);
    const Tensor logits = source.decoder().logits_for_row(hidden, hidden.rows() - 1);
    const Tensor probs = softmax(logits, 1);
    auto row = probs.values();
    const auto best = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
    trace.generated_positions.push_back(trace.sequence_tokens.size() - 1);
    trace.generated_tokens.push_back(best);
    probabilities.push_back(row[best]);
    trace.sequence_tokens.push_back(best);
    if (best == reserved::kEos) break;
  }
  source.finish(trace.sequence_tokens);
  trace.mean_confidence = mean_of(probabilities);
  return trace;
}

}  // namespace

ReasoningTrace run_episode(const QueryTable& table, AnswerSource& source) {
  if (table.mode == ReasoningMode::kDirectQuery) {
    throw ConfigError("run_episode: direct-query episodes need a model-backed decoder");
  }
  ReasoningTrace trace;
  trace.mode = table.mode;
  trace.sequence_tokens = {reserved::kBos};
  AnswerMap answers;
  std::vector<double> confidences;
  auto ask = [&](const IntentId& intent) {
    const auto& query = table.query_tokens.at(intent);
    append(trace.sequence_tokens, query, table.max_len);
    ReasoningStep step;
    step.intent = intent;
    step.query_tokens = query;
    step.decision_position = trace.sequence_tokens.size() - 1;
    const AnswerDecision d = source.answer(trace.sequence_tokens, intent, trace.steps.size());
    step.answer = d.answer;
    step.confidence = d.confidence;
    const TokenId a = answer_token(d.answer);
    append(trace.sequence_tokens, std::span<const TokenId>(&a, 1), table.max_len);
    answers[intent] = d.answer;
    confidences.push_back(d.confidence);
    trace.steps.push_back(std::move(step));
  };

  if (table.mode == ReasoningMode::kFlat) {
    for (const auto& intent : table.hierarchy.breadth_first_order()) ask(intent);
  } else {
    for (auto plan = plan_next_queries(table.hierarchy, answers); !plan.empty();
         plan = plan_next_queries(table.hierarchy, answers)) {
      for (const auto& intent : plan) ask(intent);
    }
  }
  if (trace.steps.empty()) throw ConfigError("run_episode: hierarchy has no queryable intents");

  trace.no_intent = std::all_of(trace.steps.begin(), trace.steps.end(),
                                [](const ReasoningStep& s) { return s.answer == Answer::kNo; });
  if (trace.no_intent) append(trace.sequence_tokens, table.no_intent_tokens, table.max_len);
  trace.mean_confidence = mean_of(confidences);
  source.finish(trace.sequence_tokens);
  return trace;
}

AnswerMap run_reverse_episode(const QueryTable& table, const ReasoningTrace& forward, AnswerSource& source) {
  if (forward.steps.empty()) throw ConfigError("reverse_reason: forward trace has no steps");
  std::vector<TokenId> seq = {reserved::kBos};
  AnswerMap out;
  std::size_t step = 0;
  for (auto it = forward.steps.rbegin(); it != forward.steps.rend(); ++it) {
    append(seq, table.query_tokens.at(it->intent), table.max_len);
    const AnswerDecision d = source.answer(seq, it->intent, step++);
    out[it->intent] = d.answer;
    const TokenId a = answer_token(d.answer);
    append(seq, std::span<const TokenId>(&a, 1), table.max_len);
  }
  return out;
}

ReasoningTrace reason(const ModelParams& params, const QueryTable& table, const Tensor& h_e) {
  NoGradGuard no_grad;
  ModelAnswerSource source(params, h_e);
  ReasoningTrace trace = table.mode == ReasoningMode::kDirectQuery ? direct_query_episode(table, source)
                                                                   : run_episode(table, source);
  trace.decoder_hidden = source.decoder().hidden_states();
  return trace;
}

AnswerMap reverse_reason(const ModelParams& params, const QueryTable& table, const Tensor& h_e,
                         const ReasoningTrace& forward) {
  NoGradGuard no_grad;
  ModelAnswerSource source(params, h_e);
  return run_reverse_episode(table, forward, source);
}

Var intent_feature(const Var& decoder_hidden) { return ops::mean(decoder_hidden, 0); }

Tensor intent_feature(const ReasoningTrace& trace) {
  if (!trace.decoder_hidden) throw ConfigError("intent_feature: trace has no decoder states");
  NoGradGuard no_grad;
  return ops::mean(Var::constant(*trace.decoder_hidden), 0).value();
}

Var trace_confidence(const ModelParams& params, const Var& decoder_hidden, const ReasoningTrace& trace) {
  const std::size_t length = decoder_hidden.shape()[0];
  const bool direct = trace.mode == ReasoningMode::kDirectQuery;
  std::vector<std::size_t> positions;
  if (direct) {
    positions = trace.generated_positions;
  } else {
    for (const auto& s : trace.steps) positions.push_back(s.decision_position);
  }
  if (positions.empty()) throw ConfigError("trace_confidence: trace has no answers");
  const std::size_t n = positions.size();
  Tensor selector({n, length}, 0.0);
  for (std::size_t i = 0; i < n; ++i) selector[i * length + positions[i]] = 1.0;
  Var logits = vocab_logits(params, ops::matmul(Var::constant(std::move(selector)), decoder_hidden));
  const std::size_t vocab = params.config.vocab_size;

  Var probs;
  Tensor chosen;
  if (direct) {
    probs = ops::softmax(logits, 1);
    chosen = Tensor({n, vocab}, 0.0);
    for (std::size_t i = 0; i < n; ++i) chosen[i * vocab + trace.generated_tokens[i]] = 1.0;
  } else {
    Tensor pair_select({vocab, 2}, 0.0);
    pair_select[reserved::kYes * 2 + 0] = 1.0;
    pair_select[reserved::kNo * 2 + 1] = 1.0;
    probs = ops::softmax(ops::matmul(logits, Var::constant(std::move(pair_select))), 1);
    chosen = Tensor({n, 2}, 0.0);
    for (std::size_t i = 0; i < n; ++i) chosen[i * 2 + (trace.steps[i].answer == Answer::kYes ? 0 : 1)] = 1.0;
  }
  Var per_answer = ops::sum(ops::mul(probs, Var::constant(std::move(chosen))), 1);
  return ops::mean(per_answer, 0);
}

}  // namespace dminter
