#include "dminter/objectives.hpp"

#include <algorithm>

#include "dminter/error.hpp"

namespace dminter {

std::vector<TokenId> next_token_targets(std::span<const TokenId> sequence) {
  if (sequence.empty()) throw ConfigError("next_token_targets: empty sequence");
  std::vector<TokenId> targets(sequence.begin() + 1, sequence.end());
  targets.push_back(reserved::kEos);
  return targets;
}

Var decoder_self_training_loss(const Var& vocab_logits, std::span<const TokenId> targets) {
  const Shape& s = vocab_logits.shape();
  if (s.size() != 2 || s[0] != targets.size()) {
    throw ConfigError("decoder_self_training_loss: " + std::to_string(targets.size()) + " targets for logits " +
                      shape_to_string(s));
  }
  return ops::mean(ops::cross_entropy(vocab_logits, targets), 0);
}

double error_propagation_weight(std::span<const Answer> a, std::span<const Answer> a_hat) {
  if (a.size() != a_hat.size()) throw ConfigError("error_propagation_weight: answer lists differ in length");
  if (a.empty()) throw ConfigError("error_propagation_weight: empty answer list");
  std::size_t disagreements = 0;
  for (std::size_t t = 0; t < a.size(); ++t) disagreements += a[t] != a_hat[t] ? 1 : 0;
  return 1.0 / static_cast<double>(std::max<std::size_t>(disagreements, 1));
}

double error_propagation_weight(const ReasoningTrace& forward, const AnswerMap& reversed) {
  std::vector<Answer> a, a_hat;
  for (const auto& step : forward.steps) {
    auto it = reversed.find(step.intent);
    if (it == reversed.end()) {
      throw ConfigError("error_propagation_weight: reverse pass lacks intent '" + step.intent.name() + "'");
    }
    a.push_back(step.answer);
    a_hat.push_back(it->second);
  }
  return error_propagation_weight(a, a_hat);
}

double veracity_consistency_weight(const ReasoningTrace& trace, Veracity label, const IntentHierarchy& h) {
  const Lean wanted = label == Veracity::kFake ? Lean::kFake : Lean::kReal;
  bool any_leaning = false;
  for (const auto& step : trace.steps) {
    if (step.answer != Answer::kYes) continue;
    const Lean lean = h.veracity_lean(step.intent);
    if (lean == Lean::kNone) continue;
    any_leaning = true;
    if (lean == wanted) return 1.0;
  }
  return any_leaning ? 0.0 : 1.0;
}

double sample_weight(double alpha_e, double alpha_v) { return (alpha_e + alpha_v) / 2.0; }

SampleWeights compute_sample_weights(const ReasoningTrace& forward, const AnswerMap& reversed, Veracity label,
                                     const IntentHierarchy& h) {
  SampleWeights w;
  w.alpha_e = forward.steps.empty() ? 1.0 : error_propagation_weight(forward, reversed);
  w.alpha_v = veracity_consistency_weight(forward, label, h);
  w.alpha = sample_weight(w.alpha_e, w.alpha_v);
  return w;
}

Var weighted_sample_loss(const Var& veracity_logits, Veracity label, const Var& decoder_ld, double alpha,
                         double beta) {
  const std::size_t target = static_cast<std::size_t>(label);
  Var ce = ops::cross_entropy(veracity_logits, std::span<const std::size_t>(&target, 1));
  Var inner = beta == 0.0 ? ce : ops::add(ce, ops::scale(decoder_ld, beta));
  return ops::scale(inner, alpha);
}

LossBreakdown total_loss(const Tensor& veracity_logits, Veracity label, double decoder_ld, double alpha,
                         double beta) {
  if (beta < 0.0) throw ConfigError("total_loss: beta must be >= 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("total_loss: alpha must lie in [0, 1]");
  LossBreakdown b;
  b.veracity_ce = cross_entropy_from_logits(veracity_logits, static_cast<std::size_t>(label));
  b.decoder_ld = decoder_ld;
  b.beta = beta;
  b.alpha = alpha;
  b.weighted_total = alpha * (b.veracity_ce + beta * decoder_ld);
  return b;
}

}  // namespace dminter
