#pragma once

#include <span>
#include <vector>

#include "dminter/autodiff.hpp"
#include "dminter/hierarchy.hpp"
#include "dminter/reasoning.hpp"

namespace dminter {

inline constexpr double kDefaultBeta = 1e-4;

struct SampleWeights {
  double alpha_e = 1.0;  // error-propagation weight, in (0, 1]
  double alpha_v = 1.0;  // veracity-consistency weight, 0 or 1
  double alpha = 1.0;    // (alpha_e + alpha_v) / 2
};

struct LossBreakdown {
  double veracity_ce = 0.0;
  double decoder_ld = 0.0;
  double weighted_total = 0.0;
  double beta = 0.0;
  double alpha = 1.0;
};

/// Teacher-forced targets for a reasoning sequence: position j predicts token
/// j + 1, and the final position predicts EOS.
std::vector<TokenId> next_token_targets(std::span<const TokenId> sequence);

/// Token-averaged cross-entropy of `vocab_logits` [L, V] against `targets`
/// (length L). Targets are constants.
Var decoder_self_training_loss(const Var& vocab_logits, std::span<const TokenId> targets);

/// 1 / max(k, 1) where k counts positions at which `a` and `a_hat` differ:
/// the disagreement ratio T / sum ||a - a_hat||^2, guarded at k = 0 and
/// rescaled by 1/T into (0, 1].
double error_propagation_weight(std::span<const Answer> a, std::span<const Answer> a_hat);

/// Forward answers in trace order versus the reverse pass's answers.
double error_propagation_weight(const ReasoningTrace& forward, const AnswerMap& reversed);

/// 1 when no yes-answered intent carries a lean, or when any of them leans
/// toward `label`; 0 otherwise.
double veracity_consistency_weight(const ReasoningTrace& trace, Veracity label, const IntentHierarchy& h);

double sample_weight(double alpha_e, double alpha_v);

SampleWeights compute_sample_weights(const ReasoningTrace& forward, const AnswerMap& reversed, Veracity label,
                                     const IntentHierarchy& h);

/// alpha * (CE(veracity_logits, y) + beta * decoder_ld) as a graph node.
Var weighted_sample_loss(const Var& veracity_logits, Veracity label, const Var& decoder_ld, double alpha,
                         double beta);

/// Scalar form of the same combination with its parts.
LossBreakdown total_loss(const Tensor& veracity_logits, Veracity label, double decoder_ld, double alpha, double beta);

}  // namespace dminter
