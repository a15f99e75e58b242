#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dminter/dataset.hpp"
#include "dminter/hierarchy.hpp"
#include "dminter/metrics.hpp"
#include "dminter/model.hpp"
#include "dminter/objectives.hpp"
#include "dminter/reasoning.hpp"
#include "dminter/vocabulary.hpp"

namespace dminter {

struct AblationFlags {
  bool no_ld = false;
  bool flat_hierarchy = false;
  bool direct_query = false;
  bool no_weights = false;

  /// Comma-separated flag names, e.g. "no_ld,no_weights". Empty means none.
  static AblationFlags parse(std::string_view list);
  std::vector<std::string> names() const;
  ReasoningMode reasoning_mode() const;

  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct TrainingConfig {
  double learning_rate = 7e-5;
  std::size_t batch_size = 64;
  double beta = kDefaultBeta;
  std::size_t patience_epochs = 10;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 0;
  AblationFlags ablation;
  /// vocab_size is filled in from the built vocabulary.
  ModelConfig model;
  std::size_t max_vocab = 8000;
  std::size_t max_article_tokens = 256;
  /// Empty selects the built-in hierarchy.
  std::string hierarchy_path;
  std::string train_path;
  std::string validation_path;
  std::string test_path;
  /// Train only the last encoder and decoder block (plus the heads).
  bool freeze_lower_layers = false;
  /// Global gradient-norm cap; 0 disables clipping.
  double grad_clip = 0.0;
  std::size_t eval_threads = 1;
  Averaging averaging = Averaging::kMacro;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  double effective_beta() const { return ablation.no_ld ? 0.0 : beta; }

  static TrainingConfig from_json(const nlohmann::json& doc);
  static TrainingConfig load(const std::string& path);
  nlohmann::json to_json() const;
};

/// Everything needed to run the trained pipeline on new text.
struct Checkpoint {
  TrainingConfig config;
  Vocabulary vocab;
  IntentHierarchy hierarchy = default_hierarchy();
  ModelParams params;
  double best_val_macro_f1 = 0.0;
  std::size_t epoch = 0;

  QueryTable query_table() const;
  /// FNV-1a over the configuration, vocabulary and hierarchy.
  std::uint64_t config_digest() const;
};

/// One article prepared for the pipeline.
struct EncodedSample {
  std::string id;
  std::vector<TokenId> tokens;
  Veracity label = Veracity::kReal;
};

std::vector<EncodedSample> encode_articles(std::span<const Article> articles, const Vocabulary& vocab,
                                           std::size_t max_tokens);

struct SampleOutcome {
  Var loss;
  LossBreakdown breakdown;
  SampleWeights weights;
  ReasoningTrace trace;
};

/// encode -> reason -> intent feature -> reverse reason -> weights -> fuse ->
/// classify -> weighted loss, recorded for backpropagation.
SampleOutcome sample_loss(const ModelParams& params, const QueryTable& table, const EncodedSample& sample,
                          const TrainingConfig& config);

/// Runs reasoning and the reverse pass without gradient and computes the
/// sample weights. `loss` is left empty.
SampleOutcome reason_sample(const ModelParams& params, const QueryTable& table, const EncodedSample& sample,
                            const TrainingConfig& config);

/// Differentiable part of sample_loss with the trace and weights held fixed.
Var sample_loss_given(const ModelParams& params, const EncodedSample& sample, const TrainingConfig& config,
                      SampleOutcome& outcome);

/// Mean of sample_loss over `batch`, shape {1}.
Var batch_loss(const ModelParams& params, const QueryTable& table, std::span<const EncodedSample> batch,
               const TrainingConfig& config, std::vector<SampleOutcome>* outcomes = nullptr);

struct Prediction {
  ReasoningTrace trace;
  Tensor veracity_logits;  // [1, 2]
  double fake_probability = 0.0;
  Veracity label = Veracity::kReal;
};

/// Gradient-free greedy reasoning and classification.
Prediction predict(const ModelParams& params, const QueryTable& table, std::span<const TokenId> tokens);
Prediction predict(const Checkpoint& ckpt, std::string_view text);

/// Adaptive first/second-moment optimizer.
class Adam {
 public:
  Adam(std::vector<NamedParam> params, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8);
  /// `grads` is aligned with the parameter list given at construction.
  void step(const std::vector<Tensor>& grads);
  /// Tensors the optimizer skips.
  void freeze(const std::function<bool(const NamedParam&)>& predicate);
  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<NamedParam> params_;
  std::vector<Tensor> m_, v_;
  std::vector<bool> frozen_;
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

std::vector<Tensor> gradients_for(const Gradients& grads, std::span<const NamedParam> params);

/// Scales every gradient so the global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_gradients(std::vector<Tensor>& grads, double max_norm);

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double val_macro_f1 = 0.0;
  double seconds = 0.0;
};

struct TrainingLog {
  std::vector<double> step_losses;
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;

  friend bool operator==(const TrainingLog& a, const TrainingLog& b) {
    return a.step_losses == b.step_losses && a.best_epoch == b.best_epoch;
  }
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainingLog log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Builds the vocabulary from the training split and runs the training loop.
TrainResult train(const TrainingConfig& config, const DatasetSplits& data, const EpochCallback& on_epoch = {});
/// Reads data and hierarchy from the paths in `config`.
TrainResult train(const TrainingConfig& config, const EpochCallback& on_epoch = {});

/// Metrics over `articles`; errors on an empty split or an inconsistent
/// checkpoint.
MetricsReport evaluate(const Checkpoint& ckpt, std::span<const Article> articles,
                       std::vector<Prediction>* predictions = nullptr);

/// Human-readable trace, one line per step, then the prediction.
std::string format_reasoning(const Checkpoint& ckpt, const Prediction& prediction);

}  // namespace dminter
