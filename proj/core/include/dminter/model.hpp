#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dminter/autodiff.hpp"
#include "dminter/vocabulary.hpp"

namespace dminter {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_heads_model = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 128;
  std::size_t max_len = 256;
  static constexpr std::size_t kFusionHeads = 2;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  std::size_t head_dim() const { return d_model / n_heads_model; }
  std::size_t fusion_head_dim() const { return d_model / kFusionHeads; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerNormParams {
  Var gain;
  Var bias;
};

/// One projection matrix per head for queries, keys and values, plus the
/// output projection applied to the concatenated heads.
struct AttentionParams {
  std::vector<Var> query;
  std::vector<Var> key;
  std::vector<Var> value;
  Var output;
};

struct FeedForwardParams {
  Var w1, b1, w2, b2;
};

struct EncoderLayerParams {
  LayerNormParams norm_attn;
  AttentionParams self_attn;
  LayerNormParams norm_ffn;
  FeedForwardParams ffn;
};

struct DecoderLayerParams {
  LayerNormParams norm_self;
  AttentionParams self_attn;
  LayerNormParams norm_cross;
  AttentionParams cross_attn;
  LayerNormParams norm_ffn;
  FeedForwardParams ffn;
};

struct EncoderParams {
  Var token_embedding;
  Var position_embedding;
  std::vector<EncoderLayerParams> layers;
  LayerNormParams final_norm;
};

struct DecoderParams {
  Var token_embedding;
  Var position_embedding;
  std::vector<DecoderLayerParams> layers;
  LayerNormParams final_norm;
  Var vocab_head;  // [d_model, vocab_size]
};

struct FusionParams {
  AttentionParams attn;  // kFusionHeads heads
};

struct ClassifierParams {
  Var w1, b1, w2, b2;
};

enum class ParamGroup { kEncoder, kDecoder, kFusion, kClassifier };

struct NamedParam {
  std::string name;
  ParamGroup group;
  /// Index of the transformer block the tensor belongs to, or -1.
  int layer;
  Var var;
};

struct ModelParams {
  ModelConfig config;
  EncoderParams encoder;
  DecoderParams decoder;
  FusionParams fusion;
  ClassifierParams classifier;

  /// Every parameter tensor in a fixed, name-stable order.
  std::vector<NamedParam> named() const;
  /// Deep copy with fresh graph leaves.
  ModelParams clone() const;
};

/// Number of scalar parameters implied by `config`.
std::size_t parameter_count(const ModelConfig& config);

/// Glorot-uniform weights, zero biases, unit layer-norm gains.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

enum class EmbeddingRole { kEncoder, kDecoder };

struct TokenEmbeddings {
  Var matrix;  // [sequence length, d_model]
  EmbeddingRole role;
  std::size_t rows() const { return matrix.shape()[0]; }
};

/// Encoder stack over article tokens; output h^e of shape [length, d_model].
TokenEmbeddings encode(const ModelParams& params, std::span<const TokenId> token_ids);

struct DecodeResult {
  TokenEmbeddings hidden;  // h^d, [prefix length, d_model]
  Var vocab_logits;        // [prefix length, vocab_size]
};

/// Causal decoder over `prefix` (which must start with BOS) attending to h^e.
DecodeResult decode_step(const ModelParams& params, const TokenEmbeddings& h_e,
                         std::span<const TokenId> prefix);

/// Decoder hidden states only; logits can be formed later for selected rows.
TokenEmbeddings decode_hidden(const ModelParams& params, const TokenEmbeddings& h_e,
                              std::span<const TokenId> prefix);

/// hidden x W_D.
Var vocab_logits(const ModelParams& params, const Var& hidden);

/// Gradient-free decoder that consumes a sequence a block at a time, caching
/// self-attention keys/values. Rows it produces are bit-identical to the
/// matching rows of decode_step over the whole sequence.
class IncrementalDecoder {
 public:
  IncrementalDecoder(const ModelParams& params, const Tensor& h_e);

  /// Appends `tokens` and returns their hidden rows [tokens.size(), d_model].
  Tensor extend(std::span<const TokenId> tokens);
  /// Vocabulary logits for one hidden row.
  Tensor logits_for_row(const Tensor& hidden, std::size_t row) const;

  std::size_t length() const { return length_; }
  /// Hidden rows of every token consumed so far.
  Tensor hidden_states() const;

 private:
  const ModelParams* params_;
  std::vector<std::vector<Var>> cross_keys_;    // [layer][head]
  std::vector<std::vector<Var>> cross_values_;  // [layer][head]
  std::vector<std::vector<Var>> self_keys_;
  std::vector<std::vector<Var>> self_values_;
  std::vector<Tensor> hidden_blocks_;
  std::size_t length_ = 0;
};

struct FuseResult {
  Var representation;                       // e, [1, d_model]
  std::vector<Tensor> attention_weights;    // per head, [1, tokens]
};

/// Confidence-guided attention: query c * intent_feature W_Q over keys/values
/// projected from h^e; heads concatenated and output-projected.
FuseResult fuse(const ModelParams& params, const TokenEmbeddings& h_e, const Var& intent_feature,
                const Var& confidence);
FuseResult fuse(const ModelParams& params, const TokenEmbeddings& h_e, const Var& intent_feature,
                double confidence);

/// Linear -> ReLU -> Linear; index 0 = real, index 1 = fake. Shape [1, 2].
Var classify(const ModelParams& params, const Var& representation);

}  // namespace dminter
