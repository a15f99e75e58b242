#include "dminter/model.hpp"

#include <cmath>
#include <limits>
#include <optional>

#include "dminter/error.hpp"
#include "dminter/random.hpp"

namespace dminter {

namespace {

constexpr double kMasked = -1e30;

template <typename Params, typename Fn>
void visit_params(Params& p, Fn&& fn) {
  auto norm = [&](auto& ln, const std::string& name, ParamGroup g, int layer) {
    fn(name + ".gain", g, layer, ln.gain);
    fn(name + ".bias", g, layer, ln.bias);
  };
  auto attn = [&](auto& a, const std::string& name, ParamGroup g, int layer) {
    for (std::size_t h = 0; h < a.query.size(); ++h) {
      fn(name + ".query." + std::to_string(h), g, layer, a.query[h]);
      fn(name + ".key." + std::to_string(h), g, layer, a.key[h]);
      fn(name + ".value." + std::to_string(h), g, layer, a.value[h]);
    }
    fn(name + ".output", g, layer, a.output);
  };
  auto ffn = [&](auto& f, const std::string& name, ParamGroup g, int layer) {
    fn(name + ".w1", g, layer, f.w1);
    fn(name + ".b1", g, layer, f.b1);
    fn(name + ".w2", g, layer, f.w2);
    fn(name + ".b2", g, layer, f.b2);
  };

  const auto enc = ParamGroup::kEncoder;
  fn(std::string("encoder.token_embedding"), enc, -1, p.encoder.token_embedding);
  fn(std::string("encoder.position_embedding"), enc, -1, p.encoder.position_embedding);
  for (std::size_t i = 0; i < p.encoder.layers.size(); ++i) {
    auto& layer = p.encoder.layers[i];
    const std::string base = "encoder.layers." + std::to_string(i);
    const int li = static_cast<int>(i);
    norm(layer.norm_attn, base + ".norm_attn", enc, li);
    attn(layer.self_attn, base + ".self_attn", enc, li);
    norm(layer.norm_ffn, base + ".norm_ffn", enc, li);
    ffn(layer.ffn, base + ".ffn", enc, li);
  }
  norm(p.encoder.final_norm, "encoder.final_norm", enc, -1);

  const auto dec = ParamGroup::kDecoder;
  fn(std::string("decoder.token_embedding"), dec, -1, p.decoder.token_embedding);
  fn(std::string("decoder.position_embedding"), dec, -1, p.decoder.position_embedding);
  for (std::size_t i = 0; i < p.decoder.layers.size(); ++i) {
    auto& layer = p.decoder.layers[i];
    const std::string base = "decoder.layers." + std::to_string(i);
    const int li = static_cast<int>(i);
    norm(layer.norm_self, base + ".norm_self", dec, li);
    attn(layer.self_attn, base + ".self_attn", dec, li);
    norm(layer.norm_cross, base + ".norm_cross", dec, li);
    attn(layer.cross_attn, base + ".cross_attn", dec, li);
    norm(layer.norm_ffn, base + ".norm_ffn", dec, li);
    ffn(layer.ffn, base + ".ffn", dec, li);
  }
  norm(p.decoder.final_norm, "decoder.final_norm", dec, -1);
  fn(std::string("decoder.vocab_head"), dec, -1, p.decoder.vocab_head);

  attn(p.fusion.attn, "fusion.attn", ParamGroup::kFusion, -1);

  const auto cls = ParamGroup::kClassifier;
  fn(std::string("classifier.w1"), cls, -1, p.classifier.w1);
  fn(std::string("classifier.b1"), cls, -1, p.classifier.b1);
  fn(std::string("classifier.w2"), cls, -1, p.classifier.w2);
  fn(std::string("classifier.b2"), cls, -1, p.classifier.b2);
}

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Var weight(std::size_t fan_in, std::size_t fan_out) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t({fan_in, fan_out}, 0.0);
    for (auto& v : t.mutable_values()) v = rng_.uniform(-s, s);
    return Var::parameter(std::move(t));
  }
  static Var zeros(std::size_t n) { return Var::parameter(Tensor({n}, 0.0)); }
  static Var ones(std::size_t n) { return Var::parameter(Tensor({n}, 1.0)); }

  LayerNormParams norm(std::size_t d) { return {ones(d), zeros(d)}; }

  AttentionParams attention(std::size_t d, std::size_t heads) {
    AttentionParams a;
    const std::size_t dh = d / heads;
    for (std::size_t h = 0; h < heads; ++h) {
      a.query.push_back(weight(d, dh));
      a.key.push_back(weight(d, dh));
      a.value.push_back(weight(d, dh));
    }
    a.output = weight(d, d);
    return a;
  }

  FeedForwardParams feed_forward(std::size_t d, std::size_t ff) {
    FeedForwardParams f;
    f.w1 = weight(d, ff);
    f.b1 = zeros(ff);
    f.w2 = weight(ff, d);
    f.b2 = zeros(d);
    return f;
  }

 private:
  Rng rng_;
};

Var position_rows(const Var& table, std::size_t start, std::size_t count) {
  std::vector<std::size_t> positions(count);
  for (std::size_t i = 0; i < count; ++i) positions[i] = start + i;
  return ops::embedding(table, positions);
}

void check_ids(const ModelConfig& config, std::span<const TokenId> ids, const char* what) {
  for (auto id : ids) {
    if (id >= config.vocab_size) {
      throw ConfigError(std::string(what) + ": token id " + std::to_string(id) + " out of range (vocab_size " +
                        std::to_string(config.vocab_size) + ")");
    }
  }
}

Var attend(const Var& q, const Var& k, const Var& v, double scale, const Var* mask, Tensor* weights_out) {
  Var scores = ops::scale(ops::matmul(q, k, /*transpose_b=*/true), scale);
  if (mask) scores = ops::add(scores, *mask);
  Var p = ops::softmax(scores, 1);
  if (weights_out) *weights_out = p.value();
  return ops::matmul(p, v);
}

void project_heads(const std::vector<Var>& weights, const Var& x, std::vector<Var>& out) {
  out.clear();
  for (const auto& w : weights) out.push_back(ops::matmul(x, w));
}

Var combine_heads(const AttentionParams& a, std::vector<Var>& heads) {
  return ops::matmul(ops::concat(heads, 1), a.output);
}

Var feed_forward(const FeedForwardParams& f, const Var& x) {
  Var hidden = ops::relu(ops::add(ops::matmul(x, f.w1), f.b1));
  return ops::add(ops::matmul(hidden, f.w2), f.b2);
}

/// Causal mask for a block of `count` new rows starting at `start`, over
/// start + count keys. Returns nullopt when nothing is masked.
std::optional<Var> causal_mask(std::size_t start, std::size_t count) {
  if (count <= 1) return std::nullopt;
  const std::size_t keys = start + count;
  Tensor m({count, keys}, 0.0);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = start + i + 1; j < keys; ++j) m[i * keys + j] = kMasked;
  }
  return Var::constant(std::move(m));
}

struct CrossMemory {
  std::vector<std::vector<Var>> keys;    // [layer][head]
  std::vector<std::vector<Var>> values;  // [layer][head]
};

CrossMemory cross_memory(const ModelParams& p, const Var& h_e) {
  CrossMemory mem;
  for (const auto& layer : p.decoder.layers) {
    std::vector<Var> k, v;
    project_heads(layer.cross_attn.key, h_e, k);
    project_heads(layer.cross_attn.value, h_e, v);
    mem.keys.push_back(std::move(k));
    mem.values.push_back(std::move(v));
  }
  return mem;
}

/// Runs the decoder over `tokens` placed at positions start.. . When
/// `self_keys`/`self_values` are provided they hold earlier positions and are
/// extended in place.
Var run_decoder(const ModelParams& p, const CrossMemory& mem, std::span<const TokenId> tokens, std::size_t start,
                std::vector<std::vector<Var>>* self_keys, std::vector<std::vector<Var>>* self_values) {
  const std::size_t n = tokens.size();
  const std::size_t heads = p.config.n_heads_model;
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.config.head_dim()));
  Var x = ops::add(ops::embedding(p.decoder.token_embedding, tokens),
                   position_rows(p.decoder.position_embedding, start, n));
  const auto mask = causal_mask(start, n);
  std::vector<Var> q, k, v, heads_out;
  for (std::size_t l = 0; l < p.decoder.layers.size(); ++l) {
    const auto& layer = p.decoder.layers[l];
    {
      Var normed = ops::layer_norm(x, layer.norm_self.gain, layer.norm_self.bias);
      project_heads(layer.self_attn.query, normed, q);
      project_heads(layer.self_attn.key, normed, k);
      project_heads(layer.self_attn.value, normed, v);
      heads_out.clear();
      for (std::size_t h = 0; h < heads; ++h) {
        Var keys = k[h];
        Var values = v[h];
        if (self_keys && start > 0) {
          const Var kparts[] = {(*self_keys)[l][h], k[h]};
          const Var vparts[] = {(*self_values)[l][h], v[h]};
          keys = ops::concat(kparts, 0);
          values = ops::concat(vparts, 0);
        }
        if (self_keys) {
          (*self_keys)[l][h] = keys;
          (*self_values)[l][h] = values;
        }
        heads_out.push_back(attend(q[h], keys, values, scale, mask ? &*mask : nullptr, nullptr));
      }
      x = ops::add(x, combine_heads(layer.self_attn, heads_out));
    }
    {
      Var normed = ops::layer_norm(x, layer.norm_cross.gain, layer.norm_cross.bias);
      project_heads(layer.cross_attn.query, normed, q);
      heads_out.clear();
      for (std::size_t h = 0; h < heads; ++h) {
        heads_out.push_back(attend(q[h], mem.keys[l][h], mem.values[l][h], scale, nullptr, nullptr));
      }
      x = ops::add(x, combine_heads(layer.cross_attn, heads_out));
    }
    {
      Var normed = ops::layer_norm(x, layer.norm_ffn.gain, layer.norm_ffn.bias);
      x = ops::add(x, feed_forward(layer.ffn, normed));
    }
  }
  return ops::layer_norm(x, p.decoder.final_norm.gain, p.decoder.final_norm.bias);
}

void check_prefix(const ModelParams& p, std::span<const TokenId> prefix) {
  if (prefix.empty()) throw ConfigError("decode_step: empty prefix");
  if (prefix.front() != reserved::kBos) throw ConfigError("decode_step: prefix must start with BOS");
  if (prefix.size() > p.config.max_len) {
    throw ConfigError("decode_step: prefix length " + std::to_string(prefix.size()) + " exceeds max_len " +
                      std::to_string(p.config.max_len));
  }
  check_ids(p.config, prefix, "decode_step");
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* field) {
    if (v == 0) throw ConfigError(std::string(field) + " must be positive");
  };
  positive(vocab_size, "vocab_size");
  positive(d_model, "d_model");
  positive(n_heads_model, "n_heads_model");
  positive(n_layers, "n_layers");
  positive(d_ff, "d_ff");
  positive(max_len, "max_len");
  if (d_model % n_heads_model != 0) {
    throw ConfigError("d_model not divisible by n_heads_model (" + std::to_string(d_model) + " % " +
                      std::to_string(n_heads_model) + ")");
  }
  if (d_model % kFusionHeads != 0) {
    throw ConfigError("d_model not divisible by fusion_heads (" + std::to_string(d_model) + " % 2)");
  }
  if (vocab_size < reserved::kCount + 2) {
    throw ConfigError("vocab_size must be at least " + std::to_string(reserved::kCount + 2));
  }
}

std::vector<NamedParam> ModelParams::named() const {
  std::vector<NamedParam> out;
  visit_params(*this, [&](const std::string& name, ParamGroup g, int layer, const Var& v) {
    out.push_back({name, g, layer, v});
  });
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams copy = *this;
  visit_params(copy, [](const std::string&, ParamGroup, int, Var& v) { v = Var::parameter(v.value()); });
  return copy;
}

std::size_t parameter_count(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.d_model, v = c.vocab_size, ff = c.d_ff, len = c.max_len;
  const std::size_t norm = 2 * d;
  const std::size_t attention = 4 * d * d;  // Q, K, V over all heads plus output
  const std::size_t ffn = d * ff + ff + ff * d + d;
  const std::size_t encoder = v * d + len * d + c.n_layers * (2 * norm + attention + ffn) + norm;
  const std::size_t decoder = v * d + len * d + c.n_layers * (3 * norm + 2 * attention + ffn) + norm + d * v;
  const std::size_t fusion = attention;
  const std::size_t classifier = d * d + d + d * 2 + 2;
  return encoder + decoder + fusion + classifier;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Initializer init(seed);
  const std::size_t d = config.d_model;
  ModelParams p;
  p.config = config;

  p.encoder.token_embedding = init.weight(config.vocab_size, d);
  p.encoder.position_embedding = init.weight(config.max_len, d);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    EncoderLayerParams layer;
    layer.norm_attn = init.norm(d);
    layer.self_attn = init.attention(d, config.n_heads_model);
    layer.norm_ffn = init.norm(d);
    layer.ffn = init.feed_forward(d, config.d_ff);
    p.encoder.layers.push_back(std::move(layer));
  }
  p.encoder.final_norm = init.norm(d);

  p.decoder.token_embedding = init.weight(config.vocab_size, d);
  p.decoder.position_embedding = init.weight(config.max_len, d);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    DecoderLayerParams layer;
    layer.norm_self = init.norm(d);
    layer.self_attn = init.attention(d, config.n_heads_model);
    layer.norm_cross = init.norm(d);
    layer.cross_attn = init.attention(d, config.n_heads_model);
    layer.norm_ffn = init.norm(d);
    layer.ffn = init.feed_forward(d, config.d_ff);
    p.decoder.layers.push_back(std::move(layer));
  }
  p.decoder.final_norm = init.norm(d);
  p.decoder.vocab_head = init.weight(d, config.vocab_size);

  p.fusion.attn = init.attention(d, ModelConfig::kFusionHeads);

  p.classifier.w1 = init.weight(d, d);
  p.classifier.b1 = Initializer::zeros(d);
  p.classifier.w2 = init.weight(d, 2);
  p.classifier.b2 = Initializer::zeros(2);
  return p;
}

TokenEmbeddings encode(const ModelParams& p, std::span<const TokenId> token_ids) {
  if (token_ids.empty()) throw ConfigError("encode: empty input");
  if (token_ids.size() > p.config.max_len) {
    throw ConfigError("encode: input length " + std::to_string(token_ids.size()) + " exceeds max_len " +
                      std::to_string(p.config.max_len));
  }
  check_ids(p.config, token_ids, "encode");
  const std::size_t heads = p.config.n_heads_model;
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.config.head_dim()));
  Var x = ops::add(ops::embedding(p.encoder.token_embedding, token_ids),
                   position_rows(p.encoder.position_embedding, 0, token_ids.size()));
  std::vector<Var> q, k, v, heads_out;
  for (const auto& layer : p.encoder.layers) {
    Var normed = ops::layer_norm(x, layer.norm_attn.gain, layer.norm_attn.bias);
    project_heads(layer.self_attn.query, normed, q);
    project_heads(layer.self_attn.key, normed, k);
    project_heads(layer.self_attn.value, normed, v);
    heads_out.clear();
    for (std::size_t h = 0; h < heads; ++h) heads_out.push_back(attend(q[h], k[h], v[h], scale, nullptr, nullptr));
    x = ops::add(x, combine_heads(layer.self_attn, heads_out));
    normed = ops::layer_norm(x, layer.norm_ffn.gain, layer.norm_ffn.bias);
    x = ops::add(x, feed_forward(layer.ffn, normed));
  }
  x = ops::layer_norm(x, p.encoder.final_norm.gain, p.encoder.final_norm.bias);
  return {x, EmbeddingRole::kEncoder};
}

TokenEmbeddings decode_hidden(const ModelParams& p, const TokenEmbeddings& h_e, std::span<const TokenId> prefix) {
  check_prefix(p, prefix);
  const CrossMemory mem = cross_memory(p, h_e.matrix);
  return {run_decoder(p, mem, prefix, 0, nullptr, nullptr), EmbeddingRole::kDecoder};
}

Var vocab_logits(const ModelParams& p, const Var& hidden) { return ops::matmul(hidden, p.decoder.vocab_head); }

DecodeResult decode_step(const ModelParams& p, const TokenEmbeddings& h_e, std::span<const TokenId> prefix) {
  TokenEmbeddings hidden = decode_hidden(p, h_e, prefix);
  Var logits = vocab_logits(p, hidden.matrix);
  return {std::move(hidden), std::move(logits)};
}

IncrementalDecoder::IncrementalDecoder(const ModelParams& params, const Tensor& h_e) : params_(&params) {
  if (h_e.rank() != 2 || h_e.dim(1) != params.config.d_model) {
    throw ConfigError("IncrementalDecoder: encoder states must be [tokens, d_model]");
  }
  NoGradGuard no_grad;
  CrossMemory mem = cross_memory(params, Var::constant(h_e));
  cross_keys_ = std::move(mem.keys);
  cross_values_ = std::move(mem.values);
  const std::size_t layers = params.config.n_layers;
  self_keys_.assign(layers, std::vector<Var>(params.config.n_heads_model));
  self_values_.assign(layers, std::vector<Var>(params.config.n_heads_model));
}

Tensor IncrementalDecoder::extend(std::span<const TokenId> tokens) {
  if (tokens.empty()) throw ConfigError("IncrementalDecoder::extend: no tokens");
  if (length_ == 0 && tokens.front() != reserved::kBos) {
    throw ConfigError("decode_step: prefix must start with BOS");
  }
  if (length_ + tokens.size() > params_->config.max_len) {
    throw ConfigError("decode_step: prefix length " + std::to_string(length_ + tokens.size()) +
                      " exceeds max_len " + std::to_string(params_->config.max_len));
  }
  check_ids(params_->config, tokens, "decode_step");
  NoGradGuard no_grad;
  CrossMemory mem{cross_keys_, cross_values_};
  Var hidden = run_decoder(*params_, mem, tokens, length_, &self_keys_, &self_values_);
  length_ += tokens.size();
  hidden_blocks_.push_back(hidden.value());
  return hidden.value();
}

Tensor IncrementalDecoder::logits_for_row(const Tensor& hidden, std::size_t row) const {
  NoGradGuard no_grad;
  auto r = hidden.row_span(row);
  Var h = Var::constant(Tensor::row(std::vector<double>(r.begin(), r.end())));
  return vocab_logits(*params_, h).value();
}

Tensor IncrementalDecoder::hidden_states() const {
  if (hidden_blocks_.empty()) throw ConfigError("IncrementalDecoder: no tokens consumed");
  NoGradGuard no_grad;
  std::vector<Var> parts;
  for (const auto& b : hidden_blocks_) parts.push_back(Var::constant(b));
  return ops::concat(parts, 0).value();
}

FuseResult fuse(const ModelParams& p, const TokenEmbeddings& h_e, const Var& intent_feature, const Var& confidence) {
  if (h_e.matrix.shape().size() != 2 || h_e.rows() == 0) throw ConfigError("fuse: empty encoder states");
  const std::size_t d = p.config.d_model;
  if (intent_feature.value().size() != d) {
    throw ConfigError("fuse: intent feature must have length d_model = " + std::to_string(d));
  }
  const double c = confidence.value().item();
  if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("fuse: confidence must lie in [0, 1]");
  if (intent_feature.shape() != Shape{1, d}) {
    throw ConfigError("fuse: intent feature must have shape [1, d_model]");
  }
  const Var query_input = ops::mul(intent_feature, confidence);
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.config.fusion_head_dim()));
  const auto& a = p.fusion.attn;
  FuseResult result;
  std::vector<Var> heads;
  for (std::size_t h = 0; h < a.query.size(); ++h) {
    Var q = ops::matmul(query_input, a.query[h]);
    Var k = ops::matmul(h_e.matrix, a.key[h]);
    Var v = ops::matmul(h_e.matrix, a.value[h]);
    Tensor weights;
    heads.push_back(attend(q, k, v, scale, nullptr, &weights));
    result.attention_weights.push_back(std::move(weights));
  }
  result.representation = combine_heads(a, heads);
  return result;
}

FuseResult fuse(const ModelParams& p, const TokenEmbeddings& h_e, const Var& intent_feature, double confidence) {
  return fuse(p, h_e, intent_feature, Var::constant(Tensor::scalar(confidence)));
}

Var classify(const ModelParams& p, const Var& representation) {
  if (representation.value().size() != p.config.d_model) {
    throw ConfigError("classify: representation must have length d_model");
  }
  const auto& c = p.classifier;
  Var hidden = ops::relu(ops::add(ops::matmul(representation, c.w1), c.b1));
  return ops::add(ops::matmul(hidden, c.w2), c.b2);
}

}  // namespace dminter
