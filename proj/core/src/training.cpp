#include "dminter/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "dminter/error.hpp"
#include "dminter/random.hpp"

namespace dminter {

using nlohmann::json;

namespace {

constexpr const char* kFlagNames[] = {"no_ld", "flat_hierarchy", "direct_query", "no_weights"};

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": field \"" + key + "\" has the wrong type");
  }
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void check_sequence_budget(const QueryTable& table) {
  // Worst case: every query asked (flat order) plus the fallback sentence.
  std::size_t longest = 1;
  if (table.mode == ReasoningMode::kDirectQuery) {
    longest += table.direct_question_tokens.size() + kDirectAnswerTokens;
  } else {
    for (const auto& [id, tokens] : table.query_tokens) longest += tokens.size() + 1;
    longest += table.no_intent_tokens.size();
  }
  if (longest > table.max_len) {
    throw ConfigError("model.max_len " + std::to_string(table.max_len) + " is shorter than the longest reasoning sequence (" +
                      std::to_string(longest) + " tokens)");
  }
}

std::vector<Prediction> predict_all(const ModelParams& params, const QueryTable& table,
                                    std::span<const EncodedSample> samples, std::size_t threads) {
  std::vector<Prediction> out(samples.size());
  threads = std::max<std::size_t>(1, std::min(threads, samples.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < samples.size(); ++i) out[i] = predict(params, table, samples[i].tokens);
    return out;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (samples.size() + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        const std::size_t end = std::min(samples.size(), (t + 1) * chunk);
        for (std::size_t i = t * chunk; i < end; ++i) out[i] = predict(params, table, samples[i].tokens);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

MetricsReport metrics_for(std::span<const EncodedSample> samples, const std::vector<Prediction>& preds,
                          Averaging averaging) {
  std::vector<Veracity> labels, predicted;
  std::vector<double> probs;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    labels.push_back(samples[i].label);
    predicted.push_back(preds[i].label);
    probs.push_back(preds[i].fake_probability);
  }
  return compute_metrics(labels, predicted, probs, averaging);
}

}  // namespace

AblationFlags AblationFlags::parse(std::string_view list) {
  AblationFlags f;
  std::string item;
  std::istringstream in{std::string(list)};
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    if (item == "no_ld") f.no_ld = true;
    else if (item == "flat_hierarchy") f.flat_hierarchy = true;
    else if (item == "direct_query") f.direct_query = true;
    else if (item == "no_weights") f.no_weights = true;
    else throw ConfigError("unknown ablation flag \"" + item + "\"");
  }
  return f;
}

std::vector<std::string> AblationFlags::names() const {
  std::vector<std::string> out;
  const bool set[] = {no_ld, flat_hierarchy, direct_query, no_weights};
  for (std::size_t i = 0; i < 4; ++i) {
    if (set[i]) out.emplace_back(kFlagNames[i]);
  }
  return out;
}

ReasoningMode AblationFlags::reasoning_mode() const {
  if (direct_query) return ReasoningMode::kDirectQuery;
  if (flat_hierarchy) return ReasoningMode::kFlat;
  return ReasoningMode::kHierarchical;
}

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be non-negative");
  if (patience_epochs < 1) throw ConfigError("patience_epochs must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (ablation.direct_query && ablation.flat_hierarchy) {
    throw ConfigError("ablation flags direct_query and flat_hierarchy are mutually exclusive");
  }
  if (max_article_tokens < 1) throw ConfigError("max_article_tokens must be at least 1");
  if (max_article_tokens > model.max_len) throw ConfigError("max_article_tokens exceeds model.max_len");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be non-negative");
  if (eval_threads < 1) throw ConfigError("eval_threads must be at least 1");
  ModelConfig probe = model;
  if (probe.vocab_size == 0) probe.vocab_size = max_vocab;
  probe.validate();
}

TrainingConfig TrainingConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("training config must be a JSON object");
  const std::string where = "training config";
  reject_unknown_keys(doc,
                      {"learning_rate", "batch_size", "beta", "patience_epochs", "max_epochs", "seed", "ablation",
                       "model", "max_vocab", "max_article_tokens", "hierarchy_path", "data", "freeze_lower_layers",
                       "grad_clip", "eval_threads", "averaging"},
                      where);
  TrainingConfig c;
  read_field(doc, "learning_rate", c.learning_rate, where);
  read_field(doc, "batch_size", c.batch_size, where);
  read_field(doc, "beta", c.beta, where);
  read_field(doc, "patience_epochs", c.patience_epochs, where);
  read_field(doc, "max_epochs", c.max_epochs, where);
  read_field(doc, "seed", c.seed, where);
  read_field(doc, "max_vocab", c.max_vocab, where);
  read_field(doc, "max_article_tokens", c.max_article_tokens, where);
  read_field(doc, "hierarchy_path", c.hierarchy_path, where);
  read_field(doc, "freeze_lower_layers", c.freeze_lower_layers, where);
  read_field(doc, "grad_clip", c.grad_clip, where);
  read_field(doc, "eval_threads", c.eval_threads, where);
  if (doc.contains("ablation")) {
    const auto& a = doc["ablation"];
    if (a.is_string()) {
      c.ablation = AblationFlags::parse(a.get<std::string>());
    } else if (a.is_array()) {
      std::string joined;
      for (const auto& f : a) {
        if (!f.is_string()) throw ConfigError(where + ": ablation entries must be strings");
        joined += f.get<std::string>() + ",";
      }
      c.ablation = AblationFlags::parse(joined);
    } else {
      throw ConfigError(where + ": ablation must be a list of flag names");
    }
  }
  if (doc.contains("averaging")) {
    const std::string avg = doc["averaging"].is_string() ? doc["averaging"].get<std::string>() : "";
    if (avg == "macro") c.averaging = Averaging::kMacro;
    else if (avg == "fake") c.averaging = Averaging::kFakeClass;
    else throw ConfigError(where + ": averaging must be \"macro\" or \"fake\"");
  }
  if (doc.contains("model")) {
    const auto& m = doc["model"];
    if (!m.is_object()) throw ConfigError(where + ": model must be an object");
    const std::string mw = "training config model";
    reject_unknown_keys(m, {"vocab_size", "d_model", "n_heads", "n_layers", "d_ff", "max_len"}, mw);
    read_field(m, "vocab_size", c.model.vocab_size, mw);
    read_field(m, "d_model", c.model.d_model, mw);
    read_field(m, "n_heads", c.model.n_heads_model, mw);
    read_field(m, "n_layers", c.model.n_layers, mw);
    read_field(m, "d_ff", c.model.d_ff, mw);
    read_field(m, "max_len", c.model.max_len, mw);
  }
  if (doc.contains("data")) {
    const auto& d = doc["data"];
    if (!d.is_object()) throw ConfigError(where + ": data must be an object");
    reject_unknown_keys(d, {"train", "validation", "test"}, "training config data");
    read_field(d, "train", c.train_path, where);
    read_field(d, "validation", c.validation_path, where);
    read_field(d, "test", c.test_path, where);
  }
  return c;
}

TrainingConfig TrainingConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' does not parse: " + e.what());
  }
  TrainingConfig c = from_json(doc);
  // Relative paths in a config file resolve against the file's directory.
  const auto dir = path.find_last_of('/') == std::string::npos ? std::string() : path.substr(0, path.find_last_of('/') + 1);
  for (std::string* p : {&c.train_path, &c.validation_path, &c.test_path, &c.hierarchy_path}) {
    if (!p->empty() && p->front() != '/') *p = dir + *p;
  }
  return c;
}

json TrainingConfig::to_json() const {
  return {
      {"learning_rate", learning_rate},
      {"batch_size", batch_size},
      {"beta", beta},
      {"patience_epochs", patience_epochs},
      {"max_epochs", max_epochs},
      {"seed", seed},
      {"ablation", ablation.names()},
      {"model",
       {{"vocab_size", model.vocab_size},
        {"d_model", model.d_model},
        {"n_heads", model.n_heads_model},
        {"n_layers", model.n_layers},
        {"d_ff", model.d_ff},
        {"max_len", model.max_len}}},
      {"max_vocab", max_vocab},
      {"max_article_tokens", max_article_tokens},
      {"hierarchy_path", hierarchy_path},
      {"data", {{"train", train_path}, {"validation", validation_path}, {"test", test_path}}},
      {"freeze_lower_layers", freeze_lower_layers},
      {"grad_clip", grad_clip},
      {"eval_threads", eval_threads},
      {"averaging", averaging == Averaging::kMacro ? "macro" : "fake"},
  };
}

QueryTable Checkpoint::query_table() const {
  return QueryTable::build(hierarchy, vocab, config.ablation.reasoning_mode(), config.model.max_len);
}

std::uint64_t Checkpoint::config_digest() const {
  std::uint64_t h = fnv1a(config.to_json().dump());
  for (const auto& t : vocab.tokens()) {
    h = fnv1a(t, h);
    h = fnv1a(std::string_view("\n", 1), h);
  }
  return fnv1a(serialize_hierarchy(hierarchy), h);
}

std::vector<EncodedSample> encode_articles(std::span<const Article> articles, const Vocabulary& vocab,
                                           std::size_t max_tokens) {
  std::vector<EncodedSample> out;
  out.reserve(articles.size());
  for (const auto& a : articles) out.push_back({a.id, vocab.tokenize(a.text, max_tokens), a.label});
  return out;
}

SampleOutcome reason_sample(const ModelParams& params, const QueryTable& table, const EncodedSample& sample,
                            const TrainingConfig& config) {
  NoGradGuard no_grad;
  SampleOutcome out;
  const Tensor h_e = encode(params, sample.tokens).matrix.value();
  out.trace = reason(params, table, h_e);
  if (config.ablation.no_weights) {
    out.weights = {1.0, 1.0, 1.0};
  } else {
    AnswerMap reversed;
    if (!out.trace.steps.empty()) reversed = reverse_reason(params, table, h_e, out.trace);
    out.weights = compute_sample_weights(out.trace, reversed, sample.label, table.hierarchy);
  }
  return out;
}

Var sample_loss_given(const ModelParams& params, const EncodedSample& sample, const TrainingConfig& config,
                      SampleOutcome& out) {
  const TokenEmbeddings h_e = encode(params, sample.tokens);
  const TokenEmbeddings h_d = decode_hidden(params, h_e, out.trace.sequence_tokens);
  const Var feature = intent_feature(h_d.matrix);
  const Var confidence = trace_confidence(params, h_d.matrix, out.trace);
  const FuseResult fused = fuse(params, h_e, feature, confidence);
  const Var logits = classify(params, fused.representation);

  const double beta = config.effective_beta();
  Var ld = Var::constant(Tensor::scalar(0.0));
  if (beta != 0.0) {
    ld = decoder_self_training_loss(vocab_logits(params, h_d.matrix), next_token_targets(out.trace.sequence_tokens));
  }
  out.loss = weighted_sample_loss(logits, sample.label, ld, out.weights.alpha, beta);
  out.breakdown = total_loss(logits.value(), sample.label, ld.value().item(), out.weights.alpha, beta);
  return out.loss;
}

SampleOutcome sample_loss(const ModelParams& params, const QueryTable& table, const EncodedSample& sample,
                          const TrainingConfig& config) {
  SampleOutcome out = reason_sample(params, table, sample, config);
  sample_loss_given(params, sample, config, out);
  return out;
}

Var batch_loss(const ModelParams& params, const QueryTable& table, std::span<const EncodedSample> batch,
               const TrainingConfig& config, std::vector<SampleOutcome>* outcomes) {
  if (batch.empty()) throw ConfigError("batch_loss: empty batch");
  Var total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    SampleOutcome s = sample_loss(params, table, batch[i], config);
    total = i == 0 ? s.loss : ops::add(total, s.loss);
    if (outcomes) outcomes->push_back(std::move(s));
  }
  return ops::scale(total, 1.0 / static_cast<double>(batch.size()));
}

Prediction predict(const ModelParams& params, const QueryTable& table, std::span<const TokenId> tokens) {
  NoGradGuard no_grad;
  Prediction p;
  const TokenEmbeddings h_e = encode(params, tokens);
  p.trace = reason(params, table, h_e.matrix.value());
  const Var feature = Var::constant(intent_feature(p.trace));
  const FuseResult fused = fuse(params, h_e, feature, p.trace.mean_confidence);
  p.veracity_logits = classify(params, fused.representation).value();
  const Tensor probs = softmax(p.veracity_logits, 1);
  p.fake_probability = probs[1];
  p.label = p.veracity_logits[1] > p.veracity_logits[0] ? Veracity::kFake : Veracity::kReal;
  return p;
}

Prediction predict(const Checkpoint& ckpt, std::string_view text) {
  return predict(ckpt.params, ckpt.query_table(), ckpt.vocab.tokenize(text, ckpt.config.max_article_tokens));
}

Adam::Adam(std::vector<NamedParam> params, double learning_rate, double beta1, double beta2, double epsilon)
    : params_(std::move(params)), frozen_(params_.size(), false), lr_(learning_rate), b1_(beta1), b2_(beta2),
      eps_(epsilon) {
  for (const auto& p : params_) {
    m_.emplace_back(p.var.shape(), 0.0);
    v_.emplace_back(p.var.shape(), 0.0);
  }
}

void Adam::freeze(const std::function<bool(const NamedParam&)>& predicate) {
  for (std::size_t i = 0; i < params_.size(); ++i) frozen_[i] = frozen_[i] || predicate(params_[i]);
}

void Adam::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size()) throw ConfigError("Adam::step: gradient count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (frozen_[i]) continue;
    auto w = params_[i].var.mutable_leaf_value().mutable_values();
    auto m = m_[i].mutable_values();
    auto v = v_[i].mutable_values();
    const auto g = grads[i].values();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1_ * m[j] + (1.0 - b1_) * g[j];
      v[j] = b2_ * v[j] + (1.0 - b2_) * g[j] * g[j];
      w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

std::vector<Tensor> gradients_for(const Gradients& grads, std::span<const NamedParam> params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(grads.of(p.var));
  return out;
}

double clip_gradients(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double x : g.values()) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) {
      for (double& x : g.mutable_values()) x *= s;
    }
  }
  return norm;
}

TrainResult train(const TrainingConfig& config_in, const DatasetSplits& data, const EpochCallback& on_epoch) {
  config_in.validate();
  data.check_unique_ids();
  if (data.train.empty()) throw DataError("training split is empty");
  if (data.validation.empty()) throw DataError("validation split is empty");

  TrainResult result;
  Checkpoint& best = result.checkpoint;
  best.hierarchy = config_in.hierarchy_path.empty() ? default_hierarchy() : load_hierarchy_file(config_in.hierarchy_path);
  best.vocab = build_vocab(data.train, config_in.max_vocab, QueryTable::prompt_texts(best.hierarchy));
  best.config = config_in;
  best.config.model.vocab_size = best.vocab.size();
  best.config.model.validate();
  const TrainingConfig& config = best.config;

  const QueryTable table = best.query_table();
  check_sequence_budget(table);
  const auto train_samples = encode_articles(data.train, best.vocab, config.max_article_tokens);
  const auto val_samples = encode_articles(data.validation, best.vocab, config.max_article_tokens);

  ModelParams params = init_params(config.model, Rng::mix(config.seed, 0x6d6f64656cULL));
  const auto named = params.named();
  Adam optimizer(named, config.learning_rate);
  if (config.freeze_lower_layers) {
    const int last = static_cast<int>(config.model.n_layers) - 1;
    optimizer.freeze([&](const NamedParam& p) {
      const bool backbone = p.group == ParamGroup::kEncoder || p.group == ParamGroup::kDecoder;
      const bool embedding = p.name.find("embedding") != std::string::npos;
      return backbone && (embedding || (p.layer >= 0 && p.layer < last));
    });
  }

  double best_f1 = -1.0;
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_samples.size());
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(Rng::mix(config.seed, epoch + 1));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t n_steps = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      std::vector<EncodedSample> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + config.batch_size); ++i) {
        batch.push_back(train_samples[order[i]]);
      }
      const Var loss = batch_loss(params, table, batch, config);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(n_steps) +
                           " (first article " + batch.front().id + ")");
      }
      std::vector<Tensor> grads = gradients_for(backward_sweep(loss), named);
      if (config.grad_clip > 0.0) clip_gradients(grads, config.grad_clip);
      optimizer.step(grads);
      result.log.step_losses.push_back(value);
      loss_sum += value;
      ++n_steps;
    }

    const auto preds = predict_all(params, table, val_samples, config.eval_threads);
    const double f1 = metrics_for(val_samples, preds, config.averaging).macro_f1;
    EpochLog entry{epoch, loss_sum / static_cast<double>(n_steps), f1,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
    result.log.epochs.push_back(entry);
    if (on_epoch) on_epoch(entry);

    if (f1 > best_f1) {
      best_f1 = f1;
      since_best = 0;
      best.params = params.clone();
      best.best_val_macro_f1 = f1;
      best.epoch = epoch;
      result.log.best_epoch = epoch;
    } else if (++since_best >= config.patience_epochs) {
      break;
    }
  }
  return result;
}

TrainResult train(const TrainingConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (config.train_path.empty() || config.validation_path.empty()) {
    throw ConfigError("training config needs data.train and data.validation paths");
  }
  DatasetSplits data;
  data.train = load_jsonl(config.train_path).articles;
  data.validation = load_jsonl(config.validation_path).articles;
  return train(config, data, on_epoch);
}

MetricsReport evaluate(const Checkpoint& ckpt, std::span<const Article> articles, std::vector<Prediction>* predictions) {
  if (articles.empty()) throw DataError("evaluate: empty split");
  if (ckpt.vocab.size() != ckpt.config.model.vocab_size || !(ckpt.params.config == ckpt.config.model)) {
    throw DataError("evaluate: checkpoint vocabulary or model configuration mismatch");
  }
  const QueryTable table = ckpt.query_table();
  const auto samples = encode_articles(articles, ckpt.vocab, ckpt.config.max_article_tokens);
  auto preds = predict_all(ckpt.params, table, samples, ckpt.config.eval_threads);
  MetricsReport report = metrics_for(samples, preds, ckpt.config.averaging);
  if (predictions) *predictions = std::move(preds);
  return report;
}

std::string format_reasoning(const Checkpoint& ckpt, const Prediction& prediction) {
  std::string out;
  char conf[32];
  const auto& trace = prediction.trace;
  for (const auto& step : trace.steps) {
    std::snprintf(conf, sizeof conf, "%.3f", step.confidence);
    out += "[" + step.intent.name() + "] " + ckpt.hierarchy.query_text(step.intent) + " → " +
           std::string(to_string(step.answer)) + " (" + conf + ")\n";
  }
  if (trace.mode == ReasoningMode::kDirectQuery) {
    std::snprintf(conf, sizeof conf, "%.3f", trace.mean_confidence);
    out += "[Direct] " + std::string(kDirectQuestion) + " → " + ckpt.vocab.detokenize(trace.generated_tokens) +
           " (" + conf + ")\n";
  }
  if (trace.no_intent) out += "[" + intents::kNoIntent.name() + "] " + std::string(kNoIntentSentence) + "\n";
  out += "Prediction: " + std::string(to_string(prediction.label)) + "\n";
  return out;
}

}  // namespace dminter
