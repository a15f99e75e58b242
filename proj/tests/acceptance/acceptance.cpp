// Acceptance suite: one PASS/FAIL line per criterion.
//   dminter_acceptance [--only AC1,AC7] [--skip AC7]
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles.hpp"
#include "../scripted.hpp"
#include "dminter/checkpoint.hpp"
#include "dminter/gradcheck.hpp"
#include "dminter/metrics.hpp"
#include "dminter/random.hpp"
#include "dminter/synthetic.hpp"
#include "dminter/training.hpp"

using namespace dminter;
using namespace dminter::intents;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::string> queried(const ReasoningTrace& t) {
  std::vector<std::string> out;
  for (const auto& s : t.steps) out.push_back(s.intent.name());
  return out;
}

QueryTable default_table() {
  const auto h = default_hierarchy();
  return QueryTable::build(h, scripted::prompt_vocab(h), ReasoningMode::kHierarchical, 256);
}

Outcome ac1_gradient() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = generate_synthetic_corpus(1, 40, 4, 4, 0.9);
  const auto h = default_hierarchy();
  const Vocabulary vocab = build_vocab(data.train, 60, QueryTable::prompt_texts(h));
  TrainingConfig cfg;
  cfg.model = {vocab.size(), 16, 2, 1, 32, 128};
  cfg.max_article_tokens = 24;
  cfg.beta = 1.0;
  const ModelParams params = init_params(cfg.model, 11);
  const QueryTable table = QueryTable::build(h, vocab, ReasoningMode::kHierarchical, cfg.model.max_len);
  auto samples = encode_articles(data.train, vocab, cfg.max_article_tokens);
  samples.resize(2);
  std::vector<SampleOutcome> fixed;
  for (const auto& s : samples) fixed.push_back(reason_sample(params, table, s, cfg));
  auto loss = [&] {
    Var total;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      Var l = sample_loss_given(params, samples[i], cfg, fixed[i]);
      total = i == 0 ? l : ops::add(total, l);
    }
    return ops::scale(total, 0.5);
  };
  std::vector<Var> vars;
  std::vector<std::string> names;
  for (const auto& p : params.named()) {
    vars.push_back(p.var);
    names.push_back(p.name);
  }
  const auto report = finite_difference_check(loss, vars, {.epsilon = 1e-5, .max_coords_per_param = 256, .seed = 5, .floor = 1e-6, .skip_nonsmooth = true});
  const double secs = seconds_since(t0);
  const std::size_t total = report.coordinates_checked + report.nonsmooth_skipped;
  const bool ok = vocab.size() == 60 && report.max_relative_error < 1e-4 && secs < 60.0 &&
                  report.nonsmooth_skipped * 20 <= total;
  return {ok, "vocab " + std::to_string(vocab.size()) + ", " + std::to_string(report.coordinates_checked) + "/" +
                  std::to_string(total) + " coords scored (" + std::to_string(report.nonsmooth_skipped) +
                  " flagged non-smooth), max rel err " + fmt("%.3g", report.max_relative_error) + " at " +
                  names[report.worst_param] + "[" + std::to_string(report.worst_coord) + "] (analytic " +
                  fmt("%.6g", report.worst_analytic) + ", numeric " + fmt("%.6g", report.worst_numeric) + "), " +
                  fmt("%.1f s", secs)};
}

Outcome ac2_planner() {
  const QueryTable table = default_table();
  int matched = 0;
  for (int mask = 0; mask < 8; ++mask) {
    const bool pub = mask & 1, emo = mask & 2, ind = mask & 4;
    scripted::TableSource src({{kPublic, pub ? Answer::kYes : Answer::kNo},
                               {kEmotion, emo ? Answer::kYes : Answer::kNo},
                               {kIndividual, ind ? Answer::kYes : Answer::kNo}});
    matched += queried(run_episode(table, src)) == oracle::planner_queries(pub, emo, ind);
  }
  const std::vector<std::pair<AnswerMap, std::vector<std::string>>> golden = {
      {{{kPublic, Answer::kYes}, {kEmotion, Answer::kYes}, {kIndividual, Answer::kNo}, {kPopularize, Answer::kNo},
        {kClout, Answer::kYes}, {kConflict, Answer::kNo}},
       {"Public", "Emotion", "Individual", "Popularize", "Clout", "Conflict"}},
      {{{kPublic, Answer::kYes}, {kEmotion, Answer::kNo}, {kIndividual, Answer::kNo}, {kPopularize, Answer::kYes},
        {kClout, Answer::kNo}},
       {"Public", "Emotion", "Individual", "Popularize", "Clout"}},
      {{}, {"Public", "Emotion", "Individual"}},
  };
  int golden_ok = 0;
  for (const auto& [answers, expected] : golden) {
    scripted::TableSource src(answers);
    golden_ok += queried(run_episode(table, src)) == expected;
  }
  return {matched == 8 && golden_ok == 3,
          std::to_string(matched) + "/8 assignments, " + std::to_string(golden_ok) + "/3 golden traces"};
}

Outcome ac3_sequence() {
  const QueryTable table = default_table();
  Rng rng(31);
  int ok = 0, with_no_intent = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const double p_yes = trial % 4 == 0 ? 0.0 : 0.5;
    scripted::FnSource src([&](const IntentId&, std::size_t) { return rng.bernoulli(p_yes) ? Answer::kYes : Answer::kNo; });
    const auto t = run_episode(table, src);
    std::vector<TokenId> expected = {reserved::kBos};
    bool all_no = true;
    for (const auto& s : t.steps) {
      const auto& q = table.query_tokens.at(s.intent);
      expected.insert(expected.end(), q.begin(), q.end());
      expected.push_back(s.answer == Answer::kYes ? reserved::kYes : reserved::kNo);
      all_no = all_no && s.answer == Answer::kNo;
    }
    if (all_no) expected.insert(expected.end(), table.no_intent_tokens.begin(), table.no_intent_tokens.end());
    with_no_intent += all_no;
    ok += t.sequence_tokens == expected && t.no_intent == all_no;
  }
  return {ok == 100, std::to_string(ok) + "/100 episodes (" + std::to_string(with_no_intent) + " all-no)"};
}

Outcome ac4_weights() {
  auto answers = [](std::size_t t, std::size_t k) {
    std::vector<Answer> a(t, Answer::kNo), b(t, Answer::kNo);
    for (std::size_t i = 0; i < k; ++i) a[i] = Answer::kYes;
    return std::pair{a, b};
  };
  bool e_ok = true;
  auto check_e = [&](std::size_t t, std::size_t k, double expected) {
    const auto [a, b] = answers(t, k);
    e_ok = e_ok && error_propagation_weight(a, b) == expected;
  };
  check_e(4, 0, 1.0);
  check_e(4, 1, 1.0);
  check_e(4, 2, 0.5);
  for (std::size_t t = 1; t <= 9; ++t) check_e(t, t, 1.0 / static_cast<double>(t));

  const auto h = default_hierarchy();
  const std::vector<IntentId> leaves = {kPopularize, kClout, kConflict, kSmear, kBias, kConnect};
  int v_ok = 0, combos = 0;
  bool avg_ok = true;
  for (int mask = 0; mask < 64; ++mask) {
    ReasoningTrace t;
    for (const auto& top : {kPublic, kEmotion, kIndividual}) t.steps.push_back({top, {}, Answer::kYes, 0.9, 0});
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      t.steps.push_back({leaves[i], {}, (mask >> i) & 1 ? Answer::kYes : Answer::kNo, 0.9, 0});
    }
    for (Veracity y : {Veracity::kReal, Veracity::kFake}) {
      bool any = false, agree = false;
      for (std::size_t i = 0; i < leaves.size(); ++i) {
        if (!((mask >> i) & 1)) continue;
        any = true;
        const bool real_leaning = i == 0 || i == 5;
        agree = agree || real_leaning == (y == Veracity::kReal);
      }
      const double expected = any && !agree ? 0.0 : 1.0;
      ++combos;
      v_ok += veracity_consistency_weight(t, y, h) == expected;
      AnswerMap reversed = t.answers();
      reversed[kPublic] = Answer::kNo;  // one disagreement keeps alpha_e at 1
      const auto w = compute_sample_weights(t, reversed, y, h);
      avg_ok = avg_ok && w.alpha == (w.alpha_e + w.alpha_v) / 2.0 && w.alpha_v == expected;
    }
  }
  return {e_ok && v_ok == combos && avg_ok, std::string("alpha_e table ") + (e_ok ? "exact" : "WRONG") + ", alpha_v " +
                                                std::to_string(v_ok) + "/" + std::to_string(combos) +
                                                ", alpha average " + (avg_ok ? "exact" : "WRONG")};
}

Outcome ac5_loss_oracles() {
  Rng rng(41);
  double worst_ld = 0.0, worst_fuse = 0.0, worst_sum = 0.0;
  ModelConfig mc{40, 8, 2, 1, 16, 32};
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t L = 1 + rng.below(12), V = 2 + rng.below(40);
    Tensor logits({L, V});
    for (double& x : logits.mutable_values()) x = rng.uniform(-5, 5);
    std::vector<TokenId> targets(L);
    for (auto& t : targets) t = rng.below(V);
    worst_ld = std::max(worst_ld, std::abs(decoder_self_training_loss(Var::constant(logits), targets).value().item() -
                                           oracle::decoder_loss(oracle::to_matrix(logits), targets)));

    const ModelParams p = init_params(mc, 100 + trial);
    Tensor he({1 + rng.below(10), 8}), feat({1, 8});
    for (double& x : he.mutable_values()) x = rng.uniform(-2, 2);
    for (double& x : feat.mutable_values()) x = rng.uniform(-2, 2);
    const double c = rng.uniform();
    const auto r = fuse(p, {Var::constant(he), EmbeddingRole::kEncoder}, Var::constant(feat), c);
    const auto o = oracle::fuse(p, he, feat, c);
    for (std::size_t j = 0; j < 8; ++j) {
      worst_fuse = std::max(worst_fuse, std::abs(r.representation.value()[j] - o.representation[j]));
    }
    for (const auto& w : r.attention_weights) {
      double s = 0.0;
      for (double x : w.values()) s += x;
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }
  }
  return {worst_ld < 1e-9 && worst_fuse < 1e-9 && worst_sum < 1e-12,
          "decoder loss " + fmt("%.2g", worst_ld) + ", fuse " + fmt("%.2g", worst_fuse) + ", weight sums " +
              fmt("%.2g", worst_sum)};
}

Outcome ac6_metrics() {
  Rng rng(51);
  double worst = 0.0;
  bool flags_ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<int> y(n), p(n);
    std::vector<Veracity> vy(n), vp(n);
    std::vector<double> prob(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.below(2));
      p[i] = static_cast<int>(rng.below(2));
      vy[i] = y[i] ? Veracity::kFake : Veracity::kReal;
      vp[i] = p[i] ? Veracity::kFake : Veracity::kReal;
      prob[i] = trial % 2 ? rng.uniform() : std::round(rng.uniform() * 8) / 8;
    }
    const auto r = compute_metrics(vy, vp, prob);
    const auto o = oracle::metrics(y, p, prob);
    for (auto [a, b] : {std::pair{r.macro_f1, o.macro_f1}, {r.accuracy, o.accuracy}, {r.precision, o.precision},
                        {r.recall, o.recall}, {r.f1_real, o.f1_real}, {r.f1_fake, o.f1_fake}}) {
      worst = std::max(worst, std::abs(a - b));
    }
    flags_ok = flags_ok && r.auc_defined == o.auc.has_value();
    if (o.auc) worst = std::max(worst, std::abs(r.auc - *o.auc));
  }
  std::vector<Veracity> labels(10000);
  std::vector<double> scores(10000);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = i % 2 ? Veracity::kFake : Veracity::kReal;
    scores[i] = rng.uniform();
  }
  const double auc = *rank_auc(labels, scores);
  return {worst < 1e-12 && flags_ok && auc >= 0.45 && auc <= 0.55,
          "max deviation " + fmt("%.2g", worst) + " over 1000 instances, random-score AUC " + fmt("%.4f", auc)};
}

TrainingConfig acceptance_config() { return TrainingConfig::load(DMINTER_SOURCE_DIR "/configs/acceptance.json"); }

Outcome ac7_end_to_end() {
  const TrainingConfig base = acceptance_config();
  double sum_full = 0.0, sum_ablation = 0.0, sum_oracle = 0.0, slowest = 0.0;
  std::ostringstream per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto data = generate_synthetic_corpus(seed, 2000, 400, 400, 0.9);
    // Reference ceiling: cue lookup, with uncued articles called real.
    std::vector<Veracity> labels, guesses;
    std::vector<double> scores;
    for (const auto& a : data.test) {
      labels.push_back(a.label);
      guesses.push_back(cue_oracle(a.text).value_or(Veracity::kReal));
      scores.push_back(guesses.back() == Veracity::kFake ? 1.0 : 0.0);
    }
    sum_oracle += compute_metrics(labels, guesses, scores).macro_f1;
    double f1[2];
    for (int arm = 0; arm < 2; ++arm) {
      TrainingConfig c = base;
      c.seed = seed;
      if (arm == 1) c.ablation = AblationFlags::parse("no_ld,no_weights,direct_query");
      const auto t0 = std::chrono::steady_clock::now();
      const auto r = train(c, data);
      f1[arm] = evaluate(r.checkpoint, data.test).macro_f1;
      const double secs = seconds_since(t0);
      slowest = std::max(slowest, secs);
      std::fprintf(stderr, "  AC7 seed %llu %s: test macro-F1 %.4f (best epoch %zu, %.0f s)\n",
                   static_cast<unsigned long long>(seed), arm == 0 ? "full" : "encoder-only", f1[arm],
                   r.checkpoint.epoch, secs);
    }
    sum_full += f1[0];
    sum_ablation += f1[1];
    per_seed << " s" << seed << " " << fmt("%.2f", 100 * f1[0]) << "/" << fmt("%.2f", 100 * f1[1]);
  }
  const double gap = 100.0 * (sum_full - sum_ablation) / 3.0;
  return {gap >= 2.0 && slowest < 600.0, "full minus encoder-only " + fmt("%+.2f", gap) + " macro-F1 points (" +
                                             per_seed.str().substr(1) + "), cue-oracle mean " +
                                             fmt("%.2f", 100.0 * sum_oracle / 3.0) + ", slowest run " +
                                             fmt("%.0f s", slowest)};
}

Outcome ac8_beta_identity() {
  const auto data = generate_synthetic_corpus(8, 200, 50, 10, 0.9);
  TrainingConfig a = acceptance_config();
  a.max_epochs = 2;
  a.ablation.no_ld = true;
  TrainingConfig b = acceptance_config();
  b.max_epochs = 2;
  b.beta = 0.0;
  const auto ra = train(a, data);
  const auto rb = train(b, data);
  const bool same = !ra.log.step_losses.empty() && ra.log.step_losses == rb.log.step_losses;
  return {same, std::to_string(ra.log.step_losses.size()) + " step losses " + (same ? "bit-identical" : "DIFFER")};
}

Outcome ac9_determinism() {
  const auto data = generate_synthetic_corpus(9, 200, 50, 50, 0.9);
  TrainingConfig c = acceptance_config();
  c.max_epochs = 2;
  const auto r1 = train(c, data);
  const auto r2 = train(c, data);
  const std::string b1 = serialize_checkpoint(r1.checkpoint), b2 = serialize_checkpoint(r2.checkpoint);
  const Checkpoint back = deserialize_checkpoint(b1);
  const bool same_bytes = b1 == b2;
  const bool same_report = evaluate(back, data.test) == evaluate(r1.checkpoint, data.test);
  return {same_bytes && same_report, std::string("checkpoints ") + (same_bytes ? "bit-identical" : "DIFFER") + " (" +
                                         std::to_string(b1.size()) + " bytes), round-trip report " +
                                         (same_report ? "identical" : "DIFFERS")};
}

std::set<std::string> split_list(const std::string& s) {
  std::set<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.insert(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> only, skip;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--only") only = split_list(argv[i + 1]);
    else if (flag == "--skip") skip = split_list(argv[i + 1]);
  }
  const std::vector<std::tuple<std::string, std::string, std::function<Outcome()>>> criteria = {
      {"AC1", "gradient check of the full weighted loss", ac1_gradient},
      {"AC2", "planner versus brute-force oracle and golden traces", ac2_planner},
      {"AC3", "answer-sequence construction", ac3_sequence},
      {"AC4", "sample weight truth tables", ac4_weights},
      {"AC5", "decoder loss and fusion versus loop oracles", ac5_loss_oracles},
      {"AC6", "metrics versus confusion-matrix oracle", ac6_metrics},
      {"AC7", "end-to-end synthetic: full beats encoder-only by 2 points", ac7_end_to_end},
      {"AC8", "no_ld ablation equals beta = 0", ac8_beta_identity},
      {"AC9", "determinism and checkpoint round trip", ac9_determinism},
  };
  int failures = 0;
  for (const auto& [id, what, run] : criteria) {
    if ((!only.empty() && !only.count(id)) || skip.count(id)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %s  %s: %s\n", id.c_str(), o.pass ? "PASS" : "FAIL", what.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
