#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dminter/checkpoint.hpp"
#include "dminter/error.hpp"
#include "dminter/synthetic.hpp"
#include "dminter/training.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Options {
  // gen-data
  std::uint64_t seed = 0;
  std::size_t n_train = 2000, n_val = 400, n_test = 400;
  double cue_strength = 0.9;
  std::string out_dir = "data/synthetic";
  // train
  std::string config_path, out_path;
  std::optional<std::uint64_t> train_seed;
  std::optional<double> beta, lr;
  std::optional<std::size_t> batch_size, max_epochs, patience;
  std::optional<std::string> ablation;
  bool quiet = false;
  // eval / reason
  std::string ckpt_path, data_path, report_path, split_name;
  std::string text, file;
};

int run_gen_data(const Options& o) {
  const auto splits = dminter::generate_synthetic_corpus(o.seed, o.n_train, o.n_val, o.n_test, o.cue_strength);
  std::filesystem::create_directories(o.out_dir);
  dminter::write_jsonl(o.out_dir + "/train.jsonl", splits.train);
  dminter::write_jsonl(o.out_dir + "/validation.jsonl", splits.validation);
  dminter::write_jsonl(o.out_dir + "/test.jsonl", splits.test);
  std::printf("wrote %zu/%zu/%zu articles to %s\n", splits.train.size(), splits.validation.size(), splits.test.size(),
              o.out_dir.c_str());
  return kOk;
}

int run_train(const Options& o) {
  auto config = dminter::TrainingConfig::load(o.config_path);
  if (o.train_seed) config.seed = *o.train_seed;
  if (o.beta) config.beta = *o.beta;
  if (o.lr) config.learning_rate = *o.lr;
  if (o.batch_size) config.batch_size = *o.batch_size;
  if (o.max_epochs) config.max_epochs = *o.max_epochs;
  if (o.patience) config.patience_epochs = *o.patience;
  if (o.ablation) config.ablation = dminter::AblationFlags::parse(*o.ablation);
  const auto result = dminter::train(config, [&](const dminter::EpochLog& e) {
    if (!o.quiet) {
      std::fprintf(stderr, "epoch %zu  loss %.6f  val_macro_f1 %.4f  (%.1fs)\n", e.epoch, e.mean_loss, e.val_macro_f1,
                   e.seconds);
    }
  });
  dminter::save_checkpoint(result.checkpoint, o.out_path);
  std::printf("best epoch %zu, validation macro F1 %.4f, saved %s\n", result.checkpoint.epoch,
              result.checkpoint.best_val_macro_f1, o.out_path.c_str());
  return kOk;
}

int run_eval(const Options& o) {
  const auto ckpt = dminter::load_checkpoint(o.ckpt_path);
  const auto file = dminter::load_jsonl(o.data_path);
  for (const auto& w : file.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  const auto report = dminter::evaluate(ckpt, file.articles);
  const std::string split =
      o.split_name.empty() ? std::filesystem::path(o.data_path).stem().string() : o.split_name;
  const std::string doc = dminter::to_json(report, split).dump(2) + "\n";
  if (o.report_path.empty()) {
    std::cout << doc;
  } else {
    std::ofstream out(o.report_path);
    if (!out) throw dminter::DataError("cannot write report '" + o.report_path + "'");
    out << doc;
  }
  return kOk;
}

int run_reason(const Options& o) {
  const auto ckpt = dminter::load_checkpoint(o.ckpt_path);
  std::string text = o.text;
  if (!o.file.empty()) {
    std::ifstream in(o.file);
    if (!in) throw dminter::DataError("cannot open '" + o.file + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    text = buffer.str();
  }
  std::cout << dminter::format_reasoning(ckpt, dminter::predict(ckpt, text));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Intent-aware misinformation detection"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic corpus with planted intent cues");
  gen->add_option("--seed", o.seed);
  gen->add_option("--n-train", o.n_train);
  gen->add_option("--n-val", o.n_val);
  gen->add_option("--n-test", o.n_test);
  gen->add_option("--cue-strength", o.cue_strength);
  gen->add_option("--out-dir", o.out_dir);

  auto* tr = app.add_subcommand("train", "Train and save the best checkpoint");
  tr->add_option("--config", o.config_path)->required();
  tr->add_option("--seed", o.train_seed);
  tr->add_option("--beta", o.beta);
  tr->add_option("--lr", o.lr);
  tr->add_option("--batch-size", o.batch_size);
  tr->add_option("--max-epochs", o.max_epochs);
  tr->add_option("--patience", o.patience);
  tr->add_option("--ablation", o.ablation, "comma-separated: no_ld,flat_hierarchy,direct_query,no_weights");
  tr->add_option("--out", o.out_path)->required();
  tr->add_flag("--quiet", o.quiet);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a JSONL split");
  ev->add_option("--ckpt", o.ckpt_path)->required();
  ev->add_option("--data", o.data_path)->required();
  ev->add_option("--report", o.report_path);
  ev->add_option("--split", o.split_name);

  auto* rs = app.add_subcommand("reason", "Print the reasoning trace for one article");
  rs->add_option("--ckpt", o.ckpt_path)->required();
  auto* text_opt = rs->add_option("--text", o.text);
  auto* file_opt = rs->add_option("--file", o.file);
  text_opt->excludes(file_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return run_gen_data(o);
    if (*tr) return run_train(o);
    if (*ev) return run_eval(o);
    if (*rs) {
      if (o.text.empty() && o.file.empty()) {
        std::fprintf(stderr, "error: reason needs --text or --file\n");
        return kUsage;
      }
      return run_reason(o);
    }
  } catch (const dminter::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const dminter::DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  } catch (const dminter::NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
  return kUsage;
}
