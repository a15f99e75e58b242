#include "dminter/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dminter/error.hpp"

namespace dminter {

namespace {

double safe_div(double a, double b) { return b == 0.0 ? 0.0 : a / b; }

double f1(double tp, double fp, double fn) { return safe_div(2.0 * tp, 2.0 * tp + fp + fn); }

}  // namespace

std::optional<double> rank_auc(std::span<const Veracity> labels, std::span<const double> scores) {
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average ranks over tie groups; sum them for the fake class.
  double fake_rank_sum = 0.0;
  std::size_t n_fake = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == Veracity::kFake) {
        fake_rank_sum += avg_rank;
        ++n_fake;
      }
    }
    i = j;
  }
  const std::size_t n_real = n - n_fake;
  if (n_fake == 0 || n_real == 0) return std::nullopt;
  const double nf = static_cast<double>(n_fake);
  const double u = fake_rank_sum - nf * (nf + 1.0) / 2.0;
  return u / (nf * static_cast<double>(n_real));
}

MetricsReport compute_metrics(std::span<const Veracity> labels, std::span<const Veracity> predicted,
                              std::span<const double> fake_probabilities, Averaging averaging) {
  if (labels.empty()) throw ConfigError("compute_metrics: empty input");
  if (labels.size() != predicted.size() || labels.size() != fake_probabilities.size()) {
    throw ConfigError("compute_metrics: length mismatch (" + std::to_string(labels.size()) + ", " +
                      std::to_string(predicted.size()) + ", " + std::to_string(fake_probabilities.size()) + ")");
  }
  for (double p : fake_probabilities) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("compute_metrics: probability outside [0, 1]");
  }

  double tp = 0, fp = 0, fn = 0, tn = 0;  // fake is positive
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool y = labels[i] == Veracity::kFake;
    const bool p = predicted[i] == Veracity::kFake;
    if (y && p) ++tp;
    else if (!y && p) ++fp;
    else if (y && !p) ++fn;
    else ++tn;
  }

  MetricsReport r;
  r.n = labels.size();
  r.averaging = averaging;
  r.accuracy = (tp + tn) / static_cast<double>(r.n);
  r.f1_fake = f1(tp, fp, fn);
  r.f1_real = f1(tn, fn, fp);
  r.macro_f1 = (r.f1_real + r.f1_fake) / 2.0;
  if (averaging == Averaging::kMacro) {
    r.precision = (safe_div(tp, tp + fp) + safe_div(tn, tn + fn)) / 2.0;
    r.recall = (safe_div(tp, tp + fn) + safe_div(tn, tn + fp)) / 2.0;
  } else {
    r.precision = safe_div(tp, tp + fp);
    r.recall = safe_div(tp, tp + fn);
  }
  const auto auc = rank_auc(labels, fake_probabilities);
  r.auc_defined = auc.has_value();
  r.auc = auc.value_or(0.0);
  return r;
}

nlohmann::json to_json(const MetricsReport& r, const std::string& split) {
  nlohmann::json doc = {
      {"macro_f1", r.macro_f1},
      {"accuracy", r.accuracy},
      {"precision_macro", r.precision},
      {"recall_macro", r.recall},
      {"f1_real", r.f1_real},
      {"f1_fake", r.f1_fake},
      {"auc", r.auc_defined ? nlohmann::json(r.auc) : nlohmann::json(nullptr)},
      {"n", r.n},
      {"split", split},
  };
  if (r.averaging == Averaging::kFakeClass) {
    doc.erase("precision_macro");
    doc.erase("recall_macro");
    doc["precision_fake"] = r.precision;
    doc["recall_fake"] = r.recall;
  }
  if (!r.auc_defined) doc["auc_defined"] = false;
  return doc;
}

MetricsReport report_from_json(const nlohmann::json& doc) {
  try {
    MetricsReport r;
    r.macro_f1 = doc.at("macro_f1").get<double>();
    r.accuracy = doc.at("accuracy").get<double>();
    r.averaging = doc.contains("precision_fake") ? Averaging::kFakeClass : Averaging::kMacro;
    const char* suffix = r.averaging == Averaging::kMacro ? "_macro" : "_fake";
    r.precision = doc.at(std::string("precision") + suffix).get<double>();
    r.recall = doc.at(std::string("recall") + suffix).get<double>();
    r.f1_real = doc.at("f1_real").get<double>();
    r.f1_fake = doc.at("f1_fake").get<double>();
    r.auc_defined = !doc.at("auc").is_null();
    r.auc = r.auc_defined ? doc.at("auc").get<double>() : 0.0;
    r.n = doc.at("n").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("metrics report: ") + e.what());
  }
}

}  // namespace dminter
