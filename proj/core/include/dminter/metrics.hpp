#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "dminter/hierarchy.hpp"

namespace dminter {

enum class Averaging {
  kMacro,      // mean over {real, fake}
  kFakeClass,  // fake treated as the positive class
};

struct MetricsReport {
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1_real = 0.0;
  double f1_fake = 0.0;
  /// Meaningless when auc_defined is false (single-class labels); reported
  /// as null in JSON.
  double auc = 0.0;
  bool auc_defined = true;
  Averaging averaging = Averaging::kMacro;
  std::size_t n = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Throws ConfigError on length mismatch, empty input, or probabilities
/// outside [0, 1].
MetricsReport compute_metrics(std::span<const Veracity> labels, std::span<const Veracity> predicted,
                              std::span<const double> fake_probabilities, Averaging averaging = Averaging::kMacro);

/// Mann-Whitney statistic of fake scores against real scores, ties counted
/// half. nullopt when one class is absent.
std::optional<double> rank_auc(std::span<const Veracity> labels, std::span<const double> scores);

nlohmann::json to_json(const MetricsReport& report, const std::string& split);
MetricsReport report_from_json(const nlohmann::json& doc);

}  // namespace dminter
