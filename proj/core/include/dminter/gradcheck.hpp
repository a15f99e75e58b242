#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "dminter/autodiff.hpp"

namespace dminter {

struct FiniteDifferenceOptions {
  double epsilon = 1e-5;
  /// Coordinates checked per parameter tensor; 0 checks every coordinate.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
  /// Denominator floor of the relative error.
  double floor = 1e-8;
  /// When set, coordinates whose central differences at epsilon and
  /// 2 * epsilon disagree by more than `tolerance` (relative) are treated as
  /// straddling a ReLU kink: counted in `nonsmooth_skipped`, not scored.
  bool skip_nonsmooth = false;
  double tolerance = 1e-4;
};

struct FiniteDifferenceReport {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::size_t nonsmooth_skipped = 0;
  // Location and values of the worst coordinate.
  std::size_t worst_param = 0;
  std::size_t worst_coord = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares backward_sweep against central differences of `loss_fn`, which
/// must rebuild the graph from the current values of `params` on each call.
/// Relative error per coordinate is |analytic - numeric| / max(floor, |numeric|).
FiniteDifferenceReport finite_difference_check(const std::function<Var()>& loss_fn,
                                               std::span<Var> params,
                                               const FiniteDifferenceOptions& options = {});

}  // namespace dminter
