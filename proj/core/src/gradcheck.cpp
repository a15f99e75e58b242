#include "dminter/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dminter/error.hpp"
#include "dminter/random.hpp"

namespace dminter {

namespace {

double eval_loss(const std::function<Var()>& loss_fn) {
  NoGradGuard no_grad;
  const double v = loss_fn().value().item();
  if (!std::isfinite(v)) throw NumericError("finite_difference_check: loss is non-finite at perturbed point");
  return v;
}

}  // namespace

FiniteDifferenceReport finite_difference_check(const std::function<Var()>& loss_fn,
                                               std::span<Var> params,
                                               const FiniteDifferenceOptions& options) {
  if (!(options.epsilon > 0.0)) throw ConfigError("finite_difference_check: epsilon must be > 0");

  const Var root = loss_fn();
  if (!root.value().all_finite()) throw NumericError("finite_difference_check: loss is non-finite");
  const Gradients grads = backward_sweep(root);

  Rng rng(options.seed);
  FiniteDifferenceReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Var& param = params[pi];
    const Tensor analytic = grads.of(param);
    std::vector<std::size_t> coords(param.value().size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_param != 0 && coords.size() > options.max_coords_per_param) {
      rng.shuffle(coords);
      coords.resize(options.max_coords_per_param);
    }
    for (std::size_t c : coords) {
      Tensor& value = param.mutable_leaf_value();
      const double original = value[c];
      auto central = [&](double h) {
        value[c] = original + h;
        const double plus = eval_loss(loss_fn);
        value[c] = original - h;
        const double minus = eval_loss(loss_fn);
        value[c] = original;
        return (plus - minus) / (2.0 * h);
      };
      const double numeric = central(options.epsilon);
      if (options.skip_nonsmooth) {
        const double wide = central(2.0 * options.epsilon);
        if (std::abs(wide - numeric) > options.tolerance * std::max(options.floor, std::abs(numeric))) {
          ++report.nonsmooth_skipped;
          continue;
        }
      }
      const double rel = std::abs(analytic[c] - numeric) / std::max(options.floor, std::abs(numeric));
      if (rel > report.max_relative_error || report.coordinates_checked == 0) {
        report.max_relative_error = rel;
        report.worst_param = pi;
        report.worst_coord = c;
        report.worst_analytic = analytic[c];
        report.worst_numeric = numeric;
      }
      ++report.coordinates_checked;
    }
  }
  return report;
}

}  // namespace dminter
