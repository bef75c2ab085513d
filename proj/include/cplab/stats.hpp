#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace cplab {

// Monte Carlo scalar. `std_error` is the plug-in standard error (sample sd / sqrt(n));
// `bias_bound` is a deterministic bound on the truncation bias relative to the infinite-volume,
// infinite-window quantity.
struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  double bias_bound = 0.0;
  double flagged_fraction = 0.0;          // budget-exhausted replicas
  double space_truncated_fraction = 0.0;  // replicas whose cluster left V_L
};

Estimate mean_estimate(std::span<const double> values);

// sqrt(a.std_error^2 + b.std_error^2)
double combined_sigma(const Estimate& a, const Estimate& b);

// Estimate of g(E[X_1], ..., E[X_k]) from per-replica columns sharing one replica index.
// The standard error comes from the delta method on the empirical influence values, so
// correlations between columns are accounted for.
Estimate delta_method(const std::vector<std::vector<double>>& columns,
                      const std::function<double(const std::vector<double>&)>& g);

// Weighted least squares fit y = a + b x with weights 1/sigma^2 (all ones if sigmas empty).
struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_stderr = 0.0;
  double intercept_stderr = 0.0;
  double r_squared = 0.0;
  std::vector<double> residuals;
};

LinearFit linear_fit(std::span<const double> x, std::span<const double> y, std::span<const double> sigmas = {});

// Standard normal quantile.
double normal_quantile(double p);

// Factor by which a single-site standard error is inflated so that a 3-sigma band covers
// `count` simultaneous comparisons by the union bound.
double union_bound_factor(std::size_t count);

}  // namespace cplab
