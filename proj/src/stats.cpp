#include "cplab/stats.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>

#include "cplab/errors.hpp"

namespace cplab {

Estimate mean_estimate(std::span<const double> values) {
  Estimate e;
  e.n = values.size();
  if (values.empty()) return e;
  // Two-pass in index order; bit-identical for identical inputs.
  double sum = 0.0;
  for (double v : values) sum += v;
  e.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - e.mean) * (v - e.mean);
    const double var = ss / static_cast<double>(values.size() - 1);
    e.std_error = std::sqrt(var / static_cast<double>(values.size()));
  }
  return e;
}

double combined_sigma(const Estimate& a, const Estimate& b) {
  return std::hypot(a.std_error, b.std_error);
}

Estimate delta_method(const std::vector<std::vector<double>>& columns,
                      const std::function<double(const std::vector<double>&)>& g) {
  if (columns.empty()) throw DomainError("delta_method needs at least one column");
  const std::size_t n = columns.front().size();
  for (const auto& c : columns) {
    if (c.size() != n) throw DomainError("delta_method columns must have equal length");
  }
  const std::size_t k = columns.size();
  std::vector<double> means(k);
  for (std::size_t j = 0; j < k; ++j) means[j] = mean_estimate(columns[j]).mean;

  std::vector<double> grad(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double step = 1e-6 * std::max(1.0, std::abs(means[j]));
    auto up = means;
    auto down = means;
    up[j] += step;
    down[j] -= step;
    grad[j] = (g(up) - g(down)) / (2.0 * step);
  }
  std::vector<double> influence(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += grad[j] * (columns[j][i] - means[j]);
    influence[i] = s;
  }
  Estimate e = mean_estimate(influence);
  e.mean = g(means);
  e.n = n;
  return e;
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y, std::span<const double> sigmas) {
  const std::size_t n = x.size();
  if (n != y.size() || (!sigmas.empty() && sigmas.size() != n)) {
    throw DomainError("linear_fit: mismatched input lengths");
  }
  if (n < 2) throw DomainError("linear_fit needs at least two points");
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = sigmas.empty() ? 1.0 : 1.0 / (sigmas[i] * sigmas[i]);
    sw += w;
    sx += w * x[i];
    sy += w * y[i];
  }
  const double mx = sx / sw;
  const double my = sy / sw;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = sigmas.empty() ? 1.0 : 1.0 / (sigmas[i] * sigmas[i]);
    sxx += w * (x[i] - mx) * (x[i] - mx);
    sxy += w * (x[i] - mx) * (y[i] - my);
    syy += w * (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DomainError("linear_fit: x values are degenerate");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  fit.residuals.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    fit.residuals[i] = r;
    const double w = sigmas.empty() ? 1.0 : 1.0 / (sigmas[i] * sigmas[i]);
    rss += w * r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - rss / syy : 1.0;
  if (sigmas.empty()) {
    // Homoscedastic: scale by the residual variance.
    const double s2 = n > 2 ? rss / static_cast<double>(n - 2) : 0.0;
    fit.slope_stderr = std::sqrt(s2 / sxx);
    fit.intercept_stderr = std::sqrt(s2 * (1.0 / sw + mx * mx / sxx));
  } else {
    fit.slope_stderr = std::sqrt(1.0 / sxx);
    fit.intercept_stderr = std::sqrt(1.0 / sw + mx * mx / sxx);
  }
  return fit;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile needs p in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double union_bound_factor(std::size_t count) {
  if (count <= 1) return 1.0;
  constexpr double kThreeSigmaTail = 0.0013498980316301;  // P(Z > 3)
  return normal_quantile(1.0 - kThreeSigmaTail / static_cast<double>(count)) / 3.0;
}

}  // namespace cplab
