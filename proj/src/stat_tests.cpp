#include "tvdpm/stat_tests.hpp"

#include <algorithm>
#include <limits>

#include <boost/math/distributions/chi_squared.hpp>

#include "tvdpm/errors.hpp"

namespace tvdpm {

double MeanEstimate::z_score(double target) const {
  const double gap = mean - target;
  if (std_error == 0.0) return gap == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), gap);
  return gap / std_error;
}

MeanEstimate mean_estimate(std::span<const double> samples) {
  if (samples.size() < 2) throw ConstraintViolation("mean_estimate needs at least two samples");
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  const double var = ss / static_cast<double>(samples.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(samples.size()))};
}

double normal_cdf(double x, double mean, double sd) { return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0))); }

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw ConstraintViolation("ks_statistic: no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double ks_p_value(double statistic, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * statistic;
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

ChiSquareResult chi_square_independence(const std::vector<std::vector<double>>& table) {
  std::vector<double> rows, cols;
  const std::size_t nc = table.empty() ? 0 : table.front().size();
  cols.assign(nc, 0.0);
  for (const auto& r : table) {
    if (r.size() != nc) throw ConstraintViolation("contingency table rows differ in length");
    double s = 0.0;
    for (std::size_t j = 0; j < nc; ++j) {
      s += r[j];
      cols[j] += r[j];
    }
    rows.push_back(s);
  }
  double total = 0.0;
  for (double r : rows) total += r;
  if (!(total > 0.0)) throw ConstraintViolation("contingency table is empty");
  ChiSquareResult res;
  int used_rows = 0, used_cols = 0;
  for (double r : rows) used_rows += r > 0.0;
  for (double c : cols) used_cols += c > 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] == 0.0) continue;
    for (std::size_t j = 0; j < nc; ++j) {
      if (cols[j] == 0.0) continue;
      const double expected = rows[i] * cols[j] / total;
      res.statistic += (table[i][j] - expected) * (table[i][j] - expected) / expected;
    }
  }
  res.dof = (used_rows - 1) * (used_cols - 1);
  if (res.dof <= 0) return {res.statistic, 0, 1.0};
  boost::math::chi_squared dist(res.dof);
  res.p_value = boost::math::cdf(boost::math::complement(dist, res.statistic));
  return res;
}

double correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ConstraintViolation("correlation needs paired samples");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double trapezoid(std::span<const double> grid, std::span<const double> values) {
  if (grid.size() != values.size()) throw ConstraintViolation("trapezoid: grid and values differ in length");
  double s = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) s += 0.5 * (grid[i] - grid[i - 1]) * (values[i] + values[i - 1]);
  return s;
}

}  // namespace tvdpm
