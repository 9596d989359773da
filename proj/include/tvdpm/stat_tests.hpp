#pragma once

// Small statistical toolkit shared by the diagnostics and the test suites.

#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <vector>

namespace tvdpm {

/// Half the L1 distance between two discrete laws given as key -> mass maps.
template <class Key, class Cmp>
double tv_distance(const std::map<Key, double, Cmp>& p, const std::map<Key, double, Cmp>& q) {
  double l1 = 0.0;
  for (const auto& [k, v] : p) {
    auto it = q.find(k);
    l1 += std::abs(v - (it == q.end() ? 0.0 : it->second));
  }
  for (const auto& [k, v] : q)
    if (!p.count(k)) l1 += std::abs(v);
  return 0.5 * l1;
}

/// Empirical law of a sample.
template <class Key>
std::map<Key, double> empirical_law(std::span<const Key> samples) {
  std::map<Key, double> law;
  for (const auto& s : samples) law[s] += 1.0;
  for (auto& [k, v] : law) v /= static_cast<double>(samples.size());
  return law;
}

struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  /// (mean - target) / std_error; 0 when both the error and the gap vanish.
  double z_score(double target) const;
};

MeanEstimate mean_estimate(std::span<const double> samples);

double normal_cdf(double x, double mean = 0.0, double sd = 1.0);

/// sup_x |F_n(x) - F(x)|.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);
/// Asymptotic Kolmogorov tail P(D_n > d) with Stephens' small-sample correction.
double ks_p_value(double statistic, std::size_t n);

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

/// Pearson test of independence on a contingency table of counts. Empty rows
/// and columns are dropped before computing the degrees of freedom.
ChiSquareResult chi_square_independence(const std::vector<std::vector<double>>& table);

/// Sample correlation of paired values.
double correlation(std::span<const double> x, std::span<const double> y);

/// Trapezoidal integral of values over a sorted grid.
double trapezoid(std::span<const double> grid, std::span<const double> values);

}  // namespace tvdpm
