#pragma once

// Random partitions of n, the Ewens sampling formula and the static Polya urn.

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include "tvdpm/random.hpp"

namespace tvdpm {

/// Cluster labels are assigned in order of appearance and never reused.
using Label = std::int64_t;

/// Labels c_1..c_n of one batch.
using AllocationVector = std::vector<Label>;

/// DP scale parameter (theta > 0).
class ScaleParam {
 public:
  explicit ScaleParam(double theta);
  double value() const { return theta_; }

 private:
  double theta_;
};

/// Partition of n coded by its vector of counts: a[j-1] is the number of
/// boxes holding exactly j balls.
class CountsVector {
 public:
  /// n is taken as counts.size(); throws ConstraintViolation unless
  /// sum_j j * a_j == n.
  explicit CountsVector(std::vector<int> counts);

  int n() const { return static_cast<int>(counts_.size()); }
  int boxes() const;
  /// a_j for j in 1..n.
  int operator[](int j) const { return counts_.at(j - 1); }
  const std::vector<int>& counts() const { return counts_; }

  auto operator<=>(const CountsVector&) const = default;

 private:
  std::vector<int> counts_;
};

/// log P_n(a) from the Ewens sampling formula. The span overload validates
/// its input and throws ConstraintViolation on an invalid vector of counts.
double esf_log_prob(const CountsVector& a, ScaleParam theta);
double esf_log_prob(std::span<const int> counts, ScaleParam theta);

/// n draws of the static Chinese-restaurant urn. Labels are 1, 2, ... by
/// order of appearance.
AllocationVector polya_urn_sample(int n, ScaleParam theta, Rng& rng);

CountsVector counts_of(std::span<const Label> allocation);

/// True when the first occurrence of each label j precedes the first
/// occurrence of j+1 and labels start at 1.
bool is_canonical(std::span<const Label> allocation);

inline constexpr int kMaxEnumerableN = 25;

/// Every partition of n exactly once, in descending lexicographic order of
/// counts ((n,0,...,0) first). Throws CapacityError for n > 25.
std::vector<CountsVector> enumerate_partitions(int n);

}  // namespace tvdpm
