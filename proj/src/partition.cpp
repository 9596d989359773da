#include "tvdpm/partition.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "tvdpm/errors.hpp"

namespace tvdpm {

ScaleParam::ScaleParam(double theta) : theta_(theta) {
  if (!(theta > 0.0) || !std::isfinite(theta))
    throw ConstraintViolation("scale parameter theta must be positive, got " + std::to_string(theta));
}

namespace {

void check_counts(std::span<const int> counts) {
  if (counts.empty()) throw ConstraintViolation("vector of counts must describe n >= 1 balls");
  long long total = 0;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] < 0) throw ConstraintViolation("vector of counts has a negative entry");
    total += static_cast<long long>(j + 1) * counts[j];
  }
  if (total != static_cast<long long>(counts.size()))
    throw ConstraintViolation("vector of counts: sum_j j*a_j = " + std::to_string(total) +
                              " differs from n = " + std::to_string(counts.size()));
}

}  // namespace

CountsVector::CountsVector(std::vector<int> counts) : counts_(std::move(counts)) { check_counts(counts_); }

int CountsVector::boxes() const {
  int k = 0;
  for (int a : counts_) k += a;
  return k;
}

double esf_log_prob(std::span<const int> counts, ScaleParam theta) {
  check_counts(counts);
  const double th = theta.value();
  const double n = static_cast<double>(counts.size());
  // n! / prod_{i=1}^n (theta + i - 1) = Gamma(n+1) Gamma(theta) / Gamma(theta + n)
  double lp = std::lgamma(n + 1.0) + std::lgamma(th) - std::lgamma(th + n);
  const double log_theta = std::log(th);
  for (std::size_t j = 0; j < counts.size(); ++j) {
    const int a = counts[j];
    if (a == 0) continue;
    lp += a * (log_theta - std::log(static_cast<double>(j + 1))) - std::lgamma(a + 1.0);
  }
  return lp;
}

double esf_log_prob(const CountsVector& a, ScaleParam theta) { return esf_log_prob(std::span<const int>(a.counts()), theta); }

AllocationVector polya_urn_sample(int n, ScaleParam theta, Rng& rng) {
  if (n < 1) throw ConstraintViolation("polya_urn_sample: n must be >= 1");
  AllocationVector c;
  c.reserve(n);
  std::vector<double> sizes;  // index = label - 1
  for (int k = 0; k < n; ++k) {
    // k customers already seated; new table w.p. theta / (k + theta).
    const double u = uniform01(rng) * (k + theta.value());
    double acc = 0.0;
    std::size_t chosen = sizes.size();
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      acc += sizes[i];
      if (u < acc) {
        chosen = i;
        break;
      }
    }
    if (chosen == sizes.size()) sizes.push_back(0.0);
    sizes[chosen] += 1.0;
    c.push_back(static_cast<Label>(chosen + 1));
  }
  return c;
}

CountsVector counts_of(std::span<const Label> allocation) {
  if (allocation.empty()) throw ConstraintViolation("counts_of: empty allocation");
  std::map<Label, int> sizes;
  for (Label l : allocation) ++sizes[l];
  std::vector<int> a(allocation.size(), 0);
  for (const auto& [label, size] : sizes) ++a[size - 1];
  return CountsVector(std::move(a));
}

bool is_canonical(std::span<const Label> allocation) {
  Label max_seen = 0;
  for (Label l : allocation) {
    if (l < 1 || l > max_seen + 1) return false;
    max_seen = std::max(max_seen, l);
  }
  return true;
}

std::vector<CountsVector> enumerate_partitions(int n) {
  if (n < 1) throw ConstraintViolation("enumerate_partitions: n must be >= 1");
  if (n > kMaxEnumerableN)
    throw CapacityError("enumerate_partitions: n = " + std::to_string(n) + " exceeds " +
                        std::to_string(kMaxEnumerableN));
  std::vector<CountsVector> out;
  std::vector<int> a(n, 0);
  // Choose a_1, then a_2, ... so that the emitted order is descending
  // lexicographic in (a_1, a_2, ...).
  std::function<void(int, int)> rec = [&](int j, int remaining) {
    if (remaining == 0) {
      out.emplace_back(a);
      return;
    }
    if (j > n) return;
    for (int cnt = remaining / j; cnt >= 0; --cnt) {
      a[j - 1] = cnt;
      rec(j + 1, remaining - cnt * j);
    }
    a[j - 1] = 0;
  };
  rec(1, n);
  return out;
}

}  // namespace tvdpm
