#pragma once

// Monte Carlo checks of the urn's distributional properties. Every check
// draws one master seed from the caller's generator and gives replicate r its
// own substream, so results do not depend on the thread count.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tvdpm/deletion_urn.hpp"
#include "tvdpm/location_kernels.hpp"
#include "tvdpm/partition.hpp"
#include "tvdpm/random.hpp"
#include "tvdpm/stat_tests.hpp"

namespace tvdpm {

struct ValidationThresholds {
  double tv = 0.02;
  double ks_alpha = 0.01;
  double z = 3.0;
};

/// Exact Ewens law of the partitions of n (n <= kMaxEnumerableN).
std::map<CountsVector, double> esf_law(int n, ScaleParam theta);

/// TV distance between the law of counts_of(c_{t_check}) over n_mc runs of
/// the urn and the Ewens law. Throws CapacityError for n > 8.
double esf_marginal_test(const DeletionPolicy& policy, int n, ScaleParam theta, int t_check, int n_mc, Rng& rng,
                         int threads = 1);

struct ExpectedCountReport {
  /// Per initial box: closed form, Monte Carlo mean and z-score of the mass
  /// after one allocation round of n draws followed by uniform deletion.
  std::vector<double> expected, observed, std_error, z;
  /// Same for the total mass of boxes opened during the round.
  double expected_new = 0.0, observed_new = 0.0, std_error_new = 0.0, z_new = 0.0;

  double max_abs_z() const;
};

/// Starts from boxes with masses `initial_counts`. Throws UnsupportedError
/// unless the policy is a single Uniform leaf.
ExpectedCountReport expected_count_check(ScaleParam theta, const DeletionPolicy& policy, int n,
                                         const std::vector<std::int64_t>& initial_counts, int n_mc, Rng& rng,
                                         int threads = 1);

struct CorrelationCurve {
  std::vector<int> taus;
  std::vector<double> correlations;
  double theta = 0.0;
  double rho = 0.0;
  int n_mc = 0;
};

struct CorrelationOptions {
  /// Locations of alive boxes move through this kernel; base is N(0, 1).
  TransitionKernel kernel = StaticKernel{};
  int n = 1;
  int threads = 1;
};

/// Correlation across replicates between the predictive mean
/// sum_k m_k U_k / (M + theta) (+ theta / (M + theta) times the base mean) at
/// time burn_in and at burn_in + tau.
CorrelationCurve mean_correlation_curve(double theta, double rho, const std::vector<int>& taus, int n_mc,
                                        int burn_in, Rng& rng, const CorrelationOptions& options = {});

struct KsReport {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Runs n_chains chains of chain_length kernel steps from base draws and
/// compares the terminal values with the base CDF. Only GaussianKnownVar
/// bases are accepted (UnsupportedError otherwise).
KsReport kernel_stationarity_test(const TransitionKernel& kernel, const BaseMeasure& base, int chain_length,
                                  int n_chains, Rng& rng, int threads = 1);

/// TV between the partition of every allocation of `steps` steps of n draws
/// under Uniform(1) and the Ewens law of steps * n draws.
double no_deletion_equivalence_test(int n, int steps, ScaleParam theta, int n_mc, Rng& rng, int threads = 1);

/// Chi-square test of independence between the partitions of consecutive
/// batches under Uniform(0), measured at t = 2 and t = 3.
ChiSquareResult full_deletion_independence_test(int n, ScaleParam theta, int n_mc, Rng& rng, int threads = 1);

/// A broken AR(1) whose innovations are `scale` times too wide; it does not
/// leave N(mu0, sigma0^2) invariant unless scale == 1.
ScalarKernel broken_ar1(double phi, GaussianKnownVar base, double scale);

struct CheckResult {
  std::string name;
  std::string statistic_name;
  double statistic = 0.0;
  double threshold = 0.0;
  bool passed = false;
  /// True for negative controls, which pass when the process is rejected.
  bool negative_control = false;
};

struct SuiteOptions {
  bool quick = false;
  ValidationThresholds thresholds;
  std::uint64_t seed = 1;
  int threads = 1;
};

/// The validation suite behind `tvdpm validate`. Quick mode runs the Ewens
/// marginal checks at small n only.
std::vector<CheckResult> run_validation_suite(const SuiteOptions& options);

}  // namespace tvdpm
