#include "tvdpm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "parallel.hpp"
#include "tvdpm/errors.hpp"

namespace tvdpm {

namespace {

template <class F>
auto replicate(int n_mc, int threads, std::uint64_t seed, F draw) {
  using T = decltype(draw(std::declval<Rng&>()));
  std::vector<std::optional<T>> slots(static_cast<std::size_t>(n_mc));
  detail::parallel_for(slots.size(), threads, [&](std::size_t r) {
    Rng rng = make_stream(seed, {static_cast<std::uint64_t>(r)});
    slots[r].emplace(draw(rng));
  });
  std::vector<T> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

double require_uniform(const DeletionPolicy& policy) {
  const auto* u = std::get_if<policy::Uniform>(&policy.kind);
  if (u == nullptr) throw UnsupportedError("this check is defined for uniform deletion only");
  return u->rho;
}

void require_positive(int value, const char* what) {
  if (value < 1) throw ConstraintViolation(std::string(what) + " must be >= 1");
}

}  // namespace

std::map<CountsVector, double> esf_law(int n, ScaleParam theta) {
  std::map<CountsVector, double> law;
  for (const auto& a : enumerate_partitions(n)) law[a] = std::exp(esf_log_prob(a, theta));
  return law;
}

double esf_marginal_test(const DeletionPolicy& policy, int n, ScaleParam theta, int t_check, int n_mc, Rng& rng,
                         int threads) {
  if (n > 8) throw CapacityError("esf_marginal_test enumerates partitions and needs n <= 8");
  require_positive(n, "n");
  require_positive(t_check, "t_check");
  require_positive(n_mc, "n_mc");
  policy.validate();
  const auto draws = replicate(n_mc, threads, rng(), [&](Rng& local) {
    UrnState state{theta};
    AllocationVector last;
    for (int s = 0; s < t_check; ++s) {
      auto r = step(std::move(state), policy, n, local);
      state = std::move(r.state);
      last = std::move(r.allocations);
    }
    return counts_of(last);
  });
  return tv_distance(empirical_law<CountsVector>(draws), esf_law(n, theta));
}

double ExpectedCountReport::max_abs_z() const {
  double worst = std::abs(z_new);
  for (double v : z) worst = std::max(worst, std::abs(v));
  return worst;
}

ExpectedCountReport expected_count_check(ScaleParam theta, const DeletionPolicy& policy, int n,
                                         const std::vector<std::int64_t>& initial_counts, int n_mc, Rng& rng,
                                         int threads) {
  const double rho = require_uniform(policy);
  policy.validate();
  require_positive(n, "n");
  require_positive(n_mc, "n_mc");
  std::map<Label, std::int64_t> boxes;
  double total = 0.0;
  for (std::size_t i = 0; i < initial_counts.size(); ++i) {
    if (initial_counts[i] < 1) throw ConstraintViolation("initial counts must be positive");
    boxes[static_cast<Label>(i + 1)] = initial_counts[i];
    total += static_cast<double>(initial_counts[i]);
  }
  const UrnState start = UrnState::from_boxes(theta, boxes);
  const std::size_t K = initial_counts.size();

  const auto draws = replicate(n_mc, threads, rng(), [&](Rng& local) {
    auto allocated = allocate_batch(start, n, local).state;
    const auto after = delete_uniform(std::move(allocated), rho, local);
    std::vector<double> masses(K + 1, 0.0);
    for (const auto& [label, m] : after.boxes()) {
      if (label <= static_cast<Label>(K))
        masses[static_cast<std::size_t>(label - 1)] = static_cast<double>(m);
      else
        masses[K] += static_cast<double>(m);
    }
    return masses;
  });

  ExpectedCountReport report;
  const double th = theta.value();
  for (std::size_t i = 0; i <= K; ++i) {
    std::vector<double> column;
    column.reserve(draws.size());
    for (const auto& d : draws) column.push_back(d[i]);
    const auto est = mean_estimate(column);
    if (i < K) {
      const double m = static_cast<double>(initial_counts[i]);
      const double expected = rho * (m + n * m / (th + total));
      report.expected.push_back(expected);
      report.observed.push_back(est.mean);
      report.std_error.push_back(est.std_error);
      report.z.push_back(est.z_score(expected));
    } else {
      report.expected_new = rho * n * th / (th + total);
      report.observed_new = est.mean;
      report.std_error_new = est.std_error;
      report.z_new = est.z_score(report.expected_new);
    }
  }
  return report;
}

CorrelationCurve mean_correlation_curve(double theta, double rho, const std::vector<int>& taus, int n_mc,
                                        int burn_in, Rng& rng, const CorrelationOptions& options) {
  require_positive(n_mc, "n_mc");
  if (burn_in < 0) throw ConstraintViolation("burn_in must be >= 0");
  int max_tau = 0;
  for (int tau : taus) {
    if (tau < 0) throw ConstraintViolation("taus must be >= 0");
    max_tau = std::max(max_tau, tau);
  }
  const GaussianKnownVar base{0.0, 1.0};
  const ScaleParam th(theta);
  const auto deletion = DeletionPolicy::uniform(rho);
  const BaseMeasure base_measure = base;

  // Each replicate returns the proxy mean at burn_in + tau for tau = 0..max_tau.
  const auto paths = replicate(n_mc, options.threads, rng(), [&](Rng& local) {
    UrnState state{th};
    std::map<Label, double> where;
    std::vector<double> path;
    path.reserve(static_cast<std::size_t>(max_tau + 1));
    const int steps = std::max(burn_in, 1) + max_tau;
    for (int s = 1; s <= steps; ++s) {
      state = step(std::move(state), deletion, options.n, local).state;
      for (auto it = where.begin(); it != where.end();) {
        if (!state.contains(it->first)) {
          it = where.erase(it);
        } else {
          if (!is_static(options.kernel))
            it->second = std::get<double>(transition(options.kernel, Location(it->second), local));
          ++it;
        }
      }
      for (Label l : state.labels())
        if (!where.count(l)) where[l] = std::get<double>(sample_base(base_measure, local));
      if (s >= std::max(burn_in, 1)) {
        const double M = static_cast<double>(state.total_mass());
        double mean = theta / (M + theta) * base.mu0;
        for (const auto& [l, u] : where) mean += static_cast<double>(state.mass(l)) * u / (M + theta);
        path.push_back(mean);
      }
    }
    return path;
  });

  CorrelationCurve curve{taus, {}, theta, rho, n_mc};
  std::vector<double> x(paths.size()), y(paths.size());
  for (std::size_t r = 0; r < paths.size(); ++r) x[r] = paths[r][0];
  for (int tau : taus) {
    for (std::size_t r = 0; r < paths.size(); ++r) y[r] = paths[r][static_cast<std::size_t>(tau)];
    curve.correlations.push_back(correlation(x, y));
  }
  return curve;
}

KsReport kernel_stationarity_test(const TransitionKernel& kernel, const BaseMeasure& base, int chain_length,
                                  int n_chains, Rng& rng, int threads) {
  const auto* g = std::get_if<GaussianKnownVar>(&base);
  if (g == nullptr) throw UnsupportedError("kernel_stationarity_test needs a scalar Gaussian base");
  validate(kernel);
  require_positive(n_chains, "n_chains");
  if (chain_length < 0) throw ConstraintViolation("chain_length must be >= 0");
  const auto ends = replicate(n_chains, threads, rng(), [&](Rng& local) {
    Location u = sample_base(base, local);
    for (int s = 0; s < chain_length; ++s) u = transition(kernel, u, local);
    return std::get<double>(u);
  });
  KsReport report;
  report.statistic = ks_statistic(ends, [&](double x) { return normal_cdf(x, g->mu0, g->sigma0); });
  report.p_value = ks_p_value(report.statistic, ends.size());
  return report;
}

double no_deletion_equivalence_test(int n, int steps, ScaleParam theta, int n_mc, Rng& rng, int threads) {
  require_positive(n, "n");
  require_positive(steps, "steps");
  require_positive(n_mc, "n_mc");
  if (n * steps > kMaxEnumerableN) throw CapacityError("too many draws to enumerate");
  const auto keep_all = DeletionPolicy::uniform(1.0);
  const auto draws = replicate(n_mc, threads, rng(), [&](Rng& local) {
    UrnState state{theta};
    AllocationVector all;
    for (int s = 0; s < steps; ++s) {
      auto r = step(std::move(state), keep_all, n, local);
      state = std::move(r.state);
      all.insert(all.end(), r.allocations.begin(), r.allocations.end());
    }
    return counts_of(all);
  });
  return tv_distance(empirical_law<CountsVector>(draws), esf_law(n * steps, theta));
}

ChiSquareResult full_deletion_independence_test(int n, ScaleParam theta, int n_mc, Rng& rng, int threads) {
  require_positive(n, "n");
  require_positive(n_mc, "n_mc");
  const auto parts = enumerate_partitions(n);
  std::map<CountsVector, std::size_t> index;
  for (std::size_t i = 0; i < parts.size(); ++i) index[parts[i]] = i;
  const auto wipe = DeletionPolicy::uniform(0.0);
  const auto pairs = replicate(n_mc, threads, rng(), [&](Rng& local) {
    UrnState state{theta};
    std::pair<std::size_t, std::size_t> out{};
    for (int s = 1; s <= 3; ++s) {
      auto r = step(std::move(state), wipe, n, local);
      state = std::move(r.state);
      if (s == 2) out.first = index.at(counts_of(r.allocations));
      if (s == 3) out.second = index.at(counts_of(r.allocations));
    }
    return out;
  });
  std::vector<std::vector<double>> table(parts.size(), std::vector<double>(parts.size(), 0.0));
  for (const auto& [a, b] : pairs) table[a][b] += 1.0;
  return chi_square_independence(table);
}

ScalarKernel broken_ar1(double phi, GaussianKnownVar base, double scale) {
  const double innovation = std::sqrt(1.0 - phi * phi) * base.sigma0 * scale;
  return ScalarKernel{"ar1-innovation-x" + std::to_string(scale), [=](double u, Rng& rng) {
                        return phi * u + (1.0 - phi) * base.mu0 + innovation * normal(rng);
                      }};
}

std::vector<CheckResult> run_validation_suite(const SuiteOptions& options) {
  const auto& th = options.thresholds;
  Rng rng = make_stream(options.seed);
  std::vector<CheckResult> results;
  const auto tv_check = [&](std::string name, double tv) {
    results.push_back({std::move(name), "tv", tv, th.tv, tv < th.tv, false});
  };

  const std::vector<std::pair<std::string, DeletionPolicy>> policies{
      {"uniform(0.7)", DeletionPolicy::uniform(0.7)},
      {"size-biased", DeletionPolicy::size_biased()},
      {"mixture(0.98)", DeletionPolicy::mixture(0.98, DeletionPolicy::uniform(0.7), DeletionPolicy::size_biased())},
      {"compose(uniform,size-biased)",
       DeletionPolicy::compose({DeletionPolicy::uniform(0.7), DeletionPolicy::size_biased()})},
      {"sliding-window(2)", DeletionPolicy::sliding_window(2)},
  };
  const int n = options.quick ? 4 : 5;
  const double theta = options.quick ? 1.0 : 1.5;
  const int t_check = options.quick ? 10 : 20;
  const int reps = options.quick ? 20000 : 200000;
  for (const auto& [name, policy] : policies)
    tv_check("esf-marginal " + name + " n=" + std::to_string(n) + " t=" + std::to_string(t_check),
             esf_marginal_test(policy, n, ScaleParam(theta), t_check, reps, rng, options.threads));
  if (options.quick) return results;

  for (double rho : {0.3, 0.5, 0.9}) {
    const auto report =
        expected_count_check(ScaleParam(1.0), DeletionPolicy::uniform(rho), 1, {2, 1}, 100000, rng, options.threads);
    results.push_back({"expected-counts rho=" + std::to_string(rho), "max|z|", report.max_abs_z(), th.z,
                       report.max_abs_z() < th.z, false});
  }

  tv_check("no-deletion equals static urn",
           no_deletion_equivalence_test(2, 3, ScaleParam(1.0), 100000, rng, options.threads));
  const auto indep = full_deletion_independence_test(3, ScaleParam(1.0), 100000, rng, options.threads);
  results.push_back({"full-deletion independence", "p-value", indep.p_value, th.ks_alpha,
                     indep.p_value > th.ks_alpha, false});

  const GaussianKnownVar base{0.0, 1.0};
  const auto ar1 = kernel_stationarity_test(GaussianAR1{0.9, base}, base, 100, 10000, rng, options.threads);
  results.push_back({"ar1 stationarity", "ks p-value", ar1.p_value, th.ks_alpha, ar1.p_value > th.ks_alpha, false});
  const auto broken =
      kernel_stationarity_test(broken_ar1(0.9, base, 1.5), base, 100, 10000, rng, options.threads);
  results.push_back(
      {"broken-scale ar1 (negative control)", "ks p-value", broken.p_value, th.ks_alpha, broken.p_value < th.ks_alpha,
       true});

  const std::vector<int> taus{0, 1, 5, 10};
  const auto fast = mean_correlation_curve(3.0, 0.9, taus, 10000, 200, rng, {StaticKernel{}, 1, options.threads});
  const auto slow = mean_correlation_curve(3.0, 0.99, taus, 10000, 200, rng, {StaticKernel{}, 1, options.threads});
  const auto none = mean_correlation_curve(3.0, 0.0, taus, 10000, 200, rng, {StaticKernel{}, 1, options.threads});
  bool ordered = true;
  for (std::size_t i = 1; i < taus.size(); ++i) ordered = ordered && slow.correlations[i] > fast.correlations[i];
  results.push_back({"correlation rho=0.99 above rho=0.9", "ordered", ordered ? 1.0 : 0.0, 1.0, ordered, false});
  double worst = 0.0;
  for (std::size_t i = 1; i < taus.size(); ++i) worst = std::max(worst, std::abs(none.correlations[i]));
  const double bound = 3.0 / std::sqrt(10000.0);
  results.push_back({"correlation rho=0 vanishes", "max|corr|", worst, bound, worst < bound, false});
  return results;
}

}  // namespace tvdpm
