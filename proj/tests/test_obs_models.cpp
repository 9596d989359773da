#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "tvdpm/errors.hpp"
#include "tvdpm/obs_models.hpp"
#include "tvdpm/stat_tests.hpp"

using namespace tvdpm;
using boost::math::quadrature::exp_sinh;
using boost::math::quadrature::gauss_kronrod;

namespace {

const NormalInverseGamma kExperimentBase{0.0, 0.1, 2.0, 1.0};

double gauss_pdf(double x, double m, double v) {
  return std::exp(-0.5 * (x - m) * (x - m) / v) / std::sqrt(2.0 * std::numbers::pi * v);
}

// Integral over (mean, variance) of g(mean, variance) * prior(mean, variance)
// * prod_i N(x_i; mean, variance), by nested quadrature. The prior density is
// written out directly: InvGamma(nu0/2, lambda0/2) times N(mu0, variance/kappa0).
template <class G>
double nig_integral(const NormalInverseGamma& b, const std::vector<double>& xs, G g) {
  const double a = b.nu0 / 2.0, scale = b.lambda0 / 2.0;
  auto inner = [&](double var) {
    auto f = [&](double mean) {
      double lik = 1.0;
      for (double x : xs) lik *= gauss_pdf(x, mean, var);
      return g(mean, var) * lik * gauss_pdf(mean, b.mu0, var / b.kappa0);
    };
    const double sd = std::sqrt(var / b.kappa0);
    const double lo = std::min(b.mu0 - 40.0 * sd, -40.0), hi = std::max(b.mu0 + 40.0 * sd, 40.0);
    const double ig = std::exp(a * std::log(scale) - std::lgamma(a) - (a + 1.0) * std::log(var) - scale / var);
    return ig * gauss_kronrod<double, 61>::integrate(f, lo, hi, 15, 1e-13);
  };
  exp_sinh<double> outer;
  return outer.integrate(inner, 1e-14);
}

double quadrature_predictive(const NormalInverseGamma& b, std::vector<double> xs, double z) {
  const double denom = nig_integral(b, xs, [](double, double) { return 1.0; });
  return nig_integral(b, xs, [z](double m, double v) { return gauss_pdf(z, m, v); }) / denom;
}

}  // namespace

TEST_CASE("gaussian log likelihood at and around the mean") {
  const ObservationModel model = GaussianModel{kExperimentBase};
  const double var = 2.5;
  const double peak = -0.5 * std::log(2.0 * std::numbers::pi * var);
  CHECK(log_likelihood(model, 1.0, MeanVar{1.0, var}) == doctest::Approx(peak));
  CHECK(log_likelihood(model, 1.0 + std::sqrt(var), MeanVar{1.0, var}) == doctest::Approx(peak - 0.5));
  CHECK(log_likelihood(model, 1.0 - std::sqrt(var), MeanVar{1.0, var}) == doctest::Approx(peak - 0.5));
}

TEST_CASE("topic log likelihood") {
  const ObservationModel model = TopicModel{{0.5, 4}};
  const std::vector<double> uniform(4, 0.25);
  for (int w = 1; w <= 4; ++w) CHECK(log_likelihood(model, w, uniform) == doctest::Approx(std::log(0.25)));
  const std::vector<double> spike{1.0, 0.0, 0.0, 0.0};
  CHECK(log_likelihood(model, 2, spike) == -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(log_likelihood(model, 5, uniform), ConstraintViolation);
  CHECK_THROWS_AS(validate_observation(model, 0.0), ConstraintViolation);
  CHECK_THROWS_AS(validate_observation(model, 1.5), ConstraintViolation);
}

TEST_CASE("student-t predictive of an empty cluster matches quadrature") {
  const ObservationModel model = GaussianModel{kExperimentBase};
  for (double z : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
    const double exact = std::exp(predictive_log_prob(model, z, {}));
    const double quad = quadrature_predictive(kExperimentBase, {}, z);
    CAPTURE(z);
    CHECK(std::abs(exact - quad) < 1e-6);
  }
}

TEST_CASE("student-t predictive of a populated cluster matches quadrature") {
  const NormalInverseGamma base{0.5, 0.7, 3.0, 2.0};
  const ObservationModel model = GaussianModel{base};
  const std::vector<double> cluster{0.3, -0.5, 1.2};
  for (double z : {-2.0, 0.0, 0.9, 3.0}) {
    const double exact = std::exp(predictive_log_prob(model, z, cluster));
    const double quad = quadrature_predictive(base, cluster, z);
    CAPTURE(z);
    CHECK(std::abs(exact - quad) < 1e-6);
  }
}

TEST_CASE("gaussian log marginal matches quadrature") {
  const NormalInverseGamma base{0.5, 0.7, 3.0, 2.0};
  const std::vector<double> cluster{0.3, -0.5, 1.2};
  const double quad = nig_integral(base, cluster, [](double, double) { return 1.0; });
  CHECK(log_marginal(GaussianModel{base}, cluster) == doctest::Approx(std::log(quad)).epsilon(1e-8));
}

TEST_CASE("posterior mean of the mean component after one observation") {
  const ObservationModel model = GaussianModel{kExperimentBase};
  const std::vector<double> obs{1.0};
  const double expected = (0.1 * 0.0 + 1.0) / (0.1 + 1.0);
  const double z = nig_integral(kExperimentBase, obs, [](double, double) { return 1.0; });
  const double quad = nig_integral(kExperimentBase, obs, [](double m, double) { return m; }) / z;
  CHECK(quad == doctest::Approx(expected).epsilon(1e-6));
  CHECK(expected == doctest::Approx(0.9090909).epsilon(1e-6));

  Rng rng = make_stream(61);
  std::vector<double> means;
  for (int r = 0; r < 100000; ++r) means.push_back(std::get<MeanVar>(posterior_sample(model, obs, rng)).mean);
  CHECK(std::abs(mean_estimate(means).z_score(expected)) < 3.0);
  CHECK(std::get<MeanVar>(ClusterStats(model).posterior_mean(model)).mean == 0.0);
}

TEST_CASE("an overwhelming prior pins the posterior mean at mu0") {
  const ObservationModel model = GaussianModel{NormalInverseGamma{0.3, 1e10, 2.0, 1.0}};
  Rng rng = make_stream(62);
  const std::vector<double> obs{5.0};
  std::vector<double> dev;
  for (int r = 0; r < 1000; ++r) dev.push_back(std::abs(std::get<MeanVar>(posterior_sample(model, obs, rng)).mean - 0.3));
  std::nth_element(dev.begin(), dev.begin() + 500, dev.end());
  CHECK(dev[500] < 1e-3);
}

TEST_CASE("empty-cluster posterior draws follow the base") {
  const ObservationModel model = KnownVarianceGaussianModel{1.0, GaussianKnownVar{2.0, 0.5}};
  Rng rng = make_stream(63);
  std::vector<double> xs;
  for (int r = 0; r < 10000; ++r) xs.push_back(std::get<double>(posterior_sample(model, {}, rng)));
  const double d = ks_statistic(xs, [](double x) { return normal_cdf(x, 2.0, 0.5); });
  CHECK(ks_p_value(d, xs.size()) > 0.01);
}

TEST_CASE("topic predictive at K=2 matches integration over the simplex") {
  const double theta_v = 0.5;
  const ObservationModel model = TopicModel{{theta_v, 2}};
  const double alpha = theta_v / 2.0;
  for (auto [n1, n2] : {std::pair{0, 0}, std::pair{3, 1}, std::pair{0, 4}}) {
    std::vector<double> cluster;
    for (int i = 0; i < n1; ++i) cluster.push_back(1);
    for (int i = 0; i < n2; ++i) cluster.push_back(2);
    // Beta(alpha + n1, alpha + n2) kernel; the endpoint singularities are
    // removed with p = x^4 on [0, 1/2] and 1 - p = y^4 on [1/2, 1].
    auto integral = [&](double extra) {
      auto kernel = [&](double p, double q) { return std::pow(p, alpha + n1 + extra - 1.0) * std::pow(q, alpha + n2 - 1.0); };
      const double edge = std::pow(0.5, 0.25);
      auto lower = [&](double x) { return kernel(std::pow(x, 4), 1.0 - std::pow(x, 4)) * 4.0 * x * x * x; };
      auto upper = [&](double y) { return kernel(1.0 - std::pow(y, 4), std::pow(y, 4)) * 4.0 * y * y * y; };
      return gauss_kronrod<double, 61>::integrate(lower, 0.0, edge, 15, 1e-14) +
             gauss_kronrod<double, 61>::integrate(upper, 0.0, edge, 15, 1e-14);
    };
    const double p1 = integral(1.0) / integral(0.0);
    CHECK(std::exp(predictive_log_prob(model, 1, cluster)) == doctest::Approx(p1).epsilon(1e-9));
    CHECK(std::exp(predictive_log_prob(model, 1, cluster)) ==
          doctest::Approx((n1 + alpha) / (n1 + n2 + theta_v)).epsilon(1e-14));
  }
  CHECK(std::exp(predictive_log_prob(TopicModel{{0.5, 20}}, 7, {})) == doctest::Approx(1.0 / 20.0));
}

TEST_CASE("topic predictive normalizes over the vocabulary") {
  const ObservationModel model = TopicModel{{0.5, 20}};
  const std::vector<double> cluster{1, 1, 3, 20, 7, 7, 7};
  double total = 0.0;
  for (int w = 1; w <= 20; ++w) total += std::exp(predictive_log_prob(model, w, cluster));
  CHECK(std::abs(total - 1.0) < 1e-12);
}

TEST_CASE("predictive equals the posterior average of the likelihood") {
  const int draws = 1000000;
  struct Case {
    ObservationModel model;
    std::vector<double> cluster;
    double z;
  };
  const std::vector<Case> cases{
      {GaussianModel{kExperimentBase}, {0.3, -0.5, 1.2}, 0.4},
      {GaussianModel{kExperimentBase}, {}, 1.0},
      {TopicModel{{0.5, 5}}, {1, 1, 2, 5}, 1},
      {TopicModel{{0.5, 5}}, {1, 1, 2, 5}, 3},
      {KnownVarianceGaussianModel{0.7, GaussianKnownVar{0.0, 2.0}}, {1.0, 1.5}, 0.2},
      {KnownVarianceGaussianModel{1.0, DiscreteAtoms{{-1.0, 1.0}, {0.5, 0.5}}}, {0.8}, -0.3},
  };
  std::uint64_t seed = 64;
  for (const auto& c : cases) {
    Rng rng = make_stream(++seed);
    double acc = 0.0;
    for (int r = 0; r < draws; ++r) acc += std::exp(log_likelihood(c.model, c.z, posterior_sample(c.model, c.cluster, rng)));
    const double exact = std::exp(predictive_log_prob(c.model, c.z, c.cluster));
    CAPTURE(seed);
    CHECK(std::abs(acc / draws - exact) / exact < 0.01);
  }
}

TEST_CASE("predictive is exchangeable in the cluster") {
  const std::vector<ObservationModel> models{GaussianModel{kExperimentBase}, TopicModel{{0.5, 6}},
                                             KnownVarianceGaussianModel{1.0, GaussianKnownVar{}}};
  for (const auto& model : models) {
    std::vector<double> cluster = is_gaussian(model) ? std::vector<double>{0.1, 2.0, -1.0, 0.5}
                                                     : std::vector<double>{1, 3, 3, 6};
    std::sort(cluster.begin(), cluster.end());
    const double ref = predictive_log_prob(model, 1.0, cluster);
    do {
      CHECK(predictive_log_prob(model, 1.0, cluster) == doctest::Approx(ref).epsilon(1e-12));
    } while (std::next_permutation(cluster.begin(), cluster.end()));
  }
}

TEST_CASE("log marginal is the product of sequential predictives") {
  const std::vector<ObservationModel> models{
      GaussianModel{kExperimentBase}, TopicModel{{0.5, 6}}, KnownVarianceGaussianModel{0.8, GaussianKnownVar{0.5, 1.5}},
      KnownVarianceGaussianModel{1.0, DiscreteAtoms{{-1.0, 0.0, 2.0}, {0.2, 0.3, 0.5}}}};
  for (const auto& model : models) {
    const std::vector<double> data = is_gaussian(model) ? std::vector<double>{0.1, 2.0, -1.0, 0.5, 0.5}
                                                        : std::vector<double>{1, 3, 3, 6, 1};
    double chain = 0.0;
    ClusterStats stats(model);
    for (double z : data) {
      chain += stats.predictive_log_prob(model, z);
      stats.add(z);
    }
    CHECK(stats.log_marginal(model) == doctest::Approx(chain).epsilon(1e-12));
    CHECK(log_marginal(model, data) == doctest::Approx(chain).epsilon(1e-12));
    CHECK(ClusterStats(model).log_marginal(model) == 0.0);

    ClusterStats left(model), right(model);
    for (std::size_t i = 0; i < data.size(); ++i) (i % 2 ? left : right).add(data[i]);
    left.merge(right);
    CHECK(left.log_marginal(model) == doctest::Approx(chain).epsilon(1e-12));
    left.remove(data[0]);
    CHECK(left.count() == static_cast<std::int64_t>(data.size()) - 1);
  }
}

TEST_CASE("known-variance posterior mean after one observation") {
  // With obs variance s2 and prior variance s2/kappa0 the update is
  // (kappa0 mu0 + z) / (kappa0 + 1).
  const double kappa0 = 0.25, s = 1.3, mu0 = -0.4, z = 2.0;
  const ObservationModel model = KnownVarianceGaussianModel{s, GaussianKnownVar{mu0, s / std::sqrt(kappa0)}};
  ClusterStats stats(model);
  stats.add(z);
  CHECK(std::get<double>(stats.posterior_mean(model)) == doctest::Approx((kappa0 * mu0 + z) / (kappa0 + 1.0)));
}

TEST_CASE("gaussian belief batch update equals sequential updates") {
  GaussianBelief a{0.3, 2.0}, b{0.3, 2.0};
  const std::vector<double> zs{1.0, -0.5, 0.25};
  double seq = 0.0, sum = 0.0, sum_sq = 0.0;
  for (double z : zs) {
    seq += a.predictive_log_prob(z, 0.49);
    a.update(z, 0.49);
    sum += z;
    sum_sq += z * z;
  }
  CHECK(b.update_batch(3.0, sum, sum_sq, 0.49) == doctest::Approx(seq).epsilon(1e-12));
  CHECK(b.mean == doctest::Approx(a.mean).epsilon(1e-12));
  CHECK(b.variance == doctest::Approx(a.variance).epsilon(1e-12));
}

TEST_CASE("AR(1) cluster marginal against the joint gaussian density") {
  // Observations of an AR(1) cluster are jointly Gaussian with covariance
  // sigma0^2 phi^|t_i - t_j| + s^2 [i == j]. Evaluate that density directly.
  const KnownVarianceGaussianModel model{0.6, GaussianKnownVar{0.2, 1.1}};
  const std::vector<TimedObservation> obs{{2, 0.5}, {2, 0.9}, {3, -0.3}, {6, 1.4}, {7, 1.1}};
  for (double phi : {0.0, 0.5, 0.95, 1.0}) {
    const GaussianAR1 kernel{phi, GaussianKnownVar{0.2, 1.1}};
    const std::size_t n = obs.size();
    std::vector<std::vector<double>> cov(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        cov[i][j] = 1.1 * 1.1 * std::pow(phi, std::abs(static_cast<double>(obs[i].time - obs[j].time))) +
                    (i == j ? 0.36 : 0.0);
    // Cholesky, then log N(x; mu, cov).
    std::vector<std::vector<double>> L(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        double s = cov[i][j];
        for (std::size_t k = 0; k < j; ++k) s -= L[i][k] * L[j][k];
        L[i][j] = i == j ? std::sqrt(s) : s / L[j][j];
      }
    std::vector<double> y(n);
    double quad = 0.0, logdet = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = obs[i].value - 0.2;
      for (std::size_t k = 0; k < i; ++k) s -= L[i][k] * y[k];
      y[i] = s / L[i][i];
      quad += y[i] * y[i];
      logdet += 2.0 * std::log(L[i][i]);
    }
    const double expected = -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + logdet + quad);
    CAPTURE(phi);
    CHECK(log_marginal_ar1(model, kernel, obs) == doctest::Approx(expected).epsilon(1e-10));
  }
}
