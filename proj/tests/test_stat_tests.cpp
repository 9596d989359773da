#include <doctest.h>

#include <cmath>

#include "tvdpm/errors.hpp"
#include "tvdpm/random.hpp"
#include "tvdpm/stat_tests.hpp"

using namespace tvdpm;

TEST_CASE("total variation") {
  std::map<int, double> p{{1, 0.5}, {2, 0.5}}, q{{2, 0.5}, {3, 0.5}};
  CHECK(tv_distance(p, q) == doctest::Approx(0.5));
  CHECK(tv_distance(p, p) == 0.0);
  const std::vector<int> xs{1, 1, 2, 3};
  const auto law = empirical_law<int>(xs);
  CHECK(law.at(1) == 0.5);
  CHECK(law.at(3) == 0.25);
}

TEST_CASE("kolmogorov tail values") {
  // Reference points of the limiting Kolmogorov distribution.
  CHECK(ks_p_value(1.3581 / std::sqrt(1e8), 100000000) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(ks_p_value(1.6276 / std::sqrt(1e8), 100000000) == doctest::Approx(0.01).epsilon(1e-3));
  CHECK(ks_p_value(0.0, 10) == 1.0);
}

TEST_CASE("ks test accepts the right law and rejects a shifted one") {
  Rng rng = make_stream(1);
  std::vector<double> xs;
  for (int i = 0; i < 5000; ++i) xs.push_back(normal(rng));
  CHECK(ks_p_value(ks_statistic(xs, [](double x) { return normal_cdf(x); }), xs.size()) > 0.01);
  CHECK(ks_p_value(ks_statistic(xs, [](double x) { return normal_cdf(x, 0.1); }), xs.size()) < 0.01);
}

TEST_CASE("chi-square independence") {
  const auto indep = chi_square_independence({{10, 20}, {20, 40}});
  CHECK(indep.statistic == doctest::Approx(0.0));
  CHECK(indep.dof == 1);
  CHECK(indep.p_value == doctest::Approx(1.0));
  const auto dep = chi_square_independence({{50, 0}, {0, 50}});
  CHECK(dep.statistic == doctest::Approx(100.0));
  CHECK(dep.p_value < 1e-10);
  // Empty rows and columns do not count towards the degrees of freedom.
  CHECK(chi_square_independence({{10, 0, 20}, {0, 0, 0}, {20, 0, 40}}).dof == 1);
  CHECK_THROWS_AS(chi_square_independence({{0, 0}}), ConstraintViolation);
}

TEST_CASE("mean estimate and correlation") {
  const std::vector<double> xs{1, 2, 3, 4};
  const auto m = mean_estimate(xs);
  CHECK(m.mean == 2.5);
  CHECK(m.std_error == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
  const std::vector<double> ys{2, 4, 6, 8}, zs{8, 6, 4, 2};
  CHECK(correlation(xs, ys) == doctest::Approx(1.0));
  CHECK(correlation(xs, zs) == doctest::Approx(-1.0));
  const std::vector<double> grid{0.0, 1.0, 2.0}, f{0.0, 1.0, 2.0};
  CHECK(trapezoid(grid, f) == doctest::Approx(2.0));
}
