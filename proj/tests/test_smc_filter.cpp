#include <doctest.h>

#include <cmath>
#include <numbers>

#include "tvdpm/errors.hpp"
#include "tvdpm/smc_filter.hpp"
#include "tvdpm/stat_tests.hpp"

#include "oracles.hpp"

using namespace tvdpm;
using namespace tvdpm::oracle;

namespace {

const NormalInverseGamma kBase{0.0, 0.1, 2.0, 1.0};

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = a + (b - a) * i / (n - 1);
  return g;
}

std::vector<ObservationBatch> gaussian_stream(int T, double mean, double sd, std::uint64_t seed) {
  Rng rng = make_stream(seed);
  std::vector<ObservationBatch> out;
  for (int t = 1; t <= T; ++t) out.push_back({t, {normal(rng, mean, sd)}});
  return out;
}

}  // namespace

TEST_CASE("init_particles") {
  FilterConfig one;
  one.N = 1;
  const auto p1 = init_particles(one, ScaleParam(1.0));
  REQUIRE(p1.particles.size() == 1);
  CHECK(p1.particles[0].weight() == doctest::Approx(1.0));

  FilterConfig many;
  many.N = 1000;
  const auto pop = init_particles(many, ScaleParam(1.0));
  for (const auto& p : pop.particles) {
    CHECK(p.weight() == doctest::Approx(1e-3));
    CHECK(p.urn.empty());
    CHECK(p.locations.empty());
  }
  FilterConfig bad;
  bad.N = 0;
  CHECK_THROWS_AS(init_particles(bad, ScaleParam(1.0)), ConstraintViolation);
}

TEST_CASE("effective sample size") {
  CHECK(ess(std::vector<double>{0.5, 0.5}) == doctest::Approx(2.0));
  CHECK(ess(std::vector<double>{1.0, 0.0}) == doctest::Approx(1.0));
  CHECK(ess(std::vector<double>(40, 1.0 / 40)) == doctest::Approx(40.0));
}

TEST_CASE("systematic resampling") {
  Rng rng = make_stream(71);
  const std::vector<double> uniform(5, 0.2);
  CHECK(systematic_resample(uniform, 5, rng) == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK(systematic_resample(std::vector<double>{1.0, 0.0}, 2, rng) == std::vector<std::size_t>{0, 0});

  const std::vector<double> w{0.75, 0.25};
  std::vector<double> copies;
  for (int r = 0; r < 100000; ++r) {
    const auto picks = systematic_resample(w, 2, rng);
    copies.push_back(static_cast<double>(std::count(picks.begin(), picks.end(), 0u)));
  }
  const auto m = mean_estimate(copies);
  // Systematic offspring of particle 1 is 1 or 2, so the SE can be tiny but is not zero.
  CHECK(std::abs(m.z_score(1.5)) < 3.0);

  Population pop;
  pop.particles.resize(3);
  pop.particles[0].log_weight = std::log(0.0);
  pop.particles[1].log_weight = std::log(1.0);
  pop.particles[2].log_weight = std::log(0.0);
  pop.particles[1].rho = 0.25;
  const auto out = resample(pop, rng);
  for (const auto& p : out.particles) {
    CHECK(p.rho == 0.25);
    CHECK(p.weight() == doctest::Approx(1.0 / 3.0));
  }
}

TEST_CASE("prior proposal: the weight increment is the likelihood of the batch") {
  // Sampled locations proposed from the prior: every proposal term cancels.
  const ObservationModel model = GaussianModel{kBase};
  FilterConfig config;
  config.N = 4;
  config.proposal = AllocationProposal::Prior;
  config.locations = LocationMode::Sampled;
  config.policy = DeletionPolicy::uniform(0.5);
  config.ess_threshold_fraction = 1e-9;
  Rng rng = make_stream(72);
  auto pop = init_particles(config, ScaleParam(1.0));
  pop = advance(std::move(pop), {1, {0.3}}, model, StaticKernel{}, config, rng);
  const ObservationBatch batch{2, {-1.0, 2.0}};
  pop = advance(std::move(pop), batch, model, StaticKernel{}, config, rng);
  for (const auto& p : pop.particles) {
    REQUIRE(p.allocations.size() == 2);
    double expected = 0.0;
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& u = std::get<MeanVar>(std::get<Location>(p.locations.at(p.allocations[k])));
      expected += -0.5 * std::log(2.0 * std::numbers::pi * u.variance) -
                  0.5 * (batch.values[k] - u.mean) * (batch.values[k] - u.mean) / u.variance;
    }
    CHECK(p.log_increment == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("a single particle keeps weight one") {
  const ObservationModel model = GaussianModel{kBase};
  FilterConfig config;
  config.N = 1;
  config.policy = DeletionPolicy::uniform(0.7);
  Rng rng = make_stream(73);
  auto pop = init_particles(config, ScaleParam(1.0));
  for (const auto& b : gaussian_stream(20, 3.0, 2.0, 74)) {
    pop = advance(std::move(pop), b, model, StaticKernel{}, config, rng);
    CHECK(pop.particles[0].weight() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("weights stay normalized and the ESS stays in range") {
  const ObservationModel model = GaussianModel{kBase};
  for (auto mode : {LocationMode::Marginalized, LocationMode::Sampled}) {
    FilterConfig config;
    config.N = 200;
    config.locations = mode;
    config.policy = DeletionPolicy::mixture(0.9, DeletionPolicy::uniform(0.8), DeletionPolicy::size_biased());
    config.rho_walk = RhoWalk{200.0, 0.8};
    Rng rng = make_stream(75);
    auto pop = init_particles(config, ScaleParam(1.0));
    Rng data = make_stream(76);
    for (int t = 1; t <= 30; ++t) {
      pop = advance(std::move(pop), {t, {normal(data, t < 15 ? -2.0 : 2.0, 1.0), normal(data)}}, model,
                    StaticKernel{}, config, rng);
      double total = 0.0;
      for (double w : pop.weights()) total += w;
      CHECK(std::abs(total - 1.0) < 1e-9);
      CHECK(pop.ess >= 1.0 - 1e-9);
      CHECK(pop.ess <= config.N + 1e-9);
      for (const auto& p : pop.particles) {
        REQUIRE(p.locations.size() == p.urn.num_boxes());
        for (const auto& [label, belief] : p.locations) REQUIRE(p.urn.contains(label));
      }
    }
  }
}

TEST_CASE("all weights zero raises a degeneracy error with the time") {
  const ObservationModel model = GaussianModel{kBase};
  FilterConfig config;
  config.N = 5;
  config.proposal = AllocationProposal::Prior;
  config.locations = LocationMode::Sampled;
  Rng rng = make_stream(77);
  auto pop = init_particles(config, ScaleParam(1.0));
  pop = advance(std::move(pop), {1, {0.0}}, model, StaticKernel{}, config, rng);
  try {
    pop = advance(std::move(pop), {2, {1e200}}, model, StaticKernel{}, config, rng);
    FAIL("expected a degeneracy error");
  } catch (const DegeneracyError& e) {
    CHECK(e.time() == 2);
  }
}

TEST_CASE("estimate_density limiting cases") {
  const ObservationModel model = GaussianModel{kBase};
  const auto grid = linspace(-5.0, 5.0, 101);

  Population big;
  Particle p;
  p.urn = UrnState::from_boxes(ScaleParam(1.0), {{1, 1000000000}});
  p.locations.emplace(1, Location{MeanVar{0.0, 1.0}});
  big.particles.push_back(p);
  const auto d1 = estimate_density(big, grid, model);
  for (std::size_t i = 0; i < grid.size(); ++i)
    CHECK(d1.values[i] == doctest::Approx(std::exp(-0.5 * grid[i] * grid[i]) / std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-6));

  Population empty;
  empty.particles.emplace_back();
  const auto d2 = estimate_density(empty, grid, model);
  const auto prior = single_cluster_predictive(kBase, {}, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK(d2.values[i] == doctest::Approx(prior[i]).epsilon(1e-12));

  CHECK_THROWS_AS(estimate_density(empty, grid, TopicModel{{0.5, 3}}), UnsupportedError);
}

TEST_CASE("filtered density integrates to one on a wide grid") {
  const ObservationModel model = GaussianModel{kBase};
  FilterConfig config;
  config.N = 200;
  config.policy = DeletionPolicy::mixture(0.98, DeletionPolicy::uniform(0.99), DeletionPolicy::size_biased());
  config.grid = linspace(-10.0, 10.0, 400);
  std::vector<ObservationBatch> data;
  Rng gen = make_stream(78);
  for (int t = 1; t <= 60; ++t) data.push_back({t, {normal(gen, bernoulli(gen, 0.5) ? -2.5 : 1.5, 0.7)}});
  run_filter(data, model, StaticKernel{}, config, ScaleParam(1.0), 79, [&](const FilterReport& r) {
    REQUIRE(r.density);
    // At t=1 half the mass sits on the nu0=2 prior predictive, whose tails
    // put about 5% outside [-10, 10].
    if (r.time < 3) return;
    CHECK(std::abs(trapezoid(r.density->grid, r.density->values) - 1.0) < 0.02);
  });
}

TEST_CASE("alive mass estimates") {
  Population one;
  Particle p;
  p.urn = UrnState::from_boxes(ScaleParam(1.0), {{1, 2}, {2, 3}});
  one.particles.push_back(p);
  CHECK(estimate_alive_mass(one) == doctest::Approx(5.0));

  Population two;
  Particle a, b;
  a.urn = UrnState::from_boxes(ScaleParam(1.0), {{1, 4}});
  a.log_weight = std::log(0.25);
  b.urn = UrnState::from_boxes(ScaleParam(1.0), {{1, 8}});
  b.log_weight = std::log(0.75);
  two.particles = {a, b};
  CHECK(estimate_alive_mass(two) == doctest::Approx(7.0));

  FilterConfig config;
  config.N = 50;
  const auto data = gaussian_stream(25, 0.0, 1.0, 80);
  int t = 0;
  run_filter(data, GaussianModel{kBase}, StaticKernel{}, config, ScaleParam(1.0), 81,
             [&](const FilterReport& r) { CHECK(r.alive_mass == doctest::Approx(++t)); });
}

TEST_CASE("rho estimates and the rho walk") {
  FilterConfig walk;
  walk.rho_walk = RhoWalk{1000.0, 0.9};
  Population pop;
  Particle a, b;
  a.rho = 0.8;
  a.log_weight = std::log(0.5);
  b.rho = 1.0;
  b.log_weight = std::log(0.5);
  pop.particles = {a, b};
  CHECK(estimate_rho(pop, walk) == doctest::Approx(0.9));
  for (auto& p : pop.particles) p.rho = 0.9;
  CHECK(estimate_rho(pop, walk) == doctest::Approx(0.9));
  CHECK_THROWS_AS(estimate_rho(pop, FilterConfig{}), UnsupportedError);

  Rng rng = make_stream(82);
  const RhoWalk rw{1000.0, 0.7};
  std::vector<double> draws, sq;
  for (int r = 0; r < 100000; ++r) draws.push_back(rho_walk_step(rw, 0.7, rng));
  const auto m = mean_estimate(draws);
  CHECK(std::abs(m.z_score(0.7)) < 3.0);
  for (double d : draws) sq.push_back((d - 0.7) * (d - 0.7));
  const double var = 0.7 * 0.7 * 0.3 / (1000.0 + 0.7);
  CHECK(std::abs(mean_estimate(sq).z_score(var)) < 3.0);
}

TEST_CASE("single-cluster data: filtered density matches the exact conjugate filter") {
  const auto data = gaussian_stream(50, 1.0, 0.8, 83);
  std::vector<double> zs;
  for (const auto& b : data) zs.push_back(b.values[0]);
  const auto grid = linspace(-6.0, 8.0, 200);
  const auto exact = single_cluster_predictive(kBase, zs, grid);

  for (auto mode : {LocationMode::Marginalized, LocationMode::Sampled}) {
    FilterConfig config;
    config.N = 500;
    config.locations = mode;
    config.grid = grid;
    const auto pop = run_filter(data, GaussianModel{kBase}, StaticKernel{}, config, ScaleParam(0.01), 84);
    const auto est = estimate_density(pop, grid, GaussianModel{kBase});
    CAPTURE(static_cast<int>(mode));
    CHECK(grid_tv(est.values, exact) < 0.05);
  }
}

TEST_CASE("single AR(1) cluster: filtered density matches the Kalman filter") {
  const double obs_sigma = 0.5;
  const GaussianAR1 kernel{0.9, {0.0, 2.0}};
  const ObservationModel model = KnownVarianceGaussianModel{obs_sigma, GaussianKnownVar{0.0, 2.0}};
  Rng gen = make_stream(85);
  double u = normal(gen, 0.0, 2.0);
  std::vector<ObservationBatch> data;
  for (int t = 1; t <= 40; ++t) {
    u = 0.9 * u + std::sqrt(1.0 - 0.81) * 2.0 * normal(gen);
    data.push_back({t, {u + obs_sigma * normal(gen), u + obs_sigma * normal(gen)}});
  }
  // Kalman recursion for the one cluster, written out.
  double m = 0.0, P = 4.0;
  for (std::size_t t = 0; t < data.size(); ++t) {
    if (t > 0) {
      m = 0.9 * m;
      P = 0.81 * P + 0.19 * 4.0;
    }
    for (double z : data[t].values) {
      const double k = P / (P + obs_sigma * obs_sigma);
      m += k * (z - m);
      P *= 1.0 - k;
    }
  }
  const auto grid = linspace(-8.0, 8.0, 200);
  std::vector<double> exact;
  const double v = P + obs_sigma * obs_sigma;
  for (double x : grid) exact.push_back(std::exp(-0.5 * (x - m) * (x - m) / v));

  for (auto mode : {LocationMode::Marginalized, LocationMode::Sampled}) {
    FilterConfig config;
    config.N = 300;
    config.locations = mode;
    const auto pop = run_filter(data, model, kernel, config, ScaleParam(0.001), 86);
    CAPTURE(static_cast<int>(mode));
    CHECK(grid_tv(estimate_density(pop, grid, model).values, exact) < 0.05);
  }
}

TEST_CASE("the AR(1) kernel must match the model base") {
  FilterConfig config;
  config.N = 3;
  Rng rng = make_stream(87);
  auto pop = init_particles(config, ScaleParam(1.0));
  const ObservationModel model = KnownVarianceGaussianModel{1.0, GaussianKnownVar{0.0, 1.0}};
  CHECK_THROWS_AS(advance(pop, {1, {0.0}}, model, GaussianAR1{0.5, {1.0, 1.0}}, config, rng), ConstraintViolation);
  CHECK_THROWS_AS(advance(pop, {1, {0.0}}, GaussianModel{kBase}, GaussianAR1{0.5, {}}, config, rng), UnsupportedError);
}

TEST_CASE("topic model filtering") {
  const ObservationModel model = TopicModel{{0.5, 6}};
  FilterConfig config;
  config.N = 100;
  config.policy = DeletionPolicy::uniform(0.4);
  std::vector<ObservationBatch> data;
  for (int t = 1; t <= 5; ++t) data.push_back({t, {1, 1, 2, 5, 6, 6}});
  for (auto mode : {LocationMode::Marginalized, LocationMode::Sampled}) {
    config.locations = mode;
    const auto pop = run_filter(data, model, StaticKernel{}, config, ScaleParam(1.0), 88);
    CHECK(std::isfinite(pop.log_evidence));
  }
  Rng rng = make_stream(89);
  CHECK_THROWS_AS(advance(init_particles(config, ScaleParam(1.0)), {1, {7}}, model, StaticKernel{}, config, rng),
                  ConstraintViolation);
}

TEST_CASE("results do not depend on the thread count") {
  const ObservationModel model = GaussianModel{kBase};
  const auto data = gaussian_stream(20, 0.5, 1.5, 90);
  FilterConfig config;
  config.N = 64;
  config.policy = DeletionPolicy::mixture(0.98, DeletionPolicy::uniform(0.9), DeletionPolicy::size_biased());
  config.rho_walk = RhoWalk{1000.0, 0.9};
  config.grid = linspace(-4.0, 4.0, 20);
  std::vector<std::vector<double>> runs;
  for (int threads : {1, 3, 8}) {
    config.threads = threads;
    std::vector<double> trace;
    const auto pop = run_filter(data, model, StaticKernel{}, config, ScaleParam(1.0), 91, [&](const FilterReport& r) {
      trace.push_back(r.ess);
      trace.push_back(*r.rho);
      trace.insert(trace.end(), r.density->values.begin(), r.density->values.end());
    });
    trace.push_back(pop.log_evidence);
    runs.push_back(trace);
  }
  CHECK(runs[0] == runs[1]);
  CHECK(runs[0] == runs[2]);
}

TEST_CASE("a user-registered kernel runs with sampled locations") {
  const ObservationModel model = KnownVarianceGaussianModel{1.0, GaussianKnownVar{0.0, 1.0}};
  const TransitionKernel kernel = ScalarKernel{"half-step", [](double u, Rng& r) {
                                                 return 0.5 * u + std::sqrt(0.75) * normal(r);
                                               }};
  FilterConfig config;
  config.N = 50;
  const auto data = gaussian_stream(10, 0.0, 1.0, 92);
  CHECK_THROWS_AS(run_filter(data, model, kernel, config, ScaleParam(1.0), 93), UnsupportedError);
  config.locations = LocationMode::Sampled;
  CHECK_NOTHROW(run_filter(data, model, kernel, config, ScaleParam(1.0), 93));
}
