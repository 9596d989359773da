#include "tvdpm/location_kernels.hpp"

#include <cmath>
#include <numeric>

#include "tvdpm/errors.hpp"

namespace tvdpm {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw ConstraintViolation(std::string(name) + " must be positive, got " + std::to_string(v));
}

}  // namespace

void validate(const BaseMeasure& base) {
  std::visit(overloaded{
                 [](const NormalInverseGamma& b) {
                   require_positive(b.kappa0, "kappa0");
                   require_positive(b.nu0, "nu0");
                   require_positive(b.lambda0, "lambda0");
                 },
                 [](const GaussianKnownVar& b) { require_positive(b.sigma0, "sigma0"); },
                 [](const SymmetricDirichlet& b) {
                   require_positive(b.theta_v, "theta_v");
                   if (b.K < 1) throw ConstraintViolation("vocabulary size K must be >= 1");
                 },
                 [](const DiscreteAtoms& b) {
                   if (b.atoms.empty() || b.atoms.size() != b.weights.size())
                     throw ConstraintViolation("discrete base needs matching non-empty atoms and weights");
                   double total = 0.0;
                   for (double w : b.weights) {
                     if (!(w >= 0.0)) throw ConstraintViolation("discrete base weights must be non-negative");
                     total += w;
                   }
                   if (std::abs(total - 1.0) > 1e-9) throw ConstraintViolation("discrete base weights must sum to 1");
                 },
             },
             base);
}

std::vector<double> to_vector(const Location& u) {
  return std::visit(overloaded{
                        [](double v) { return std::vector<double>{v}; },
                        [](const MeanVar& mv) { return std::vector<double>{mv.mean, mv.variance}; },
                        [](const std::vector<double>& v) { return v; },
                    },
                    u);
}

Location sample_base(const BaseMeasure& base, Rng& rng) {
  return std::visit(overloaded{
                        [&](const NormalInverseGamma& b) -> Location {
                          const double variance = 1.0 / gamma(rng, b.nu0 / 2.0, 2.0 / b.lambda0);
                          const double mean = normal(rng, b.mu0, std::sqrt(variance / b.kappa0));
                          return MeanVar{mean, variance};
                        },
                        [&](const GaussianKnownVar& b) -> Location { return normal(rng, b.mu0, b.sigma0); },
                        [&](const SymmetricDirichlet& b) -> Location {
                          std::vector<double> alpha(b.K, b.theta_v / b.K);
                          return dirichlet(rng, alpha);
                        },
                        [&](const DiscreteAtoms& b) -> Location {
                          return b.atoms[sample_categorical(rng, b.weights)];
                        },
                    },
                    base);
}

void validate(const TransitionKernel& kernel) {
  std::visit(overloaded{
                 [](const StaticKernel&) {},
                 [](const GaussianAR1& k) {
                   if (!(k.phi >= -1.0 && k.phi <= 1.0)) throw ConstraintViolation("AR(1) phi must lie in [-1,1]");
                   require_positive(k.base.sigma0, "sigma0");
                 },
                 [](const ScalarKernel& k) {
                   if (!k.step) throw ConstraintViolation("scalar kernel '" + k.name + "' has no step function");
                 },
             },
             kernel);
}

bool is_static(const TransitionKernel& kernel) { return std::holds_alternative<StaticKernel>(kernel); }

Location transition(const TransitionKernel& kernel, const Location& previous, Rng& rng) {
  return std::visit(overloaded{
                        [&](const StaticKernel&) -> Location { return previous; },
                        [&](const GaussianAR1& k) -> Location {
                          const double u = std::get<double>(previous);
                          const double noise_sd = std::sqrt(1.0 - k.phi * k.phi) * k.base.sigma0;
                          return k.phi * u + (1.0 - k.phi) * k.base.mu0 + noise_sd * normal(rng);
                        },
                        [&](const ScalarKernel& k) -> Location { return k.step(std::get<double>(previous), rng); },
                    },
                    kernel);
}

TrackMap evolve_locations(TrackMap alive, const TransitionKernel& kernel, const BaseMeasure& base,
                          std::span<const Label> newborn, std::int64_t time, Rng& rng) {
  for (Label label : newborn)
    if (alive.count(label)) throw ConstraintViolation("newborn label " + std::to_string(label) + " already has a track");
  for (auto& [label, track] : alive) track.values.push_back(transition(kernel, track.current(), rng));
  for (Label label : newborn) {
    auto [it, inserted] = alive.try_emplace(label, LocationTrack{label, time, {}});
    if (!inserted) throw ConstraintViolation("duplicate newborn label " + std::to_string(label));
    it->second.values.push_back(sample_base(base, rng));
  }
  return alive;
}

}  // namespace tvdpm
