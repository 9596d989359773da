#pragma once

// Base measures G_0, transition kernels that leave G_0 invariant, and the
// birth/transition lifecycle of cluster locations.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tvdpm/partition.hpp"
#include "tvdpm/random.hpp"

namespace tvdpm {

/// sigma^2 ~ InvGamma(nu0/2, lambda0/2), mean | sigma^2 ~ N(mu0, sigma^2/kappa0).
struct NormalInverseGamma {
  double mu0 = 0.0;
  double kappa0 = 0.1;
  double nu0 = 2.0;
  double lambda0 = 1.0;
};

/// Location mean ~ N(mu0, sigma0^2); paired with a known observation variance.
struct GaussianKnownVar {
  double mu0 = 0.0;
  double sigma0 = 1.0;
};

/// Dir(theta_v/K, ..., theta_v/K) over a vocabulary of K words.
struct SymmetricDirichlet {
  double theta_v = 0.5;
  int K = 2;
};

/// Finite base: location atoms[i] with probability weights[i]. Keeps
/// posteriors exactly enumerable in small test problems.
struct DiscreteAtoms {
  std::vector<double> atoms;
  std::vector<double> weights;
};

using BaseMeasure = std::variant<NormalInverseGamma, GaussianKnownVar, SymmetricDirichlet, DiscreteAtoms>;

/// Throws ConstraintViolation on a non-positive scale/shape parameter.
void validate(const BaseMeasure& base);

struct MeanVar {
  double mean = 0.0;
  double variance = 1.0;
  friend bool operator==(const MeanVar&, const MeanVar&) = default;
};

/// A cluster parameter: a scalar mean (known-variance Gaussian, atoms), a
/// (mean, variance) pair (Normal-inverse-gamma), or a point of the simplex
/// (topics).
using Location = std::variant<double, MeanVar, std::vector<double>>;

std::vector<double> to_vector(const Location& u);

Location sample_base(const BaseMeasure& base, Rng& rng);

/// U_t = U_{t-1}.
struct StaticKernel {};

/// U_t = phi U_{t-1} + (1 - phi) mu0 + sqrt(1 - phi^2) sigma0 eps.
struct GaussianAR1 {
  double phi = 0.9;
  GaussianKnownVar base;
};

/// User-registered scalar kernel. Stationarity is not assumed; run it
/// through kernel_stationarity_test before use.
struct ScalarKernel {
  std::string name;
  std::function<double(double, Rng&)> step;
};

using TransitionKernel = std::variant<StaticKernel, GaussianAR1, ScalarKernel>;

void validate(const TransitionKernel& kernel);
bool is_static(const TransitionKernel& kernel);

Location transition(const TransitionKernel& kernel, const Location& previous, Rng& rng);

struct LocationTrack {
  Label label = 0;
  std::int64_t birth_time = 0;
  std::vector<Location> values;  // values[i] is the location at birth_time + i

  std::int64_t last_time() const { return birth_time + static_cast<std::int64_t>(values.size()) - 1; }
  const Location& current() const { return values.back(); }
  const Location& at(std::int64_t t) const { return values.at(static_cast<std::size_t>(t - birth_time)); }
};

using TrackMap = std::map<Label, LocationTrack>;

/// Moves every track in `alive` one step forward through the kernel and
/// starts a G_0 track for each newborn label at `time`. Throws
/// ConstraintViolation when a newborn label already has a track.
TrackMap evolve_locations(TrackMap alive, const TransitionKernel& kernel, const BaseMeasure& base,
                          std::span<const Label> newborn, std::int64_t time, Rng& rng);

}  // namespace tvdpm
