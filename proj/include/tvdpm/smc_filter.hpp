#pragma once

// Particle filter for the time-varying DPM.
//
// Each particle carries an urn, one belief per alive box about that box's
// location, an optional rho_t and a log weight. Two location treatments:
//
//   Marginalized  the location is integrated out. Static kernel: conjugate
//                 sufficient statistics of every observation the box has
//                 received. GaussianAR1 with a known-variance Gaussian model:
//                 a Kalman belief.
//   Sampled       every box holds a point location, as in the plain
//                 algorithm. Newborns are drawn from their conjugate posterior
//                 (or from G_0 under the Prior proposal), survivors move
//                 through the kernel, conditioned on the batch when that is
//                 available in closed form.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <variant>
#include <vector>

#include "tvdpm/deletion_urn.hpp"
#include "tvdpm/location_kernels.hpp"
#include "tvdpm/obs_models.hpp"
#include "tvdpm/random.hpp"

namespace tvdpm {

/// rho_t ~ Beta(a_rho, a_rho (1 - rho_{t-1}) / rho_{t-1}).
struct RhoWalk {
  double a_rho = 1000.0;
  double rho0 = 0.9;
};

/// One Beta transition; the result is kept inside [1e-9, 1 - 1e-9] so the
/// next transition stays well defined.
double rho_walk_step(const RhoWalk& walk, double rho, Rng& rng);

enum class AllocationProposal { Prior, ConjugateConditional };
enum class LocationMode { Marginalized, Sampled };

struct FilterConfig {
  int N = 1000;
  double ess_threshold_fraction = 0.5;
  DeletionPolicy policy = DeletionPolicy::uniform(1.0);
  AllocationProposal proposal = AllocationProposal::ConjugateConditional;
  LocationMode locations = LocationMode::Marginalized;
  std::optional<RhoWalk> rho_walk;
  std::vector<double> grid;
  int threads = 1;

  void validate() const;
};

/// What a particle knows about one box's location at the current time.
using LocationBelief = std::variant<ClusterStats, GaussianBelief, Location>;

struct Particle {
  UrnState urn{ScaleParam(1.0)};
  std::map<Label, LocationBelief> locations;
  double rho = 1.0;
  /// Normalized across the population (log of w_t^{(i)}).
  double log_weight = 0.0;
  /// Unnormalized log weight increment of the last step.
  double log_increment = 0.0;
  /// Labels drawn for the last batch.
  AllocationVector allocations;

  double weight() const;
};

struct Population {
  std::vector<Particle> particles;
  std::int64_t time = 0;
  double ess = 0.0;
  bool resampled = false;
  /// Running estimate of log p(z_1..z_t).
  double log_evidence = 0.0;

  std::vector<double> weights() const;
};

struct DensityEstimate {
  std::vector<double> grid;
  std::vector<double> values;
};

Population init_particles(const FilterConfig& config, ScaleParam theta);

/// One filtering step on the batch z_t. Throws DegeneracyError when every
/// weight collapses.
Population advance(Population population, const ObservationBatch& batch, const ObservationModel& model,
                   const TransitionKernel& kernel, const FilterConfig& config, Rng& rng);

/// [sum w_i^2]^{-1} of normalized weights.
double ess(std::span<const double> weights);

/// Offspring indices of a systematic resampling pass.
std::vector<std::size_t> systematic_resample(std::span<const double> weights, std::size_t count, Rng& rng);

/// Systematic resampling; weights reset to 1/N.
Population resample(Population population, Rng& rng);

/// Weighted mixture of the particles' one-step predictive densities.
/// Throws UnsupportedError for the topic model.
DensityEstimate estimate_density(const Population& population, std::span<const double> grid,
                                 const ObservationModel& model);

/// Posterior mean of the total alive mass.
double estimate_alive_mass(const Population& population);

/// Posterior mean of rho_t; throws UnsupportedError without a RhoWalk.
double estimate_rho(const Population& population, const FilterConfig& config);

struct FilterReport {
  std::int64_t time = 0;
  double ess = 0.0;
  double alive_mass = 0.0;
  std::optional<double> rho;
  std::optional<DensityEstimate> density;
};

/// Runs the filter over a stream of batches, calling `report` after every
/// step. The master seed fixes every draw.
Population run_filter(const std::vector<ObservationBatch>& batches, const ObservationModel& model,
                      const TransitionKernel& kernel, const FilterConfig& config, ScaleParam theta,
                      std::uint64_t seed, const std::function<void(const FilterReport&)>& report = {});

}  // namespace tvdpm
