#pragma once

// Mixed densities f(z | u) and their conjugate machinery.

#include <cstdint>
#include <limits>
#include <span>
#include <variant>
#include <vector>

#include "tvdpm/location_kernels.hpp"
#include "tvdpm/random.hpp"

namespace tvdpm {

/// Gaussian with unknown mean and variance, Normal-inverse-gamma base.
struct GaussianModel {
  NormalInverseGamma base;
};

/// Gaussian with known observation noise obs_sigma; only the mean is a
/// cluster parameter.
struct KnownVarianceGaussianModel {
  double obs_sigma = 1.0;
  std::variant<GaussianKnownVar, DiscreteAtoms> base;
};

/// Words drawn from a multinomial topic with a symmetric Dirichlet base.
/// Observations are word ids in 1..K.
struct TopicModel {
  SymmetricDirichlet base;
};

using ObservationModel = std::variant<GaussianModel, KnownVarianceGaussianModel, TopicModel>;

/// A real value, or a word id stored as an integral double.
using Observation = double;

struct ObservationBatch {
  std::int64_t time = 0;
  std::vector<Observation> values;
};

void validate(const ObservationModel& model);
/// Throws ConstraintViolation for a word id outside 1..K or a non-finite value.
void validate_observation(const ObservationModel& model, Observation z);
bool is_gaussian(const ObservationModel& model);
BaseMeasure base_of(const ObservationModel& model);

double normal_log_pdf(double x, double mean, double variance);
double student_t_log_pdf(double x, double dof, double location, double scale_sq);

/// log f(z | u). A word with zero probability under u gives -infinity.
double log_likelihood(const ObservationModel& model, Observation z, const Location& u);

/// Location-scale Student-t density; dof = infinity gives the normal.
struct ScalarPredictive {
  double dof = std::numeric_limits<double>::infinity();
  double location = 0.0;
  double scale_sq = 1.0;

  double log_pdf(double x) const;
};

/// Sufficient statistics of the observations assigned to one cluster.
class ClusterStats {
 public:
  explicit ClusterStats(const ObservationModel& model);

  void add(Observation z);
  void remove(Observation z);
  void merge(const ClusterStats& other);
  std::int64_t count() const;

  /// log p(z_1..z_m) with the location integrated against the base.
  double log_marginal(const ObservationModel& model) const;
  /// log p(z | assigned observations).
  double predictive_log_prob(const ObservationModel& model, Observation z) const;
  /// Closed form of the predictive for the Gaussian-base models; throws
  /// UnsupportedError for the topic model and the discrete-atom base.
  ScalarPredictive scalar_predictive(const ObservationModel& model) const;
  /// Exact draw from the conjugate posterior (the base when empty).
  Location posterior_sample(const ObservationModel& model, Rng& rng) const;
  /// Posterior mean of the location.
  Location posterior_mean(const ObservationModel& model) const;

 private:
  struct Moments {
    double n = 0.0, sum = 0.0, sum_sq = 0.0;
  };
  struct Words {
    std::vector<std::int64_t> counts;
    std::int64_t total = 0;
  };
  std::variant<Moments, Words> stats_;
};

Location posterior_sample(const ObservationModel& model, std::span<const Observation> cluster, Rng& rng);
double predictive_log_prob(const ObservationModel& model, Observation z, std::span<const Observation> cluster);
double log_marginal(const ObservationModel& model, std::span<const Observation> cluster);

/// Gaussian belief N(mean, variance) over a scalar location; the workhorse of
/// the AR(1) filters.
struct GaussianBelief {
  double mean = 0.0;
  double variance = 1.0;

  /// log N(z; mean, variance + obs_var).
  double predictive_log_prob(double z, double obs_var) const;
  /// Conditions on one observation.
  void update(double z, double obs_var);
  /// Conditions on a batch of observations summarized by (n, sum, sum_sq),
  /// returning the batch's log marginal likelihood.
  double update_batch(double n, double sum, double sum_sq, double obs_var);
  /// One AR(1) step.
  void predict(const GaussianAR1& kernel);
};

struct TimedObservation {
  std::int64_t time;
  Observation value;
};

/// Marginal likelihood of a cluster whose known-variance Gaussian location
/// follows the AR(1) kernel from its birth (first observation time) on;
/// Kalman filter over the sorted observations.
double log_marginal_ar1(const KnownVarianceGaussianModel& model, const GaussianAR1& kernel,
                        std::span<const TimedObservation> sorted);

}  // namespace tvdpm
