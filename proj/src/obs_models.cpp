#include "tvdpm/obs_models.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "tvdpm/errors.hpp"

namespace tvdpm {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kLogPi = 1.1447298858494002;     // log(pi)
constexpr double kLogTwoPi = 1.8378770664093453;  // log(2 pi)

struct NigPosterior {
  double kappa, mu, nu, lambda;
};

NigPosterior nig_posterior(const NormalInverseGamma& b, double n, double sum, double sum_sq) {
  NigPosterior p{b.kappa0 + n, 0.0, b.nu0 + n, b.lambda0};
  p.mu = (b.kappa0 * b.mu0 + sum) / p.kappa;
  if (n > 0.0) {
    const double mean = sum / n;
    const double scatter = std::max(0.0, sum_sq - sum * mean);
    p.lambda += scatter + b.kappa0 * n / p.kappa * (mean - b.mu0) * (mean - b.mu0);
  }
  return p;
}

std::size_t word_index(const TopicModel& m, Observation z) {
  const auto w = static_cast<long long>(z);
  if (static_cast<double>(w) != z || w < 1 || w > m.base.K)
    throw ConstraintViolation("word id " + std::to_string(z) + " outside 1.." + std::to_string(m.base.K));
  return static_cast<std::size_t>(w - 1);
}

double atoms_log_marginal(const DiscreteAtoms& b, double obs_var, double n, double sum, double sum_sq) {
  std::vector<double> terms(b.atoms.size());
  for (std::size_t i = 0; i < b.atoms.size(); ++i) {
    const double a = b.atoms[i];
    const double sq = sum_sq - 2.0 * a * sum + n * a * a;
    terms[i] = std::log(b.weights[i]) - 0.5 * n * (kLogTwoPi + std::log(obs_var)) - 0.5 * sq / obs_var;
  }
  return log_sum_exp(terms);
}

std::vector<double> atoms_log_posterior(const DiscreteAtoms& b, double obs_var, double n, double sum, double sum_sq) {
  std::vector<double> lp(b.atoms.size());
  for (std::size_t i = 0; i < b.atoms.size(); ++i) {
    const double a = b.atoms[i];
    lp[i] = std::log(b.weights[i]) - 0.5 * (sum_sq - 2.0 * a * sum + n * a * a) / obs_var;
  }
  const double norm = log_sum_exp(lp);
  for (auto& v : lp) v -= norm;
  return lp;
}

GaussianBelief known_var_posterior(const GaussianKnownVar& b, double obs_var, double n, double sum) {
  const double precision = 1.0 / (b.sigma0 * b.sigma0) + n / obs_var;
  return {(b.mu0 / (b.sigma0 * b.sigma0) + sum / obs_var) / precision, 1.0 / precision};
}

}  // namespace

void validate(const ObservationModel& model) {
  std::visit(overloaded{
                 [](const GaussianModel& m) { validate(BaseMeasure{m.base}); },
                 [](const KnownVarianceGaussianModel& m) {
                   if (!(m.obs_sigma > 0.0)) throw ConstraintViolation("obs_sigma must be positive");
                   std::visit([](const auto& b) { validate(BaseMeasure{b}); }, m.base);
                 },
                 [](const TopicModel& m) { validate(BaseMeasure{m.base}); },
             },
             model);
}

void validate_observation(const ObservationModel& model, Observation z) {
  if (!std::isfinite(z)) throw ConstraintViolation("observation is not finite");
  if (const auto* topic = std::get_if<TopicModel>(&model)) word_index(*topic, z);
}

bool is_gaussian(const ObservationModel& model) { return !std::holds_alternative<TopicModel>(model); }

BaseMeasure base_of(const ObservationModel& model) {
  return std::visit(overloaded{
                        [](const GaussianModel& m) -> BaseMeasure { return m.base; },
                        [](const KnownVarianceGaussianModel& m) -> BaseMeasure {
                          return std::visit([](const auto& b) -> BaseMeasure { return b; }, m.base);
                        },
                        [](const TopicModel& m) -> BaseMeasure { return m.base; },
                    },
                    model);
}

double normal_log_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (kLogTwoPi + std::log(variance)) - 0.5 * d * d / variance;
}

double student_t_log_pdf(double x, double dof, double location, double scale_sq) {
  const double d = x - location;
  return std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) - 0.5 * (std::log(dof * scale_sq) + kLogPi) -
         0.5 * (dof + 1.0) * std::log1p(d * d / (dof * scale_sq));
}

double log_likelihood(const ObservationModel& model, Observation z, const Location& u) {
  return std::visit(overloaded{
                        [&](const GaussianModel&) {
                          const auto& mv = std::get<MeanVar>(u);
                          return normal_log_pdf(z, mv.mean, mv.variance);
                        },
                        [&](const KnownVarianceGaussianModel& m) {
                          return normal_log_pdf(z, std::get<double>(u), m.obs_sigma * m.obs_sigma);
                        },
                        [&](const TopicModel& m) {
                          const auto& p = std::get<std::vector<double>>(u);
                          return std::log(p.at(word_index(m, z)));
                        },
                    },
                    model);
}

ClusterStats::ClusterStats(const ObservationModel& model)
    : stats_(std::in_place_type<Moments>, Moments{}) {
  if (const auto* topic = std::get_if<TopicModel>(&model))
    stats_ = Words{std::vector<std::int64_t>(static_cast<std::size_t>(topic->base.K), 0), 0};
}

void ClusterStats::add(Observation z) {
  std::visit(overloaded{
                 [&](Moments& m) {
                   m.n += 1.0;
                   m.sum += z;
                   m.sum_sq += z * z;
                 },
                 [&](Words& w) {
                   const auto i = static_cast<std::size_t>(z) - 1;
                   if (i >= w.counts.size()) throw ConstraintViolation("word id outside vocabulary");
                   ++w.counts[i];
                   ++w.total;
                 },
             },
             stats_);
}

void ClusterStats::remove(Observation z) {
  std::visit(overloaded{
                 [&](Moments& m) {
                   if (m.n < 1.0) throw ConstraintViolation("remove from empty cluster statistics");
                   m.n -= 1.0;
                   if (m.n == 0.0) {
                     m = Moments{};
                   } else {
                     m.sum -= z;
                     m.sum_sq -= z * z;
                   }
                 },
                 [&](Words& w) {
                   const auto i = static_cast<std::size_t>(z) - 1;
                   if (i >= w.counts.size() || w.counts[i] == 0)
                     throw ConstraintViolation("remove of a word that is not in the cluster");
                   --w.counts[i];
                   --w.total;
                 },
             },
             stats_);
}

void ClusterStats::merge(const ClusterStats& other) {
  std::visit(overloaded{
                 [&](Moments& m) {
                   const auto& o = std::get<Moments>(other.stats_);
                   m.n += o.n;
                   m.sum += o.sum;
                   m.sum_sq += o.sum_sq;
                 },
                 [&](Words& w) {
                   const auto& o = std::get<Words>(other.stats_);
                   for (std::size_t i = 0; i < w.counts.size(); ++i) w.counts[i] += o.counts[i];
                   w.total += o.total;
                 },
             },
             stats_);
}

std::int64_t ClusterStats::count() const {
  return std::visit(overloaded{
                        [](const Moments& m) { return static_cast<std::int64_t>(m.n); },
                        [](const Words& w) { return w.total; },
                    },
                    stats_);
}

double ClusterStats::log_marginal(const ObservationModel& model) const {
  return std::visit(
      overloaded{
          [&](const GaussianModel& g) {
            const auto& m = std::get<Moments>(stats_);
            const auto& b = g.base;
            const auto p = nig_posterior(b, m.n, m.sum, m.sum_sq);
            return -0.5 * m.n * kLogPi + std::lgamma(0.5 * p.nu) - std::lgamma(0.5 * b.nu0) +
                   0.5 * b.nu0 * std::log(b.lambda0) - 0.5 * p.nu * std::log(p.lambda) +
                   0.5 * std::log(b.kappa0 / p.kappa);
          },
          [&](const KnownVarianceGaussianModel& kv) {
            const auto& m = std::get<Moments>(stats_);
            const double obs_var = kv.obs_sigma * kv.obs_sigma;
            return std::visit(overloaded{
                                  [&](const GaussianKnownVar& b) {
                                    GaussianBelief prior{b.mu0, b.sigma0 * b.sigma0};
                                    return prior.update_batch(m.n, m.sum, m.sum_sq, obs_var);
                                  },
                                  [&](const DiscreteAtoms& b) { return atoms_log_marginal(b, obs_var, m.n, m.sum, m.sum_sq); },
                              },
                              kv.base);
          },
          [&](const TopicModel& t) {
            const auto& w = std::get<Words>(stats_);
            const double alpha = t.base.theta_v / t.base.K;
            double lm = std::lgamma(t.base.theta_v) - std::lgamma(t.base.theta_v + static_cast<double>(w.total));
            const double lg_alpha = std::lgamma(alpha);
            for (auto c : w.counts)
              if (c > 0) lm += std::lgamma(alpha + static_cast<double>(c)) - lg_alpha;
            return lm;
          },
      },
      model);
}

double ClusterStats::predictive_log_prob(const ObservationModel& model, Observation z) const {
  return std::visit(
      overloaded{
          [&](const GaussianModel& g) {
            const auto& m = std::get<Moments>(stats_);
            const auto p = nig_posterior(g.base, m.n, m.sum, m.sum_sq);
            return student_t_log_pdf(z, p.nu, p.mu, p.lambda * (p.kappa + 1.0) / (p.kappa * p.nu));
          },
          [&](const KnownVarianceGaussianModel& kv) {
            const auto& m = std::get<Moments>(stats_);
            const double obs_var = kv.obs_sigma * kv.obs_sigma;
            return std::visit(
                overloaded{
                    [&](const GaussianKnownVar& b) {
                      return known_var_posterior(b, obs_var, m.n, m.sum).predictive_log_prob(z, obs_var);
                    },
                    [&](const DiscreteAtoms& b) {
                      return atoms_log_marginal(b, obs_var, m.n + 1.0, m.sum + z, m.sum_sq + z * z) -
                             atoms_log_marginal(b, obs_var, m.n, m.sum, m.sum_sq);
                    },
                },
                kv.base);
          },
          [&](const TopicModel& t) {
            const auto& w = std::get<Words>(stats_);
            const double alpha = t.base.theta_v / t.base.K;
            const auto i = word_index(t, z);
            return std::log((static_cast<double>(w.counts[i]) + alpha) / (static_cast<double>(w.total) + t.base.theta_v));
          },
      },
      model);
}

double ScalarPredictive::log_pdf(double x) const {
  if (std::isinf(dof)) return normal_log_pdf(x, location, scale_sq);
  return student_t_log_pdf(x, dof, location, scale_sq);
}

ScalarPredictive ClusterStats::scalar_predictive(const ObservationModel& model) const {
  if (const auto* g = std::get_if<GaussianModel>(&model)) {
    const auto& m = std::get<Moments>(stats_);
    const auto p = nig_posterior(g->base, m.n, m.sum, m.sum_sq);
    return {p.nu, p.mu, p.lambda * (p.kappa + 1.0) / (p.kappa * p.nu)};
  }
  if (const auto* kv = std::get_if<KnownVarianceGaussianModel>(&model)) {
    if (const auto* b = std::get_if<GaussianKnownVar>(&kv->base)) {
      const auto& m = std::get<Moments>(stats_);
      const double obs_var = kv->obs_sigma * kv->obs_sigma;
      const auto post = known_var_posterior(*b, obs_var, m.n, m.sum);
      return {std::numeric_limits<double>::infinity(), post.mean, post.variance + obs_var};
    }
  }
  throw UnsupportedError("no closed-form scalar predictive for this model");
}

Location ClusterStats::posterior_sample(const ObservationModel& model, Rng& rng) const {
  return std::visit(
      overloaded{
          [&](const GaussianModel& g) -> Location {
            const auto& m = std::get<Moments>(stats_);
            const auto p = nig_posterior(g.base, m.n, m.sum, m.sum_sq);
            const double variance = 1.0 / gamma(rng, 0.5 * p.nu, 2.0 / p.lambda);
            return MeanVar{normal(rng, p.mu, std::sqrt(variance / p.kappa)), variance};
          },
          [&](const KnownVarianceGaussianModel& kv) -> Location {
            const auto& m = std::get<Moments>(stats_);
            const double obs_var = kv.obs_sigma * kv.obs_sigma;
            return std::visit(overloaded{
                                  [&](const GaussianKnownVar& b) -> Location {
                                    const auto post = known_var_posterior(b, obs_var, m.n, m.sum);
                                    return normal(rng, post.mean, std::sqrt(post.variance));
                                  },
                                  [&](const DiscreteAtoms& b) -> Location {
                                    const auto lp = atoms_log_posterior(b, obs_var, m.n, m.sum, m.sum_sq);
                                    return b.atoms[sample_log_categorical(rng, lp)];
                                  },
                              },
                              kv.base);
          },
          [&](const TopicModel& t) -> Location {
            const auto& w = std::get<Words>(stats_);
            std::vector<double> alpha(w.counts.size());
            for (std::size_t i = 0; i < alpha.size(); ++i)
              alpha[i] = t.base.theta_v / t.base.K + static_cast<double>(w.counts[i]);
            return dirichlet(rng, alpha);
          },
      },
      model);
}

Location ClusterStats::posterior_mean(const ObservationModel& model) const {
  return std::visit(
      overloaded{
          [&](const GaussianModel& g) -> Location {
            const auto& m = std::get<Moments>(stats_);
            const auto p = nig_posterior(g.base, m.n, m.sum, m.sum_sq);
            // E[sigma^2] is finite only for nu > 2; report the mode otherwise.
            const double var = p.nu > 2.0 ? p.lambda / (p.nu - 2.0) : p.lambda / (p.nu + 2.0);
            return MeanVar{p.mu, var};
          },
          [&](const KnownVarianceGaussianModel& kv) -> Location {
            const auto& m = std::get<Moments>(stats_);
            const double obs_var = kv.obs_sigma * kv.obs_sigma;
            return std::visit(overloaded{
                                  [&](const GaussianKnownVar& b) -> Location {
                                    return known_var_posterior(b, obs_var, m.n, m.sum).mean;
                                  },
                                  [&](const DiscreteAtoms& b) -> Location {
                                    const auto lp = atoms_log_posterior(b, obs_var, m.n, m.sum, m.sum_sq);
                                    double mean = 0.0;
                                    for (std::size_t i = 0; i < lp.size(); ++i) mean += std::exp(lp[i]) * b.atoms[i];
                                    return mean;
                                  },
                              },
                              kv.base);
          },
          [&](const TopicModel& t) -> Location {
            const auto& w = std::get<Words>(stats_);
            std::vector<double> p(w.counts.size());
            const double denom = static_cast<double>(w.total) + t.base.theta_v;
            for (std::size_t i = 0; i < p.size(); ++i)
              p[i] = (t.base.theta_v / t.base.K + static_cast<double>(w.counts[i])) / denom;
            return p;
          },
      },
      model);
}

namespace {

ClusterStats stats_from(const ObservationModel& model, std::span<const Observation> cluster) {
  ClusterStats s(model);
  for (auto z : cluster) {
    validate_observation(model, z);
    s.add(z);
  }
  return s;
}

}  // namespace

Location posterior_sample(const ObservationModel& model, std::span<const Observation> cluster, Rng& rng) {
  return stats_from(model, cluster).posterior_sample(model, rng);
}

double predictive_log_prob(const ObservationModel& model, Observation z, std::span<const Observation> cluster) {
  validate_observation(model, z);
  return stats_from(model, cluster).predictive_log_prob(model, z);
}

double log_marginal(const ObservationModel& model, std::span<const Observation> cluster) {
  return stats_from(model, cluster).log_marginal(model);
}

double GaussianBelief::predictive_log_prob(double z, double obs_var) const {
  return normal_log_pdf(z, mean, variance + obs_var);
}

void GaussianBelief::update(double z, double obs_var) {
  const double gain = variance / (variance + obs_var);
  mean += gain * (z - mean);
  variance *= (1.0 - gain);
}

double GaussianBelief::update_batch(double n, double sum, double sum_sq, double obs_var) {
  if (n <= 0.0) return 0.0;
  const double sx = sum - n * mean;
  const double sxx = sum_sq - 2.0 * mean * sum + n * mean * mean;
  const double lm = -0.5 * n * (kLogTwoPi + std::log(obs_var)) - 0.5 * std::log1p(n * variance / obs_var) -
                    0.5 * (sxx / obs_var - variance * sx * sx / (obs_var * (obs_var + n * variance)));
  const double precision = 1.0 / variance + n / obs_var;
  mean = (mean / variance + sum / obs_var) / precision;
  variance = 1.0 / precision;
  return lm;
}

void GaussianBelief::predict(const GaussianAR1& kernel) {
  const double s2 = kernel.base.sigma0 * kernel.base.sigma0;
  mean = kernel.phi * mean + (1.0 - kernel.phi) * kernel.base.mu0;
  variance = kernel.phi * kernel.phi * variance + (1.0 - kernel.phi * kernel.phi) * s2;
}

double log_marginal_ar1(const KnownVarianceGaussianModel& model, const GaussianAR1& kernel,
                        std::span<const TimedObservation> sorted) {
  if (sorted.empty()) return 0.0;
  const double obs_var = model.obs_sigma * model.obs_sigma;
  GaussianBelief belief{kernel.base.mu0, kernel.base.sigma0 * kernel.base.sigma0};
  double lm = 0.0;
  std::int64_t current = sorted.front().time;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const std::int64_t t = sorted[i].time;
    if (t < current) throw ConstraintViolation("log_marginal_ar1: observations must be sorted by time");
    for (; current < t; ++current) belief.predict(kernel);
    double n = 0.0, sum = 0.0, sum_sq = 0.0;
    for (; i < sorted.size() && sorted[i].time == t; ++i) {
      n += 1.0;
      sum += sorted[i].value;
      sum_sq += sorted[i].value * sorted[i].value;
    }
    lm += belief.update_batch(n, sum, sum_sq, obs_var);
  }
  return lm;
}

}  // namespace tvdpm
