#include "tvdpm/smc_filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "parallel.hpp"
#include "tvdpm/errors.hpp"

namespace tvdpm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double obs_variance(const ObservationModel& model) {
  if (const auto* kv = std::get_if<KnownVarianceGaussianModel>(&model)) return kv->obs_sigma * kv->obs_sigma;
  return std::numeric_limits<double>::quiet_NaN();
}

// Checks the (model, kernel, mode) combination once per step.
void check_combination(const ObservationModel& model, const TransitionKernel& kernel, const FilterConfig& config) {
  if (const auto* ar1 = std::get_if<GaussianAR1>(&kernel)) {
    const auto* kv = std::get_if<KnownVarianceGaussianModel>(&model);
    const auto* base = kv ? std::get_if<GaussianKnownVar>(&kv->base) : nullptr;
    if (!base) throw UnsupportedError("the AR(1) kernel needs a known-variance Gaussian model with a Gaussian base");
    if (base->mu0 != ar1->base.mu0 || base->sigma0 != ar1->base.sigma0)
      throw ConstraintViolation("the AR(1) kernel must leave the model's base measure invariant");
  }
  if (std::holds_alternative<ScalarKernel>(kernel) && config.locations == LocationMode::Marginalized)
    throw UnsupportedError("a user-registered kernel can only be filtered with sampled locations");
}

// Working belief for a box opened during the current step.
LocationBelief fresh_belief(const ObservationModel& model, const TransitionKernel& kernel) {
  if (const auto* ar1 = std::get_if<GaussianAR1>(&kernel))
    return GaussianBelief{ar1->base.mu0, ar1->base.sigma0 * ar1->base.sigma0};
  return ClusterStats(model);
}

double belief_log_pred(const LocationBelief& belief, const ObservationModel& model, double obs_var, Observation z) {
  return std::visit(overloaded{
                        [&](const ClusterStats& s) { return s.predictive_log_prob(model, z); },
                        [&](const GaussianBelief& g) { return g.predictive_log_prob(z, obs_var); },
                        [&](const Location& u) { return log_likelihood(model, z, u); },
                    },
                    belief);
}

void belief_update(LocationBelief& belief, double obs_var, Observation z) {
  std::visit(overloaded{
                 [&](ClusterStats& s) { s.add(z); },
                 [&](GaussianBelief& g) { g.update(z, obs_var); },
                 [&](Location&) {},
             },
             belief);
}

void step_particle(Particle& p, std::int64_t time, const ObservationBatch& batch, const ObservationModel& model,
                   const TransitionKernel& kernel, const FilterConfig& config, Rng& rng) {
  const bool sampled = config.locations == LocationMode::Sampled;
  const bool prior_proposal = config.proposal == AllocationProposal::Prior;
  const double obs_var = obs_variance(model);
  const double theta = p.urn.theta().value();

  std::optional<double> rho_override;
  if (config.rho_walk) {
    p.rho = rho_walk_step(*config.rho_walk, p.rho, rng);
    rho_override = p.rho;
  }
  p.urn.set_time(time);
  p.urn = apply_policy(std::move(p.urn), config.policy, rng, rho_override);
  std::erase_if(p.locations, [&](const auto& kv) { return !p.urn.contains(kv.first); });

  // Survivors move one step.
  const auto* ar1 = std::get_if<GaussianAR1>(&kernel);
  for (auto& [label, belief] : p.locations) {
    if (auto* g = std::get_if<GaussianBelief>(&belief)) {
      g->predict(*ar1);
    } else if (auto* u = std::get_if<Location>(&belief)) {
      if (ar1 && !prior_proposal) {
        // Exact conditional of U_t given U_{t-1}; conditioned on the batch below.
        const double prev = std::get<double>(*u);
        GaussianBelief g{prev, 0.0};
        g.predict(*ar1);
        belief = g;
      } else if (!is_static(kernel)) {
        *u = transition(kernel, *u, rng);
      }
    }
  }

  const BaseMeasure base = base_of(model);
  double increment = 0.0;
  p.allocations.clear();
  std::vector<Label> labels;
  std::vector<double> lw;
  for (Observation z : batch.values) {
    const double mass = static_cast<double>(p.urn.total_mass());
    Label chosen = 0;
    if (prior_proposal) {
      const double u = uniform01(rng) * (mass + theta);
      if (u < mass) {
        double acc = 0.0;
        for (const auto& [label, m] : p.urn.boxes()) {
          acc += static_cast<double>(m);
          chosen = label;
          if (u < acc) break;
        }
        p.urn.join(chosen);
      } else {
        chosen = p.urn.open();
        p.locations.emplace(chosen, sampled ? LocationBelief{sample_base(base, rng)} : fresh_belief(model, kernel));
      }
      p.allocations.push_back(chosen);
      auto& belief = p.locations.at(chosen);
      increment += belief_log_pred(belief, model, obs_var, z);
      belief_update(belief, obs_var, z);
      continue;
    }

    labels.clear();
    lw.clear();
    for (const auto& [label, belief] : p.locations) {
      labels.push_back(label);
      lw.push_back(std::log(static_cast<double>(p.urn.mass(label))) + belief_log_pred(belief, model, obs_var, z));
    }
    const LocationBelief newborn = fresh_belief(model, kernel);
    lw.push_back(std::log(theta) + belief_log_pred(newborn, model, obs_var, z));
    const double norm = log_sum_exp(lw);
    increment += norm - std::log(mass + theta);
    if (!std::isfinite(norm)) {
      increment = kNegInf;
      break;
    }
    const std::size_t pick = sample_log_categorical(rng, lw);
    if (pick < labels.size()) {
      chosen = labels[pick];
      p.urn.join(chosen);
    } else {
      chosen = p.urn.open();
      p.locations.emplace(chosen, newborn);
    }
    p.allocations.push_back(chosen);
    belief_update(p.locations.at(chosen), obs_var, z);
  }

  if (sampled) {
    // Collapse this step's working beliefs to point locations.
    for (auto& [label, belief] : p.locations) {
      if (const auto* s = std::get_if<ClusterStats>(&belief)) {
        belief = s->posterior_sample(model, rng);
      } else if (const auto* g = std::get_if<GaussianBelief>(&belief)) {
        belief = Location{g->variance > 0.0 ? normal(rng, g->mean, std::sqrt(g->variance)) : g->mean};
      }
    }
  }
  p.log_increment = increment;
  p.log_weight += increment;
}

}  // namespace

double rho_walk_step(const RhoWalk& walk, double rho, Rng& rng) {
  const double next = beta(rng, walk.a_rho, walk.a_rho * (1.0 - rho) / rho);
  return std::clamp(next, 1e-9, 1.0 - 1e-9);
}

void FilterConfig::validate() const {
  if (N < 1) throw ConstraintViolation("particle count N must be >= 1");
  if (!(ess_threshold_fraction > 0.0 && ess_threshold_fraction <= 1.0))
    throw ConstraintViolation("ESS threshold fraction must lie in (0,1]");
  policy.validate();
  if (rho_walk) {
    if (!(rho_walk->a_rho > 0.0)) throw ConstraintViolation("a_rho must be positive");
    if (!(rho_walk->rho0 > 0.0 && rho_walk->rho0 < 1.0)) throw ConstraintViolation("rho0 must lie in (0,1)");
  }
  if (!std::is_sorted(grid.begin(), grid.end())) throw ConstraintViolation("density grid must be sorted");
}

double Particle::weight() const { return std::exp(log_weight); }

std::vector<double> Population::weights() const {
  std::vector<double> w;
  w.reserve(particles.size());
  for (const auto& p : particles) w.push_back(p.weight());
  return w;
}

Population init_particles(const FilterConfig& config, ScaleParam theta) {
  config.validate();
  Population pop;
  Particle proto;
  proto.urn = UrnState(theta);
  proto.rho = config.rho_walk ? config.rho_walk->rho0 : 1.0;
  proto.log_weight = -std::log(static_cast<double>(config.N));
  pop.particles.assign(static_cast<std::size_t>(config.N), proto);
  pop.ess = config.N;
  return pop;
}

double ess(std::span<const double> weights) {
  double ss = 0.0;
  for (double w : weights) ss += w * w;
  return 1.0 / ss;
}

std::vector<std::size_t> systematic_resample(std::span<const double> weights, std::size_t count, Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(count);
  const double step = 1.0 / static_cast<double>(count);
  const double start = uniform01(rng) * step;
  double cumulative = 0.0;
  std::size_t i = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double u = start + static_cast<double>(k) * step;
    while (i + 1 < weights.size() && cumulative + weights[i] <= u) cumulative += weights[i++];
    out.push_back(i);
  }
  return out;
}

Population resample(Population population, Rng& rng) {
  const auto w = population.weights();
  const auto picks = systematic_resample(w, w.size(), rng);
  std::vector<Particle> next;
  next.reserve(picks.size());
  const double lw = -std::log(static_cast<double>(picks.size()));
  for (auto i : picks) {
    next.push_back(population.particles[i]);
    next.back().log_weight = lw;
  }
  population.particles = std::move(next);
  population.resampled = true;
  population.ess = static_cast<double>(population.particles.size());
  return population;
}

Population advance(Population population, const ObservationBatch& batch, const ObservationModel& model,
                   const TransitionKernel& kernel, const FilterConfig& config, Rng& rng) {
  check_combination(model, kernel, config);
  for (Observation z : batch.values) validate_observation(model, z);
  const std::int64_t time = population.time + 1;
  const std::uint64_t step_seed = rng();

  auto& particles = population.particles;
  detail::parallel_for(particles.size(), config.threads, [&](std::size_t i) {
    Rng local = make_stream(step_seed, {static_cast<std::uint64_t>(i)});
    step_particle(particles[i], time, batch, model, kernel, config, local);
  });

  double top = kNegInf;
  for (const auto& p : particles) top = std::max(top, p.log_weight);
  if (!(top > kNegInf) || std::isnan(top)) throw DegeneracyError(time, "every particle weight is zero");
  double total = 0.0;
  for (const auto& p : particles) total += std::exp(p.log_weight - top);
  const double log_total = top + std::log(total);
  population.log_evidence += log_total;
  for (auto& p : particles) p.log_weight -= log_total;

  population.time = time;
  population.resampled = false;
  population.ess = ess(population.weights());
  if (population.ess <= config.ess_threshold_fraction * static_cast<double>(particles.size()))
    population = resample(std::move(population), rng);
  return population;
}

DensityEstimate estimate_density(const Population& population, std::span<const double> grid,
                                 const ObservationModel& model) {
  if (!is_gaussian(model)) throw UnsupportedError("density estimates need a Gaussian observation model");
  DensityEstimate est{std::vector<double>(grid.begin(), grid.end()), std::vector<double>(grid.size(), 0.0)};
  const double obs_var = obs_variance(model);

  struct Component {
    double weight;  // mixture weight times density normalizer
    ScalarPredictive pred;
  };
  std::vector<Component> comps;
  auto add = [&](double w, const ScalarPredictive& pred) {
    double log_norm;
    if (std::isinf(pred.dof)) {
      log_norm = -0.5 * std::log(2.0 * std::numbers::pi * pred.scale_sq);
    } else {
      log_norm = std::lgamma(0.5 * (pred.dof + 1.0)) - std::lgamma(0.5 * pred.dof) -
                 0.5 * std::log(pred.dof * pred.scale_sq * std::numbers::pi);
    }
    comps.push_back({w * std::exp(log_norm), pred});
  };

  const ScalarPredictive base_pred = ClusterStats(model).scalar_predictive(model);
  for (const auto& p : population.particles) {
    const double w = p.weight();
    if (w == 0.0) continue;
    const double theta = p.urn.theta().value();
    const double denom = static_cast<double>(p.urn.total_mass()) + theta;
    add(w * theta / denom, base_pred);
    for (const auto& [label, belief] : p.locations) {
      const double wk = w * static_cast<double>(p.urn.mass(label)) / denom;
      std::visit(overloaded{
                     [&](const ClusterStats& s) { add(wk, s.scalar_predictive(model)); },
                     [&](const GaussianBelief& g) {
                       add(wk, {std::numeric_limits<double>::infinity(), g.mean, g.variance + obs_var});
                     },
                     [&](const Location& u) {
                       if (const auto* mv = std::get_if<MeanVar>(&u))
                         add(wk, {std::numeric_limits<double>::infinity(), mv->mean, mv->variance});
                       else
                         add(wk, {std::numeric_limits<double>::infinity(), std::get<double>(u), obs_var});
                     },
                 },
                 belief);
    }
  }

  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double x = grid[g];
    double v = 0.0;
    for (const auto& c : comps) {
      const double d2 = (x - c.pred.location) * (x - c.pred.location) / c.pred.scale_sq;
      if (std::isinf(c.pred.dof))
        v += c.weight * std::exp(-0.5 * d2);
      else
        v += c.weight * std::pow(1.0 + d2 / c.pred.dof, -0.5 * (c.pred.dof + 1.0));
    }
    est.values[g] = v;
  }
  return est;
}

double estimate_alive_mass(const Population& population) {
  double m = 0.0;
  for (const auto& p : population.particles) m += p.weight() * static_cast<double>(p.urn.total_mass());
  return m;
}

double estimate_rho(const Population& population, const FilterConfig& config) {
  if (!config.rho_walk) throw UnsupportedError("rho is not a filtered quantity without a RhoWalk");
  double r = 0.0;
  for (const auto& p : population.particles) r += p.weight() * p.rho;
  return r;
}

Population run_filter(const std::vector<ObservationBatch>& batches, const ObservationModel& model,
                      const TransitionKernel& kernel, const FilterConfig& config, ScaleParam theta,
                      std::uint64_t seed, const std::function<void(const FilterReport&)>& report) {
  validate(model);
  validate(kernel);
  Rng rng = make_stream(seed);
  Population pop = init_particles(config, theta);
  for (const auto& batch : batches) {
    pop = advance(std::move(pop), batch, model, kernel, config, rng);
    if (!report) continue;
    FilterReport r{pop.time, pop.ess, estimate_alive_mass(pop), std::nullopt, std::nullopt};
    if (config.rho_walk) r.rho = estimate_rho(pop, config);
    if (!config.grid.empty() && is_gaussian(model)) r.density = estimate_density(pop, config.grid, model);
    report(r);
  }
  return pop;
}

}  // namespace tvdpm
