#include "tvdpm/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "tvdpm/errors.hpp"
#include "tvdpm/stat_tests.hpp"

namespace tvdpm {

void DensityScenario::validate() const {
  if (T < 1) throw ConstraintViolation("T must be >= 1");
  if (n < 1) throw ConstraintViolation("n must be >= 1");
  if (regimes.empty() || regimes.front().start != 1) throw ConstraintViolation("the first regime must start at t=1");
  for (std::size_t r = 0; r < regimes.size(); ++r) {
    const auto& regime = regimes[r];
    if (r > 0 && regime.start <= regimes[r - 1].start)
      throw ConstraintViolation("regime starts must increase");
    if (regime.components.empty()) throw ConstraintViolation("a regime needs at least one component");
    for (const auto& c : regime.components) {
      if (!(c.weight > 0.0) || !(c.sd > 0.0) || !std::isfinite(c.mean))
        throw ConstraintViolation("components need positive weight and sd and a finite mean");
      if (c.drift && c.drift->to <= c.drift->from) throw ConstraintViolation("drift window must have to > from");
    }
  }
}

std::vector<TruthComponent> truth_at(const DensityScenario& scenario, std::int64_t t) {
  const DensityRegime* regime = &scenario.regimes.front();
  for (const auto& r : scenario.regimes)
    if (r.start <= t) regime = &r;
  double total = 0.0;
  for (const auto& c : regime->components) total += c.weight;
  std::vector<TruthComponent> out;
  for (const auto& c : regime->components) {
    double mean = c.mean;
    if (c.drift) {
      const auto& d = *c.drift;
      const double s = std::clamp(static_cast<double>(t - d.from) / static_cast<double>(d.to - d.from), 0.0, 1.0);
      mean = c.mean + s * (d.to_mean - c.mean);
    }
    out.push_back({c.weight / total, mean, c.sd});
  }
  return out;
}

double truth_density(const std::vector<TruthComponent>& truth, double x) {
  double f = 0.0;
  for (const auto& c : truth) f += c.w * std::exp(normal_log_pdf(x, c.mean, c.sd * c.sd));
  return f;
}

DensityData generate_density_data(const DensityScenario& scenario, Rng& rng) {
  scenario.validate();
  DensityData data;
  for (std::int64_t t = 1; t <= scenario.T; ++t) {
    auto truth = truth_at(scenario, t);
    std::vector<double> weights;
    for (const auto& c : truth) weights.push_back(c.w);
    ObservationBatch batch{t, {}};
    for (int k = 0; k < scenario.n; ++k) {
      const auto& c = truth[sample_categorical(rng, weights)];
      batch.values.push_back(normal(rng, c.mean, c.sd));
    }
    data.batches.push_back(std::move(batch));
    data.truth.push_back(std::move(truth));
  }
  return data;
}

double l1_distance(const std::vector<double>& grid, const std::vector<double>& estimate,
                   const std::vector<TruthComponent>& truth) {
  if (grid.size() != estimate.size()) throw ConstraintViolation("grid and estimate differ in length");
  std::vector<double> gap(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) gap[i] = std::abs(estimate[i] - truth_density(truth, grid[i]));
  return trapezoid(grid, gap);
}

void TopicCorpusSpec::validate() const {
  if (K < 2) throw ConstraintViolation("K must be >= 2");
  if (T < 1 || words_per_step < 1) throw ConstraintViolation("T and words_per_step must be >= 1");
  if (!(theta_v > 0.0)) throw ConstraintViolation("theta_v must be positive");
  if (topics.empty() || topics.size() > static_cast<std::size_t>(K))
    throw ConstraintViolation("need between 1 and K topics");
  for (std::int64_t t = 1; t <= T; ++t) {
    bool any = false;
    for (const auto& s : topics) any = any || (s.first <= t && t <= s.last);
    if (!any) throw ConstraintViolation("no active topic at t=" + std::to_string(t));
  }
}

TopicCorpus generate_topic_corpus(const TopicCorpusSpec& spec, Rng& rng) {
  spec.validate();
  const auto J = spec.topics.size();
  TopicCorpus corpus;
  const std::vector<double> alpha(static_cast<std::size_t>(spec.K), spec.theta_v / spec.K);
  for (std::size_t j = 0; j < J; ++j) corpus.topics.push_back(dirichlet(rng, alpha));
  for (std::int64_t t = 1; t <= spec.T; ++t) {
    std::vector<double> popularity(J, 0.0);
    for (std::size_t j = 0; j < J; ++j) {
      const auto& s = spec.topics[j];
      if (s.first <= t && t <= s.last)
        popularity[j] = 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 7.0 + static_cast<double>(j));
    }
    ObservationBatch batch{t, {}};
    std::vector<int> labels;
    for (int k = 0; k < spec.words_per_step; ++k) {
      const auto j = sample_categorical(rng, popularity);
      const auto w = sample_categorical(rng, corpus.topics[j]);
      batch.values.push_back(static_cast<double>(w + 1));
      labels.push_back(static_cast<int>(j));
    }
    corpus.batches.push_back(std::move(batch));
    corpus.topic_of.push_back(std::move(labels));
  }
  return corpus;
}

}  // namespace tvdpm
