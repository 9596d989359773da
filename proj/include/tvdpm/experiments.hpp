#pragma once

// Synthetic data for the density-estimation and topic experiments.

#include <cstdint>
#include <optional>
#include <vector>

#include "tvdpm/obs_models.hpp"
#include "tvdpm/random.hpp"

namespace tvdpm {

/// Linear move of a component mean from its `mean` at time `from` to
/// `to_mean` at time `to`; constant outside the window.
struct MeanDrift {
  std::int64_t from = 0;
  std::int64_t to = 0;
  double to_mean = 0.0;
};

struct MixtureComponent {
  double weight = 1.0;
  double mean = 0.0;
  double sd = 1.0;
  std::optional<MeanDrift> drift;
};

/// Components in force from `start` until the next regime starts.
struct DensityRegime {
  std::int64_t start = 1;
  std::vector<MixtureComponent> components;
};

struct DensityScenario {
  std::int64_t T = 1000;
  int n = 1;
  std::vector<DensityRegime> regimes;

  /// Throws ConstraintViolation: regimes must start at 1 and increase, every
  /// regime needs positive weights and scales, drift windows must be ordered.
  void validate() const;
};

struct TruthComponent {
  double w = 0.0;
  double mean = 0.0;
  double sd = 1.0;
};

/// Normalized mixture in force at time t.
std::vector<TruthComponent> truth_at(const DensityScenario& scenario, std::int64_t t);
double truth_density(const std::vector<TruthComponent>& truth, double x);

struct DensityData {
  std::vector<ObservationBatch> batches;
  std::vector<std::vector<TruthComponent>> truth;  // truth[t-1]
};

DensityData generate_density_data(const DensityScenario& scenario, Rng& rng);

/// Integral over the grid of |f_est - f_true| (trapezoid rule).
double l1_distance(const std::vector<double>& grid, const std::vector<double>& estimate,
                   const std::vector<TruthComponent>& truth);

/// Words from a handful of fixed topics whose popularity changes over time.
/// The topics are draws from the topic model's own base Dir(theta_v/K, ...).
/// Each topic is active on [first, last]; active topics share each step's
/// words with weights that drift smoothly.
struct TopicCorpusSpec {
  int K = 20;
  std::int64_t T = 10;
  int words_per_step = 40;
  double theta_v = 0.5;
  struct Span {
    std::int64_t first = 1;
    std::int64_t last = 10;
  };
  std::vector<Span> topics{{1, 10}, {1, 7}, {4, 10}};

  void validate() const;
};

struct TopicCorpus {
  std::vector<ObservationBatch> batches;
  /// True topic of every word, batches[t-1].values[k] <-> topic_of[t-1][k].
  std::vector<std::vector<int>> topic_of;
  /// topics[j][w-1] = P(word w | topic j).
  std::vector<std::vector<double>> topics;
};

TopicCorpus generate_topic_corpus(const TopicCorpusSpec& spec, Rng& rng);

}  // namespace tvdpm
