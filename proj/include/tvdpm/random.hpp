#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace tvdpm {

/// The engine used everywhere. mt19937_64 output is fixed by the standard, and
/// the distributions below come from Boost.Random, whose algorithms do not
/// depend on the standard library vendor, so draws are reproducible across
/// platforms.
using Rng = std::mt19937_64;

/// Deterministic substream keyed by a master seed and a path of integers
/// (e.g. time step and particle index).
Rng make_stream(std::uint64_t master_seed, std::initializer_list<std::uint64_t> keys = {});

double uniform01(Rng& rng);
double normal(Rng& rng, double mean = 0.0, double sd = 1.0);
/// Gamma with shape/scale parametrization.
double gamma(Rng& rng, double shape, double scale = 1.0);
double beta(Rng& rng, double a, double b);
std::int64_t binomial(Rng& rng, std::int64_t trials, double p);
bool bernoulli(Rng& rng, double p);
std::vector<double> dirichlet(Rng& rng, std::span<const double> alpha);

/// Index drawn proportionally to non-negative weights. Returns weights.size()
/// when every weight is zero.
std::size_t sample_categorical(Rng& rng, std::span<const double> weights);

/// Index drawn proportionally to exp(log_weights), computed stably.
std::size_t sample_log_categorical(Rng& rng, std::span<const double> log_weights);

double log_sum_exp(std::span<const double> values);

}  // namespace tvdpm
