#include "tvdpm/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/random/binomial_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include "tvdpm/errors.hpp"

namespace tvdpm {

Rng make_stream(std::uint64_t master_seed, std::initializer_list<std::uint64_t> keys) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * keys.size());
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(master_seed);
  for (auto k : keys) push(k);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

double uniform01(Rng& rng) { return boost::random::uniform_01<double>{}(rng); }

double normal(Rng& rng, double mean, double sd) {
  return boost::random::normal_distribution<double>{mean, sd}(rng);
}

double gamma(Rng& rng, double shape, double scale) {
  return boost::random::gamma_distribution<double>{shape, scale}(rng);
}

double beta(Rng& rng, double a, double b) {
  // Two gammas rather than boost's beta_distribution so that extreme shape
  // ratios (a_rho = 1000 against a tiny second shape) stay finite.
  const double x = gamma(rng, a);
  const double y = gamma(rng, b);
  if (x + y <= 0.0) return a >= b ? 1.0 : 0.0;
  return x / (x + y);
}

std::int64_t binomial(Rng& rng, std::int64_t trials, double p) {
  if (trials <= 0 || p <= 0.0) return 0;
  if (p >= 1.0) return trials;
  return boost::random::binomial_distribution<std::int64_t, double>{trials, p}(rng);
}

bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

std::vector<double> dirichlet(Rng& rng, std::span<const double> alpha) {
  std::vector<double> out(alpha.size());
  double total = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    out[i] = gamma(rng, alpha[i]);
    total += out[i];
  }
  if (total <= 0.0) {
    // All gammas underflowed (tiny concentrations): put the mass on one
    // coordinate chosen proportionally to alpha.
    std::fill(out.begin(), out.end(), 0.0);
    out[sample_categorical(rng, alpha)] = 1.0;
    return out;
  }
  for (auto& v : out) v /= total;
  return out;
}

std::size_t sample_categorical(Rng& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) return weights.size();
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    u -= weights[i];
    if (u < 0.0) return i;
  }
  // Rounding left a sliver: return the last positive entry.
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  return weights.size();
}

std::size_t sample_log_categorical(Rng& rng, std::span<const double> log_weights) {
  if (log_weights.empty()) throw ConstraintViolation("sample_log_categorical: empty support");
  const double mx = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(mx)) {
    if (mx > 0) throw ConstraintViolation("sample_log_categorical: infinite weight");
    throw ConstraintViolation("sample_log_categorical: all weights are zero");
  }
  std::vector<double> w(log_weights.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i] - mx);
  return sample_categorical(rng, w);
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : values) s += std::exp(v - mx);
  return mx + std::log(s);
}

}  // namespace tvdpm
