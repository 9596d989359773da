#include "tvdpm/mcmc_gibbs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>

#include "tvdpm/errors.hpp"

namespace tvdpm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using Slot = MCMCState::Slot;

double uniform_rho(const DeletionPolicy& policy) {
  return std::visit(
      [](const auto& p) -> double {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, policy::Uniform>) {
          return p.rho;
        } else if constexpr (std::is_same_v<P, policy::Compose>) {
          double rho = 1.0;
          for (const auto& stage : p.stages) rho *= uniform_rho(stage);
          return rho;
        } else {
          throw UnsupportedError("the Gibbs sampler supports uniform deletion only");
        }
      },
      policy.kind);
}

}  // namespace

// Per-time observation summary used by the AR(1) marginal.
struct TimeMoments {
  double n = 0.0, sum = 0.0, sum_sq = 0.0;
};

// Everything the scores need about a set of allocations, additive over members.
struct Summary {
  std::vector<std::int64_t> born;  // index u = 1..T
  std::vector<std::int64_t> dead;  // index u = 1..T+1
  std::optional<ClusterStats> stats;
  std::vector<TimeMoments> moments;

  Summary(std::int64_t T, const ObservationModel& model, bool ar1)
      : born(static_cast<std::size_t>(T + 2), 0), dead(static_cast<std::size_t>(T + 2), 0) {
    if (ar1)
      moments.resize(static_cast<std::size_t>(T + 2));
    else
      stats.emplace(model);
  }

  void add_member(std::int64_t t, std::int64_t d, Observation z) {
    ++born[static_cast<std::size_t>(t)];
    ++dead[static_cast<std::size_t>(d)];
    if (stats) {
      stats->add(z);
    } else {
      auto& m = moments[static_cast<std::size_t>(t)];
      m.n += 1.0;
      m.sum += z;
      m.sum_sq += z * z;
    }
  }

  void add(const Summary& other) {
    for (std::size_t u = 0; u < born.size(); ++u) {
      born[u] += other.born[u];
      dead[u] += other.dead[u];
    }
    if (stats) {
      stats->merge(*other.stats);
    } else {
      for (std::size_t u = 0; u < moments.size(); ++u) {
        moments[u].n += other.moments[u].n;
        moments[u].sum += other.moments[u].sum;
        moments[u].sum_sq += other.moments[u].sum_sq;
      }
    }
  }
};

struct MCMCState::Group {
  std::vector<Slot> members;  // sorted by (t, k)
  Summary summary;
  std::int64_t death = 0;     // largest death time among members
  double log_f = 0.0;
  double log_ml = 0.0;

  Slot founder() const { return members.front(); }
  std::int64_t birth() const { return members.front().t; }
};

namespace {

using Group = MCMCState::Group;

// Prior weight of one cluster: log theta for the founder plus the log of the
// number of earlier members still alive for every later member. -inf when a
// member arrives while nothing of the cluster is alive.
double cluster_log_f(const Summary& s, double log_theta) {
  double f = 0.0;
  std::int64_t born_before = 0, dead_before = 0;
  bool started = false;
  const std::size_t T = s.born.size() - 2;
  for (std::size_t u = 1; u <= T; ++u) {
    const std::int64_t n = s.born[u];
    if (n > 0) {
      const std::int64_t alive = born_before - dead_before;
      if (!started) {
        started = true;
        f += log_theta + std::lgamma(static_cast<double>(n));
      } else {
        if (alive <= 0) return kNegInf;
        f += std::lgamma(static_cast<double>(alive + n)) - std::lgamma(static_cast<double>(alive));
      }
    }
    born_before += n;
    dead_before += s.dead[u];
  }
  return f;
}

// Splits sorted members into maximal contiguous runs: a member opens a new
// run when every earlier member of the current run is dead at its time.
template <class DeathOf>
std::vector<std::vector<Slot>> split_runs(const std::vector<Slot>& members, DeathOf death_of) {
  std::vector<std::vector<Slot>> runs;
  std::int64_t reach = 0;
  for (const Slot& m : members) {
    if (runs.empty() || m.t > reach) {
      runs.emplace_back();
      reach = death_of(m);
    } else {
      reach = std::max(reach, death_of(m));
    }
    runs.back().push_back(m);
  }
  return runs;
}

// A chain is a list of pool indices whose alive intervals are disjoint and
// ordered in time.
void enumerate_chains(const std::vector<const Group*>& pool, std::size_t from, std::int64_t reach,
                      std::vector<std::size_t>& current, std::vector<std::vector<std::size_t>>& out) {
  out.push_back(current);
  for (std::size_t j = from; j < pool.size(); ++j) {
    if (pool[j]->birth() <= reach) continue;
    current.push_back(j);
    enumerate_chains(pool, j + 1, pool[j]->death, current, out);
    current.pop_back();
  }
}

// FFBS draw of an AR(1) track over [first, last] given per-time moments.
std::vector<double> ffbs_ar1(const GaussianAR1& kernel, double obs_var, const std::vector<TimeMoments>& moments,
                             std::int64_t first, std::int64_t last, Rng& rng) {
  const auto len = static_cast<std::size_t>(last - first + 1);
  std::vector<GaussianBelief> filtered(len);
  GaussianBelief belief{kernel.base.mu0, kernel.base.sigma0 * kernel.base.sigma0};
  for (std::size_t i = 0; i < len; ++i) {
    if (i > 0) belief.predict(kernel);
    const auto u = static_cast<std::size_t>(first) + i;
    if (u < moments.size() && moments[u].n > 0)
      belief.update_batch(moments[u].n, moments[u].sum, moments[u].sum_sq, obs_var);
    filtered[i] = belief;
  }
  const double phi = kernel.phi;
  const double mu0 = kernel.base.mu0;
  const double q = (1.0 - phi * phi) * kernel.base.sigma0 * kernel.base.sigma0;
  std::vector<double> track(len);
  track[len - 1] = normal(rng, filtered[len - 1].mean, std::sqrt(std::max(filtered[len - 1].variance, 0.0)));
  for (std::size_t i = len - 1; i-- > 0;) {
    const auto& f = filtered[i];
    const double pred_var = phi * phi * f.variance + q;
    if (pred_var <= 0.0) {
      track[i] = track[i + 1];
      continue;
    }
    const double gain = phi * f.variance / pred_var;
    const double mean = f.mean + gain * (track[i + 1] - (phi * f.mean + (1.0 - phi) * mu0));
    const double var = std::max(f.variance - gain * gain * pred_var, 0.0);
    track[i] = normal(rng, mean, std::sqrt(var));
  }
  return track;
}

// Log marginal of a candidate summary.
double summary_log_ml(const Summary& s, const ObservationModel& model, const TransitionKernel& kernel,
                      bool likelihood) {
  if (!likelihood) return 0.0;
  if (s.stats) return s.stats->log_marginal(model);
  const auto& kv = std::get<KnownVarianceGaussianModel>(model);
  const auto& ar1 = std::get<GaussianAR1>(kernel);
  GaussianBelief belief{ar1.base.mu0, ar1.base.sigma0 * ar1.base.sigma0};
  double ml = 0.0;
  bool started = false;
  for (std::size_t u = 1; u < s.moments.size(); ++u) {
    const auto& m = s.moments[u];
    if (!started && m.n == 0) continue;
    if (started) belief.predict(ar1);
    started = true;
    if (m.n > 0) ml += belief.update_batch(m.n, m.sum, m.sum_sq, kv.obs_sigma * kv.obs_sigma);
  }
  return ml;
}

}  // namespace

AliveCounts reconstruct_counts(const LabelTable& c, const DeathTable& d) {
  if (c.size() != d.size()) throw ConstraintViolation("label and death tables differ in length");
  const auto T = static_cast<std::int64_t>(c.size());
  AliveCounts counts;
  counts.entering.resize(c.size());
  counts.after.resize(c.size());
  for (std::int64_t t = 1; t <= T; ++t) {
    const auto& ct = c[static_cast<std::size_t>(t - 1)];
    const auto& dt = d[static_cast<std::size_t>(t - 1)];
    if (ct.size() != dt.size()) throw ConstraintViolation("batch " + std::to_string(t) + " has mismatched tables");
    for (std::size_t k = 0; k < ct.size(); ++k) {
      if (dt[k] < t || dt[k] > T + 1)
        throw ConstraintViolation("death time " + std::to_string(dt[k]) + " out of range at t=" + std::to_string(t));
      for (std::int64_t u = t; u <= std::min(dt[k], T); ++u) {
        ++counts.after[static_cast<std::size_t>(u - 1)][ct[k]];
        if (u > t) ++counts.entering[static_cast<std::size_t>(u - 1)][ct[k]];
      }
    }
  }
  return counts;
}

double log_lifetime_prior(std::int64_t t, std::int64_t d, std::int64_t T, double rho) {
  if (d < t || d > T + 1) return kNegInf;
  const auto lived = static_cast<double>(d - t);
  if (d == T + 1) return rho == 0.0 ? kNegInf : lived * std::log(rho);
  if (rho == 1.0) return kNegInf;
  return (lived == 0.0 ? 0.0 : lived * std::log(rho)) + std::log1p(-rho);
}

MCMCState::MCMCState(std::vector<ObservationBatch> data, ObservationModel model, TransitionKernel kernel,
                     MCMCConfig config)
    : data_(std::move(data)), model_(std::move(model)), kernel_(std::move(kernel)), config_(std::move(config)) {
  validate(model_);
  validate(kernel_);
  config_.policy.validate();
  if (!(config_.theta > 0.0)) throw ConstraintViolation("theta must be positive");
  rho_ = uniform_rho(config_.policy);
  if (data_.empty()) throw ConstraintViolation("the sampler needs at least one batch");
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (data_[i].time != static_cast<std::int64_t>(i + 1))
      throw ConstraintViolation("batches must be numbered 1..T in order");
    if (data_[i].values.empty()) throw ConstraintViolation("empty batch at t=" + std::to_string(i + 1));
    for (double z : data_[i].values) validate_observation(model_, z);
  }
  if (std::holds_alternative<ScalarKernel>(kernel_))
    throw UnsupportedError("the Gibbs sampler needs a Static or GaussianAR1 kernel");
  if (const auto* ar1 = std::get_if<GaussianAR1>(&kernel_)) {
    const auto* kv = std::get_if<KnownVarianceGaussianModel>(&model_);
    const auto* base = kv ? std::get_if<GaussianKnownVar>(&kv->base) : nullptr;
    if (base == nullptr)
      throw UnsupportedError("GaussianAR1 requires the known-variance Gaussian model with a Gaussian base");
    if (base->mu0 != ar1->base.mu0 || base->sigma0 != ar1->base.sigma0)
      throw ConstraintViolation("the AR(1) kernel must leave the model's base measure invariant");
  }
}

MCMCState::MCMCState(std::vector<ObservationBatch> data, ObservationModel model, TransitionKernel kernel,
                     MCMCConfig config, Rng& rng)
    : MCMCState(std::move(data), std::move(model), std::move(kernel), std::move(config)) {
  const std::int64_t T = horizon();
  // Death times first (they are independent of the labels), then labels
  // through the urn given who is alive.
  d_.resize(data_.size());
  LabelTable c(data_.size());
  for (std::int64_t t = 1; t <= T; ++t) {
    const auto n = data_[static_cast<std::size_t>(t - 1)].values.size();
    auto& dt = d_[static_cast<std::size_t>(t - 1)];
    dt.resize(n);
    for (auto& d : dt) {
      d = t;
      while (d <= T && bernoulli(rng, rho_)) ++d;
    }
  }
  Label fresh = 1;
  std::vector<std::pair<Label, std::int64_t>> earlier;  // (label, death) in allocation order
  for (std::int64_t t = 1; t <= T; ++t) {
    const auto& dt = d_[static_cast<std::size_t>(t - 1)];
    auto& ct = c[static_cast<std::size_t>(t - 1)];
    for (std::size_t k = 0; k < dt.size(); ++k) {
      std::map<Label, double> mass;
      for (const auto& [label, death] : earlier)
        if (death >= t) mass[label] += 1.0;
      std::vector<Label> labels;
      std::vector<double> weights;
      for (const auto& [label, m] : mass) {
        labels.push_back(label);
        weights.push_back(m);
      }
      labels.push_back(fresh);
      weights.push_back(config_.theta);
      const Label chosen = labels[sample_categorical(rng, weights)];
      if (chosen == fresh) ++fresh;
      ct.push_back(chosen);
      earlier.emplace_back(chosen, dt[k]);
    }
  }
  rebuild(c, rng);
}

MCMCState MCMCState::from_tables(std::vector<ObservationBatch> data, ObservationModel model, TransitionKernel kernel,
                                 MCMCConfig config, const LabelTable& c, const DeathTable& d, Rng& rng) {
  MCMCState state(std::move(data), std::move(model), std::move(kernel), std::move(config));
  if (c.size() != state.data_.size()) throw ConstraintViolation("label table length differs from the data");
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i].size() != state.data_[i].values.size())
      throw ConstraintViolation("label table batch " + std::to_string(i + 1) + " differs from the data");
    for (Label l : c[i])
      if (l <= 0) throw ConstraintViolation("labels must be positive");
  }
  reconstruct_counts(c, d);  // shape and range checks
  state.d_ = d;
  state.rebuild(c, rng);
  return state;
}

MCMCState::Group MCMCState::build_group(std::vector<Slot> members) const {
  Group g{std::move(members), Summary(horizon(), model_, ar1())};
  for (const Slot& m : g.members) {
    const std::int64_t d = d_[static_cast<std::size_t>(m.t - 1)][m.k];
    g.summary.add_member(m.t, d, data_[static_cast<std::size_t>(m.t - 1)].values[m.k]);
    g.death = std::max(g.death, d);
  }
  g.log_f = cluster_log_f(g.summary, std::log(config_.theta));
  g.log_ml = summary_log_ml(g.summary, model_, kernel_, config_.likelihood);
  return g;
}

void MCMCState::rebuild(const LabelTable& c, Rng& rng) {
  std::map<Label, std::vector<Slot>> members;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t k = 0; k < c[i].size(); ++k)
      members[c[i][k]].push_back(Slot{static_cast<std::int64_t>(i + 1), k});
  next_label_ = members.empty() ? 1 : members.rbegin()->first + 1;
  c_ = c;
  groups_.clear();
  tracks_.clear();
  for (auto& [label, slots] : members) {
    auto runs = split_runs(slots, [&](const Slot& m) { return d_[static_cast<std::size_t>(m.t - 1)][m.k]; });
    for (std::size_t r = 0; r < runs.size(); ++r) install(r == 0 ? label : next_label_++, build_group(runs[r]));
  }
  entering_mass_.assign(c_.size(), 0);
  const auto counts = reconstruct_counts(c_, d_);
  for (std::size_t u = 0; u < c_.size(); ++u)
    for (const auto& [label, m] : counts.entering[u]) entering_mass_[u] += m;
  if (config_.locations == LocationHandling::Explicit)
    for (const auto& [label, g] : groups_) resample_track(label, rng);
}

void MCMCState::install(Label label, Group group) {
  for (const Slot& m : group.members) c_[static_cast<std::size_t>(m.t - 1)][m.k] = label;
  groups_[label] = std::make_shared<Group>(std::move(group));
}

namespace {

std::vector<Slot> merge_members(std::vector<Slot> into, const std::vector<Slot>& more) {
  const auto mid = into.size();
  into.insert(into.end(), more.begin(), more.end());
  std::inplace_merge(into.begin(), into.begin() + static_cast<std::ptrdiff_t>(mid), into.end());
  return into;
}

}  // namespace

// A piece is a cluster of the detached configuration: either an untouched
// current cluster or a run of the cluster the move broke up.
struct PieceRef {
  std::shared_ptr<const Group> group;
  Label label;        // label the piece keeps if it survives unmerged, 0 for "fresh"
  bool existing;      // an untouched current cluster
};

void MCMCState::gibbs_allocation(std::int64_t t, std::size_t k, Rng& rng) {
  const Slot me{t, k};
  const auto ti = static_cast<std::size_t>(t - 1);
  const Label old = c_.at(ti).at(k);
  const std::int64_t my_death = d_[ti][k];
  const Observation z = data_[ti].values[k];
  const std::shared_ptr<const Group> broken = groups_.at(old);
  const bool was_founder = broken->founder() == me;

  std::vector<Slot> rest;
  rest.reserve(broken->members.size());
  for (const Slot& m : broken->members)
    if (m != me) rest.push_back(m);

  std::vector<PieceRef> pieces;
  for (const auto& [label, g] : groups_)
    if (label != old) pieces.push_back({g, label, true});
  auto runs = split_runs(rest, [&](const Slot& m) { return d_[static_cast<std::size_t>(m.t - 1)][m.k]; });
  for (auto& run : runs) {
    const bool keeps = !was_founder && run.front() == broken->founder();
    pieces.push_back({std::make_shared<const Group>(build_group(std::move(run))), keeps ? old : 0, false});
  }

  std::vector<std::size_t> left;   // pieces alive at t with a member before me
  std::vector<std::size_t> right;  // pieces born after me while I am alive
  for (std::size_t p = 0; p < pieces.size(); ++p) {
    const Group& g = *pieces[p].group;
    if (g.founder() < me) {
      if (g.death >= t) left.push_back(p);
    } else if (g.birth() <= my_death) {
      right.push_back(p);
    }
  }
  std::sort(right.begin(), right.end(),
            [&](std::size_t a, std::size_t b) { return pieces[a].group->founder() < pieces[b].group->founder(); });
  std::vector<const Group*> right_groups;
  for (std::size_t p : right) right_groups.push_back(pieces[p].group.get());

  Summary mine(horizon(), model_, ar1());
  mine.add_member(t, my_death, z);

  struct Candidate {
    std::optional<std::size_t> left;
    std::vector<std::size_t> chain;  // indices into `right`
  };
  std::vector<Candidate> candidates;
  std::vector<double> scores;
  const double log_theta = std::log(config_.theta);
  std::vector<std::optional<std::size_t>> left_options{std::nullopt};
  for (std::size_t p : left) left_options.push_back(p);
  for (const auto& lo : left_options) {
    const std::int64_t reach = lo ? pieces[*lo].group->death : 0;
    std::vector<std::vector<std::size_t>> chains;
    std::vector<std::size_t> scratch;
    enumerate_chains(right_groups, 0, reach, scratch, chains);
    for (auto& chain : chains) {
      Summary s = mine;
      double score = 0.0;
      if (lo) {
        s.add(pieces[*lo].group->summary);
        score -= pieces[*lo].group->log_f + pieces[*lo].group->log_ml;
      }
      for (std::size_t j : chain) {
        s.add(right_groups[j]->summary);
        score -= right_groups[j]->log_f + right_groups[j]->log_ml;
      }
      score += cluster_log_f(s, log_theta) + summary_log_ml(s, model_, kernel_, config_.likelihood);
      candidates.push_back({lo, std::move(chain)});
      scores.push_back(score);
    }
  }
  const Candidate& pick = candidates[sample_log_categorical(rng, scores)];

  // Apply: every piece not absorbed becomes (or stays) a cluster.
  std::set<std::size_t> absorbed;
  if (pick.left) absorbed.insert(*pick.left);
  for (std::size_t j : pick.chain) absorbed.insert(right[j]);

  std::vector<Label> touched;
  groups_.erase(old);
  for (std::size_t p = 0; p < pieces.size(); ++p) {
    if (pieces[p].existing) {
      if (absorbed.count(p)) groups_.erase(pieces[p].label);
      continue;
    }
    if (absorbed.count(p)) continue;
    const Label label = pieces[p].label != 0 ? pieces[p].label : next_label_++;
    install(label, *pieces[p].group);
    touched.push_back(label);
  }
  std::vector<Slot> members{me};
  for (std::size_t p : absorbed) members = merge_members(std::move(members), pieces[p].group->members);
  Label label = 0;
  if (pick.left)
    label = pieces[*pick.left].label;
  else if (was_founder)
    label = old;
  if (label == 0) label = next_label_++;
  install(label, build_group(std::move(members)));
  touched.push_back(label);

  if (config_.locations == LocationHandling::Explicit) {
    // The score integrated out every candidate piece's location, so all of
    // them are redrawn.
    for (std::size_t p : left) touched.push_back(label_at(pieces[p].group->founder()));
    for (std::size_t p : right) touched.push_back(label_at(pieces[p].group->founder()));
    refresh_tracks(touched, rng);
  }
}

void MCMCState::gibbs_death_time(std::int64_t t, std::size_t k, Rng& rng) {
  const Slot me{t, k};
  const auto ti = static_cast<std::size_t>(t - 1);
  const std::int64_t T = horizon();
  const Label old = c_.at(ti).at(k);
  const std::int64_t old_death = d_[ti][k];
  const std::shared_ptr<const Group> broken = groups_.at(old);

  // Detach: pretend the allocation dies immediately and cut its cluster.
  d_[ti][k] = t;
  for (std::int64_t u = t + 1; u <= std::min(old_death, T); ++u) --entering_mass_[static_cast<std::size_t>(u - 1)];

  std::vector<PieceRef> pieces;
  for (const auto& [label, g] : groups_)
    if (label != old) pieces.push_back({g, label, true});
  std::optional<std::size_t> home;
  auto runs = split_runs(broken->members, [&](const Slot& m) { return d_[static_cast<std::size_t>(m.t - 1)][m.k]; });
  for (auto& run : runs) {
    const bool keeps = run.front() == broken->founder();
    const bool mine = std::find(run.begin(), run.end(), me) != run.end();
    if (mine) home = pieces.size();
    pieces.push_back({std::make_shared<const Group>(build_group(std::move(run))), keeps ? old : 0, false});
  }
  const Group& base = *pieces[*home].group;

  std::vector<std::size_t> right;
  for (std::size_t p = 0; p < pieces.size(); ++p) {
    const Group& g = *pieces[p].group;
    if (p != *home && me < g.founder() && g.birth() > base.death) right.push_back(p);
  }
  std::sort(right.begin(), right.end(),
            [&](std::size_t a, std::size_t b) { return pieces[a].group->founder() < pieces[b].group->founder(); });
  std::vector<const Group*> right_groups;
  for (std::size_t p : right) right_groups.push_back(pieces[p].group.get());
  std::vector<std::vector<std::size_t>> chains;
  {
    std::vector<std::size_t> scratch;
    enumerate_chains(right_groups, 0, base.death, scratch, chains);
  }

  const double log_theta = std::log(config_.theta);
  const double theta = config_.theta;
  struct Candidate {
    std::int64_t death;
    std::size_t chain;
  };
  std::vector<Candidate> candidates;
  std::vector<double> scores;
  double denominators = 0.0;
  for (std::int64_t dn = t; dn <= T + 1; ++dn) {
    if (dn > t && dn <= T) {
      const auto M = static_cast<double>(entering_mass_[static_cast<std::size_t>(dn - 1)]);
      const auto n = static_cast<double>(data_[static_cast<std::size_t>(dn - 1)].values.size());
      denominators += std::log(M + n + theta) - std::log(M + theta);
    }
    const double geo = log_lifetime_prior(t, dn, T, rho_);
    if (geo == kNegInf) continue;
    for (std::size_t ci = 0; ci < chains.size(); ++ci) {
      const auto& chain = chains[ci];
      if (!chain.empty() && right_groups[chain.back()]->birth() > dn) continue;
      Summary s = base.summary;
      --s.dead[static_cast<std::size_t>(t)];
      ++s.dead[static_cast<std::size_t>(dn)];
      double score = geo - denominators;
      for (std::size_t j : chain) {
        s.add(right_groups[j]->summary);
        score -= right_groups[j]->log_f + right_groups[j]->log_ml;
      }
      score += cluster_log_f(s, log_theta) + summary_log_ml(s, model_, kernel_, config_.likelihood);
      candidates.push_back({dn, ci});
      scores.push_back(score);
    }
  }
  const Candidate pick = candidates[sample_log_categorical(rng, scores)];

  d_[ti][k] = pick.death;
  for (std::int64_t u = t + 1; u <= std::min(pick.death, T); ++u) ++entering_mass_[static_cast<std::size_t>(u - 1)];

  std::set<std::size_t> absorbed;
  for (std::size_t j : chains[pick.chain]) absorbed.insert(right[j]);
  std::vector<Label> touched;
  groups_.erase(old);
  for (std::size_t p = 0; p < pieces.size(); ++p) {
    if (p == *home) continue;
    if (pieces[p].existing) {
      if (absorbed.count(p)) groups_.erase(pieces[p].label);
      continue;
    }
    if (absorbed.count(p)) continue;
    const Label label = pieces[p].label != 0 ? pieces[p].label : next_label_++;
    install(label, *pieces[p].group);
    touched.push_back(label);
  }
  std::vector<Slot> members = pieces[*home].group->members;
  for (std::size_t p : absorbed) members = merge_members(std::move(members), pieces[p].group->members);
  const Label label = pieces[*home].label != 0 ? pieces[*home].label : next_label_++;
  install(label, build_group(std::move(members)));  // rebuilt with the new death time
  touched.push_back(label);

  if (config_.locations == LocationHandling::Explicit) {
    for (std::size_t p : right) touched.push_back(label_at(pieces[p].group->founder()));
    refresh_tracks(touched, rng);
  }
}

Label MCMCState::label_at(Slot s) const { return c_[static_cast<std::size_t>(s.t - 1)][s.k]; }

void MCMCState::refresh_tracks(std::vector<Label> labels, Rng& rng) {
  for (auto it = tracks_.begin(); it != tracks_.end();)
    it = groups_.count(it->first) ? std::next(it) : tracks_.erase(it);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  for (Label l : labels)
    if (groups_.count(l)) resample_track(l, rng);
}

void MCMCState::resample_track(Label label, Rng& rng) {
  const Group& g = *groups_.at(label);
  const std::int64_t first = g.birth();
  const std::int64_t last = std::min(g.death, horizon());
  LocationTrack track{label, first, {}};
  if (ar1()) {
    const auto& kv = std::get<KnownVarianceGaussianModel>(model_);
    const std::vector<TimeMoments> none;
    for (double v : ffbs_ar1(std::get<GaussianAR1>(kernel_), kv.obs_sigma * kv.obs_sigma,
                             config_.likelihood ? g.summary.moments : none, first, last, rng))
      track.values.emplace_back(v);
  } else {
    const Location u = config_.likelihood ? g.summary.stats->posterior_sample(model_, rng)
                                          : ClusterStats(model_).posterior_sample(model_, rng);
    track.values.assign(static_cast<std::size_t>(last - first + 1), u);
  }
  tracks_[label] = std::move(track);
}

void MCMCState::gibbs_locations(Label j, std::int64_t t, Rng& rng) {
  if (config_.locations != LocationHandling::Explicit)
    throw UnsupportedError("locations are integrated out in collapsed mode");
  const auto it = groups_.find(j);
  if (it == groups_.end()) throw ConstraintViolation("unknown label " + std::to_string(j));
  const Group& g = *it->second;
  const std::int64_t last = std::min(g.death, horizon());
  if (t < g.birth() || t > last)
    throw ConstraintViolation("label " + std::to_string(j) + " is not alive at t=" + std::to_string(t));
  if (!ar1()) {
    // One location for the whole lifetime: its conditional is the conjugate
    // posterior given every observation of the cluster.
    resample_track(j, rng);
    return;
  }
  const auto& kernel = std::get<GaussianAR1>(kernel_);
  const double obs_var = std::pow(std::get<KnownVarianceGaussianModel>(model_).obs_sigma, 2);
  const double phi = kernel.phi;
  const double mu0 = kernel.base.mu0;
  const double q = (1.0 - phi * phi) * kernel.base.sigma0 * kernel.base.sigma0;
  auto& track = tracks_.at(j);
  const auto value_at = [&](std::int64_t u) { return std::get<double>(track.at(u)); };

  double precision = 0.0, weighted = 0.0;
  if (t == g.birth()) {
    const double v = kernel.base.sigma0 * kernel.base.sigma0;
    precision += 1.0 / v;
    weighted += mu0 / v;
  } else {
    if (q == 0.0) return;  // phi = 1: the track is pinned by its neighbours
    precision += 1.0 / q;
    weighted += (phi * value_at(t - 1) + (1.0 - phi) * mu0) / q;
  }
  if (t < last && phi != 0.0) {
    if (q == 0.0) return;
    precision += phi * phi / q;
    weighted += phi * (value_at(t + 1) - (1.0 - phi) * mu0) / q;
  }
  if (config_.likelihood) {
    const auto& m = g.summary.moments[static_cast<std::size_t>(t)];
    precision += m.n / obs_var;
    weighted += m.sum / obs_var;
  }
  track.values[static_cast<std::size_t>(t - track.birth_time)] =
      Location(normal(rng, weighted / precision, std::sqrt(1.0 / precision)));
}

void MCMCState::relabel(Label label, Rng& rng) {
  const auto it = groups_.find(label);
  if (it == groups_.end()) throw ConstraintViolation("unknown label " + std::to_string(label));
  const std::shared_ptr<const Group> g = it->second;
  auto runs = split_runs(g->members, [&](const Slot& m) { return d_[static_cast<std::size_t>(m.t - 1)][m.k]; });
  if (runs.size() == 1) return;
  std::vector<Label> touched;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const Label l = r == 0 ? label : next_label_++;
    install(l, build_group(std::move(runs[r])));
    touched.push_back(l);
  }
  if (config_.locations == LocationHandling::Explicit) refresh_tracks(touched, rng);
}

void MCMCState::sweep(Rng& rng) {
  for (std::int64_t t = 1; t <= horizon(); ++t) {
    const std::size_t n = c_[static_cast<std::size_t>(t - 1)].size();
    for (std::size_t k = 0; k < n; ++k) gibbs_allocation(t, k, rng);
    for (std::size_t k = 0; k < n; ++k) gibbs_death_time(t, k, rng);
    if (config_.locations == LocationHandling::Explicit) {
      std::vector<Label> alive;
      for (const auto& [label, g] : groups_)
        if (g->birth() <= t && t <= g->death) alive.push_back(label);
      for (Label j : alive) gibbs_locations(j, t, rng);
    }
  }
  if (config_.check_invariants) check_invariants();
}

std::vector<std::int64_t> MCMCState::alive_clusters() const {
  std::vector<std::int64_t> alive(c_.size(), 0);
  for (const auto& [label, g] : groups_)
    for (std::int64_t u = g->birth(); u <= std::min(g->death, horizon()); ++u) ++alive[static_cast<std::size_t>(u - 1)];
  return alive;
}

double MCMCState::log_likelihood() const {
  double total = 0.0;
  for (const auto& [label, g] : groups_) total += g->log_ml;
  return total;
}

double MCMCState::log_joint() const {
  double total = log_likelihood();
  for (const auto& [label, g] : groups_) total += g->log_f;
  for (std::int64_t t = 1; t <= horizon(); ++t) {
    const auto M = static_cast<double>(entering_mass_[static_cast<std::size_t>(t - 1)]);
    const auto& dt = d_[static_cast<std::size_t>(t - 1)];
    for (std::size_t k = 0; k < dt.size(); ++k) {
      total -= std::log(M + static_cast<double>(k) + config_.theta);
      total += log_lifetime_prior(t, dt[k], horizon(), rho_);
    }
  }
  return total;
}

void MCMCState::check_invariants() const {
  const auto fail = [](const std::string& what) { throw ConstraintViolation("sampler invariant broken: " + what); };
  const auto counts = reconstruct_counts(c_, d_);
  for (std::size_t u = 0; u < c_.size(); ++u) {
    std::int64_t mass = 0;
    for (const auto& [label, m] : counts.entering[u]) mass += m;
    if (mass != entering_mass_[u]) fail("entering mass at t=" + std::to_string(u + 1));
  }
  std::map<Label, std::vector<Slot>> members;
  for (std::size_t i = 0; i < c_.size(); ++i)
    for (std::size_t k = 0; k < c_[i].size(); ++k) members[c_[i][k]].push_back(Slot{static_cast<std::int64_t>(i + 1), k});
  if (members.size() != groups_.size()) fail("cluster count");
  for (const auto& [label, slots] : members) {
    if (label >= next_label_) fail("label " + std::to_string(label) + " not below the fresh-label counter");
    const auto it = groups_.find(label);
    if (it == groups_.end()) fail("no cache for label " + std::to_string(label));
    const Group& cached = *it->second;
    if (cached.members != slots) fail("members of label " + std::to_string(label));
    const auto runs = split_runs(slots, [&](const Slot& m) { return d_[static_cast<std::size_t>(m.t - 1)][m.k]; });
    if (runs.size() != 1) fail("label " + std::to_string(label) + " has a gap in its alive interval");
    const Group fresh = build_group(slots);
    if (fresh.summary.born != cached.summary.born || fresh.summary.dead != cached.summary.dead ||
        fresh.death != cached.death)
      fail("counts of label " + std::to_string(label));
    if (!std::isfinite(cached.log_f) || std::abs(fresh.log_f - cached.log_f) > 1e-9)
      fail("prior term of label " + std::to_string(label));
    const double ml = summary_log_ml(fresh.summary, model_, kernel_, config_.likelihood);
    if (std::abs(ml - cached.log_ml) > 1e-8 * std::max(1.0, std::abs(ml)))
      fail("likelihood term of label " + std::to_string(label));
    // Per-time counts agree with the from-scratch views.
    for (std::int64_t u = cached.birth(); u <= horizon(); ++u) {
      const auto& after = counts.after[static_cast<std::size_t>(u - 1)];
      const auto found = after.find(label);
      const bool alive = u <= cached.death;
      if (alive != (found != after.end())) fail("alive interval of label " + std::to_string(label));
    }
    if (config_.locations == LocationHandling::Explicit) {
      const auto track = tracks_.find(label);
      if (track == tracks_.end() || track->second.birth_time != cached.birth() ||
          track->second.last_time() != std::min(cached.death, horizon()))
        fail("track of label " + std::to_string(label));
    }
  }
  if (config_.locations == LocationHandling::Explicit && tracks_.size() != groups_.size()) fail("stale tracks");
}

}  // namespace tvdpm
