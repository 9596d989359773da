#pragma once

// Batch Gibbs sampler over allocations c, death times d and (optionally)
// cluster locations, for the uniform-deletion model.
//
// Death times: allocation (t,k) is alive at every u with t <= u <= d. d ranges
// over t..T+1, where T+1 stands for "still alive after the horizon". A cluster
// is the set of allocations sharing a label; its alive interval must be
// contiguous, which is why moves split and merge clusters and hand out fresh
// labels.
//
// Both the allocation and the death-time updates are exact Gibbs draws from
// the posterior restricted to the set of states that agree with the current
// one once (t,k) is detached and the broken cluster is cut at its gaps. The
// likelihood used by those draws always integrates the locations out; in
// explicit mode the location tracks are resampled afterwards from their
// conditional given the new partition.

#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include "tvdpm/deletion_urn.hpp"
#include "tvdpm/location_kernels.hpp"
#include "tvdpm/obs_models.hpp"
#include "tvdpm/random.hpp"

namespace tvdpm {

enum class LocationHandling { Collapsed, Explicit };

struct MCMCConfig {
  double theta = 1.0;
  /// Must be a plain Uniform(rho) policy.
  DeletionPolicy policy = DeletionPolicy::uniform(0.5);
  LocationHandling locations = LocationHandling::Collapsed;
  /// When false every likelihood term is dropped and the chain targets the prior.
  bool likelihood = true;
  /// Recompute every cache from scratch after each sweep and compare.
  bool check_invariants = false;
};

/// c[t-1][k] and d[t-1][k] for t = 1..T; batches may differ in size.
using LabelTable = std::vector<std::vector<Label>>;
using DeathTable = std::vector<std::vector<std::int64_t>>;

struct AliveCounts {
  /// entering[u-1]: allocations with t < u <= d (alive when step u starts).
  std::vector<std::map<Label, std::int64_t>> entering;
  /// after[u-1]: allocations with t <= u <= d (alive once batch u is allocated).
  std::vector<std::map<Label, std::int64_t>> after;
};

/// Throws ConstraintViolation when a death time precedes its allocation time
/// or the two tables disagree in shape.
AliveCounts reconstruct_counts(const LabelTable& c, const DeathTable& d);

/// log P(d | t) under Uniform(rho), with the mass beyond T collapsed on T+1.
double log_lifetime_prior(std::int64_t t, std::int64_t d, std::int64_t T, double rho);

class MCMCState {
 public:
  /// Starts from a draw of the prior.
  MCMCState(std::vector<ObservationBatch> data, ObservationModel model, TransitionKernel kernel, MCMCConfig config,
            Rng& rng);

  /// Starts from given tables. Labels may be arbitrary positive integers; a
  /// label whose alive interval has gaps is split.
  static MCMCState from_tables(std::vector<ObservationBatch> data, ObservationModel model, TransitionKernel kernel,
                               MCMCConfig config, const LabelTable& c, const DeathTable& d, Rng& rng);

  /// Redraws c_{k,t} (k is 0-based, t is 1-based).
  void gibbs_allocation(std::int64_t t, std::size_t k, Rng& rng);
  /// Redraws d_{k,t}.
  void gibbs_death_time(std::int64_t t, std::size_t k, Rng& rng);
  /// Redraws U_{j,t}. Throws UnsupportedError in collapsed mode.
  void gibbs_locations(Label j, std::int64_t t, Rng& rng);
  /// Splits `label` at every gap of its alive interval; the segments after
  /// the first get fresh labels. No-op on a contiguous label, which every
  /// label is between moves.
  void relabel(Label label, Rng& rng);
  /// For t = 1..T: every allocation, every death time, then the locations of
  /// the clusters alive at t.
  void sweep(Rng& rng);

  std::int64_t horizon() const { return static_cast<std::int64_t>(data_.size()); }
  const LabelTable& allocations() const { return c_; }
  const DeathTable& deaths() const { return d_; }
  const TrackMap& tracks() const { return tracks_; }
  const std::vector<ObservationBatch>& data() const { return data_; }
  const MCMCConfig& config() const { return config_; }
  Label next_label() const { return next_label_; }
  double rho() const { return rho_; }

  /// Number of clusters alive after allocation at each t.
  std::vector<std::int64_t> alive_clusters() const;
  /// Sum over clusters of the collapsed log marginal likelihood.
  double log_likelihood() const;
  /// log p(c, d) + log_likelihood().
  double log_joint() const;
  /// Compares every cache with a from-scratch recomputation; throws
  /// ConstraintViolation on a mismatch, a gap or an invalid configuration.
  void check_invariants() const;

  /// Shared with the implementation file.
  struct Slot {
    std::int64_t t;
    std::size_t k;
    friend auto operator<=>(const Slot&, const Slot&) = default;
  };
  struct Group;

 private:
  MCMCState(std::vector<ObservationBatch> data, ObservationModel model, TransitionKernel kernel, MCMCConfig config);

  void rebuild(const LabelTable& c, Rng& rng);
  Group build_group(std::vector<Slot> members) const;
  void install(Label label, Group group);
  void resample_track(Label label, Rng& rng);
  void refresh_tracks(std::vector<Label> labels, Rng& rng);
  Label label_at(Slot s) const;
  bool ar1() const { return std::holds_alternative<GaussianAR1>(kernel_); }

  std::vector<ObservationBatch> data_;
  ObservationModel model_;
  TransitionKernel kernel_;
  MCMCConfig config_;
  double rho_;
  LabelTable c_;
  DeathTable d_;
  Label next_label_ = 1;
  std::map<Label, std::shared_ptr<Group>> groups_;
  /// entering mass M_u for u = 1..T (index u-1).
  std::vector<std::int64_t> entering_mass_;
  TrackMap tracks_;
};

}  // namespace tvdpm
