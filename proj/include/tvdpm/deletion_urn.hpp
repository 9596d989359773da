#pragma once

// Generalized Polya urn with random deletion.
//
// A step at time t first kills part of the surviving allocation units
// according to a DeletionPolicy, then draws n new allocations from the urn
// formed by the survivors. Boxes that reach zero mass are dropped and their
// labels are never handed out again.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "tvdpm/partition.hpp"
#include "tvdpm/random.hpp"

namespace tvdpm {

class UrnState {
 public:
  /// Creation time -> number of alive units created then.
  using Cohorts = std::map<std::int64_t, std::int64_t>;

  explicit UrnState(ScaleParam theta) : theta_(theta) {}

  /// State holding the given boxes; every unit is stamped with creation time
  /// `time`. next_label becomes max(label) + 1.
  static UrnState from_boxes(ScaleParam theta, const std::map<Label, std::int64_t>& boxes, std::int64_t time = 0);

  ScaleParam theta() const { return theta_; }
  Label next_label() const { return next_label_; }
  /// Index of the last started step (0 before the first step).
  std::int64_t time() const { return time_; }
  void set_time(std::int64_t t) { time_ = t; }

  bool empty() const { return boxes_.empty(); }
  std::size_t num_boxes() const { return boxes_.size(); }
  std::int64_t total_mass() const { return total_; }
  std::int64_t mass(Label label) const;
  bool contains(Label label) const { return boxes_.count(label) != 0; }
  /// Alive labels in increasing order.
  std::vector<Label> labels() const;
  /// label -> mass for every non-empty box.
  std::map<Label, std::int64_t> boxes() const;
  const std::map<Label, Cohorts>& cohorts() const { return boxes_; }

  /// Adds one unit created at time() to an existing box.
  void join(Label label);
  /// Opens a new box with one unit; returns its label.
  Label open();
  /// Removes a whole box.
  void erase(Label label);
  /// Replaces the alive units of one box (count 0 entries are dropped).
  void set_cohorts(Label label, Cohorts cohorts);

  friend bool operator==(const UrnState& a, const UrnState& b) {
    return a.theta_.value() == b.theta_.value() && a.next_label_ == b.next_label_ && a.time_ == b.time_ &&
           a.boxes_ == b.boxes_;
  }

 private:
  ScaleParam theta_;
  Label next_label_ = 1;
  std::int64_t time_ = 0;
  std::int64_t total_ = 0;
  std::map<Label, Cohorts> boxes_;
};

struct DeletionPolicy;

namespace policy {

/// Each alive unit survives independently with probability rho.
struct Uniform {
  double rho;
};
/// `count` sequential whole-box deletions, each box picked with probability
/// proportional to its mass.
struct SizeBiased {
  int count = 1;
};
/// first w.p. alpha, second otherwise.
struct Mixture {
  double alpha;
  std::shared_ptr<const DeletionPolicy> first;
  std::shared_ptr<const DeletionPolicy> second;
};
/// Stages applied in order.
struct Compose {
  std::vector<DeletionPolicy> stages;
};
/// Units created more than `window` steps ago are killed deterministically.
struct SlidingWindow {
  int window;
};

}  // namespace policy

struct DeletionPolicy {
  std::variant<policy::Uniform, policy::SizeBiased, policy::Mixture, policy::Compose, policy::SlidingWindow> kind;

  static DeletionPolicy uniform(double rho);
  static DeletionPolicy size_biased(int count = 1);
  static DeletionPolicy mixture(double alpha, DeletionPolicy first, DeletionPolicy second);
  static DeletionPolicy compose(std::vector<DeletionPolicy> stages);
  static DeletionPolicy sliding_window(int window);

  /// Throws ConstraintViolation when any parameter is out of range.
  void validate() const;
  /// True when the policy is built from Uniform leaves only.
  bool uniform_only() const;
};

/// Per-unit Bernoulli(rho) thinning. Throws ConstraintViolation unless
/// rho is in [0,1].
UrnState delete_uniform(UrnState state, double rho, Rng& rng);

/// Removes one whole box chosen proportionally to its mass; no-op on an
/// empty state.
UrnState delete_size_biased(UrnState state, Rng& rng);

/// Dispatches on the policy. When rho_override is set it replaces the rho of
/// every Uniform leaf (time-varying rho).
UrnState apply_policy(UrnState state, const DeletionPolicy& policy, Rng& rng,
                      std::optional<double> rho_override = std::nullopt);

struct BatchResult {
  UrnState state;
  AllocationVector allocations;
};

/// n sequential urn draws at the current time: join box i w.p.
/// m_i / (sum m + theta), open a new box w.p. theta / (sum m + theta).
BatchResult allocate_batch(UrnState state, int n, Rng& rng);

/// One time step: advance the clock, delete, allocate.
BatchResult step(UrnState state, const DeletionPolicy& policy, int n, Rng& rng,
                 std::optional<double> rho_override = std::nullopt);

}  // namespace tvdpm
