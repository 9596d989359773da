#include "tvdpm/deletion_urn.hpp"

#include <string>

#include "tvdpm/errors.hpp"

namespace tvdpm {

UrnState UrnState::from_boxes(ScaleParam theta, const std::map<Label, std::int64_t>& boxes, std::int64_t time) {
  UrnState s(theta);
  s.time_ = time;
  for (const auto& [label, mass] : boxes) {
    if (label < 1) throw ConstraintViolation("urn labels must be positive");
    if (mass < 0) throw ConstraintViolation("urn box mass must be non-negative");
    if (mass == 0) continue;
    s.boxes_[label][time] = mass;
    s.total_ += mass;
    s.next_label_ = std::max(s.next_label_, label + 1);
  }
  return s;
}

std::int64_t UrnState::mass(Label label) const {
  auto it = boxes_.find(label);
  if (it == boxes_.end()) return 0;
  std::int64_t m = 0;
  for (const auto& [t, c] : it->second) m += c;
  return m;
}

std::vector<Label> UrnState::labels() const {
  std::vector<Label> out;
  out.reserve(boxes_.size());
  for (const auto& [label, cohorts] : boxes_) out.push_back(label);
  return out;
}

std::map<Label, std::int64_t> UrnState::boxes() const {
  std::map<Label, std::int64_t> out;
  for (const auto& [label, cohorts] : boxes_) {
    std::int64_t m = 0;
    for (const auto& [t, c] : cohorts) m += c;
    out[label] = m;
  }
  return out;
}

void UrnState::join(Label label) {
  auto it = boxes_.find(label);
  if (it == boxes_.end()) throw ConstraintViolation("join: label " + std::to_string(label) + " is not alive");
  ++it->second[time_];
  ++total_;
}

Label UrnState::open() {
  const Label label = next_label_++;
  boxes_[label][time_] = 1;
  ++total_;
  return label;
}

void UrnState::erase(Label label) {
  auto it = boxes_.find(label);
  if (it == boxes_.end()) return;
  for (const auto& [t, c] : it->second) total_ -= c;
  boxes_.erase(it);
}

void UrnState::set_cohorts(Label label, Cohorts cohorts) {
  erase(label);
  std::erase_if(cohorts, [](const auto& kv) { return kv.second <= 0; });
  if (cohorts.empty()) return;
  if (label >= next_label_) throw ConstraintViolation("set_cohorts: label was never issued");
  for (const auto& [t, c] : cohorts) total_ += c;
  boxes_[label] = std::move(cohorts);
}

DeletionPolicy DeletionPolicy::uniform(double rho) {
  DeletionPolicy p{policy::Uniform{rho}};
  p.validate();
  return p;
}

DeletionPolicy DeletionPolicy::size_biased(int count) {
  DeletionPolicy p{policy::SizeBiased{count}};
  p.validate();
  return p;
}

DeletionPolicy DeletionPolicy::mixture(double alpha, DeletionPolicy first, DeletionPolicy second) {
  DeletionPolicy p{policy::Mixture{alpha, std::make_shared<const DeletionPolicy>(std::move(first)),
                                   std::make_shared<const DeletionPolicy>(std::move(second))}};
  p.validate();
  return p;
}

DeletionPolicy DeletionPolicy::compose(std::vector<DeletionPolicy> stages) {
  DeletionPolicy p{policy::Compose{std::move(stages)}};
  p.validate();
  return p;
}

DeletionPolicy DeletionPolicy::sliding_window(int window) {
  DeletionPolicy p{policy::SlidingWindow{window}};
  p.validate();
  return p;
}

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_probability(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0))
    throw ConstraintViolation(std::string(name) + " must lie in [0,1], got " + std::to_string(v));
}

}  // namespace

void DeletionPolicy::validate() const {
  std::visit(overloaded{
                 [](const policy::Uniform& u) { check_probability(u.rho, "rho"); },
                 [](const policy::SizeBiased& s) {
                   if (s.count < 1) throw ConstraintViolation("size-biased deletion count must be >= 1");
                 },
                 [](const policy::Mixture& m) {
                   check_probability(m.alpha, "alpha");
                   if (!m.first || !m.second) throw ConstraintViolation("mixture needs two policies");
                   m.first->validate();
                   m.second->validate();
                 },
                 [](const policy::Compose& c) {
                   for (const auto& s : c.stages) s.validate();
                 },
                 [](const policy::SlidingWindow& w) {
                   if (w.window < 1) throw ConstraintViolation("sliding window r must be >= 1");
                 },
             },
             kind);
}

bool DeletionPolicy::uniform_only() const {
  return std::visit(overloaded{
                        [](const policy::Uniform&) { return true; },
                        [](const policy::SizeBiased&) { return false; },
                        [](const policy::Mixture& m) { return m.first->uniform_only() && m.second->uniform_only(); },
                        [](const policy::Compose& c) {
                          for (const auto& s : c.stages)
                            if (!s.uniform_only()) return false;
                          return true;
                        },
                        [](const policy::SlidingWindow&) { return false; },
                    },
                    kind);
}

UrnState delete_uniform(UrnState state, double rho, Rng& rng) {
  check_probability(rho, "rho");
  if (rho == 1.0) return state;
  for (Label label : state.labels()) {
    UrnState::Cohorts survivors;
    for (const auto& [t, c] : state.cohorts().at(label)) {
      const std::int64_t kept = rho == 0.0 ? 0 : binomial(rng, c, rho);
      if (kept > 0) survivors[t] = kept;
    }
    state.set_cohorts(label, std::move(survivors));
  }
  return state;
}

UrnState delete_size_biased(UrnState state, Rng& rng) {
  if (state.empty()) return state;
  const auto boxes = state.boxes();
  const double u = uniform01(rng) * static_cast<double>(state.total_mass());
  double acc = 0.0;
  Label victim = boxes.rbegin()->first;
  for (const auto& [label, mass] : boxes) {
    acc += static_cast<double>(mass);
    if (u < acc) {
      victim = label;
      break;
    }
  }
  state.erase(victim);
  return state;
}

namespace {

UrnState delete_older_than(UrnState state, std::int64_t oldest_kept) {
  for (Label label : state.labels()) {
    UrnState::Cohorts kept = state.cohorts().at(label);
    kept.erase(kept.begin(), kept.lower_bound(oldest_kept));
    state.set_cohorts(label, std::move(kept));
  }
  return state;
}

}  // namespace

UrnState apply_policy(UrnState state, const DeletionPolicy& policy, Rng& rng, std::optional<double> rho_override) {
  return std::visit(
      overloaded{
          [&](const policy::Uniform& u) { return delete_uniform(std::move(state), rho_override.value_or(u.rho), rng); },
          [&](const policy::SizeBiased& s) {
            for (int i = 0; i < s.count; ++i) state = delete_size_biased(std::move(state), rng);
            return std::move(state);
          },
          [&](const policy::Mixture& m) {
            const auto& chosen = bernoulli(rng, m.alpha) ? *m.first : *m.second;
            return apply_policy(std::move(state), chosen, rng, rho_override);
          },
          [&](const policy::Compose& c) {
            for (const auto& s : c.stages) state = apply_policy(std::move(state), s, rng, rho_override);
            return std::move(state);
          },
          [&](const policy::SlidingWindow& w) {
            // At time t the units of c_{t-r-1} and older die; c_{t-r..t-1} stay.
            const std::int64_t oldest_kept = state.time() - w.window;
            return delete_older_than(std::move(state), oldest_kept);
          },
      },
      policy.kind);
}

BatchResult allocate_batch(UrnState state, int n, Rng& rng) {
  if (n < 1) throw ConstraintViolation("allocate_batch: n must be >= 1");
  AllocationVector labels;
  labels.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double total = static_cast<double>(state.total_mass());
    const double u = uniform01(rng) * (total + state.theta().value());
    Label chosen = 0;
    if (u < total) {
      double acc = 0.0;
      for (const auto& [label, cohorts] : state.cohorts()) {
        for (const auto& [t, c] : cohorts) acc += static_cast<double>(c);
        if (u < acc) {
          chosen = label;
          break;
        }
      }
      if (chosen == 0) chosen = state.cohorts().rbegin()->first;
      state.join(chosen);
    } else {
      chosen = state.open();
    }
    labels.push_back(chosen);
  }
  return {std::move(state), std::move(labels)};
}

BatchResult step(UrnState state, const DeletionPolicy& policy, int n, Rng& rng, std::optional<double> rho_override) {
  state.set_time(state.time() + 1);
  state = apply_policy(std::move(state), policy, rng, rho_override);
  return allocate_batch(std::move(state), n, rng);
}

}  // namespace tvdpm
