#pragma once

// Experiment configuration: one JSON document validated against
// docs/config.schema.json (compiled into the library) before anything else
// looks at it. Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tvdpm/deletion_urn.hpp"
#include "tvdpm/experiments.hpp"
#include "tvdpm/location_kernels.hpp"
#include "tvdpm/mcmc_gibbs.hpp"
#include "tvdpm/obs_models.hpp"
#include "tvdpm/smc_filter.hpp"

namespace tvdpm {

struct DataSource {
  /// Batches in JSON-lines, resolved against the config file's directory.
  std::optional<std::filesystem::path> path;
  std::optional<std::filesystem::path> vocabulary;
  std::optional<DensityScenario> density;
  std::optional<TopicCorpusSpec> corpus;
};

struct McmcSection {
  int sweeps = 2000;
  int burn_in = 500;
  LocationHandling locations = LocationHandling::Collapsed;
  /// 0 disables checkpoints.
  int checkpoint_every = 0;
  bool likelihood = true;
};

struct SimulateSection {
  int steps = 100;
  int n = 1;
};

struct CorrelationSection {
  std::vector<int> taus{0, 1, 2, 5, 10, 20, 50};
  std::vector<double> rhos{0.9, 0.99};
  int n_mc = 10000;
  int burn_in = 200;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int threads = 1;
  double theta = 1.0;
  ObservationModel model = GaussianModel{};
  TransitionKernel kernel = StaticKernel{};
  DeletionPolicy policy = DeletionPolicy::uniform(0.9);
  DataSource data;
  /// N, thresholds, proposal, location mode, rho walk and density grid; the
  /// policy and thread count are copied in from the top level.
  FilterConfig smc;
  McmcSection mcmc;
  SimulateSection simulate;
  CorrelationSection correlation;
  std::filesystem::path output_dir = ".";

  MCMCConfig mcmc_config() const;
};

/// Throws SchemaError on malformed JSON, a schema violation, or values the
/// library rejects. Relative paths are resolved against `base_dir`.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& file);

std::string_view config_schema();

/// Names of the presets shipped in configs/.
std::vector<std::string> preset_names();
/// Raw JSON of a preset; throws Error for an unknown name.
std::string_view preset_text(std::string_view name);
ExperimentConfig load_preset(std::string_view name);

}  // namespace tvdpm
