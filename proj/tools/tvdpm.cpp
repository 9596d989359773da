// Command-line front end. Exit status: 0 success, 1 failed validation or
// runtime error, 2 usage error (bad flags, unknown subcommand, invalid config).

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tvdpm/config.hpp"
#include "tvdpm/diagnostics.hpp"
#include "tvdpm/errors.hpp"
#include "tvdpm/experiments.hpp"
#include "tvdpm/io.hpp"
#include "tvdpm/mcmc_gibbs.hpp"
#include "tvdpm/smc_filter.hpp"

namespace fs = std::filesystem;
using namespace tvdpm;

namespace {

// Substream keys under the master seed. The filter itself consumes the
// unkeyed stream of its own seed.
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kRunStream = 2;

struct CommonFlags {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
  std::string data;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

ExperimentConfig resolve_config(const CommonFlags& flags) {
  if (!flags.config.empty() && !flags.preset.empty()) throw UsageError("--config and --preset are exclusive");
  ExperimentConfig c;
  if (!flags.config.empty()) c = load_config(flags.config);
  else if (!flags.preset.empty()) c = load_preset(flags.preset);
  if (flags.seed) c.seed = *flags.seed;
  if (flags.threads) {
    c.threads = *flags.threads;
    c.smc.threads = *flags.threads;
  }
  if (!flags.out.empty()) c.output_dir = flags.out;
  if (!flags.data.empty()) c.data = DataSource{fs::path(flags.data), std::nullopt, std::nullopt, std::nullopt};
  return c;
}

std::ofstream open_output(const ExperimentConfig& c, const std::string& name) {
  fs::create_directories(c.output_dir);
  std::ofstream out(c.output_dir / name);
  if (!out) throw Error("cannot write " + (c.output_dir / name).string());
  return out;
}

DensityData load_data(const ExperimentConfig& c) {
  if (c.data.path) {
    std::ifstream in(*c.data.path);
    if (!in) throw Error("cannot open data file " + c.data.path->string());
    auto data = read_density_data(in);
    for (const auto& b : data.batches)
      for (double z : b.values) validate_observation(c.model, z);
    return data;
  }
  Rng rng = make_stream(c.seed, {kDataStream});
  if (c.data.density) return generate_density_data(*c.data.density, rng);
  if (c.data.corpus) {
    auto corpus = generate_topic_corpus(*c.data.corpus, rng);
    return DensityData{std::move(corpus.batches), {}};
  }
  throw UsageError("the config has no data section and no --data file was given");
}

int run_simulate(const ExperimentConfig& c) {
  Rng rng = make_stream(c.seed, {kRunStream});
  UrnState urn(ScaleParam(c.theta));
  TrackMap tracks;
  auto trajectory = open_output(c, "trajectory.jsonl");
  auto track_out = open_output(c, "tracks.jsonl");
  const auto base = base_of(c.model);
  for (int t = 1; t <= c.simulate.steps; ++t) {
    auto result = step(std::move(urn), c.policy, c.simulate.n, rng);
    urn = std::move(result.state);
    TrackMap alive;
    for (auto& [label, track] : tracks)
      if (urn.contains(label)) alive.emplace(label, std::move(track));
    std::vector<Label> newborn;
    for (Label label : urn.labels())
      if (!alive.count(label)) newborn.push_back(label);
    tracks = evolve_locations(std::move(alive), c.kernel, base, newborn, t, rng);
    write_line(trajectory, trajectory_record(t, urn, result.allocations));
    for (const auto& [label, track] : tracks) write_line(track_out, track_record(label, t, track.at(t)));
  }
  std::cout << "simulated " << c.simulate.steps << " steps; " << urn.num_boxes() << " boxes alive, mass "
            << urn.total_mass() << "\n";
  return 0;
}

int run_validate(const ExperimentConfig& c, bool quick, bool write_report) {
  SuiteOptions options;
  options.quick = quick;
  options.seed = c.seed;
  options.threads = c.threads;
  const auto results = run_validation_suite(options);
  Json report{{"quick", quick}, {"seed", c.seed}, {"checks", Json::array()}};
  bool all = true;
  for (const auto& r : results) {
    report["checks"].push_back(to_json(r));
    all = all && r.passed;
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.statistic_name << "=" << r.statistic
              << (r.negative_control ? "  (negative control, threshold " : "  (threshold ") << r.threshold << ")\n";
  }
  report["passed"] = all;
  if (write_report) {
    auto out = open_output(c, "validation.json");
    out << report.dump(2) << '\n';
  }
  std::cout << (all ? "all checks passed" : "some checks failed") << "\n";
  return all ? 0 : 1;
}

int run_smc(const ExperimentConfig& c) {
  const auto data = load_data(c);
  auto jsonl = open_output(c, "smc.jsonl");
  auto alive = open_output(c, "alive_mass.csv");
  std::optional<std::ofstream> density;
  if (!c.smc.grid.empty() && is_gaussian(c.model)) {
    density = open_output(c, "density.csv");
    write_density_csv_header(*density);
  }
  write_alive_mass_csv_header(alive);
  const auto seed = make_stream(c.seed, {kRunStream})();
  const auto pop = run_filter(data.batches, c.model, c.kernel, c.smc, ScaleParam(c.theta), seed,
                              [&](const FilterReport& r) {
                                write_line(jsonl, smc_record(r));
                                write_alive_mass_csv_row(alive, r);
                                if (density && r.density) {
                                  const auto i = static_cast<std::size_t>(r.time - 1);
                                  write_density_csv_rows(*density, r.time, *r.density,
                                                         i < data.truth.size() ? &data.truth[i] : nullptr);
                                }
                              });
  std::cout << "filtered " << data.batches.size() << " steps with " << c.smc.N
            << " particles; log evidence " << pop.log_evidence << "\n";
  return 0;
}

int run_mcmc(const ExperimentConfig& c) {
  const auto data = load_data(c);
  Rng rng = make_stream(c.seed, {kRunStream});
  MCMCState state(data.batches, c.model, c.kernel, c.mcmc_config(), rng);
  auto jsonl = open_output(c, "mcmc.jsonl");
  double alive_sum = 0.0;
  int kept = 0;
  for (int s = 1; s <= c.mcmc.sweeps; ++s) {
    state.sweep(rng);
    const auto alive = state.alive_clusters();
    write_line(jsonl, mcmc_record(s, alive, state.log_likelihood()));
    if (s > c.mcmc.burn_in) {
      for (auto k : alive) alive_sum += static_cast<double>(k);
      kept += static_cast<int>(alive.size());
    }
    if (c.mcmc.checkpoint_every > 0 && s % c.mcmc.checkpoint_every == 0) {
      auto cp = open_output(c, "checkpoint_" + std::to_string(s) + ".json");
      cp << mcmc_checkpoint(s, state, rng).dump() << '\n';
    }
  }
  if (c.mcmc.locations == LocationHandling::Explicit) {
    auto tracks = open_output(c, "tracks.jsonl");
    for (const auto& [label, track] : state.tracks())
      for (std::int64_t t = track.birth_time; t <= track.last_time(); ++t)
        write_line(tracks, track_record(label, t, track.at(t)));
  }
  std::cout << "ran " << c.mcmc.sweeps << " sweeps; mean alive clusters per step after burn-in "
            << (kept ? alive_sum / kept : 0.0) << "\n";
  return 0;
}

int run_correlation(const ExperimentConfig& c) {
  Rng rng = make_stream(c.seed, {kRunStream});
  std::vector<CorrelationCurve> curves;
  for (double rho : c.correlation.rhos)
    curves.push_back(mean_correlation_curve(c.theta, rho, c.correlation.taus, c.correlation.n_mc,
                                            c.correlation.burn_in, rng, {c.kernel, c.simulate.n, c.threads}));
  auto out = open_output(c, "correlation.csv");
  write_correlation_csv(out, curves);
  write_correlation_csv(std::cout, curves);
  return 0;
}

int run_gen_data(const ExperimentConfig& c, bool to_stdout) {
  if (!c.data.density && !c.data.corpus) throw UsageError("gen-data needs a generator in the data section");
  Rng rng = make_stream(c.seed, {kDataStream});
  std::ofstream file;
  if (!to_stdout) file = open_output(c, "data.jsonl");
  std::ostream& out = to_stdout ? std::cout : file;
  if (c.data.density) {
    write_density_data(out, generate_density_data(*c.data.density, rng));
  } else {
    const auto corpus = generate_topic_corpus(*c.data.corpus, rng);
    write_batches(out, corpus.batches, true);
    if (!to_stdout) {
      auto vocab = open_output(c, "vocabulary.txt");
      for (int w = 1; w <= c.data.corpus->K; ++w) vocab << "w" << w << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-varying Dirichlet process mixtures"};
  app.require_subcommand(1);
  CommonFlags flags;
  bool quick = false;

  auto add_common = [&](CLI::App* sub, bool with_data) {
    sub->add_option("--config", flags.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "master seed (overrides the config)");
    sub->add_option("--threads", flags.threads, "worker threads; results do not depend on it")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", flags.out, "output directory");
    if (with_data) sub->add_option("--data", flags.data, "observation batches (JSON-lines)")->check(CLI::ExistingFile);
  };
  auto* simulate = app.add_subcommand("simulate", "forward-simulate the urn and its locations");
  add_common(simulate, false);
  auto* validate = app.add_subcommand("validate", "run the statistical validation suite");
  add_common(validate, false);
  validate->add_flag("--quick", quick, "small-n checks only");
  auto* smc = app.add_subcommand("smc", "particle filter over a data stream");
  add_common(smc, true);
  auto* mcmc = app.add_subcommand("mcmc", "Gibbs sampler over a whole data set");
  add_common(mcmc, true);
  auto* correlation = app.add_subcommand("correlation", "correlation of the predictive mean across lags");
  add_common(correlation, false);
  auto* gen = app.add_subcommand("gen-data", "write synthetic data (stdout unless --out is given)");
  add_common(gen, false);
  gen->add_option("--preset", flags.preset, "named preset from configs/")
      ->check(CLI::IsMember(preset_names()));
  for (auto* sub : {smc, mcmc}) sub->add_option("--preset", flags.preset, "named preset from configs/")
      ->check(CLI::IsMember(preset_names()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const auto config = resolve_config(flags);
    if (simulate->parsed()) return run_simulate(config);
    if (validate->parsed()) return run_validate(config, quick, !flags.out.empty());
    if (smc->parsed()) return run_smc(config);
    if (mcmc->parsed()) return run_mcmc(config);
    if (correlation->parsed()) return run_correlation(config);
    if (gen->parsed()) return run_gen_data(config, flags.out.empty());
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
