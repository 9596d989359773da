#pragma once

// JSON and CSV formats shared by the CLI and the tests. Every record is
// written as one compact JSON object per line; key order is fixed, so equal
// inputs give byte-identical output.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tvdpm/deletion_urn.hpp"
#include "tvdpm/diagnostics.hpp"
#include "tvdpm/experiments.hpp"
#include "tvdpm/location_kernels.hpp"
#include "tvdpm/mcmc_gibbs.hpp"
#include "tvdpm/obs_models.hpp"
#include "tvdpm/smc_filter.hpp"

namespace tvdpm {

using Json = nlohmann::ordered_json;

// Conversions used by the config parser. The *_from_json functions expect
// input that already passed schema validation and throw SchemaError on
// anything structurally wrong.
Json to_json(const DeletionPolicy& policy);
DeletionPolicy policy_from_json(const Json& j);
Json to_json(const ObservationModel& model);
ObservationModel model_from_json(const Json& j);
/// A missing AR(1) base is taken from the model's known-variance Gaussian
/// base, or N(0, 1) when the model has none.
TransitionKernel kernel_from_json(const Json& j, const ObservationModel& model);
DensityScenario scenario_from_json(const Json& j);
TopicCorpusSpec corpus_from_json(const Json& j);

Json to_json(const Location& u);
Json to_json(const CountsVector& a);

/// Writes j on one line followed by '\n'.
void write_line(std::ostream& out, const Json& j);

/// {"t", "boxes": {label: count}, "allocations": [labels]}
Json trajectory_record(std::int64_t t, const UrnState& state, const AllocationVector& allocations);
/// {"label", "t", "value": [...]}
Json track_record(Label label, std::int64_t t, const Location& value);
/// {"t", "ess", "n_alive", "rho_post"?, "density"?: {"grid", "values"}}
Json smc_record(const FilterReport& report);
/// {"sweep", "K_alive_per_t", "loglik"}
Json mcmc_record(int sweep, const std::vector<std::int64_t>& alive_per_t, double loglik);
/// {"sweep", "c", "d", "tracks", "rng"}; "rng" is the generator's textual state.
Json mcmc_checkpoint(int sweep, const MCMCState& state, const Rng& rng);
Json to_json(const CheckResult& result);

/// One batch per line, {"t", "values"} for real data or {"t", "words"} for
/// word ids. Times must run 1, 2, ... in order.
std::vector<ObservationBatch> read_batches(std::istream& in);
void write_batches(std::ostream& out, const std::vector<ObservationBatch>& batches, bool words);
/// One token per line; blank lines are skipped.
std::vector<std::string> read_vocabulary(std::istream& in);

/// {"t", "values", "truth": [{"w", "mean", "sd"}]} per step.
void write_density_data(std::ostream& out, const DensityData& data);
/// Reads the gen-data stream back; the truth is optional per line.
DensityData read_density_data(std::istream& in);

void write_density_csv_header(std::ostream& out);
/// Rows t,x,f_true,f_est; f_true is left empty without a truth.
void write_density_csv_rows(std::ostream& out, std::int64_t t, const DensityEstimate& estimate,
                            const std::vector<TruthComponent>* truth);
void write_alive_mass_csv_header(std::ostream& out);
void write_alive_mass_csv_row(std::ostream& out, const FilterReport& report);
void write_correlation_csv(std::ostream& out, const std::vector<CorrelationCurve>& curves);

}  // namespace tvdpm
