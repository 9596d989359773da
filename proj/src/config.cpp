#include "tvdpm/config.hpp"

#include <fstream>
#include <memory>
#include <sstream>

#include <rapidjson/document.h>
#include <rapidjson/error/en.h>
#include <rapidjson/schema.h>
#include <rapidjson/stringbuffer.h>

#include "tvdpm/errors.hpp"
#include "tvdpm/io.hpp"

namespace tvdpm {

namespace embedded {
extern const std::string_view kSchema;
extern const std::pair<std::string_view, std::string_view> kPresets[];
extern const std::size_t kPresetCount;
}  // namespace embedded

namespace {

const rapidjson::SchemaDocument& schema_document() {
  static const auto doc = [] {
    rapidjson::Document d;
    d.Parse(embedded::kSchema.data(), embedded::kSchema.size());
    if (d.HasParseError()) throw Error("embedded config schema is not valid JSON");
    return std::make_unique<rapidjson::SchemaDocument>(d);
  }();
  return *doc;
}

std::string pointer_string(const rapidjson::Pointer& p) {
  rapidjson::StringBuffer sb;
  p.StringifyUriFragment(sb);
  return sb.GetString();
}

void validate_against_schema(std::string_view text) {
  rapidjson::Document d;
  d.Parse(text.data(), text.size());
  if (d.HasParseError())
    throw SchemaError("config is not valid JSON at offset " + std::to_string(d.GetErrorOffset()) + ": " +
                      rapidjson::GetParseError_En(d.GetParseError()));
  rapidjson::SchemaValidator validator(schema_document());
  if (!d.Accept(validator)) {
    const auto where = pointer_string(validator.GetInvalidDocumentPointer());
    throw SchemaError("config violates the schema at '" + (where.empty() ? std::string("#") : where) +
                      "' (rule '" + validator.GetInvalidSchemaKeyword() + "' of " +
                      pointer_string(validator.GetInvalidSchemaPointer()) + ")");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

MCMCConfig ExperimentConfig::mcmc_config() const {
  MCMCConfig c;
  c.theta = theta;
  c.policy = policy;
  c.locations = mcmc.locations;
  c.likelihood = mcmc.likelihood;
  return c;
}

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  validate_against_schema(text);
  const Json j = Json::parse(text);
  ExperimentConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.theta = j.value("theta", c.theta);
    if (j.contains("model")) c.model = model_from_json(j.at("model"));
    if (j.contains("kernel")) c.kernel = kernel_from_json(j.at("kernel"), c.model);
    if (j.contains("policy")) c.policy = policy_from_json(j.at("policy"));
    c.policy.validate();

    if (j.contains("data")) {
      const auto& d = j.at("data");
      if (d.contains("path")) {
        c.data.path = resolve(base_dir, d.at("path").get<std::string>());
        if (d.contains("vocabulary")) c.data.vocabulary = resolve(base_dir, d.at("vocabulary").get<std::string>());
      } else if (d.at("generator") == "density") {
        c.data.density = scenario_from_json(d.at("scenario"));
      } else {
        c.data.corpus = corpus_from_json(d.value("corpus", Json::object()));
      }
    }

    const auto smc = j.value("smc", Json::object());
    c.smc.N = smc.value("particles", c.smc.N);
    c.smc.ess_threshold_fraction = smc.value("ess_threshold", c.smc.ess_threshold_fraction);
    if (smc.contains("proposal"))
      c.smc.proposal = smc.at("proposal") == "prior" ? AllocationProposal::Prior
                                                     : AllocationProposal::ConjugateConditional;
    if (smc.contains("locations"))
      c.smc.locations = smc.at("locations") == "sampled" ? LocationMode::Sampled : LocationMode::Marginalized;
    if (smc.contains("rho_walk"))
      c.smc.rho_walk = RhoWalk{smc.at("rho_walk").at("a_rho").get<double>(), smc.at("rho_walk").at("rho0").get<double>()};
    if (smc.contains("grid")) {
      const auto& g = smc.at("grid");
      const double from = g.at("from").get<double>(), to = g.at("to").get<double>();
      const int points = g.at("points").get<int>();
      if (!(to > from)) throw SchemaError("grid needs to > from");
      for (int i = 0; i < points; ++i) c.smc.grid.push_back(from + (to - from) * i / (points - 1));
    }
    c.smc.policy = c.policy;
    c.smc.threads = c.threads;
    c.smc.validate();

    const auto mcmc = j.value("mcmc", Json::object());
    c.mcmc.sweeps = mcmc.value("sweeps", c.mcmc.sweeps);
    c.mcmc.burn_in = mcmc.value("burn_in", c.mcmc.burn_in);
    if (mcmc.contains("locations"))
      c.mcmc.locations = mcmc.at("locations") == "explicit" ? LocationHandling::Explicit : LocationHandling::Collapsed;
    c.mcmc.checkpoint_every = mcmc.value("checkpoint_every", c.mcmc.checkpoint_every);
    c.mcmc.likelihood = mcmc.value("likelihood", c.mcmc.likelihood);
    if (c.mcmc.burn_in >= c.mcmc.sweeps) throw SchemaError("mcmc.burn_in must be below mcmc.sweeps");

    const auto sim = j.value("simulate", Json::object());
    c.simulate.steps = sim.value("steps", c.simulate.steps);
    c.simulate.n = sim.value("n", c.simulate.n);

    const auto corr = j.value("correlation", Json::object());
    c.correlation.taus = corr.value("taus", c.correlation.taus);
    c.correlation.rhos = corr.value("rhos", c.correlation.rhos);
    c.correlation.n_mc = corr.value("n_mc", c.correlation.n_mc);
    c.correlation.burn_in = corr.value("burn_in", c.correlation.burn_in);

    if (j.contains("output")) c.output_dir = resolve(base_dir, j.at("output").value("dir", std::string(".")));
  } catch (const ConstraintViolation& e) {
    throw SchemaError(std::string("config value rejected: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("config value has the wrong type: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open config " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), file.parent_path().empty() ? std::filesystem::path(".") : file.parent_path());
}

std::string_view config_schema() { return embedded::kSchema; }

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < embedded::kPresetCount; ++i) out.emplace_back(embedded::kPresets[i].first);
  return out;
}

std::string_view preset_text(std::string_view name) {
  for (std::size_t i = 0; i < embedded::kPresetCount; ++i)
    if (embedded::kPresets[i].first == name) return embedded::kPresets[i].second;
  throw Error("unknown preset '" + std::string(name) + "'");
}

ExperimentConfig load_preset(std::string_view name) { return parse_config(preset_text(name)); }

}  // namespace tvdpm
