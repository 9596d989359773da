#include "tvdpm/io.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "tvdpm/errors.hpp"

namespace tvdpm {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

const Json& require(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw SchemaError(std::string("missing key '") + key + "'");
  return j.at(key);
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad value for '") + key + "': " + e.what());
  }
}

std::string type_of(const Json& j) {
  const auto& t = require(j, "type");
  if (!t.is_string()) throw SchemaError("'type' must be a string");
  return t.get<std::string>();
}

std::string number(double x) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw Error("cannot format number");
  return std::string(buf, end);
}

}  // namespace

Json to_json(const DeletionPolicy& policy) {
  return std::visit(Overloaded{
                        [](const policy::Uniform& p) { return Json{{"type", "uniform"}, {"rho", p.rho}}; },
                        [](const policy::SizeBiased& p) { return Json{{"type", "size_biased"}, {"count", p.count}}; },
                        [](const policy::Mixture& p) {
                          return Json{{"type", "mixture"},
                                      {"alpha", p.alpha},
                                      {"first", to_json(*p.first)},
                                      {"second", to_json(*p.second)}};
                        },
                        [](const policy::Compose& p) {
                          Json stages = Json::array();
                          for (const auto& s : p.stages) stages.push_back(to_json(s));
                          return Json{{"type", "compose"}, {"stages", stages}};
                        },
                        [](const policy::SlidingWindow& p) {
                          return Json{{"type", "sliding_window"}, {"window", p.window}};
                        },
                    },
                    policy.kind);
}

DeletionPolicy policy_from_json(const Json& j) {
  const auto type = type_of(j);
  if (type == "uniform") return DeletionPolicy::uniform(require(j, "rho").get<double>());
  if (type == "size_biased") return DeletionPolicy::size_biased(get_or(j, "count", 1));
  if (type == "mixture")
    return DeletionPolicy::mixture(require(j, "alpha").get<double>(), policy_from_json(require(j, "first")),
                                   policy_from_json(require(j, "second")));
  if (type == "compose") {
    std::vector<DeletionPolicy> stages;
    for (const auto& s : require(j, "stages")) stages.push_back(policy_from_json(s));
    return DeletionPolicy::compose(std::move(stages));
  }
  if (type == "sliding_window") return DeletionPolicy::sliding_window(require(j, "window").get<int>());
  throw SchemaError("unknown policy type '" + type + "'");
}

Json to_json(const ObservationModel& model) {
  return std::visit(
      Overloaded{
          [](const GaussianModel& m) {
            return Json{{"type", "nig"},
                        {"mu0", m.base.mu0},
                        {"kappa0", m.base.kappa0},
                        {"nu0", m.base.nu0},
                        {"lambda0", m.base.lambda0}};
          },
          [](const KnownVarianceGaussianModel& m) {
            Json base = std::visit(Overloaded{
                                       [](const GaussianKnownVar& b) {
                                         return Json{{"type", "gaussian"}, {"mu0", b.mu0}, {"sigma0", b.sigma0}};
                                       },
                                       [](const DiscreteAtoms& b) {
                                         return Json{{"type", "atoms"}, {"atoms", b.atoms}, {"weights", b.weights}};
                                       },
                                   },
                                   m.base);
            return Json{{"type", "known_var"}, {"obs_sigma", m.obs_sigma}, {"base", base}};
          },
          [](const TopicModel& m) { return Json{{"type", "topic"}, {"theta_v", m.base.theta_v}, {"K", m.base.K}}; },
      },
      model);
}

ObservationModel model_from_json(const Json& j) {
  const auto type = type_of(j);
  ObservationModel model;
  if (type == "nig") {
    NormalInverseGamma b;
    model = GaussianModel{{get_or(j, "mu0", b.mu0), get_or(j, "kappa0", b.kappa0), get_or(j, "nu0", b.nu0),
                           get_or(j, "lambda0", b.lambda0)}};
  } else if (type == "known_var") {
    KnownVarianceGaussianModel m;
    m.obs_sigma = require(j, "obs_sigma").get<double>();
    const auto& base = require(j, "base");
    const auto base_type = type_of(base);
    if (base_type == "gaussian") {
      m.base = GaussianKnownVar{get_or(base, "mu0", 0.0), get_or(base, "sigma0", 1.0)};
    } else if (base_type == "atoms") {
      m.base = DiscreteAtoms{require(base, "atoms").get<std::vector<double>>(),
                             require(base, "weights").get<std::vector<double>>()};
    } else {
      throw SchemaError("unknown base type '" + base_type + "'");
    }
    model = m;
  } else if (type == "topic") {
    model = TopicModel{{get_or(j, "theta_v", 0.5), require(j, "K").get<int>()}};
  } else {
    throw SchemaError("unknown model type '" + type + "'");
  }
  validate(model);
  return model;
}

TransitionKernel kernel_from_json(const Json& j, const ObservationModel& model) {
  const auto type = type_of(j);
  if (type == "static") return StaticKernel{};
  if (type != "ar1") throw SchemaError("unknown kernel type '" + type + "'");
  GaussianKnownVar base;
  if (const auto* m = std::get_if<KnownVarianceGaussianModel>(&model))
    if (const auto* g = std::get_if<GaussianKnownVar>(&m->base)) base = *g;
  base.mu0 = get_or(j, "mu0", base.mu0);
  base.sigma0 = get_or(j, "sigma0", base.sigma0);
  TransitionKernel kernel = GaussianAR1{require(j, "phi").get<double>(), base};
  validate(kernel);
  return kernel;
}

DensityScenario scenario_from_json(const Json& j) {
  DensityScenario s;
  s.T = require(j, "T").get<std::int64_t>();
  s.n = get_or(j, "n", 1);
  for (const auto& r : require(j, "regimes")) {
    DensityRegime regime;
    regime.start = require(r, "start").get<std::int64_t>();
    for (const auto& c : require(r, "components")) {
      MixtureComponent comp{require(c, "weight").get<double>(), require(c, "mean").get<double>(),
                            require(c, "sd").get<double>(), std::nullopt};
      if (c.contains("drift")) {
        const auto& d = c.at("drift");
        comp.drift = MeanDrift{require(d, "from").get<std::int64_t>(), require(d, "to").get<std::int64_t>(),
                               require(d, "to_mean").get<double>()};
      }
      regime.components.push_back(comp);
    }
    s.regimes.push_back(std::move(regime));
  }
  s.validate();
  return s;
}

TopicCorpusSpec corpus_from_json(const Json& j) {
  TopicCorpusSpec s;
  s.K = get_or(j, "K", s.K);
  s.T = get_or(j, "T", s.T);
  s.words_per_step = get_or(j, "words_per_step", s.words_per_step);
  s.theta_v = get_or(j, "theta_v", s.theta_v);
  if (j.contains("topics")) {
    s.topics.clear();
    for (const auto& t : j.at("topics"))
      s.topics.push_back({require(t, "first").get<std::int64_t>(), require(t, "last").get<std::int64_t>()});
  }
  s.validate();
  return s;
}

Json to_json(const Location& u) { return Json(to_vector(u)); }

Json to_json(const CountsVector& a) {
  Json out = Json::array();
  for (int j = 1; j <= a.n(); ++j) out.push_back(a[j]);
  return out;
}

void write_line(std::ostream& out, const Json& j) { out << j.dump() << '\n'; }

Json trajectory_record(std::int64_t t, const UrnState& state, const AllocationVector& allocations) {
  Json boxes = Json::object();
  for (const auto& [label, mass] : state.boxes()) boxes[std::to_string(label)] = mass;
  return Json{{"t", t}, {"boxes", boxes}, {"allocations", allocations}};
}

Json track_record(Label label, std::int64_t t, const Location& value) {
  return Json{{"label", label}, {"t", t}, {"value", to_json(value)}};
}

Json smc_record(const FilterReport& report) {
  Json j{{"t", report.time}, {"ess", report.ess}, {"n_alive", report.alive_mass}};
  if (report.rho) j["rho_post"] = *report.rho;
  if (report.density) j["density"] = Json{{"grid", report.density->grid}, {"values", report.density->values}};
  return j;
}

Json mcmc_record(int sweep, const std::vector<std::int64_t>& alive_per_t, double loglik) {
  return Json{{"sweep", sweep}, {"K_alive_per_t", alive_per_t}, {"loglik", loglik}};
}

Json mcmc_checkpoint(int sweep, const MCMCState& state, const Rng& rng) {
  Json tracks = Json::array();
  for (const auto& [label, track] : state.tracks()) {
    Json values = Json::array();
    for (const auto& v : track.values) values.push_back(to_json(v));
    tracks.push_back(Json{{"label", label}, {"birth", track.birth_time}, {"values", values}});
  }
  std::ostringstream rng_state;
  rng_state << rng;
  return Json{{"sweep", sweep},
              {"c", state.allocations()},
              {"d", state.deaths()},
              {"tracks", tracks},
              {"rng", {{"engine", "mt19937_64"}, {"state", rng_state.str()}}}};
}

Json to_json(const CheckResult& r) {
  return Json{{"name", r.name},
              {"statistic", r.statistic_name},
              {"value", r.statistic},
              {"threshold", r.threshold},
              {"negative_control", r.negative_control},
              {"passed", r.passed}};
}

std::vector<ObservationBatch> read_batches(std::istream& in) {
  std::vector<ObservationBatch> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
    }
    ObservationBatch batch;
    batch.time = require(j, "t").get<std::int64_t>();
    const bool words = j.contains("words");
    const auto& values = words ? j.at("words") : require(j, "values");
    if (!values.is_array()) throw SchemaError("line " + std::to_string(line_no) + ": values must be an array");
    for (const auto& v : values) {
      if (words && !v.is_number_integer()) throw SchemaError("word ids must be integers");
      batch.values.push_back(v.get<double>());
    }
    if (batch.time != static_cast<std::int64_t>(out.size()) + 1)
      throw SchemaError("line " + std::to_string(line_no) + ": expected t=" + std::to_string(out.size() + 1));
    out.push_back(std::move(batch));
  }
  return out;
}

void write_batches(std::ostream& out, const std::vector<ObservationBatch>& batches, bool words) {
  for (const auto& b : batches) {
    Json j{{"t", b.time}};
    if (words) {
      std::vector<std::int64_t> ids;
      for (double v : b.values) ids.push_back(static_cast<std::int64_t>(std::llround(v)));
      j["words"] = ids;
    } else {
      j["values"] = b.values;
    }
    write_line(out, j);
  }
}

std::vector<std::string> read_vocabulary(std::istream& in) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

void write_density_data(std::ostream& out, const DensityData& data) {
  for (std::size_t i = 0; i < data.batches.size(); ++i) {
    Json truth = Json::array();
    for (const auto& c : data.truth[i]) truth.push_back(Json{{"w", c.w}, {"mean", c.mean}, {"sd", c.sd}});
    write_line(out, Json{{"t", data.batches[i].time}, {"values", data.batches[i].values}, {"truth", truth}});
  }
}

DensityData read_density_data(std::istream& in) {
  std::stringstream batches_only;
  DensityData data;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(e.what());
    }
    std::vector<TruthComponent> truth;
    if (j.contains("truth"))
      for (const auto& c : j.at("truth"))
        truth.push_back({require(c, "w").get<double>(), require(c, "mean").get<double>(), require(c, "sd").get<double>()});
    data.truth.push_back(std::move(truth));
    j.erase("truth");
    batches_only << j.dump() << '\n';
  }
  data.batches = read_batches(batches_only);
  return data;
}

void write_density_csv_header(std::ostream& out) { out << "t,x,f_true,f_est\n"; }

void write_density_csv_rows(std::ostream& out, std::int64_t t, const DensityEstimate& estimate,
                            const std::vector<TruthComponent>* truth) {
  for (std::size_t i = 0; i < estimate.grid.size(); ++i) {
    out << t << ',' << number(estimate.grid[i]) << ',';
    if (truth && !truth->empty()) out << number(truth_density(*truth, estimate.grid[i]));
    out << ',' << number(estimate.values[i]) << '\n';
  }
}

void write_alive_mass_csv_header(std::ostream& out) { out << "t,N_alive,rho_post\n"; }

void write_alive_mass_csv_row(std::ostream& out, const FilterReport& report) {
  out << report.time << ',' << number(report.alive_mass) << ',';
  if (report.rho) out << number(*report.rho);
  out << '\n';
}

void write_correlation_csv(std::ostream& out, const std::vector<CorrelationCurve>& curves) {
  out << "tau,correlation,rho,theta\n";
  for (const auto& c : curves)
    for (std::size_t i = 0; i < c.taus.size(); ++i)
      out << c.taus[i] << ',' << number(c.correlations[i]) << ',' << number(c.rho) << ',' << number(c.theta) << '\n';
}

}  // namespace tvdpm
