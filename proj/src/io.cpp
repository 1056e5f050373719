#include "hmmcd/io.hpp"

#include <charconv>
#include <fstream>

#include "hmmcd/error.hpp"

namespace hmmcd {

namespace {

const json& require(const json& j, const char* field, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected a JSON object");
  const auto it = j.find(field);
  if (it == j.end()) throw ValidationError(where + ": missing field '" + field + "'");
  return *it;
}

double number(const json& j, const std::string& field) {
  if (!j.is_number()) throw ValidationError("field '" + field + "': expected a number");
  return j.get<double>();
}

std::vector<double> number_array(const json& j, const std::string& field, std::size_t expected) {
  if (!j.is_array()) throw ValidationError("field '" + field + "': expected an array of numbers");
  if (j.size() != expected) {
    throw ValidationError("field '" + field + "': expected " + std::to_string(expected) + " entries, got " +
                          std::to_string(j.size()));
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace

HmmParams model_from_json(const json& j) {
  const json& trans_j = require(j, "trans", "model");
  if (!trans_j.is_array() || trans_j.empty()) throw ValidationError("field 'trans': expected a non-empty matrix");
  const std::size_t d = trans_j.size();
  if (j.contains("d")) {
    const json& dj = j["d"];
    if (!dj.is_number_integer() || dj.get<std::int64_t>() != static_cast<std::int64_t>(d)) {
      throw ValidationError("field 'd': must equal the number of rows of 'trans' (" + std::to_string(d) + ")");
    }
  }
  Eigen::MatrixXd trans(d, d);
  for (std::size_t r = 0; r < d; ++r) {
    const auto row = number_array(trans_j[r], "trans[" + std::to_string(r) + "]", d);
    for (std::size_t c = 0; c < d; ++c) trans(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
  }
  const json& em = require(j, "emission", "model");
  const json& fam = require(em, "family", "emission");
  if (!fam.is_string()) throw ValidationError("field 'emission.family': expected a string");
  const EmissionFamily family = emission_family_from_string(fam.get<std::string>());
  const auto mean = number_array(require(em, "mean", "emission"), "emission.mean", d);
  const auto stdev = number_array(require(em, "stdev", "emission"), "emission.stdev", d);
  std::vector<double> ar(d, 0.0);
  if (em.contains("ar")) ar = number_array(em["ar"], "emission.ar", d);
  std::vector<StateEmission> states(d);
  for (std::size_t x = 0; x < d; ++x) states[x] = {mean[x], ar[x], stdev[x]};

  HmmParams params(std::move(trans), EmissionSpec(family, std::move(states)));
  if (j.contains("stationary")) {
    const auto pi = number_array(j["stationary"], "stationary", d);
    for (std::size_t x = 0; x < d; ++x) {
      if (std::abs(pi[x] - params.stationary()(static_cast<Eigen::Index>(x))) > 1e-8) {
        throw ValidationError("field 'stationary': entry " + std::to_string(x) +
                              " does not solve pi P = pi (computed " +
                              format_double(params.stationary()(static_cast<Eigen::Index>(x))) + ")");
      }
    }
  }
  return params;
}

json to_json(const HmmParams& params) {
  const std::size_t d = params.d();
  json trans = json::array();
  for (std::size_t r = 0; r < d; ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < d; ++c) row.push_back(params.trans()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
    trans.push_back(row);
  }
  json mean = json::array(), ar = json::array(), stdev = json::array(), pi = json::array();
  for (const auto& s : params.emission().states()) {
    mean.push_back(s.mean);
    ar.push_back(s.ar);
    stdev.push_back(s.stdev);
  }
  for (std::size_t x = 0; x < d; ++x) pi.push_back(params.stationary()(static_cast<Eigen::Index>(x)));
  json em = {{"family", to_string(params.emission().family())}, {"mean", mean}, {"stdev", stdev}};
  if (params.emission().family() == EmissionFamily::gaussian_ar1) em["ar"] = ar;
  return {{"d", d}, {"trans", trans}, {"emission", em}, {"stationary", pi}};
}

ChangePoint change_point_from_json(const json& j) {
  if (j.is_string() && j.get<std::string>() == "inf") return ChangePoint::never();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return ChangePoint::at(j.get<std::uint64_t>());
  throw ValidationError("field 'omega': expected a nonnegative integer or \"inf\"");
}

json to_json(const ChangePoint& omega) {
  if (omega.is_infinite()) return "inf";
  return omega.value();
}

ChangeScenario scenario_from_json(const json& j) {
  HmmParams pre = model_from_json(require(j, "pre", "scenario"));
  HmmParams post = model_from_json(require(j, "post", "scenario"));
  const ChangePoint omega = j.contains("omega") ? change_point_from_json(j["omega"]) : ChangePoint::never();
  return ChangeScenario(std::move(pre), std::move(post), omega);
}

json to_json(const ChangeScenario& scenario) {
  return {{"pre", to_json(scenario.pre)}, {"post", to_json(scenario.post)}, {"omega", to_json(scenario.omega)}};
}

ModelSpec parse_model_spec(const json& j) {
  if (j.is_object() && j.contains("pre")) return scenario_from_json(j);
  return model_from_json(j);
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

ModelSpec parse_model_spec(const std::filesystem::path& path) {
  try {
    return parse_model_spec(read_json_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

DetectorConfig detector_config_from_json(const json& j) {
  DetectorConfig config;
  const json& rule = require(j, "rule", "detector");
  if (!rule.is_string()) throw ValidationError("field 'rule': expected a string");
  config.rule = rule_from_string(rule.get<std::string>());
  config.log_b = number(require(j, "log_b", "detector"), "log_b");
  if (j.contains("p")) config.p = number(j["p"], "p");
  if (j.contains("init")) {
    if (!j["init"].is_string()) throw ValidationError("field 'init': expected a string");
    config.init = init_from_string(j["init"].get<std::string>());
  }
  if (config.init == InitKind::quasi_stationary && config.rule != Rule::srp) {
    throw ValidationError("field 'init': quasi_stationary start applies to the srp rule only");
  }
  return config;
}

json to_json(const DetectorConfig& config) {
  json j = {{"rule", to_string(config.rule)}, {"log_b", config.log_b}, {"init", to_string(config.init)}};
  if (config.rule == Rule::shiryaev) j["p"] = config.p;
  return j;
}

json to_json(const SecondOrderConstants& c) {
  return {{"k10", c.k10},
          {"k10_se", c.k10_se},
          {"k01", c.k01},
          {"k01_se", c.k01_se},
          {"rho", c.rho},
          {"rho_se", c.rho_se},
          {"mean_eta", c.mean_eta},
          {"mean_eta_se", c.mean_eta_se},
          {"integral_mplus", c.integral_mplus},
          {"integral_mplus_se", c.integral_mplus_se},
          {"delta_init", c.delta_init},
          {"delta_init_se", c.delta_init_se},
          {"max_abs_residual", c.max_abs_residual}};
}

SecondOrderConstants constants_from_json(const json& j) {
  SecondOrderConstants c;
  auto get = [&](const char* field) { return number(require(j, field, "constants"), field); };
  c.k10 = get("k10");
  c.k10_se = get("k10_se");
  c.k01 = get("k01");
  c.k01_se = get("k01_se");
  c.rho = get("rho");
  c.rho_se = get("rho_se");
  c.mean_eta = get("mean_eta");
  c.mean_eta_se = get("mean_eta_se");
  c.integral_mplus = get("integral_mplus");
  c.integral_mplus_se = get("integral_mplus_se");
  c.delta_init = get("delta_init");
  c.delta_init_se = get("delta_init_se");
  c.max_abs_residual = get("max_abs_residual");
  return c;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string estimate_csv_header() { return "rule,b,gamma,omega,mean,se,trials,censored,seed"; }

std::string estimate_csv_row(Rule rule, double log_b, double gamma, const std::string& omega, const McEstimate& est) {
  return to_string(rule) + "," + format_double(log_b) + "," + (gamma > 0.0 ? format_double(gamma) : "") + "," +
         omega + "," + format_double(est.mean) + "," + format_double(est.std_error) + "," +
         std::to_string(est.trials) + "," + std::to_string(est.censored) + "," + std::to_string(est.seed);
}

std::string alarm_csv_header() { return "trial,rule,b,N,censored,overshoot,seed"; }

std::string alarm_csv_row(std::uint64_t trial, const AlarmReport& report, std::uint64_t seed) {
  return std::to_string(trial) + "," + to_string(report.rule) + "," + format_double(report.log_b) + "," +
         std::to_string(report.stopping_time) + "," + (report.censored ? "1" : "0") + "," +
         format_double(report.overshoot) + "," + std::to_string(seed);
}

}  // namespace hmmcd
