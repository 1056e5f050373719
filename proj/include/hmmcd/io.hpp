#pragma once

// JSON model/scenario/detector/constants files and CSV rows.
//
// Model:    {"d": 2, "trans": [[...], [...]],
//            "emission": {"family": "gaussian", "mean": [...], "ar": [...], "stdev": [...]},
//            "stationary": [...]}            ("ar" and "stationary" optional)
// Scenario: {"pre": <model>, "post": <model>, "omega": 10 | "inf"}
// Detector: {"rule": "srp", "log_b": 5.0, "p": 0.01, "init": "zero"}

#include <filesystem>
#include <string>
#include <variant>

#include "json.hpp"

#include "hmmcd/detectors.hpp"
#include "hmmcd/hmm.hpp"
#include "hmmcd/oc_harness.hpp"
#include "hmmcd/renewal.hpp"

namespace hmmcd {

using json = nlohmann::json;

HmmParams model_from_json(const json& j);
json to_json(const HmmParams& params);

ChangePoint change_point_from_json(const json& j);
json to_json(const ChangePoint& omega);

ChangeScenario scenario_from_json(const json& j);
json to_json(const ChangeScenario& scenario);

using ModelSpec = std::variant<HmmParams, ChangeScenario>;

/// A model file or a scenario file, told apart by the "pre" key.
ModelSpec parse_model_spec(const json& j);
ModelSpec parse_model_spec(const std::filesystem::path& path);

/// Reads and parses a JSON file; throws ValidationError naming the path on failure.
json read_json_file(const std::filesystem::path& path);

DetectorConfig detector_config_from_json(const json& j);
json to_json(const DetectorConfig& config);

json to_json(const SecondOrderConstants& c);
SecondOrderConstants constants_from_json(const json& j);

/// Shortest round-trip decimal representation.
std::string format_double(double x);

/// rule,b,gamma,omega,mean,se,trials,censored,seed
std::string estimate_csv_header();
/// gamma <= 0 leaves the gamma column empty; omega is "inf" or a change time.
std::string estimate_csv_row(Rule rule, double log_b, double gamma, const std::string& omega, const McEstimate& est);

/// trial,rule,b,N,censored,overshoot,seed
std::string alarm_csv_header();
std::string alarm_csv_row(std::uint64_t trial, const AlarmReport& report, std::uint64_t seed);

}  // namespace hmmcd
