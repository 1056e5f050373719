// hmmcd: batch front end for the change-detection library.
//
//   hmmcd simulate  --scenario s.json --horizon 100 --seed 1
//   hmmcd detect    --scenario s.json --rule srp --log-b 5 --seed 3
//   hmmcd arl       --model m.json --rule srp --log-b 5 --trials 1000 --seed 7
//   hmmcd delay     --model m.json --rule srp --log-b 5 --change-time 1,10,50 --seed 7
//   hmmcd calibrate --model m.json --rule srp --gamma 200 --seed 7
//   hmmcd constants --model m.json --seed 7 --out c.json
//   hmmcd approx    --constants c.json --log-b 6,10
//   hmmcd compare   --model m.json --gamma 200 --rules srp,cusum,shiryaev --seed 7
//   hmmcd quasistat --model m.json --log-b 5 --particles 10000 --seed 7
//
// --model takes a scenario file (pre/post; its omega is ignored) or use --pre/--post.
// CSV goes to --out (default stdout). A file output gets a sidecar
// <out>.manifest.json with the invocation, seed, version and timestamp; the CSV
// itself holds no timing data, so reruns are byte-identical.
//
// Exit codes: 0 ok, 1 domain/numeric error, 2 usage error.

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "hmmcd/detectors.hpp"
#include "hmmcd/error.hpp"
#include "hmmcd/io.hpp"
#include "hmmcd/oc_harness.hpp"
#include "hmmcd/renewal.hpp"

namespace {

using namespace hmmcd;

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string out;
  std::string per_trial;
};

struct ModelArgs {
  std::string model, pre, post;
};

struct DetectorArgs {
  std::string config;
  std::string rule = "srp";
  double log_b = 5.0;
  double p = 0.01;
  std::string init = "zero";
  std::uint64_t qs_particles = 2000;
};

void add_common(CLI::App* app, Common& c, bool per_trial) {
  app->add_option("--seed", c.seed, "Base seed (mandatory)")->required();
  app->add_option("--threads", c.threads, "Worker threads")->check(CLI::Range(1u, 1024u));
  app->add_option("--out", c.out, "Output file (default stdout)");
  if (per_trial) app->add_option("--per-trial", c.per_trial, "Per-trial CSV (trial,rule,b,N,censored,overshoot,seed)");
}

void add_model(CLI::App* app, ModelArgs& m) {
  app->add_option("--model", m.model, "Scenario file with pre and post models");
  app->add_option("--pre", m.pre, "Pre-change model file");
  app->add_option("--post", m.post, "Post-change model file");
}

void add_detector(CLI::App* app, DetectorArgs& d, bool with_log_b) {
  app->add_option("--config", d.config, "Detector config JSON (flags given explicitly override it)");
  app->add_option("--rule", d.rule, "srp, cusum or shiryaev");
  if (with_log_b) app->add_option("--log-b", d.log_b, "Threshold b = log B");
  app->add_option("--p", d.p, "Geometric prior parameter (shiryaev)");
  app->add_option("--init", d.init, "SRP start: zero or quasi_stationary");
  app->add_option("--qs-particles", d.qs_particles, "Particles for the quasi-stationary start");
}

ChangeScenario load_pair(const ModelArgs& m) {
  if (!m.model.empty()) {
    ModelSpec spec = parse_model_spec(std::filesystem::path(m.model));
    if (auto* s = std::get_if<ChangeScenario>(&spec)) return *s;
    throw UsageError("--model must be a scenario file with \"pre\" and \"post\" (or pass --pre and --post)");
  }
  if (m.pre.empty() || m.post.empty()) throw UsageError("a model pair is required: --model or both --pre and --post");
  auto load_one = [](const std::string& path) {
    ModelSpec spec = parse_model_spec(std::filesystem::path(path));
    if (auto* p = std::get_if<HmmParams>(&spec)) return *p;
    throw UsageError(path + ": expected a single model, got a scenario");
  };
  return ChangeScenario(load_one(m.pre), load_one(m.post), ChangePoint::never());
}

DetectorConfig make_config(const DetectorArgs& d, const CLI::App* app) {
  DetectorConfig config;
  if (!d.config.empty()) config = detector_config_from_json(read_json_file(d.config));
  const bool from_file = !d.config.empty();
  auto given = [&](const char* flag) { return !from_file || app->count(flag) > 0; };
  if (given("--rule")) config.rule = rule_from_string(d.rule);
  if (app->get_option_no_throw("--log-b") != nullptr && given("--log-b")) config.log_b = d.log_b;
  if (given("--p")) config.p = d.p;
  if (given("--init")) config.init = init_from_string(d.init);
  if (config.init == InitKind::quasi_stationary && config.rule != Rule::srp) {
    throw ValidationError("--init quasi_stationary applies to the srp rule only");
  }
  return config;
}

std::string timestamp_utc() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Output {
 public:
  Output(std::string subcommand, std::vector<std::string> argv, const Common& common, json config)
      : subcommand_(std::move(subcommand)), argv_(std::move(argv)), common_(common), config_(std::move(config)) {}

  void write(const std::string& path, const std::string& content) {
    if (path.empty()) {
      std::cout << content;
      return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write '" + path + "'");
    f << content;
    outputs_.push_back(path);
  }

  void finish(const json& extra = json::object()) const {
    if (outputs_.empty()) return;
    json manifest = {{"subcommand", subcommand_}, {"argv", argv_},          {"config", config_},
                     {"seed", common_.seed},       {"version", kVersion},   {"timestamp", timestamp_utc()},
                     {"outputs", outputs_}};
    for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();
    std::ofstream f(outputs_.front() + ".manifest.json");
    f << manifest.dump(2) << "\n";
  }

 private:
  std::string subcommand_;
  std::vector<std::string> argv_;
  const Common& common_;
  json config_;
  std::vector<std::string> outputs_;
};

json pair_json(const ModelArgs& m) {
  return {{"model", m.model}, {"pre", m.pre}, {"post", m.post}};
}

std::string per_trial_csv(const std::vector<AlarmReport>& reports, std::uint64_t seed) {
  std::string s = alarm_csv_header() + "\n";
  for (std::size_t i = 0; i < reports.size(); ++i) s += alarm_csv_row(i, reports[i], seed) + "\n";
  return s;
}

void report_censoring(const McEstimate& est) {
  if (est.censored > 0) {
    std::cerr << "warning: " << est.censored << " of " << est.trials
              << " trials censored at the cap; the estimate is a lower bound\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential change-point detection in hidden Markov models"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  const std::vector<std::string> args(argv, argv + argc);

  Common common;
  ModelArgs model;
  DetectorArgs det;

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Sample a change-point path");
  std::string scenario_path;
  std::uint64_t horizon = 100;
  simulate->add_option("--scenario", scenario_path, "Scenario file")->required();
  simulate->add_option("--horizon", horizon, "Number of observations")->check(CLI::PositiveNumber);
  add_common(simulate, common, false);

  // detect
  auto* detect = app.add_subcommand("detect", "Run one detector on a sampled path");
  std::uint64_t detect_cap = 0;
  detect->add_option("--scenario", scenario_path, "Scenario file")->required();
  detect->add_option("--cap", detect_cap, "Observation cap (default omega + ceil(50 e^b))");
  add_detector(detect, det, true);
  add_common(detect, common, false);

  // arl
  auto* arl = app.add_subcommand("arl", "Average run length to false alarm");
  TrialOptions trial_options;
  arl->add_option("--trials", trial_options.trials, "Monte Carlo trials")->check(CLI::PositiveNumber);
  arl->add_option("--cap", trial_options.cap, "Censoring cap (default ceil(50 e^b))");
  add_model(arl, model);
  add_detector(arl, det, true);
  add_common(arl, common, true);

  // delay
  auto* delay = app.add_subcommand("delay", "Conditional detection delay E_k(N - k | N >= k)");
  std::vector<std::uint64_t> change_times{1};
  delay->add_option("--change-time", change_times, "Change times k >= 1")->delimiter(',');
  delay->add_option("--trials", trial_options.trials, "Monte Carlo trials")->check(CLI::PositiveNumber);
  delay->add_option("--cap", trial_options.cap, "Cap on post-change observations (default ceil(50 e^b))");
  add_model(delay, model);
  add_detector(delay, det, true);
  add_common(delay, common, true);

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "Find b with ARL close to gamma");
  std::vector<double> gammas;
  CalibrationOptions cal;
  calibrate->add_option("--gamma", gammas, "Target ARL(s)")->required()->delimiter(',');
  calibrate->add_option("--trials", cal.trials_per_probe, "Trials per probe")->check(CLI::PositiveNumber);
  calibrate->add_option("--max-probes", cal.max_probes, "Probe budget");
  calibrate->add_option("--tolerance", cal.tolerance, "Relative ARL tolerance");
  add_model(calibrate, model);
  add_detector(calibrate, det, false);
  add_common(calibrate, common, false);

  // constants
  auto* constants = app.add_subcommand("constants", "Estimate the constants of the second-order delay expansion");
  ConstantsOptions copt;
  constants->add_option("--kl-steps", copt.kl_steps, "Steps for the KL estimates");
  constants->add_option("--ladder-trials", copt.ladder.trials, "Ladder trials");
  constants->add_option("--eta-trials", copt.eta.trials, "Trials for E eta");
  constants->add_option("--probes", copt.probe_count, "Probe states for Delta");
  constants->add_option("--replicates", copt.delta.replicates, "Coupled replicates per probe");
  constants->add_option("--residual-replicates", copt.delta.residual_replicates, "Draws of W_1 per probe");
  constants->add_option("--horizon", copt.delta.horizon, "Truncation horizon for Delta");
  constants->add_option("--tolerance", copt.delta.tolerance, "Poisson residual tolerance");
  constants->add_option("--mplus-states", copt.mplus_states, "Ladder states averaged for the m_+ integral");
  add_model(constants, model);
  add_common(constants, common, false);

  // approx
  auto* approx = app.add_subcommand("approx", "Second-order approximation of E_1 N_b from a constants file");
  std::string constants_path;
  std::vector<double> approx_bs;
  approx->add_option("--constants", constants_path, "Constants file written by `constants`");
  approx->add_option("--log-b", approx_bs, "Threshold(s) b")->required()->delimiter(',');
  add_common(approx, common, false);
  // approx is deterministic; the seed only keeps the manifest uniform.
  approx->get_option("--seed")->required(false);

  // compare
  auto* compare = app.add_subcommand("compare", "Calibrate several rules to gamma and compare delays");
  CompareOptions cmp;
  std::vector<std::string> rules{"srp", "cusum", "shiryaev"};
  double cmp_gamma = 0.0;
  compare->add_option("--gamma", cmp_gamma, "Target ARL")->required();
  compare->add_option("--rules", rules, "Rules to compare")->delimiter(',');
  compare->add_option("--change-time", cmp.change_times, "Change times k >= 1")->delimiter(',');
  compare->add_option("--trials", cmp.trials, "Trials per delay estimate")->check(CLI::PositiveNumber);
  compare->add_option("--calibration-trials", cmp.calibration.trials_per_probe, "Trials per calibration probe");
  add_model(compare, model);
  add_detector(compare, det, false);
  add_common(compare, common, false);

  // quasistat
  auto* quasistat = app.add_subcommand("quasistat", "Particle approximation of the quasi-stationary law of R*");
  std::uint64_t particles = 10000;
  std::uint64_t qs_steps = 0;
  double qs_log_b = 5.0;
  quasistat->add_option("--log-b", qs_log_b, "Threshold b = log B")->required();
  quasistat->add_option("--particles", particles, "Particle count (>= 1000)");
  quasistat->add_option("--steps", qs_steps, "Evolution steps (default ceil(10 B))");
  add_model(quasistat, model);
  add_common(quasistat, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (simulate->parsed()) {
      const ChangeScenario scenario = scenario_from_json(read_json_file(scenario_path));
      Rng rng(common.seed);
      const SamplePath path = sample_changed_path(scenario, horizon, rng);
      std::string csv = "index,hidden,xi,post_change\n";
      for (std::size_t i = 0; i < path.observations.size(); ++i) {
        csv += std::to_string(i) + "," + std::to_string(path.hidden[i]) + "," + format_double(path.observations[i]) +
               "," + (scenario.omega.post_change(i) ? "1" : "0") + "\n";
      }
      Output out("simulate", args, common, {{"scenario", scenario_path}, {"horizon", horizon}});
      out.write(common.out, csv);
      out.finish();
    } else if (detect->parsed()) {
      const ChangeScenario scenario = scenario_from_json(read_json_file(scenario_path));
      DetectorConfig config = make_config(det, detect);
      config = with_quasi_stationary(config, scenario.pre, scenario.post, det.qs_particles, common.seed);
      std::uint64_t cap = detect_cap > 0 ? detect_cap : default_arl_cap(config.log_b);
      if (detect_cap == 0 && !scenario.omega.is_infinite()) cap += scenario.omega.value();
      Rng rng = Rng::for_trial(common.seed, 0);
      const AlarmReport report = run_to_alarm(scenario, config, cap, rng);
      Output out("detect", args, common, {{"scenario", scenario_path}, {"detector", to_json(config)}, {"cap", cap}});
      out.write(common.out, alarm_csv_header() + "\n" + alarm_csv_row(0, report, common.seed) + "\n");
      out.finish();
    } else if (arl->parsed() || delay->parsed()) {
      const bool is_arl = arl->parsed();
      CLI::App* sub = is_arl ? arl : delay;
      const ChangeScenario pair = load_pair(model);
      DetectorConfig config = make_config(det, sub);
      config = with_quasi_stationary(config, pair.pre, pair.post, det.qs_particles, common.seed);
      trial_options.seed = common.seed;
      trial_options.threads = common.threads;
      std::string csv = estimate_csv_header() + "\n";
      std::string trials_csv;
      if (is_arl) {
        const auto reports = run_trials(pair.with_change(ChangePoint::never()), config, trial_options);
        const McEstimate est = summarize_arl(reports, common.seed);
        report_censoring(est);
        csv += estimate_csv_row(config.rule, config.log_b, 0.0, "inf", est) + "\n";
        trials_csv = per_trial_csv(reports, common.seed);
      } else {
        for (const std::uint64_t k : change_times) {
          const auto reports = run_trials(pair.with_change(change_point_for(k)), config, trial_options);
          const McEstimate est = summarize_delay(reports, k, common.seed);
          report_censoring(est);
          if (est.excluded > 0) {
            std::cerr << "note: k=" << k << ": " << est.excluded << " of " << est.trials
                      << " trials alarmed before the change and were excluded\n";
          }
          csv += estimate_csv_row(config.rule, config.log_b, 0.0, std::to_string(k), est) + "\n";
          if (trials_csv.empty()) trials_csv = alarm_csv_header() + "\n";
          const std::string block = per_trial_csv(reports, common.seed);
          trials_csv += block.substr(block.find('\n') + 1);
        }
      }
      Output out(is_arl ? "arl" : "delay", args, common,
                 {{"models", pair_json(model)}, {"detector", to_json(config)}, {"trials", trial_options.trials}});
      out.write(common.out, csv);
      if (!common.per_trial.empty()) out.write(common.per_trial, trials_csv);
      out.finish();
    } else if (calibrate->parsed()) {
      const ChangeScenario pair = load_pair(model);
      const DetectorConfig config = make_config(det, calibrate);
      cal.seed = common.seed;
      cal.threads = common.threads;
      cal.qs_particles = det.qs_particles;
      std::string csv = estimate_csv_header() + "\n";
      json convergence = json::array();
      for (const double gamma : gammas) {
        const CalibrationResult result = calibrate_threshold(pair.pre, pair.post, config, gamma, cal);
        if (!result.converged) {
          std::cerr << "warning: gamma=" << gamma << ": no probe within tolerance after " << result.probes
                    << " probes; reporting the closest\n";
        }
        csv += estimate_csv_row(config.rule, result.log_b, gamma, "inf", result.arl) + "\n";
        convergence.push_back({{"gamma", gamma}, {"converged", result.converged}, {"probes", result.probes}});
      }
      Output out("calibrate", args, common, {{"models", pair_json(model)}, {"detector", to_json(config)}});
      out.write(common.out, csv);
      out.finish({{"calibration", convergence}});
    } else if (constants->parsed()) {
      const ChangeScenario pair = load_pair(model);
      copt.ladder.threads = copt.eta.threads = copt.delta.threads = common.threads;
      const ConstantsReport report = estimate_constants(pair.pre, pair.post, copt, common.seed);
      if (report.kl.suspicious) std::cerr << "warning: a KL estimate is not positive beyond 3 SE\n";
      json j = to_json(report.constants);
      j["seed"] = common.seed;
      j["ladder_trials"] = report.overshoot.trials;
      j["eta_trials"] = report.eta.trials;
      j["kl_steps"] = report.kl.steps;
      j["probes"] = report.delta.delta_at.size();
      j["replicates"] = report.delta.replicates;
      j["horizon"] = report.delta.horizon;
      Output out("constants", args, common, {{"models", pair_json(model)}});
      out.write(common.out, j.dump(2) + "\n");
      out.finish();
    } else if (approx->parsed()) {
      if (constants_path.empty()) throw UsageError("approx needs --constants (run `hmmcd constants` first)");
      if (!std::filesystem::exists(constants_path)) {
        throw UsageError("constants file '" + constants_path + "' not found (run `hmmcd constants` first)");
      }
      const SecondOrderConstants c = constants_from_json(read_json_file(constants_path));
      std::string csv = "b,approx,se,k10,k10_se,rho,mean_eta,integral_mplus,delta_init\n";
      for (const double b : approx_bs) {
        const double value = approx_delay(b, c);
        const double se = approx_delay_se(b, c);
        csv += format_double(b) + "," + format_double(value) + "," + format_double(se) + "," + format_double(c.k10) +
               "," + format_double(c.k10_se) + "," + format_double(c.rho) + "," + format_double(c.mean_eta) + "," +
               format_double(c.integral_mplus) + "," + format_double(c.delta_init) + "\n";
      }
      Output out("approx", args, common, {{"constants", constants_path}});
      out.write(common.out, csv);
      out.finish();
    } else if (compare->parsed()) {
      const ChangeScenario pair = load_pair(model);
      const DetectorConfig base = make_config(det, compare);
      std::vector<DetectorConfig> configs;
      for (const auto& name : rules) {
        DetectorConfig c = base;
        c.rule = rule_from_string(name);
        if (c.rule != Rule::srp) c.init = InitKind::zero;
        configs.push_back(c);
      }
      cmp.seed = common.seed;
      cmp.threads = common.threads;
      cmp.calibration.seed = common.seed;
      cmp.calibration.threads = common.threads;
      cmp.calibration.qs_particles = det.qs_particles;
      const ComparisonTable table = compare_rules(pair.pre, pair.post, configs, cmp_gamma, cmp);
      std::string csv = estimate_csv_header() + "\n";
      std::optional<Rule> last;
      for (const auto& row : table) {
        if (last != row.rule) {
          csv += estimate_csv_row(row.rule, row.log_b, row.gamma, "inf", row.arl) + "\n";
          last = row.rule;
        }
        csv += estimate_csv_row(row.rule, row.log_b, row.gamma, std::to_string(row.change_time), row.delay) + "\n";
      }
      Output out("compare", args, common, {{"models", pair_json(model)}, {"rules", rules}});
      out.write(common.out, csv);
      out.finish();
    } else if (quasistat->parsed()) {
      const ChangeScenario pair = load_pair(model);
      const std::uint64_t steps =
          qs_steps > 0 ? qs_steps : static_cast<std::uint64_t>(std::ceil(10.0 * std::exp(qs_log_b)));
      Rng rng(common.seed);
      const QuasiStationaryDist psi = estimate_quasi_stationary(pair.pre, pair.post, qs_log_b, particles, steps, rng);
      std::string csv = "particle,r,weight\n";
      for (std::size_t i = 0; i < psi.r_values.size(); ++i) {
        csv += std::to_string(i) + "," + format_double(psi.r_values[i]) + "," + format_double(psi.weights[i]) + "\n";
      }
      Output out("quasistat", args, common, {{"models", pair_json(model)}, {"log_b", qs_log_b}, {"steps", steps}});
      out.write(common.out, csv);
      out.finish();
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
