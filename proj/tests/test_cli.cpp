#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "hmmcd/detectors.hpp"
#include "hmmcd/io.hpp"

using namespace hmmcd;

namespace {

const std::filesystem::path kDir = std::filesystem::temp_directory_path() / "hmmcd_test_cli";

int run(const std::string& args) {
  std::filesystem::create_directories(kDir);
  const std::string cmd = std::string(HMMCD_BINARY) + " " + args + " 2>" + (kDir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::string model(const char* name) { return (std::filesystem::path(HMMCD_MODELS) / name).string(); }

}  // namespace

TEST_CASE("detect reports the library stopping time") {
  const json sc = {{"pre", read_json_file(model("hmm_d2.json"))["pre"]},
                   {"post", read_json_file(model("hmm_d2.json"))["post"]},
                   {"omega", 20}};
  const auto sc_path = kDir / "scenario.json";
  std::filesystem::create_directories(kDir);
  std::ofstream(sc_path) << sc.dump();
  const auto out = kDir / "detect.csv";
  REQUIRE(run("detect --scenario " + sc_path.string() + " --rule srp --log-b 4 --seed 11 --out " + out.string()) == 0);

  const ChangeScenario scenario = scenario_from_json(sc);
  DetectorConfig config;
  config.log_b = 4.0;
  Rng rng = Rng::for_trial(11, 0);
  const AlarmReport report = run_to_alarm(scenario, config, default_arl_cap(4.0) + 20, rng);
  const std::string csv = slurp(out);
  CHECK(csv == alarm_csv_header() + "\n" + alarm_csv_row(0, report, 11) + "\n");
  CHECK(std::filesystem::exists(out.string() + ".manifest.json"));
  const json manifest = read_json_file(out.string() + ".manifest.json");
  CHECK(manifest["seed"] == 11);
  CHECK(manifest["subcommand"] == "detect");
}

TEST_CASE("arl output is byte-identical across reruns and thread counts") {
  const std::string base = "arl --model " + model("hmm_d2.json") + " --log-b 3 --trials 300 --seed 5 ";
  REQUIRE(run(base + "--out " + (kDir / "a1.csv").string()) == 0);
  REQUIRE(run(base + "--out " + (kDir / "a2.csv").string()) == 0);
  REQUIRE(run(base + "--threads 3 --out " + (kDir / "a3.csv").string()) == 0);
  const std::string a1 = slurp(kDir / "a1.csv");
  CHECK(a1.rfind(estimate_csv_header() + "\n", 0) == 0);
  CHECK(a1 == slurp(kDir / "a2.csv"));
  CHECK(a1 == slurp(kDir / "a3.csv"));
}

TEST_CASE("usage errors exit with 2") {
  CHECK(run("approx --log-b 6") == 2);
  CHECK(run("approx --constants " + (kDir / "missing.json").string() + " --log-b 6") == 2);
  CHECK(run("arl --model " + model("gaussian_d1.json") + " --log-b 3") == 2);  // no --seed
  CHECK(run("frobnicate") == 2);
}

TEST_CASE("domain errors exit with 1") {
  const auto bad = kDir / "bad_model.json";
  std::filesystem::create_directories(kDir);
  std::ofstream(bad) << R"({"trans": [[0.5, 0.49], [0.5, 0.5]], "emission": {"family": "gaussian", "mean": [0, 1], "stdev": [1, 1]}})";
  CHECK(run("arl --pre " + bad.string() + " --post " + bad.string() + " --log-b 3 --trials 10 --seed 1") == 1);
  CHECK(slurp(kDir / "stderr.txt").find("row 0") != std::string::npos);
}
