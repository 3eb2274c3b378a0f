#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
};

Run run_cli(const std::string& args) {
  const auto log = fs::temp_directory_path() / "lbl_cli_test_output.txt";
  const std::string cmd = std::string("\"") + LBL_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::ostringstream s;
  s << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, s.str()};
}

nlohmann::json base_doc() {
  return nlohmann::json::parse(R"({
    "hmm": {"H": 2, "X": 4, "pi": [0.6, 0.4], "M": [0.8, 0.2, 0.3, 0.7],
            "E": [0.4, 0.3, 0.2, 0.1, 0.1, 0.2, 0.3, 0.4]},
    "reward": {"transfer": {"kind": "one_hot_action", "actions": 3},
               "theta_star": [[0.8, -0.4, 0.3], [-0.4, 0.8, 0.3]], "noise": "gaussian", "v_eta": 0.1},
    "policy": {"name": ["oracle", "random"]},
    "run": {"horizons": [100], "num_seeds": 2, "master_seed": 3},
    "estimate": {"checkpoints": [500, 5000], "num_seeds": 3}
  })");
}

fs::path write_config(const std::string& name, const nlohmann::json& doc) {
  const auto path = fs::temp_directory_path() / name;
  std::ofstream(path) << doc.dump();
  return path;
}

}  // namespace

TEST_CASE("command-line exit codes") {
  CHECK(run_cli("print-config-schema").code == 0);
  CHECK(run_cli("print-config-schema").out.find("hmm") != std::string::npos);
  CHECK(run_cli("frobnicate").code == 1);
  CHECK(run_cli("").code == 1);
  CHECK(run_cli("simulate").code == 2);

  auto doc = base_doc();
  doc["hmm"].erase("M");
  const auto bad = run_cli("simulate " + write_config("lbl_cli_missing.json", doc).string());
  CHECK(bad.code == 2);
  CHECK(bad.out.find("hmm.M") != std::string::npos);
}

TEST_CASE("simulate and fit-rate") {
  const auto out = fs::temp_directory_path() / "lbl_cli_sim";
  fs::remove_all(out);
  const auto cfg = write_config("lbl_cli_ok.json", base_doc());
  const auto r = run_cli("simulate --config " + cfg.string() + " --out " + out.string() + " --seed 9");
  CHECK(r.code == 0);
  CHECK(fs::exists(out / "summary.csv"));
  CHECK(fs::exists(out / "rounds" / "oracle_T100_s1.csv"));
  const auto snapshot = nlohmann::json::parse(std::ifstream(out / "config.json"));
  CHECK(snapshot["run"]["master_seed"] == 9);

  // two seeds per horizon are too few to fit
  CHECK(run_cli("fit-rate " + out.string()).code == 2);
  fs::remove_all(out);
}

TEST_CASE("fit-rate on synthetic square-root regret") {
  const auto dir = fs::temp_directory_path() / "lbl_cli_fit";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream csv(dir / "summary.csv");
  csv << "policy,T,seed,R_T,log_T,log_R_T,estimator_refreshes,estimator_failures\n";
  for (int T : {1000, 4000, 16000, 64000})
    for (int s = 0; s < 10; ++s) csv << "demo," << T << ',' << s << ',' << 3.0 * std::sqrt(double(T)) << ",0,0,0,0\n";
  csv.close();
  const auto r = run_cli("fit-rate " + dir.string());
  CHECK(r.code == 0);
  CHECK(r.out.find("demo: slope 0.5") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("check-lemmas and estimate") {
  CHECK(run_cli("check-lemmas --trials 100").code == 0);
  CHECK(run_cli("check-lemmas --trials 0").code == 1);
  const auto out = fs::temp_directory_path() / "lbl_cli_est";
  fs::remove_all(out);
  const auto r = run_cli("estimate " + write_config("lbl_cli_est.json", base_doc()).string() + " --out " + out.string());
  CHECK(r.code == 0);
  CHECK(fs::exists(out / "estimate.csv"));
  fs::remove_all(out);
}
