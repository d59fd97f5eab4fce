#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  fs::create_directories(scratch);
  const fs::path out = scratch / "stdout.txt";
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd =
      std::string(MBRL_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int raw = std::system(cmd.c_str());
  CliResult result;
  result.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  result.out = slurp(out);
  result.err = slurp(err);
  return result;
}

// Small gridworld run: two game iterations on tiny networks.
std::string lean_train_args(std::uint64_t seed, const fs::path& out_dir) {
  std::ostringstream args;
  args << "train --solver pal --env gridworld-goal --budget 600 --seed " << seed << " --out "
       << out_dir.string()
       << " --set game.n_init=400 --set game.n_per_iter=100 --set game.policy_steps=1"
       << " --set game.model_epochs=3 --set game.ensemble_size=2 --set model.hidden=16"
       << " --set model.minibatch=64 --set policy.hidden=16 --set value.hidden=16"
       << " --set value.epochs=1 --set npg.n_traj=6 --set npg.horizon=15 --set npg.cg_iters=4"
       << " --set run.eval_episodes=2";
  return args.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) lines.push_back(line);
  return lines;
}

const fs::path kScratch = "scratch/cli";

}  // namespace

TEST_CASE("training runs reproduce byte for byte and profile cleanly") {
  fs::remove_all(kScratch);
  const fs::path dir_a = kScratch / "a";
  const fs::path dir_b = kScratch / "b";

  const CliResult first = run_cli(lean_train_args(3, dir_a), kScratch / "t1");
  CAPTURE(first.err);
  REQUIRE(first.code == 0);
  CHECK(first.out.find("seed 3:") != std::string::npos);

  const CliResult second = run_cli(lean_train_args(3, dir_b), kScratch / "t2");
  REQUIRE(second.code == 0);

  const fs::path run_a = dir_a / "seed3";
  const fs::path run_b = dir_b / "seed3";
  const std::string log_a = slurp(run_a / "log.csv");
  CHECK(log_a == slurp(run_b / "log.csv"));
  CHECK(log_a.rfind("# config_hash=", 0) == 0);
  const std::string hash = log_a.substr(14, 16);

  const json summary = json::parse(slurp(run_a / "summary.json"));
  CHECK(summary.at("config_hash") == hash);
  CHECK(summary.at("total_env_samples") == 600);
  CHECK(summary.at("solver") == "pal");

  const json manifest = json::parse(slurp(run_a / "manifest.json"));
  CHECK(manifest.at("config_hash") == hash);
  CHECK(manifest.at("seed") == 3);
  CHECK(manifest.at("resolved").at("game.n_init") == "400");

  const fs::path ckpt = run_a / "checkpoint";
  for (const char* name : {"policy.ckpt", "value.ckpt", "model_0.ckpt", "model_1.ckpt",
                           "normalizer.json", "meta.json"}) {
    CAPTURE(name);
    CHECK(fs::exists(ckpt / name));
  }
  const json meta = json::parse(slurp(ckpt / "meta.json"));
  CHECK(meta.at("env") == "gridworld-goal");
  CHECK(meta.at("ensemble_size") == 2);
  CHECK(meta.at("perturb").at("kind") == "none");
  CHECK(meta.at("config_hash") == hash);

  // A rerun from the emitted snapshot reproduces the same configuration.
  const CliResult replay = run_cli("train --config " + (run_a / "resolved.ini").string() +
                                       " --seed 3 --out " + (kScratch / "c").string(),
                                   kScratch / "t3");
  REQUIRE(replay.code == 0);
  CHECK(slurp(kScratch / "c" / "seed3" / "log.csv") == log_a);

  // Learned-model profile: horizon clamps to the task's 50 steps.
  const fs::path profile_csv = kScratch / "profile.csv";
  const CliResult diag = run_cli("diagnose --checkpoint " + ckpt.string() +
                                     " --T 60 --rollouts 3 --seed 5 --out " +
                                     profile_csv.string(),
                                 kScratch / "t4");
  CAPTURE(diag.err);
  REQUIRE(diag.code == 0);
  CHECK(diag.err.find("clamping") != std::string::npos);
  CHECK(diag.out.find("T=50") != std::string::npos);
  const std::vector<std::string> rows = lines_of(slurp(profile_csv));
  REQUIRE(rows.size() == 53);  // hash line, header, then t = 0..50
  CHECK(rows[0] == "# config_hash=" + hash);
  CHECK(rows[1] == "t,L_open,L_closed");
  CHECK(rows[2] == "0,0,0");

  // Against the true dynamics the profile is identically zero.
  const fs::path exact_csv = kScratch / "exact.csv";
  const CliResult exact = run_cli("diagnose --checkpoint " + ckpt.string() +
                                      " --T 20 --rollouts 3 --seed 5 --exact-model --out " +
                                      exact_csv.string(),
                                  kScratch / "t5");
  REQUIRE(exact.code == 0);
  CHECK(exact.out.find("L_open_final=0 ") != std::string::npos);
  const std::vector<std::string> zero_rows = lines_of(slurp(exact_csv));
  REQUIRE(zero_rows.size() == 23);
  for (std::size_t i = 2; i < zero_rows.size(); ++i) {
    CHECK(zero_rows[i] == std::to_string(i - 2) + ",0,0");
  }
}

TEST_CASE("seed fan-out writes one directory per seed") {
  const fs::path out = kScratch / "fan";
  std::string args = lean_train_args(0, out);
  args.replace(args.find("--seed 0"), 8, "--seeds 4..5");
  const CliResult result = run_cli(args, kScratch / "t6");
  CAPTURE(result.err);
  REQUIRE(result.code == 0);
  REQUIRE(fs::exists(out / "seed4" / "log.csv"));
  REQUIRE(fs::exists(out / "seed5" / "log.csv"));
  CHECK(slurp(out / "seed4" / "log.csv") != slurp(out / "seed5" / "log.csv"));
  CHECK(json::parse(slurp(out / "seed4" / "summary.json")).at("seed") == 4);
}

TEST_CASE("configuration mistakes exit with code 2 and name the key") {
  const CliResult solver = run_cli("train --solver sgd --out " + (kScratch / "x1").string(),
                                   kScratch / "t7");
  CHECK(solver.code == 2);
  CHECK(solver.err.find("run.solver") != std::string::npos);

  const CliResult value = run_cli(
      "train --set npg.gamma=fast --out " + (kScratch / "x2").string(), kScratch / "t8");
  CHECK(value.code == 2);
  CHECK(value.err.find("npg.gamma") != std::string::npos);

  const CliResult trials = run_cli("verify lemma1 --trials 0", kScratch / "t9");
  CHECK(trials.code == 2);
  CHECK(trials.err.find("--trials") != std::string::npos);
}

TEST_CASE("the certification suites pass and write their artifacts") {
  const fs::path out = kScratch / "verify";
  const CliResult result =
      run_cli("verify lemma1 --trials 5 --seed 2 --out " + out.string(), kScratch / "t10");
  CAPTURE(result.err);
  REQUIRE(result.code == 0);
  CHECK(result.out.find("suite=lemma1 trials=5 violations=0") != std::string::npos);
  CHECK(lines_of(slurp(out / "sweep.csv")).size() == 6);
  const json report = json::parse(slurp(out / "report.json"));
  CHECK(report.at("violations") == 0);
  CHECK(report.at("suite") == "lemma1");
  CHECK(report.at("failures").empty());
}

TEST_CASE("the negative control trips violations and a nonzero exit") {
  const CliResult result =
      run_cli("verify lemma1 --trials 5 --seed 2 --bound-scale 0.001", kScratch / "t11");
  CHECK(result.code == 1);
  CHECK(result.out.find("violations=") != std::string::npos);
  CHECK(result.out.find("violations=0") == std::string::npos);
  CHECK(result.err.find("first violating instance") != std::string::npos);
}
