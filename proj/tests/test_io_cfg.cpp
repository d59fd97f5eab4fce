#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "mbrl/io.hpp"
#include "mbrl/runcfg.hpp"

using namespace mbrl;

namespace {

namespace fs = std::filesystem;

struct ScratchDir {
  fs::path path;
  explicit ScratchDir(const std::string& name) : path(fs::path("scratch") / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScratchDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

Eigen::VectorXd randn(Rng& rng, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("decimal serialization round-trips doubles exactly") {
  // strtod instead of std::stod: the latter throws on subnormals.
  for (double v : {0.0, 1.0 / 3.0, 0.1, 1e-300, -7.25, 3.141592653589793, 6.02e23,
                   -4.9406564584124654e-324}) {
    CAPTURE(v);
    CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-3.0) == "-3");
}

TEST_CASE("transition logs reload bit for bit") {
  ScratchDir dir("traj");
  Rng rng(0x74726a31ULL);
  std::vector<Trajectory> trajs(2);
  for (int t = 0; t < 3; ++t) {
    Transition tr;
    tr.t = t;
    tr.s = randn(rng, 3) / 3.0;
    tr.a = randn(rng, 2) * 1e-11;
    tr.r = rng.normal() / 7.0;
    tr.s_next = randn(rng, 3);
    tr.done = t == 2;
    trajs[0].steps.push_back(tr);
  }
  trajs[0].terminated = true;
  trajs[1].steps.push_back(
      Transition{0, randn(rng, 3), randn(rng, 2), 0.25, randn(rng, 3), false});

  const std::string path = dir.file("rollouts.txt");
  save_trajectories(path, trajs);
  const std::vector<Trajectory> loaded = load_trajectories(path);
  REQUIRE(loaded.size() == 2);
  REQUIRE(loaded[0].length() == 3);
  REQUIRE(loaded[1].length() == 1);
  CHECK(loaded[0].terminated);
  CHECK_FALSE(loaded[1].terminated);
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    for (int t = 0; t < trajs[i].length(); ++t) {
      const Transition& want = trajs[i].steps[t];
      const Transition& got = loaded[i].steps[t];
      CHECK(got.t == want.t);
      CHECK(got.s == want.s);
      CHECK(got.a == want.a);
      CHECK(got.r == want.r);
      CHECK(got.s_next == want.s_next);
      CHECK(got.done == want.done);
    }
  }

  const std::string again = dir.file("rollouts2.txt");
  save_trajectories(again, loaded);
  CHECK(read_text_file(again) == read_text_file(path));
}

TEST_CASE("policy and value checkpoints restore the exact learner") {
  ScratchDir dir("ckpt");
  Rng rng(0x636b7074ULL);
  GaussianPolicy policy(4, 2, {8, 8}, 0xc0ffeeULL);
  Eigen::MatrixXd states(3, 4);
  for (int i = 0; i < states.size(); ++i) states(i / 4, i % 4) = rng.normal();

  const std::string ppath = dir.file("policy.ckpt");
  save_policy(ppath, policy);
  const GaussianPolicy restored = load_policy(ppath);
  CHECK(restored.flatten() == policy.flatten());
  CHECK(restored.log_std == policy.log_std);
  CHECK(restored.mean_batch(states) == policy.mean_batch(states));

  // The header is a readable JSON line in front of the binary payload.
  const std::string raw = read_text_file(ppath);
  const nlohmann::json header = nlohmann::json::parse(raw.substr(0, raw.find('\n')));
  CHECK(header.at("kind") == "policy");
  CHECK(header.at("count") == policy.param_count());

  ValueNet value(4, {6}, 0x76616cULL);
  const std::string vpath = dir.file("value.ckpt");
  save_value(vpath, value);
  const ValueNet vrestored = load_value(vpath);
  CHECK(vrestored.net.flatten_params() == value.net.flatten_params());
  CHECK(vrestored.value_batch(states) == value.value_batch(states));

  CHECK_THROWS_AS(load_value(ppath), std::runtime_error);
  CHECK_THROWS_AS(load_policy(dir.file("missing.ckpt")), std::runtime_error);
}

TEST_CASE("ensemble checkpoints restore weights and normalizer") {
  ScratchDir dir("ensemble");
  Rng rng(0x656e73ULL);
  DynamicsEnsemble ensemble(3, 2, {8}, 2, 17);
  std::vector<Transition> data;
  for (int i = 0; i < 50; ++i) {
    Transition tr;
    tr.s = randn(rng, 3) * 2.0;
    tr.a = randn(rng, 2);
    tr.s_next = tr.s + randn(rng, 3) * 0.1;
    data.push_back(tr);
  }
  ensemble.set_normalizer(Normalizer::fit(data));

  const std::string edir = dir.file("model");
  save_ensemble(edir, ensemble);
  const DynamicsEnsemble loaded = load_ensemble(edir, 2);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded.state_dim() == 3);
  CHECK(loaded.action_dim() == 2);
  for (int k = 0; k < 2; ++k) {
    CHECK(loaded.member(k).flatten_params() == ensemble.member(k).flatten_params());
    CHECK(loaded.predict(k, data[0].s, data[0].a) == ensemble.predict(k, data[0].s, data[0].a));
  }
  CHECK(loaded.normalizer().s_mean == ensemble.normalizer().s_mean);
  CHECK(loaded.normalizer().delta_scale == ensemble.normalizer().delta_scale);

  const Normalizer round =
      normalizer_from_json(normalizer_to_json(ensemble.normalizer()));
  CHECK(round.s_scale == ensemble.normalizer().s_scale);
  CHECK(round.a_mean == ensemble.normalizer().a_mean);
  CHECK(round.fitted);
}

TEST_CASE("ini parsing handles sections, comments, and malformed lines") {
  const std::string text =
      "top = 1\n"
      "[run]\n"
      "solver = mal\n"
      "# a comment\n"
      "; another\n"
      "\n"
      "[npg]\n"
      "gamma = 0.97\n"
      "gamma = 0.95\n";
  const auto keys = parse_ini(text);
  CHECK(keys.at("top") == "1");
  CHECK(keys.at("run.solver") == "mal");
  CHECK(keys.at("npg.gamma") == "0.95");  // later assignment wins
  CHECK(keys.size() == 3);

  try {
    parse_ini("[run]\nno equals sign here\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& err) {
    CHECK(std::string(err.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_ini("[broken\n"), ConfigError);
  CHECK_THROWS_AS(parse_ini("= value\n"), ConfigError);

  const auto [key, value] = parse_override("npg.gamma=0.8");
  CHECK(key == "npg.gamma");
  CHECK(value == "0.8");
  CHECK_THROWS_AS(parse_override("no-equals"), ConfigError);
}

TEST_CASE("overrides outrank the file, which outranks the preset") {
  const std::map<std::string, std::string> file{{"run.solver", "pal"},
                                                {"game.n_init", "1234"},
                                                {"npg.gamma", "0.9"}};
  const std::map<std::string, std::string> cli{{"run.solver", "mal"}, {"npg.gamma", "0.8"}};
  const ResolvedConfig r = resolve_config(file, cli);
  CHECK(r.game.solver == SolverKind::Mal);
  CHECK(r.game.n_init == 1234);           // file survives under the winning solver preset
  CHECK(r.game.n_per_iter == 1000);       // untouched preset value
  CHECK_FALSE(r.game.buffer_capacity.has_value());
  CHECK(r.game.npg.gamma == 0.8);
  CHECK(r.snapshot.at("run.solver") == "mal");
  CHECK(r.snapshot.at("game.n_init") == "1234");
}

TEST_CASE("profiles select the advertised network widths") {
  const ResolvedConfig desk = resolve_config({}, {});
  CHECK(desk.profile == "desk");
  CHECK(desk.game.policy_hidden == std::vector<int>{32, 32});
  CHECK(desk.game.value_hidden == std::vector<int>{64, 64});
  CHECK(desk.game.model_hidden == std::vector<int>{128, 128});

  const ResolvedConfig paper = resolve_config({}, {{"run.profile", "paper"}});
  CHECK(paper.profile == "paper");
  CHECK(paper.game.policy_hidden == std::vector<int>{64, 64});
  CHECK(paper.game.value_hidden == std::vector<int>{128, 128});
  CHECK(paper.game.model_hidden == std::vector<int>{512, 512});

  const ResolvedConfig mixed =
      resolve_config({}, {{"run.profile", "paper"}, {"model.hidden", "24,24"}});
  CHECK(mixed.game.model_hidden == std::vector<int>{24, 24});
  CHECK(mixed.game.policy_hidden == std::vector<int>{64, 64});

  CHECK_THROWS_AS(resolve_config({}, {{"run.profile", "tiny"}}), ConfigError);
}

TEST_CASE("the config hash ignores the seed and tracks every other knob") {
  CHECK(fnv1a64("") == 14695981039346656037ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);

  const ResolvedConfig base = resolve_config({}, {});
  CHECK(base.config_hash.size() == 16);

  const ResolvedConfig seeded = resolve_config({}, {{"run.seed", "9"}});
  CHECK(seeded.game.seed == 9);
  CHECK(seeded.config_hash == base.config_hash);

  // Values chosen so the canonical decimal form matches the input text.
  for (const auto& [key, value] : std::map<std::string, std::string>{
           {"npg.lambda", "0.5"},
           {"game.buffer_capacity", "none"},
           {"run.total_samples", "12345"},
           {"perturb.kind", "goal"},
           {"env.slip", "0.25"}}) {
    CAPTURE(key);
    const ResolvedConfig changed = resolve_config({}, {{key, value}});
    CHECK(changed.config_hash != base.config_hash);
    CHECK(changed.snapshot.at(key) == value);
  }

  const ResolvedConfig none =
      resolve_config({}, {{"game.buffer_capacity", "none"}});
  CHECK_FALSE(none.game.buffer_capacity.has_value());
}

TEST_CASE("a snapshot round-trips through its ini form") {
  const std::map<std::string, std::string> file{{"game.n_init", "777"},
                                                {"npg.gamma", "0.9"},
                                                {"env.horizon", "25"},
                                                {"perturb.kind", "goal"},
                                                {"perturb.trigger", "500"},
                                                {"perturb.magnitude", "0.3"}};
  const ResolvedConfig first = resolve_config(file, {{"run.solver", "br"}});
  REQUIRE(first.game.perturbation.has_value());
  CHECK(first.game.perturbation->kind == PerturbationSchedule::Kind::GoalShift);
  CHECK(first.game.perturbation->trigger_samples == 500);
  CHECK(first.game.env_params.horizon == 25);
  CHECK(first.game.n_per_iter == 500);  // br preset against the 25-step horizon

  const std::string ini = snapshot_to_ini(first.snapshot);
  const ResolvedConfig second = resolve_config(parse_ini(ini), {});
  CHECK(second.config_hash == first.config_hash);
  CHECK(second.snapshot == first.snapshot);
  CHECK(second.game.solver == SolverKind::Br);
}

TEST_CASE("unknown keys and bad values name themselves") {
  auto expect_error = [](const std::map<std::string, std::string>& cli,
                         const std::string& needle) {
    try {
      resolve_config({}, cli);
      FAIL("expected ConfigError for ", needle);
    } catch (const ConfigError& err) {
      CHECK(std::string(err.what()).find(needle) != std::string::npos);
    }
  };
  expect_error({{"game.warp", "1"}}, "game.warp");
  expect_error({{"npg.gamma", "fast"}}, "npg.gamma");
  expect_error({{"model.hidden", "0"}}, "model.hidden");
  expect_error({{"perturb.kind", "melt"}}, "perturb.kind");
  expect_error({{"run.solver", "sgd"}}, "run.solver");
  expect_error({{"run.env", "cartpole"}}, "run.env");
  expect_error({{"npg.gamma", "1.5"}}, "npg.gamma");  // rejected by validation
}

TEST_CASE("environment overrides reshape the preset") {
  const ResolvedConfig r =
      resolve_config({{"run.solver", "pal"}, {"env.horizon", "10"}, {"env.slip", "0"}}, {});
  CHECK(r.game.n_per_iter == 50);
  CHECK(r.game.env_params.horizon == 10);
  CHECK(r.game.env_params.slip == 0.0);
  CHECK(r.snapshot.at("env.horizon") == "10");
}

TEST_CASE("the manifest embeds the full resolved snapshot") {
  const ResolvedConfig r = resolve_config({}, {{"run.solver", "gda"}});
  const nlohmann::json manifest = run_manifest(r, 42, "runs/demo");
  CHECK(manifest.at("config_hash") == r.config_hash);
  CHECK(manifest.at("seed") == 42);
  CHECK(manifest.at("out_dir") == "runs/demo");
  CHECK(manifest.at("created_at").get<std::string>().size() == 20);
  CHECK(manifest.at("resolved").size() == r.snapshot.size());
  CHECK(manifest.at("resolved").at("run.solver") == "gda");
}
