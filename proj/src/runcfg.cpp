#include "mbrl/runcfg.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <ctime>
#include <sstream>

#include "mbrl/io.hpp"

namespace mbrl {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long parse_long(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected integer, got '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(key + ": expected boolean, got '" + value + "'");
}

std::vector<int> parse_widths(const std::string& key, const std::string& value) {
  std::vector<int> widths;
  std::stringstream ss(value);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part.empty()) continue;
    long w = parse_long(key, part);
    if (w <= 0) throw ConfigError(key + ": widths must be positive");
    widths.push_back(static_cast<int>(w));
  }
  if (widths.empty()) throw ConfigError(key + ": expected comma-separated widths");
  return widths;
}

std::string widths_to_string(const std::vector<int>& widths) {
  std::string out;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(widths[i]);
  }
  return out;
}

std::string bool_to_string(bool v) { return v ? "true" : "false"; }

PerturbationSchedule& ensure_perturbation(GameConfig& cfg) {
  if (!cfg.perturbation) cfg.perturbation.emplace();
  return *cfg.perturbation;
}

}  // namespace

std::map<std::string, std::string> parse_ini(const std::string& text) {
  std::map<std::string, std::string> keys;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) {
        throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    }
    if (!section.empty()) key = section + "." + key;
    keys[key] = value;
  }
  return keys;
}

std::pair<std::string, std::string> parse_override(const std::string& spec) {
  std::size_t eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + spec + "': expected section.key=value");
  }
  return {trim(spec.substr(0, eq)), trim(spec.substr(eq + 1))};
}

void apply_key(GameConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "run.solver") {
    cfg.solver = solver_from_string(value);
  } else if (key == "run.env") {
    cfg.env_name = value;
  } else if (key == "run.profile") {
    // consumed during resolution
  } else if (key == "run.seed") {
    cfg.seed = static_cast<std::uint64_t>(parse_long(key, value));
  } else if (key == "run.total_samples") {
    cfg.total_samples = parse_long(key, value);
  } else if (key == "run.eval_episodes") {
    cfg.eval_episodes = static_cast<int>(parse_long(key, value));
  } else if (key == "run.success_threshold") {
    cfg.success_threshold = parse_double(key, value);
  } else if (key == "run.early_stop_success") {
    cfg.early_stop_success = parse_double(key, value);
  } else if (key == "game.n_init") {
    cfg.n_init = parse_long(key, value);
  } else if (key == "game.n_per_iter") {
    cfg.n_per_iter = parse_long(key, value);
  } else if (key == "game.buffer_capacity") {
    if (value == "none") {
      cfg.buffer_capacity.reset();
    } else {
      cfg.buffer_capacity = static_cast<std::size_t>(parse_long(key, value));
    }
  } else if (key == "game.fresh_buffer") {
    cfg.fresh_buffer = parse_bool(key, value);
  } else if (key == "game.policy_steps") {
    cfg.policy_steps = static_cast<int>(parse_long(key, value));
  } else if (key == "game.model_epochs") {
    cfg.model_epochs = static_cast<int>(parse_long(key, value));
  } else if (key == "game.init_model_epochs") {
    cfg.init_model_epochs = static_cast<int>(parse_long(key, value));
  } else if (key == "game.model_reinit") {
    cfg.model_reinit = parse_bool(key, value);
  } else if (key == "game.mal_single_step") {
    cfg.mal_single_step = parse_bool(key, value);
  } else if (key == "game.mal_step_lr") {
    cfg.mal_step_lr = parse_double(key, value);
  } else if (key == "game.ensemble_size") {
    cfg.ensemble_size = static_cast<int>(parse_long(key, value));
  } else if (key == "model.hidden") {
    cfg.model_hidden = parse_widths(key, value);
  } else if (key == "model.minibatch") {
    cfg.model_minibatch = static_cast<int>(parse_long(key, value));
  } else if (key == "model.lr") {
    cfg.model_lr = parse_double(key, value);
  } else if (key == "policy.hidden") {
    cfg.policy_hidden = parse_widths(key, value);
  } else if (key == "policy.log_std_init") {
    cfg.log_std_init = parse_double(key, value);
  } else if (key == "value.hidden") {
    cfg.value_hidden = parse_widths(key, value);
  } else if (key == "value.epochs") {
    cfg.npg.value_fit.epochs = static_cast<int>(parse_long(key, value));
  } else if (key == "value.minibatch") {
    cfg.npg.value_fit.minibatch = static_cast<int>(parse_long(key, value));
  } else if (key == "value.lr") {
    cfg.npg.value_fit.lr = parse_double(key, value);
  } else if (key == "npg.gamma") {
    cfg.npg.gamma = parse_double(key, value);
  } else if (key == "npg.lambda") {
    cfg.npg.lambda = parse_double(key, value);
  } else if (key == "npg.n_traj") {
    cfg.npg.n_traj = static_cast<int>(parse_long(key, value));
  } else if (key == "npg.horizon") {
    cfg.npg.horizon = static_cast<int>(parse_long(key, value));
  } else if (key == "npg.step_size") {
    cfg.npg.step_size = parse_double(key, value);
  } else if (key == "npg.cg_iters") {
    cfg.npg.cg_iters = static_cast<int>(parse_long(key, value));
  } else if (key == "npg.cg_damping") {
    cfg.npg.cg_damping = parse_double(key, value);
  } else if (key == "npg.intermediate_frac") {
    cfg.npg.intermediate_frac = parse_double(key, value);
  } else if (key == "npg.fisher_subsample") {
    cfg.npg.fisher_subsample = static_cast<int>(parse_long(key, value));
  } else if (key == "npg.standardize_adv") {
    cfg.npg.standardize_adv = parse_bool(key, value);
  } else if (key == "npg.worst_case_member") {
    cfg.npg.worst_case_member = parse_bool(key, value);
  } else if (key == "env.horizon") {
    if (value == "default") {
      cfg.env_params.horizon.reset();
    } else {
      cfg.env_params.horizon = static_cast<int>(parse_long(key, value));
    }
  } else if (key == "env.slip") {
    if (value == "default") {
      cfg.env_params.slip.reset();
    } else {
      cfg.env_params.slip = parse_double(key, value);
    }
  } else if (key == "env.success_dist") {
    if (value == "default") {
      cfg.env_params.success_dist.reset();
    } else {
      cfg.env_params.success_dist = parse_double(key, value);
    }
  } else if (key == "perturb.kind") {
    if (value == "none") {
      cfg.perturbation.reset();
    } else if (value == "dynamics") {
      ensure_perturbation(cfg).kind = PerturbationSchedule::Kind::DynamicsShift;
    } else if (value == "goal") {
      ensure_perturbation(cfg).kind = PerturbationSchedule::Kind::GoalShift;
    } else {
      throw ConfigError("perturb.kind: expected none|dynamics|goal, got '" + value + "'");
    }
  } else if (key == "perturb.trigger") {
    // Inert while perturb.kind is none, so snapshots replay exactly; keys
    // apply in sorted order, so the kind is always decided first.
    const long trigger = parse_long(key, value);
    if (cfg.perturbation) cfg.perturbation->trigger_samples = trigger;
  } else if (key == "perturb.magnitude") {
    const double magnitude = parse_double(key, value);
    if (cfg.perturbation) cfg.perturbation->magnitude = magnitude;
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

std::map<std::string, std::string> snapshot_config(const GameConfig& cfg,
                                                   const std::string& profile) {
  std::map<std::string, std::string> s;
  s["run.solver"] = to_string(cfg.solver);
  s["run.env"] = cfg.env_name;
  s["run.profile"] = profile;
  s["run.total_samples"] = std::to_string(cfg.total_samples);
  s["run.eval_episodes"] = std::to_string(cfg.eval_episodes);
  s["run.success_threshold"] = format_double(cfg.success_threshold);
  s["run.early_stop_success"] = format_double(cfg.early_stop_success);
  s["game.n_init"] = std::to_string(cfg.n_init);
  s["game.n_per_iter"] = std::to_string(cfg.n_per_iter);
  s["game.buffer_capacity"] =
      cfg.buffer_capacity ? std::to_string(*cfg.buffer_capacity) : std::string("none");
  s["game.fresh_buffer"] = bool_to_string(cfg.fresh_buffer);
  s["game.policy_steps"] = std::to_string(cfg.policy_steps);
  s["game.model_epochs"] = std::to_string(cfg.model_epochs);
  s["game.init_model_epochs"] = std::to_string(cfg.init_model_epochs);
  s["game.model_reinit"] = bool_to_string(cfg.model_reinit);
  s["game.mal_single_step"] = bool_to_string(cfg.mal_single_step);
  s["game.mal_step_lr"] = format_double(cfg.mal_step_lr);
  s["game.ensemble_size"] = std::to_string(cfg.ensemble_size);
  s["model.hidden"] = widths_to_string(cfg.model_hidden);
  s["model.minibatch"] = std::to_string(cfg.model_minibatch);
  s["model.lr"] = format_double(cfg.model_lr);
  s["policy.hidden"] = widths_to_string(cfg.policy_hidden);
  s["policy.log_std_init"] = format_double(cfg.log_std_init);
  s["value.hidden"] = widths_to_string(cfg.value_hidden);
  s["value.epochs"] = std::to_string(cfg.npg.value_fit.epochs);
  s["value.minibatch"] = std::to_string(cfg.npg.value_fit.minibatch);
  s["value.lr"] = format_double(cfg.npg.value_fit.lr);
  s["npg.gamma"] = format_double(cfg.npg.gamma);
  s["npg.lambda"] = format_double(cfg.npg.lambda);
  s["npg.n_traj"] = std::to_string(cfg.npg.n_traj);
  s["npg.horizon"] = std::to_string(cfg.npg.horizon);
  s["npg.step_size"] = format_double(cfg.npg.step_size);
  s["npg.cg_iters"] = std::to_string(cfg.npg.cg_iters);
  s["npg.cg_damping"] = format_double(cfg.npg.cg_damping);
  s["npg.intermediate_frac"] = format_double(cfg.npg.intermediate_frac);
  s["npg.fisher_subsample"] = std::to_string(cfg.npg.fisher_subsample);
  s["npg.standardize_adv"] = bool_to_string(cfg.npg.standardize_adv);
  s["npg.worst_case_member"] = bool_to_string(cfg.npg.worst_case_member);
  s["env.horizon"] =
      cfg.env_params.horizon ? std::to_string(*cfg.env_params.horizon) : std::string("default");
  s["env.slip"] =
      cfg.env_params.slip ? format_double(*cfg.env_params.slip) : std::string("default");
  s["env.success_dist"] = cfg.env_params.success_dist ? format_double(*cfg.env_params.success_dist)
                                                       : std::string("default");
  if (cfg.perturbation) {
    s["perturb.kind"] = cfg.perturbation->kind == PerturbationSchedule::Kind::DynamicsShift
                            ? "dynamics"
                            : "goal";
    s["perturb.trigger"] = std::to_string(cfg.perturbation->trigger_samples);
    s["perturb.magnitude"] = format_double(cfg.perturbation->magnitude);
  } else {
    s["perturb.kind"] = "none";
    s["perturb.trigger"] = "0";
    s["perturb.magnitude"] = "0";
  }
  return s;
}

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

ResolvedConfig resolve_config(const std::map<std::string, std::string>& file_keys,
                              const std::map<std::string, std::string>& cli_keys) {
  auto lookup = [&](const std::string& key, const std::string& fallback) -> std::string {
    auto c = cli_keys.find(key);
    if (c != cli_keys.end()) return c->second;
    auto f = file_keys.find(key);
    if (f != file_keys.end()) return f->second;
    return fallback;
  };

  std::string solver_name = lookup("run.solver", "pal");
  SolverKind solver;
  try {
    solver = solver_from_string(solver_name);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("run.solver: ") + e.what());
  }
  std::string env_name = lookup("run.env", "gridworld-goal");
  std::string profile = lookup("run.profile", "desk");
  if (profile != "desk" && profile != "paper") {
    throw ConfigError("run.profile: expected desk|paper, got '" + profile + "'");
  }

  // Environment shape first, so presets see any overridden horizon.
  GameConfig probe;
  for (const std::string& key : {"env.horizon", "env.slip", "env.success_dist"}) {
    std::string v = lookup(key, "");
    if (!v.empty()) apply_key(probe, key, v);
  }

  GameConfig cfg;
  try {
    cfg = solver_preset(solver, env_name, probe.env_params);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("run.env: ") + e.what());
  }
  if (profile == "paper") {
    cfg.policy_hidden = {64, 64};
    cfg.value_hidden = {128, 128};
    cfg.model_hidden = {512, 512};
  }

  auto apply_layer = [&](const std::map<std::string, std::string>& keys) {
    for (const auto& [key, value] : keys) {
      if (key == "run.solver" || key == "run.env" || key == "run.profile") continue;
      apply_key(cfg, key, value);
    }
  };
  apply_layer(file_keys);
  apply_layer(cli_keys);

  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }

  ResolvedConfig resolved;
  resolved.game = cfg;
  resolved.profile = profile;
  resolved.snapshot = snapshot_config(cfg, profile);

  std::string canonical;
  for (const auto& [key, value] : resolved.snapshot) {
    canonical += key;
    canonical += "=";
    canonical += value;
    canonical += "\n";
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, fnv1a64(canonical));
  resolved.config_hash = buf;
  return resolved;
}

nlohmann::json run_manifest(const ResolvedConfig& resolved, std::uint64_t seed,
                            const std::string& out_dir) {
  nlohmann::json j;
  j["config_hash"] = resolved.config_hash;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  j["created_at"] = stamp;
  j["resolved"] = nlohmann::json::object();
  for (const auto& [key, value] : resolved.snapshot) j["resolved"][key] = value;
  return j;
}

std::string snapshot_to_ini(const std::map<std::string, std::string>& snapshot) {
  std::string out;
  std::string section;
  for (const auto& [key, value] : snapshot) {
    std::size_t dot = key.find('.');
    std::string sec = dot == std::string::npos ? "" : key.substr(0, dot);
    std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
    if (sec != section) {
      if (!out.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += name + " = " + value + "\n";
  }
  return out;
}

}  // namespace mbrl
