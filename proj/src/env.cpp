#include "mbrl/env.hpp"

#include <cmath>

namespace mbrl {

double Trajectory::total_reward() const {
  double sum = 0;
  for (const auto& tr : steps) sum += tr.r;
  return sum;
}

double Trajectory::discounted_return(double gamma) const {
  double sum = 0, g = 1;
  for (const auto& tr : steps) {
    sum += g * tr.r;
    g *= gamma;
  }
  return sum;
}

namespace {

Trajectory run_episode(const Environment& env, const ActionSampler& policy, Rng& rng,
                       long* budget_left) {
  Trajectory tr;
  Eigen::VectorXd s = env.sample_init(rng);
  for (int t = 0; t < env.horizon(); ++t) {
    Eigen::VectorXd a = policy(s, rng);
    Eigen::VectorXd sn = env.step(s, a, rng);
    const double r = env.reward(s, a, sn);
    const bool done = env.terminal(sn);
    tr.steps.push_back({t, s, a, r, sn, done});
    s = std::move(sn);
    if (budget_left && --*budget_left <= 0) {
      tr.terminated = done;
      return tr;
    }
    if (done) {
      tr.terminated = true;
      break;
    }
  }
  return tr;
}

}  // namespace

std::vector<Trajectory> collect_rollouts(const Environment& env, const ActionSampler& policy,
                                         long n_samples, std::uint64_t seed) {
  if (n_samples <= 0) throw std::invalid_argument("collect_rollouts: n_samples must be positive");
  std::vector<Trajectory> out;
  Rng master(seed);
  long left = n_samples;
  for (std::uint64_t i = 0; left > 0; ++i) {
    Rng stream = master.split(i);
    out.push_back(run_episode(env, policy, stream, &left));
  }
  return out;
}

std::vector<Trajectory> collect_episodes(const Environment& env, const ActionSampler& policy,
                                         int n_episodes, std::uint64_t seed) {
  std::vector<Trajectory> out;
  Rng master(seed);
  for (int i = 0; i < n_episodes; ++i) {
    Rng stream = master.split(static_cast<std::uint64_t>(i));
    out.push_back(run_episode(env, policy, stream, nullptr));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gridworld

GridworldEnv::GridworldEnv(const GridworldConfig& cfg) : cfg_(cfg) {
  if (cfg_.size < 2) throw std::invalid_argument("gridworld: size must be at least 2");
  if (cfg_.slip < 0 || cfg_.slip > 1) throw std::invalid_argument("gridworld: slip must be in [0, 1]");
  name_ = "gridworld-goal";
  state_dim_ = 4;
  action_dim_ = 2;
  horizon_ = cfg_.horizon;
  r_max_ = 1.0;
  if (cfg_.fixed_goal && (*cfg_.fixed_goal < 0 || *cfg_.fixed_goal >= n_cells()))
    throw std::invalid_argument("gridworld: fixed goal out of range");
}

namespace {
inline double cell_to_obs(int c, int size) {
  const double off = (size - 1) / 2.0;
  return (c - off) / off;
}
inline int obs_to_cell(double v, int size) {
  const double off = (size - 1) / 2.0;
  int c = static_cast<int>(std::lround(v * off + off));
  return std::max(0, std::min(size - 1, c));
}
}  // namespace

Eigen::VectorXd GridworldEnv::observation(int cell, int goal) const {
  Eigen::VectorXd s(4);
  s << cell_to_obs(cell % cfg_.size, cfg_.size), cell_to_obs(cell / cfg_.size, cfg_.size),
      cell_to_obs(goal % cfg_.size, cfg_.size), cell_to_obs(goal / cfg_.size, cfg_.size);
  return s;
}

int GridworldEnv::position_cell(const Eigen::VectorXd& s) const {
  return cell_index(obs_to_cell(s[0], cfg_.size), obs_to_cell(s[1], cfg_.size));
}

int GridworldEnv::goal_cell(const Eigen::VectorXd& s) const {
  return cell_index(obs_to_cell(s[2], cfg_.size), obs_to_cell(s[3], cfg_.size));
}

Eigen::VectorXd GridworldEnv::move_action(int move) const {
  Eigen::VectorXd a = Eigen::VectorXd::Zero(2);
  switch (move) {
    case 0: a[0] = 1; break;
    case 1: a[0] = -1; break;
    case 2: a[1] = 1; break;
    case 3: a[1] = -1; break;
    default: throw std::invalid_argument("gridworld: move index out of range");
  }
  return a;
}

int GridworldEnv::intended_move(const Eigen::VectorXd& a) const {
  if (std::abs(a[0]) >= std::abs(a[1])) return a[0] >= 0 ? 0 : 1;
  return a[1] >= 0 ? 2 : 3;
}

int GridworldEnv::apply_move(int cell, int move) const {
  int x = cell % cfg_.size, y = cell / cfg_.size;
  switch (move) {
    case 0: x += 1; break;
    case 1: x -= 1; break;
    case 2: y += 1; break;
    case 3: y -= 1; break;
  }
  if (x < 0 || x >= cfg_.size || y < 0 || y >= cfg_.size) return cell;
  return cell_index(x, y);
}

Eigen::VectorXd GridworldEnv::sample_init(Rng& rng) const {
  const int start = rng.uniform_int(n_cells());
  int goal = cfg_.fixed_goal ? *cfg_.fixed_goal : rng.uniform_int(n_cells());
  while (!cfg_.fixed_goal && goal == start) goal = rng.uniform_int(n_cells());
  return observation(start, goal);
}

Eigen::VectorXd GridworldEnv::step(const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                                   Rng& rng) const {
  int move = intended_move(a);
  if (rng.uniform() < cfg_.slip) move = rng.uniform_int(4);
  return observation(apply_move(position_cell(s), move), goal_cell(s));
}

double GridworldEnv::reward(const Eigen::VectorXd&, const Eigen::VectorXd&,
                            const Eigen::VectorXd& s_next) const {
  return position_cell(s_next) == goal_cell(s_next) ? 1.0 : 0.0;
}

bool GridworldEnv::terminal(const Eigen::VectorXd& s) const {
  return cfg_.terminate_at_goal && position_cell(s) == goal_cell(s);
}

double GridworldEnv::distance(const Eigen::VectorXd& s) const {
  const int p = position_cell(s), g = goal_cell(s);
  const double dx = p % cfg_.size - g % cfg_.size;
  const double dy = p / cfg_.size - g / cfg_.size;
  return std::sqrt(dx * dx + dy * dy);
}

bool GridworldEnv::success(const Trajectory& traj) const {
  for (const auto& tr : traj.steps)
    if (tr.r > 0.5) return true;
  return false;
}

void GridworldEnv::apply_perturbation(const PerturbationSchedule& schedule) {
  if (schedule.kind != PerturbationSchedule::Kind::DynamicsShift)
    throw std::invalid_argument("gridworld: only dynamics-shift perturbations are supported");
  cfg_.slip = std::min(1.0, cfg_.slip * schedule.magnitude);
}

TabularMdp GridworldEnv::export_tabular(int goal, double gamma) const {
  if (goal < 0 || goal >= n_cells()) throw std::invalid_argument("gridworld: goal out of range");
  TabularMdp mdp;
  mdp.n_states = n_cells();
  mdp.n_actions = 4;
  mdp.gamma = gamma;
  mdp.r_max = 1.0;
  mdp.rewards = Eigen::VectorXd::Zero(mdp.n_states);
  mdp.rewards[goal] = 1.0;
  mdp.rho = Eigen::VectorXd::Constant(mdp.n_states, 1.0 / (mdp.n_states - 1));
  mdp.rho[goal] = 0.0;
  for (int a = 0; a < 4; ++a) {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
      if (s == goal) {
        P(s, s) = 1.0;
        continue;
      }
      for (int m = 0; m < 4; ++m) {
        double prob = cfg_.slip / 4.0 + (m == a ? 1.0 - cfg_.slip : 0.0);
        P(s, apply_move(s, m)) += prob;
      }
    }
    mdp.transitions.push_back(std::move(P));
  }
  mdp.validate();
  return mdp;
}

TabularPolicy GridworldEnv::export_policy(const ActionSampler& policy, int goal, int n_draws,
                                          std::uint64_t seed) const {
  TabularPolicy out;
  out.probs = Eigen::MatrixXd::Zero(n_cells(), 4);
  Rng master(seed);
  for (int cell = 0; cell < n_cells(); ++cell) {
    if (cell == goal) {
      out.probs.row(cell).setConstant(0.25);
      continue;
    }
    Rng stream = master.split(static_cast<std::uint64_t>(cell));
    const Eigen::VectorXd obs = observation(cell, goal);
    Eigen::Vector4d counts = Eigen::Vector4d::Zero();
    for (int i = 0; i < n_draws; ++i) counts[intended_move(policy(obs, stream))] += 1.0;
    out.probs.row(cell) = counts.transpose() / counts.sum();
  }
  out.validate();
  return out;
}

TabularMdp GridworldEnv::export_model_tabular(const std::vector<Predictor>& members, int goal,
                                              double gamma, double smoothing) const {
  if (members.empty()) throw std::invalid_argument("gridworld: need at least one predictor");
  if (smoothing <= 0 || smoothing >= 1)
    throw std::invalid_argument("gridworld: smoothing must be in (0, 1)");
  TabularMdp mdp = export_tabular(goal, gamma);  // rewards, rho, shapes
  const double off = (cfg_.size - 1) / 2.0;
  for (int a = 0; a < 4; ++a) {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
      if (s == goal) {
        P(s, s) = 1.0;
        continue;
      }
      const Eigen::VectorXd obs = observation(s, goal);
      const Eigen::VectorXd act = move_action(a);
      for (const auto& member : members) {
        const Eigen::VectorXd pred = member(obs, act);
        // Soft-assign the predicted position to the four surrounding cells.
        const double cx = std::min(static_cast<double>(cfg_.size - 1),
                                   std::max(0.0, pred[0] * off + off));
        const double cy = std::min(static_cast<double>(cfg_.size - 1),
                                   std::max(0.0, pred[1] * off + off));
        const int x0 = static_cast<int>(std::floor(cx)), y0 = static_cast<int>(std::floor(cy));
        const int x1 = std::min(x0 + 1, cfg_.size - 1), y1 = std::min(y0 + 1, cfg_.size - 1);
        const double wx = cx - x0, wy = cy - y0;
        P(s, cell_index(x0, y0)) += (1 - wx) * (1 - wy);
        P(s, cell_index(x1, y0)) += wx * (1 - wy);
        P(s, cell_index(x0, y1)) += (1 - wx) * wy;
        P(s, cell_index(x1, y1)) += wx * wy;
      }
      P.row(s) /= P.row(s).sum();
      P.row(s) = (1.0 - smoothing) * P.row(s) +
                 Eigen::RowVectorXd::Constant(mdp.n_states, smoothing / mdp.n_states);
    }
    mdp.transitions[a] = std::move(P);
  }
  mdp.validate();
  return mdp;
}

// ---------------------------------------------------------------------------
// Reacher

ReacherEnv::ReacherEnv(const ReacherConfig& cfg) : cfg_(cfg) {
  if (cfg_.dt <= 0 || cfg_.mass <= 0) throw std::invalid_argument("reacher: dt and mass must be positive");
  name_ = "point-reacher";
  state_dim_ = 6;
  action_dim_ = 2;
  horizon_ = cfg_.horizon;
  r_max_ = 4.0;  // magnitude bound on rewards over the reachable region
}

Eigen::VectorXd ReacherEnv::sample_init(Rng& rng) const {
  Eigen::VectorXd s(6);
  s[0] = rng.uniform(-cfg_.init_half_width, cfg_.init_half_width);
  s[1] = rng.uniform(-cfg_.init_half_width, cfg_.init_half_width);
  s[2] = 0.0;
  s[3] = 0.0;
  s[4] = rng.uniform(cfg_.goal_lo[0], cfg_.goal_hi[0]);
  s[5] = rng.uniform(cfg_.goal_lo[1], cfg_.goal_hi[1]);
  return s;
}

Eigen::VectorXd ReacherEnv::step(const Eigen::VectorXd& s, const Eigen::VectorXd& a, Rng&) const {
  const Eigen::Vector2d force = a.head<2>().cwiseMax(-1.0).cwiseMin(1.0);
  Eigen::VectorXd sn = s;
  sn.segment<2>(0) += cfg_.dt * s.segment<2>(2);
  sn.segment<2>(2) += (cfg_.dt / cfg_.mass) * force;
  return sn;
}

double ReacherEnv::reward(const Eigen::VectorXd&, const Eigen::VectorXd&,
                          const Eigen::VectorXd& s_next) const {
  return -distance(s_next);
}

double ReacherEnv::distance(const Eigen::VectorXd& s) const {
  return (s.segment<2>(0) - s.segment<2>(4)).norm();
}

bool ReacherEnv::success(const Trajectory& traj) const {
  if (traj.steps.empty()) return false;
  return distance(traj.steps.back().s_next) < cfg_.success_dist;
}

void ReacherEnv::apply_perturbation(const PerturbationSchedule& schedule) {
  if (schedule.kind == PerturbationSchedule::Kind::DynamicsShift) {
    cfg_.mass *= schedule.magnitude;
  } else {
    cfg_.goal_lo.array() -= schedule.magnitude;
    cfg_.goal_hi.array() -= schedule.magnitude;
  }
}

// ---------------------------------------------------------------------------
// Pendulum

PendulumEnv::PendulumEnv(const PendulumConfig& cfg) : cfg_(cfg) {
  name_ = "pendulum";
  state_dim_ = 3;
  action_dim_ = 1;
  horizon_ = cfg_.horizon;
  r_max_ = M_PI * M_PI + 0.1 * cfg_.max_speed * cfg_.max_speed + 0.001 * cfg_.max_torque * cfg_.max_torque;
}

namespace {
double wrap_angle(double theta) {
  theta = std::fmod(theta + M_PI, 2 * M_PI);
  if (theta < 0) theta += 2 * M_PI;
  return theta - M_PI;
}
}  // namespace

Eigen::VectorXd PendulumEnv::sample_init(Rng& rng) const {
  const double theta = rng.uniform(-M_PI, M_PI);
  const double theta_dot = rng.uniform(-1.0, 1.0);
  Eigen::VectorXd s(3);
  s << std::cos(theta), std::sin(theta), theta_dot;
  return s;
}

Eigen::VectorXd PendulumEnv::step(const Eigen::VectorXd& s, const Eigen::VectorXd& a, Rng&) const {
  const double theta = std::atan2(s[1], s[0]);
  double theta_dot = s[2];
  const double u = std::max(-cfg_.max_torque, std::min(cfg_.max_torque, a[0]));
  const double accel = 3.0 * cfg_.gravity / (2.0 * cfg_.length) * std::sin(theta) +
                       3.0 * u / (cfg_.mass * cfg_.length * cfg_.length);
  theta_dot += cfg_.dt * accel;
  theta_dot = std::max(-cfg_.max_speed, std::min(cfg_.max_speed, theta_dot));
  const double theta_next = theta + cfg_.dt * theta_dot;
  Eigen::VectorXd sn(3);
  sn << std::cos(theta_next), std::sin(theta_next), theta_dot;
  return sn;
}

double PendulumEnv::reward(const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                           const Eigen::VectorXd&) const {
  const double theta = wrap_angle(std::atan2(s[1], s[0]));
  const double u = std::max(-cfg_.max_torque, std::min(cfg_.max_torque, a[0]));
  return -(theta * theta + 0.1 * s[2] * s[2] + 0.001 * u * u);
}

double PendulumEnv::distance(const Eigen::VectorXd& s) const {
  return std::abs(wrap_angle(std::atan2(s[1], s[0])));
}

bool PendulumEnv::success(const Trajectory& traj) const {
  const int tail = std::min<int>(20, traj.length());
  if (tail == 0) return false;
  double acc = 0;
  for (int i = traj.length() - tail; i < traj.length(); ++i) acc += distance(traj.steps[i].s_next);
  return acc / tail < cfg_.success_angle;
}

void PendulumEnv::apply_perturbation(const PerturbationSchedule& schedule) {
  if (schedule.kind != PerturbationSchedule::Kind::DynamicsShift)
    throw std::invalid_argument("pendulum: only dynamics-shift perturbations are supported");
  cfg_.mass *= schedule.magnitude;
}

std::unique_ptr<Environment> make_env(const std::string& name, const EnvParams& params) {
  if (name == "gridworld-goal") {
    GridworldConfig cfg;
    if (params.horizon) cfg.horizon = *params.horizon;
    if (params.slip) cfg.slip = *params.slip;
    return std::make_unique<GridworldEnv>(cfg);
  }
  if (name == "point-reacher") {
    ReacherConfig cfg;
    if (params.horizon) cfg.horizon = *params.horizon;
    if (params.success_dist) cfg.success_dist = *params.success_dist;
    return std::make_unique<ReacherEnv>(cfg);
  }
  if (name == "pendulum") {
    PendulumConfig cfg;
    if (params.horizon) cfg.horizon = *params.horizon;
    return std::make_unique<PendulumEnv>(cfg);
  }
  throw std::invalid_argument("unknown environment: " + name);
}

}  // namespace mbrl
