#include "mbrl/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mbrl {

namespace {

using nlohmann::json;

std::vector<double> split_doubles(const std::string& field) {
  std::vector<double> out;
  std::stringstream ss(field);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<long>(v.size()));
}

std::string join_doubles(const Eigen::VectorXd& v) {
  std::string out;
  for (int i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

std::vector<int> widths_of(const Mlp& net) {
  std::vector<int> widths{net.input_dim()};
  for (const auto& w : net.weights) widths.push_back(static_cast<int>(w.rows()));
  return widths;
}

Mlp mlp_from_header(const json& header, const Eigen::VectorXd& flat) {
  const std::vector<int> widths = header.at("widths").get<std::vector<int>>();
  const std::string act = header.at("activation").get<std::string>();
  Activation activation = Activation::Tanh;
  if (act == "relu") activation = Activation::Relu;
  else if (act == "identity") activation = Activation::Identity;
  else if (act != "tanh") throw std::runtime_error("checkpoint: unknown activation " + act);
  Rng rng(0);
  Mlp net = Mlp::create(widths, activation, rng);
  net.set_params(flat);
  return net;
}

std::string activation_name(Activation act) {
  switch (act) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Identity: return "identity";
  }
  return "tanh";
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void save_trajectories(const std::string& path, const std::vector<Trajectory>& trajs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& traj : trajs) {
    for (const auto& tr : traj.steps) {
      out << tr.t << ' ' << join_doubles(tr.s) << ' ' << join_doubles(tr.a) << ' '
          << format_double(tr.r) << ' ' << join_doubles(tr.s_next) << ' ' << (tr.done ? 1 : 0)
          << '\n';
    }
    out << '\n';
  }
}

std::vector<Trajectory> load_trajectories(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<Trajectory> out;
  Trajectory current;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      if (!current.steps.empty()) {
        current.terminated = current.steps.back().done;
        out.push_back(std::move(current));
        current = Trajectory{};
      }
      continue;
    }
    std::stringstream ss(line);
    std::string t_s, s_s, a_s, r_s, sn_s, done_s;
    ss >> t_s >> s_s >> a_s >> r_s >> sn_s >> done_s;
    Transition tr;
    tr.t = std::stoi(t_s);
    tr.s = to_vector(split_doubles(s_s));
    tr.a = to_vector(split_doubles(a_s));
    tr.r = std::stod(r_s);
    tr.s_next = to_vector(split_doubles(sn_s));
    tr.done = done_s == "1";
    current.steps.push_back(std::move(tr));
  }
  if (!current.steps.empty()) {
    current.terminated = current.steps.back().done;
    out.push_back(std::move(current));
  }
  return out;
}

void save_flat_checkpoint(const std::string& path, const json& header,
                          const Eigen::VectorXd& flat) {
  json h = header;
  h["count"] = flat.size();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << h.dump() << '\n';
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));
}

std::pair<json, Eigen::VectorXd> load_flat_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string header_line;
  std::getline(in, header_line);
  json header = json::parse(header_line);
  const long count = header.at("count").get<long>();
  Eigen::VectorXd flat(count);
  in.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint payload truncated: " + path);
  return {header, flat};
}

void save_policy(const std::string& path, const GaussianPolicy& policy) {
  json header{{"kind", "policy"},
              {"widths", widths_of(policy.mean_net)},
              {"activation", activation_name(policy.mean_net.hidden_act)},
              {"log_std_dim", policy.log_std.size()}};
  save_flat_checkpoint(path, header, policy.flatten());
}

GaussianPolicy load_policy(const std::string& path) {
  auto [header, flat] = load_flat_checkpoint(path);
  if (header.at("kind") != "policy") throw std::runtime_error("not a policy checkpoint: " + path);
  const std::vector<int> widths = header.at("widths").get<std::vector<int>>();
  const std::vector<int> hidden(widths.begin() + 1, widths.end() - 1);
  GaussianPolicy policy(widths.front(), widths.back(), hidden, 0);
  policy.set_flat(flat);
  return policy;
}

void save_value(const std::string& path, const ValueNet& value) {
  json header{{"kind", "value"},
              {"widths", widths_of(value.net)},
              {"activation", activation_name(value.net.hidden_act)}};
  save_flat_checkpoint(path, header, value.net.flatten_params());
}

ValueNet load_value(const std::string& path) {
  auto [header, flat] = load_flat_checkpoint(path);
  if (header.at("kind") != "value") throw std::runtime_error("not a value checkpoint: " + path);
  const std::vector<int> widths = header.at("widths").get<std::vector<int>>();
  const std::vector<int> hidden(widths.begin() + 1, widths.end() - 1);
  ValueNet value(widths.front(), hidden, 0);
  value.net = mlp_from_header(header, flat);
  return value;
}

json normalizer_to_json(const Normalizer& norm) {
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  return json{{"s_mean", vec(norm.s_mean)},   {"s_scale", vec(norm.s_scale)},
              {"a_mean", vec(norm.a_mean)},   {"a_scale", vec(norm.a_scale)},
              {"delta_scale", vec(norm.delta_scale)}};
}

Normalizer normalizer_from_json(const json& j) {
  Normalizer norm;
  auto vec = [&j](const char* key) {
    const auto v = j.at(key).get<std::vector<double>>();
    return to_vector(v);
  };
  norm.s_mean = vec("s_mean");
  norm.s_scale = vec("s_scale");
  norm.a_mean = vec("a_mean");
  norm.a_scale = vec("a_scale");
  norm.delta_scale = vec("delta_scale");
  norm.fitted = true;
  return norm;
}

void save_ensemble(const std::string& dir, const DynamicsEnsemble& ensemble) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (int k = 0; k < ensemble.size(); ++k) {
    json header{{"kind", "dynamics"},
                {"widths", widths_of(ensemble.member(k))},
                {"activation", activation_name(ensemble.member(k).hidden_act)},
                {"member", k}};
    save_flat_checkpoint(dir + "/model_" + std::to_string(k) + ".ckpt", header,
                         ensemble.member(k).flatten_params());
  }
  write_text_file(dir + "/normalizer.json", normalizer_to_json(ensemble.normalizer()).dump(2));
}

DynamicsEnsemble load_ensemble(const std::string& dir, int n_members) {
  if (n_members < 1) throw std::invalid_argument("load_ensemble: bad member count");
  auto [header0, flat0] = load_flat_checkpoint(dir + "/model_0.ckpt");
  const std::vector<int> widths = header0.at("widths").get<std::vector<int>>();
  const std::vector<int> hidden(widths.begin() + 1, widths.end() - 1);
  Normalizer norm = normalizer_from_json(json::parse(read_text_file(dir + "/normalizer.json")));
  const int state_dim = widths.back();
  const int action_dim = widths.front() - state_dim;
  DynamicsEnsemble ensemble(state_dim, action_dim, hidden, n_members, 0);
  ensemble.set_normalizer(norm);
  for (int k = 0; k < n_members; ++k) {
    auto [header, flat] = load_flat_checkpoint(dir + "/model_" + std::to_string(k) + ".ckpt");
    ensemble.member(k) = mlp_from_header(header, flat);
  }
  return ensemble;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace mbrl
