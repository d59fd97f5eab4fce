#pragma once

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "mbrl/dynamics.hpp"
#include "mbrl/env.hpp"
#include "mbrl/policy.hpp"

namespace mbrl {

/// Shortest decimal form that round-trips a double exactly.
std::string format_double(double v);

/// Line-delimited transition records: one "t s a r s' done" row per step
/// with comma-joined vectors; blank line between trajectories.
void save_trajectories(const std::string& path, const std::vector<Trajectory>& trajs);
std::vector<Trajectory> load_trajectories(const std::string& path);

/// Single-file network checkpoint: one JSON header line describing shapes,
/// then the flat parameter array as little-endian 64-bit floats.
void save_flat_checkpoint(const std::string& path, const nlohmann::json& header,
                          const Eigen::VectorXd& flat);
std::pair<nlohmann::json, Eigen::VectorXd> load_flat_checkpoint(const std::string& path);

void save_policy(const std::string& path, const GaussianPolicy& policy);
GaussianPolicy load_policy(const std::string& path);
void save_value(const std::string& path, const ValueNet& value);
ValueNet load_value(const std::string& path);

/// Ensemble checkpoints live in a directory: model_<k>.ckpt per member plus
/// normalizer.json.
void save_ensemble(const std::string& dir, const DynamicsEnsemble& ensemble);
DynamicsEnsemble load_ensemble(const std::string& dir, int n_members);

nlohmann::json normalizer_to_json(const Normalizer& norm);
Normalizer normalizer_from_json(const nlohmann::json& j);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace mbrl
