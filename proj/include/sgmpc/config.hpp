#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>
#include <json.hpp>

#include "sgmpc/constraints.hpp"
#include "sgmpc/controller.hpp"
#include "sgmpc/plant.hpp"

namespace sgmpc::harness {

// Identification directive: when present, the controller budget is estimated
// from dedicated identification runs instead of the declared plant budget.
struct BudgetEstimateSpec {
  int runs = 10;       // identification trajectories
  int segments = 6;    // residual blocks per group for the bias hull
  double inflation = 1.1;
  double mgf_tol = 0.1;
};

struct ControllerConfig {
  controller::ControllerKind kind = controller::ControllerKind::kOurs;
  double delta = 0.01;
  int horizon = 15;
  Eigen::VectorXd q_diag;      // state weights, size n
  double r_scale = 0.1;        // R = r_scale * I
  double observer_gain = 0.99; // L = observer_gain * I
  double standoff = 0.005;     // goal = (-standoff, 0, ..., 0)
  double robust_k = 3.0;       // box width multiplier of the robust baseline
  double feed_speed = 0.002;   // per-step feed of the position baseline
  int max_sqp_iterations = 5;
  double qp_eps = 1e-8;
  constraints::FunnelParams funnel;
  constraints::OperatingBox box;
};

struct MetricsConfig {
  double screw_radius = 0.002;     // cylinder radius for the overlap metric
  long long iou_samples = 200000;  // Monte-Carlo points per overlap estimate
};

struct ExperimentConfig {
  std::string name = "experiment";
  int n_trajectories = 100;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  bool plots = true;
  int threads = 0;  // 0 = hardware concurrency
  plant::PlantConfig plant;
  std::optional<BudgetEstimateSpec> estimate;
  ControllerConfig controller;
  MetricsConfig metrics;

  void validate() const;  // throws std::invalid_argument
};

// The drilling experiment with every field at its documented default.
ExperimentConfig default_config();

// Canonical serialization: every field emitted, keys sorted by nlohmann.
nlohmann::json to_json(const ExperimentConfig& cfg);

// Strict parse on top of default_config(): unknown keys are rejected by
// name, missing keys keep their defaults. Throws std::invalid_argument.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

std::uint64_t fnv1a(std::string_view bytes);
// FNV-1a over the canonical dump of the fully resolved configuration.
std::uint64_t config_hash(const ExperimentConfig& cfg);

controller::ControllerKind controller_kind_from_string(const std::string& s);

}  // namespace sgmpc::harness
