#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sgmpc/rng.hpp"
#include "sgmpc/sets.hpp"
#include "sgmpc/uncertainty.hpp"

namespace sgmpc::plant {

// Periodic anatomy displacement; the task-space disturbance inherits its
// per-step difference. Either an analytic sinusoid (amplitude, period, phase)
// or a sampled waveform loaded from CSV.
struct Breathing {
  Eigen::VectorXd amplitude;   // per-axis peak (m); empty = no breathing
  double period = 4.0;         // s
  double phase = 0.0;          // rad
  std::vector<double> time_s;  // waveform sample times; empty = sinusoid mode
  Eigen::MatrixXd samples;     // 3 x N sampled displacement (m), file mode

  bool from_file() const { return !time_s.empty(); }
  // Displacement at time t (s) as an n-vector (axes beyond the data are 0).
  // File mode interpolates linearly and holds the end values outside the
  // recorded range.
  Eigen::VectorXd displacement(double t, Eigen::Index n) const;
};

// CSV with header time_s,dx,dy,dz and strictly increasing time. Throws
// std::runtime_error on a missing file, a malformed row, a wrong header, or
// non-monotone time.
Breathing load_waveform(const std::string& path);

struct SensorConfig {
  enum class BiasKind { kConstant, kSinusoidInM, kPiecewise };
  int every_k = 1;               // emit a measurement every k-th step
  BiasKind bias_kind = BiasKind::kConstant;
  Eigen::VectorXd bias_outside;  // constant value / sinusoid amplitude /
                                 // value before the group boundary
  Eigen::VectorXd bias_inside;   // piecewise value from the boundary on
  double bias_period = 8.0;      // s, sinusoid bias only
  uncertainty::NoiseModel epsilon;
};

struct PlantConfig {
  int T = 200;
  double dt = 0.1;
  int group_boundary = 140;  // step index where the bias regime switches
  Breathing breathing;
  uncertainty::NoiseModel force;  // random disturbance-force part of w
  SensorConfig sensor;
  Eigen::VectorXd mu0;
  double sigma0 = 0.0;
  uncertainty::NoiseBudget budget;  // declared (W, M, Sigma_eps)

  Eigen::Index dim() const { return mu0.size(); }
  // Dimension consistency; realized-bias membership in M; for bounded force
  // kinds, a per-axis check that the breathing difference plus the force
  // bound fits inside W (refused otherwise); Sigma_eps must dominate the
  // sensor noise proxy. Throws std::invalid_argument.
  void validate() const;
};

struct StepOutcome {
  Eigen::VectorXd x_next;
  Eigen::VectorXd w;
  bool clipped = false;
};

// x_{t+1} = x_t + u_t + w_t where w_t is the breathing displacement
// difference over the step plus a random force draw, clipped into W. A clip
// is reported, never silent: it means the declared budget does not cover the
// configured disturbance.
StepOutcome plant_step(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                       int t, const PlantConfig& cfg, Rng& rng);

// y_t = x_t + m_t + eps_t on the measurement grid (steps with t % k == 0);
// empty otherwise. Throws std::logic_error if the configured bias leaves the
// declared M (hard budget assertion).
std::optional<Eigen::VectorXd> sense(const Eigen::VectorXd& x, int t,
                                     const PlantConfig& cfg, Rng& rng);

// The realized measurement bias at step t (deterministic).
Eigen::VectorXd bias_at(int t, const PlantConfig& cfg);

// mu0 + sigma0 * standard normal draw.
Eigen::VectorXd draw_initial_state(const PlantConfig& cfg, Rng& rng);

// Everything needed to replay and re-score one closed-loop run.
struct TrajectoryRecord {
  Eigen::MatrixXd x;      // n x (T+1) true states
  Eigen::MatrixXd x_hat;  // n x (T+1) estimates
  Eigen::MatrixXd z;      // n x (T+1) nominal states
  Eigen::MatrixXd u;      // n x T applied inputs
  Eigen::MatrixXd v;      // n x T nominal inputs
  Eigen::MatrixXd y;      // n x (T+1), meaningful where has_y
  std::vector<bool> has_y;     // size T+1
  std::vector<bool> feasible;  // size T
  std::vector<bool> fallback;  // size T
  std::vector<int> clip_events;
  std::string schedule_id;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;

  int horizon() const { return int(u.cols()); }
  void validate() const;  // length consistency, throws std::invalid_argument
};

nlohmann::json to_json(const TrajectoryRecord& r);
TrajectoryRecord record_from_json(const nlohmann::json& j);

}  // namespace sgmpc::plant
