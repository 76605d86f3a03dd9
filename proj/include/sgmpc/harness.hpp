#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sgmpc/config.hpp"
#include "sgmpc/plant.hpp"
#include "sgmpc/uncertainty.hpp"

namespace sgmpc::harness {

struct RunFailure {
  int index = 0;  // trajectory index, -1 for batch-level setup failures
  std::string reason;
};

struct BatchResult {
  std::vector<plant::TrajectoryRecord> records;  // trajectory-index order
  std::vector<RunFailure> failures;
  bool infeasible_at_t0 = false;  // any run unsolvable at its first step
  // Null for the position baseline and when the terminal set is empty.
  std::shared_ptr<const uncertainty::PRSSchedule> schedule;
  std::vector<uncertainty::BudgetSegment> segments;  // as seen by the controller
};

// The per-phase error systems for a measurement cadence k: correction lands
// on the grid t = k, 2k, ... so phase k-1 carries the observer gain. The
// initial entry of the reachable-set schedule holds no correction, so the
// controller must not consume the t = 0 sample; run_batch records it only.
std::vector<uncertainty::ErrorSystem> cadence_phases(const Eigen::MatrixXd& K,
                                                     const Eigen::MatrixXd& L,
                                                     int every_k);

// Builds gains, budget segments (declared or identified), the reachable-set
// schedule and terminal set for the configured controller, then simulates
// n_trajectories closed loops in parallel. Each trajectory draws from the
// counter-based stream (seed, index); failures are recorded and the batch
// continues. Throws std::invalid_argument only for unusable configurations.
BatchResult run_batch(const ExperimentConfig& cfg);

// The schedule run_batch would certify against (null for the position
// baseline): lets metrics and plots be recomputed from records alone.
std::shared_ptr<const uncertainty::PRSSchedule> schedule_for(
    const ExperimentConfig& cfg);

struct MetricsReport {
  int n_runs = 0;
  int n_failures = 0;
  bool infeasible_at_t0 = false;
  // Containment of xi_t = (x_t - z_t, u_t - v_t) in the scheduled set at t
  // (the final step pads the input residual with zeros). NaN without a
  // schedule.
  double acp = std::numeric_limits<double>::quiet_NaN();
  double mcp_min = std::numeric_limits<double>::quiet_NaN();
  double mcp_max = std::numeric_limits<double>::quiet_NaN();
  double break_ratio = std::numeric_limits<double>::quiet_NaN();
  // Worst signed breach (m -> reported in mm) over breakthrough plane, tip
  // funnel and head funnel at the final pose; negative = margin in hand.
  double distance_mean_mm = std::numeric_limits<double>::quiet_NaN();
  double distance_std_mm = std::numeric_limits<double>::quiet_NaN();
  std::array<int, 5> gr_counts{};  // grades A..E of the final-pose breach
  double iou_mean = std::numeric_limits<double>::quiet_NaN();
  double iou_std_error = std::numeric_limits<double>::quiet_NaN();
  double feasibility_rate = std::numeric_limits<double>::quiet_NaN();
  long long fallback_count = 0;
};

// Every number is recomputable from the records alone (plus the schedule
// rebuilt from the configuration); the overlap sampler is seeded from each
// record, so the report is independent of record order and process state.
MetricsReport compute_metrics(const std::vector<plant::TrajectoryRecord>& records,
                              const uncertainty::PRSSchedule* schedule,
                              const ExperimentConfig& cfg);

// ---- outputs ---------------------------------------------------------------

std::string metrics_csv(const MetricsReport& report, const ExperimentConfig& cfg);

// records.ndjson, metrics.csv, config-resolved.json and (when enabled)
// plot.svg under dir, which is created if missing.
void emit_outputs(const BatchResult& batch, const MetricsReport& report,
                  const ExperimentConfig& cfg, const std::string& dir);

std::vector<plant::TrajectoryRecord> read_records(const std::string& path);

// 2-d projection of a joint (state, input) error set onto two coordinates.
sets::SetExpr project2(const sets::SetExpr& s, Eigen::Index i, Eigen::Index j);

// Closed polygon of support points of a 2-d set: every vertex lies on the
// boundary (gauge 1 for full-dimensional sets).
std::vector<Eigen::Vector2d> set_outline(const sets::SetExpr& s, int n_points);

std::string render_plot_svg(const BatchResult& batch, const ExperimentConfig& cfg);

}  // namespace sgmpc::harness
