#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sgmpc/constraints.hpp"
#include "sgmpc/qp.hpp"
#include "sgmpc/sets.hpp"
#include "sgmpc/uncertainty.hpp"

namespace sgmpc::controller {

struct Gains {
  Eigen::MatrixXd K;  // feedback, u = K(x_hat - z) + v
  Eigen::MatrixXd L;  // observer gain
  Eigen::MatrixXd P;  // terminal weight: Lyapunov solution for A+BK
  Eigen::MatrixXd Q, R;
};

// K from the discrete algebraic Riccati equation by fixed-point iteration
// (residual 1e-10), K = -(R + B'SB)^{-1} B'SA; P from the discrete Lyapunov
// equation for A+BK with weight Q + K'RK via a Kronecker solve (residual
// checked to 1e-9). L is taken as given. Throws std::invalid_argument when
// R is not positive definite, Q has a negative eigenvalue, the iteration
// diverges or stalls, or A+BK is not Schur stable (e.g. Q = 0 on an identity
// plant leaves K = 0).
Gains design_gains(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                   const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                   const Eigen::MatrixXd& L_config);

// Steady-state Kalman gain from the dual Riccati fixed point (residual
// 1e-10): for configs that request a designed observer instead of a fixed L.
Eigen::MatrixXd kalman_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C,
                            const Eigen::MatrixXd& W_cov,
                            const Eigen::MatrixXd& V_cov);

// Observer and nominal-state pair. z starts at the initial-state mean.
struct ControllerState {
  int t = 0;
  Eigen::VectorXd z;      // nominal state
  Eigen::VectorXd x_hat;  // estimate (prediction until a measurement arrives)
  Eigen::MatrixXd v_plan;  // m x H, latest accepted plan
  bool has_plan = false;
  Eigen::VectorXd qp_warm_x, qp_warm_y;
};

ControllerState make_controller_state(const Eigen::VectorXd& mu0);

// x_hat corrected by the arriving measurement, then both states advanced:
//   x_hat+ = x_hat + u + L(y_next - x_hat - u),   z+ = z + v.
// Without a measurement the update is the pure prediction x_hat + u.
ControllerState observer_update(const ControllerState& s,
                                const Eigen::VectorXd& u,
                                const Eigen::VectorXd& v,
                                const std::optional<Eigen::VectorXd>& y_next,
                                const Eigen::MatrixXd& L);

// Terminal region {z : |P^{1/2}(z - goal)| <= alpha}, invariant under the
// terminal law v = K(z - goal) because rho = |P^{1/2}(A+BK)P^{-1/2}|_2 < 1.
struct TerminalSet {
  double alpha = std::numeric_limits<double>::infinity();
  double rho = 0.0;
  Eigen::VectorXd goal;
  Eigen::MatrixXd P_sqrt;

  bool bounded() const { return std::isfinite(alpha); }
  double gauge(const Eigen::VectorXd& z) const;  // |P^{1/2}(z - goal)|
};

// Largest alpha such that every point z of the ellipsoid, driven by the
// terminal law, satisfies all constraints tightened by each steady-state
// error set: curved funnel rows are re-tightened around the goal with the
// alpha-ball folded into the error set (so the second-order allowance grows
// with alpha), linear extra rows use the closed-form ellipsoid support.
// `linear_rows` carry their pre-applied margin; their support over the error
// sets is added here. No constraints at all yields the +infinity sentinel.
// Throws std::runtime_error naming the failing row when alpha <= 0 (empty
// terminal set: the tightened problem is infeasible by construction).
TerminalSet build_terminal_set(
    const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Gains& g,
    const std::vector<sets::SetExpr>& steady_errors,
    const Eigen::VectorXd& goal,
    const std::optional<constraints::FunnelParams>& funnel,
    const std::optional<constraints::OperatingBox>& box,
    const std::vector<constraints::TightenedConstraint>& linear_rows = {});

// Receding-horizon problem description for the identity plant x+ = x + u.
// Constraint rows bind the nominal pair (z_i, v_i) tightened by the error
// set at absolute time t+i; the cost steers the certainty-equivalent states
// toward `goal`. `extra_rows` are raw halfspaces over (state, input) whose
// margin is the per-step error-set support along their normal; `u_bar`
// provides plain input rows when no funnel is configured (the funnel's own
// u_bar is used otherwise).
struct MpcProblem {
  int H = 15;
  Eigen::VectorXd goal;
  std::optional<constraints::FunnelParams> funnel;
  std::optional<constraints::OperatingBox> box;  // required with funnel
  Eigen::VectorXd u_bar;  // used when funnel is absent; empty = unbounded
  std::vector<constraints::TightenedConstraint> extra_rows;
  TerminalSet terminal;
  qp::QpOptions qp_options;
  double accept_tol = 1e-6;
  int max_sqp_iterations = 5;

  void validate(Eigen::Index n) const;  // throws std::invalid_argument
};

struct MpcDiagnostics {
  bool feasible = false;       // a plan passing the nonlinear check exists
  bool used_fallback = false;  // shifted previous plan + terminal law applied
  int sqp_iterations = 0;
  int qp_iterations = 0;
  double max_violation = 0.0;  // at the returned plan
  std::vector<std::string> failed;  // row labels behind an infeasible verdict
};

struct MpcResult {
  Eigen::MatrixXd v;  // m x H
  MpcDiagnostics diag;
};

// Sequential linearize-and-tighten around the previous iterate, each inner
// problem a condensed dense QP over the stacked v variables. A candidate is
// accepted only when the re-tightened nonlinear rows hold at its own
// trajectory to accept_tol; otherwise the solver backtracks toward the
// shifted previous plan, and failing that applies it outright (logged as a
// fallback). `schedule` may be null: all error sets are then singletons.
// Mutates only the warm-start members of s; z, x_hat and the stored plan are
// left to control_step.
MpcResult solve_mpc(ControllerState& s,
                    const uncertainty::PRSSchedule* schedule, const Gains& g,
                    const MpcProblem& prob);

// The shifted previous plan with the terminal law appended: the standard
// feasibility candidate. Requires s.has_plan.
Eigen::MatrixXd shifted_plan(const ControllerState& s, const Gains& g,
                             const Eigen::VectorXd& goal);

// One closed-loop step: correct x_hat with the arriving measurement (skipped
// for the delayed-feedback variant, whose schedule already carries the
// enlarged inter-measurement budget), solve, apply u = K(x_hat - z) + v*_0,
// advance z and the x_hat prediction, keep the plan for warm starting.
struct StepResult {
  Eigen::VectorXd u;
  MpcDiagnostics diag;
};

StepResult control_step(ControllerState& s,
                        const std::optional<Eigen::VectorXd>& y,
                        const uncertainty::PRSSchedule* schedule,
                        const Gains& g, const MpcProblem& prob);

// Baseline selection. gaussian: chi-square calibrated ellipsoids, bias sets
// dropped; zero_mean_subgaussian: bias sets dropped, sub-Gaussian radius
// kept; robust: the measurement proxy replaced by a k*sqrt(diag) box folded
// into the bias recursion, no stochastic part; position: constant feed
// toward the origin of the estimated state, no reachable sets at all.
enum class ControllerKind {
  kOurs,
  kGaussian,
  kZeroMeanSubgaussian,
  kRobust,
  kPosition,
};

std::string to_string(ControllerKind k);

// The uncertainty description a baseline actually certifies against.
uncertainty::NoiseBudget baseline_budget(
    ControllerKind kind, const uncertainty::NoiseBudget& declared,
    double robust_k = 3.0);
bool baseline_uses_chi_square(ControllerKind kind);

// Fixed-magnitude feed of the estimated position toward the origin plus a
// proportional recentering of the angles, everything clipped to u_bar.
Eigen::VectorXd position_control(const Eigen::VectorXd& x_hat,
                                 const Eigen::VectorXd& u_bar,
                                 double feed_speed);

}  // namespace sgmpc::controller
