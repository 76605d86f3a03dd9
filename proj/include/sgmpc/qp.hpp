#pragma once

#include <Eigen/Dense>

namespace sgmpc::qp {

// minimize 0.5 x'Px + q'x  subject to  l <= Ax <= u  and  |Cx + d| <= radius.
// P must be PSD (it is symmetrized internally). A may have zero rows and the
// ball block is absent when C has zero rows. Entries of l/u may be +-inf.
struct Problem {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd A;
  Eigen::VectorXd l, u;
  Eigen::MatrixXd C;
  Eigen::VectorXd d;
  double radius = 0.0;

  Eigen::Index vars() const { return q.size(); }
  Eigen::Index box_rows() const { return A.rows(); }
  Eigen::Index ball_rows() const { return C.rows(); }
  void validate() const;  // throws std::invalid_argument
};

enum class QpStatus { kSolved, kPrimalInfeasible, kMaxIterations };

// Dual convention: stationarity P x + q + A'y_box + C'y_ball = 0 with
// y_box >= 0 on active upper bounds and <= 0 on active lower bounds.
struct QpResult {
  QpStatus status = QpStatus::kMaxIterations;
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // box duals then ball duals
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

struct QpOptions {
  double rho = 0.1;       // ADMM step (adapted during the run)
  double sigma = 1e-6;    // proximal regularization
  double relax = 1.6;     // over-relaxation
  double eps = 1e-8;      // absolute primal/dual residual tolerance
  int max_iterations = 100000;
  int check_interval = 25;
};

// Operator-splitting solve with row equilibration and warm starting. A
// diverging dual sequence yields a primal-infeasibility certificate; bound
// pairs with l > u short-circuit to the same status.
QpResult solve_qp(const Problem& p, const QpOptions& opt = {},
                  const Eigen::VectorXd* warm_x = nullptr,
                  const Eigen::VectorXd* warm_y = nullptr);

}  // namespace sgmpc::qp
