#include "sgmpc/controller.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace sgmpc::controller {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// box rows are shrunk by a hair so accepted iterates stay strictly inside the
// linearization region
constexpr double kBoxShrink = 1e-7;

void check_square(const Eigen::MatrixXd& m, Eigen::Index n, const char* name) {
  if (m.rows() != n || m.cols() != n)
    throw std::invalid_argument(std::string(name) + ": expected " +
                                std::to_string(n) + "x" + std::to_string(n));
}

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

}  // namespace

Gains design_gains(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                   const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                   const Eigen::MatrixXd& L_config) {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  if (A.cols() != n || B.rows() != n)
    throw std::invalid_argument("design_gains: A must be square and B match");
  check_square(Q, n, "design_gains: Q");
  check_square(R, m, "design_gains: R");
  {
    Eigen::LLT<Eigen::MatrixXd> llt(symmetrized(R));
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("design_gains: R must be positive definite");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrized(Q));
    const double top = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < -1e-9 * top)
      throw std::invalid_argument(
          "design_gains: Q must be positive semidefinite");
  }

  Eigen::MatrixXd S = symmetrized(Q);
  double residual = kInf;
  for (int it = 0; it < 100000 && residual > 1e-10; ++it) {
    const Eigen::MatrixXd gain =
        (R + B.transpose() * S * B).ldlt().solve(B.transpose() * S * A);
    const Eigen::MatrixXd Sn =
        symmetrized(Q + A.transpose() * S * (A - B * gain));
    residual = (Sn - S).cwiseAbs().maxCoeff();
    S = Sn;
    if (!S.allFinite() || S.cwiseAbs().maxCoeff() > 1e100)
      throw std::invalid_argument(
          "design_gains: Riccati iteration diverges; (A, B) is not "
          "stabilizable under this cost");
  }
  if (residual > 1e-10)
    throw std::invalid_argument(
        "design_gains: Riccati iteration stalled at residual " +
        std::to_string(residual));

  Gains g;
  g.Q = symmetrized(Q);
  g.R = symmetrized(R);
  g.K = -(R + B.transpose() * S * B)
             .ldlt()
             .solve(B.transpose() * S * A)
             .eval();
  const Eigen::MatrixXd Acl = A + B * g.K;
  const double sr = Acl.eigenvalues().cwiseAbs().maxCoeff();
  if (sr >= 1.0 - 1e-12)
    throw std::invalid_argument(
        "design_gains: A + BK is not Schur stable (spectral radius " +
        std::to_string(sr) + "); this cost does not stabilize the plant");

  // P = Acl' P Acl + Q + K'RK, solved exactly through the Kronecker form
  const Eigen::MatrixXd W = symmetrized(Q + g.K.transpose() * R * g.K);
  const Eigen::MatrixXd At = Acl.transpose();
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      lhs.block(i * n, j * n, n, n) -= At(i, j) * At;
  const Eigen::VectorXd w_vec =
      Eigen::Map<const Eigen::VectorXd>(W.data(), n * n);
  const Eigen::VectorXd p_vec = lhs.partialPivLu().solve(w_vec);
  g.P = symmetrized(Eigen::Map<const Eigen::MatrixXd>(p_vec.data(), n, n));
  const double lyap_res =
      (At * g.P * Acl + W - g.P).cwiseAbs().maxCoeff();
  if (lyap_res > 1e-9)
    throw std::invalid_argument(
        "design_gains: Lyapunov residual " + std::to_string(lyap_res));

  if (L_config.size() == 0)
    g.L = 0.99 * Eigen::MatrixXd::Identity(n, n);
  else if (L_config.rows() != n)
    throw std::invalid_argument("design_gains: L has wrong row count");
  else
    g.L = L_config;
  return g;
}

Eigen::MatrixXd kalman_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C,
                            const Eigen::MatrixXd& W_cov,
                            const Eigen::MatrixXd& V_cov) {
  const Eigen::Index n = A.rows();
  const Eigen::Index p = C.rows();
  if (A.cols() != n || C.cols() != n)
    throw std::invalid_argument("kalman_gain: A/C dimensions");
  check_square(W_cov, n, "kalman_gain: W");
  check_square(V_cov, p, "kalman_gain: V");
  if (Eigen::LLT<Eigen::MatrixXd>(symmetrized(V_cov)).info() != Eigen::Success)
    throw std::invalid_argument("kalman_gain: V must be positive definite");

  Eigen::MatrixXd Sig = symmetrized(W_cov);
  double residual = kInf;
  for (int it = 0; it < 100000 && residual > 1e-10; ++it) {
    const Eigen::MatrixXd innov = C * Sig * C.transpose() + V_cov;
    const Eigen::MatrixXd gain = innov.ldlt().solve(C * Sig * A.transpose());
    const Eigen::MatrixXd Sn = symmetrized(
        A * Sig * A.transpose() + W_cov -
        (A * Sig * C.transpose()) * gain);
    residual = (Sn - Sig).cwiseAbs().maxCoeff();
    Sig = Sn;
    if (!Sig.allFinite() || Sig.cwiseAbs().maxCoeff() > 1e100)
      throw std::invalid_argument("kalman_gain: dual iteration diverges");
  }
  if (residual > 1e-10)
    throw std::invalid_argument("kalman_gain: dual iteration stalled");
  const Eigen::MatrixXd innov = C * Sig * C.transpose() + V_cov;
  return innov.ldlt().solve(C * Sig).transpose();
}

ControllerState make_controller_state(const Eigen::VectorXd& mu0) {
  ControllerState s;
  s.z = mu0;
  s.x_hat = mu0;
  return s;
}

ControllerState observer_update(const ControllerState& s,
                                const Eigen::VectorXd& u,
                                const Eigen::VectorXd& v,
                                const std::optional<Eigen::VectorXd>& y_next,
                                const Eigen::MatrixXd& L) {
  ControllerState out = s;
  const Eigen::VectorXd pred = s.x_hat + u;
  out.x_hat = y_next ? (pred + L * (*y_next - pred)).eval() : pred;
  out.z = s.z + v;
  out.t = s.t + 1;
  return out;
}

double TerminalSet::gauge(const Eigen::VectorXd& z) const {
  return (P_sqrt * (z - goal)).norm();
}

TerminalSet build_terminal_set(
    const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Gains& g,
    const std::vector<sets::SetExpr>& steady_errors,
    const Eigen::VectorXd& goal,
    const std::optional<constraints::FunnelParams>& funnel,
    const std::optional<constraints::OperatingBox>& box,
    const std::vector<constraints::TightenedConstraint>& linear_rows) {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = g.K.rows();
  if (goal.size() != n)
    throw std::invalid_argument("build_terminal_set: goal dimension");
  if (funnel && !box)
    throw std::invalid_argument(
        "build_terminal_set: a funnel needs an operating box");

  TerminalSet ts;
  ts.goal = goal;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrized(g.P));
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw std::runtime_error("build_terminal_set: terminal weight singular");
  const Eigen::VectorXd sq = es.eigenvalues().cwiseSqrt();
  ts.P_sqrt = es.eigenvectors() * sq.asDiagonal() * es.eigenvectors().transpose();
  const Eigen::MatrixXd P_sqrt_inv = es.eigenvectors() *
                                     sq.cwiseInverse().asDiagonal() *
                                     es.eigenvectors().transpose();
  const Eigen::MatrixXd Acl = A + B * g.K;
  ts.rho = (ts.P_sqrt * Acl * P_sqrt_inv)
               .jacobiSvd()
               .singularValues()
               .maxCoeff();
  if (ts.rho >= 1.0 - 1e-12)
    throw std::runtime_error(
        "build_terminal_set: no contraction in the terminal norm (rho = " +
        std::to_string(ts.rho) + ")");

  std::vector<sets::SetExpr> errs = steady_errors;
  if (errs.empty()) errs.push_back(sets::SetExpr::point(
      Eigen::VectorXd::Zero(n + m)));
  for (const auto& e : errs)
    if (e.dim() != n + m)
      throw std::invalid_argument(
          "build_terminal_set: error sets must live over (state, input)");

  if (!funnel && linear_rows.empty()) return ts;  // alpha stays +infinity

  // terminal points are goal + dz with |P^{1/2} dz| <= alpha, driven by
  // v = K dz; their joint offset from (goal, 0) is [I; K] dz plus the error
  Eigen::MatrixXd M(n + m, n);
  M.topRows(n) = Eigen::MatrixXd::Identity(n, n);
  M.bottomRows(m) = g.K;
  Eigen::VectorXd joint_goal = Eigen::VectorXd::Zero(n + m);
  joint_goal.head(n) = goal;

  // closed-form level for the linear halfspaces
  double alpha_linear = kInf;
  std::vector<std::string> failing;
  for (const auto& row : linear_rows) {
    if (row.normal.size() != n + m)
      throw std::invalid_argument("build_terminal_set: linear row dimension");
    const double dirn =
        (P_sqrt_inv *
         (row.normal.head(n) + g.K.transpose() * row.normal.tail(m)))
            .norm();
    for (const auto& e : errs) {
      const double room = row.offset - row.margin - e.support(row.normal) -
                          row.normal.dot(joint_goal);
      if (dirn <= 1e-300) {
        if (room < 0.0) failing.push_back(row.label());
      } else {
        alpha_linear = std::min(alpha_linear, room / dirn);
      }
    }
  }

  const auto funnel_ok = [&](double alpha,
                             std::vector<std::string>* labels) -> bool {
    if (!funnel) return true;
    bool ok = true;
    for (const auto& e : errs) {
      const sets::Ellipsoid ball{Eigen::VectorXd::Zero(n),
                                 alpha * P_sqrt_inv};
      const sets::Ellipsoid mapped =
          sets::affine_map(M, ball, Eigen::VectorXd::Zero(n + m));
      sets::SetExpr err;
      err.n = n + m;
      err.ellipsoid = e.ellipsoid
                          ? sets::minkowski_outer(mapped, *e.ellipsoid)
                          : mapped;
      err.zonotope = e.zonotope;
      const auto rows =
          constraints::linearize_and_tighten(goal, err, *funnel, *box);
      for (const auto& r : rows) {
        if (r.normal.dot(joint_goal) > r.tightened_offset()) {
          ok = false;
          if (labels) labels->push_back(r.label());
        }
      }
      if (!ok && !labels) return false;
    }
    return ok;
  };

  constexpr double kAlphaMin = 1e-8;
  double alpha_funnel = kInf;
  if (funnel) {
    if (!funnel_ok(kAlphaMin, &failing) || alpha_linear < kAlphaMin) {
      std::string what =
          "build_terminal_set: terminal set is empty; the setpoint cannot "
          "satisfy the steady-state tightened constraints (";
      std::vector<std::string> uniq = failing;
      std::sort(uniq.begin(), uniq.end());
      uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
      for (std::size_t i = 0; i < uniq.size(); ++i)
        what += (i ? ", " : "") + uniq[i];
      throw std::runtime_error(what + ")");
    }
    double lo = kAlphaMin, hi = 1e-4;
    while (funnel_ok(hi, nullptr) && hi < 1e6) {
      lo = hi;
      hi *= 2.0;
    }
    if (hi >= 1e6) {
      alpha_funnel = lo;
    } else {
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (funnel_ok(mid, nullptr) ? lo : hi) = mid;
      }
      alpha_funnel = lo;
    }
  } else if (alpha_linear < kAlphaMin) {
    std::string what = "build_terminal_set: terminal set is empty (";
    for (std::size_t i = 0; i < linear_rows.size(); ++i)
      what += (i ? ", " : "") + linear_rows[i].label();
    throw std::runtime_error(what + ")");
  }

  ts.alpha = std::min(alpha_linear, alpha_funnel);
  if (!std::isfinite(ts.alpha) || ts.alpha < kAlphaMin)
    throw std::runtime_error("build_terminal_set: terminal set is empty");
  return ts;
}

void MpcProblem::validate(Eigen::Index n) const {
  if (H < 1) throw std::invalid_argument("MpcProblem: H must be >= 1");
  if (goal.size() != n) throw std::invalid_argument("MpcProblem: goal size");
  if (funnel) {
    if (!box)
      throw std::invalid_argument("MpcProblem: a funnel needs a box");
    funnel->validate();
    box->validate();
    if (funnel->u_bar.size() != n)
      throw std::invalid_argument("MpcProblem: funnel u_bar size");
  }
  if (u_bar.size() != 0 && u_bar.size() != n)
    throw std::invalid_argument("MpcProblem: u_bar size");
  for (const auto& r : extra_rows)
    if (r.normal.size() != 2 * n)
      throw std::invalid_argument("MpcProblem: extra row dimension");
  if (max_sqp_iterations < 1)
    throw std::invalid_argument("MpcProblem: need at least one iteration");
}

namespace {

// one tightened halfspace bound to planning step i: normal.(z_i, v_i) <= bound
struct QpRow {
  int i = 0;
  Eigen::VectorXd normal;
  double bound = 0.0;
  std::string label;
};

std::vector<Eigen::VectorXd> rollout(const Eigen::VectorXd& z0,
                                     const Eigen::MatrixXd& V) {
  std::vector<Eigen::VectorXd> z(std::size_t(V.cols()) + 1);
  z[0] = z0;
  for (Eigen::Index i = 0; i < V.cols(); ++i) z[std::size_t(i) + 1] = z[std::size_t(i)] + V.col(i);
  return z;
}

Eigen::VectorXd clamp_into(const constraints::OperatingBox& box,
                           const Eigen::VectorXd& x) {
  return x.cwiseMax(box.lo).cwiseMin(box.hi);
}

std::vector<QpRow> rows_for_traj(const std::vector<Eigen::VectorXd>& z,
                                 int t,
                                 const uncertainty::PRSSchedule* schedule,
                                 const MpcProblem& prob, Eigen::Index n) {
  std::vector<QpRow> out;
  const sets::SetExpr zero_err = sets::SetExpr::point(
      Eigen::VectorXd::Zero(2 * n));
  for (int i = 0; i < prob.H; ++i) {
    const sets::SetExpr& err =
        schedule ? schedule->at(t + i).total : zero_err;
    if (prob.funnel) {
      const Eigen::VectorXd x_ref = clamp_into(*prob.box, z[std::size_t(i)]);
      for (const auto& r : constraints::linearize_and_tighten(
               x_ref, err, *prob.funnel, *prob.box))
        out.push_back({i, r.normal, r.tightened_offset(), r.label()});
    } else if (prob.u_bar.size() > 0) {
      for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::VectorXd plus = Eigen::VectorXd::Zero(2 * n);
        plus(n + j) = 1.0;
        out.push_back({i, plus, prob.u_bar(j) - err.support(plus),
                       "u+" + std::to_string(j)});
        Eigen::VectorXd minus = Eigen::VectorXd::Zero(2 * n);
        minus(n + j) = -1.0;
        out.push_back({i, minus, prob.u_bar(j) - err.support(minus),
                       "u-" + std::to_string(j)});
      }
    }
    if (prob.box && i >= 1) {
      for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::VectorXd plus = Eigen::VectorXd::Zero(2 * n);
        plus(j) = 1.0;
        out.push_back({i, plus, prob.box->hi(j) - kBoxShrink, "box"});
        Eigen::VectorXd minus = Eigen::VectorXd::Zero(2 * n);
        minus(j) = -1.0;
        out.push_back({i, minus, -(prob.box->lo(j) + kBoxShrink), "box"});
      }
    }
    for (const auto& r : prob.extra_rows)
      out.push_back(
          {i, r.normal, r.offset - r.margin - err.support(r.normal),
           r.label()});
  }
  return out;
}

struct Violation {
  double value = 0.0;
  std::vector<std::string> labels;
};

Violation check_plan(const Eigen::MatrixXd& V, const Eigen::VectorXd& z0,
                     int t, const uncertainty::PRSSchedule* schedule,
                     const MpcProblem& prob, Eigen::Index n) {
  Violation out;
  const auto z = rollout(z0, V);
  if (prob.box) {
    for (int i = 0; i < prob.H; ++i)
      if (!prob.box->contains(z[std::size_t(i)], 1e-9)) {
        out.value = kInf;
        out.labels = {"box"};
        return out;
      }
  }
  double worst = -kInf;
  std::string worst_label;
  for (const auto& row : rows_for_traj(z, t, schedule, prob, n)) {
    Eigen::VectorXd point(2 * n);
    point.head(n) = z[std::size_t(row.i)];
    point.tail(n) = V.col(row.i);
    const double v = row.normal.dot(point) - row.bound;
    if (v > worst) {
      worst = v;
      worst_label = row.label;
    }
  }
  if (prob.terminal.bounded()) {
    const double v = prob.terminal.gauge(z[std::size_t(prob.H)]) -
                     prob.terminal.alpha;
    if (v > worst) {
      worst = v;
      worst_label = "terminal";
    }
  }
  if (std::isfinite(worst)) {
    out.value = std::max(0.0, worst);
    if (worst > 0.0) out.labels = {worst_label};
  }
  return out;
}

}  // namespace

Eigen::MatrixXd shifted_plan(const ControllerState& s, const Gains& g,
                             const Eigen::VectorXd& goal) {
  if (!s.has_plan)
    throw std::logic_error("shifted_plan: no previous plan to shift");
  const Eigen::Index H = s.v_plan.cols();
  Eigen::MatrixXd out(s.v_plan.rows(), H);
  Eigen::VectorXd z = s.z;
  for (Eigen::Index j = 0; j + 1 < H; ++j) {
    out.col(j) = s.v_plan.col(j + 1);
    z += out.col(j);
  }
  out.col(H - 1) = g.K * (z - goal);
  return out;
}

MpcResult solve_mpc(ControllerState& s,
                    const uncertainty::PRSSchedule* schedule, const Gains& g,
                    const MpcProblem& prob) {
  const Eigen::Index n = s.z.size();
  prob.validate(n);
  if (g.K.rows() != n || g.K.cols() != n)
    throw std::invalid_argument("solve_mpc: identity plant needs square K");
  const int H = prob.H;
  const Eigen::Index nv = Eigen::Index(H) * n;

  MpcResult res;
  res.v = Eigen::MatrixXd::Zero(n, H);

  // initial-state membership in the linearization region is a hard premise
  if (prob.box && !prob.box->contains(s.z, 1e-9)) {
    res.diag.failed = {"box"};
    res.diag.max_violation = kInf;
    return res;
  }

  // the Theorem-1 style candidate: shifted previous plan + terminal law
  Eigen::MatrixXd V_shift;
  bool shift_ok = false;
  double shift_viol = kInf;
  if (s.has_plan && s.v_plan.cols() == H) {
    V_shift = shifted_plan(s, g, prob.goal);
    const Violation sv = check_plan(V_shift, s.z, s.t, schedule, prob, n);
    shift_viol = sv.value;
    shift_ok = sv.value <= prob.accept_tol;
  }

  // initial linearization trajectory
  Eigen::MatrixXd V_lin(n, H);
  if (s.has_plan && s.v_plan.cols() == H) {
    V_lin = V_shift;
  } else {
    const Eigen::VectorXd* ub = nullptr;
    if (prob.funnel)
      ub = &prob.funnel->u_bar;
    else if (prob.u_bar.size() > 0)
      ub = &prob.u_bar;
    Eigen::VectorXd z = s.z;
    for (int i = 0; i < H; ++i) {
      Eigen::VectorXd v = g.K * (z - prob.goal);
      if (ub) v = v.cwiseMax(-*ub).cwiseMin(*ub);
      V_lin.col(i) = v;
      z += v;
    }
  }

  // constant pieces of the condensed cost
  const Eigen::VectorXd e0 = s.x_hat - s.z;
  const Eigen::MatrixXd Acl = Eigen::MatrixXd::Identity(n, n) + g.K;
  std::vector<Eigen::VectorXd> c(std::size_t(H) + 1), d(std::size_t(H) + 1);
  d[0] = e0;
  for (int i = 0; i < H; ++i) d[std::size_t(i) + 1] = Acl * d[std::size_t(i)];
  for (int i = 0; i <= H; ++i)
    c[std::size_t(i)] = s.z - prob.goal + d[std::size_t(i)];

  Eigen::MatrixXd P_qp(nv, nv);
  for (int j = 0; j < H; ++j)
    for (int k = 0; k < H; ++k) {
      Eigen::MatrixXd blockm =
          double(H - 1 - std::max(j, k)) * g.Q + g.P;
      if (j == k) blockm += g.R;
      P_qp.block(j * n, k * n, n, n) = 2.0 * blockm;
    }
  Eigen::VectorXd q_qp(nv);
  {
    // suffix sums of Q c_i over i = j+1 .. H-1
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
    std::vector<Eigen::VectorXd> suffix(static_cast<std::size_t>(H));
    for (int j = H - 1; j >= 0; --j) {
      suffix[std::size_t(j)] = acc;
      acc += g.Q * c[std::size_t(j)];
    }
    for (int j = 0; j < H; ++j) {
      q_qp.segment(j * n, n) =
          2.0 * (suffix[std::size_t(j)] + g.P * c[std::size_t(H)] +
                 g.R * (g.K * d[std::size_t(j)]));
    }
  }

  const bool has_ball = prob.terminal.bounded();
  Eigen::MatrixXd C_ball(has_ball ? n : 0, nv);
  Eigen::VectorXd d_ball(has_ball ? n : 0);
  if (has_ball) {
    for (int j = 0; j < H; ++j)
      C_ball.block(0, j * n, n, n) = prob.terminal.P_sqrt;
    d_ball = prob.terminal.P_sqrt * (s.z - prob.goal);
  }

  int total_qp = 0;
  int iterations = 0;
  Eigen::MatrixXd V_cand;
  bool have_cand = false;
  Violation last{kInf, {}};
  bool qp_infeasible = false;

  Eigen::VectorXd warm_x = s.qp_warm_x, warm_y = s.qp_warm_y;

  for (int iter = 0; iter < prob.max_sqp_iterations; ++iter) {
    iterations = iter + 1;
    const auto traj = rollout(s.z, V_lin);
    const auto rows = rows_for_traj(traj, s.t, schedule, prob, n);

    // rows at i = 0 without an input part bind only the fixed z_0
    std::vector<std::string> const_fail;
    std::vector<const QpRow*> live;
    for (const auto& row : rows) {
      if (row.i == 0 && row.normal.tail(n).isZero(0.0)) {
        if (row.normal.head(n).dot(s.z) > row.bound + prob.accept_tol)
          const_fail.push_back(row.label);
      } else if (std::isfinite(row.bound)) {
        live.push_back(&row);
      }
    }
    if (!const_fail.empty()) {
      last = {kInf, const_fail};
      break;
    }

    qp::Problem qp;
    qp.P = P_qp;
    qp.q = q_qp;
    qp.A.resize(Eigen::Index(live.size()), nv);
    qp.A.setZero();
    qp.l = Eigen::VectorXd::Constant(Eigen::Index(live.size()), -kInf);
    qp.u.resize(Eigen::Index(live.size()));
    for (std::size_t r = 0; r < live.size(); ++r) {
      const QpRow& row = *live[r];
      for (int j = 0; j < row.i; ++j)
        qp.A.block(Eigen::Index(r), j * n, 1, n) =
            row.normal.head(n).transpose();
      qp.A.block(Eigen::Index(r), row.i * n, 1, n) +=
          row.normal.tail(n).transpose();
      qp.u(Eigen::Index(r)) = row.bound - row.normal.head(n).dot(s.z);
    }
    qp.C = C_ball;
    qp.d = d_ball;
    qp.radius = has_ball ? prob.terminal.alpha : 0.0;

    const qp::QpResult sol = qp::solve_qp(
        qp, prob.qp_options,
        warm_x.size() == nv ? &warm_x : nullptr,
        warm_y.size() == qp.A.rows() + qp.C.rows() ? &warm_y : nullptr);
    total_qp += sol.iterations;

    if (sol.status == qp::QpStatus::kPrimalInfeasible) {
      // name the most violated rows at the last iterate
      std::vector<std::pair<double, std::string>> v;
      for (std::size_t r = 0; r < live.size(); ++r) {
        const double lhs = qp.A.row(Eigen::Index(r)).dot(sol.x);
        v.push_back({lhs - qp.u(Eigen::Index(r)), live[r]->label});
      }
      if (has_ball)
        v.push_back({(C_ball * sol.x + d_ball).norm() - qp.radius,
                     "terminal"});
      std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
        return a.first > b.first;
      });
      std::vector<std::string> labels;
      for (const auto& it : v) {
        if (labels.size() >= 3 || it.first <= 0.0) break;
        if (std::find(labels.begin(), labels.end(), it.second) ==
            labels.end())
          labels.push_back(it.second);
      }
      if (labels.empty()) labels.push_back("qp");
      last = {kInf, labels};
      qp_infeasible = true;
      break;
    }

    warm_x = sol.x;
    warm_y = sol.y;
    V_cand = Eigen::Map<const Eigen::MatrixXd>(sol.x.data(), n, H);
    have_cand = true;
    last = check_plan(V_cand, s.z, s.t, schedule, prob, n);
    if (last.value <= prob.accept_tol) {
      s.qp_warm_x = warm_x;
      s.qp_warm_y = warm_y;
      res.v = V_cand;
      res.diag.feasible = true;
      res.diag.sqp_iterations = iterations;
      res.diag.qp_iterations = total_qp;
      res.diag.max_violation = last.value;
      return res;
    }
    V_lin = V_cand;
  }

  res.diag.sqp_iterations = iterations;
  res.diag.qp_iterations = total_qp;

  // backtrack toward the shifted previous plan
  if (have_cand && shift_ok && !qp_infeasible) {
    double tau = 0.5;
    for (int k = 0; k < 10; ++k, tau *= 0.5) {
      const Eigen::MatrixXd Vb = V_shift + tau * (V_cand - V_shift);
      const Violation v = check_plan(Vb, s.z, s.t, schedule, prob, n);
      if (v.value <= prob.accept_tol) {
        res.v = Vb;
        res.diag.feasible = true;
        res.diag.max_violation = v.value;
        return res;
      }
    }
  }
  if (shift_ok) {
    res.v = V_shift;
    res.diag.feasible = true;
    res.diag.used_fallback = true;
    res.diag.max_violation = shift_viol;
    return res;
  }

  res.diag.feasible = false;
  res.diag.max_violation = last.value;
  res.diag.failed = last.labels;
  return res;
}

StepResult control_step(ControllerState& s,
                        const std::optional<Eigen::VectorXd>& y,
                        const uncertainty::PRSSchedule* schedule,
                        const Gains& g, const MpcProblem& prob) {
  if (y) s.x_hat += g.L * (*y - s.x_hat);  // correct the stored prediction
  const MpcResult mpc = solve_mpc(s, schedule, g, prob);
  const Eigen::VectorXd v0 = mpc.v.col(0);
  StepResult out;
  out.u = g.K * (s.x_hat - s.z) + v0;
  out.diag = mpc.diag;
  if (mpc.diag.feasible) {
    s.v_plan = mpc.v;
    s.has_plan = true;
  }
  s.z += v0;
  s.x_hat += out.u;  // prediction for the next step
  s.t += 1;
  return out;
}

std::string to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::kOurs: return "ours";
    case ControllerKind::kGaussian: return "gaussian";
    case ControllerKind::kZeroMeanSubgaussian: return "zero_mean_subgaussian";
    case ControllerKind::kRobust: return "robust";
    case ControllerKind::kPosition: return "position";
  }
  return "unknown";
}

uncertainty::NoiseBudget baseline_budget(
    ControllerKind kind, const uncertainty::NoiseBudget& declared,
    double robust_k) {
  uncertainty::NoiseBudget out = declared;
  const Eigen::Index p = declared.Sigma_eps.rows();
  switch (kind) {
    case ControllerKind::kOurs:
    case ControllerKind::kPosition:
      break;
    case ControllerKind::kGaussian:
    case ControllerKind::kZeroMeanSubgaussian:
      out.M = sets::Zonotope::point(Eigen::VectorXd::Zero(p));
      break;
    case ControllerKind::kRobust: {
      const Eigen::VectorXd half =
          robust_k *
          declared.Sigma_eps.diagonal().cwiseMax(0.0).cwiseSqrt();
      out.M = sets::minkowski_sum(
          declared.M,
          sets::Zonotope::box(Eigen::VectorXd::Zero(p), half));
      out.Sigma_eps = Eigen::MatrixXd::Zero(p, p);
      break;
    }
  }
  return out;
}

bool baseline_uses_chi_square(ControllerKind kind) {
  return kind == ControllerKind::kGaussian;
}

Eigen::VectorXd position_control(const Eigen::VectorXd& x_hat,
                                 const Eigen::VectorXd& u_bar,
                                 double feed_speed) {
  const Eigen::Index n = x_hat.size();
  if (n < 3)
    throw std::invalid_argument("position_control: expects a 3D position");
  if (u_bar.size() != n)
    throw std::invalid_argument("position_control: u_bar size");
  if (feed_speed <= 0.0)
    throw std::invalid_argument("position_control: feed must be positive");
  Eigen::VectorXd u = -x_hat;
  const double dist = u.head(3).norm();
  if (dist > feed_speed) u.head(3) *= feed_speed / dist;
  return u.cwiseMax(-u_bar).cwiseMin(u_bar);
}

}  // namespace sgmpc::controller
