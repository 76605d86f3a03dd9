#include "sgmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sgmpc::qp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Eigen::VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

// support function of the constraint image set along dy; +inf when dy pushes
// against an unbounded side
double image_support(const Problem& p, const Eigen::VectorXd& dy) {
  const Eigen::Index mb = p.box_rows();
  double s = 0.0;
  for (Eigen::Index i = 0; i < mb; ++i) {
    if (dy(i) > 0.0) {
      if (std::isinf(p.u(i))) return kInf;
      s += p.u(i) * dy(i);
    } else if (dy(i) < 0.0) {
      if (std::isinf(p.l(i))) return kInf;
      s += p.l(i) * dy(i);
    }
  }
  if (p.ball_rows() > 0) {
    const Eigen::VectorXd db = dy.tail(p.ball_rows());
    s += -p.d.dot(db) + p.radius * db.norm();
  }
  return s;
}

}  // namespace

void Problem::validate() const {
  const Eigen::Index n = vars();
  if (P.rows() != n || P.cols() != n)
    throw std::invalid_argument("qp: P must be square and match q");
  if (A.rows() != l.size() || A.rows() != u.size() ||
      (A.rows() > 0 && A.cols() != n))
    throw std::invalid_argument("qp: A/l/u sizes disagree");
  if (C.rows() != d.size() || (C.rows() > 0 && C.cols() != n))
    throw std::invalid_argument("qp: C/d sizes disagree");
  if (C.rows() > 0 && !(radius >= 0.0))
    throw std::invalid_argument("qp: ball radius must be nonnegative");
  for (Eigen::Index i = 0; i < l.size(); ++i)
    if (std::isnan(l(i)) || std::isnan(u(i)))
      throw std::invalid_argument("qp: NaN bound");
}

QpResult solve_qp(const Problem& p, const QpOptions& opt,
                  const Eigen::VectorXd* warm_x,
                  const Eigen::VectorXd* warm_y) {
  p.validate();
  const Eigen::Index n = p.vars(), mb = p.box_rows(), k = p.ball_rows();
  const Eigen::Index m = mb + k;

  QpResult res;
  res.x = Eigen::VectorXd::Zero(n);
  res.y = Eigen::VectorXd::Zero(m);

  // crossing bounds cannot be projected onto; the problem is trivially empty
  for (Eigen::Index i = 0; i < mb; ++i)
    if (p.l(i) > p.u(i)) {
      res.status = QpStatus::kPrimalInfeasible;
      return res;
    }

  const Eigen::MatrixXd Psym = 0.5 * (p.P + p.P.transpose());
  if (m == 0) {  // unconstrained: a single regularized solve
    res.x = (Psym + 1e-12 * Eigen::MatrixXd::Identity(n, n))
                .ldlt()
                .solve(-p.q);
    res.status = QpStatus::kSolved;
    res.dual_residual = inf_norm(Psym * res.x + p.q);
    res.iterations = 1;
    return res;
  }

  // row equilibration: per-row for the box block, one uniform factor for the
  // ball block so its geometry survives
  Eigen::VectorXd E = Eigen::VectorXd::Ones(m);
  for (Eigen::Index i = 0; i < mb; ++i) {
    const double r = p.A.row(i).cwiseAbs().maxCoeff();
    E(i) = r > 0.0 ? 1.0 / r : 1.0;
  }
  double eball = 1.0;
  if (k > 0) {
    double r = 0.0;
    for (Eigen::Index i = 0; i < k; ++i)
      r = std::max(r, p.C.row(i).cwiseAbs().maxCoeff());
    eball = r > 0.0 ? 1.0 / r : 1.0;
    E.tail(k).setConstant(eball);
  }

  Eigen::MatrixXd As(m, n);
  if (mb > 0) As.topRows(mb) = E.head(mb).asDiagonal() * p.A;
  if (k > 0) As.bottomRows(k) = eball * p.C;
  const Eigen::VectorXd ls = E.head(mb).cwiseProduct(p.l);
  const Eigen::VectorXd us = E.head(mb).cwiseProduct(p.u);
  const Eigen::VectorXd ds = eball * p.d;
  const double rs = eball * p.radius;

  // per-row step sizes; refreshed with the adaptive global factor
  double rho = opt.rho;
  Eigen::VectorXd rho_vec(m);
  auto set_rho = [&](double r) {
    rho = r;
    for (Eigen::Index i = 0; i < mb; ++i)
      rho_vec(i) = (std::isfinite(ls(i)) && ls(i) == us(i)) ? 1e3 * r : r;
    if (k > 0) rho_vec.tail(k).setConstant(r);
  };
  set_rho(opt.rho);

  Eigen::LLT<Eigen::MatrixXd> llt;
  auto factor = [&]() {
    Eigen::MatrixXd M = Psym;
    M.diagonal().array() += opt.sigma;
    M.noalias() += As.transpose() * rho_vec.asDiagonal() * As;
    llt.compute(M);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("qp: KKT factorization failed");
  };
  factor();

  Eigen::VectorXd x = res.x, y = Eigen::VectorXd::Zero(m);
  if (warm_x && warm_x->size() == n) x = *warm_x;
  if (warm_y && warm_y->size() == m) y = E.cwiseInverse().cwiseProduct(*warm_y);
  Eigen::VectorXd z = As * x;

  auto project = [&](Eigen::VectorXd& w) {
    for (Eigen::Index i = 0; i < mb; ++i) w(i) = std::clamp(w(i), ls(i), us(i));
    if (k > 0) {
      Eigen::VectorXd c = w.tail(k) + ds;
      const double nc = c.norm();
      if (nc > rs) w.tail(k) = c * (rs / std::max(nc, 1e-300)) - ds;
    }
  };
  project(z);

  Eigen::VectorXd y_prev_check = y;
  const double eps_pinf = 1e-10;

  for (int it = 1; it <= opt.max_iterations; ++it) {
    const Eigen::VectorXd rhs =
        opt.sigma * x - p.q + As.transpose() * (rho_vec.cwiseProduct(z) - y);
    const Eigen::VectorXd xt = llt.solve(rhs);
    const Eigen::VectorXd zt = As * xt;

    x = opt.relax * xt + (1.0 - opt.relax) * x;
    Eigen::VectorXd w =
        opt.relax * zt + (1.0 - opt.relax) * z + rho_vec.cwiseInverse().cwiseProduct(y);
    const Eigen::VectorXd w_pre = w;
    project(w);
    y = rho_vec.cwiseProduct(w_pre - w);
    z = w;

    if (it % opt.check_interval != 0 && it != opt.max_iterations) continue;

    // residuals on the original (unequilibrated) data
    const Eigen::VectorXd y_orig = E.cwiseProduct(y);
    Eigen::VectorXd ax(m);
    if (mb > 0) ax.head(mb) = p.A * x;
    if (k > 0) ax.tail(k) = p.C * x;
    const Eigen::VectorXd z_orig = E.cwiseInverse().cwiseProduct(z);
    const double rp = inf_norm(ax - z_orig);
    Eigen::VectorXd grad = Psym * x + p.q;
    if (mb > 0) grad.noalias() += p.A.transpose() * y_orig.head(mb);
    if (k > 0) grad.noalias() += p.C.transpose() * y_orig.tail(k);
    const double rd = inf_norm(grad);

    res.iterations = it;
    res.primal_residual = rp;
    res.dual_residual = rd;
    if (rp <= opt.eps && rd <= opt.eps) {
      res.status = QpStatus::kSolved;
      res.x = x;
      res.y = y_orig;
      return res;
    }

    // primal infeasibility: a dual direction with vanishing A'dy and
    // negative support over the constraint image certifies emptiness
    const Eigen::VectorXd dy = E.cwiseProduct(y) - y_prev_check;
    const double ndy = inf_norm(dy);
    if (ndy > 0.0) {
      Eigen::VectorXd atdy = Eigen::VectorXd::Zero(n);
      if (mb > 0) atdy.noalias() += p.A.transpose() * dy.head(mb);
      if (k > 0) atdy.noalias() += p.C.transpose() * dy.tail(k);
      if (inf_norm(atdy) <= eps_pinf * std::max(1.0, ndy) &&
          image_support(p, dy) <= -eps_pinf * std::max(1.0, ndy)) {
        res.status = QpStatus::kPrimalInfeasible;
        res.x = x;
        res.y = dy;  // the certificate ray
        return res;
      }
    }
    y_prev_check = E.cwiseProduct(y);

    // adaptive step size, rebalancing the two residuals
    const double np = rp / std::max({1e-12, inf_norm(ax), inf_norm(z_orig)});
    const double nd =
        rd / std::max({1e-12, inf_norm(Psym * x), inf_norm(p.q),
                       inf_norm(grad - Psym * x - p.q)});
    const double scale = std::sqrt(np / std::max(nd, 1e-300));
    if (std::isfinite(scale) && (scale > 5.0 || scale < 0.2)) {
      set_rho(std::clamp(rho * scale, 1e-6, 1e6));
      factor();
    }
  }
  res.x = x;
  res.y = E.cwiseProduct(y);
  res.status = QpStatus::kMaxIterations;
  return res;
}

}  // namespace sgmpc::qp
