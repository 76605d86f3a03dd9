#include "sgmpc/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace sgmpc::constraints {
namespace {

double expc(double e) { return std::exp(std::clamp(e, -700.0, 700.0)); }

// Lateral part (w + c1)^2 with w = sqrt(py^2/cy^2 + pz^2/cz^2 + mu^2):
// value, gradient, and Hessian in (py, pz).
struct Lateral {
  double value;
  Eigen::Vector2d grad;
  Eigen::Matrix2d hess;
};

Lateral lateral_smooth(double py, double pz, const FunnelParams& fp) {
  const double gy = py / (fp.c_y * fp.c_y), gz = pz / (fp.c_z * fp.c_z);
  const double w = std::sqrt(py * gy + pz * gz +
                             fp.axis_smoothing * fp.axis_smoothing);
  const double wc = w + fp.c_1;
  Lateral l;
  l.value = wc * wc;
  l.grad << 2.0 * wc * gy / w, 2.0 * wc * gz / w;
  const double w3 = w * w * w;
  l.hess(0, 0) = 2.0 * (gy * gy / (w * w) +
                        wc * (1.0 / (fp.c_y * fp.c_y * w) - gy * gy / w3));
  l.hess(1, 1) = 2.0 * (gz * gz / (w * w) +
                        wc * (1.0 / (fp.c_z * fp.c_z * w) - gz * gz / w3));
  l.hess(0, 1) = l.hess(1, 0) = 2.0 * gy * gz * (1.0 / (w * w) - wc / w3);
  return l;
}

Eigen::Vector3d d_theta(double th, double ph) {
  return {-std::sin(th), std::cos(th) * std::cos(ph),
          std::cos(th) * std::sin(ph)};
}

Eigen::Vector3d d_phi(double th, double ph) {
  return {0.0, -std::sin(th) * std::sin(ph), std::sin(th) * std::cos(ph)};
}

void require_state5(const Eigen::VectorXd& x) {
  if (x.size() != 5)
    throw std::invalid_argument("state must be (p_x, p_y, p_z, theta, phi)");
}

// Maximum row sum of |hess(x)| with x swept over the corners and center of
// the box x_ref + [lo, hi] restricted to `coords`.
double sweep_hess_norm(
    const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& hess,
    const Eigen::VectorXd& x_ref, const std::vector<int>& coords,
    const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  const int k = int(coords.size());
  double best = 0.0;
  for (long mask = 0; mask <= (1L << k); ++mask) {
    Eigen::VectorXd x = x_ref;
    for (int j = 0; j < k; ++j)
      x(coords[j]) += mask == (1L << k) ? 0.5 * (lo(j) + hi(j))
                      : (mask >> j) & 1 ? hi(j)
                                        : lo(j);
    best = std::max(best, hess(x).cwiseAbs().rowwise().sum().maxCoeff());
  }
  return best;
}

}  // namespace

void FunnelParams::validate() const {
  auto pos = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument(std::string(what) + " must be positive");
  };
  pos(c_x, "c_x");
  pos(c_y, "c_y");
  pos(c_z, "c_z");
  pos(screw_length, "screw_length");
  if (!(c_1 >= 0.0) || !std::isfinite(c_1) || !std::isfinite(c_2))
    throw std::invalid_argument("c_1 must be >= 0 and c_2 finite");
  if (!(axis_smoothing >= 0.0) || !std::isfinite(axis_smoothing))
    throw std::invalid_argument("axis_smoothing must be >= 0");
  for (Eigen::Index i = 0; i < u_bar.size(); ++i)
    if (!(u_bar(i) > 0.0) || !std::isfinite(u_bar(i)))
      throw std::invalid_argument("u_bar entries must be positive");
}

double funnel_h(const Eigen::Vector3d& p, const FunnelParams& fp) {
  const double w = std::sqrt(p.y() * p.y() / (fp.c_y * fp.c_y) +
                             p.z() * p.z() / (fp.c_z * fp.c_z));
  const double wc = w + fp.c_1;
  return wc * wc - expc(-p.x() / fp.c_x - fp.c_2);
}

double funnel_h_smooth(const Eigen::Vector3d& p, const FunnelParams& fp) {
  return lateral_smooth(p.y(), p.z(), fp).value -
         expc(-p.x() / fp.c_x - fp.c_2);
}

Eigen::Vector3d funnel_grad_smooth(const Eigen::Vector3d& p,
                                   const FunnelParams& fp) {
  const Lateral l = lateral_smooth(p.y(), p.z(), fp);
  const double E = expc(-p.x() / fp.c_x - fp.c_2);
  return {E / fp.c_x, l.grad(0), l.grad(1)};
}

Eigen::Matrix3d funnel_hess_smooth(const Eigen::Vector3d& p,
                                   const FunnelParams& fp) {
  const Lateral l = lateral_smooth(p.y(), p.z(), fp);
  const double E = expc(-p.x() / fp.c_x - fp.c_2);
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  h(0, 0) = -E / (fp.c_x * fp.c_x);
  h.bottomRightCorner<2, 2>() = l.hess;
  return h;
}

Eigen::Vector3d direction_vector(double theta, double phi) {
  return {std::cos(theta), std::sin(theta) * std::cos(phi),
          std::sin(theta) * std::sin(phi)};
}

Eigen::Vector3d head_point(const Eigen::Vector3d& p, double theta, double phi,
                           double screw_length) {
  return p + screw_length * direction_vector(theta, phi);
}

ConstraintValues tip_and_head_constraints(const Eigen::VectorXd& x,
                                          const FunnelParams& fp) {
  require_state5(x);
  const Eigen::Vector3d p = x.head<3>();
  ConstraintValues v;
  v.tip = funnel_h(p, fp);
  v.head = funnel_h(head_point(p, x(3), x(4), fp.screw_length), fp);
  v.breakthrough = p.x();
  return v;
}

Deriv2 tip_constraint_smooth(const Eigen::VectorXd& x,
                             const FunnelParams& fp) {
  require_state5(x);
  const Eigen::Vector3d p = x.head<3>();
  Deriv2 d;
  d.value = funnel_h_smooth(p, fp);
  d.grad = Eigen::VectorXd::Zero(5);
  d.grad.head<3>() = funnel_grad_smooth(p, fp);
  d.hess = Eigen::MatrixXd::Zero(5, 5);
  d.hess.topLeftCorner<3, 3>() = funnel_hess_smooth(p, fp);
  return d;
}

Deriv2 head_constraint_smooth(const Eigen::VectorXd& x,
                              const FunnelParams& fp) {
  require_state5(x);
  const double th = x(3), ph = x(4), L = fp.screw_length;
  const Eigen::Vector3d d = direction_vector(th, ph);
  const Eigen::Vector3d q = x.head<3>() + L * d;
  const Eigen::Vector3d g = funnel_grad_smooth(q, fp);
  const Eigen::Matrix3d H = funnel_hess_smooth(q, fp);
  const Eigen::Vector3d dt = d_theta(th, ph), dp = d_phi(th, ph);

  Eigen::Matrix<double, 3, 5> J;
  J << Eigen::Matrix3d::Identity(), L * dt, L * dp;

  Deriv2 out;
  out.value = funnel_h_smooth(q, fp);
  out.grad = J.transpose() * g;
  out.hess = J.transpose() * H * J;
  // curvature of the head point itself: d_theta_theta = -d,
  // d_theta_phi = (0, -cos sin, cos cos), d_phi_phi = (0, -sin cos, -sin sin)
  const Eigen::Vector3d dtt = -d;
  const Eigen::Vector3d dtp{0.0, -std::cos(th) * std::sin(ph),
                            std::cos(th) * std::cos(ph)};
  const Eigen::Vector3d dpp{0.0, -std::sin(th) * std::cos(ph),
                            -std::sin(th) * std::sin(ph)};
  out.hess(3, 3) += L * g.dot(dtt);
  out.hess(3, 4) += L * g.dot(dtp);
  out.hess(4, 3) += L * g.dot(dtp);
  out.hess(4, 4) += L * g.dot(dpp);
  return out;
}

void OperatingBox::validate() const {
  if (lo.size() != hi.size() || lo.size() == 0)
    throw std::invalid_argument("operating box bounds must share a size");
  if ((lo.array() > hi.array()).any())
    throw std::invalid_argument("operating box has lo > hi");
}

bool OperatingBox::contains(const Eigen::VectorXd& x, double tol) const {
  if (x.size() != lo.size())
    throw std::invalid_argument("operating box dimension mismatch");
  return (x.array() >= lo.array() - tol).all() &&
         (x.array() <= hi.array() + tol).all();
}

std::string TightenedConstraint::label() const {
  switch (kind) {
    case ConstraintKind::kTip:
      return "tip";
    case ConstraintKind::kHead:
      return "head";
    case ConstraintKind::kBreakthrough:
      return "break";
    case ConstraintKind::kInput:
      break;
  }
  double sign = 0.0;
  for (Eigen::Index i = 0; i < normal.size(); ++i)
    if (normal(i) != 0.0) sign = normal(i);
  return (sign >= 0.0 ? "u+" : "u-") + std::to_string(input_index);
}

std::vector<TightenedConstraint> linearize_and_tighten(
    const Eigen::VectorXd& x_ref, const sets::SetExpr& err,
    const FunnelParams& fp, const OperatingBox& box) {
  require_state5(x_ref);
  fp.validate();
  box.validate();
  const int n = int(x_ref.size());
  const int m = int(fp.u_bar.size());
  if (err.dim() != n + m)
    throw std::invalid_argument("error set must live in (state, input) space");
  if (!box.contains(x_ref))
    throw std::domain_error("reference state outside the operating box");

  auto unit = [&](int i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n + m);
    e(i) = 1.0;
    return e;
  };

  // per-coordinate extent of the error set, widened to include 0 so the swept
  // box covers the whole segment from the reference to any reached point
  auto extents = [&](const std::vector<int>& coords, Eigen::VectorXd& lo,
                     Eigen::VectorXd& hi) {
    lo.resize(coords.size());
    hi.resize(coords.size());
    for (size_t j = 0; j < coords.size(); ++j) {
      hi(j) = std::max(0.0, err.support(unit(coords[j])));
      lo(j) = std::min(0.0, -err.support(-unit(coords[j])));
    }
  };

  auto projected_radius = [&](const std::vector<int>& coords) {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(coords.size(), n + m);
    for (size_t j = 0; j < coords.size(); ++j) P(j, coords[j]) = 1.0;
    return sets::affine_map(P, err, Eigen::VectorXd::Zero(coords.size()))
        .radius_bound();
  };

  std::vector<TightenedConstraint> rows;
  auto push_curved = [&](const Deriv2& dv, const std::vector<int>& coords,
                         const std::function<Eigen::MatrixXd(
                             const Eigen::VectorXd&)>& hess,
                         ConstraintKind kind) {
    const double gn = dv.grad.norm();
    TightenedConstraint c;
    c.kind = kind;
    c.normal = Eigen::VectorXd::Zero(n + m);
    c.normal.head(n) = dv.grad / gn;
    c.offset = (dv.grad.dot(x_ref) - dv.value) / gn;
    Eigen::VectorXd lo, hi;
    extents(coords, lo, hi);
    const double L =
        2.0 * sweep_hess_norm(hess, x_ref, coords, lo, hi) / gn;
    const double r = projected_radius(coords);
    c.margin = err.support(c.normal) + 0.5 * L * r * r;
    rows.push_back(std::move(c));
  };

  push_curved(
      tip_constraint_smooth(x_ref, fp), {0, 1, 2},
      [&](const Eigen::VectorXd& x) { return tip_constraint_smooth(x, fp).hess; },
      ConstraintKind::kTip);
  push_curved(
      head_constraint_smooth(x_ref, fp), {0, 1, 2, 3, 4},
      [&](const Eigen::VectorXd& x) { return head_constraint_smooth(x, fp).hess; },
      ConstraintKind::kHead);

  TightenedConstraint brk;
  brk.kind = ConstraintKind::kBreakthrough;
  brk.normal = unit(0);
  brk.offset = 0.0;
  brk.margin = err.support(brk.normal);
  rows.push_back(std::move(brk));

  for (int i = 0; i < m; ++i)
    for (const double s : {1.0, -1.0}) {
      TightenedConstraint c;
      c.kind = ConstraintKind::kInput;
      c.input_index = i;
      c.normal = s * unit(n + i);
      c.offset = fp.u_bar(i);
      c.margin = err.support(c.normal);
      rows.push_back(std::move(c));
    }
  return rows;
}

double signed_breach_distance(const Eigen::Vector3d& p,
                              const FunnelParams& fp) {
  const double E = expc(-p.x() / fp.c_x - fp.c_2);
  if (fp.c_1 * fp.c_1 > E)
    return -std::numeric_limits<double>::infinity();
  const double rho = std::hypot(p.y(), p.z());
  double uy = 1.0, uz = 0.0;
  if (rho > 0.0) {
    uy = p.y() / rho;
    uz = p.z() / rho;
  }
  const double a = std::sqrt(uy * uy / (fp.c_y * fp.c_y) +
                             uz * uz / (fp.c_z * fp.c_z));
  const auto above = [&](double s) {
    const double t = s * a + fp.c_1;
    return t * t > E;
  };
  double lo = 0.0, hi = std::max(rho, fp.c_y + fp.c_z);
  while (!above(hi)) hi *= 2.0;
  while (hi - lo > 1e-9) {
    const double mid = 0.5 * (lo + hi);
    (above(mid) ? hi : lo) = mid;
  }
  return rho - 0.5 * (lo + hi);
}

GrGrade gr_grade(double max_breach_m) {
  if (max_breach_m <= 0.0) return GrGrade::kA;
  if (max_breach_m <= 0.002) return GrGrade::kB;
  if (max_breach_m <= 0.004) return GrGrade::kC;
  if (max_breach_m <= 0.006) return GrGrade::kD;
  return GrGrade::kE;
}

char gr_letter(GrGrade g) { return "ABCDE"[int(g)]; }

IouEstimate cylinder_iou(const CylinderPose& a, const CylinderPose& b,
                         double radius, double length, Rng& rng,
                         long long n_samples) {
  if (!(radius > 0.0) || !(length > 0.0))
    throw std::invalid_argument("cylinder radius and length must be positive");
  if (n_samples < 1) throw std::invalid_argument("need at least one sample");
  const double na = a.axis.norm(), nb = b.axis.norm();
  if (na == 0.0 || nb == 0.0)
    throw std::invalid_argument("cylinder axis must be nonzero");
  const Eigen::Vector3d da = a.axis / na, db = b.axis / nb;

  auto widen = [&](const Eigen::Vector3d& base, const Eigen::Vector3d& d,
                   Eigen::Vector3d& lo, Eigen::Vector3d& hi) {
    const Eigen::Vector3d tip = base + length * d;
    for (int i = 0; i < 3; ++i) {
      const double pad =
          radius * std::sqrt(std::max(0.0, 1.0 - d(i) * d(i)));
      lo(i) = std::min(lo(i), std::min(base(i), tip(i)) - pad);
      hi(i) = std::max(hi(i), std::max(base(i), tip(i)) + pad);
    }
  };
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(
      std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  widen(a.base, da, lo, hi);
  widen(b.base, db, lo, hi);

  auto inside = [&](const Eigen::Vector3d& q, const Eigen::Vector3d& base,
                    const Eigen::Vector3d& d) {
    const double t = d.dot(q - base);
    if (t < 0.0 || t > length) return false;
    return (q - base - t * d).squaredNorm() <= radius * radius;
  };

  long long both = 0, either = 0;
  for (long long i = 0; i < n_samples; ++i) {
    Eigen::Vector3d q;
    for (int j = 0; j < 3; ++j) q(j) = rng.uniform(lo(j), hi(j));
    const bool ia = inside(q, a.base, da), ib = inside(q, b.base, db);
    both += ia && ib;
    either += ia || ib;
  }
  IouEstimate est;
  est.samples = n_samples;
  if (either > 0) est.iou = double(both) / double(either);
  if (both > 0 && either > both)
    est.std_error = std::sqrt(double(both) * double(either - both)) /
                    (double(either) * std::sqrt(double(either)));
  return est;
}

}  // namespace sgmpc::constraints
