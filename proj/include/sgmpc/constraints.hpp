#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sgmpc/rng.hpp"
#include "sgmpc/sets.hpp"

namespace sgmpc::constraints {

// Funnel-shaped safe region in drill coordinates. The drill advances toward
// the breakthrough plane p_x = 0 and the admissible lateral radius shrinks
// as exp(-p_x/c_x) decays; h(p) <= 0 is safe. u_bar rides along because the
// input bounds are tightened against the same error sets as the funnel.
struct FunnelParams {
  double c_x = 0.01;
  double c_y = 0.2;
  double c_z = 0.2;
  double c_1 = 0.1;
  double c_2 = 0.0;
  double screw_length = 0.04;
  Eigen::VectorXd u_bar;        // per-axis input bound, size m
  // mu in the smoothed lateral norm sqrt(py^2/cy^2 + pz^2/cz^2 + mu^2). Keep
  // it at least as large as the lateral error extents divided by c_y so the
  // curvature sweep stays representative near the axis.
  double axis_smoothing = 0.02;

  void validate() const;  // throws std::invalid_argument
};

// Exact funnel value; exponent clamped at +-700.
double funnel_h(const Eigen::Vector3d& p, const FunnelParams& fp);

// Smoothed variant for differentiation: dominates the exact h (gap at most
// mu^2 + 2 c_1 mu), so enforcing the smoothed constraint is sound, and it is
// twice differentiable on the funnel axis where the exact h is not.
double funnel_h_smooth(const Eigen::Vector3d& p, const FunnelParams& fp);
Eigen::Vector3d funnel_grad_smooth(const Eigen::Vector3d& p,
                                   const FunnelParams& fp);
Eigen::Matrix3d funnel_hess_smooth(const Eigen::Vector3d& p,
                                   const FunnelParams& fp);

// Drilling direction from spherical angles; theta = 0 points along +x.
Eigen::Vector3d direction_vector(double theta, double phi);
Eigen::Vector3d head_point(const Eigen::Vector3d& p, double theta, double phi,
                           double screw_length);

// The three scalar safety constraints at a state x = (p, theta, phi), all
// "<= 0": exact funnel at the tip, exact funnel at the head point, and the
// breakthrough plane p_x. Ground-truth evaluator for the plant and metrics.
struct ConstraintValues {
  double tip = 0.0;
  double head = 0.0;
  double breakthrough = 0.0;
  bool all_satisfied(double tol = 0.0) const {
    return tip <= tol && head <= tol && breakthrough <= tol;
  }
};
ConstraintValues tip_and_head_constraints(const Eigen::VectorXd& x,
                                          const FunnelParams& fp);

// Value, gradient, and 5x5 Hessian of one smoothed scalar constraint in the
// state coordinates (p_x, p_y, p_z, theta, phi).
struct Deriv2 {
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};
Deriv2 tip_constraint_smooth(const Eigen::VectorXd& x, const FunnelParams& fp);
Deriv2 head_constraint_smooth(const Eigen::VectorXd& x,
                              const FunnelParams& fp);

// Axis-aligned state region inside which references may be linearized.
struct OperatingBox {
  Eigen::VectorXd lo, hi;
  void validate() const;
  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const;
};

enum class ConstraintKind { kTip, kHead, kBreakthrough, kInput };

// One halfspace over stacked (state, input): normal . (x; u) <= offset -
// margin, with |normal| = 1. margin is the support of the error set along
// the normal plus, for the curved rows, a second-order allowance.
struct TightenedConstraint {
  Eigen::VectorXd normal;  // size n + m
  double offset = 0.0;
  double margin = 0.0;
  ConstraintKind kind = ConstraintKind::kInput;
  int input_index = -1;  // only for kInput
  double tightened_offset() const { return offset - margin; }
  std::string label() const;
};

// Inner linearization of {tip, head, breakthrough} at x_ref plus the
// per-axis input bounds |u_i| <= u_bar_i, each tightened by the support of
// `err` (a set of (state, input) errors) along its normal. Curved rows add
// 0.5 * L * r^2 where r bounds the norm of the touched error coordinates
// (center included) and L bounds the constraint Hessian norm over the box
// x_ref (+) [per-axis extents of err]: analytic Hessians swept at the box
// corners and center, times a safety factor of 2. Rows are normalized, so
// offsets and margins are in meters along the constraint normal.
// Throws std::domain_error when x_ref lies outside `box`.
std::vector<TightenedConstraint> linearize_and_tighten(
    const Eigen::VectorXd& x_ref, const sets::SetExpr& err,
    const FunnelParams& fp, const OperatingBox& box);

// Radial distance in the (p_y, p_z) plane from p to the funnel boundary at
// p_x: positive outside, negative inside. The boundary radius along the ray
// through p is found by bisection on h (tolerance 1e-9 m). Returns -inf when
// the funnel slice at p_x is empty, i.e. no boundary exists along the ray.
double signed_breach_distance(const Eigen::Vector3d& p,
                              const FunnelParams& fp);

// Screw placement grades in 2 mm breach increments.
enum class GrGrade { kA, kB, kC, kD, kE };
GrGrade gr_grade(double max_breach_m);
char gr_letter(GrGrade g);

// Finite cylinder from `base` extending `length` along `axis` (normalized
// internally).
struct CylinderPose {
  Eigen::Vector3d base;
  Eigen::Vector3d axis;
};

struct IouEstimate {
  double iou = 0.0;
  double std_error = 0.0;
  long long samples = 0;
};

// Intersection-over-union of two equal-size cylinders, estimated by uniform
// sampling inside the bounding box of the union; the standard error uses the
// delta method for the ratio of hit counts.
IouEstimate cylinder_iou(const CylinderPose& a, const CylinderPose& b,
                         double radius, double length, Rng& rng,
                         long long n_samples = 1000000);

}  // namespace sgmpc::constraints
