#pragma once

#include <optional>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "sgmpc/rng.hpp"

namespace sgmpc::sets {

// Ellipsoid as an affine image of the unit ball: {center + shape*u : |u|<=1}.
// `shape` may be rectangular or rank deficient; shape with zero columns is a
// point. support(a) = a.c + |shape^T a|_2.
struct Ellipsoid {
  Eigen::VectorXd center;
  Eigen::MatrixXd shape;  // n x k

  Eigen::Index dim() const { return center.size(); }
  double support(const Eigen::VectorXd& a) const;
  static Ellipsoid point(const Eigen::VectorXd& c) {
    return Ellipsoid{c, Eigen::MatrixXd(c.size(), 0)};
  }
  // Ball of radius r around c.
  static Ellipsoid ball(const Eigen::VectorXd& c, double r);
};

// Zonotope {center + G*b : |b|_inf <= 1}. support(a) = a.c + sum_i |a.g_i|.
struct Zonotope {
  Eigen::VectorXd center;
  Eigen::MatrixXd generators;  // n x m, m >= 0

  Eigen::Index dim() const { return center.size(); }
  Eigen::Index order() const { return generators.cols(); }
  double support(const Eigen::VectorXd& a) const;
  static Zonotope point(const Eigen::VectorXd& c) {
    return Zonotope{c, Eigen::MatrixXd(c.size(), 0)};
  }
  // Axis-aligned box with per-axis half widths (entries may be zero).
  static Zonotope box(const Eigen::VectorXd& c, const Eigen::VectorXd& half);
};

// Minkowski sum of at most one ellipsoid and one zonotope. An absent part is
// the singleton {0}. This is the only set class the uncertainty propagation
// produces, and it is closed under the operations used there.
struct SetExpr {
  Eigen::Index n = 0;
  std::optional<Ellipsoid> ellipsoid;
  std::optional<Zonotope> zonotope;

  Eigen::Index dim() const { return n; }
  bool is_point() const;
  Eigen::VectorXd center() const;
  double support(const Eigen::VectorXd& a) const;
  // Upper bound on max_{x in set} |x|_2 (exact for points and balls).
  double radius_bound() const;

  static SetExpr point(const Eigen::VectorXd& c);
  static SetExpr from(const Ellipsoid& e);
  static SetExpr from(const Zonotope& z);
  static SetExpr from(const Ellipsoid& e, const Zonotope& z);
};

Ellipsoid affine_map(const Eigen::MatrixXd& A, const Ellipsoid& e,
                     const Eigen::VectorXd& b);
Zonotope affine_map(const Eigen::MatrixXd& A, const Zonotope& z,
                    const Eigen::VectorXd& b);
SetExpr affine_map(const Eigen::MatrixXd& A, const SetExpr& s,
                   const Eigen::VectorXd& b);

Zonotope minkowski_sum(const Zonotope& a, const Zonotope& b);
SetExpr minkowski_sum(const SetExpr& a, const SetExpr& b);

// Outer approximation of the Minkowski sum of two ellipsoids by a single
// ellipsoid: shape matrix (1 + 1/p) S1 S1' + (1 + p) S2 S2' with the
// trace-minimizing mixing weight p = sqrt(tr1/tr2). Exact when either
// argument is a point.
Ellipsoid minkowski_outer(const Ellipsoid& a, const Ellipsoid& b);

// Girard order reduction: keeps the `budget` generators with the largest
// |g|_1 - |g|_inf score... the remainder is outer-approximated by its
// bounding box, so the result always contains the input.
Zonotope reduce_order(const Zonotope& z, Eigen::Index budget);

enum class Membership { kInside, kOutside, kIndeterminate };

struct ContainmentResult {
  Membership verdict = Membership::kIndeterminate;
  // Smallest scaling of the (centered) set that contains the point, up to the
  // solver tolerance; +inf when the point is off the affine hull.
  double gauge = 0.0;
  int iterations = 0;
};

// Membership test for a point against an ellipsoid+zonotope sum, by projected
// gradient on the zonotope coefficients. Exact affine-hull handling: the
// component of (p - center) orthogonal to the hull is rejected outright.
// Never silently wrong: if the solver cannot certify a verdict within its
// iteration cap it reports kIndeterminate.
ContainmentResult contains(const SetExpr& s, const Eigen::VectorXd& p,
                           double tol = 1e-9);

// A member drawn from the set: ball and cube coefficients sampled uniformly
// from their domains, or from the domain boundaries when `extreme` is set,
// which stresses support-based bounds hardest.
Eigen::VectorXd sample_member(const SetExpr& s, Rng& rng,
                              bool extreme = false);

// JSON round trip: {"center": [...], "shape": [[row],...], "generators":
// [[row],...]}. Missing/empty "shape" or "generators" mean the respective
// part is absent. Matrices are serialized as lists of rows.
nlohmann::json to_json(const SetExpr& s);
SetExpr set_from_json(const nlohmann::json& j);

}  // namespace sgmpc::sets
