#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "sgmpc/qp.hpp"
#include "sgmpc/rng.hpp"

using namespace sgmpc;
using namespace sgmpc::qp;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Problem base_problem(int n) {
  Problem p;
  p.P = Eigen::MatrixXd::Identity(n, n);
  p.q = Eigen::VectorXd::Zero(n);
  p.A = Eigen::MatrixXd(0, n);
  p.l = Eigen::VectorXd(0);
  p.u = Eigen::VectorXd(0);
  p.C = Eigen::MatrixXd(0, n);
  p.d = Eigen::VectorXd(0);
  return p;
}

double objective(const Problem& p, const Eigen::VectorXd& x) {
  return 0.5 * x.dot(p.P * x) + p.q.dot(x);
}

}  // namespace

TEST_SUITE_BEGIN("qp");

TEST_CASE("equality constrained solve matches the KKT system") {
  Rng rng(41);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 6, me = 2;
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i) M.col(i) = rng.normal_vector(n);
    Problem p = base_problem(n);
    p.P = M.transpose() * M + Eigen::MatrixXd::Identity(n, n);
    p.q = rng.normal_vector(n);
    p.A = Eigen::MatrixXd(me, n);
    for (int i = 0; i < me; ++i) p.A.row(i) = rng.normal_vector(n).transpose();
    const Eigen::VectorXd b = rng.normal_vector(me);
    p.l = b;
    p.u = b;

    Eigen::MatrixXd kkt(n + me, n + me);
    kkt.setZero();
    kkt.topLeftCorner(n, n) = p.P;
    kkt.topRightCorner(n, me) = p.A.transpose();
    kkt.bottomLeftCorner(me, n) = p.A;
    Eigen::VectorXd rhs(n + me);
    rhs << -p.q, b;
    const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);

    const QpResult r = solve_qp(p);
    REQUIRE(r.status == QpStatus::kSolved);
    CHECK((r.x - sol.head(n)).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK((r.y - sol.tail(me)).lpNorm<Eigen::Infinity>() < 1e-5);
    CHECK((p.A * r.x - b).lpNorm<Eigen::Infinity>() < 1e-7);
  }
}

TEST_CASE("box constrained projection matches the clamp closed form") {
  const int n = 4;
  Problem p = base_problem(n);
  Eigen::VectorXd c(n);
  c << 2.0, -3.0, 0.4, 1.0;
  p.q = -c;
  p.A = Eigen::MatrixXd::Identity(n, n);
  p.l = -Eigen::VectorXd::Ones(n);
  p.u = Eigen::VectorXd::Ones(n);
  const QpResult r = solve_qp(p);
  REQUIRE(r.status == QpStatus::kSolved);
  Eigen::VectorXd expect(n);
  expect << 1.0, -1.0, 0.4, 1.0;
  CHECK((r.x - expect).lpNorm<Eigen::Infinity>() < 1e-7);
  // stationarity with the documented dual signs
  CHECK((p.P * r.x + p.q + p.A.transpose() * r.y).lpNorm<Eigen::Infinity>() <
        1e-7);
  CHECK(r.y(0) > 0.0);   // active upper
  CHECK(r.y(1) < 0.0);   // active lower
  CHECK(std::abs(r.y(2)) < 1e-6);
}

TEST_CASE("random inequality problems match an active-set enumeration") {
  Rng rng(43);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 4, mr = 6;
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i) M.col(i) = rng.normal_vector(n);
    Problem p = base_problem(n);
    p.P = M.transpose() * M + Eigen::MatrixXd::Identity(n, n);
    p.q = 2.0 * rng.normal_vector(n);
    p.A = Eigen::MatrixXd(mr, n);
    for (int i = 0; i < mr; ++i) p.A.row(i) = rng.normal_vector(n).transpose();
    p.u = rng.uniform_vector(mr, 0.2, 1.5);
    p.l = Eigen::VectorXd::Constant(mr, -kInf);

    // exhaustive oracle: try every active set, keep the best feasible KKT point
    double best = kInf;
    Eigen::VectorXd best_x;
    for (int mask = 0; mask < (1 << mr); ++mask) {
      std::vector<int> act;
      for (int i = 0; i < mr; ++i)
        if (mask & (1 << i)) act.push_back(i);
      const int ma = int(act.size());
      if (ma > n) continue;
      Eigen::MatrixXd kkt(n + ma, n + ma);
      kkt.setZero();
      kkt.topLeftCorner(n, n) = p.P;
      Eigen::VectorXd rhs(n + ma);
      rhs.head(n) = -p.q;
      for (int i = 0; i < ma; ++i) {
        kkt.block(n + i, 0, 1, n) = p.A.row(act[i]);
        kkt.block(0, n + i, n, 1) = p.A.row(act[i]).transpose();
        rhs(n + i) = p.u(act[i]);
      }
      const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
      if ((kkt * sol - rhs).lpNorm<Eigen::Infinity>() > 1e-8) continue;
      const Eigen::VectorXd x = sol.head(n);
      if (((p.A * x - p.u).array() > 1e-9).any()) continue;
      if ((sol.tail(ma).array() < -1e-9).any()) continue;
      const double f = objective(p, x);
      if (f < best) {
        best = f;
        best_x = x;
      }
    }
    REQUIRE(std::isfinite(best));

    const QpResult r = solve_qp(p);
    REQUIRE(r.status == QpStatus::kSolved);
    CHECK((r.x - best_x).lpNorm<Eigen::Infinity>() < 1e-5);
    CHECK(std::abs(objective(p, r.x) - best) < 1e-6);
  }
}

TEST_CASE("ball constraints recover projection closed forms") {
  // centered ball, identity objective: radial projection
  {
    Problem p = base_problem(3);
    Eigen::VectorXd c(3);
    c << 2.0, -1.0, 2.0;
    p.q = -c;
    p.C = Eigen::MatrixXd::Identity(3, 3);
    p.d = Eigen::VectorXd::Zero(3);
    p.radius = 1.0;
    const QpResult r = solve_qp(p);
    REQUIRE(r.status == QpStatus::kSolved);
    CHECK((r.x - c / c.norm()).lpNorm<Eigen::Infinity>() < 1e-6);
  }
  // shifted ball
  {
    Problem p = base_problem(2);
    Eigen::Vector2d c(2.0, 2.0), ctr(0.0, 1.0);
    p.q = -c;
    p.C = Eigen::MatrixXd::Identity(2, 2);
    p.d = -ctr;
    p.radius = 0.5;
    const QpResult r = solve_qp(p);
    REQUIRE(r.status == QpStatus::kSolved);
    const Eigen::Vector2d expect = ctr + 0.5 * (c - ctr).normalized();
    CHECK((r.x - expect).lpNorm<Eigen::Infinity>() < 1e-6);
  }
  // anisotropic objective: compare against a bisection on the multiplier
  {
    Problem p = base_problem(2);
    p.P = Eigen::Vector2d(1.0, 3.0).asDiagonal();
    p.q = Eigen::Vector2d(-4.0, -2.0);
    p.C = Eigen::MatrixXd::Identity(2, 2);
    p.d = Eigen::VectorXd::Zero(2);
    p.radius = 1.0;
    auto norm_at = [&](double nu) {
      return ((p.P + nu * Eigen::MatrixXd::Identity(2, 2))
                  .ldlt()
                  .solve(-p.q))
          .norm();
    };
    double lo = 0.0, hi = 1.0;
    while (norm_at(hi) > 1.0) hi *= 2.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (norm_at(mid) > 1.0 ? lo : hi) = mid;
    }
    const Eigen::VectorXd oracle =
        (p.P + hi * Eigen::MatrixXd::Identity(2, 2)).ldlt().solve(-p.q);
    const QpResult r = solve_qp(p);
    REQUIRE(r.status == QpStatus::kSolved);
    CHECK((r.x - oracle).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK(r.x.norm() <= 1.0 + 1e-7);
  }
}

TEST_CASE("condensed finite-horizon tracking equals the Riccati recursion") {
  const int H = 10;
  const double x0 = 1.0, pf = 1.0;
  // states x_t = x0 + sum_{i<t} u_i, stage weights 1, terminal weight pf
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(H + 1, H);
  for (int t = 0; t <= H; ++t)
    for (int j = 0; j < t; ++j) G(t, j) = 1.0;
  Eigen::VectorXd w = Eigen::VectorXd::Ones(H + 1);
  w(H) = pf;
  Problem p = base_problem(H);
  p.P = 2.0 * (G.transpose() * w.asDiagonal() * G +
               Eigen::MatrixXd::Identity(H, H));
  p.q = 2.0 * x0 * G.transpose() * w;

  // independent oracle: backward Riccati sweep, forward rollout
  std::vector<double> S(H + 1), K(H);
  S[H] = pf;
  for (int t = H - 1; t >= 0; --t) {
    K[t] = -S[t + 1] / (1.0 + S[t + 1]);
    S[t] = 1.0 + S[t + 1] - S[t + 1] * S[t + 1] / (1.0 + S[t + 1]);
  }
  Eigen::VectorXd u_oracle(H);
  double xt = x0;
  for (int t = 0; t < H; ++t) {
    u_oracle(t) = K[t] * xt;
    xt += u_oracle(t);
  }

  const QpResult r = solve_qp(p);
  REQUIRE(r.status == QpStatus::kSolved);
  CHECK((r.x - u_oracle).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("infeasible problems are certified") {
  // two contradictory halfspaces
  {
    Problem p = base_problem(1);
    p.A = Eigen::MatrixXd(2, 1);
    p.A << 1.0, 1.0;
    p.l = Eigen::VectorXd(2);
    p.u = Eigen::VectorXd(2);
    p.l << -kInf, 1.0;
    p.u << -1.0, kInf;
    CHECK(solve_qp(p).status == QpStatus::kPrimalInfeasible);
  }
  // crossing bounds short-circuit
  {
    Problem p = base_problem(2);
    p.A = Eigen::MatrixXd::Identity(2, 2);
    p.l = Eigen::Vector2d(0.5, 0.0);
    p.u = Eigen::Vector2d(-0.5, 1.0);
    const QpResult r = solve_qp(p);
    CHECK(r.status == QpStatus::kPrimalInfeasible);
    CHECK(r.iterations == 0);
  }
  // ball and box that never meet
  {
    Problem p = base_problem(2);
    p.A = Eigen::MatrixXd(1, 2);
    p.A << 1.0, 0.0;
    p.l = Eigen::VectorXd::Constant(1, -1.0);
    p.u = Eigen::VectorXd::Constant(1, 1.0);
    p.C = Eigen::MatrixXd::Identity(2, 2);
    p.d = Eigen::Vector2d(-10.0, 0.0);
    p.radius = 1.0;
    CHECK(solve_qp(p).status == QpStatus::kPrimalInfeasible);
  }
}

TEST_CASE("warm starts resume converged problems immediately") {
  Rng rng(47);
  const int n = 8, mr = 10;
  Eigen::MatrixXd M(n, n);
  for (int i = 0; i < n; ++i) M.col(i) = rng.normal_vector(n);
  Problem p = base_problem(n);
  p.P = M.transpose() * M + 0.5 * Eigen::MatrixXd::Identity(n, n);
  p.q = rng.normal_vector(n);
  p.A = Eigen::MatrixXd(mr, n);
  for (int i = 0; i < mr; ++i) p.A.row(i) = rng.normal_vector(n).transpose();
  p.u = rng.uniform_vector(mr, 0.1, 1.0);
  p.l = -p.u;

  const QpResult cold = solve_qp(p);
  REQUIRE(cold.status == QpStatus::kSolved);
  const QpResult warm = solve_qp(p, {}, &cold.x, &cold.y);
  REQUIRE(warm.status == QpStatus::kSolved);
  CHECK(warm.iterations <= 25);
  CHECK((warm.x - cold.x).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("iteration cap reports progress honestly") {
  Rng rng(53);
  const int n = 6;
  Eigen::MatrixXd M(n, 2);
  M.col(0) = rng.normal_vector(n);
  M.col(1) = rng.normal_vector(n);
  Problem p = base_problem(n);
  p.P = M * M.transpose();  // rank deficient, slow modes
  p.q = rng.normal_vector(n);
  p.A = Eigen::MatrixXd(1, n);
  p.A.row(0) = rng.normal_vector(n).transpose();
  p.l = Eigen::VectorXd::Constant(1, -1.0);
  p.u = Eigen::VectorXd::Constant(1, 1.0);
  QpOptions opt;
  opt.max_iterations = 3;
  const QpResult r = solve_qp(p, opt);
  CHECK(r.status == QpStatus::kMaxIterations);
  CHECK(r.iterations == 3);
  CHECK(r.primal_residual >= 0.0);

  Problem bad = base_problem(2);
  bad.P = Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(solve_qp(bad), std::invalid_argument);
}

TEST_SUITE_END();
