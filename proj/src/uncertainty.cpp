#include "sgmpc/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sgmpc::uncertainty {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// scalar utilities
// ---------------------------------------------------------------------------

double kappa(double x) {
  if (x < 0.0) throw std::invalid_argument("kappa: x must be >= 0");
  return std::exp(x) / (1.0 + x);
}

double kappa_inv(double y) {
  if (y < 1.0) throw std::invalid_argument("kappa_inv: y must be >= 1");
  if (y == 1.0) return 0.0;
  double lo = 0.0, hi = 1.0;
  while (kappa(hi) < y) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e9) throw std::runtime_error("kappa_inv: bracket failure");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (kappa(mid) < y ? lo : hi) = mid;
    if (hi - lo <= 1e-16 * (1.0 + hi)) break;
  }
  return 0.5 * (lo + hi);
}

namespace {

// regularized lower incomplete gamma P(a, x), series / continued fraction
double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p: bad args");
  if (x == 0.0) return 0.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {  // series
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - gln);
  }
  // continued fraction (modified Lentz)
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -double(i) * (double(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return 1.0 - std::exp(-x + a * std::log(x) - gln) * h;
}

}  // namespace

double chi2_quantile(int k, double p) {
  if (k < 1) throw std::invalid_argument("chi2_quantile: k must be >= 1");
  if (p <= 0.0 || p >= 1.0)
    throw std::invalid_argument("chi2_quantile: p must be in (0,1)");
  const double a = 0.5 * double(k);
  double lo = 0.0, hi = 2.0 * double(k) + 10.0;
  while (gamma_p(a, 0.5 * hi) < p) hi *= 2.0;
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    (gamma_p(a, 0.5 * mid) < p ? lo : hi) = mid;
    if (hi - lo <= 1e-10 * (1.0 + hi)) break;
  }
  return 0.5 * (lo + hi);
}

Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m, double clamp_tol) {
  if (m.rows() != m.cols())
    throw std::invalid_argument("matrix_sqrt_psd: square matrix required");
  if ((m - m.transpose()).lpNorm<Eigen::Infinity>() >
      1e-9 * (1.0 + m.lpNorm<Eigen::Infinity>()))
    throw std::invalid_argument("matrix_sqrt_psd: matrix not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      0.5 * (m + m.transpose()));
  Eigen::VectorXd lam = eig.eigenvalues();
  const double lmax = std::max(0.0, lam.maxCoeff());
  const double floor_at = -clamp_tol * std::max(1.0, lmax);
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam(i) < floor_at)
      throw std::invalid_argument("matrix_sqrt_psd: matrix not PSD");
    lam(i) = std::max(lam(i), 0.0);
  }
  return eig.eigenvectors() * lam.cwiseSqrt().asDiagonal() *
         eig.eigenvectors().transpose();
}

// ---------------------------------------------------------------------------
// noise models
// ---------------------------------------------------------------------------

void NoiseModel::validate() const {
  if (scale.size() == 0)
    throw std::invalid_argument("NoiseModel: empty scale");
  if ((scale.array() < 0.0).any())
    throw std::invalid_argument("NoiseModel: negative scale");
  if (kind == Kind::kTruncatedGaussian && trunc_k <= 0.0)
    throw std::invalid_argument("NoiseModel: trunc_k must be > 0");
  if (covariance.size() != 0) {
    if (kind != Kind::kGaussian)
      throw std::invalid_argument(
          "NoiseModel: full covariance only supported for the gaussian kind");
    if (covariance.rows() != dim() || covariance.cols() != dim())
      throw std::invalid_argument("NoiseModel: covariance dimension mismatch");
    matrix_sqrt_psd(covariance);  // throws if not PSD
  }
}

Eigen::MatrixXd NoiseModel::variance_proxy() const {
  switch (kind) {
    case Kind::kGaussian:
      if (covariance.size() != 0) return covariance;
      return scale.array().square().matrix().asDiagonal();
    case Kind::kTruncatedGaussian:
      // symmetric truncation of a centered gaussian keeps the parent proxy
      return scale.array().square().matrix().asDiagonal();
    case Kind::kUniform:
      return (scale.array().square() / 3.0).matrix().asDiagonal();
    case Kind::kRademacher:
      return scale.array().square().matrix().asDiagonal();
  }
  throw std::logic_error("NoiseModel: unknown kind");
}

Eigen::VectorXd NoiseModel::sample(Rng& rng) const {
  const Eigen::Index n = dim();
  Eigen::VectorXd v(n);
  switch (kind) {
    case Kind::kGaussian:
      if (covariance.size() != 0)
        return matrix_sqrt_psd(covariance) * rng.normal_vector(n);
      for (Eigen::Index i = 0; i < n; ++i) v(i) = scale(i) * rng.normal();
      return v;
    case Kind::kTruncatedGaussian:
      for (Eigen::Index i = 0; i < n; ++i) {
        double z = rng.normal();
        while (std::abs(z) > trunc_k) z = rng.normal();
        v(i) = scale(i) * z;
      }
      return v;
    case Kind::kUniform:
      for (Eigen::Index i = 0; i < n; ++i)
        v(i) = scale(i) * rng.uniform(-1.0, 1.0);
      return v;
    case Kind::kRademacher:
      for (Eigen::Index i = 0; i < n; ++i)
        v(i) = (rng.next_u64() & 1u) ? scale(i) : -scale(i);
      return v;
  }
  throw std::logic_error("NoiseModel: unknown kind");
}

Eigen::VectorXd NoiseModel::hard_bound() const {
  switch (kind) {
    case Kind::kGaussian:
      return Eigen::VectorXd::Constant(dim(), kInf);
    case Kind::kTruncatedGaussian:
      return trunc_k * scale;
    case Kind::kUniform:
    case Kind::kRademacher:
      return scale;
  }
  throw std::logic_error("NoiseModel: unknown kind");
}

Eigen::VectorXd sample_noise(const NoiseModel& model, Rng& rng) {
  return model.sample(rng);
}

// ---------------------------------------------------------------------------
// error system
// ---------------------------------------------------------------------------

void NoiseBudget::validate(Eigen::Index n, Eigen::Index p) const {
  if (W.dim() != n)
    throw std::invalid_argument("NoiseBudget: W dimension mismatch");
  if (M.dim() != p)
    throw std::invalid_argument("NoiseBudget: M dimension mismatch");
  if (Sigma_eps.rows() != p || Sigma_eps.cols() != p)
    throw std::invalid_argument("NoiseBudget: Sigma_eps dimension mismatch");
  matrix_sqrt_psd(Sigma_eps);  // PSD check
}

double ErrorSystem::spectral_radius() const {
  return Ae.eigenvalues().cwiseAbs().maxCoeff();
}

ErrorSystem assemble_error_system(const Eigen::MatrixXd& A,
                                  const Eigen::MatrixXd& B,
                                  const Eigen::MatrixXd& C,
                                  const Eigen::MatrixXd& K,
                                  const Eigen::MatrixXd& L,
                                  ErrorConvention convention) {
  const Eigen::Index n = A.rows(), m = B.cols(), p = C.rows();
  if (A.cols() != n) throw std::invalid_argument("assemble: A must be square");
  if (B.rows() != n) throw std::invalid_argument("assemble: B row mismatch");
  if (C.cols() != n) throw std::invalid_argument("assemble: C col mismatch");
  if (K.rows() != m || K.cols() != n)
    throw std::invalid_argument("assemble: K must be m x n");
  if (L.rows() != n || L.cols() != p)
    throw std::invalid_argument("assemble: L must be n x p");

  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd obs = (I - L * C) * A;  // estimation-error block
  const Eigen::MatrixXd trk = A + B * K;        // tracking block
  const double sgn =
      convention == ErrorConvention::kEstimateMinusTrue ? 1.0 : -1.0;

  ErrorSystem es;
  es.n = n;
  es.m = m;
  es.p = p;
  es.convention = convention;
  es.Ae = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  es.Ae.topLeftCorner(n, n) = obs;
  es.Ae.bottomLeftCorner(n, n) = sgn * B * K;
  es.Ae.bottomRightCorner(n, n) = trk;

  es.Be1 = Eigen::MatrixXd::Zero(2 * n, n);
  es.Be1.topRows(n) = -sgn * (I - L * C);
  es.Be1.bottomRows(n) = I;

  es.Be2 = Eigen::MatrixXd::Zero(2 * n, p);
  es.Be2.topRows(n) = sgn * L;
  es.Be3 = es.Be2;

  es.Ke = Eigen::MatrixXd::Zero(n + m, 2 * n);
  es.Ke.topRightCorner(n, n) = I;
  es.Ke.bottomLeftCorner(m, n) = sgn * K;
  es.Ke.bottomRightCorner(m, n) = K;
  return es;
}

// ---------------------------------------------------------------------------
// propagation
// ---------------------------------------------------------------------------

void VarianceProxy::validate(double tol) const {
  matrix_sqrt_psd(Sigma, tol);
}

VarianceProxy propagate_variance_proxy(const ErrorSystem& es,
                                       const VarianceProxy& prev,
                                       const Eigen::MatrixXd& Sigma_eps) {
  if (prev.Sigma.rows() != es.Ae.rows())
    throw std::invalid_argument("propagate_variance_proxy: Sigma dimension");
  if (Sigma_eps.rows() != es.p || Sigma_eps.cols() != es.p)
    throw std::invalid_argument("propagate_variance_proxy: Sigma_eps size");
  Eigen::MatrixXd next = es.Ae * prev.Sigma * es.Ae.transpose() +
                         es.Be3 * Sigma_eps * es.Be3.transpose();
  return VarianceProxy{0.5 * (next + next.transpose())};
}

sets::Zonotope propagate_bias_set(const ErrorSystem& es,
                                  const sets::Zonotope& F,
                                  const sets::Zonotope& W,
                                  const sets::Zonotope& M,
                                  Eigen::Index gen_budget) {
  using sets::affine_map;
  using sets::minkowski_sum;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(es.Ae.rows());
  sets::Zonotope next = affine_map(es.Ae, F, zero);
  next = minkowski_sum(next, affine_map(es.Be1, W, zero));
  next = minkowski_sum(next, affine_map(es.Be2, M, zero));
  return sets::reduce_order(next, gen_budget);
}

sets::Ellipsoid confidence_ellipsoid(const Eigen::MatrixXd& Sigma_xi,
                                     double delta, int n_c) {
  if (delta <= 0.0 || delta > 1.0)
    throw std::invalid_argument("confidence_ellipsoid: delta in (0,1]");
  if (n_c < 1) throw std::invalid_argument("confidence_ellipsoid: n_c >= 1");
  const double y = std::pow(delta, -2.0 / double(n_c));
  const double r2 = double(n_c) + double(n_c) * kappa_inv(y);
  return sets::Ellipsoid{Eigen::VectorXd::Zero(Sigma_xi.rows()),
                         std::sqrt(r2) * matrix_sqrt_psd(Sigma_xi)};
}

sets::Ellipsoid gaussian_confidence_ellipsoid(const Eigen::MatrixXd& Sigma_xi,
                                              double delta, int n_c) {
  if (delta <= 0.0 || delta >= 1.0)
    throw std::invalid_argument("gaussian_confidence_ellipsoid: delta");
  const double r2 = chi2_quantile(n_c, 1.0 - delta);
  return sets::Ellipsoid{Eigen::VectorXd::Zero(Sigma_xi.rows()),
                         std::sqrt(r2) * matrix_sqrt_psd(Sigma_xi)};
}

// ---------------------------------------------------------------------------
// schedule
// ---------------------------------------------------------------------------

const PRSEntry& PRSSchedule::at(int t) const {
  if (t < 0) throw std::invalid_argument("PRSSchedule::at: negative t");
  if (t < int(entries_.size())) return entries_[std::size_t(t)];
  if (!converged_)
    throw std::runtime_error(
        "PRSSchedule::at: schedule did not converge within T_max; refusing "
        "to extrapolate");
  const int base = int(entries_.size()) - period_;
  return entries_[std::size_t(base + (t - base) % period_)];
}

double PRSSchedule::steady_support(const Eigen::VectorXd& a) const {
  if (!converged_)
    throw std::runtime_error("PRSSchedule::steady_support: not converged");
  double s = -kInf;
  for (int ph = 0; ph < period_; ++ph)
    s = std::max(s, steady_entry(ph).total.support(a));
  return s;
}

const PRSEntry& PRSSchedule::steady_entry(int phase) const {
  if (!converged_)
    throw std::runtime_error("PRSSchedule::steady_entry: not converged");
  const int base = int(entries_.size()) - period_;
  const int t = base + ((phase - base) % period_ + period_) % period_;
  return entries_[std::size_t(t)];
}

namespace {

// interval hull + center distance, used for steady-state detection
bool close_sets(const sets::Zonotope& a, const sets::Zonotope& b, double tol) {
  if ((a.center - b.center).lpNorm<Eigen::Infinity>() > tol) return false;
  const Eigen::VectorXd ha = a.generators.cwiseAbs().rowwise().sum();
  const Eigen::VectorXd hb = b.generators.cwiseAbs().rowwise().sum();
  return (ha - hb).lpNorm<Eigen::Infinity>() <= tol;
}

}  // namespace

PRSSchedule build_prs_schedule(const std::vector<ErrorSystem>& phases,
                               const std::vector<BudgetSegment>& segments,
                               const PrsOptions& opt) {
  if (phases.empty())
    throw std::invalid_argument("build_prs_schedule: no phases");
  if (segments.empty() || segments.front().start_t != 0)
    throw std::invalid_argument(
        "build_prs_schedule: budget segments must start at t = 0");
  for (std::size_t i = 1; i < segments.size(); ++i)
    if (segments[i].start_t <= segments[i - 1].start_t)
      throw std::invalid_argument(
          "build_prs_schedule: segment starts must be increasing");
  const Eigen::Index n = phases.front().n, m = phases.front().m;
  for (const auto& ph : phases) {
    if (ph.n != n || ph.m != m)
      throw std::invalid_argument("build_prs_schedule: phase size mismatch");
    for (const auto& seg : segments) seg.budget.validate(n, ph.p);
  }
  const int period = int(phases.size());

  // the periodic system must be contractive over one period
  Eigen::MatrixXd mono = Eigen::MatrixXd::Identity(2 * n, 2 * n);
  for (int i = 0; i < period; ++i) mono = phases[std::size_t(i)].Ae * mono;
  const double rho = mono.eigenvalues().cwiseAbs().maxCoeff();
  if (rho >= 1.0 - 1e-9)
    throw std::invalid_argument(
        "build_prs_schedule: periodic error system is not Schur (monodromy "
        "spectral radius " +
        std::to_string(rho) + ")");

  const int n_c = opt.n_c > 0 ? opt.n_c : int(n + m);
  const auto segment_at = [&](int t) -> const NoiseBudget& {
    std::size_t k = 0;
    for (std::size_t i = 0; i < segments.size(); ++i)
      if (segments[i].start_t <= t) k = i;
    return segments[k].budget;
  };

  PRSSchedule sched;
  sched.period_ = period;

  VarianceProxy proxy{opt.sigma0 * opt.sigma0 *
                      Eigen::MatrixXd::Identity(2 * n, 2 * n)};
  sets::Zonotope F = sets::Zonotope::point(Eigen::VectorXd::Zero(2 * n));
  const int last_start = segments.back().start_t;

  const auto emit = [&](const VarianceProxy& px, const sets::Zonotope& f) {
    PRSEntry e;
    e.Sigma = px.Sigma;
    e.F_err = f;
    const ErrorSystem& es0 = phases.front();
    const Eigen::MatrixXd Sxi =
        es0.Ke * px.Sigma * es0.Ke.transpose();
    e.E_xi = opt.chi_square_radius
                 ? gaussian_confidence_ellipsoid(Sxi, opt.delta, n_c)
                 : confidence_ellipsoid(Sxi, opt.delta, n_c);
    e.F_xi = sets::affine_map(es0.Ke, f, Eigen::VectorXd::Zero(n + m));
    e.total = sets::SetExpr::from(e.E_xi, e.F_xi);
    return e;
  };

  sched.entries_.push_back(emit(proxy, F));
  for (int t = 0; t < opt.T_max; ++t) {
    const ErrorSystem& es = phases[std::size_t(t % period)];
    const NoiseBudget& b_w = segment_at(t);
    const NoiseBudget& b_eps = segment_at(t + 1);
    proxy = propagate_variance_proxy(es, proxy, b_eps.Sigma_eps);
    F = propagate_bias_set(es, F, b_w.W, b_eps.M, opt.gen_budget);
    sched.entries_.push_back(emit(proxy, F));
    const int s = int(sched.entries_.size());
    if (t + 1 >= last_start + period && s > period) {
      const PRSEntry& now = sched.entries_[std::size_t(s - 1)];
      const PRSEntry& before = sched.entries_[std::size_t(s - 1 - period)];
      const double sc = 1.0 + now.Sigma.lpNorm<Eigen::Infinity>();
      if ((now.Sigma - before.Sigma).lpNorm<Eigen::Infinity>() <=
              opt.conv_tol * sc &&
          close_sets(now.F_err, before.F_err,
                     opt.conv_tol * (1.0 + now.F_err.generators.cwiseAbs()
                                               .rowwise()
                                               .sum()
                                               .maxCoeff()))) {
        sched.converged_ = true;
        break;
      }
    }
  }
  return sched;
}

// ---------------------------------------------------------------------------
// budget estimation
// ---------------------------------------------------------------------------

bool mgf_certifies(const Eigen::MatrixXd& residuals,
                   const Eigen::MatrixXd& Sigma, double tol) {
  const Eigen::Index p = residuals.rows();
  const Eigen::Index N = residuals.cols();
  if (N < 2) throw std::invalid_argument("mgf_certifies: need samples");
  if (Sigma.rows() != p || Sigma.cols() != p)
    throw std::invalid_argument("mgf_certifies: Sigma size");
  const double scales[3] = {0.5, 1.0, 2.0};
  for (Eigen::Index j = 0; j < p; ++j) {
    for (const double sgn : {1.0, -1.0}) {
      Eigen::VectorXd d = Eigen::VectorXd::Zero(p);
      d(j) = sgn;
      const double dSd = d.dot(Sigma * d);
      if (dSd <= 0.0) {
        // proxy claims a deterministic direction; samples must agree
        if ((residuals.row(j).array().abs() > 1e-12).any()) return false;
        continue;
      }
      for (const double c : scales) {
        const Eigen::VectorXd lam = (c / std::sqrt(dSd)) * d;
        const double bound = std::exp(0.5 * c * c) * (1.0 + tol);
        double mean = 0.0;
        for (Eigen::Index i = 0; i < N; ++i)
          mean += std::exp(lam.dot(residuals.col(i)));
        mean /= double(N);
        if (mean > bound) return false;
      }
    }
  }
  return true;
}

double certify_isotropic_proxy(const Eigen::MatrixXd& residuals, double tol) {
  const Eigen::Index p = residuals.rows();
  const auto pass = [&](double s) {
    return mgf_certifies(residuals, s * Eigen::MatrixXd::Identity(p, p), tol);
  };
  double hi = residuals.array().square().rowwise().mean().maxCoeff();
  if (hi <= 0.0) return 0.0;
  while (!pass(hi)) {
    hi *= 2.0;
    if (hi > 1e30) throw std::runtime_error("certify_isotropic_proxy: runaway");
  }
  double lo = hi;
  while (pass(lo) && lo > 1e-300) lo *= 0.5;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (pass(mid) ? hi : lo) = mid;
  }
  return hi;
}

EstimatedBudget estimate_noise_budget(const std::vector<EstimationData>& runs,
                                      const Eigen::MatrixXd& A,
                                      const Eigen::MatrixXd& B,
                                      const Eigen::MatrixXd& C,
                                      const std::vector<int>& group_starts,
                                      int n_segments, double inflation,
                                      double mgf_tol) {
  if (runs.empty())
    throw std::invalid_argument("estimate_noise_budget: no runs");
  if (group_starts.empty() || group_starts.front() != 0)
    throw std::invalid_argument(
        "estimate_noise_budget: group_starts must begin at 0");
  if (n_segments < 1)
    throw std::invalid_argument("estimate_noise_budget: n_segments >= 1");
  const Eigen::Index n = A.rows(), p = C.rows();
  const int n_groups = int(group_starts.size());

  // realized process disturbances, all runs and steps
  Eigen::VectorXd w_lo = Eigen::VectorXd::Constant(n, kInf);
  Eigen::VectorXd w_hi = Eigen::VectorXd::Constant(n, -kInf);
  for (const auto& run : runs) {
    const Eigen::Index T = run.u.cols();
    if (run.x.cols() != T + 1)
      throw std::invalid_argument("estimate_noise_budget: x/u length");
    for (Eigen::Index t = 0; t < T; ++t) {
      const Eigen::VectorXd w =
          run.x.col(t + 1) - A * run.x.col(t) - B * run.u.col(t);
      w_lo = w_lo.cwiseMin(w);
      w_hi = w_hi.cwiseMax(w);
    }
  }

  EstimatedBudget out;
  const Eigen::VectorXd w_c = 0.5 * (w_lo + w_hi);
  out.W = sets::Zonotope::box(w_c, inflation * 0.5 * (w_hi - w_lo));

  for (int g = 0; g < n_groups; ++g) {
    const int t_lo = group_starts[std::size_t(g)];
    const int t_hi = g + 1 < n_groups ? group_starts[std::size_t(g + 1)]
                                      : std::numeric_limits<int>::max();
    // collect per-run residual streams inside the group window
    std::vector<Eigen::VectorXd> centered;
    Eigen::VectorXd m_lo = Eigen::VectorXd::Constant(p, kInf);
    Eigen::VectorXd m_hi = Eigen::VectorXd::Constant(p, -kInf);
    for (const auto& run : runs) {
      std::vector<Eigen::VectorXd> resid;
      for (Eigen::Index t = 0; t < run.y.cols(); ++t) {
        if (int(t) < t_lo || int(t) >= t_hi) continue;
        if (!run.has_y[std::size_t(t)]) continue;
        resid.push_back(run.y.col(t) - C * run.x.col(t));
      }
      if (resid.empty()) continue;
      const int per = std::max(1, int(resid.size()) / n_segments);
      for (std::size_t s0 = 0; s0 < resid.size(); s0 += std::size_t(per)) {
        const std::size_t s1 = std::min(resid.size(), s0 + std::size_t(per));
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
        for (std::size_t i = s0; i < s1; ++i) mean += resid[i];
        mean /= double(s1 - s0);
        m_lo = m_lo.cwiseMin(mean);
        m_hi = m_hi.cwiseMax(mean);
        for (std::size_t i = s0; i < s1; ++i)
          centered.push_back(resid[i] - mean);
      }
    }
    if (centered.empty())
      throw std::invalid_argument(
          "estimate_noise_budget: group " + std::to_string(g) +
          " has no measurements");
    const Eigen::VectorXd m_c = 0.5 * (m_lo + m_hi);
    out.M_groups.push_back(
        sets::Zonotope::box(m_c, inflation * 0.5 * (m_hi - m_lo)));
    Eigen::MatrixXd R(p, Eigen::Index(centered.size()));
    for (std::size_t i = 0; i < centered.size(); ++i)
      R.col(Eigen::Index(i)) = centered[i];
    // the certified scale gets the same inflation margin as the boxes, so a
    // held-out sample certifies with slack rather than sitting on the
    // training boundary
    const double s = inflation * certify_isotropic_proxy(R, mgf_tol);
    out.Sigma_groups.push_back(s * Eigen::MatrixXd::Identity(p, p));
  }
  return out;
}

}  // namespace sgmpc::uncertainty
