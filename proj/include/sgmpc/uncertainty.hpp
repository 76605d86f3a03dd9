#pragma once

#include <vector>

#include <Eigen/Dense>

#include "sgmpc/rng.hpp"
#include "sgmpc/sets.hpp"

namespace sgmpc::uncertainty {

// ---------------------------------------------------------------------------
// scalar utilities
// ---------------------------------------------------------------------------

// kappa(x) = exp(x)/(1+x) on x >= 0 (strictly increasing, kappa(0)=1) and its
// inverse on y >= 1, solved by bisection to ~1e-15 relative accuracy.
double kappa(double x);
double kappa_inv(double y);

// Quantile of the chi-square distribution with k degrees of freedom, via
// bisection of the regularized incomplete gamma function (tolerance 1e-10).
double chi2_quantile(int k, double p);

// Symmetric PSD square root by eigendecomposition. Eigenvalues below
// -clamp_tol * max(1, lambda_max) throw; small negatives are clamped to zero.
Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m,
                                double clamp_tol = 1e-10);

// ---------------------------------------------------------------------------
// noise models
// ---------------------------------------------------------------------------

// Samplers with certified sub-Gaussian variance proxies:
//  gaussian          proxy = covariance (diag(scale^2) unless a full
//                    covariance is supplied)
//  truncated gaussian (resampled at k*scale) -> parent covariance
//  uniform on [-a,a] -> (a^2/3) I   (a^2/4 is not a valid proxy; a^2/3 is the
//                    sharp constant for bounded symmetric laws)
//  rademacher (+-a)  -> a^2 I
struct NoiseModel {
  enum class Kind { kGaussian, kTruncatedGaussian, kUniform, kRademacher };
  Kind kind = Kind::kGaussian;
  Eigen::VectorXd scale;       // per-axis sigma or half width
  double trunc_k = 3.0;        // truncated gaussian only
  Eigen::MatrixXd covariance;  // optional, gaussian only (full matrix)

  Eigen::Index dim() const { return scale.size(); }
  Eigen::MatrixXd variance_proxy() const;
  Eigen::VectorXd sample(Rng& rng) const;
  // Per-axis hard bound on |component| (inf entries for the gaussian).
  Eigen::VectorXd hard_bound() const;
  void validate() const;
};

Eigen::VectorXd sample_noise(const NoiseModel& model, Rng& rng);

// ---------------------------------------------------------------------------
// noise budget and error system
// ---------------------------------------------------------------------------

// Declared uncertainty description the guarantees are computed from:
// process-disturbance zonotope W, measurement-bias zonotope M, measurement
// sub-Gaussian variance proxy Sigma_eps.
struct NoiseBudget {
  sets::Zonotope W;
  sets::Zonotope M;
  Eigen::MatrixXd Sigma_eps;

  void validate(Eigen::Index n, Eigen::Index p) const;
};

// Which estimation-error sign the stacked error state uses. Both produce
// identical output-error sets (they differ by the similarity diag(-I, I));
// the pairing of signs below is the consistent one for each choice.
enum class ErrorConvention { kEstimateMinusTrue, kTrueMinusEstimate };

// Closed-loop error dynamics for e = [estimation error; x - z]:
//   e+ = Ae e + Be1 w + Be2 m+ + Be3 eps+,   xi = (x - z, u - v) = Ke e.
struct ErrorSystem {
  Eigen::MatrixXd Ae, Be1, Be2, Be3, Ke;
  Eigen::Index n = 0, m = 0, p = 0;
  ErrorConvention convention = ErrorConvention::kEstimateMinusTrue;

  double spectral_radius() const;
};

ErrorSystem assemble_error_system(
    const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
    const Eigen::MatrixXd& C, const Eigen::MatrixXd& K,
    const Eigen::MatrixXd& L,
    ErrorConvention convention = ErrorConvention::kEstimateMinusTrue);

// ---------------------------------------------------------------------------
// propagation
// ---------------------------------------------------------------------------

struct VarianceProxy {
  Eigen::MatrixXd Sigma;  // 2n x 2n, PSD

  void validate(double tol = 1e-9) const;
};

// Sigma+ = Ae Sigma Ae^T + Be3 Sigma_eps Be3^T (result symmetrized).
VarianceProxy propagate_variance_proxy(const ErrorSystem& es,
                                       const VarianceProxy& prev,
                                       const Eigen::MatrixXd& Sigma_eps);

// F+ = reduce(Ae F  (+)  Be1 W  (+)  Be2 M), Minkowski sums, sound reduction.
sets::Zonotope propagate_bias_set(const ErrorSystem& es,
                                  const sets::Zonotope& F,
                                  const sets::Zonotope& W,
                                  const sets::Zonotope& M,
                                  Eigen::Index gen_budget = 60);

// Confidence ellipsoid {shape u : |u| <= 1} with
// shape = r * sqrtm(Sigma_xi), r^2 = n_c + n_c * kappa_inv(delta^(-2/n_c)).
sets::Ellipsoid confidence_ellipsoid(const Eigen::MatrixXd& Sigma_xi,
                                     double delta, int n_c);

// Chi-square calibrated variant used by the gaussian baseline:
// r^2 = chi2_quantile(n_c, 1 - delta).
sets::Ellipsoid gaussian_confidence_ellipsoid(const Eigen::MatrixXd& Sigma_xi,
                                              double delta, int n_c);

// ---------------------------------------------------------------------------
// probabilistic reachable set schedule
// ---------------------------------------------------------------------------

struct PRSEntry {
  sets::Ellipsoid E_xi;   // stochastic part, output space
  sets::Zonotope F_xi;    // bias part, output space
  sets::SetExpr total;    // E_xi (+) F_xi
  Eigen::MatrixXd Sigma;  // error-space variance proxy at this step
  sets::Zonotope F_err;   // error-space bias set at this step
};

struct BudgetSegment {
  int start_t = 0;  // first time index the budget applies to
  NoiseBudget budget;
};

struct PrsOptions {
  double delta = 0.01;
  int n_c = 0;              // 0 -> n + m (output dimension)
  double sigma0 = 0.0;      // initial proxy sigma0^2 I on the full error state
  int T_max = 2000;         // hard cap on explicit entries
  Eigen::Index gen_budget = 60;
  double conv_tol = 1e-9;   // steady-state detection tolerance
  // Ellipsoid radius multiplier policy for the stochastic part; the
  // chi-square variant drops the sub-Gaussian correction (gaussian baseline).
  bool chi_square_radius = false;
};

// Time-indexed PRS: explicit entries until the recursions reach a periodic
// steady state, then periodic extension. Phases cycle with t (one phase =
// always-measured; k phases = delayed feedback with one corrected step per
// period). Budget segments switch the active (W, M, Sigma_eps) at their
// start times; the transition t -> t+1 draws W from the segment active at t
// and (M, Sigma_eps) from the segment active at t+1, matching a measurement
// taken at t+1.
class PRSSchedule {
 public:
  const PRSEntry& at(int t) const;
  int period() const { return period_; }
  bool converged() const { return converged_; }
  int explicit_size() const { return int(entries_.size()); }
  // Worst-case support over one steady-state period (used for terminal sets
  // and steady margins).
  double steady_support(const Eigen::VectorXd& a) const;
  const PRSEntry& steady_entry(int phase) const;

 private:
  friend PRSSchedule build_prs_schedule(const std::vector<ErrorSystem>&,
                                        const std::vector<BudgetSegment>&,
                                        const PrsOptions&);
  std::vector<PRSEntry> entries_;
  int period_ = 1;
  bool converged_ = false;
};

PRSSchedule build_prs_schedule(const std::vector<ErrorSystem>& phases,
                               const std::vector<BudgetSegment>& segments,
                               const PrsOptions& opt);

// ---------------------------------------------------------------------------
// budget estimation from data
// ---------------------------------------------------------------------------

// One recorded identification run: columns indexed by time. y columns where
// has_y[t] is false are ignored (no measurement at that step).
struct EstimationData {
  Eigen::MatrixXd x;  // n x (T+1), ground-truth states
  Eigen::MatrixXd u;  // m x T
  Eigen::MatrixXd y;  // p x (T+1)
  std::vector<bool> has_y;
};

struct EstimatedBudget {
  sets::Zonotope W;                        // shared across groups
  std::vector<sets::Zonotope> M_groups;    // one per group
  std::vector<Eigen::MatrixXd> Sigma_groups;
};

// Empirical-MGF certificate: (1/N) sum_i exp(lambda . r_i) <=
// (1+tol) exp(lambda' Sigma lambda / 2) over the probe grid of +-e_j
// directions at scales {0.5, 1, 2} (lambda normalized by the proxy). Returns
// the smallest isotropic s such that s*I passes, by bisection.
bool mgf_certifies(const Eigen::MatrixXd& residuals,
                   const Eigen::MatrixXd& Sigma, double tol);
double certify_isotropic_proxy(const Eigen::MatrixXd& residuals, double tol);

// W: inflated interval hull of realized disturbances. M (per group): inflated
// interval hull of segment means of measurement residuals (n_segments blocks
// per group). Sigma (per group): smallest certified isotropic proxy of the
// segment-mean-centered residuals, then inflated by the same margin.
EstimatedBudget estimate_noise_budget(const std::vector<EstimationData>& runs,
                                      const Eigen::MatrixXd& A,
                                      const Eigen::MatrixXd& B,
                                      const Eigen::MatrixXd& C,
                                      const std::vector<int>& group_starts,
                                      int n_segments, double inflation = 1.1,
                                      double mgf_tol = 0.1);

}  // namespace sgmpc::uncertainty
