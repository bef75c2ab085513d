#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cplab/estimators.hpp"
#include "cplab/geometry.hpp"
#include "cplab/stats.hpp"

namespace cplab {

enum class Verdict { Holds, HoldsWithinNoise, Violated, Excluded };

std::string to_string(Verdict v);

// margin >= 0: holds; -3 sigma <= margin < 0: holds within noise; otherwise violated.
Verdict classify_margin(double margin, double sigma);

struct InequalityRow {
  std::string inequality;  // "PDI1b", "PDI2b", "chi-derivative", "chi-integrated"
  double lambda = 0.0;
  double h = 0.0;
  Estimate lhs;
  Estimate rhs;
  double margin = 0.0;  // rhs - lhs
  double sigma = 0.0;   // combined standard error of the margin
  double z = 0.0;       // margin / sigma (0 when sigma = 0)
  Verdict verdict = Verdict::Holds;
  std::string mode;     // "exact", "exact-max", "surrogate", "bound-check only"
  std::string note;
};

struct InequalityReport {
  std::vector<InequalityRow> rows;
  bool any_violated() const;
};

// Finite-volume inequalities on oracle values of a finite graph, evaluated at the origin with
// theta_max the maximum of the per-vertex stationary theta.
InequalityReport pdi_check_exact(const GraphSpec& graph, const std::vector<double>& lambdas,
                                 const std::vector<double>& hs, double step = 1e-4);

struct PdiOptions {
  std::optional<double> lambda_step;
  // Per-site enumeration of theta_max when |V_L| <= site_cap, otherwise theta_{T,2L}(o).
  std::size_t site_cap = 400;
  // Replicas per site in the enumeration (0: the estimator replica count).
  std::size_t replicas_per_site = 0;
  bool force_surrogate = false;
};

// PDI1b and PDI2b at every (lambda, h) with h > 0, from one set of shared fields per point. The
// margins are delta-method estimates over per-replica columns.
InequalityReport pdi_check(const GraphSpec& graph, const std::vector<double>& lambdas, const std::vector<double>& hs,
                           const EstimatorConfig& cfg, const PdiOptions& options = {});

// d chi / d lambda <= |J| chi^2 at h = 0 for subcritical lambdas; points whose budget-flagged
// fraction exceeds cfg.max_flagged_fraction are excluded.
InequalityReport chi_ineq_check(const GraphSpec& graph, const std::vector<double>& lambdas,
                                const EstimatorConfig& cfg, std::optional<double> lambda_step = std::nullopt);

// chi(lambda) |J| (lambda_T - lambda) >= 1 with chi taken at h = 0 over the window; truncation
// only lowers chi so the check is conservative. sigma includes the lambda_T uncertainty.
InequalityReport chi_integrated_check(const GraphSpec& graph, const std::vector<double>& lambdas, double lambda_t,
                                      double lambda_t_sigma, const EstimatorConfig& cfg);

// ---------------------------------------------------------------------------------------------
// Critical point.

struct CriticalOptions {
  double lo = 0.0;
  double hi = 4.0;
  // Forward survival pipeline: P(A_t != empty) at t0/2, t0, 2 t0, 4 t0.
  double survival_t0 = 50.0;
  std::size_t survival_replicas = 50'000;
  // Susceptibility pipeline: chi_T at T0/2, T0, 2 T0, 4 T0 from one exploration per replica.
  double chi_t0 = 50.0;
  std::size_t chi_replicas = 50'000;
  int bisection_steps = 5;
  std::size_t coarse_replicas = 5'000;
  int fine_points = 5;
  double fine_halfwidth = 0.04;
  std::size_t bootstrap = 200;
  double confidence = 0.95;
  std::size_t budget = 10'000'000;
  std::uint64_t seed = 0;
  int workers = 0;
};

// Curvature in log-time of a growth curve f: S = [log f(4t) - log f(2t)] - [log f(2t) - log f(t)].
// S >= 0 marks the supercritical side (S = 0 exactly when f has reached a plateau); S is -inf when
// f vanishes at the longest time.
struct CurvaturePoint {
  double lambda = 0.0;
  double stat = 0.0;        // horizon t0
  double stat_short = 0.0;  // horizon t0 / 2
  double stat_sigma = 0.0;  // bootstrap
  std::vector<double> boot;        // bootstrap replicates of stat
  std::vector<double> boot_short;  // and of stat_short
};

struct ThresholdEstimate {
  double value = 0.0;
  double ci = 0.0;              // half-width: bootstrap and horizon shift in quadrature
  double bootstrap_ci = 0.0;
  double horizon_shift = 0.0;   // crossing at t0 minus crossing at t0 / 2
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  std::vector<CurvaturePoint> bisection;
  std::vector<CurvaturePoint> grid;
  LinearFit fit;
};

struct CriticalResult {
  bool transition = false;
  std::string note;
  ThresholdEstimate lambda_t;  // susceptibility pipeline
  ThresholdEstimate lambda_h;  // survival pipeline
  double difference = 0.0;
  double combined_ci = 0.0;
  bool consistent = false;     // |lambda_T - lambda_H| <= combined_ci
};

CurvaturePoint survival_curvature(const GraphSpec& graph, double lambda, double t0, std::size_t replicas,
                                  std::uint64_t seed, int workers, std::size_t bootstrap = 0);
CurvaturePoint chi_curvature(const GraphSpec& graph, double lambda, double t0, std::size_t replicas,
                             std::uint64_t seed, int workers, std::size_t budget, std::size_t bootstrap = 0);

ThresholdEstimate estimate_lambda_h(const GraphSpec& graph, const CriticalOptions& options);
ThresholdEstimate estimate_lambda_t(const GraphSpec& graph, const CriticalOptions& options);

// Both thresholds. Finite graphs report no transition. DomainError when [lo, hi] does not bracket
// the sign change of either statistic.
CriticalResult estimate_lambda_c(const GraphSpec& graph, const CriticalOptions& options);

// ---------------------------------------------------------------------------------------------
// Fits.

struct FitPoint {
  double x = 0.0;  // abscissa before the log (h, lambda - lambda_c, t or r)
  double y = 0.0;
  double y_sigma = 0.0;
  bool excluded = false;
  std::string note;
};

struct FitReport {
  std::string quantity;
  double slope = 0.0;
  double slope_stderr = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double window_lo = 0.0;
  double window_hi = 0.0;
  std::vector<FitPoint> points;
  std::vector<double> residuals;
  double surcharge = 0.0;    // slope shift from moving lambda_c across its CI
  double bound = 0.0;        // bound the slope is compared with
  double threshold = 0.0;    // bound + tolerance actually applied
  bool passed = false;
  double sensitivity = 0.0;  // doubling shift of the fitted slope in units of slope_stderr
  std::string verdict;
};

enum class ThetaEstimator { Indicator, ExpMass };

struct DeltaFitOptions {
  std::vector<double> hs;       // log-spaced, spanning at least two decades
  double window_factor = 10.0;  // T = window_factor / h
  int radius = std::numeric_limits<int>::max();
  std::size_t replicas = 20'000;
  ThetaEstimator estimator = ThetaEstimator::Indicator;
  double lambda_c_ci = 0.0;     // refit at lambda_c -+ ci for the surcharge
  bool doubling_check = true;   // rerun with doubled T
  std::uint64_t seed = 0;
  int workers = 0;
  std::size_t budget = 10'000'000;
};

// Log-log slope of theta(lambda, h) against h. At lambda_c the bound is slope <= 1/2; with
// `expect_linear` the report checks slope = 1 within 0.05 + 2 sigma (linear response).
FitReport fit_delta(const GraphSpec& graph, double lambda, const DeltaFitOptions& options, bool expect_linear = false);

struct BetaFitOptions {
  std::vector<double> offsets = {0.1, 0.2, 0.4, 0.8};  // lambda - lambda_c
  double t_max = 400.0;
  std::size_t replicas = 20'000;
  double lambda_c_ci = 0.0;
  std::uint64_t seed = 0;
  int workers = 0;
  std::size_t budget = 10'000'000;
};

// theta_+(lambda) = P(C(o,0) reaches time -t_max) at h = 0, log-log slope in lambda - lambda_c.
// A point whose hitting probability still drops between t_max/2 and t_max by more than 3 sigma
// is flagged as not at plateau.
FitReport fit_beta(const GraphSpec& graph, double lambda_c, const BetaFitOptions& options);

struct DecayOptions {
  std::vector<double> t_grid;       // recording times for E|A_t|
  double fit_lo = 2.0;              // pre-registered window
  double fit_hi = 12.0;
  std::vector<int> r_grid;          // reach distances
  std::vector<double> sub_grid;     // t, s values for subadditivity
  double t_max = 50.0;              // run length for the reach statistic
  std::size_t replicas = 200'000;
  int radius = std::numeric_limits<int>::max();
  double min_r_squared = 0.99;
  std::uint64_t seed = 0;
  int workers = 0;
};

struct DecayResult {
  FitReport tau;           // slope of log E|A_t| = eta; tau = -1 / slope
  FitReport mu;            // slope of log P(reach distance r)
  double eta = 0.0;
  double eta_sigma = 0.0;
  double tau_hat = 0.0;
  InequalityReport subadditivity;  // E|A_t| E|A_s| - E|A_{t+s}| >= 0
};

// Subcritical decay at h = 0 from {o}. QualityError when R^2 of the time fit is below the
// threshold (non-exponential residual pattern).
DecayResult decay_fit(const GraphSpec& graph, double lambda, const DecayOptions& options);

struct EtaScanRow {
  double lambda = 0.0;
  double eta = 0.0;
  double sigma = 0.0;
};

struct EtaScanResult {
  std::vector<EtaScanRow> rows;
  double window_lo = 0.0;
  double window_hi = 0.0;
  // Largest lambda with eta < 0 at 3 sigma and smallest with eta > 0 at 3 sigma.
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  bool monotone = false;    // nondecreasing within 3 sigma
  bool brackets = false;    // bracket_lo <= lambda_c <= bracket_hi
  bool sign_ok = false;     // eta < 0 below lambda_c - ci and > 0 above lambda_c + ci
  std::string note;
};

// eta(lambda) = slope of log E|A_t| over [window_lo, window_hi] per lambda.
EtaScanResult eta_sign_scan(const GraphSpec& graph, const std::vector<double>& lambdas, double lambda_c,
                            double lambda_c_ci, double window_lo, double window_hi, std::size_t replicas,
                            std::uint64_t seed, int workers = 0);

}  // namespace cplab
