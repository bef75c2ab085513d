#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "cplab/cluster.hpp"
#include "cplab/geometry.hpp"
#include "cplab/stats.hpp"

namespace cplab {

// Shared Monte Carlo settings: window T, radius L, replica count, seed and caps.
struct EstimatorConfig {
  double window = 50.0;
  int radius = std::numeric_limits<int>::max();
  std::size_t replicas = 100'000;
  std::uint64_t seed = 0;
  std::size_t budget = ClusterOptions::kDefaultBudget;
  int workers = 0;
  // Budget-exhausted replicas above this fraction raise QualityError.
  double max_flagged_fraction = 0.01;
};

// theta = E[1 - exp(-h |C|)] over truncated clusters. Unbiased for theta_{T,L};
// bias_bound = exp(-hT) plus the observed truncated/flagged fractions.
Estimate theta(const GraphSpec& graph, double lambda, double h, const EstimatorConfig& cfg);

// P(C cap G != empty) by direct green-hit indicator, stopping each exploration at the first green.
Estimate theta_indicator(const GraphSpec& graph, double lambda, double h, const EstimatorConfig& cfg);

// chi = E[|C| exp(-h |C|)]. Budget-flagged replicas are excluded; h = 0 has an infinite bias bound
// (truncated chi_T only bounds chi from below).
Estimate chi(const GraphSpec& graph, double lambda, double h, const EstimatorConfig& cfg);

// d theta / dh = chi(lambda, h); requires h > 0.
Estimate dtheta_dh(const GraphSpec& graph, double lambda, double h, const EstimatorConfig& cfg);

double default_lambda_step(double lambda);

// Common-random-number central difference of 1 - exp(-h |C|) in lambda on shared thinning fields
// (forward difference when lambda < step). bias_bound carries no step-error term.
Estimate dtheta_dlambda(const GraphSpec& graph, double lambda, double h, std::optional<double> step,
                        const EstimatorConfig& cfg);

// P(|C cap G| = 1) read off the sampled green events.
Estimate prob_one_green(const GraphSpec& graph, double lambda, double h, const EstimatorConfig& cfg);

struct ThetaMaxResult {
  Estimate max;                  // std_error inflated by the union bound over sites
  VertexId argmax{};
  std::vector<VertexId> sites;   // V_L in canonical order
  std::vector<Estimate> per_site;
  Estimate surrogate;            // theta_{T,2L}(o), an upper bound on the maximum
};

// max_{x in V_L} theta_{T,L}(x, 0) by per-site indicator estimates; throws ResourceError when
// |V_L| exceeds site_cap.
ThetaMaxResult theta_max(const GraphSpec& graph, double lambda, double h, const EstimatorConfig& cfg,
                         std::size_t site_cap = 400);

// theta_{T,2L}(o) alone.
Estimate theta_surrogate_max(const GraphSpec& graph, double lambda, double h, const EstimatorConfig& cfg);

// Per-replica columns from one set of shared fields, for inequality checks that combine several
// quantities with correlated errors.
struct JointSample {
  double lambda = 0.0;
  double h = 0.0;
  double step = 0.0;
  bool one_sided = false;
  std::vector<double> theta;       // 1 - exp(-h m) at radius L
  std::vector<double> dtheta_dh;   // m exp(-h m)
  std::vector<double> dtheta_dl;   // CRN difference quotient of 1 - exp(-h m)
  std::vector<double> theta_2l;    // 1 - exp(-h m) at radius 2L
  std::vector<double> mass;        // m
  std::vector<double> dmass_dl;    // CRN difference quotient of m
  double flagged_fraction = 0.0;
  double space_truncated_fraction = 0.0;
};

JointSample sample_joint(const GraphSpec& graph, double lambda, double h, std::optional<double> step,
                         const EstimatorConfig& cfg, bool with_double_radius);

}  // namespace cplab
