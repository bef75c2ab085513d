#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cplab/geometry.hpp"

namespace cplab {

// Generator of the contact process with spontaneous infection on all subsets of a finite vertex
// set. State bit i is vertex i in canonical order. Off-diagonal rates only; the diagonal is
// minus the exit rate.
struct GeneratorMatrix {
  struct Entry {
    std::uint32_t to;
    double rate;
  };

  int vertices = 0;
  double lambda = 0.0;
  double h = 0.0;
  std::vector<std::vector<Entry>> rows;
  std::vector<double> exit_rate;

  std::size_t states() const noexcept { return rows.size(); }
  double max_exit_rate() const noexcept;
  // Q(a, b) including the diagonal.
  double rate(std::uint32_t from, std::uint32_t to) const;
  // Row-major dense copy, for tests and small solves.
  std::vector<double> dense() const;
};

constexpr int kDefaultOracleCap = 12;

// Throws DomainError for infinite families and ResourceError above `vertex_cap`.
GeneratorMatrix build_generator(const GraphSpec& graph, double lambda, double h, int vertex_cap = kDefaultOracleCap);

struct StationaryDistribution {
  std::vector<double> pi;
  std::vector<double> theta;  // P(x infected) per vertex
  double residual = 0.0;      // ||pi Q||_inf
};

// pi Q = 0, sum pi = 1 by direct elimination. DomainError when h = 0 (absorbing empty state).
StationaryDistribution stationary(const GeneratorMatrix& gen);
double stationary_theta(const GeneratorMatrix& gen, VertexId x);

// P(x in A_T | A_0 = empty) per vertex by uniformization to absolute tolerance `tol`.
// NumericalError if more than `term_cap` terms are needed.
std::vector<double> transient_theta_all(const GeneratorMatrix& gen, double T, double tol = 1e-12,
                                        std::size_t term_cap = 50'000'000);
double transient_theta(const GeneratorMatrix& gen, VertexId x, double T, double tol = 1e-12);

struct ExactDerivatives {
  double theta = 0.0;
  double dtheta_dlambda = 0.0;
  double dtheta_dh = 0.0;
  // |R(step) - D(step/2)|, the size of the last extrapolation correction.
  double error_lambda = 0.0;
  double error_h = 0.0;
  bool one_sided_lambda = false;
};

// Richardson-extrapolated differences of the stationary theta at x. Requires h - step > 0; in
// lambda a one-sided scheme is used when lambda < 2 step.
ExactDerivatives exact_derivatives(const GraphSpec& graph, VertexId x, double lambda, double h, double step = 1e-4);

struct ExactPoint {
  double theta = 0.0;  // at the origin
  double theta_max = 0.0;
  VertexId argmax{};
  double dtheta_dlambda = 0.0;
  double dtheta_dh = 0.0;
  double derivative_error = 0.0;
};

// Everything the differential inequalities need at (lambda, h), at the origin.
ExactPoint exact_point(const GraphSpec& graph, double lambda, double h, double step = 1e-4);

}  // namespace cplab
