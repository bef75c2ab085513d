#include "cplab/oracle.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <string>

#include "cplab/errors.hpp"

namespace cplab {
namespace {

constexpr std::size_t kDenseStateLimit = 1024;

std::size_t vertex_index(const GeneratorMatrix& gen, VertexId x) {
  if (x.code < 0 || x.code >= gen.vertices) throw DomainError("vertex outside the oracle graph");
  return static_cast<std::size_t>(x.code);
}

std::vector<double> marginals(const std::vector<double>& p, int vertices) {
  std::vector<double> theta(static_cast<std::size_t>(vertices), 0.0);
  for (std::size_t s = 0; s < p.size(); ++s) {
    for (int i = 0; i < vertices; ++i) {
      if (s >> i & 1U) theta[static_cast<std::size_t>(i)] += p[s];
    }
  }
  return theta;
}

// v <- v P with P = I + Q / rate.
void uniformized_step(const GeneratorMatrix& gen, double rate, const std::vector<double>& v, std::vector<double>& out) {
  for (std::size_t s = 0; s < v.size(); ++s) out[s] = v[s] * (1.0 - gen.exit_rate[s] / rate);
  for (std::size_t s = 0; s < v.size(); ++s) {
    if (v[s] == 0.0) continue;
    for (const auto& e : gen.rows[s]) out[e.to] += v[s] * e.rate / rate;
  }
}

}  // namespace

double GeneratorMatrix::max_exit_rate() const noexcept {
  double m = 0.0;
  for (double r : exit_rate) m = std::max(m, r);
  return m;
}

double GeneratorMatrix::rate(std::uint32_t from, std::uint32_t to) const {
  if (from == to) return -exit_rate[from];
  for (const auto& e : rows[from]) {
    if (e.to == to) return e.rate;
  }
  return 0.0;
}

std::vector<double> GeneratorMatrix::dense() const {
  const std::size_t n = states();
  std::vector<double> q(n * n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    q[s * n + s] = -exit_rate[s];
    for (const auto& e : rows[s]) q[s * n + e.to] += e.rate;
  }
  return q;
}

GeneratorMatrix build_generator(const GraphSpec& graph, double lambda, double h, int vertex_cap) {
  if (!graph.is_finite()) throw DomainError("the oracle needs a finite graph");
  if (!(lambda >= 0.0) || !(h >= 0.0)) throw DomainError("rates must be nonnegative");
  const std::size_t n = graph.vertex_count();
  if (n > static_cast<std::size_t>(vertex_cap) || n > 30) {
    throw ResourceError("oracle graph has " + std::to_string(n) + " vertices, cap is " + std::to_string(vertex_cap));
  }
  // weight[x][y] = J_{x,y}
  std::vector<std::vector<double>> weight(n, std::vector<double>(n, 0.0));
  for (std::size_t x = 0; x < n; ++x) {
    for (const Neighbor& nb : graph.neighbors(VertexId{static_cast<std::int64_t>(x)})) {
      weight[x][static_cast<std::size_t>(nb.vertex.code)] += nb.weight;
    }
  }

  GeneratorMatrix gen;
  gen.vertices = static_cast<int>(n);
  gen.lambda = lambda;
  gen.h = h;
  const std::size_t states = std::size_t{1} << n;
  gen.rows.resize(states);
  gen.exit_rate.assign(states, 0.0);
  for (std::uint32_t a = 0; a < states; ++a) {
    auto& row = gen.rows[a];
    for (std::size_t y = 0; y < n; ++y) {
      const std::uint32_t bit = 1U << y;
      double r;
      if (a & bit) {
        r = 1.0;
      } else {
        double pressure = 0.0;
        for (std::size_t x = 0; x < n; ++x) {
          if (a >> x & 1U) pressure += weight[x][y];
        }
        r = h + lambda * pressure;
      }
      if (r > 0.0) {
        row.push_back({a ^ bit, r});
        gen.exit_rate[a] += r;
      }
    }
  }
  return gen;
}

StationaryDistribution stationary(const GeneratorMatrix& gen) {
  if (!(gen.h > 0.0)) throw DomainError("stationary solve needs h > 0 (the empty state is absorbing)");
  const std::size_t n = gen.states();
  const auto last = static_cast<Eigen::Index>(n - 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  rhs(last) = 1.0;
  Eigen::VectorXd pi;

  // Q^T pi = 0 with the last equation replaced by sum pi = 1.
  if (n <= kDenseStateLimit) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t s = 0; s < n; ++s) {
      const auto si = static_cast<Eigen::Index>(s);
      a(si, si) = -gen.exit_rate[s];
      for (const auto& e : gen.rows[s]) a(static_cast<Eigen::Index>(e.to), si) += e.rate;
    }
    a.row(last).setOnes();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    pi = lu.solve(rhs);
    pi += lu.solve(rhs - a * pi);  // one refinement step
  } else {
    std::vector<Eigen::Triplet<double>> triplets;
    for (std::size_t s = 0; s < n; ++s) {
      const auto si = static_cast<Eigen::Index>(s);
      if (si != last) triplets.emplace_back(si, si, -gen.exit_rate[s]);
      for (const auto& e : gen.rows[s]) {
        if (static_cast<Eigen::Index>(e.to) != last) triplets.emplace_back(static_cast<Eigen::Index>(e.to), si, e.rate);
      }
      triplets.emplace_back(last, si, 1.0);
    }
    Eigen::SparseMatrix<double> a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    a.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) throw NumericalError("sparse LU failed on the stationary system");
    pi = lu.solve(rhs);
    pi += lu.solve(rhs - a * pi);
  }

  StationaryDistribution out;
  out.pi.assign(pi.data(), pi.data() + n);
  for (double& p : out.pi) p = std::max(p, 0.0);
  double total = 0.0;
  for (double p : out.pi) total += p;
  for (double& p : out.pi) p /= total;

  std::vector<double> flow(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    flow[s] -= out.pi[s] * gen.exit_rate[s];
    for (const auto& e : gen.rows[s]) flow[e.to] += out.pi[s] * e.rate;
  }
  for (double f : flow) out.residual = std::max(out.residual, std::abs(f));
  out.theta = marginals(out.pi, gen.vertices);
  return out;
}

double stationary_theta(const GeneratorMatrix& gen, VertexId x) {
  const std::size_t i = vertex_index(gen, x);
  return stationary(gen).theta[i];
}

std::vector<double> transient_theta_all(const GeneratorMatrix& gen, double T, double tol, std::size_t term_cap) {
  if (!(T >= 0.0)) throw DomainError("T must be nonnegative");
  const std::size_t n = gen.states();
  std::vector<double> p(n, 0.0);
  p[0] = 1.0;
  const double rate = gen.max_exit_rate();
  if (T == 0.0 || rate == 0.0) return marginals(p, gen.vertices);

  // p(T) = sum_k Poisson(k; rate T) p0 P^k. Weights are formed in log space so large rate T does
  // not underflow at k = 0; the series is cut once the accumulated weight is within tol of 1.
  const double mean = rate * T;
  std::vector<double> v = p, next(n);
  std::vector<double> acc(n, 0.0);
  double accumulated = 0.0;
  for (std::size_t k = 0;; ++k) {
    const double kd = static_cast<double>(k);
    const double w = std::exp(kd * std::log(mean) - mean - std::lgamma(kd + 1.0));
    for (std::size_t s = 0; s < n; ++s) acc[s] += w * v[s];
    accumulated += w;
    if (kd > mean && 1.0 - accumulated <= tol) break;
    if (k + 1 >= term_cap) throw NumericalError("uniformization did not converge within the term cap");
    uniformized_step(gen, rate, v, next);
    v.swap(next);
  }
  return marginals(acc, gen.vertices);
}

double transient_theta(const GeneratorMatrix& gen, VertexId x, double T, double tol) {
  const std::size_t i = vertex_index(gen, x);
  return transient_theta_all(gen, T, tol)[i];
}

ExactDerivatives exact_derivatives(const GraphSpec& graph, VertexId x, double lambda, double h, double step) {
  if (!(step > 0.0)) throw DomainError("step must be positive");
  if (!(h - step > 0.0)) throw DomainError("exact derivatives need h - step > 0");
  if (!(lambda >= 0.0)) throw DomainError("lambda must be nonnegative");
  auto f = [&](double l, double hh) {
    const GeneratorMatrix gen = build_generator(graph, l, hh);
    return stationary(gen).theta[vertex_index(gen, x)];
  };

  ExactDerivatives d;
  d.theta = f(lambda, h);

  auto central = [&](double s, bool in_lambda) {
    return in_lambda ? (f(lambda + s, h) - f(lambda - s, h)) / (2.0 * s) : (f(lambda, h + s) - f(lambda, h - s)) / (2.0 * s);
  };
  const double dh1 = central(step, false), dh2 = central(step / 2.0, false);
  d.dtheta_dh = (4.0 * dh2 - dh1) / 3.0;
  d.error_h = std::abs(d.dtheta_dh - dh2);

  if (lambda >= 2.0 * step) {
    const double dl1 = central(step, true), dl2 = central(step / 2.0, true);
    d.dtheta_dlambda = (4.0 * dl2 - dl1) / 3.0;
    d.error_lambda = std::abs(d.dtheta_dlambda - dl2);
  } else {
    // Second-order one-sided scheme from three forward points.
    d.one_sided_lambda = true;
    const double f1 = f(lambda + step, h), f2 = f(lambda + 2.0 * step, h);
    const double fw1 = (f1 - d.theta) / step, fw2 = (f2 - d.theta) / (2.0 * step);
    d.dtheta_dlambda = 2.0 * fw1 - fw2;
    d.error_lambda = std::abs(d.dtheta_dlambda - fw1);
  }
  return d;
}

ExactPoint exact_point(const GraphSpec& graph, double lambda, double h, double step) {
  ExactPoint p;
  const GeneratorMatrix gen = build_generator(graph, lambda, h);
  const StationaryDistribution st = stationary(gen);
  const auto it = std::max_element(st.theta.begin(), st.theta.end());
  p.theta_max = *it;
  p.argmax = VertexId{static_cast<std::int64_t>(it - st.theta.begin())};
  const ExactDerivatives d = exact_derivatives(graph, graph.origin(), lambda, h, step);
  p.theta = d.theta;
  p.dtheta_dlambda = d.dtheta_dlambda;
  p.dtheta_dh = d.dtheta_dh;
  p.derivative_error = std::max(d.error_lambda, d.error_h);
  return p;
}

}  // namespace cplab
