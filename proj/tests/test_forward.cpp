#include <doctest.h>

#include <cmath>

#include "cplab/cluster.hpp"
#include "cplab/errors.hpp"
#include "cplab/forward.hpp"
#include "cplab/oracle.hpp"
#include "support/checks.hpp"
#include "support/coupled_forward.hpp"

using namespace cplab;

namespace {

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(a + (b - a) * i / (n - 1));
  return g;
}

}  // namespace

TEST_SUITE("forward") {
  TEST_CASE("lone site without infection: P(o in A_t) = exp(-t)") {
    const GraphSpec z = GraphSpec::lattice(1);
    ForwardOptions o{.lambda = 0.0, .h = 0.0, .grid = {0.0, std::log(2.0), 1.0, 3.0}};
    const VertexId origin = z.origin();
    const auto st = summarize_forward(o.grid, sample_forward(z, {&origin, 1}, o, 100'000, 3));
    CHECK(st.origin[0].mean == 1.0);
    CHECK_WITHIN(st.origin[1], 0.5);
    CHECK_WITHIN(st.origin[2], std::exp(-1.0));
    CHECK_WITHIN(st.origin[3], std::exp(-3.0));
    CHECK(st.mean_size[3].mean == st.origin[3].mean);
  }

  TEST_CASE("heal times are Exp(1)") {
    // Extinction time of a lone site, read off a fine grid; the empirical CDF on the grid lies in
    // the Dvoretzky-Kiefer-Wolfowitz band.
    const GraphSpec g = GraphSpec::single_vertex();
    const auto grid = linspace(0.0, 6.0, 301);
    ForwardOptions o{.grid = grid};
    const VertexId origin = g.origin();
    const std::size_t n = 20'000;
    const auto st = summarize_forward(grid, sample_forward(g, {&origin, 1}, o, n, 8));
    double d = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) d = std::max(d, std::abs((1.0 - st.survival[k].mean) - (1.0 - std::exp(-grid[k]))));
    CHECK(d <= std::sqrt(std::log(2.0 / 1e-3) / (2.0 * n)));
  }

  TEST_CASE("infection clock of an isolated neighbour") {
    // On complete n=2 from {0}: the first event comes at rate 1 + lambda, so
    // P(no infection of 1 and 0 still infected at t) = exp(-(1 + lambda) t).
    const GraphSpec k2 = GraphSpec::complete(2);
    const double lambda = 1.5;
    ForwardOptions o{.lambda = lambda, .grid = {0.2, 0.5, 1.0}};
    const VertexId origin = k2.origin();
    const auto runs = sample_forward(k2, {&origin, 1}, o, 50'000, 9);
    for (std::size_t k = 0; k < o.grid.size(); ++k) {
      std::vector<double> v;
      for (const auto& r : runs) v.push_back(r.max_distance[k] == 0 && r.origin_infected[k] ? 1.0 : 0.0);
      CHECK_WITHIN(mean_estimate(v), std::exp(-(1.0 + lambda) * o.grid[k]));
    }
    // Given the first event happened before t = 1, it was an infection with probability lambda / (1 + lambda).
    std::vector<double> infection;
    for (const auto& r : runs) {
      if (r.max_distance[2] == 1) infection.push_back(1.0);
      else if (r.size[2] == 0) infection.push_back(0.0);
    }
    CHECK_WITHIN(mean_estimate(infection), lambda / (1.0 + lambda));
  }

  TEST_CASE("empty start without spontaneous infection stays empty") {
    const GraphSpec z = GraphSpec::lattice(2);
    ForwardOptions o{.lambda = 2.0, .grid = {1.0, 10.0}};
    const auto r = run_forward(z, {}, o, 1);
    CHECK(r.size[0] == 0);
    CHECK(r.size[1] == 0);
    CHECK(r.events == 0);
  }

  TEST_CASE("subcritical first moment: E|A_t| <= exp((lambda |J| - 1) t)") {
    const GraphSpec z = GraphSpec::lattice(1);
    ForwardOptions o{.lambda = 0.3, .grid = {1.0, 2.0, 4.0, 6.0, 8.0, 10.0}};
    const VertexId origin = z.origin();
    const auto st = summarize_forward(o.grid, sample_forward(z, {&origin, 1}, o, 50'000, 10));
    for (std::size_t k = 0; k < o.grid.size(); ++k) {
      INFO("t = " << o.grid[k]);
      CHECK(st.mean_size[k].mean <= std::exp(-0.4 * o.grid[k]) + 3.0 * st.mean_size[k].std_error);
    }
  }

  TEST_CASE("forward survival matches the backward cluster reaching -t") {
    const GraphSpec z = GraphSpec::lattice(1);
    const double lambda = 1.2;
    const std::vector<double> ts = {1.0, 2.0, 5.0, 10.0};
    const std::size_t n = 40'000;
    const auto fwd = survival_curve(z, lambda, ts, n, std::numeric_limits<int>::max(), 11);
    for (std::size_t k = 0; k < ts.size(); ++k) {
      FieldParams base{.seed = 12, .window = ts[k], .lambda_max = lambda};
      const auto hits = map_fields(z, base, n, 1, [&](EventField& f, ClusterExplorer& ex, std::size_t) {
        return ex.explore(f, {.level = lambda, .stop = StopRule::TimeBoundary}).hit_time_boundary ? 1.0 : 0.0;
      });
      const Estimate bwd = mean_estimate(hits);
      INFO("t = " << ts[k] << " forward " << fwd[k].mean << " backward " << bwd.mean);
      CHECK(std::abs(fwd[k].mean - bwd.mean) <= 3.0 * combined_sigma(fwd[k], bwd));
    }
  }

  TEST_CASE("long-run occupancy on a finite graph matches the stationary solve") {
    const GraphSpec k2 = GraphSpec::complete(2);
    const Estimate e = occupancy(k2, 1.0, 1.0, 20.0, 50'000, std::numeric_limits<int>::max(), 14);
    CHECK_WITHIN(e, 0.6, 3.0, e.bias_bound);
    const GraphSpec c3 = GraphSpec::cycle(3);
    const double exact = stationary_theta(build_generator(c3, 0.7, 0.4), c3.origin());
    const Estimate f = occupancy(c3, 0.7, 0.4, 40.0, 50'000, std::numeric_limits<int>::max(), 15);
    CHECK_WITHIN(f, exact, 3.0, f.bias_bound);
  }

  TEST_CASE("library simulator agrees with the graphical construction") {
    const GraphSpec c = GraphSpec::cycle(6);
    const double lambda = 1.1, h = 0.15;
    const std::vector<double> grid = {0.5, 2.0, 5.0};
    const std::size_t n = 20'000;
    ForwardOptions o{.lambda = lambda, .h = h, .grid = grid};
    const VertexId origin = c.origin();
    const auto lib = summarize_forward(grid, sample_forward(c, {&origin, 1}, o, n, 16));
    std::vector<std::vector<double>> sizes(grid.size());
    for (std::size_t i = 0; i < n; ++i) {
      const test::CoupledForward g(c, lambda, h, grid.back(), hash_key({99, i}));
      const auto states = g.run({0}, grid);
      for (std::size_t k = 0; k < grid.size(); ++k)
        sizes[k].push_back(static_cast<double>(std::count(states[k].begin(), states[k].end(), 1)));
    }
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const Estimate ref = mean_estimate(sizes[k]);
      CHECK(std::abs(lib.mean_size[k].mean - ref.mean) <= 3.0 * combined_sigma(lib.mean_size[k], ref));
    }
  }

  TEST_CASE("attractiveness under the shared graphical construction") {
    const GraphSpec c = GraphSpec::cycle(10);
    const std::vector<double> grid = linspace(0.1, 8.0, 40);
    for (std::uint64_t s = 0; s < 300; ++s) {
      const test::CoupledForward g(c, 1.8, 0.05, grid.back(), s);
      const auto small = g.run({0, 3}, grid), large = g.run({0, 1, 3, 7}, grid);
      for (std::size_t k = 0; k < grid.size(); ++k)
        for (std::size_t x = 0; x < 10; ++x) CHECK(small[k][x] <= large[k][x]);
    }
  }

  TEST_CASE("spatial cutoff and caps") {
    const GraphSpec z = GraphSpec::lattice(1);
    ForwardOptions o{.lambda = 3.0, .grid = {20.0}, .radius = 3};
    const VertexId origin = z.origin();
    const auto runs = sample_forward(z, {&origin, 1}, o, 50, 17);
    std::size_t suppressed = 0;
    for (const auto& r : runs) {
      CHECK(r.max_distance[0] <= 3);
      CHECK(r.size[0] <= 7);
      suppressed += r.suppressed;
    }
    CHECK(suppressed > 0);
    ForwardOptions capped{.lambda = 3.0, .grid = {200.0}, .active_cap = 20};
    CHECK_THROWS_AS(sample_forward(z, {&origin, 1}, capped, 20, 18), ResourceError);
    const VertexId far = z.from_coordinates({5});
    CHECK_THROWS_AS(run_forward(z, {&far, 1}, o, 1), DomainError);
    CHECK_THROWS_AS(run_forward(z, {}, ForwardOptions{.grid = {}}, 1), DomainError);
    CHECK_THROWS_AS(run_forward(z, {}, ForwardOptions{.grid = {2.0, 1.0}}, 1), DomainError);
  }

  TEST_CASE("replicas are independent of the worker count") {
    const GraphSpec z = GraphSpec::lattice(1);
    ForwardOptions o{.lambda = 1.7, .grid = {5.0, 30.0}};
    const VertexId origin = z.origin();
    const auto a = sample_forward(z, {&origin, 1}, o, 500, 19, 1);
    const auto b = sample_forward(z, {&origin, 1}, o, 500, 19, 4);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].size == b[i].size);
      CHECK(a[i].events == b[i].events);
    }
  }
}
