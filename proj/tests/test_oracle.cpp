#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <unsupported/Eigen/MatrixFunctions>

#include "cplab/errors.hpp"
#include "cplab/oracle.hpp"

using namespace cplab;

TEST_SUITE("oracle") {
  TEST_CASE("two-vertex generator") {
    const auto gen = build_generator(GraphSpec::complete(2), 1.0, 0.5);
    REQUIRE(gen.states() == 4);
    CHECK(gen.rate(0b00, 0b01) == 0.5);
    CHECK(gen.rate(0b01, 0b11) == doctest::Approx(1.5));
    CHECK(gen.rate(0b11, 0b01) == 1.0);
    CHECK(gen.rate(0b00, 0b11) == 0.0);
    CHECK(gen.rate(0b00, 0b00) == -1.0);
  }

  TEST_CASE("rows sum to zero with nonnegative off-diagonals") {
    for (const GraphSpec& g : {GraphSpec::cycle(4), GraphSpec::path(3),
                               GraphSpec::explicit_graph(3, {{0, 1, 0.3}, {2, 1, 1.7}, {1, 0, 0.4}})}) {
      const auto gen = build_generator(g, 0.8, 0.3);
      const auto q = gen.dense();
      const std::size_t n = gen.states();
      for (std::size_t a = 0; a < n; ++a) {
        double s = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
          s += q[a * n + b];
          if (a != b) CHECK(q[a * n + b] >= 0.0);
        }
        CHECK(std::abs(s) <= 1e-12);
      }
    }
  }

  TEST_CASE("no transmission: the generator is a Kronecker sum of single-site chains") {
    const GraphSpec g = GraphSpec::cycle(3);
    const double h = 0.7;
    const auto q = build_generator(g, 0.0, h).dense();
    Eigen::Matrix2d site;
    site << -h, h, 1.0, -1.0;  // state 0 uninfected, 1 infected
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(8, 8);
    for (int i = 0; i < 3; ++i) {
      // Bit i of the state is factor i; factor 0 is the least significant.
      for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) {
          if ((a & ~(1 << i)) != (b & ~(1 << i))) continue;
          sum(a, b) += site(a >> i & 1, b >> i & 1);
        }
    }
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b) CHECK(q[static_cast<std::size_t>(a * 8 + b)] == doctest::Approx(sum(a, b)));
  }

  TEST_CASE("stationary values") {
    const GraphSpec k2 = GraphSpec::complete(2);
    const auto st = stationary(build_generator(k2, 1.0, 1.0));
    CHECK(st.theta[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(st.theta[1] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(st.residual <= 1e-12);
    for (double p : st.pi) CHECK(p >= 0.0);
    const GraphSpec one = GraphSpec::single_vertex();
    for (double h : {0.2, 1.0, 5.0}) CHECK(stationary_theta(build_generator(one, 0.0, h), one.origin()) == doctest::Approx(h / (1 + h)));
    // Vertex-transitive graphs have equal marginals.
    const auto c = stationary(build_generator(GraphSpec::cycle(5), 0.9, 0.2));
    for (double t : c.theta) CHECK(t == doctest::Approx(c.theta[0]).epsilon(1e-10));
    CHECK_THROWS_AS(stationary(build_generator(k2, 1.0, 0.0)), DomainError);
  }

  TEST_CASE("stationary solve agrees with the matrix exponential at long times") {
    const GraphSpec g = GraphSpec::path(3);
    const auto gen = build_generator(g, 1.2, 0.4);
    const auto q = gen.dense();
    Eigen::MatrixXd m(8, 8);
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b) m(a, b) = q[static_cast<std::size_t>(a * 8 + b)];
    const Eigen::MatrixXd p = (m * 200.0).exp();
    const auto st = stationary(gen);
    for (int s = 0; s < 8; ++s) CHECK(p(0, s) == doctest::Approx(st.pi[static_cast<std::size_t>(s)]).epsilon(1e-8));
    // And uniformization agrees with the exponential at a short time.
    const Eigen::MatrixXd p2 = (m * 2.0).exp();
    const auto tr = transient_theta_all(gen, 2.0);
    double x0 = 0.0;
    for (int s = 0; s < 8; ++s)
      if (s & 1) x0 += p2(0, s);
    CHECK(tr[0] == doctest::Approx(x0).epsilon(1e-10));
  }

  TEST_CASE("sparse path above the dense limit") {
    // 11 vertices: 2048 states.
    const GraphSpec c = GraphSpec::cycle(11);
    const auto st = stationary(build_generator(c, 0.8, 0.3));
    CHECK(st.residual <= 1e-12);
    for (double t : st.theta) CHECK(t == doctest::Approx(st.theta[0]).epsilon(1e-8));
  }

  TEST_CASE("transient values") {
    const GraphSpec one = GraphSpec::single_vertex();
    const auto gen = build_generator(one, 0.0, 1.0);
    CHECK(transient_theta(gen, one.origin(), 0.0) == 0.0);
    CHECK(transient_theta(gen, one.origin(), 1.0) == doctest::Approx(0.4323323584).epsilon(1e-9));
    for (const GraphSpec& g : {GraphSpec::complete(2), GraphSpec::cycle(3), GraphSpec::path(3)}) {
      const auto gn = build_generator(g, 1.0, 0.3);
      const double st = stationary_theta(gn, g.origin());
      double prev = 0.0;
      for (double T : {1.0, 2.0, 5.0, 10.0}) {
        const double tr = transient_theta(gn, g.origin(), T);
        CHECK(std::abs(tr - st) <= std::exp(-0.3 * T));
        CHECK(tr >= prev);  // attractive dynamics from the empty set
        prev = tr;
      }
    }
    CHECK_THROWS_AS(transient_theta_all(gen, 100.0, 1e-12, 5), NumericalError);
    CHECK_THROWS_AS(transient_theta(gen, one.origin(), -1.0), DomainError);
  }

  TEST_CASE("theta is at least the lone-site value h / (1 + h)") {
    for (const GraphSpec& g : {GraphSpec::complete(2), GraphSpec::cycle(4), GraphSpec::path(3)}) {
      for (double l : {0.0, 0.5, 2.0}) {
        for (double h : {0.1, 1.0, 4.0}) {
          for (double t : stationary(build_generator(g, l, h)).theta) CHECK(t >= h / (1 + h) - 1e-12);
        }
      }
    }
  }

  TEST_CASE("exact derivatives") {
    const GraphSpec k2 = GraphSpec::complete(2);
    const auto d = exact_derivatives(k2, k2.origin(), 1.0, 1.0);
    CHECK(d.dtheta_dlambda == doctest::Approx(0.08).epsilon(1e-7));
    CHECK(d.dtheta_dh == doctest::Approx(0.2).epsilon(1e-7));
    CHECK_FALSE(d.one_sided_lambda);
    const GraphSpec one = GraphSpec::single_vertex();
    for (double h : {0.2, 1.0, 5.0}) {
      const auto s = exact_derivatives(one, one.origin(), 0.5, h);
      CHECK(std::abs(s.dtheta_dlambda) <= 1e-9);
      CHECK(s.dtheta_dh == doctest::Approx(1.0 / ((1 + h) * (1 + h))).epsilon(1e-7));
    }
    const auto z = exact_derivatives(k2, k2.origin(), 0.0, 1.0);
    CHECK(z.one_sided_lambda);
    // d theta / d lambda at lambda = 0 on complete n=2 is positive.
    CHECK(z.dtheta_dlambda > 0.0);
    CHECK_THROWS_AS(exact_derivatives(k2, k2.origin(), 1.0, 1e-5, 1e-4), DomainError);
    const auto p = exact_point(GraphSpec::path(3), 1.0, 0.5);
    CHECK(p.argmax == VertexId{1});
    CHECK(p.theta_max > p.theta);
  }

  TEST_CASE("limits") {
    CHECK_THROWS_AS(build_generator(GraphSpec::lattice(1), 1.0, 1.0), DomainError);
    CHECK_THROWS_AS(build_generator(GraphSpec::cycle(13), 1.0, 1.0), ResourceError);
    CHECK_NOTHROW(build_generator(GraphSpec::cycle(13), 1.0, 1.0, 13));
    CHECK_THROWS_AS(build_generator(GraphSpec::cycle(3), -1.0, 1.0), DomainError);
  }
}
