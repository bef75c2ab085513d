#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/poisson.hpp>
#include <cmath>
#include <map>

#include "cplab/errors.hpp"
#include "cplab/gfield.hpp"

using namespace cplab;

namespace {

std::size_t count_kind(const SiteTimeline& tl, EventKind kind) {
  std::size_t c = 0;
  for (const auto& e : tl) c += e.kind == kind;
  return c;
}

// Pearson goodness of fit of counts against Poisson(mean), pooling bins with expectation < 5.
double poisson_fit_p(const std::vector<std::size_t>& counts, double mean) {
  const boost::math::poisson_distribution<double> pois(mean);
  const double n = static_cast<double>(counts.size());
  std::map<std::size_t, double> observed;
  for (auto c : counts) observed[c] += 1.0;
  std::size_t lo = 0;
  while (n * boost::math::cdf(pois, static_cast<double>(lo)) < 5.0) ++lo;
  std::size_t hi = lo;
  while (n * boost::math::cdf(boost::math::complement(pois, static_cast<double>(hi))) >= 5.0) ++hi;
  double stat = 0.0;
  int bins = 0;
  for (std::size_t k = lo; k <= hi; ++k) {
    const double expected = k == lo   ? n * boost::math::cdf(pois, static_cast<double>(lo))
                            : k == hi ? n * boost::math::cdf(boost::math::complement(pois, static_cast<double>(hi - 1)))
                                      : n * boost::math::pdf(pois, static_cast<double>(k));
    double obs = 0.0;
    for (const auto& [c, m] : observed) {
      if ((k == lo && c <= lo) || (k == hi && c >= hi) || (c == k && k != lo && k != hi)) obs += m;
    }
    stat += (obs - expected) * (obs - expected) / expected;
    ++bins;
  }
  const boost::math::chi_squared_distribution<double> chi2(bins - 1);
  return boost::math::cdf(boost::math::complement(chi2, stat));
}

}  // namespace

TEST_SUITE("gfield") {
  TEST_CASE("timelines are ordered and inside the window") {
    const GraphSpec z = GraphSpec::lattice(1);
    EventField f(z, {3, 0, 20.0, 1.0, 0.5});
    for (std::int64_t c = -5; c <= 5; ++c) {
      const auto tl = f.timeline(z.from_coordinates({c}));
      for (std::size_t i = 0; i < tl.size(); ++i) {
        CHECK(tl[i].time <= 0.0);
        CHECK(tl[i].time >= -20.0);
        if (i > 0) CHECK(tl[i].time < tl[i - 1].time);
        if (tl[i].kind == EventKind::ArrowIn) {
          CHECK(z.distance(tl[i].source, z.from_coordinates({c})) == 1);
          CHECK(tl[i].mark >= 0.0);
          CHECK(tl[i].mark < 1.0);
        }
      }
    }
  }

  TEST_CASE("rates of zero produce no events of that kind") {
    const GraphSpec z = GraphSpec::lattice(1);
    EventField no_green(z, {1, 0, 100.0, 1.0, 0.0});
    CHECK(count_kind(no_green.timeline(z.origin()), EventKind::Green) == 0);
    EventField no_arrow(z, {1, 0, 100.0, 0.0, 1.0});
    CHECK(count_kind(no_arrow.timeline(z.origin()), EventKind::ArrowIn) == 0);
    CHECK(count_kind(no_arrow.timeline(z.origin()), EventKind::Green) > 0);
  }

  TEST_CASE("repeated queries and touch order do not change the realization") {
    const GraphSpec z2 = GraphSpec::lattice(2);
    const FieldParams p{42, 9, 30.0, 0.8, 0.3};
    EventField a(z2, p), b(z2, p);
    std::vector<VertexId> sites;
    for (std::int64_t x = -3; x <= 3; ++x)
      for (std::int64_t y = -3; y <= 3; ++y) sites.push_back(z2.from_coordinates({x, y}));
    std::vector<SiteTimeline> forward;
    for (auto v : sites) forward.push_back(a.timeline(v));
    for (std::size_t i = sites.size(); i-- > 0;) {
      // Partial reads first, in a different order, then the full timeline.
      (void)b.events_between(sites[i], -5.0, -1.0);
    }
    for (std::size_t i = sites.size(); i-- > 0;) CHECK(b.timeline(sites[i]) == forward[i]);
    for (std::size_t i = 0; i < sites.size(); ++i) CHECK(a.timeline(sites[i]) == forward[i]);
    a.reset(9);
    CHECK(a.timeline(sites[3]) == forward[3]);
    a.reset(10);
    CHECK(a.timeline(sites[3]) != forward[3]);
  }

  TEST_CASE("greens come from their own stream") {
    const GraphSpec z = GraphSpec::lattice(1);
    EventField lo(z, {5, 2, 40.0, 1.0, 0.1}), hi(z, {5, 2, 40.0, 1.0, 3.0});
    auto strip = [](SiteTimeline tl) {
      std::erase_if(tl, [](const Event& e) { return e.kind == EventKind::Green; });
      return tl;
    };
    for (std::int64_t c = -3; c <= 3; ++c) {
      const auto v = z.from_coordinates({c});
      CHECK(strip(lo.timeline(v)) == strip(hi.timeline(v)));
    }
  }

  TEST_CASE("events_between partitions the timeline") {
    const GraphSpec z = GraphSpec::lattice(1);
    EventField f(z, {8, 1, 25.0, 1.2, 0.4});
    const auto full = f.timeline(z.origin());
    CHECK(f.events_between(z.origin(), -25.0, 0.0) == full);
    CHECK(f.events_between(z.origin(), -3.0, -3.0).empty());
    SiteTimeline joined;
    const std::vector<double> cuts = {0.0, -0.7, -6.1, -6.2, -19.9, -25.0};
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const auto part = f.events_between(z.origin(), cuts[i + 1], cuts[i]);
      for (const auto& e : part) {
        CHECK(e.time > cuts[i + 1]);
        CHECK(e.time <= cuts[i]);
      }
      joined.insert(joined.end(), part.begin(), part.end());
    }
    CHECK(joined == full);
    CHECK_THROWS_AS(f.events_between(z.origin(), -1.0, -2.0), DomainError);
    CHECK_THROWS_AS(f.events_between(z.origin(), -26.0, 0.0), DomainError);
    CHECK_THROWS_AS(f.events_between(z.origin(), -1.0, 0.5), DomainError);
    CHECK_THROWS_AS(EventField(z, {0, 0, -1.0, 1.0, 0.0}), DomainError);
    CHECK_THROWS_AS(EventField(z, {0, 0, 1.0, -1.0, 0.0}), DomainError);
  }

  TEST_CASE("event cap") {
    const GraphSpec z = GraphSpec::lattice(1);
    FieldParams p{1, 0, 1000.0, 1.0, 1.0};
    p.event_cap = 100;
    EventField f(z, p);
    CHECK_THROWS_AS(f.timeline(z.origin()), ResourceError);
  }

  TEST_CASE("single-site heal count over a long window") {
    const GraphSpec g = GraphSpec::single_vertex();
    EventField f(g, {2024, 0, 1000.0, 0.0, 0.0});
    const double c = static_cast<double>(count_kind(f.timeline(g.origin()), EventKind::Heal));
    CHECK(std::abs(c - 1000.0) <= 3.3 * std::sqrt(1000.0));
  }

  TEST_CASE("per-site counts are Poisson") {
    // Lattice Z: heal rate 1, green rate h, arrow rate lambda_max * 2.
    const GraphSpec z = GraphSpec::lattice(1);
    const double T = 5.0, lmax = 0.6, h = 0.3;
    EventField f(z, {77, 0, T, lmax, h});
    std::vector<std::size_t> heal, green, arrow;
    for (std::int64_t c = 0; c < 10'000; ++c) {
      const auto tl = f.timeline(z.from_coordinates({c}));
      heal.push_back(count_kind(tl, EventKind::Heal));
      green.push_back(count_kind(tl, EventKind::Green));
      arrow.push_back(count_kind(tl, EventKind::ArrowIn));
    }
    CHECK(poisson_fit_p(heal, T) >= 1e-3);
    CHECK(poisson_fit_p(green, h * T) >= 1e-3);
    CHECK(poisson_fit_p(arrow, 2.0 * lmax * T) >= 1e-3);
  }

  TEST_CASE("arrow sources follow the in-weights") {
    // Vertex 0 receives from 1, 2, 3 with weights 1, 2, 3.
    const GraphSpec g = GraphSpec::explicit_graph(4, {{1, 0, 1.0}, {2, 0, 2.0}, {3, 0, 3.0}, {0, 1, 1.0}});
    EventField f(g, {5, 0, 20'000.0, 0.5, 0.0});
    std::array<double, 4> counts{};
    double marks = 0.0, n = 0.0;
    for (const auto& e : f.timeline(VertexId{0})) {
      if (e.kind != EventKind::ArrowIn) continue;
      counts[static_cast<std::size_t>(e.source.code)] += 1.0;
      marks += e.mark;
      n += 1.0;
    }
    // Rate 0.5 * 6 over 20000: about 60000 arrows.
    CHECK(std::abs(n - 60'000.0) <= 3.3 * std::sqrt(60'000.0));
    CHECK(counts[0] == 0.0);
    double stat = 0.0;
    for (int y = 1; y <= 3; ++y) {
      const double expected = n * y / 6.0;
      stat += (counts[static_cast<std::size_t>(y)] - expected) * (counts[static_cast<std::size_t>(y)] - expected) / expected;
    }
    const boost::math::chi_squared_distribution<double> chi2(2);
    CHECK(boost::math::cdf(boost::math::complement(chi2, stat)) >= 1e-3);
    // Uniform marks: mean 1/2, sd 1/sqrt(12 n).
    CHECK(std::abs(marks / n - 0.5) <= 3.3 / std::sqrt(12.0 * n));
  }

  TEST_CASE("distinct sites and replicas are uncorrelated") {
    const GraphSpec z = GraphSpec::lattice(1);
    const std::size_t n = 4000;
    std::vector<double> a(n), b(n), c(n);
    EventField f(z, {13, 0, 4.0, 0.5, 0.5});
    for (std::size_t i = 0; i < n; ++i) {
      f.reset(i);
      a[i] = static_cast<double>(f.timeline(z.origin()).size());
      b[i] = static_cast<double>(f.timeline(z.from_coordinates({1})).size());
      f.reset(i + n);
      c[i] = static_cast<double>(f.timeline(z.origin()).size());
    }
    auto corr = [&](const std::vector<double>& x, const std::vector<double>& y) {
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
      mx /= n, my /= n;
      double sxy = 0, sxx = 0, syy = 0;
      for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
      }
      return sxy / std::sqrt(sxx * syy);
    };
    CHECK(std::abs(corr(a, b)) <= 3.3 / std::sqrt(double(n)));
    CHECK(std::abs(corr(a, c)) <= 3.3 / std::sqrt(double(n)));
  }
}
