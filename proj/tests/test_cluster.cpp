#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "cplab/cluster.hpp"
#include "cplab/errors.hpp"
#include "support/checks.hpp"

using namespace cplab;

namespace {

// Checks a kept segment list against the raw timelines: segments at a site are disjoint, contain
// no heal, end below at a heal, at -T or on top of another segment, start at the root's time 0
// or at an active arrow out of a covered point, and every active arrow into a covered point has
// its source covered at that time.
void check_cluster_closure(EventField& field, const ClusterResult& r, double level, VertexId root) {
  const double T = field.window();
  const double thr = level / field.lambda_max();
  std::map<VertexId, std::vector<Segment>> by_site;
  double mass = 0.0;
  for (const auto& s : r.segment_list) {
    by_site[s.site].push_back(s);
    mass += s.high - s.low;
  }
  CHECK(mass == doctest::Approx(r.mass).epsilon(1e-12));
  auto covered = [&](VertexId v, double t) {
    auto it = by_site.find(v);
    if (it == by_site.end()) return false;
    for (const auto& s : it->second)
      if (s.low < t && t <= s.high) return true;
    return false;
  };
  std::size_t greens = 0;
  for (auto& [site, segs] : by_site) {
    std::sort(segs.begin(), segs.end(), [](const Segment& a, const Segment& b) { return a.low < b.low; });
    for (std::size_t i = 1; i < segs.size(); ++i) CHECK(segs[i - 1].high <= segs[i].low);
    const auto tl = field.timeline(site);
    for (const auto& s : segs) {
      bool low_ok = s.low == -T;
      bool high_ok = site == root && s.high == 0.0;
      for (const auto& o : segs)
        if (o.high == s.low) low_ok = true;
      for (const auto& e : tl) {
        if (e.kind == EventKind::Heal && e.time == s.low) low_ok = true;
        if (e.time <= s.low || e.time >= s.high) continue;
        if (e.kind == EventKind::Heal) FAIL("heal inside a segment");
        if (e.kind == EventKind::Green) ++greens;
        if (e.kind == EventKind::ArrowIn && e.mark < thr) CHECK(covered(e.source, e.time));
      }
      if (!high_ok) {
        // Some covered site has an active arrow from `site` at time s.high.
        for (auto& [other, osegs] : by_site) {
          for (const auto& e : field.timeline(other)) {
            if (e.kind == EventKind::ArrowIn && e.source == site && e.time == s.high && e.mark < thr &&
                covered(other, e.time))
              high_ok = true;
          }
        }
      }
      CHECK(low_ok);
      CHECK(high_ok);
    }
  }
  CHECK(greens == r.green_hits);
}

}  // namespace

TEST_SUITE("cluster") {
  TEST_CASE("no transmission: the cluster is the root's vertical segment") {
    const GraphSpec z = GraphSpec::lattice(1);
    EventField f(z, {1, 3, 50.0, 1.0, 0.5});
    const auto r = explore(f, {.level = 0.0});
    const auto tl = f.timeline(z.origin());
    double first_heal = -50.0;
    for (const auto& e : tl) {
      if (e.kind == EventKind::Heal) {
        first_heal = e.time;
        break;
      }
    }
    CHECK(r.mass == doctest::Approx(-first_heal));
    CHECK(r.segments == 1);
  }

  TEST_CASE("mass at lambda = 0 is Exp(1) truncated at T") {
    const GraphSpec z = GraphSpec::lattice(1);
    const std::size_t n = 20'000;
    const auto res = sample_masses(z, {.lambda = 0.0, .h = 0.0, .window = 50.0, .replicas = n, .seed = 4});
    std::vector<double> m;
    for (const auto& r : res) m.push_back(r.mass);
    std::sort(m.begin(), m.end());
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double F = 1.0 - std::exp(-m[i]);
      d = std::max({d, std::abs(F - double(i) / n), std::abs(F - double(i + 1) / n)});
    }
    // Dvoretzky-Kiefer-Wolfowitz band at level 1e-3.
    CHECK(d <= std::sqrt(std::log(2.0 / 1e-3) / (2.0 * n)));
  }

  TEST_CASE("lambda = 0, h = 1: E[1 - exp(-h |C|)] = 1/2") {
    const GraphSpec z = GraphSpec::lattice(1);
    const auto res = sample_masses(z, {.lambda = 0.0, .h = 1.0, .window = 50.0, .replicas = 20'000, .seed = 5});
    std::vector<double> v;
    for (const auto& r : res) v.push_back(1.0 - std::exp(-r.mass));
    CHECK_WITHIN(mean_estimate(v), 0.5);
  }

  TEST_CASE("mass does not depend on h") {
    const GraphSpec z = GraphSpec::lattice(1);
    for (std::uint64_t s = 0; s < 50; ++s) {
      EventField a(z, {9, s, 30.0, 1.3, 0.1}), b(z, {9, s, 30.0, 1.3, 2.0});
      CHECK(explore(a, {.level = 1.3}).mass == explore(b, {.level = 1.3}).mass);
    }
  }

  TEST_CASE("coupled clusters are monotone in lambda") {
    const GraphSpec z = GraphSpec::lattice(1);
    for (std::uint64_t s = 0; s < 200; ++s) {
      EventField f(z, {21, s, 30.0, 1.6, 0.2});
      ClusterExplorer ex;
      ClusterOptions o{.keep_segments = true};
      double prev_mass = -1.0;
      std::size_t prev_greens = 0;
      for (double l : {0.0, 0.4, 0.8, 1.2, 1.6}) {
        o.level = l;
        const auto r = ex.explore(f, o);
        CHECK(r.mass >= prev_mass);
        CHECK(r.green_hits >= prev_greens);
        prev_mass = r.mass;
        prev_greens = r.green_hits;
      }
    }
  }

  TEST_CASE("clusters are closed and built from valid segments") {
    const GraphSpec z2 = GraphSpec::lattice(2);
    for (std::uint64_t s = 0; s < 30; ++s) {
      EventField f(z2, {31, s, 8.0, 0.6, 0.3});
      const auto r = explore(f, {.level = 0.45, .keep_segments = true});
      check_cluster_closure(f, r, 0.45, z2.origin());
    }
    const GraphSpec g = GraphSpec::explicit_graph(3, {{0, 1, 1.0}, {1, 2, 0.5}, {2, 0, 2.0}});
    for (std::uint64_t s = 0; s < 30; ++s) {
      EventField f(g, {32, s, 10.0, 1.0, 0.2});
      const auto r = explore(f, {.level = 0.7, .root = VertexId{1}, .keep_segments = true});
      check_cluster_closure(f, r, 0.7, VertexId{1});
    }
  }

  TEST_CASE("repeated exploration and explorer reuse are deterministic") {
    const GraphSpec z = GraphSpec::lattice(1);
    EventField f(z, {3, 1, 40.0, 1.5, 0.1});
    ClusterExplorer ex;
    const auto a = ex.explore(f, {.level = 1.5});
    EventField other(z, {3, 2, 40.0, 1.5, 0.1});
    (void)ex.explore(other, {.level = 1.5});
    const auto b = ex.explore(f, {.level = 1.5});
    CHECK(a.mass == b.mass);
    CHECK(a.green_hits == b.green_hits);
    CHECK(a.segments == b.segments);
  }

  TEST_CASE("sample_masses matches single explorations and ignores the worker count") {
    const GraphSpec z = GraphSpec::lattice(1);
    SampleOptions o{.lambda = 1.2, .h = 0.1, .window = 20.0, .replicas = 300, .seed = 17, .workers = 1};
    const auto one = sample_masses(z, o);
    o.workers = 3;
    const auto three = sample_masses(z, o);
    for (std::size_t i = 0; i < one.size(); ++i) CHECK(one[i].mass == three[i].mass);
    EventField f(z, {17, 5, 20.0, 1.2, 0.1});
    CHECK(explore(f, {.level = 1.2}).mass == one[5].mass);
  }

  TEST_CASE("budget and boundary flags") {
    const GraphSpec z = GraphSpec::lattice(1);
    EventField f(z, {2, 0, 200.0, 3.0, 0.0});
    const auto small = explore(f, {.level = 3.0, .budget = 10});
    CHECK(small.budget_exhausted);
    CHECK(small.flagged());
    const auto ball = explore(f, {.level = 3.0, .radius = 2, .budget = 1'000'000});
    CHECK(ball.hit_space_boundary);
    CHECK(ball.max_depth <= 2);
    // An unflagged result is unchanged by a larger budget.
    EventField g(z, {2, 1, 20.0, 1.0, 0.0});
    const auto r1 = explore(g, {.level = 1.0, .budget = 100'000});
    const auto r2 = explore(g, {.level = 1.0, .budget = 200'000});
    REQUIRE_FALSE(r1.flagged());
    CHECK(r1.mass == r2.mass);
    CHECK_THROWS_AS(explore(g, {.level = 1.5}), DomainError);
  }

  TEST_CASE("stop rules") {
    const GraphSpec z = GraphSpec::lattice(1);
    for (std::uint64_t s = 0; s < 100; ++s) {
      EventField f(z, {6, s, 30.0, 1.5, 0.3});
      const auto full = explore(f, {.level = 1.5});
      const auto first = explore(f, {.level = 1.5, .stop = StopRule::FirstGreen});
      CHECK((full.green_hits > 0) == (first.green_hits > 0));
      if (first.stopped_early) CHECK(first.green_hits == 1);
      const auto tb = explore(f, {.level = 1.5, .stop = StopRule::TimeBoundary});
      CHECK(tb.hit_time_boundary == full.hit_time_boundary);
    }
  }

  TEST_CASE("mass profile") {
    const GraphSpec z = GraphSpec::lattice(1);
    EventField f(z, {8, 8, 40.0, 1.4, 0.0});
    const auto r = explore(f, {.level = 1.4, .keep_segments = true, .mass_cutoffs = {5.0, 20.0, 40.0}});
    const std::array cutoffs{5.0, 20.0, 40.0};
    REQUIRE(r.mass_profile.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      const double c = cutoffs[i];
      double m = 0.0;
      for (const auto& s : r.segment_list) m += std::max(0.0, s.high - std::max(s.low, -c));
      CHECK(r.mass_profile[i] == doctest::Approx(m));
    }
    CHECK(r.mass_profile[2] == doctest::Approx(r.mass));
    CHECK_THROWS_AS(explore(f, {.level = 1.4, .mass_cutoffs = {50.0}}), DomainError);
  }

  TEST_CASE("green-hit probability equals E[1 - exp(-h |C|)]") {
    const GraphSpec z = GraphSpec::lattice(1);
    const double h = 0.5;
    const auto res = sample_masses(z, {.lambda = 1.0, .h = h, .window = 30.0, .replicas = 50'000, .seed = 12});
    std::vector<double> ind, em;
    for (const auto& r : res) {
      ind.push_back(r.green_hits > 0 ? 1.0 : 0.0);
      em.push_back(1.0 - std::exp(-h * r.mass));
    }
    const Estimate a = mean_estimate(ind), b = mean_estimate(em);
    CHECK(std::abs(a.mean - b.mean) <= 3.0 * combined_sigma(a, b));
  }

  TEST_CASE("window truncation bias is at most exp(-hT)") {
    const GraphSpec z = GraphSpec::lattice(1);
    const double h = 0.2;
    auto est = [&](double T) {
      const auto res = sample_masses(z, {.lambda = 1.0, .h = h, .window = T, .replicas = 20'000, .seed = 13});
      std::vector<double> v;
      for (const auto& r : res) v.push_back(1.0 - std::exp(-h * r.mass));
      return mean_estimate(v);
    };
    const Estimate a = est(10.0), b = est(20.0);
    CHECK(b.mean - a.mean <= std::exp(-h * 10.0) + 3.0 * combined_sigma(a, b));
    CHECK(b.mean - a.mean >= -3.0 * combined_sigma(a, b));
  }
}
