#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "cplab/geometry.hpp"
#include "cplab/rng.hpp"

namespace cplab::test {

// Forward graphical construction on a finite graph: all heal, green and arrow events on
// [0, t_max] are drawn up front and then applied in time order to any number of initial sets,
// so trajectories from different initial sets share one realization.
class CoupledForward {
 public:
  CoupledForward(const GraphSpec& graph, double lambda, double h, double t_max, std::uint64_t seed) {
    const auto n = static_cast<int>(graph.vertex_count());
    n_ = n;
    Rng rng(seed);
    auto poisson_times = [&](double rate, auto&& emit) {
      if (rate <= 0.0) return;
      for (double t = rng.exponential(rate); t < t_max; t += rng.exponential(rate)) emit(t);
    };
    for (int x = 0; x < n; ++x) {
      poisson_times(1.0, [&](double t) { events_.push_back({t, x, -1, Kind::Heal}); });
      poisson_times(h, [&](double t) { events_.push_back({t, x, -1, Kind::Green}); });
      for (const auto& nb : graph.neighbors(VertexId{x})) {
        const int y = static_cast<int>(nb.vertex.code);
        poisson_times(lambda * nb.weight, [&](double t) { events_.push_back({t, x, y, Kind::Arrow}); });
      }
    }
    std::sort(events_.begin(), events_.end(), [](const Ev& a, const Ev& b) { return a.time < b.time; });
  }

  // Infected indicator per vertex at each time of `grid` (increasing).
  std::vector<std::vector<std::uint8_t>> run(const std::vector<int>& initial, const std::vector<double>& grid) const {
    std::vector<std::uint8_t> state(static_cast<std::size_t>(n_), 0);
    for (int x : initial) state[static_cast<std::size_t>(x)] = 1;
    std::vector<std::vector<std::uint8_t>> out;
    std::size_t k = 0;
    for (const auto& e : events_) {
      while (k < grid.size() && grid[k] < e.time) out.push_back(state), ++k;
      if (k == grid.size()) break;
      auto& here = state[static_cast<std::size_t>(e.site)];
      switch (e.kind) {
        case Kind::Heal: here = 0; break;
        case Kind::Green: here = 1; break;
        case Kind::Arrow:
          if (here) state[static_cast<std::size_t>(e.target)] = 1;
          break;
      }
    }
    while (k < grid.size()) out.push_back(state), ++k;
    return out;
  }

 private:
  enum class Kind { Heal, Green, Arrow };
  struct Ev {
    double time;
    int site;
    int target;
    Kind kind;
  };
  int n_ = 0;
  std::vector<Ev> events_;
};

}  // namespace cplab::test
