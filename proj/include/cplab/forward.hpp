#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "cplab/geometry.hpp"
#include "cplab/stats.hpp"

namespace cplab {

struct ForwardOptions {
  double lambda = 0.0;
  double h = 0.0;
  // Increasing recording times; the run stops at grid.back().
  std::vector<double> grid;
  // Infections aimed outside ball(radius) are suppressed and counted. With h > 0 the ball is
  // enumerated (spontaneous infection acts on every site of it), so it must be finite.
  int radius = std::numeric_limits<int>::max();
  std::size_t active_cap = 1'000'000;
};

// Statistics of one trajectory sampled on the grid.
struct TrajectorySummary {
  std::vector<std::uint32_t> size;            // |A_t|
  std::vector<std::uint8_t> origin_infected;  // 1{o in A_t}
  std::vector<std::int32_t> max_distance;     // max |x| over sites infected during [0, t]; -1 if none
  std::size_t suppressed = 0;                 // infections suppressed at the spatial cutoff
  std::size_t events = 0;

  bool alive(std::size_t k) const noexcept { return size[k] > 0; }
};

// Exact simulation of the contact process with spontaneous infection started from `initial` at
// time 0: infected sites heal at rate 1, an uninfected y is infected at rate h + lambda sum_{x in A} J_{x,y}.
// Competing exponential clocks on the frontier live in a heap; a clock whose rate changes is
// invalidated and redrawn.
TrajectorySummary run_forward(const GraphSpec& graph, std::span<const VertexId> initial, const ForwardOptions& options,
                              std::uint64_t seed, std::uint64_t stream = 0);

// Independent trajectories keyed (seed, replica).
std::vector<TrajectorySummary> sample_forward(const GraphSpec& graph, std::span<const VertexId> initial,
                                              const ForwardOptions& options, std::size_t replicas,
                                              std::uint64_t seed, int workers = 0);

struct ForwardStatistics {
  std::vector<double> grid;
  std::vector<Estimate> mean_size;  // E|A_t|
  std::vector<Estimate> survival;   // P(A_t != empty)
  std::vector<Estimate> origin;     // P(o in A_t)
  double suppressed_fraction = 0.0; // replicas with at least one suppressed infection
};

ForwardStatistics summarize_forward(const std::vector<double>& grid, const std::vector<TrajectorySummary>& runs);

// P^{({o},0)}(A_t != empty) on the grid, h = 0.
std::vector<Estimate> survival_curve(const GraphSpec& graph, double lambda, const std::vector<double>& grid,
                                     std::size_t replicas, int radius, std::uint64_t seed, int workers = 0);

// P(o in A_t) started from the empty set, the long-run occupancy for large t (h > 0).
Estimate occupancy(const GraphSpec& graph, double lambda, double h, double t, std::size_t replicas, int radius,
                   std::uint64_t seed, int workers = 0);

}  // namespace cplab
