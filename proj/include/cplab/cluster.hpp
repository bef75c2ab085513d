#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "cplab/geometry.hpp"
#include "cplab/gfield.hpp"
#include "cplab/parallel.hpp"

namespace cplab {

struct Segment {
  VertexId site{};
  double low = 0.0;
  double high = 0.0;
};

enum class StopRule {
  None,          // explore the whole truncated cluster
  FirstGreen,    // stop at the first green event found (indicator estimators)
  TimeBoundary,  // stop as soon as the cluster reaches -T (survival via duality)
};

struct ClusterOptions {
  static constexpr std::size_t kDefaultBudget = 1'000'000;

  double level = 0.0;  // coupling level lambda, at most the field's lambda_max
  int radius = std::numeric_limits<int>::max();
  std::size_t budget = kDefaultBudget;  // max segments
  VertexId root{};                      // exploration starts at (root, 0)
  StopRule stop = StopRule::None;
  bool keep_segments = false;
  // For each cutoff c <= T, the result carries |C cap V x [-c, 0]|.
  std::vector<double> mass_cutoffs;
};

// Backward cluster of (root, 0) restricted to ball(radius) x [-T, 0].
struct ClusterResult {
  double mass = 0.0;
  std::size_t green_hits = 0;
  bool hit_time_boundary = false;
  bool hit_space_boundary = false;
  bool budget_exhausted = false;
  bool stopped_early = false;  // stop rule fired; mass and green_hits are partial
  std::size_t segments = 0;
  int max_depth = 0;          // largest |x| among explored sites
  double lowest_time = 0.0;   // deepest time reached
  std::vector<double> mass_profile;
  std::vector<Segment> segment_list;

  bool flagged() const noexcept { return hit_space_boundary || budget_exhausted; }
};

// Worklist explorer with reusable scratch space. Segments at a site are stored as disjoint
// intervals whose lower ends are healing events (or -T), so a head inside a covered interval is
// dropped and a head above one extends it.
class ClusterExplorer {
 public:
  ClusterResult explore(EventField& field, const ClusterOptions& options);

 private:
  struct Interval {
    double low;
    double high;
  };
  struct Head {
    VertexId site;
    double time;
  };
  std::vector<std::vector<Interval>> coverage_;
  std::vector<std::uint32_t> touched_;
  std::vector<Head> stack_;
};

ClusterResult explore(EventField& field, const ClusterOptions& options);

// Per-worker state for replica loops over event fields keyed (seed, replica index).
struct FieldWorker {
  EventField field;
  ClusterExplorer explorer;
};

// Runs kernel(field, explorer, replica) on fields FieldParams{seed, replica, ...}.
template <class Kernel>
auto map_fields(const GraphSpec& graph, const FieldParams& base, std::size_t n, int workers, Kernel kernel) {
  return map_replicas(
      n, workers, [&] { return FieldWorker{EventField(graph, base), ClusterExplorer{}}; },
      [&](FieldWorker& w, std::size_t i) {
        w.field.reset(static_cast<std::uint64_t>(i));
        return kernel(w.field, w.explorer, i);
      });
}

struct SampleOptions {
  double lambda = 0.0;
  double h = 0.0;
  double window = 1.0;
  int radius = std::numeric_limits<int>::max();
  std::size_t replicas = 1;
  std::uint64_t seed = 0;
  std::size_t budget = ClusterOptions::kDefaultBudget;
  int workers = 0;
};

// n independent cluster explorations at level lambda on fields (seed, replica).
std::vector<ClusterResult> sample_masses(const GraphSpec& graph, const SampleOptions& options);

}  // namespace cplab
