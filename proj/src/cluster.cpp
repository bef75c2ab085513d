#include "cplab/cluster.hpp"

#include <algorithm>

#include "cplab/errors.hpp"

namespace cplab {

ClusterResult ClusterExplorer::explore(EventField& field, const ClusterOptions& options) {
  const double lambda_max = field.lambda_max();
  if (options.level < 0.0 || options.level > lambda_max * (1.0 + 1e-12)) {
    throw DomainError("exploration level must lie in [0, lambda_max]");
  }
  const GraphSpec& graph = field.graph();
  const double window = field.window();
  const double threshold = lambda_max > 0.0 ? options.level / lambda_max : 0.0;

  ClusterResult result;
  result.mass_profile.assign(options.mass_cutoffs.size(), 0.0);
  for (double c : options.mass_cutoffs) {
    if (!(c >= 0.0 && c <= window)) throw DomainError("mass cutoffs must lie in [0, T]");
  }

  for (std::uint32_t s : touched_) coverage_[s].clear();
  touched_.clear();
  stack_.clear();

  if (graph.depth(options.root) > options.radius) {
    result.hit_space_boundary = true;
    return result;
  }
  stack_.push_back(Head{options.root, 0.0});

  auto add_mass = [&](VertexId site, double low, double high) {
    result.mass += high - low;
    for (std::size_t i = 0; i < options.mass_cutoffs.size(); ++i) {
      const double lo = std::max(low, -options.mass_cutoffs[i]);
      if (high > lo) result.mass_profile[i] += high - lo;
    }
    if (options.keep_segments) result.segment_list.push_back(Segment{site, low, high});
    result.lowest_time = std::min(result.lowest_time, low);
  };

  while (!stack_.empty()) {
    const Head head = stack_.back();
    stack_.pop_back();

    const std::uint32_t site = field.site_index(head.site);
    if (site >= coverage_.size()) coverage_.resize(site + 1);
    auto& cov = coverage_[site];

    // Intervals sorted by high; find the first one not entirely below the head.
    auto it = std::lower_bound(cov.begin(), cov.end(), head.time,
                               [](const Interval& iv, double t) { return iv.high < t; });
    if (it != cov.end() && it->low < head.time) continue;  // already covered
    const bool has_below = it != cov.begin();
    const double floor = has_below ? std::prev(it)->high : -window;

    if (result.segments >= options.budget) {
      result.budget_exhausted = true;
      break;
    }
    ++result.segments;
    if (cov.empty()) touched_.push_back(site);
    result.max_depth = std::max(result.max_depth, graph.depth(head.site));

    // Scan downward from the head to the first heal, the covered interval below, or -T.
    double low = floor;
    bool healed = false;
    bool stop = false;
    for (int b = field.block_of(head.time); b < field.block_count() && !healed && !stop; ++b) {
      const auto events = field.block_events(site, b);
      if (events.empty()) {
        if (field.block_bottom(b) <= floor) break;
        continue;
      }
      if (events.front().time <= floor && field.block_bottom(b) <= floor) {
        // Block entirely at or below the floor.
        break;
      }
      for (const Event& ev : events) {
        if (ev.time >= head.time) continue;
        if (ev.time <= floor) break;
        if (ev.kind == EventKind::Heal) {
          low = ev.time;
          healed = true;
          break;
        }
        if (ev.kind == EventKind::Green) {
          ++result.green_hits;
          if (options.stop == StopRule::FirstGreen) {
            stop = true;
            low = ev.time;
            break;
          }
        } else if (ev.mark < threshold) {
          if (graph.depth(ev.source) > options.radius) {
            result.hit_space_boundary = true;
          } else {
            stack_.push_back(Head{ev.source, ev.time});
          }
        }
      }
      if (field.block_bottom(b) <= floor) break;
    }

    add_mass(head.site, low, head.time);
    if (stop) {
      result.stopped_early = true;
      cov.insert(it, Interval{low, head.time});
      break;
    }
    if (healed) {
      cov.insert(it, Interval{low, head.time});
    } else if (has_below) {
      std::prev(it)->high = head.time;
    } else {
      cov.insert(it, Interval{-window, head.time});
      result.hit_time_boundary = true;
      if (options.stop == StopRule::TimeBoundary) {
        result.stopped_early = true;
        break;
      }
    }
  }
  return result;
}

ClusterResult explore(EventField& field, const ClusterOptions& options) {
  ClusterExplorer explorer;
  return explorer.explore(field, options);
}

std::vector<ClusterResult> sample_masses(const GraphSpec& graph, const SampleOptions& options) {
  if (options.replicas < 1) throw DomainError("sample_masses needs at least one replica");
  FieldParams base;
  base.seed = options.seed;
  base.window = options.window;
  base.lambda_max = options.lambda;
  base.h = options.h;
  ClusterOptions co;
  co.level = options.lambda;
  co.radius = options.radius;
  co.budget = options.budget;
  return map_fields(graph, base, options.replicas, options.workers,
                    [&](EventField& field, ClusterExplorer& explorer, std::size_t) {
                      return explorer.explore(field, co);
                    });
}

}  // namespace cplab
