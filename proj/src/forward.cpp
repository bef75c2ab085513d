#include "cplab/forward.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <unordered_map>

#include "cplab/errors.hpp"
#include "cplab/parallel.hpp"
#include "cplab/rng.hpp"

namespace cplab {
namespace {

constexpr std::uint32_t kSpontaneous = std::numeric_limits<std::uint32_t>::max();

class Simulator {
 public:
  Simulator(const GraphSpec& graph, const ForwardOptions& options, std::uint64_t seed, std::uint64_t stream)
      : graph_(graph), opt_(options), rng_(hash_key({seed, stream, 0xf0f0ULL})) {}

  TrajectorySummary run(std::span<const VertexId> initial) {
    const auto& grid = opt_.grid;
    TrajectorySummary out;
    out.size.resize(grid.size());
    out.origin_infected.resize(grid.size());
    out.max_distance.resize(grid.size());

    if (opt_.h > 0.0) {
      // Spontaneous infection acts on the whole ball.
      for (VertexId v : graph_.ball(opt_.radius)) {
        const std::uint32_t s = site(v);
        sites_[s].uninfected_pos = static_cast<std::int32_t>(uninfected_.size());
        uninfected_.push_back(s);
      }
    }
    for (VertexId v : initial) {
      if (graph_.depth(v) > opt_.radius) throw DomainError("initial set must lie inside ball(L)");
      const std::uint32_t s = site(v);
      if (!sites_[s].infected) infect(s);
    }
    schedule_spontaneous();

    std::size_t k = 0;
    auto record_until = [&](double t) {
      while (k < grid.size() && grid[k] < t) {
        out.size[k] = static_cast<std::uint32_t>(active_);
        out.origin_infected[k] = origin_infected() ? 1 : 0;
        out.max_distance[k] = max_distance_;
        ++k;
      }
    };

    const double t_max = grid.empty() ? 0.0 : grid.back();
    while (k < grid.size()) {
      if (heap_.empty()) {
        record_until(std::numeric_limits<double>::infinity());
        break;
      }
      const Clock c = heap_.top();
      heap_.pop();
      if (c.site == kSpontaneous) {
        if (c.version != spontaneous_version_) continue;
      } else if (c.version != sites_[c.site].version) {
        continue;
      }
      if (c.time > t_max) {
        record_until(std::numeric_limits<double>::infinity());
        break;
      }
      record_until(c.time);
      now_ = c.time;
      ++out.events;
      if (c.site == kSpontaneous) {
        const auto idx = rng_.below(uninfected_.size());
        infect(uninfected_[idx]);
      } else if (sites_[c.site].infected) {
        heal(c.site);
      } else if (!sites_[c.site].in_ball) {
        ++suppressed_;
        schedule(c.site);
      } else {
        infect(c.site);
      }
      schedule_spontaneous();
    }
    out.suppressed = suppressed_;
    return out;
  }

 private:
  struct Site {
    VertexId vertex{};
    int depth = 0;
    bool in_ball = true;
    bool infected = false;
    bool neighbors_ready = false;
    std::uint32_t infected_in = 0;  // infected in-neighbours
    double pressure = 0.0;          // sum_{x in A} J_{x,y}
    std::uint32_t version = 0;
    std::int32_t uninfected_pos = -1;
    std::vector<std::pair<std::uint32_t, double>> out;
  };
  struct Clock {
    double time;
    std::uint32_t site;
    std::uint32_t version;
    bool operator>(const Clock& o) const noexcept { return time > o.time; }
  };

  std::uint32_t site(VertexId v) {
    const auto [it, inserted] = index_.try_emplace(v, static_cast<std::uint32_t>(sites_.size()));
    if (inserted) {
      Site s;
      s.vertex = v;
      s.depth = graph_.depth(v);
      s.in_ball = s.depth <= opt_.radius;
      sites_.push_back(std::move(s));
    }
    return it->second;
  }

  const std::vector<std::pair<std::uint32_t, double>>& out_neighbors(std::uint32_t s) {
    if (!sites_[s].neighbors_ready) {
      std::vector<std::pair<std::uint32_t, double>> list;
      for (const Neighbor& nb : graph_.neighbors(sites_[s].vertex)) list.emplace_back(site(nb.vertex), nb.weight);
      sites_[s].out = std::move(list);
      sites_[s].neighbors_ready = true;
    }
    return sites_[s].out;
  }

  bool origin_infected() {
    if (!origin_site_) {
      const auto it = index_.find(graph_.origin());
      if (it == index_.end()) return false;
      origin_site_ = it->second;
    }
    return sites_[*origin_site_].infected;
  }

  void schedule(std::uint32_t s) {
    Site& st = sites_[s];
    ++st.version;
    const double rate = st.infected ? 1.0 : opt_.lambda * st.pressure;
    if (rate > 0.0) heap_.push(Clock{now_ + rng_.exponential(rate), s, st.version});
  }

  void schedule_spontaneous() {
    ++spontaneous_version_;
    if (opt_.h > 0.0 && !uninfected_.empty()) {
      const double rate = opt_.h * static_cast<double>(uninfected_.size());
      heap_.push(Clock{now_ + rng_.exponential(rate), kSpontaneous, spontaneous_version_});
    }
  }

  void remove_uninfected(std::uint32_t s) {
    const std::int32_t pos = sites_[s].uninfected_pos;
    if (pos < 0) return;
    const std::uint32_t last = uninfected_.back();
    uninfected_[static_cast<std::size_t>(pos)] = last;
    sites_[last].uninfected_pos = pos;
    uninfected_.pop_back();
    sites_[s].uninfected_pos = -1;
  }

  void infect(std::uint32_t s) {
    sites_[s].infected = true;
    ++active_;
    if (active_ > opt_.active_cap) {
      throw ResourceError("active set exceeded the cap of " + std::to_string(opt_.active_cap));
    }
    max_distance_ = std::max(max_distance_, sites_[s].depth);
    if (opt_.h > 0.0) remove_uninfected(s);
    schedule(s);
    for (const auto& [y, w] : out_neighbors(s)) {
      Site& t = sites_[y];
      ++t.infected_in;
      t.pressure += w;
      if (!t.infected) schedule(y);
    }
  }

  void heal(std::uint32_t s) {
    Site& st = sites_[s];
    st.infected = false;
    --active_;
    if (opt_.h > 0.0 && st.in_ball) {
      st.uninfected_pos = static_cast<std::int32_t>(uninfected_.size());
      uninfected_.push_back(s);
    }
    schedule(s);
    for (const auto& [y, w] : out_neighbors(s)) {
      Site& t = sites_[y];
      --t.infected_in;
      t.pressure = t.infected_in == 0 ? 0.0 : t.pressure - w;
      if (!t.infected) schedule(y);
    }
  }

  const GraphSpec& graph_;
  const ForwardOptions& opt_;
  Rng rng_;
  double now_ = 0.0;
  std::size_t active_ = 0;
  std::size_t suppressed_ = 0;
  std::int32_t max_distance_ = -1;
  std::uint32_t spontaneous_version_ = 0;
  std::optional<std::uint32_t> origin_site_;
  std::unordered_map<VertexId, std::uint32_t, VertexIdHash> index_;
  std::vector<Site> sites_;
  std::vector<std::uint32_t> uninfected_;
  std::priority_queue<Clock, std::vector<Clock>, std::greater<>> heap_;
};

void check_options(const ForwardOptions& options) {
  if (options.grid.empty()) throw DomainError("forward run needs a nonempty time grid");
  if (!(options.grid.front() >= 0.0)) throw DomainError("time grid must be nonnegative");
  if (!std::is_sorted(options.grid.begin(), options.grid.end())) throw DomainError("time grid must be increasing");
  if (!(options.grid.back() > 0.0)) throw DomainError("t_max must be positive");
  if (!(options.lambda >= 0.0) || !(options.h >= 0.0)) throw DomainError("rates must be nonnegative");
  if (options.radius < 0) throw DomainError("radius must be nonnegative");
}

}  // namespace

TrajectorySummary run_forward(const GraphSpec& graph, std::span<const VertexId> initial, const ForwardOptions& options,
                              std::uint64_t seed, std::uint64_t stream) {
  check_options(options);
  Simulator sim(graph, options, seed, stream);
  return sim.run(initial);
}

std::vector<TrajectorySummary> sample_forward(const GraphSpec& graph, std::span<const VertexId> initial,
                                              const ForwardOptions& options, std::size_t replicas,
                                              std::uint64_t seed, int workers) {
  check_options(options);
  return map_replicas(
      replicas, workers, [] { return 0; },
      [&](int&, std::size_t i) {
        Simulator sim(graph, options, seed, static_cast<std::uint64_t>(i));
        return sim.run(initial);
      });
}

ForwardStatistics summarize_forward(const std::vector<double>& grid, const std::vector<TrajectorySummary>& runs) {
  ForwardStatistics st;
  st.grid = grid;
  std::vector<double> size(runs.size()), alive(runs.size()), origin(runs.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    for (std::size_t i = 0; i < runs.size(); ++i) {
      size[i] = runs[i].size[k];
      alive[i] = runs[i].size[k] > 0 ? 1.0 : 0.0;
      origin[i] = runs[i].origin_infected[k];
    }
    st.mean_size.push_back(mean_estimate(size));
    st.survival.push_back(mean_estimate(alive));
    st.origin.push_back(mean_estimate(origin));
  }
  std::size_t suppressed = 0;
  for (const auto& r : runs) suppressed += r.suppressed > 0 ? 1 : 0;
  st.suppressed_fraction = runs.empty() ? 0.0 : static_cast<double>(suppressed) / static_cast<double>(runs.size());
  return st;
}

std::vector<Estimate> survival_curve(const GraphSpec& graph, double lambda, const std::vector<double>& grid,
                                     std::size_t replicas, int radius, std::uint64_t seed, int workers) {
  ForwardOptions opt;
  opt.lambda = lambda;
  opt.h = 0.0;
  opt.grid = grid;
  opt.radius = radius;
  const VertexId origin = graph.origin();
  const auto runs = sample_forward(graph, std::span<const VertexId>(&origin, 1), opt, replicas, seed, workers);
  return summarize_forward(grid, runs).survival;
}

Estimate occupancy(const GraphSpec& graph, double lambda, double h, double t, std::size_t replicas, int radius,
                   std::uint64_t seed, int workers) {
  ForwardOptions opt;
  opt.lambda = lambda;
  opt.h = h;
  opt.grid = {t};
  opt.radius = radius;
  const auto runs = sample_forward(graph, {}, opt, replicas, seed, workers);
  Estimate e = summarize_forward(opt.grid, runs).origin.front();
  e.bias_bound = std::exp(-h * t);
  return e;
}

}  // namespace cplab
