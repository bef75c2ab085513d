#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "cplab/geometry.hpp"

namespace cplab {

enum class EventKind : std::uint8_t { Heal, Green, ArrowIn };

// One point of the graphical representation, seen from the site it lives on.
// For ArrowIn, `source` is the transmitting site and `mark` the thinning mark: the arrow is
// present at coupling level lambda iff mark < lambda / lambda_max.
struct Event {
  double time = 0.0;
  VertexId source{};
  double mark = 0.0;
  EventKind kind = EventKind::Heal;

  friend bool operator==(const Event&, const Event&) = default;
};

// Events of one site in strictly decreasing time order, all inside [-T, 0].
using SiteTimeline = std::vector<Event>;

struct FieldParams {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;  // replica key
  double window = 1.0;       // T
  double lambda_max = 0.0;   // coupling ceiling; arrows are sampled at lambda_max * in_rate
  double h = 0.0;
  std::size_t event_cap = std::size_t{1} << 27;  // total stored events per field
};

// Lazily sampled realization of healing (rate 1), green (rate h) and incoming transmission
// (rate lambda_max * sum_y J_{y,x}) Poisson processes on V x [-T, 0].
//
// The window is cut into fixed blocks; every (site, block) pair draws from its own stream keyed
// by (seed, stream, site code, block index). A site's timeline is therefore a pure function of
// the field parameters and the site, whatever order sites and blocks are touched in.
//
// Not thread-safe; one field per worker.
class EventField {
 public:
  EventField(const GraphSpec& graph, const FieldParams& params);

  const GraphSpec& graph() const noexcept { return *graph_; }
  const FieldParams& params() const noexcept { return params_; }
  double window() const noexcept { return params_.window; }
  double lambda_max() const noexcept { return params_.lambda_max; }
  double h() const noexcept { return params_.h; }

  // Full-window timeline of x.
  SiteTimeline timeline(VertexId x);
  // Events with time in (t0, t1], decreasing. Requires -T <= t0 <= t1 <= 0.
  SiteTimeline events_between(VertexId x, double t0, double t1);

  // Start a fresh realization for another replica, keeping allocations.
  void reset(std::uint64_t stream);

  // Low-level block access used by the cluster explorer.
  int block_count() const noexcept { return block_count_; }
  // Block containing time t in [-T, 0]; block b covers (-(b+1)*width, -b*width].
  int block_of(double t) const noexcept;
  double block_bottom(int block) const noexcept;
  std::uint32_t site_index(VertexId x);
  VertexId site_vertex(std::uint32_t site) const noexcept { return sites_[site].vertex; }
  std::size_t touched_sites() const noexcept { return site_count_; }
  std::size_t stored_events() const noexcept { return events_.size(); }
  // Events of the block in decreasing time. The span is invalidated by the next sampling call.
  std::span<const Event> block_events(std::uint32_t site, int block);

 private:
  struct BlockRef {
    std::uint32_t begin = 0;
    std::uint32_t count = kUnsampled;
  };
  static constexpr std::uint32_t kUnsampled = std::numeric_limits<std::uint32_t>::max();

  struct SiteRecord {
    VertexId vertex{};
    double rate = 0.0;
    double arrow_rate = 0.0;
    std::vector<BlockRef> blocks;
  };

  void sample_block(SiteRecord& site, int block);

  const GraphSpec* graph_;
  FieldParams params_;
  double block_width_ = 1.0;
  int block_count_ = 1;
  std::unordered_map<VertexId, std::uint32_t, VertexIdHash> index_;
  std::vector<SiteRecord> sites_;
  std::size_t site_count_ = 0;
  std::vector<Event> events_;
};

}  // namespace cplab
