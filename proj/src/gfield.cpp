#include "cplab/gfield.hpp"

#include <algorithm>
#include <cmath>

#include "cplab/errors.hpp"
#include "cplab/rng.hpp"

namespace cplab {
namespace {

constexpr double kEventsPerBlock = 8.0;
constexpr int kMaxBlocks = 1 << 16;

}  // namespace

EventField::EventField(const GraphSpec& graph, const FieldParams& params) : graph_(&graph), params_(params) {
  if (!(params.window > 0.0) || !std::isfinite(params.window)) throw DomainError("field window T must be positive");
  if (params.lambda_max < 0.0 || params.h < 0.0) throw DomainError("field rates must be nonnegative");
  const double peak_rate = 1.0 + params.lambda_max * graph.max_in_rate();
  block_width_ = std::clamp(kEventsPerBlock / peak_rate, params.window / kMaxBlocks, params.window);
  block_count_ = static_cast<int>(std::ceil(params.window / block_width_ - 1e-12));
  block_count_ = std::clamp(block_count_, 1, kMaxBlocks);
}

void EventField::reset(std::uint64_t stream) {
  params_.stream = stream;
  index_.clear();
  site_count_ = 0;
  events_.clear();
}

int EventField::block_of(double t) const noexcept {
  const auto b = static_cast<int>(-t / block_width_);
  return std::clamp(b, 0, block_count_ - 1);
}

double EventField::block_bottom(int block) const noexcept {
  return block + 1 >= block_count_ ? -params_.window : -(block + 1) * block_width_;
}

std::uint32_t EventField::site_index(VertexId x) {
  const auto [it, inserted] = index_.try_emplace(x, static_cast<std::uint32_t>(site_count_));
  if (!inserted) return it->second;
  if (!graph_->valid(x)) {
    index_.erase(it);
    throw DomainError("vertex " + std::to_string(x.code) + " is not valid for " + graph_->describe());
  }
  if (site_count_ == sites_.size()) sites_.emplace_back();
  SiteRecord& rec = sites_[site_count_];
  rec.vertex = x;
  rec.arrow_rate = params_.lambda_max * graph_->in_rate(x);
  rec.rate = 1.0 + rec.arrow_rate;
  rec.blocks.assign(static_cast<std::size_t>(block_count_), BlockRef{});
  return static_cast<std::uint32_t>(site_count_++);
}

void EventField::sample_block(SiteRecord& site, int block) {
  const double top = -block * block_width_;
  const double bottom = block_bottom(block);
  const auto code = static_cast<std::uint64_t>(site.vertex.code);
  const auto b = static_cast<std::uint64_t>(block);
  BlockRef ref;
  ref.begin = static_cast<std::uint32_t>(events_.size());

  // Healing and transmission share one stream; green events have their own, so the
  // percolation structure does not depend on h.
  Rng rng(hash_key({params_.seed, params_.stream, code, b, 0}));
  const double heal_cut = 1.0 / site.rate;
  for (double t = top;;) {
    t -= rng.exponential(site.rate);
    if (t <= bottom) break;
    Event ev;
    ev.time = t;
    if (rng.uniform() < heal_cut) {
      ev.kind = EventKind::Heal;
    } else {
      ev.kind = EventKind::ArrowIn;
      ev.source = graph_->sample_in_neighbor(site.vertex, rng.uniform());
      ev.mark = rng.uniform();
    }
    events_.push_back(ev);
  }
  if (params_.h > 0.0) {
    const std::size_t mid = events_.size();
    Rng green(hash_key({params_.seed, params_.stream, code, b, 1}));
    for (double t = top;;) {
      t -= green.exponential(params_.h);
      if (t <= bottom) break;
      Event ev;
      ev.time = t;
      ev.kind = EventKind::Green;
      events_.push_back(ev);
    }
    std::inplace_merge(events_.begin() + ref.begin, events_.begin() + static_cast<std::ptrdiff_t>(mid),
                       events_.end(), [](const Event& a, const Event& c) { return a.time > c.time; });
  }
  if (events_.size() > params_.event_cap) {
    throw ResourceError("event field exceeded its cap of " + std::to_string(params_.event_cap) + " events");
  }
  ref.count = static_cast<std::uint32_t>(events_.size() - ref.begin);
  site.blocks[static_cast<std::size_t>(block)] = ref;
}

std::span<const Event> EventField::block_events(std::uint32_t site, int block) {
  SiteRecord& rec = sites_[site];
  BlockRef ref = rec.blocks[static_cast<std::size_t>(block)];
  if (ref.count == kUnsampled) {
    sample_block(rec, block);
    ref = rec.blocks[static_cast<std::size_t>(block)];
  }
  return {events_.data() + ref.begin, ref.count};
}

SiteTimeline EventField::timeline(VertexId x) {
  return events_between(x, -params_.window, 0.0);
}

SiteTimeline EventField::events_between(VertexId x, double t0, double t1) {
  if (!(t0 >= -params_.window && t0 <= t1 && t1 <= 0.0)) {
    throw DomainError("interval (t0, t1] must satisfy -T <= t0 <= t1 <= 0");
  }
  SiteTimeline out;
  if (t0 == t1) return out;
  const std::uint32_t site = site_index(x);
  for (int b = block_of(t1); b < block_count_; ++b) {
    if (-b * block_width_ <= t0) break;
    for (const Event& ev : block_events(site, b)) {
      if (ev.time > t1) continue;
      if (ev.time <= t0) break;
      out.push_back(ev);
    }
  }
  return out;
}

}  // namespace cplab
