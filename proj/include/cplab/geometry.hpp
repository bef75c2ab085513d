#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cplab {

// Opaque vertex handle. The code is the canonical encoding: lattice coordinates packed into
// 64 bits, level-order index for trees, plain index for finite graphs. Ordering by code is the
// canonical vertex order.
struct VertexId {
  std::int64_t code = 0;
  friend constexpr auto operator<=>(const VertexId&, const VertexId&) = default;
};

struct VertexIdHash {
  std::size_t operator()(VertexId v) const noexcept {
    auto x = static_cast<std::uint64_t>(v.code);
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    return static_cast<std::size_t>(x);
  }
};

struct Neighbor {
  VertexId vertex;
  double weight = 0.0;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct WeightedEdge {
  int from = 0;
  int to = 0;
  double weight = 1.0;
};

enum class Family { Lattice, Tree, Complete, Explicit };

std::string to_string(Family family);

// A graph family together with its kernel J. Immutable after construction.
//
// Infinite families (lattice, tree) are never enumerated: vertices are materialized from their
// codes on demand. Finite families carry vertex indices 0..n-1 with the origin at 0.
class GraphSpec {
 public:
  static constexpr std::size_t kDefaultBallCap = 2'000'000;

  // Z^d with nearest-neighbour kernel of weight 1; 1 <= d <= 6.
  static GraphSpec lattice(int dim);
  // Regular tree of degree k >= 2, rooted at the origin.
  static GraphSpec tree(int degree);
  // Complete graph on n vertices. Default weight is 1 for n = 2 and 1/(n-1) otherwise.
  static GraphSpec complete(int n, std::optional<double> weight = std::nullopt);
  // Finite graph with explicit per-directed-edge weights.
  static GraphSpec explicit_graph(int n, std::vector<WeightedEdge> edges);
  static GraphSpec single_vertex();
  // Path 0-1-...-(n-1) and cycle, unit weight in both directions.
  static GraphSpec path(int n);
  static GraphSpec cycle(int n);

  Family family() const noexcept { return family_; }
  bool is_finite() const noexcept { return family_ == Family::Complete || family_ == Family::Explicit; }
  int dimension() const noexcept { return dim_; }
  int degree() const noexcept { return degree_; }
  // Number of vertices of a finite graph; throws DomainError for infinite families.
  std::size_t vertex_count() const;

  std::size_t ball_cap() const noexcept { return ball_cap_; }
  GraphSpec& set_ball_cap(std::size_t cap) noexcept {
    ball_cap_ = cap;
    return *this;
  }

  VertexId origin() const noexcept { return VertexId{0}; }
  bool valid(VertexId v) const noexcept;

  // All y with J_{v,y} > 0, in canonical order.
  std::vector<Neighbor> neighbors(VertexId v) const;
  // All y with J_{y,v} > 0, in canonical order.
  std::vector<Neighbor> in_neighbors(VertexId v) const;

  // |J|. For explicit graphs whose out-weight sums differ between vertices this is the maximum.
  double total_rate() const noexcept { return total_rate_; }
  // sum_y J_{y,v}; equals total_rate() on transitive families.
  double in_rate(VertexId v) const;
  double max_in_rate() const noexcept { return max_in_rate_; }

  // Source y drawn with probability J_{y,x} / in_rate(x), from a uniform u in [0, 1).
  VertexId sample_in_neighbor(VertexId x, double u) const;

  int distance(VertexId a, VertexId b) const;
  // distance(origin, v), the |v| of the ball V_L.
  int depth(VertexId v) const;

  // Vertices with depth <= L in canonical order; throws ResourceError above ball_cap().
  std::vector<VertexId> ball(int radius) const;
  // Number of vertices in ball(radius) without enumeration (saturates at SIZE_MAX).
  std::size_t ball_size(int radius) const;

  // Lattice helpers.
  VertexId from_coordinates(const std::vector<std::int64_t>& coords) const;
  std::vector<std::int64_t> coordinates(VertexId v) const;

  std::string describe() const;

 private:
  GraphSpec() = default;
  void validate(VertexId v) const;
  void finalize_explicit();

  // Tree level-order addressing.
  struct TreeAddress {
    int depth;
    std::int64_t position;
  };
  TreeAddress tree_address(std::int64_t code) const;
  std::int64_t tree_code(int depth, std::int64_t position) const;
  std::int64_t tree_parent(std::int64_t code) const;

  Family family_ = Family::Lattice;
  int dim_ = 0;
  int degree_ = 0;
  int n_ = 0;
  double weight_ = 1.0;
  double total_rate_ = 0.0;
  double max_in_rate_ = 0.0;
  std::size_t ball_cap_ = kDefaultBallCap;
  int lattice_bits_ = 64;

  // Explicit graphs: CSR adjacency sorted by neighbour index.
  std::vector<std::size_t> out_begin_, in_begin_;
  std::vector<Neighbor> out_adj_, in_adj_;
  std::vector<double> in_cumulative_;  // running sums of in_adj_ weights per vertex
  std::vector<double> in_rate_;
  std::vector<int> depth_from_origin_;
  std::vector<std::int64_t> tree_offsets_;  // first code at each depth
};

}  // namespace cplab
