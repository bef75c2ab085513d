#include "cplab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <queue>
#include <sstream>

#include "cplab/errors.hpp"

namespace cplab {
namespace {

constexpr int kUnreachable = std::numeric_limits<int>::max();

std::uint64_t zigzag(std::int64_t c) {
  return (static_cast<std::uint64_t>(c) << 1) ^ static_cast<std::uint64_t>(c >> 63);
}

std::int64_t unzigzag(std::uint64_t z) {
  return static_cast<std::int64_t>(z >> 1) ^ -static_cast<std::int64_t>(z & 1);
}

std::size_t saturating_add(std::size_t a, std::size_t b) {
  return a > std::numeric_limits<std::size_t>::max() - b ? std::numeric_limits<std::size_t>::max()
                                                         : a + b;
}

std::size_t saturating_mul(std::size_t a, std::size_t b) {
  if (a != 0 && b > std::numeric_limits<std::size_t>::max() / a) {
    return std::numeric_limits<std::size_t>::max();
  }
  return a * b;
}

std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = saturating_mul(r, n - k + i) / i;
  return r;
}

}  // namespace

std::string to_string(Family family) {
  switch (family) {
    case Family::Lattice:
      return "lattice";
    case Family::Tree:
      return "tree";
    case Family::Complete:
      return "complete";
    case Family::Explicit:
      return "explicit";
  }
  return "unknown";
}

GraphSpec GraphSpec::lattice(int dim) {
  if (dim < 1 || dim > 6) throw DomainError("lattice dimension must be in [1, 6]");
  GraphSpec g;
  g.family_ = Family::Lattice;
  g.dim_ = dim;
  g.lattice_bits_ = 64 / dim;
  g.total_rate_ = 2.0 * dim;
  g.max_in_rate_ = g.total_rate_;
  return g;
}

GraphSpec GraphSpec::tree(int degree) {
  if (degree < 2) throw DomainError("tree degree must be at least 2");
  GraphSpec g;
  g.family_ = Family::Tree;
  g.degree_ = degree;
  g.total_rate_ = degree;
  g.max_in_rate_ = degree;
  if (degree >= 3) {
    // Offsets while the level sizes fit comfortably in 62 bits.
    std::int64_t offset = 0;
    std::int64_t size = 1;
    const std::int64_t limit = std::int64_t{1} << 62;
    while (offset <= limit - size) {
      g.tree_offsets_.push_back(offset);
      offset += size;
      size = (g.tree_offsets_.size() == 1) ? degree : size * (degree - 1);
      if (size > limit) break;
    }
    g.tree_offsets_.push_back(offset);
  }
  return g;
}

GraphSpec GraphSpec::complete(int n, std::optional<double> weight) {
  if (n < 1) throw DomainError("complete graph needs at least one vertex");
  GraphSpec g;
  g.family_ = Family::Complete;
  g.n_ = n;
  g.weight_ = weight.value_or(n <= 2 ? 1.0 : 1.0 / (n - 1));
  if (!(g.weight_ > 0.0)) throw DomainError("complete graph weight must be positive");
  g.total_rate_ = (n - 1) * g.weight_;
  g.max_in_rate_ = g.total_rate_;
  return g;
}

GraphSpec GraphSpec::explicit_graph(int n, std::vector<WeightedEdge> edges) {
  if (n < 1) throw DomainError("explicit graph needs at least one vertex");
  GraphSpec g;
  g.family_ = Family::Explicit;
  g.n_ = n;
  std::map<std::pair<int, int>, double> merged;
  for (const auto& e : edges) {
    if (e.from < 0 || e.from >= n || e.to < 0 || e.to >= n) {
      throw DomainError("edge endpoint out of range");
    }
    if (e.from == e.to) throw DomainError("self-loops are not allowed");
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
      throw DomainError("edge weights must be positive and finite");
    }
    merged[{e.from, e.to}] += e.weight;
  }
  g.out_begin_.assign(n + 1, 0);
  g.in_begin_.assign(n + 1, 0);
  for (const auto& [key, w] : merged) {
    ++g.out_begin_[key.first + 1];
    ++g.in_begin_[key.second + 1];
  }
  for (int v = 0; v < n; ++v) {
    g.out_begin_[v + 1] += g.out_begin_[v];
    g.in_begin_[v + 1] += g.in_begin_[v];
  }
  g.out_adj_.resize(merged.size());
  g.in_adj_.resize(merged.size());
  std::vector<std::size_t> out_fill(g.out_begin_.begin(), g.out_begin_.end() - 1);
  std::vector<std::size_t> in_fill(g.in_begin_.begin(), g.in_begin_.end() - 1);
  // std::map iteration is sorted by (from, to): out lists come out sorted by target.
  for (const auto& [key, w] : merged) {
    g.out_adj_[out_fill[key.first]++] = Neighbor{VertexId{key.second}, w};
    g.in_adj_[in_fill[key.second]++] = Neighbor{VertexId{key.first}, w};
  }
  for (int v = 0; v < n; ++v) {
    std::sort(g.in_adj_.begin() + static_cast<std::ptrdiff_t>(g.in_begin_[v]),
              g.in_adj_.begin() + static_cast<std::ptrdiff_t>(g.in_begin_[v + 1]),
              [](const Neighbor& a, const Neighbor& b) { return a.vertex < b.vertex; });
  }
  g.finalize_explicit();
  return g;
}

void GraphSpec::finalize_explicit() {
  in_rate_.assign(n_, 0.0);
  in_cumulative_.resize(in_adj_.size());
  total_rate_ = 0.0;
  for (int v = 0; v < n_; ++v) {
    double out = 0.0;
    for (std::size_t i = out_begin_[v]; i < out_begin_[v + 1]; ++i) out += out_adj_[i].weight;
    total_rate_ = std::max(total_rate_, out);
    double acc = 0.0;
    for (std::size_t i = in_begin_[v]; i < in_begin_[v + 1]; ++i) {
      acc += in_adj_[i].weight;
      in_cumulative_[i] = acc;
    }
    in_rate_[v] = acc;
  }
  max_in_rate_ = in_rate_.empty() ? 0.0 : *std::max_element(in_rate_.begin(), in_rate_.end());

  // Graph distance on the undirected support.
  depth_from_origin_.assign(n_, kUnreachable);
  std::queue<int> queue;
  depth_from_origin_[0] = 0;
  queue.push(0);
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop();
    auto visit = [&](int y) {
      if (depth_from_origin_[y] == kUnreachable) {
        depth_from_origin_[y] = depth_from_origin_[v] + 1;
        queue.push(y);
      }
    };
    for (std::size_t i = out_begin_[v]; i < out_begin_[v + 1]; ++i) visit(static_cast<int>(out_adj_[i].vertex.code));
    for (std::size_t i = in_begin_[v]; i < in_begin_[v + 1]; ++i) visit(static_cast<int>(in_adj_[i].vertex.code));
  }
}

GraphSpec GraphSpec::single_vertex() { return explicit_graph(1, {}); }

GraphSpec GraphSpec::path(int n) {
  std::vector<WeightedEdge> edges;
  for (int i = 0; i + 1 < n; ++i) {
    edges.push_back({i, i + 1, 1.0});
    edges.push_back({i + 1, i, 1.0});
  }
  return explicit_graph(n, std::move(edges));
}

GraphSpec GraphSpec::cycle(int n) {
  if (n < 3) throw DomainError("cycle needs at least three vertices");
  std::vector<WeightedEdge> edges;
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    edges.push_back({i, j, 1.0});
    edges.push_back({j, i, 1.0});
  }
  return explicit_graph(n, std::move(edges));
}

std::size_t GraphSpec::vertex_count() const {
  if (!is_finite()) throw DomainError("infinite graph family has no vertex count");
  return static_cast<std::size_t>(n_);
}

bool GraphSpec::valid(VertexId v) const noexcept {
  switch (family_) {
    case Family::Lattice: {
      if (dim_ == 1) return true;
      if (lattice_bits_ < 64 && dim_ * lattice_bits_ < 64) {
        return (static_cast<std::uint64_t>(v.code) >> (dim_ * lattice_bits_)) == 0;
      }
      return true;
    }
    case Family::Tree:
      if (v.code < 0) return false;
      if (degree_ >= 3) return v.code < tree_offsets_.back();
      return true;
    case Family::Complete:
    case Family::Explicit:
      return v.code >= 0 && v.code < n_;
  }
  return false;
}

void GraphSpec::validate(VertexId v) const {
  if (!valid(v)) {
    throw DomainError("vertex " + std::to_string(v.code) + " is not valid for " + describe());
  }
}

VertexId GraphSpec::from_coordinates(const std::vector<std::int64_t>& coords) const {
  if (family_ != Family::Lattice) throw DomainError("coordinates only exist on lattices");
  if (static_cast<int>(coords.size()) != dim_) throw DomainError("coordinate dimension mismatch");
  if (dim_ == 1) return VertexId{coords[0]};
  std::uint64_t code = 0;
  const std::uint64_t field_limit = std::uint64_t{1} << lattice_bits_;
  for (int i = 0; i < dim_; ++i) {
    const std::uint64_t z = zigzag(coords[i]);
    if (z >= field_limit) throw DomainError("lattice coordinate out of encodable range");
    code |= z << (i * lattice_bits_);
  }
  return VertexId{static_cast<std::int64_t>(code)};
}

std::vector<std::int64_t> GraphSpec::coordinates(VertexId v) const {
  if (family_ != Family::Lattice) throw DomainError("coordinates only exist on lattices");
  if (dim_ == 1) return {v.code};
  validate(v);
  std::vector<std::int64_t> out(dim_);
  const std::uint64_t mask = (std::uint64_t{1} << lattice_bits_) - 1;
  const auto code = static_cast<std::uint64_t>(v.code);
  for (int i = 0; i < dim_; ++i) out[i] = unzigzag((code >> (i * lattice_bits_)) & mask);
  return out;
}

GraphSpec::TreeAddress GraphSpec::tree_address(std::int64_t code) const {
  if (code == 0) return {0, 0};
  if (degree_ == 2) {
    // Level j >= 1 holds codes 2j-1 and 2j.
    const std::int64_t depth = (code + 1) / 2;
    return {static_cast<int>(depth), code - (2 * depth - 1)};
  }
  const auto it = std::upper_bound(tree_offsets_.begin(), tree_offsets_.end(), code);
  const int depth = static_cast<int>(it - tree_offsets_.begin()) - 1;
  return {depth, code - tree_offsets_[depth]};
}

std::int64_t GraphSpec::tree_code(int depth, std::int64_t position) const {
  if (depth == 0) return 0;
  if (degree_ == 2) return 2 * static_cast<std::int64_t>(depth) - 1 + position;
  if (depth + 1 >= static_cast<int>(tree_offsets_.size())) {
    throw ResourceError("tree depth exceeds encodable range");
  }
  return tree_offsets_[depth] + position;
}

std::int64_t GraphSpec::tree_parent(std::int64_t code) const {
  const auto [depth, position] = tree_address(code);
  if (depth <= 1) return 0;
  return tree_code(depth - 1, position / (degree_ - 1));
}

std::vector<Neighbor> GraphSpec::neighbors(VertexId v) const {
  validate(v);
  std::vector<Neighbor> out;
  switch (family_) {
    case Family::Lattice: {
      if (dim_ == 1) {
        out = {{VertexId{v.code - 1}, 1.0}, {VertexId{v.code + 1}, 1.0}};
        break;
      }
      auto coords = coordinates(v);
      for (int i = 0; i < dim_; ++i) {
        for (int step : {-1, 1}) {
          coords[i] += step;
          out.push_back({from_coordinates(coords), 1.0});
          coords[i] -= step;
        }
      }
      std::sort(out.begin(), out.end(),
                [](const Neighbor& a, const Neighbor& b) { return a.vertex < b.vertex; });
      break;
    }
    case Family::Tree: {
      const auto [depth, position] = tree_address(v.code);
      if (depth > 0) out.push_back({VertexId{tree_parent(v.code)}, 1.0});
      if (depth == 0) {
        for (int c = 0; c < degree_; ++c) out.push_back({VertexId{tree_code(1, c)}, 1.0});
      } else {
        for (int c = 0; c < degree_ - 1; ++c) {
          out.push_back({VertexId{tree_code(depth + 1, position * (degree_ - 1) + c)}, 1.0});
        }
      }
      break;
    }
    case Family::Complete:
      for (int y = 0; y < n_; ++y) {
        if (y != v.code) out.push_back({VertexId{y}, weight_});
      }
      break;
    case Family::Explicit:
      out.assign(out_adj_.begin() + static_cast<std::ptrdiff_t>(out_begin_[v.code]),
                 out_adj_.begin() + static_cast<std::ptrdiff_t>(out_begin_[v.code + 1]));
      break;
  }
  return out;
}

std::vector<Neighbor> GraphSpec::in_neighbors(VertexId v) const {
  if (family_ != Family::Explicit) return neighbors(v);  // symmetric kernels
  validate(v);
  return {in_adj_.begin() + static_cast<std::ptrdiff_t>(in_begin_[v.code]),
          in_adj_.begin() + static_cast<std::ptrdiff_t>(in_begin_[v.code + 1])};
}

double GraphSpec::in_rate(VertexId v) const {
  if (family_ == Family::Explicit) return in_rate_[static_cast<std::size_t>(v.code)];
  return total_rate_;
}

VertexId GraphSpec::sample_in_neighbor(VertexId x, double u) const {
  switch (family_) {
    case Family::Lattice: {
      const auto idx = static_cast<int>(u * 2 * dim_);
      if (dim_ == 1) return VertexId{idx == 0 ? x.code - 1 : x.code + 1};
      auto coords = coordinates(x);
      coords[idx / 2] += (idx % 2 == 0) ? -1 : 1;
      return from_coordinates(coords);
    }
    case Family::Tree: {
      const auto [depth, position] = tree_address(x.code);
      const auto idx = static_cast<std::int64_t>(u * degree_);
      if (depth == 0) return VertexId{tree_code(1, idx)};
      if (idx == 0) return VertexId{tree_parent(x.code)};
      return VertexId{tree_code(depth + 1, position * (degree_ - 1) + idx - 1)};
    }
    case Family::Complete: {
      auto idx = static_cast<std::int64_t>(u * (n_ - 1));
      if (idx >= x.code) ++idx;
      return VertexId{idx};
    }
    case Family::Explicit: {
      const std::size_t b = in_begin_[x.code];
      const std::size_t e = in_begin_[x.code + 1];
      const double target = u * in_rate_[x.code];
      const auto it = std::upper_bound(in_cumulative_.begin() + static_cast<std::ptrdiff_t>(b),
                                       in_cumulative_.begin() + static_cast<std::ptrdiff_t>(e), target);
      const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - in_cumulative_.begin()), e - 1);
      return in_adj_[i].vertex;
    }
  }
  return x;
}

int GraphSpec::depth(VertexId v) const {
  switch (family_) {
    case Family::Lattice: {
      if (dim_ == 1) return static_cast<int>(std::min<std::int64_t>(std::llabs(v.code), kUnreachable));
      std::int64_t s = 0;
      for (auto c : coordinates(v)) s += std::llabs(c);
      return static_cast<int>(std::min<std::int64_t>(s, kUnreachable));
    }
    case Family::Tree:
      return tree_address(v.code).depth;
    case Family::Complete:
      return v.code == 0 ? 0 : 1;
    case Family::Explicit:
      return depth_from_origin_[static_cast<std::size_t>(v.code)];
  }
  return 0;
}

int GraphSpec::distance(VertexId a, VertexId b) const {
  validate(a);
  validate(b);
  switch (family_) {
    case Family::Lattice: {
      if (dim_ == 1) return static_cast<int>(std::llabs(a.code - b.code));
      const auto ca = coordinates(a);
      const auto cb = coordinates(b);
      std::int64_t s = 0;
      for (int i = 0; i < dim_; ++i) s += std::llabs(ca[i] - cb[i]);
      return static_cast<int>(s);
    }
    case Family::Tree: {
      int d = 0;
      std::int64_t x = a.code;
      std::int64_t y = b.code;
      int dx = tree_address(x).depth;
      int dy = tree_address(y).depth;
      while (x != y) {
        if (dx >= dy) {
          x = tree_parent(x);
          --dx;
        } else {
          y = tree_parent(y);
          --dy;
        }
        ++d;
      }
      return d;
    }
    case Family::Complete:
      return a == b ? 0 : 1;
    case Family::Explicit: {
      if (a == b) return 0;
      std::vector<int> dist(n_, kUnreachable);
      std::queue<int> queue;
      dist[a.code] = 0;
      queue.push(static_cast<int>(a.code));
      while (!queue.empty()) {
        const int v = queue.front();
        queue.pop();
        if (v == b.code) return dist[v];
        auto visit = [&](VertexId y) {
          if (dist[y.code] == kUnreachable) {
            dist[y.code] = dist[v] + 1;
            queue.push(static_cast<int>(y.code));
          }
        };
        for (std::size_t i = out_begin_[v]; i < out_begin_[v + 1]; ++i) visit(out_adj_[i].vertex);
        for (std::size_t i = in_begin_[v]; i < in_begin_[v + 1]; ++i) visit(in_adj_[i].vertex);
      }
      return kUnreachable;
    }
  }
  return 0;
}

std::size_t GraphSpec::ball_size(int radius) const {
  if (radius < 0) throw DomainError("ball radius must be nonnegative");
  const auto L = static_cast<std::size_t>(radius);
  switch (family_) {
    case Family::Lattice: {
      // #{x in Z^d : |x|_1 <= L} = sum_k 2^k C(d,k) C(L,k)
      std::size_t total = 0;
      for (std::size_t k = 0; k <= std::min<std::size_t>(dim_, L); ++k) {
        total = saturating_add(total, saturating_mul(saturating_mul(std::size_t{1} << k, binomial(dim_, k)),
                                                     binomial(L, k)));
      }
      return total;
    }
    case Family::Tree: {
      if (degree_ == 2) return saturating_add(1, saturating_mul(2, L));
      std::size_t total = 1;
      std::size_t level = degree_;
      for (std::size_t j = 1; j <= L; ++j) {
        total = saturating_add(total, level);
        if (total == std::numeric_limits<std::size_t>::max()) break;
        level = saturating_mul(level, degree_ - 1);
      }
      return total;
    }
    case Family::Complete:
      return radius == 0 ? 1 : static_cast<std::size_t>(n_);
    case Family::Explicit:
      return static_cast<std::size_t>(std::count_if(depth_from_origin_.begin(), depth_from_origin_.end(),
                                                    [&](int d) { return d <= radius; }));
  }
  return 0;
}

std::vector<VertexId> GraphSpec::ball(int radius) const {
  const std::size_t size = ball_size(radius);
  if (size > ball_cap_) {
    throw ResourceError("ball of radius " + std::to_string(radius) + " has " + std::to_string(size) +
                        " vertices, above the cap of " + std::to_string(ball_cap_));
  }
  std::vector<VertexId> out;
  out.reserve(size);
  switch (family_) {
    case Family::Lattice: {
      std::vector<std::int64_t> coords(dim_, 0);
      auto rec = [&](auto&& self, int axis, std::int64_t budget) -> void {
        if (axis == dim_) {
          out.push_back(from_coordinates(coords));
          return;
        }
        for (std::int64_t c = -budget; c <= budget; ++c) {
          coords[axis] = c;
          self(self, axis + 1, budget - std::llabs(c));
        }
        coords[axis] = 0;
      };
      rec(rec, 0, radius);
      break;
    }
    case Family::Tree: {
      const std::int64_t end = degree_ == 2 ? 2 * static_cast<std::int64_t>(radius) + 1
                                            : tree_code(radius + 1, 0);
      for (std::int64_t c = 0; c < end; ++c) out.push_back(VertexId{c});
      break;
    }
    case Family::Complete:
    case Family::Explicit:
      for (int v = 0; v < n_; ++v) {
        if (depth(VertexId{v}) <= radius) out.push_back(VertexId{v});
      }
      break;
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string GraphSpec::describe() const {
  std::ostringstream os;
  switch (family_) {
    case Family::Lattice:
      os << "lattice(d=" << dim_ << ")";
      break;
    case Family::Tree:
      os << "tree(k=" << degree_ << ")";
      break;
    case Family::Complete:
      os << "complete(n=" << n_ << ", w=" << weight_ << ")";
      break;
    case Family::Explicit:
      os << "explicit(n=" << n_ << ", edges=" << out_adj_.size() << ")";
      break;
  }
  return os.str();
}

}  // namespace cplab
