#pragma once

// Recursive random-projection bi-clustering. Each split picks two distant
// pivots (east, west), projects every row onto the line between them with
// the cosine rule, and cuts at the median projection. Leaves of the final
// tree define which rows the black box is asked to label.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "stealth/data.hpp"
#include "stealth/error.hpp"
#include "stealth/random.hpp"

namespace stealth {

inline double distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw ContractError("distance: dimension mismatch (" + std::to_string(u.size()) + " vs " +
                        std::to_string(v.size()) + ")");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += (u[i] - v[i]) * (u[i] - v[i]);
  return std::sqrt(s);
}

/// Two pivot rows and their separation `c` (always > 0).
struct ProjectionLine {
  std::size_t east = 0;
  std::size_t west = 0;
  double c = 0.0;
};

/// Position of a point on the east-west line, given its distances `a` to east
/// and `b` to west: (a^2 + c^2 - b^2) / (2c).
inline double project(double a, double b, double c) {
  if (!(c > 0.0)) throw ContractError("project: pivot separation must be positive");
  return (a * a + c * c - b * b) / (2.0 * c);
}

inline double project(std::span<const double> p, const Dataset& ds, const ProjectionLine& line) {
  return project(distance(p, ds.row(line.east)), distance(p, ds.row(line.west)), line.c);
}

/// Random row z, east = farthest row from z, west = farthest row from east.
/// Returns nullopt when every row is identical (no projection axis).
/// Ties go to the earliest row in `rows`.
inline std::optional<ProjectionLine> pick_pivots(const Dataset& ds,
                                                 std::span<const std::size_t> rows, Rng& rng) {
  if (rows.empty()) throw ContractError("pick_pivots: empty row set");
  const std::size_t z = rows[uniform_index(rng, rows.size())];
  auto farthest = [&](std::size_t from) {
    std::size_t best = rows.front();
    double best_d = -1.0;
    for (auto r : rows) {
      const double d = distance(ds.row(from), ds.row(r));
      if (d > best_d) {
        best_d = d;
        best = r;
      }
    }
    return std::pair{best, best_d};
  };
  const auto [east, dz] = farthest(z);
  if (dz <= 0.0) return std::nullopt;
  const auto [west, c] = farthest(east);
  return ProjectionLine{east, west, c};
}

enum class LeafSampling {
  random,          // uniform without replacement
  nearest_centroid // the m rows closest to the leaf's mean
};

struct ClusterConfig {
  /// Leaves hold at most this many rows; default ceil(sqrt(rows clustered)).
  std::optional<std::size_t> stop_size;
  std::size_t samples_per_leaf = 1;
  LeafSampling sampling = LeafSampling::random;
  std::uint64_t seed = 0;

  std::size_t stop_for(std::size_t n) const {
    if (stop_size) return *stop_size;
    return std::max<std::size_t>(1, static_cast<std::size_t>(
                                        std::ceil(std::sqrt(static_cast<double>(n)))));
  }
};

class ClusterTree {
 public:
  struct Node {
    std::size_t size = 0;
    std::size_t depth = 0;
    std::optional<ProjectionLine> line;  // empty for leaves
    double cut = 0.0;                    // rows with x <= cut went left
    int left = -1;
    int right = -1;
    std::vector<std::size_t> rows;  // leaves only
    bool degenerate = false;        // leaf because all rows were identical

    bool is_leaf() const { return left < 0; }
  };

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& root() const { return nodes_.front(); }
  std::size_t stop_size() const { return stop_; }

  /// Leaf row sets in left-to-right order.
  std::vector<std::span<const std::size_t>> leaves() const {
    std::vector<std::span<const std::size_t>> out;
    collect(0, out);
    return out;
  }
  std::size_t leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.is_leaf(); }));
  }

  /// Indented text dump (size and cut per node). For inspection only.
  void dump(std::ostream& out) const { dump(out, 0); }

 private:
  friend ClusterTree bicluster(const Dataset&, const ClusterConfig&, Rng&);
  friend ClusterTree bicluster(const Dataset&, std::span<const std::size_t>,
                               const ClusterConfig&, Rng&);

  void collect(int id, std::vector<std::span<const std::size_t>>& out) const {
    const auto& n = nodes_[static_cast<std::size_t>(id)];
    if (n.is_leaf()) {
      out.emplace_back(n.rows);
      return;
    }
    collect(n.left, out);
    collect(n.right, out);
  }

  void dump(std::ostream& out, int id) const {
    const auto& n = nodes_[static_cast<std::size_t>(id)];
    out << std::string(2 * n.depth, ' ') << n.size;
    if (n.is_leaf()) {
      out << (n.degenerate ? " leaf (degenerate)\n" : " leaf\n");
      return;
    }
    out << " cut=" << n.cut << " c=" << n.line->c << '\n';
    dump(out, n.left);
    dump(out, n.right);
  }

  int build(const Dataset& ds, std::vector<std::size_t> rows, std::size_t depth, Rng& rng) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_.back().size = rows.size();
    nodes_.back().depth = depth;

    std::optional<ProjectionLine> line;
    if (rows.size() > stop_) line = pick_pivots(ds, rows, rng);
    if (!line) {
      auto& leaf = nodes_[static_cast<std::size_t>(id)];
      leaf.degenerate = rows.size() > stop_;
      leaf.rows = std::move(rows);
      return id;
    }

    // Stable order on (x, row index) so equal projections still split evenly.
    std::vector<std::pair<double, std::size_t>> xs;
    xs.reserve(rows.size());
    for (auto r : rows) xs.emplace_back(project(ds.row(r), ds, *line), r);
    std::sort(xs.begin(), xs.end());
    const std::size_t half = (xs.size() + 1) / 2;
    std::vector<std::size_t> lo, hi;
    lo.reserve(half);
    hi.reserve(xs.size() - half);
    for (std::size_t k = 0; k < xs.size(); ++k) (k < half ? lo : hi).push_back(xs[k].second);
    const double cut = xs[half - 1].first;

    const int left = build(ds, std::move(lo), depth + 1, rng);
    const int right = build(ds, std::move(hi), depth + 1, rng);
    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.line = line;
    node.cut = cut;
    node.left = left;
    node.right = right;
    return id;
  }

  std::vector<Node> nodes_;
  std::size_t stop_ = 1;
};

/// Clusters the given rows of `ds` (labels, if any, are ignored).
inline ClusterTree bicluster(const Dataset& ds, std::span<const std::size_t> rows,
                             const ClusterConfig& cfg, Rng& rng) {
  if (rows.empty()) throw ContractError("bicluster: no rows to cluster");
  ClusterTree tree;
  tree.stop_ = cfg.stop_for(rows.size());
  if (tree.stop_ == 0) throw ContractError("bicluster: stop size must be >= 1");
  tree.build(ds, std::vector<std::size_t>(rows.begin(), rows.end()), 0, rng);
  return tree;
}

inline ClusterTree bicluster(const Dataset& ds, const ClusterConfig& cfg, Rng& rng) {
  std::vector<std::size_t> rows(ds.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return bicluster(ds, rows, cfg, rng);
}

/// Picks min(m, |leaf|) rows from every leaf. The result size is the query
/// budget. Rows are listed leaf by leaf.
inline std::vector<std::size_t> sample_leaves(const ClusterTree& tree, const Dataset& ds,
                                              std::size_t m, Rng& rng,
                                              LeafSampling how = LeafSampling::random) {
  if (m == 0) throw ContractError("sample_leaves: m must be >= 1");
  std::vector<std::size_t> picked;
  for (auto leaf : tree.leaves()) {
    const std::size_t take = std::min(m, leaf.size());
    std::vector<std::size_t> pool(leaf.begin(), leaf.end());
    if (how == LeafSampling::random) {
      // Partial Fisher-Yates.
      for (std::size_t k = 0; k < take; ++k) {
        const std::size_t j = k + uniform_index(rng, pool.size() - k);
        std::swap(pool[k], pool[j]);
      }
    } else {
      std::vector<double> centroid(ds.cols(), 0.0);
      for (auto r : pool)
        for (std::size_t j = 0; j < ds.cols(); ++j) centroid[j] += ds.at(r, j);
      for (auto& c : centroid) c /= static_cast<double>(pool.size());
      std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
        return distance(ds.row(a), centroid) < distance(ds.row(b), centroid);
      });
    }
    picked.insert(picked.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return picked;
}

}  // namespace stealth
