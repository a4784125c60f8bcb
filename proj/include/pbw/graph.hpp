#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "pbw/core.hpp"

namespace pbw {

/// Undirected link {i, j}, stored with i < j.
struct Link {
  int i = 0;
  int j = 0;
  friend bool operator==(const Link&, const Link&) = default;
  friend auto operator<=>(const Link&, const Link&) = default;
};

/// Deterministic graph of all realizable links. Every random topology is a
/// subset of its edges. Immutable after construction.
class Supergraph {
 public:
  /// Edges may come in any order or orientation; duplicates are merged.
  /// Throws InvalidArgument on self-loops or out-of-range endpoints.
  /// Empty graph with no nodes.
  Supergraph() = default;
  Supergraph(int n, std::vector<Link> edges, std::optional<Eigen::Matrix2Xd> positions = std::nullopt,
             std::optional<double> radius = std::nullopt);

  int num_nodes() const { return n_; }
  /// Number of undirected links (M). The directed edge count is 2M.
  int num_links() const { return static_cast<int>(links_.size()); }
  /// Lexicographically sorted undirected links.
  const std::vector<Link>& links() const { return links_; }
  const std::vector<int>& neighbors(int i) const { return adjacency_[static_cast<std::size_t>(i)]; }
  int degree(int i) const { return static_cast<int>(neighbors(i).size()); }
  bool has_edge(int i, int j) const;

  const std::optional<Eigen::Matrix2Xd>& positions() const { return positions_; }
  std::optional<double> radius() const { return radius_; }
  double distance(int i, int j) const;
  double average_degree() const { return n_ > 0 ? 2.0 * num_links() / n_ : 0.0; }

  /// Zero-one adjacency matrix.
  template <typename Scalar = double>
  MatrixX<Scalar> adjacency() const {
    MatrixX<Scalar> a = MatrixX<Scalar>::Zero(n_, n_);
    for (const Link& l : links_) a(l.i, l.j) = a(l.j, l.i) = Scalar(1);
    return a;
  }

 private:
  int n_ = 0;
  std::vector<Link> links_;
  std::vector<std::vector<int>> adjacency_;
  std::optional<Eigen::Matrix2Xd> positions_;
  std::optional<double> radius_;
};

/// Canonical numbering l <-> (i, j), i < j, in lexicographic order.
class LinkIndex {
 public:
  LinkIndex() = default;
  explicit LinkIndex(const Supergraph& g);

  int size() const { return static_cast<int>(pairs_.size()); }
  int num_nodes() const { return n_; }
  const std::vector<Link>& pairs() const { return pairs_; }
  const Link& operator[](int l) const { return pairs_[static_cast<std::size_t>(l)]; }
  /// Link id of {i, j} in either orientation, or -1.
  int find(int i, int j) const { return lookup_(i, j); }

 private:
  int n_ = 0;
  std::vector<Link> pairs_;
  Eigen::MatrixXi lookup_;
};

inline LinkIndex link_index(const Supergraph& g) { return LinkIndex(g); }

inline constexpr int kInfiniteDistance = std::numeric_limits<int>::max();

bool is_connected(const Supergraph& g);

/// All-pairs hop distances between nodes (BFS); kInfiniteDistance when unreachable.
Eigen::MatrixXi node_distances(const Supergraph& g);

/// Hop distance between two links: the shortest path between any endpoint of
/// `l1` and any endpoint of `l2`. Touching links are at distance 0.
int link_distance(const Supergraph& g, const LinkIndex& idx, int l1, int l2);

/// m x m matrix of link distances.
Eigen::MatrixXi link_distances(const Supergraph& g, const LinkIndex& idx);

/// Random geometric graph on the unit square: nodes i.i.d. uniform, edge iff
/// Euclidean distance <= r, r bisected so the mean degree matches
/// degree_fraction * n (capped at n - 1) to within 10%. Placements are redrawn
/// until the graph is connected; throws GenerationError after 100 attempts.
Supergraph generate_geometric(int n, double degree_fraction, std::uint64_t seed);

Supergraph complete_graph(int n);
Supergraph path_graph(int n);
Supergraph star_graph(int n);

}  // namespace pbw
