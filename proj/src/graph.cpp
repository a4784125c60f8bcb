#include "pbw/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

namespace pbw {

Supergraph::Supergraph(int n, std::vector<Link> edges, std::optional<Eigen::Matrix2Xd> positions,
                       std::optional<double> radius)
    : n_(n), positions_(std::move(positions)), radius_(radius) {
  if (n < 1) throw InvalidArgument("supergraph needs at least one node");
  for (Link& e : edges) {
    if (e.i == e.j) throw InvalidArgument("self-loop at node " + std::to_string(e.i));
    if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n)
      throw InvalidArgument("edge endpoint out of range: {" + std::to_string(e.i) + "," + std::to_string(e.j) + "}");
    if (e.i > e.j) std::swap(e.i, e.j);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  links_ = std::move(edges);

  adjacency_.assign(static_cast<std::size_t>(n), {});
  for (const Link& e : links_) {
    adjacency_[static_cast<std::size_t>(e.i)].push_back(e.j);
    adjacency_[static_cast<std::size_t>(e.j)].push_back(e.i);
  }
  for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());

  if (positions_ && positions_->cols() != n) throw InvalidArgument("positions must have one column per node");
}

bool Supergraph::has_edge(int i, int j) const {
  if (i < 0 || j < 0 || i >= n_ || j >= n_) return false;
  const auto& nb = neighbors(i);
  return std::binary_search(nb.begin(), nb.end(), j);
}

double Supergraph::distance(int i, int j) const {
  if (!positions_) throw InvalidArgument("supergraph has no node positions");
  return (positions_->col(i) - positions_->col(j)).norm();
}

LinkIndex::LinkIndex(const Supergraph& g)
    : n_(g.num_nodes()), pairs_(g.links()), lookup_(Eigen::MatrixXi::Constant(n_, n_, -1)) {
  for (int l = 0; l < size(); ++l) lookup_(pairs_[l].i, pairs_[l].j) = lookup_(pairs_[l].j, pairs_[l].i) = l;
}

namespace {

std::vector<int> bfs(const Supergraph& g, int source) {
  std::vector<int> dist(static_cast<std::size_t>(g.num_nodes()), kInfiniteDistance);
  std::deque<int> queue{source};
  dist[static_cast<std::size_t>(source)] = 0;
  while (!queue.empty()) {
    int v = queue.front();
    queue.pop_front();
    for (int w : g.neighbors(v)) {
      if (dist[static_cast<std::size_t>(w)] == kInfiniteDistance) {
        dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(v)] + 1;
        queue.push_back(w);
      }
    }
  }
  return dist;
}

}  // namespace

bool is_connected(const Supergraph& g) {
  auto d = bfs(g, 0);
  return std::none_of(d.begin(), d.end(), [](int x) { return x == kInfiniteDistance; });
}

Eigen::MatrixXi node_distances(const Supergraph& g) {
  const int n = g.num_nodes();
  Eigen::MatrixXi d(n, n);
  for (int s = 0; s < n; ++s) {
    auto row = bfs(g, s);
    for (int t = 0; t < n; ++t) d(s, t) = row[static_cast<std::size_t>(t)];
  }
  return d;
}

namespace {

int min_endpoint_distance(const Eigen::MatrixXi& nd, const Link& a, const Link& b) {
  return std::min({nd(a.i, b.i), nd(a.i, b.j), nd(a.j, b.i), nd(a.j, b.j)});
}

}  // namespace

int link_distance(const Supergraph& g, const LinkIndex& idx, int l1, int l2) {
  if (l1 < 0 || l2 < 0 || l1 >= idx.size() || l2 >= idx.size()) throw InvalidArgument("link id out of range");
  if (l1 == l2) return 0;
  // Only the four endpoint BFS trees are needed.
  const Link& a = idx[l1];
  const Link& b = idx[l2];
  int best = kInfiniteDistance;
  for (int s : {a.i, a.j}) {
    auto d = bfs(g, s);
    best = std::min({best, d[static_cast<std::size_t>(b.i)], d[static_cast<std::size_t>(b.j)]});
  }
  return best;
}

Eigen::MatrixXi link_distances(const Supergraph& g, const LinkIndex& idx) {
  const Eigen::MatrixXi nd = node_distances(g);
  const int m = idx.size();
  Eigen::MatrixXi k(m, m);
  for (int l = 0; l < m; ++l) {
    k(l, l) = 0;
    for (int s = l + 1; s < m; ++s) k(l, s) = k(s, l) = min_endpoint_distance(nd, idx[l], idx[s]);
  }
  return k;
}

namespace {

struct GeometricDraw {
  Eigen::Matrix2Xd positions;
  Eigen::MatrixXd dist;
};

double mean_degree(const Eigen::MatrixXd& dist, double r) {
  const Eigen::Index n = dist.rows();
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (dist(i, j) <= r) ++count;
  return 2.0 * static_cast<double>(count) / static_cast<double>(n);
}

}  // namespace

Supergraph generate_geometric(int n, double degree_fraction, std::uint64_t seed) {
  if (n < 2) throw InvalidArgument("geometric graph needs n >= 2");
  if (!(degree_fraction > 0.0 && degree_fraction < 1.0)) throw InvalidArgument("degree_fraction must lie in (0, 1)");
  const double target = std::min(degree_fraction * n, static_cast<double>(n - 1));
  constexpr int kRetries = 100;
  constexpr int kBisectionSteps = 40;

  for (int attempt = 0; attempt < kRetries; ++attempt) {
    Rng rng = substream(seed, static_cast<std::uint64_t>(attempt), 0x6e0u);
    GeometricDraw draw{Eigen::Matrix2Xd(2, n), Eigen::MatrixXd(n, n)};
    for (int i = 0; i < n; ++i) {
      draw.positions(0, i) = uniform01(rng);
      draw.positions(1, i) = uniform01(rng);
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) draw.dist(i, j) = (draw.positions.col(i) - draw.positions.col(j)).norm();

    // Smallest radius whose mean degree reaches the target.
    double lo = 0.0, hi = std::sqrt(2.0);
    for (int step = 0; step < kBisectionSteps; ++step) {
      double mid = 0.5 * (lo + hi);
      if (mean_degree(draw.dist, mid) < target)
        lo = mid;
      else
        hi = mid;
    }
    const double r = hi;
    if (std::abs(mean_degree(draw.dist, r) - target) > 0.1 * target) continue;

    std::vector<Link> edges;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (draw.dist(i, j) <= r) edges.push_back({i, j});
    Supergraph g(n, std::move(edges), draw.positions, r);
    if (is_connected(g)) return g;
  }
  throw GenerationError("no connected geometric graph with n=" + std::to_string(n) + " and degree fraction " +
                        to_string_prec(degree_fraction) + " after " + std::to_string(kRetries) + " placements");
}

Supergraph complete_graph(int n) {
  std::vector<Link> e;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) e.push_back({i, j});
  return Supergraph(n, std::move(e));
}

Supergraph path_graph(int n) {
  std::vector<Link> e;
  for (int i = 0; i + 1 < n; ++i) e.push_back({i, i + 1});
  return Supergraph(n, std::move(e));
}

Supergraph star_graph(int n) {
  std::vector<Link> e;
  for (int i = 1; i < n; ++i) e.push_back({0, i});
  return Supergraph(n, std::move(e));
}

}  // namespace pbw
