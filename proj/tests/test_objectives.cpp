#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

#include "pbw/objectives.hpp"
#include "test_support.hpp"

namespace pbw {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using testing::max_abs_diff;

/// Largest root of the characteristic polynomial (Faddeev-LeVerrier
/// coefficients, bisection from the Gershgorin bound).
double largest_root_charpoly(const MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  std::vector<double> c(static_cast<std::size_t>(n + 1));
  c[0] = 1;
  MatrixXd m = MatrixXd::Zero(n, n);
  for (int k = 1; k <= n; ++k) {
    m = a * m + c[static_cast<std::size_t>(k - 1)] * MatrixXd::Identity(n, n);
    c[static_cast<std::size_t>(k)] = -(a * m).trace() / k;
  }
  auto p = [&](double x) {
    double v = 0;
    for (double ck : c) v = v * x + ck;
    return v;
  };
  double bound = 0;
  for (int i = 0; i < n; ++i) bound = std::max(bound, a.row(i).cwiseAbs().sum());
  // Scan down from the bound to the first sign change, then bisect.
  double hi = bound + 1, step = (2 * bound + 2) / 20000.0, lo = hi - step;
  const double sign_hi = p(hi) > 0 ? 1 : -1;
  while (lo > -bound - 1 && (p(lo) > 0 ? 1 : -1) == sign_hi) {
    hi = lo;
    lo -= step;
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    ((p(mid) > 0 ? 1 : -1) == sign_hi ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

TEST(MaxEigenpair, Examples) {
  const auto d = max_eigenpair(Eigen::Vector2d(1, 2).asDiagonal().toDenseMatrix());
  EXPECT_NEAR(d.value, 2, 1e-15);
  EXPECT_LT((d.vector - Eigen::Vector2d(0, 1)).norm(), 1e-15);
  EXPECT_NEAR(d.gap, 1, 1e-15);

  const auto j = max_eigenpair(MatrixXd::Constant(2, 2, 0.5));
  EXPECT_NEAR(j.value, 1, 1e-15);
  EXPECT_LT((j.vector - Eigen::Vector2d(1, 1) / std::sqrt(2.0)).norm(), 1e-15);

  MatrixXd bad = MatrixXd::Identity(2, 2);
  bad(0, 1) = std::nan("");
  EXPECT_THROW(max_eigenpair(bad), NumericalError);
}

TEST(MaxEigenpair, MatchesCharacteristicPolynomial) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 50; ++t) {
    MatrixXd a(5, 5);
    for (int i = 0; i < 25; ++i) a.data()[i] = nd(rng);
    a = (0.5 * (a + a.transpose())).eval();
    const auto e = max_eigenpair(a);
    EXPECT_NEAR(e.value, largest_root_charpoly(a), 1e-9);
    EXPECT_LE((a * e.vector - e.value * e.vector).norm(), 1e-9 * a.norm());
    EXPECT_NEAR(e.vector.norm(), 1, 1e-12);
    EXPECT_GT(e.vector(0), 0);
  }
}

TEST(Phi, Examples) {
  Supergraph g = complete_graph(2);
  const auto model = independent_model<double>(g, VectorXd::Constant(1, 0.5));
  EXPECT_NEAR(phi(MatrixXd::Zero(2, 2), model), 1.0, 1e-15);
  MatrixXd w(2, 2);
  w << 0, 0.5, 0.5, 0;
  EXPECT_NEAR(phi(w, model), 0.5, 1e-15);
  EXPECT_NEAR(complete_graph_optimum(2, 0.5, 0.0).rate, 0.5, 1e-15);
}

TEST(Phi, StaticReduction) {
  std::mt19937_64 rng(41);
  for (int t = 0; t < 100; ++t) {
    Supergraph g = testing::random_connected_graph(3 + t % 10, 0.3, rng);
    const MatrixXd w = testing::random_symmetric_weights(g, -0.1, 0.5, rng);
    const auto model = deterministic_model(g);
    const int n = g.num_nodes();
    MatrixXd wbar = w;
    wbar.diagonal() = VectorXd::Ones(n) - w.rowwise().sum();
    const MatrixXd dev = wbar - MatrixXd::Constant(n, n, 1.0 / n);
    // Spectral radius from the general (nonsymmetric) eigensolver.
    const double r = Eigen::EigenSolver<MatrixXd>(dev).eigenvalues().cwiseAbs().maxCoeff();
    EXPECT_NEAR(phi(w, model), r * r, 1e-12);
  }
}

TEST(Phi, NonNegativeAndPermutationInvariant) {
  std::mt19937_64 rng(43);
  Supergraph g = generate_geometric(12, 0.35, 5);
  const auto model = correlation_uniform_fraction(probabilities_from_distances(g, 0.7), 0.5);
  const MatrixXd w = testing::random_symmetric_weights(g, 0, 0.4, rng);
  const double base = phi(w, model);
  EXPECT_GE(base, 0);

  std::vector<int> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Link> edges;
  for (const Link& e : g.links()) edges.push_back({perm[e.i], perm[e.j]});
  Supergraph h(12, edges);
  LinkIndex hidx(h);
  LinkModel<double> hm{hidx, VectorXd(h.num_links()), MatrixXd(h.num_links(), h.num_links())};
  for (int l = 0; l < g.num_links(); ++l)
    for (int s = 0; s < g.num_links(); ++s) {
      const int hl = hidx.find(perm[g.links()[l].i], perm[g.links()[l].j]);
      const int hs = hidx.find(perm[g.links()[s].i], perm[g.links()[s].j]);
      hm.r_q(hl, hs) = model.r_q(l, s);
      hm.pi(hl) = model.pi(l);
    }
  MatrixXd hw = MatrixXd::Zero(12, 12);
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j) hw(perm[i], perm[j]) = w(i, j);
  EXPECT_NEAR(phi(hw, hm), base, 1e-12);
}

TEST(Psi, Examples) {
  Supergraph g = complete_graph(2);
  EXPECT_NEAR(psi_gossip(MatrixXd::Zero(2, 2), g), 1.0, 1e-15);
  for (double x : {0.0, 0.1, 0.25, 0.5, 0.8, 1.0}) {
    MatrixXd w(2, 2);
    w << 0, x, x, 0;
    EXPECT_NEAR(psi_gossip(w, g), (1 - x) * (1 - x), 1e-12) << x;
  }
  Supergraph s = star_graph(6);
  EXPECT_NEAR(psi_gossip(MatrixXd::Zero(6, 6), s), 1.0, 1e-14);
}

TEST(CompleteGraphOptimum, Examples) {
  const auto a = complete_graph_optimum(2, 1.0, 0.0);
  EXPECT_NEAR(a.weight, 0.5, 1e-15);
  EXPECT_NEAR(a.rate, 0.0, 1e-15);
  const auto b = complete_graph_optimum(10, 0.5, 0.0);
  EXPECT_NEAR(b.weight, 1.0 / 6, 1e-15);
  EXPECT_NEAR(b.rate, 1.0 / 6, 1e-15);
  const auto c = complete_graph_optimum(10, 0.5, 0.5);
  EXPECT_NEAR(c.weight, 0.125, 1e-15);
  EXPECT_NEAR(c.rate, 0.375, 1e-15);
  EXPECT_THROW(complete_graph_optimum(3, 0.5, -1.0), InvalidArgument);
}

TEST(CompleteGraphOptimum, ClosedFormRateAtClosedFormWeight) {
  for (double beta : {0.0, 0.2, 0.5, 0.9}) {
    const auto opt = complete_graph_optimum(8, 0.6, beta);
    const auto model = complete_uniform_model(8, 0.6, beta);
    const Supergraph g = complete_graph(8);
    EXPECT_NEAR(phi(MatrixXd(g.adjacency() * opt.weight), model), opt.rate, 1e-12);
    // The optimum beats nearby uniform weights.
    EXPECT_LE(opt.rate, phi(MatrixXd(g.adjacency() * (opt.weight * 1.05)), model));
    EXPECT_LE(opt.rate, phi(MatrixXd(g.adjacency() * (opt.weight * 0.95)), model));
  }
}

TEST(CompleteGraphOptimum, MatchesScalarGridSearch) {
  const Supergraph g = complete_graph(10);
  for (double beta : {0.0, 0.5}) {
    const PhiObjective<double> obj(complete_uniform_model(10, 0.5, beta));
    double best = 1e9, arg = 0;
    for (int k = 1; k <= 4000; ++k) {
      const double x = k * 1e-4;
      const double v = obj(MatrixXd(g.adjacency() * x));
      if (v < best) best = v, arg = x;
    }
    const auto opt = complete_graph_optimum(10, 0.5, beta);
    EXPECT_NEAR(arg, opt.weight, 1e-4) << beta;
    EXPECT_NEAR(best, opt.rate, 1e-6) << beta;
  }
}

TEST(Tau, Examples) {
  EXPECT_NEAR(tau(std::exp(-2.0)), 1.0, 1e-15);
  EXPECT_NEAR(tau(0.91), 21.2, 0.05);
  EXPECT_GT(tau(1 - 1e-9), 1e8);
  EXPECT_THROW(tau(1.0), InvalidArgument);
  EXPECT_THROW(tau(0.0), InvalidArgument);
}

TEST(Convexity, PhiMidpoint) {
  std::mt19937_64 rng(51);
  Supergraph g = generate_geometric(10, 0.4, 11);
  const auto model = correlation_uniform_fraction(probabilities_from_distances(g, 0.7), 0.5);
  const PhiObjective<double> obj(model);
  const std::function<double(const MatrixXd&)> f = [&](const MatrixXd& w) { return obj(w); };
  const MatrixXd x = testing::random_symmetric_weights(g, -0.5, 1, rng);
  EXPECT_TRUE(convexity_midpoint_check(x, x, f));
  for (int t = 0; t < 1000; ++t) {
    const MatrixXd a = testing::random_symmetric_weights(g, -0.5, 1, rng);
    const MatrixXd b = testing::random_symmetric_weights(g, -0.5, 1, rng);
    ASSERT_TRUE(convexity_midpoint_check(a, b, f)) << t;
  }
}

TEST(Convexity, PsiMidpoint) {
  std::mt19937_64 rng(53);
  Supergraph g = generate_geometric(10, 0.4, 13);
  const std::function<double(const MatrixXd&)> f = [&](const MatrixXd& w) { return psi_gossip(w, g); };
  for (int t = 0; t < 1000; ++t) {
    const MatrixXd a = testing::random_directed_weights(g, -0.5, 1.2, rng);
    const MatrixXd b = testing::random_directed_weights(g, -0.5, 1.2, rng);
    ASSERT_TRUE(convexity_midpoint_check(a, b, f)) << t;
  }
}

}  // namespace
}  // namespace pbw
