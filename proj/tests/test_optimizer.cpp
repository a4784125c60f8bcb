#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <Eigen/SVD>

#include "pbw/optimizer.hpp"
#include "test_support.hpp"

namespace pbw {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using testing::max_abs_diff;

MatrixXd pair_weights(double w) {
  MatrixXd m(2, 2);
  m << 0, w, w, 0;
  return m;
}

/// Entrywise check against central differences with a small absolute floor
/// for entries that vanish analytically.
void expect_matches_fd(const MatrixXd& h, const std::function<double(const MatrixXd&)>& f, const MatrixXd& w,
                       const Supergraph& g, bool symmetric, const std::string& label) {
  for (int i = 0; i < g.num_nodes(); ++i)
    for (int j : g.neighbors(i)) {
      if (symmetric && j < i) continue;
      const double fd = testing::central_difference(f, w, i, j, symmetric);
      ASSERT_TRUE(testing::close_relative(h(i, j), fd, 1e-5, 1e-3)) << label << " (" << i << "," << j << ") analytic "
                                                                   << h(i, j) << " fd " << fd;
    }
}

TEST(SubgradientPhi, TwoNodeStaticIsEightWMinusFour) {
  const auto model = deterministic_model(complete_graph(2));
  for (double w : {0.1, 0.3, 0.45, 0.7, 0.9}) {
    const PhiObjective<double> obj(model);
    const auto v = obj.evaluate(pair_weights(w));
    const MatrixXd hu = subgradient_phi_uncorrelated(pair_weights(w), model, v.eig);
    const MatrixXd hc = subgradient_phi_correlated(pair_weights(w), model, v.eig);
    EXPECT_NEAR(hu(0, 1), 8 * w - 4, 1e-10);
    EXPECT_NEAR(hc(0, 1), 8 * w - 4, 1e-10);
    EXPECT_EQ(hu(0, 1), hu(1, 0));
  }
  const auto v = PhiObjective<double>(model).evaluate(pair_weights(0.3));
  EXPECT_NEAR(subgradient_phi_uncorrelated(pair_weights(0.3), model, v.eig)(0, 1), -1.6, 1e-12);
}

TEST(SubgradientPhi, ConstantEigenvectorGivesZero) {
  Supergraph g = generate_geometric(8, 0.4, 2);
  const auto model = probabilities_from_distances(g, 0.7);
  std::mt19937_64 rng(1);
  const MatrixXd w = testing::random_symmetric_weights(g, 0, 0.3, rng);
  const Eigenpair<double> flat{0.5, VectorXd::Constant(8, 1 / std::sqrt(8.0)), 0.1};
  EXPECT_LT(subgradient_phi_uncorrelated(w, model, flat).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT(subgradient_phi_correlated(w, correlation_uniform_fraction(model, 0.5), flat).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SubgradientPhi, SupportAndSymmetry) {
  Supergraph g = generate_geometric(10, 0.3, 4);
  const auto model = correlation_uniform_fraction(probabilities_from_distances(g, 0.7), 0.5);
  std::mt19937_64 rng(2);
  const MatrixXd w = testing::random_symmetric_weights(g, 0, 0.3, rng);
  const auto v = PhiObjective<double>(model).evaluate(w);
  const MatrixXd h = subgradient_phi_correlated(w, model, v.eig);
  EXPECT_EQ(h, h.transpose());
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j)
      if (!g.has_edge(i, j)) EXPECT_EQ(h(i, j), 0.0);
}

TEST(SubgradientPhi, UncorrelatedMatchesFiniteDifferences) {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  int checked = 0;
  for (int t = 0; checked < 100; ++t) {
    Supergraph g = testing::random_connected_graph(4 + t % 5, 0.3, rng);
    VectorXd pi(g.num_links());
    for (int l = 0; l < pi.size(); ++l) pi(l) = u(rng);
    const auto model = independent_model<double>(g, pi);
    const PhiObjective<double> obj(model);
    const MatrixXd w = testing::random_symmetric_weights(g, 0, 0.5, rng);
    const auto v = obj.evaluate(w);
    if (v.eig.gap <= 1e-6) continue;
    ++checked;
    expect_matches_fd(subgradient_phi_uncorrelated(w, model, v.eig), obj, w, g, true, "uncorrelated");
  }
}

TEST(SubgradientPhi, CorrelatedReducesToUncorrelated) {
  std::mt19937_64 rng(62);
  for (int t = 0; t < 20; ++t) {
    Supergraph g = testing::random_connected_graph(6, 0.4, rng);
    const auto model = independent_model<double>(g, VectorXd::Constant(g.num_links(), 0.7));
    const MatrixXd w = testing::random_symmetric_weights(g, 0, 0.4, rng);
    const auto v = PhiObjective<double>(model).evaluate(w);
    EXPECT_LT(max_abs_diff(subgradient_phi_correlated(w, model, v.eig), subgradient_phi_uncorrelated(w, model, v.eig)),
              1e-10);
  }
}

TEST(SubgradientPhi, CorrelatedPathMatchesFiniteDifferences) {
  Supergraph g = path_graph(3);
  LinkModel<double> model = independent_model<double>(g, Eigen::Vector2d(0.6, 0.8));
  model.r_q(0, 1) = model.r_q(1, 0) = 0.08;
  MatrixXd w = MatrixXd::Zero(3, 3);
  w(0, 1) = w(1, 0) = 0.35;
  w(1, 2) = w(2, 1) = 0.55;
  const PhiObjective<double> obj(model);
  const auto v = obj.evaluate(w);
  ASSERT_GT(v.eig.gap, 1e-6);
  expect_matches_fd(subgradient_phi_correlated(w, model, v.eig), obj, w, g, true, "path");
}

TEST(SubgradientPhi, CorrelatedMatchesFiniteDifferences) {
  std::mt19937_64 rng(63);
  int checked = 0;
  for (int t = 0; checked < 100; ++t) {
    Supergraph g = testing::random_connected_graph(4 + t % 4, 0.35, rng);
    std::mt19937_64 lrng(static_cast<std::uint64_t>(t));
    LinkModel<double> model;
    if (g.num_links() <= 6) {
      model = testing::model_from_law(g, testing::random_law(g.num_links(), lrng));
    } else {
      std::uniform_real_distribution<double> u(0.3, 1.0);
      VectorXd pi(g.num_links());
      for (int l = 0; l < pi.size(); ++l) pi(l) = u(lrng);
      model = correlation_geometric_decay(independent_model<double>(g, pi), g, 0.4, 0.8);
    }
    const PhiObjective<double> obj(model);
    const MatrixXd w = testing::random_symmetric_weights(g, -0.1, 0.6, rng);
    const auto v = obj.evaluate(w);
    if (v.eig.gap <= 1e-6) continue;
    ++checked;
    expect_matches_fd(subgradient_phi_correlated(w, model, v.eig), obj, w, g, true, "correlated");
  }
}

TEST(SubgradientPhi, SubgradientInequalityAtNonsmoothZero) {
  // At W = 0 the top eigenvalue of I - J is repeated; any selection must still
  // lower-bound directional difference quotients of the convex objective.
  std::mt19937_64 rng(64);
  Supergraph g = generate_geometric(7, 0.5, 3);
  const auto model = correlation_uniform_fraction(probabilities_from_distances(g, 0.7), 0.5);
  const PhiObjective<double> obj(model);
  const MatrixXd w0 = MatrixXd::Zero(7, 7);
  const auto v = obj.evaluate(w0);
  const MatrixXd h = subgradient_phi_correlated(w0, model, v.eig);
  for (int t = 0; t < 50; ++t) {
    const MatrixXd d = testing::random_symmetric_weights(g, -1, 1, rng);
    double inner = 0;
    for (const Link& e : g.links()) inner += h(e.i, e.j) * d(e.i, e.j);
    const double quotient = (obj(MatrixXd(w0 + 1e-6 * d)) - v.value) / 1e-6;
    EXPECT_GE(quotient, inner - 1e-6);
  }
}

TEST(SubgradientPsi, TwoNodeDerivative) {
  Supergraph g = complete_graph(2);
  for (double x : {0.2, 0.5, 0.7}) {
    const MatrixXd w = pair_weights(x);
    const auto eig = max_eigenpair(gossip_moments(w, g).deviation());
    const MatrixXd h = subgradient_psi_gossip(w, g, eig);
    EXPECT_NEAR(h(0, 1) + h(1, 0), -2 * (1 - x), 1e-12);
    EXPECT_NEAR(h(0, 1), h(1, 0), 1e-12);
  }
  const auto eig = max_eigenpair(gossip_moments(pair_weights(0.5), g).deviation());
  EXPECT_NEAR(subgradient_psi_gossip(pair_weights(0.5), g, eig).sum(), -1.0, 1e-12);
}

TEST(SubgradientPsi, MatchesFiniteDifferences) {
  std::mt19937_64 rng(65);
  int checked = 0;
  for (int t = 0; checked < 100; ++t) {
    Supergraph g = testing::random_connected_graph(3 + t % 5, 0.4, rng);
    const MatrixXd w = testing::random_directed_weights(g, 0, 1, rng);
    const auto eig = max_eigenpair(gossip_moments(w, g).deviation());
    if (eig.gap <= 1e-6) continue;
    ++checked;
    const std::function<double(const MatrixXd&)> f = [&](const MatrixXd& x) { return psi_gossip(x, g); };
    expect_matches_fd(subgradient_psi_gossip(w, g, eig), f, w, g, false, "gossip");
  }
}

TEST(SubgradientPsi, LiteralTableDiffersFromExactDerivative) {
  Supergraph g = complete_graph(3);
  std::mt19937_64 rng(66);
  const MatrixXd w = testing::random_directed_weights(g, 0.2, 0.8, rng);
  const auto eig = max_eigenpair(gossip_moments(w, g).deviation());
  const MatrixXd exact = subgradient_psi_gossip(w, g, eig);
  const MatrixXd literal = subgradient_psi_gossip_literal(w, g, eig);
  EXPECT_EQ(literal.diagonal(), VectorXd::Zero(3));
  EXPECT_GT(max_abs_diff(exact, literal), 1e-6);
}

TEST(SubgradientPsi, StarMinimizerHasNonnegativeDirectionalDerivatives) {
  // By symmetry the minimizer over the star has one weight a on the three
  // leaves listening to the centre and one weight b on the centre listening
  // to each leaf; grid search over (a, b), then refine.
  Supergraph star = star_graph(4);
  auto make = [&](double a, double b) {
    MatrixXd w = MatrixXd::Zero(4, 4);
    for (int l = 1; l < 4; ++l) {
      w(l, 0) = a;
      w(0, l) = b;
    }
    return w;
  };
  double best = 1e9, ba = 0, bb = 0;
  for (double a = 0; a <= 1.5; a += 0.01)
    for (double b = 0; b <= 1.0; b += 0.01) {
      const double v = psi_gossip(make(a, b), star);
      if (v < best) best = v, ba = a, bb = b;
    }
  const double ca = ba, cb = bb;
  for (double a = ca - 0.01; a <= ca + 0.01; a += 2e-4)
    for (double b = cb - 0.01; b <= cb + 0.01; b += 2e-4) {
      const double v = psi_gossip(make(a, b), star);
      if (v < best) best = v, ba = a, bb = b;
    }
  const MatrixXd w = make(ba, bb);
  const double h = 1e-3;
  for (int i = 0; i < 4; ++i)
    for (int j : star.neighbors(i))
      for (double sgn : {1.0, -1.0}) {
        MatrixXd x = w;
        x(i, j) += sgn * h;
        EXPECT_GE((psi_gossip(x, star) - best) / h, -5e-3) << i << "," << j << " sign " << sgn;
      }
}

TEST(Metropolis, Examples) {
  const MatrixXd p = metropolis_weights(path_graph(3));
  EXPECT_NEAR(p(0, 1), 1.0 / 3, 1e-15);
  EXPECT_NEAR(p(1, 2), 1.0 / 3, 1e-15);
  EXPECT_EQ(p(0, 2), 0.0);
  EXPECT_NEAR(metropolis_weights(complete_graph(2))(0, 1), 0.5, 1e-15);
  const MatrixXd k3 = metropolis_weights(complete_graph(3));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(k3(i, j), i == j ? 0.0 : 1.0 / 3, 1e-15);
}

TEST(Metropolis, StochasticAndContracting) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Supergraph g = generate_geometric(25, 0.2, s);
    const MatrixXd w = metropolis_weights(g);
    EXPECT_LT(w.rowwise().sum().maxCoeff(), 1.0);
    for (const Link& e : g.links()) EXPECT_GT(w(e.i, e.j), 0);
    EXPECT_LT(phi(w, probabilities_from_distances(g, 0.7)), 1.0);
    EXPECT_LT(phi(w, deterministic_model(g)), 1.0);
  }
}

TEST(SupergraphWeights, Examples) {
  OptimizerConfig cfg;
  const auto two = supergraph_weights(complete_graph(2), cfg);
  EXPECT_NEAR(two.best_weights(0, 1), 0.5, 1e-9);
  EXPECT_NEAR(two.best_objective, 0.0, 1e-12);
  const auto k5 = supergraph_weights(complete_graph(5), cfg);
  EXPECT_LT(k5.best_objective, 1e-10);
  const Supergraph g5 = complete_graph(5);
  for (const Link& e : g5.links()) EXPECT_NEAR(k5.best_weights(e.i, e.j), 0.2, 1e-6);
  const auto p3 = supergraph_weights(path_graph(3), cfg);
  EXPECT_LT(p3.best_objective, 1.0);
  EXPECT_LE(p3.best_objective, phi(metropolis_weights(path_graph(3)), deterministic_model(path_graph(3))));
  EXPECT_THROW(supergraph_weights(Supergraph(3, {{0, 1}}), cfg), InvalidArgument);
}

TEST(OptimizePhi, CompleteGraphClosedForm) {
  const Supergraph g = complete_graph(10);
  for (double beta : {0.0, 0.5}) {
    const auto opt = complete_graph_optimum(10, 0.5, beta);
    OptimizerConfig cfg;
    const auto res = optimize_phi(metropolis_weights(g), complete_uniform_model(10, 0.5, beta), cfg);
    EXPECT_NEAR(res.best_objective, opt.rate, 1e-3);
    for (const Link& e : g.links()) EXPECT_NEAR(res.best_weights(e.i, e.j), opt.weight, 1e-2);
  }
}

TEST(OptimizePhi, StaticPairConvergesToHalf) {
  OptimizerConfig cfg;
  cfg.step_scale = 0.1;
  const auto res = optimize_phi(pair_weights(0.1), deterministic_model(complete_graph(2)), cfg);
  EXPECT_NEAR(res.best_weights(0, 1), 0.5, 1e-2);
  EXPECT_LT(res.best_objective, 1e-4);
}

TEST(OptimizePhi, TraceAndBestIterateContract) {
  Supergraph g = generate_geometric(12, 0.3, 8);
  const auto model = correlation_uniform_fraction(probabilities_from_distances(g, 0.7), 0.5);
  OptimizerConfig cfg;
  cfg.max_iters = 60;
  const auto res = optimize_phi(metropolis_weights(g), model, cfg);
  EXPECT_EQ(res.iterations_run, 60);
  ASSERT_EQ(res.objective_trace.size(), 61u);
  EXPECT_EQ(res.best_objective, *std::min_element(res.objective_trace.begin(), res.objective_trace.end()));
  EXPECT_NEAR(phi(res.best_weights, model), res.best_objective, 1e-14);
  EXPECT_EQ(res.best_weights, res.best_weights.transpose());
  EXPECT_LE(res.best_objective, phi(metropolis_weights(g), model));

  // One oversized step: the start is returned.
  OptimizerConfig big;
  big.max_iters = 1;
  big.step_scale = 50;
  const auto one = optimize_phi(pair_weights(0.4), deterministic_model(complete_graph(2)), big);
  EXPECT_EQ(one.best_weights, pair_weights(0.4));
  EXPECT_GT(one.objective_trace.back(), one.objective_trace.front());

  OptimizerConfig bad;
  bad.max_iters = 0;
  EXPECT_THROW(optimize_phi(pair_weights(0.4), deterministic_model(complete_graph(2)), bad), InvalidArgument);
  bad.max_iters = 5;
  bad.step_scale = -1;
  EXPECT_THROW(optimize_phi(pair_weights(0.4), deterministic_model(complete_graph(2)), bad), InvalidArgument);
  OptimizerConfig uncor;
  uncor.mode = OptimizerMode::kPhiUncorrelated;
  EXPECT_THROW(optimize_phi(metropolis_weights(g), model, uncor), InvalidArgument);
}

TEST(OptimizePhi, DivergenceIsReported) {
  OptimizerConfig cfg;
  cfg.step_scale = 1e150;
  cfg.max_iters = 10;
  EXPECT_THROW(optimize_phi(pair_weights(0.4), deterministic_model(complete_graph(2)), cfg), NumericalError);
  // Step-scale search skips the divergent scale.
  const auto [res, scale] = best_over_step_scales({1e150, 0.1}, cfg, [&](const OptimizerConfig& c) {
    return optimize_phi(pair_weights(0.4), deterministic_model(complete_graph(2)), c);
  });
  EXPECT_EQ(scale, 0.1);
  EXPECT_LT(res.best_objective, 0.04);
}

TEST(OptimizePhi, DominatesBaselines) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    Supergraph g = generate_geometric(20, 0.2, 100 + s);
    const auto model = correlation_uniform_fraction(probabilities_from_distances(g, 0.7), 0.5);
    const PhiObjective<double> obj(model);
    OptimizerConfig cfg;
    cfg.max_iters = 100;
    const MatrixXd mw = metropolis_weights(g);
    const MatrixXd sg = supergraph_weights(g, cfg).best_weights;
    const MatrixXd start = obj(mw) <= obj(sg) ? mw : sg;
    const auto res = optimize_phi(start, obj, cfg);
    EXPECT_LE(res.best_objective, std::min(obj(mw), obj(sg)) + 1e-9);
  }
}

/// Euclidean projection onto {x : C x = 0} through an SVD null-space basis.
VectorXd nullspace_projection(const MatrixXd& c, const VectorXd& x) {
  Eigen::JacobiSVD<MatrixXd> svd(c, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  int rank = 0;
  for (int i = 0; i < s.size(); ++i) rank += s(i) > 1e-12 * s(0);
  const MatrixXd basis = svd.matrixV().rightCols(c.cols() - rank);
  return basis * (basis.transpose() * x);
}

TEST(BalanceProjector, MatchesNullspaceOracle) {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  int checked = 0;
  for (int t = 0; t < 30; ++t) {
    Supergraph g = testing::random_connected_graph(3 + t % 4, 0.3, rng);
    if (2 * g.num_links() > 12) continue;
    ++checked;
    MatrixXd p = MatrixXd::Zero(g.num_nodes(), g.num_nodes());
    for (int i = 0; i < g.num_nodes(); ++i)
      for (int j : g.neighbors(i)) p(i, j) = t % 2 ? u(rng) : 1.0 / g.num_nodes();
    const BalanceProjector<double> proj(g, p);
    const MatrixXd w = testing::random_directed_weights(g, -1, 1, rng);
    const MatrixXd out = proj(w);
    EXPECT_LT(proj.residual(out), 1e-10);
    const VectorXd oracle = nullspace_projection(proj.constraint_matrix(), proj.flatten(w));
    EXPECT_LT((proj.flatten(out) - oracle).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT(max_abs_diff(proj(out), out), 1e-12);
    // No feasible point is closer.
    for (int k = 0; k < 5; ++k) {
      const MatrixXd y = proj(testing::random_directed_weights(g, -1, 1, rng));
      EXPECT_LE((out - w).norm(), (y - w).norm() + 1e-12);
    }
  }
  EXPECT_GE(checked, 15);
}

TEST(BalanceProjector, SymmetricPointsAreFixed) {
  std::mt19937_64 rng(72);
  Supergraph g = generate_geometric(9, 0.4, 2);
  const BalanceProjector<double> proj(g, probabilities_from_distances(g, 0.7).p_matrix());
  const MatrixXd w = testing::random_symmetric_weights(g, 0, 0.5, rng);
  EXPECT_LT(max_abs_diff(proj(w), w), 1e-12);
  MatrixXd bad = MatrixXd::Constant(9, 9, 0.1);
  bad(0, 1) = -1;
  EXPECT_THROW(BalanceProjector<double>(g, bad), InfeasibleError);
}

TEST(OptimizePsi, TwoNodeUnconstrained) {
  OptimizerConfig cfg;
  cfg.mode = OptimizerMode::kPsiGossip;
  const auto res = optimize_psi(pair_weights(0.5), complete_graph(2), cfg, false);
  EXPECT_LT(res.best_objective, 1e-4);
  EXPECT_NEAR(res.best_weights(0, 1), 1.0, 1e-2);
  EXPECT_NEAR(res.best_weights(1, 0), 1.0, 1e-2);
}

TEST(OptimizePsi, ConstrainedStaysFeasibleAndImproves) {
  Supergraph g = generate_geometric(12, 0.3, 5);
  OptimizerConfig cfg;
  cfg.mode = OptimizerMode::kPsiConstrained;
  cfg.max_iters = 200;
  const MatrixXd w0 = uniform_weights(g, 0.5);
  const auto res = optimize_psi(w0, g, cfg, true);
  const BalanceProjector<double> proj(g, gossip_probabilities(g));
  EXPECT_LT(proj.residual(res.best_weights), 1e-10);
  EXPECT_LE(res.best_objective, psi_gossip(w0, g) + 1e-12);
  const auto free = optimize_psi(w0, g, cfg, false);
  EXPECT_LE(free.best_objective, psi_gossip(w0, g));
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j)
      if (!g.has_edge(i, j)) EXPECT_EQ(free.best_weights(i, j), 0.0);
}

TEST(EqualGossipWeight, Examples) {
  const auto two = optimal_equal_gossip_weight(complete_graph(2));
  EXPECT_EQ(two.weight, 1.0);
  EXPECT_NEAR(two.rate, 0.0, 1e-15);

  Supergraph star = star_graph(3);
  double best = 1e9, arg = 0;
  for (int k = 1; k <= 1000; ++k) {
    const double x = k * 1e-3;
    const double v = psi_gossip(uniform_weights(star, x), star);
    if (v < best) best = v, arg = x;
  }
  const auto s = optimal_equal_gossip_weight(star);
  EXPECT_NEAR(s.weight, arg, 1e-3);
  EXPECT_LE(s.rate, best + 1e-12);

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Supergraph g = generate_geometric(15, 0.3, seed);
    const auto e = optimal_equal_gossip_weight(g);
    EXPECT_LE(e.rate, psi_gossip(uniform_weights(g, 0.5), g) + 1e-9);
  }
}

}  // namespace
}  // namespace pbw
