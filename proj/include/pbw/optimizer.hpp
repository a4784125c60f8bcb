#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pbw/core.hpp"
#include "pbw/graph.hpp"
#include "pbw/link_model.hpp"
#include "pbw/moments.hpp"
#include "pbw/objectives.hpp"

namespace pbw {

enum class OptimizerMode { kPhiUncorrelated, kPhiCorrelated, kPsiGossip, kPsiConstrained };

struct OptimizerConfig {
  int max_iters = 500;
  double step_scale = 1.0;  ///< alpha_k = step_scale / sqrt(k)
  std::uint64_t seed = 0;
  double eigen_gap_floor = 1e-6;
  OptimizerMode mode = OptimizerMode::kPhiCorrelated;
};

template <typename Scalar>
struct OptimizationResult {
  MatrixX<Scalar> best_weights;
  Scalar best_objective;
  std::vector<Scalar> objective_trace;  ///< objective at W^(1), ..., W^(iterations_run + 1)
  int iterations_run = 0;
};

// ---------------------------------------------------------------------------
// Subgradients of phi. H is symmetric and supported on supergraph links; H_ij
// is the derivative with respect to the shared weight W_ij = W_ji.

/// Uncorrelated links:
/// H_ij = 2 P_ij (u_i - u_j) u^T (Wbar_j - Wbar_i) + 4 P_ij (1 - P_ij) W_ij (u_i - u_j)^2.
template <typename Scalar, typename DW, typename DM>
MatrixX<Scalar> subgradient_phi_uncorrelated(const Eigen::MatrixBase<DW>& w, const LinkModel<Scalar>& model,
                                             const Eigenpair<Scalar>& eig, const Eigen::MatrixBase<DM>& mean) {
  const int n = model.num_nodes();
  const VectorX<Scalar>& u = eig.vector;
  const VectorX<Scalar> uw = mean.transpose() * u;  // u^T Wbar_k for every column k
  MatrixX<Scalar> h = MatrixX<Scalar>::Zero(n, n);
  for (int l = 0; l < model.num_links(); ++l) {
    const int i = model.idx[l].i, j = model.idx[l].j;
    const Scalar p = model.pi(l);
    const Scalar du = u(i) - u(j);
    const Scalar v = Scalar(2) * p * du * (uw(j) - uw(i)) + Scalar(4) * p * (Scalar(1) - p) * w(i, j) * du * du;
    h(i, j) = h(j, i) = v;
  }
  return h;
}

template <typename Scalar, typename DW>
MatrixX<Scalar> subgradient_phi_uncorrelated(const Eigen::MatrixBase<DW>& w, const LinkModel<Scalar>& model,
                                             const Eigenpair<Scalar>& eig) {
  if (!model.is_uncorrelated()) throw InvalidArgument("subgradient_phi_uncorrelated requires a diagonal R_q");
  return subgradient_phi_uncorrelated(w, model, eig, mean_weight_matrix(w, model));
}

/// Spatially correlated links. Partitioning R_A into n x n blocks R_ab with
/// diagonals d_ab, columns c_ab^l and rows r_ab^l, and with
///   k1 = (e_j^T (x) I) R_A(:, iN+j),  k2 = (e_i^T (x) I) R_A(:, jN+i),
///   k3 = (e_i^T (x) I) R_A(:, iN+j),  k4 = (e_j^T (x) I) R_A(:, jN+i),
/// H_ij = 2 u_i^2 W_i^T c_ii^j + 2 u_j^2 W_j^T c_jj^i + 2 u_i W_j^T (u (.) k1)
///      + 2 u_j W_i^T (u (.) k2) - 2 u_i u_j W_j^T c_ji^j - 2 u_i u_j W_i^T c_ij^i
///      - 2 u_i W_i^T (u (.) k3) - 2 u_j W_j^T (u (.) k4)
///      + 2 P_ij (u_i - u_j) u^T (Wbar_j - Wbar_i).
/// Each inner product only touches rows r adjacent to the column node, so
/// the vectors are never formed.
template <typename Scalar, typename DW, typename DM>
MatrixX<Scalar> subgradient_phi_correlated(const Eigen::MatrixBase<DW>& w, const LinkModel<Scalar>& model,
                                           const Eigenpair<Scalar>& eig, const Eigen::MatrixBase<DM>& mean) {
  const int n = model.num_nodes();
  const LinkIndex& idx = model.idx;
  const VectorX<Scalar>& u = eig.vector;
  std::vector<std::vector<int>> nb(static_cast<std::size_t>(n));
  for (const Link& e : idx.pairs()) {
    nb[static_cast<std::size_t>(e.i)].push_back(e.j);
    nb[static_cast<std::size_t>(e.j)].push_back(e.i);
  }
  // cov(W column x, link {y,z}) helpers: Cov(A_rx, A_yz) = R_q[l(r,x), l(y,z)].
  auto col_dot = [&](int x, int link, bool weight_u) {
    Scalar s = 0;
    for (int r : nb[static_cast<std::size_t>(x)]) {
      const Scalar c = model.r_q(idx.find(r, x), link);
      s += w(r, x) * (weight_u ? u(r) : Scalar(1)) * c;
    }
    return s;
  };
  const VectorX<Scalar> uw = mean.transpose() * u;
  MatrixX<Scalar> h = MatrixX<Scalar>::Zero(n, n);
  for (int l = 0; l < idx.size(); ++l) {
    const int i = idx[l].i, j = idx[l].j;
    // A_ij and A_ji are the same link l, so c_ii^j = c_ij^i and c_jj^i = c_ji^j
    // on the supergraph rows, and k1..k4 reduce to u-weighted versions.
    const Scalar wi_cii_j = col_dot(i, l, false);  // W_i^T c_ii^j
    const Scalar wj_cjj_i = col_dot(j, l, false);  // W_j^T c_jj^i
    const Scalar wj_k1 = col_dot(j, l, true);      // W_j^T (u (.) k1)
    const Scalar wi_k2 = col_dot(i, l, true);      // W_i^T (u (.) k2)
    const Scalar wj_cji_j = wj_cjj_i;              // W_j^T c_ji^j
    const Scalar wi_cij_i = wi_cii_j;              // W_i^T c_ij^i
    const Scalar wi_k3 = wi_k2;                    // W_i^T (u (.) k3)
    const Scalar wj_k4 = wj_k1;                    // W_j^T (u (.) k4)
    const Scalar ui = u(i), uj = u(j);
    const Scalar v = Scalar(2) * ui * ui * wi_cii_j + Scalar(2) * uj * uj * wj_cjj_i + Scalar(2) * ui * wj_k1 +
                     Scalar(2) * uj * wi_k2 - Scalar(2) * ui * uj * wj_cji_j - Scalar(2) * ui * uj * wi_cij_i -
                     Scalar(2) * ui * wi_k3 - Scalar(2) * uj * wj_k4 +
                     Scalar(2) * model.pi(l) * (ui - uj) * (uw(j) - uw(i));
    h(i, j) = h(j, i) = v;
  }
  return h;
}

template <typename Scalar, typename DW>
MatrixX<Scalar> subgradient_phi_correlated(const Eigen::MatrixBase<DW>& w, const LinkModel<Scalar>& model,
                                           const Eigenpair<Scalar>& eig) {
  return subgradient_phi_correlated(w, model, eig, mean_weight_matrix(w, model));
}

// ---------------------------------------------------------------------------
// Broadcast gossip. Weights are directed: W_ij (i hears j) is used only when
// j broadcasts. H_ij = q^T dE[W^T (I-J) W]/dW_ij q with q the maximal
// eigenvector of E[W^T (I-J) W].

/// Exact derivative of the n-realization average. Only realization j depends
/// on W_ij, through dW^(j)/dW_ij = e_i (e_j - e_i)^T, giving
/// H_ij = (2/n) (q_j - q_i) [(I - J) W^(j) q]_i.
template <typename DW>
MatrixX<typename DW::Scalar> subgradient_psi_gossip(const Eigen::MatrixBase<DW>& w, const Supergraph& g,
                                                    const Eigenpair<typename DW::Scalar>& eig) {
  using S = typename DW::Scalar;
  const int n = g.num_nodes();
  const VectorX<S>& q = eig.vector;
  MatrixX<S> h = MatrixX<S>::Zero(n, n);
  VectorX<S> y(n);
  for (int j = 0; j < n; ++j) {
    y = q;
    for (int l : g.neighbors(j)) y(l) += w(l, j) * (q(j) - q(l));
    const S mean = y.mean();
    for (int i : g.neighbors(j)) h(i, j) = S(2) / S(n) * (q(j) - q(i)) * (y(i) - mean);
  }
  return h;
}

/// Transcription of the published derivative table of W^BG entries, kept for
/// comparison with subgradient_psi_gossip. The table lists two entries for
/// (i,j); the second (with free index l) is read as entry (j,l).
template <typename DW>
MatrixX<typename DW::Scalar> subgradient_psi_gossip_literal(const Eigen::MatrixBase<DW>& w, const Supergraph& g,
                                                            const Eigenpair<typename DW::Scalar>& eig) {
  using S = typename DW::Scalar;
  const int n = g.num_nodes();
  const S nn = S(n);
  const VectorX<S>& q = eig.vector;
  MatrixX<S> h = MatrixX<S>::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j : g.neighbors(i)) {
      S in_j = 0;
      for (int l = 0; l < n; ++l)
        if (l != j) in_j += w(l, j);
      MatrixX<S> d = MatrixX<S>::Zero(n, n);
      d(i, i) = -S(2) * (nn - S(1)) / nn * (S(1) - w(i, j));
      d(j, j) = S(2) / nn * w(i, j) - S(2) / nn * (S(1) - in_j);
      d(i, j) = d(j, i) = S(1) / nn * (S(1) - S(2) * w(i, j)) - S(1) / (nn * nn) * (-S(1) - in_j - w(i, j));
      for (int l = 0; l < n; ++l) {
        if (l == i || l == j) continue;
        d(i, l) = d(l, i) = S(1) / (nn * nn) * (S(1) - w(l, j));
        d(j, l) = d(l, j) = -S(1) / (nn * nn) * (S(1) - w(l, j));
      }
      h(i, j) = q.dot(d * q);
    }
  return h;
}

// ---------------------------------------------------------------------------
// Baselines.

/// W_ij = 1 / (1 + max(d_i, d_j)) on supergraph links.
template <typename Scalar = double>
MatrixX<Scalar> metropolis_weights(const Supergraph& g) {
  const int n = g.num_nodes();
  MatrixX<Scalar> w = MatrixX<Scalar>::Zero(n, n);
  for (const Link& e : g.links())
    w(e.i, e.j) = w(e.j, e.i) = Scalar(1) / Scalar(1 + std::max(g.degree(e.i), g.degree(e.j)));
  return w;
}

/// Every directed supergraph edge carries weight `value`.
template <typename Scalar = double>
MatrixX<Scalar> uniform_weights(const Supergraph& g, Scalar value) {
  return g.adjacency<Scalar>() * value;
}

// ---------------------------------------------------------------------------
// Subgradient method for phi.

template <typename Scalar>
MatrixX<Scalar> phi_subgradient(const PhiObjective<Scalar>& objective, const MatrixX<Scalar>& w,
                                const PhiValue<Scalar>& value, OptimizerMode mode) {
  switch (mode) {
    case OptimizerMode::kPhiUncorrelated:
      return subgradient_phi_uncorrelated(w, objective.model(), value.eig, value.moments.mean);
    case OptimizerMode::kPhiCorrelated:
      return subgradient_phi_correlated(w, objective.model(), value.eig, value.moments.mean);
    default:
      throw InvalidArgument("optimizer mode is not a phi mode");
  }
}

/// W^(k+1) = W^(k) - alpha_k H^(k), alpha_k = step_scale / sqrt(k); returns
/// the best iterate seen, since the method does not decrease monotonically.
template <typename Scalar>
OptimizationResult<Scalar> optimize_phi(const MatrixX<Scalar>& w0, const PhiObjective<Scalar>& objective,
                                        const OptimizerConfig& cfg) {
  if (cfg.max_iters < 1) throw InvalidArgument("max_iters must be at least 1");
  if (!(cfg.step_scale > 0)) throw InvalidArgument("step_scale must be positive");
  if (cfg.mode == OptimizerMode::kPhiUncorrelated && !objective.model().is_uncorrelated())
    throw InvalidArgument("phi_uncorrelated mode requires a diagonal R_q");
  OptimizationResult<Scalar> res;
  MatrixX<Scalar> w = w0;
  PhiValue<Scalar> val = objective.evaluate(w);
  res.best_weights = w;
  res.best_objective = val.value;
  res.objective_trace.reserve(static_cast<std::size_t>(cfg.max_iters) + 1);
  res.objective_trace.push_back(val.value);
  for (int k = 1; k <= cfg.max_iters; ++k) {
    const MatrixX<Scalar> h = phi_subgradient(objective, w, val, cfg.mode);
    w -= Scalar(cfg.step_scale / std::sqrt(double(k))) * h;
    val = objective.evaluate(w);
    if (!std::isfinite(double(val.value)))
      throw NumericalError("optimize_phi: objective became non-finite at iteration " + std::to_string(k));
    res.objective_trace.push_back(val.value);
    res.iterations_run = k;
    if (val.value < res.best_objective) {
      res.best_objective = val.value;
      res.best_weights = w;
    }
  }
  return res;
}

template <typename Scalar>
OptimizationResult<Scalar> optimize_phi(const MatrixX<Scalar>& w0, const LinkModel<Scalar>& model,
                                        const OptimizerConfig& cfg) {
  return optimize_phi(w0, PhiObjective<Scalar>(model), cfg);
}

/// Runs `run(cfg)` once per step scale and keeps the best result. Scales whose
/// iterates diverge are skipped; throws if every scale diverged.
template <typename Run>
auto best_over_step_scales(const std::vector<double>& scales, OptimizerConfig cfg, Run&& run) {
  if (scales.empty()) throw InvalidArgument("step scale list is empty");
  std::optional<decltype(run(cfg))> best;
  double best_scale = 0;
  for (double s : scales) {
    cfg.step_scale = s;
    try {
      auto res = run(cfg);
      if (!best || res.best_objective < best->best_objective) {
        best = std::move(res);
        best_scale = s;
      }
    } catch (const NumericalError&) {
    }
  }
  if (!best) throw NumericalError("optimizer diverged for every step scale");
  return std::pair{std::move(*best), best_scale};
}

/// Optimal weights for the static supergraph (all links always up), started
/// from Metropolis weights.
template <typename Scalar = double>
OptimizationResult<Scalar> supergraph_weights(const Supergraph& g, OptimizerConfig cfg) {
  if (!is_connected(g)) throw InvalidArgument("supergraph_weights needs a connected supergraph");
  cfg.mode = OptimizerMode::kPhiUncorrelated;
  return optimize_phi(metropolis_weights<Scalar>(g), deterministic_model<Scalar>(g), cfg);
}

// ---------------------------------------------------------------------------
// Projected subgradient method for psi.

/// Euclidean projection onto {W supported on directed supergraph edges :
/// 1^T E[W] = 1^T}, i.e. for every node v
///   sum_i P_iv W_iv = sum_m P_vm W_vm.
template <typename Scalar>
class BalanceProjector {
 public:
  BalanceProjector(const Supergraph& g, const MatrixX<Scalar>& p) : n_(g.num_nodes()) {
    if (!p.allFinite() || (p.array() < Scalar(0)).any())
      throw InfeasibleError("balance constraint needs finite non-negative probabilities");
    for (int i = 0; i < n_; ++i)
      for (int j : g.neighbors(i)) edges_.push_back({i, j});
    const int e = static_cast<int>(edges_.size());
    c_ = MatrixX<Scalar>::Zero(n_, e);
    for (int k = 0; k < e; ++k) {
      const auto [i, j] = edges_[static_cast<std::size_t>(k)];
      c_(j, k) += p(i, j);  // W_ij enters column j of E[W]
      c_(i, k) -= p(i, j);  // and the diagonal entry of row i
    }
    gram_.compute(c_ * c_.transpose());
  }

  MatrixX<Scalar> operator()(const MatrixX<Scalar>& w) const {
    VectorX<Scalar> x = flatten(w);
    const VectorX<Scalar> lambda = gram_.solve(c_ * x);
    x -= c_.transpose() * lambda;
    return unflatten(x);
  }

  /// Largest |(1^T E[W])_v - 1|.
  Scalar residual(const MatrixX<Scalar>& w) const { return (c_ * flatten(w)).cwiseAbs().maxCoeff(); }

  const MatrixX<Scalar>& constraint_matrix() const { return c_; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }

  VectorX<Scalar> flatten(const MatrixX<Scalar>& w) const {
    VectorX<Scalar> x(static_cast<Eigen::Index>(edges_.size()));
    for (std::size_t k = 0; k < edges_.size(); ++k) x(static_cast<Eigen::Index>(k)) = w(edges_[k].first, edges_[k].second);
    return x;
  }
  MatrixX<Scalar> unflatten(const VectorX<Scalar>& x) const {
    MatrixX<Scalar> w = MatrixX<Scalar>::Zero(n_, n_);
    for (std::size_t k = 0; k < edges_.size(); ++k) w(edges_[k].first, edges_[k].second) = x(static_cast<Eigen::Index>(k));
    return w;
  }

 private:
  int n_;
  std::vector<std::pair<int, int>> edges_;
  MatrixX<Scalar> c_;
  Eigen::CompleteOrthogonalDecomposition<MatrixX<Scalar>> gram_;
};

/// Node-pair probabilities of broadcast gossip: W_ij is active when j
/// broadcasts, with probability 1/n.
template <typename Scalar = double>
MatrixX<Scalar> gossip_probabilities(const Supergraph& g) {
  return g.adjacency<Scalar>() / Scalar(g.num_nodes());
}

/// Projected subgradient minimization of psi for broadcast gossip. In
/// constrained mode every iterate (including w0) is projected onto the
/// balance set defined by `p` (defaults to the gossip probabilities).
template <typename Scalar>
OptimizationResult<Scalar> optimize_psi(const MatrixX<Scalar>& w0, const Supergraph& g, const OptimizerConfig& cfg,
                                        bool constrained, std::optional<MatrixX<Scalar>> p = std::nullopt) {
  if (cfg.max_iters < 1) throw InvalidArgument("max_iters must be at least 1");
  if (!(cfg.step_scale > 0)) throw InvalidArgument("step_scale must be positive");
  std::optional<BalanceProjector<Scalar>> proj;
  if (constrained) proj.emplace(g, p ? *p : gossip_probabilities<Scalar>(g));
  const MatrixX<Scalar> support = g.adjacency<Scalar>();

  auto eval = [&](const MatrixX<Scalar>& w) { return max_eigenpair(gossip_moments(w, g).deviation()); };
  MatrixX<Scalar> w = proj ? (*proj)(w0) : MatrixX<Scalar>(w0.cwiseProduct(support));
  Eigenpair<Scalar> eig = eval(w);
  OptimizationResult<Scalar> res{w, eig.value, {eig.value}, 0};
  for (int k = 1; k <= cfg.max_iters; ++k) {
    w -= Scalar(cfg.step_scale / std::sqrt(double(k))) * subgradient_psi_gossip(w, g, eig);
    if (proj) w = (*proj)(w);
    eig = eval(w);
    if (!std::isfinite(double(eig.value)))
      throw NumericalError("optimize_psi: objective became non-finite at iteration " + std::to_string(k));
    res.objective_trace.push_back(eig.value);
    res.iterations_run = k;
    if (eig.value < res.best_objective) {
      res.best_objective = eig.value;
      res.best_weights = w;
    }
  }
  return res;
}

template <typename Scalar>
struct EqualGossipWeight {
  Scalar weight;
  Scalar rate;
};

/// Best common weight g in (0, 1] for broadcast gossip, by golden-section
/// search on the convex function g -> psi(g A).
template <typename Scalar = double>
EqualGossipWeight<Scalar> optimal_equal_gossip_weight(const Supergraph& g, Scalar tol = Scalar(1e-6)) {
  const MatrixX<Scalar> a = g.adjacency<Scalar>();
  auto f = [&](Scalar x) { return psi_gossip(MatrixX<Scalar>(x * a), g); };
  const Scalar ratio = (std::sqrt(Scalar(5)) - Scalar(1)) / Scalar(2);
  Scalar lo = 0, hi = 1;
  Scalar x1 = hi - ratio * (hi - lo), x2 = lo + ratio * (hi - lo);
  Scalar f1 = f(x1), f2 = f(x2);
  while (hi - lo > tol) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - ratio * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + ratio * (hi - lo);
      f2 = f(x2);
    }
  }
  Scalar best = Scalar(0.5) * (lo + hi), fbest = f(best);
  // The interval endpoint 1 is admissible and is the optimum for tiny graphs.
  const Scalar fone = f(Scalar(1));
  if (fone <= fbest) {
    best = 1;
    fbest = fone;
  }
  return {best, fbest};
}

}  // namespace pbw
