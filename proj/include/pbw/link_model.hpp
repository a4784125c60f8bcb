#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "pbw/core.hpp"
#include "pbw/graph.hpp"

namespace pbw {

/// Second-order description of the random topology: link formation
/// probabilities pi and the link covariance R_q, both indexed by LinkIndex.
template <typename Scalar>
struct LinkModel {
  LinkIndex idx;
  VectorX<Scalar> pi;
  MatrixX<Scalar> r_q;

  int num_nodes() const { return idx.num_nodes(); }
  int num_links() const { return idx.size(); }

  /// Symmetric n x n node-pair probability matrix, zero off the supergraph.
  MatrixX<Scalar> p_matrix() const {
    const int n = num_nodes();
    MatrixX<Scalar> p = MatrixX<Scalar>::Zero(n, n);
    for (int l = 0; l < num_links(); ++l) p(idx[l].i, idx[l].j) = p(idx[l].j, idx[l].i) = pi(l);
    return p;
  }

  bool is_uncorrelated() const {
    for (int l = 0; l < num_links(); ++l)
      for (int s = 0; s < num_links(); ++s)
        if (l != s && r_q(l, s) != Scalar(0)) return false;
    return true;
  }

  template <typename Other>
  LinkModel<Other> cast() const {
    return {idx, pi.template cast<Other>(), r_q.template cast<Other>()};
  }
};

/// Pairwise upper bound pi_min (1 - pi_max) on the covariance of two Bernoulli variables.
template <typename Scalar>
Scalar covariance_upper_bound(Scalar a, Scalar b) {
  return std::min(a, b) * (Scalar(1) - std::max(a, b));
}

template <typename Scalar>
Scalar covariance_lower_bound(Scalar a, Scalar b) {
  return std::max(-a * b, a + b - Scalar(1) - a * b);
}

/// Uncorrelated model with the given per-link probabilities.
template <typename Scalar>
LinkModel<Scalar> independent_model(const Supergraph& g, const VectorX<Scalar>& pi) {
  LinkIndex idx(g);
  if (pi.size() != idx.size()) throw InvalidArgument("pi length must equal the number of links");
  VectorX<Scalar> var = pi.array() * (Scalar(1) - pi.array());
  return {std::move(idx), pi, var.asDiagonal()};
}

/// Static topology: every supergraph link is always up.
template <typename Scalar = double>
LinkModel<Scalar> deterministic_model(const Supergraph& g) {
  return independent_model<Scalar>(g, VectorX<Scalar>::Ones(g.num_links()));
}

/// P_ij = 1 - k (delta_ij / r)^2 for each supergraph link; links independent.
template <typename Scalar = double>
LinkModel<Scalar> probabilities_from_distances(const Supergraph& g, Scalar k_coef) {
  if (!g.positions() || !g.radius()) throw InvalidArgument("distance-based probabilities need node positions and radius");
  if (!(k_coef > Scalar(0) && k_coef <= Scalar(1))) throw InvalidArgument("k_coef must lie in (0, 1]");
  const Scalar r = static_cast<Scalar>(*g.radius());
  VectorX<Scalar> pi(g.num_links());
  for (int l = 0; l < g.num_links(); ++l) {
    const Link& e = g.links()[static_cast<std::size_t>(l)];
    const Scalar ratio = static_cast<Scalar>(g.distance(e.i, e.j)) / r;
    pi(l) = Scalar(1) - k_coef * ratio * ratio;
  }
  return independent_model<Scalar>(g, pi);
}

namespace detail {

template <typename Scalar>
void reset_variance(LinkModel<Scalar>& m) {
  for (int l = 0; l < m.num_links(); ++l) m.r_q(l, l) = m.pi(l) * (Scalar(1) - m.pi(l));
}

}  // namespace detail

/// Off-diagonal covariances set to c1 times the pairwise upper bound.
template <typename Scalar>
LinkModel<Scalar> correlation_uniform_fraction(LinkModel<Scalar> model, Scalar c1) {
  const int m = model.num_links();
  for (int l = 0; l < m; ++l)
    for (int s = 0; s < m; ++s)
      if (l != s) model.r_q(l, s) = c1 * covariance_upper_bound(model.pi(l), model.pi(s));
  detail::reset_variance(model);
  return model;
}

/// Off-diagonal covariances c2 theta^kappa times the pairwise upper bound,
/// kappa being the hop distance between links. Disconnected pairs get zero.
template <typename Scalar>
LinkModel<Scalar> correlation_geometric_decay(LinkModel<Scalar> model, const Eigen::MatrixXi& kappa, Scalar c2,
                                              Scalar theta) {
  const int m = model.num_links();
  if (kappa.rows() != m || kappa.cols() != m) throw InvalidArgument("link distance matrix has wrong shape");
  for (int l = 0; l < m; ++l)
    for (int s = 0; s < m; ++s) {
      if (l == s) continue;
      model.r_q(l, s) = kappa(l, s) == kInfiniteDistance
                            ? Scalar(0)
                            : c2 * std::pow(theta, Scalar(kappa(l, s))) * covariance_upper_bound(model.pi(l), model.pi(s));
    }
  detail::reset_variance(model);
  return model;
}

template <typename Scalar>
LinkModel<Scalar> correlation_geometric_decay(LinkModel<Scalar> model, const Supergraph& g, Scalar c2, Scalar theta) {
  const Eigen::MatrixXi kappa = link_distances(g, model.idx);
  return correlation_geometric_decay(std::move(model), kappa, c2, theta);
}

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> violations;
  void fail(std::string what) {
    ok = false;
    violations.push_back(std::move(what));
  }
};

/// Checks the necessary conditions on (pi, R_q) of a Bernoulli vector:
/// probabilities in [0,1], R_q PSD (tolerance 1e-10), pairwise covariance
/// bounds and Bernoulli variances on the diagonal.
template <typename Scalar>
ValidationReport validate_moments(const LinkModel<Scalar>& model, Scalar tol = Scalar(1e-10)) {
  ValidationReport rep;
  const int m = model.num_links();
  if (model.pi.size() != m || model.r_q.rows() != m || model.r_q.cols() != m) {
    rep.fail("dimension mismatch between link index, pi and r_q");
    return rep;
  }
  for (int l = 0; l < m; ++l)
    if (!(model.pi(l) >= Scalar(0) && model.pi(l) <= Scalar(1)))
      rep.fail("probability out of range at link " + std::to_string(l) + ": " + to_string_prec(double(model.pi(l))));
  if (!rep.ok) return rep;
  for (int l = 0; l < m; ++l) {
    const Scalar var = model.pi(l) * (Scalar(1) - model.pi(l));
    if (std::abs(model.r_q(l, l) - var) > tol)
      rep.fail("diagonal " + std::to_string(l) + " is not the Bernoulli variance " + to_string_prec(double(var)));
  }
  for (int l = 0; l < m; ++l)
    for (int s = l + 1; s < m; ++s) {
      const Scalar v = model.r_q(l, s);
      if (std::abs(v - model.r_q(s, l)) > tol) rep.fail("r_q not symmetric at (" + std::to_string(l) + "," + std::to_string(s) + ")");
      const Scalar upper = covariance_upper_bound(model.pi(l), model.pi(s));
      const Scalar lower = covariance_lower_bound(model.pi(l), model.pi(s));
      if (v > upper + tol)
        rep.fail("covariance (" + std::to_string(l) + "," + std::to_string(s) + ")=" + to_string_prec(double(v)) +
                 " exceeds upper bound " + to_string_prec(double(upper)));
      if (v < lower - tol)
        rep.fail("covariance (" + std::to_string(l) + "," + std::to_string(s) + ")=" + to_string_prec(double(v)) +
                 " below lower bound " + to_string_prec(double(lower)));
    }
  if (m > 0) {
    const Scalar lmin = min_eigenvalue(model.r_q);
    if (lmin < -tol) rep.fail("r_q not positive semidefinite: smallest eigenvalue " + to_string_prec(double(lmin)));
  }
  return rep;
}

/// Complete graph, uniform probability p, pairwise correlation coefficient beta.
/// Feasible range: max(-1/(M-1), -p/(1-p)) <= beta <= 1.
template <typename Scalar = double>
LinkModel<Scalar> complete_uniform_model(int n, Scalar p, Scalar beta) {
  if (n < 2) throw InvalidArgument("complete model needs n >= 2");
  if (!(p > Scalar(0) && p <= Scalar(1))) throw InvalidArgument("p must lie in (0, 1]");
  const Scalar links = Scalar(n) * Scalar(n - 1) / Scalar(2);
  if (beta > Scalar(1)) throw InvalidArgument("beta exceeds upper bound 1");
  if (links > Scalar(1) && beta < Scalar(-1) / (links - Scalar(1)))
    throw InvalidArgument("beta below PSD bound -1/(M-1) = " + to_string_prec(double(Scalar(-1) / (links - Scalar(1)))));
  if (p < Scalar(1) && beta < -p / (Scalar(1) - p))
    throw InvalidArgument("beta below joint-probability bound -p/(1-p) = " + to_string_prec(double(-p / (Scalar(1) - p))));
  const Supergraph g = complete_graph(n);
  LinkModel<Scalar> model = independent_model<Scalar>(g, VectorX<Scalar>::Constant(g.num_links(), p));
  const Scalar var = p * (Scalar(1) - p);
  model.r_q = MatrixX<Scalar>::Constant(g.num_links(), g.num_links(), beta * var);
  model.r_q.diagonal().setConstant(var);
  return model;
}

/// Lifted (sparse) quantities of the random weight matrix second moment.
/// Vec(.) is column-major: entry (r, a) of an n x n matrix sits at a * n + r.
template <typename Scalar>
struct MomentScaffold {
  Eigen::SparseMatrix<Scalar> f;    ///< n^2 x m, Vec(A) = F q
  Eigen::SparseMatrix<Scalar> b;    ///< n^2 x n^2 mask (zero diagonal blocks)
  Eigen::SparseMatrix<Scalar> w_c;  ///< n^2 x n, direct sum of the columns of W
  Eigen::SparseMatrix<Scalar> r_a;  ///< n^2 x n^2, F R_q F^T
};

template <typename Scalar>
Eigen::SparseMatrix<Scalar> selection_matrix(const LinkIndex& idx) {
  const int n = idx.num_nodes();
  std::vector<Eigen::Triplet<Scalar>> t;
  for (int l = 0; l < idx.size(); ++l) {
    t.emplace_back(idx[l].j * n + idx[l].i, l, Scalar(1));
    t.emplace_back(idx[l].i * n + idx[l].j, l, Scalar(1));
  }
  Eigen::SparseMatrix<Scalar> f(n * n, idx.size());
  f.setFromTriplets(t.begin(), t.end());
  return f;
}

/// Builds F, B, W_C and R_A from their definitions. Memory grows as n^4 for
/// B; intended for small networks and cross-checks.
template <typename Scalar, typename Derived>
MomentScaffold<Scalar> build_scaffold(const LinkModel<Scalar>& model, const Eigen::MatrixBase<Derived>& w) {
  const int n = model.num_nodes();
  if (w.rows() != n || w.cols() != n) throw InvalidArgument("weight matrix has wrong shape");
  MomentScaffold<Scalar> s;
  s.f = selection_matrix<Scalar>(model.idx);
  Eigen::SparseMatrix<Scalar> rq = model.r_q.sparseView();
  s.r_a = s.f * rq * Eigen::SparseMatrix<Scalar>(s.f.transpose());

  std::vector<Eigen::Triplet<Scalar>> tb;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      if (a == b) continue;
      // Block (a, b) = 1 e_a^T + e_b 1^T.
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
          const Scalar v = Scalar(c == a) + Scalar(r == b);
          if (v != Scalar(0)) tb.emplace_back(a * n + r, b * n + c, v);
        }
    }
  s.b.resize(n * n, n * n);
  s.b.setFromTriplets(tb.begin(), tb.end());

  std::vector<Eigen::Triplet<Scalar>> tw;
  for (int k = 0; k < n; ++k)
    for (int r = 0; r < n; ++r)
      if (w(r, k) != Scalar(0)) tw.emplace_back(k * n + r, k, w(r, k));
  s.w_c.resize(n * n, n);
  s.w_c.setFromTriplets(tw.begin(), tw.end());
  return s;
}

}  // namespace pbw
