#pragma once

#include <algorithm>
#include <vector>

#include <Eigen/Sparse>

#include "pbw/core.hpp"
#include "pbw/graph.hpp"
#include "pbw/link_model.hpp"
#include "pbw/sampling.hpp"

namespace pbw {

/// Realized adjacency. Symmetric samples set A_ij = A_ji = q_l; a gossip
/// sample with broadcaster i sets A_li = 1 for every neighbour l of i.
template <typename Scalar = double>
MatrixX<Scalar> realized_adjacency(const Supergraph& g, const TopologySample& sample) {
  const int n = g.num_nodes();
  MatrixX<Scalar> a = MatrixX<Scalar>::Zero(n, n);
  if (sample.is_gossip()) {
    for (int l : g.neighbors(sample.broadcaster)) a(l, sample.broadcaster) = Scalar(1);
    return a;
  }
  if (static_cast<int>(sample.bits.size()) != g.num_links()) throw InvalidArgument("sample length differs from link count");
  for (int l = 0; l < g.num_links(); ++l) {
    if (!sample.bits[static_cast<std::size_t>(l)]) continue;
    const Link& e = g.links()[static_cast<std::size_t>(l)];
    a(e.i, e.j) = a(e.j, e.i) = Scalar(1);
  }
  return a;
}

/// W (.) A + I - diag((W (.) A) 1). Every row sums to one.
template <typename DW, typename DA>
MatrixX<typename DW::Scalar> realized_weight_matrix(const Eigen::MatrixBase<DW>& w, const Eigen::MatrixBase<DA>& a) {
  using S = typename DW::Scalar;
  MatrixX<S> out = w.cwiseProduct(a);
  VectorX<S> rows = out.rowwise().sum();
  out.diagonal().array() += S(1) - rows.array();
  return out;
}

/// Expected weight matrix W (.) P + I - diag((W (.) P) 1).
template <typename DW, typename DP>
MatrixX<typename DW::Scalar> mean_weight_matrix(const Eigen::MatrixBase<DW>& w, const Eigen::MatrixBase<DP>& p) {
  return realized_weight_matrix(w, p);
}

template <typename Scalar, typename DW>
MatrixX<Scalar> mean_weight_matrix(const Eigen::MatrixBase<DW>& w, const LinkModel<Scalar>& model) {
  return mean_weight_matrix(w, model.p_matrix());
}

template <typename Scalar>
struct MomentSet {
  MatrixX<Scalar> mean;           ///< E[W]
  MatrixX<Scalar> second_moment;  ///< E[W^2]
  MatrixX<Scalar> covariance;     ///< R_C = E[W^2] - E[W]^2
};

/// Sparse evaluation of R_C = W_C^T {R_A (.) (I (x) 11^T + 11^T (x) I - B)} W_C.
/// Entry (a, b) collects R_A[(r,a),(c,b)] M[(r,a),(c,b)] W_ra W_cb over
/// supergraph edges (r,a), (c,b) where the mask M is nonzero, so only pairs of
/// edges sharing a node are visited. The term list depends on the model alone
/// and is reused across weight matrices.
template <typename Scalar>
class CovarianceOperator {
 public:
  explicit CovarianceOperator(const LinkModel<Scalar>& model) : n_(model.num_nodes()) {
    const LinkIndex& idx = model.idx;
    std::vector<std::vector<int>> nb(static_cast<std::size_t>(n_));
    for (const Link& e : idx.pairs()) {
      nb[static_cast<std::size_t>(e.i)].push_back(e.j);
      nb[static_cast<std::size_t>(e.j)].push_back(e.i);
    }
    std::vector<std::pair<int, int>> cand;
    for (int a = 0; a < n_; ++a)
      for (int r : nb[static_cast<std::size_t>(a)]) {
        // (r, a) is a directed edge; candidates (c, b) with a nonzero mask.
        cand.clear();
        for (int c : nb[static_cast<std::size_t>(a)]) cand.emplace_back(c, a);  // b == a
        for (int b : nb[static_cast<std::size_t>(r)]) cand.emplace_back(r, b);  // c == r
        for (int b : nb[static_cast<std::size_t>(a)]) cand.emplace_back(a, b);  // c == a
        for (int c : nb[static_cast<std::size_t>(r)]) cand.emplace_back(c, r);  // b == r
        std::sort(cand.begin(), cand.end());
        cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
        const int l1 = idx.find(r, a);
        for (auto [c, b] : cand) {
          const int mask = int(a == b) + int(r == c) - (a != b ? int(c == a) + int(r == b) : 0);
          if (mask == 0) continue;
          const Scalar cov = model.r_q(l1, idx.find(c, b));
          if (cov == Scalar(0)) continue;
          terms_.push_back({a, b, r, c, Scalar(mask) * cov});
        }
      }
  }

  template <typename Derived>
  MatrixX<Scalar> operator()(const Eigen::MatrixBase<Derived>& w) const {
    MatrixX<Scalar> rc = MatrixX<Scalar>::Zero(n_, n_);
    for (const Term& t : terms_) rc(t.a, t.b) += t.coef * w(t.r, t.a) * w(t.c, t.b);
    return rc;
  }

  std::size_t num_terms() const { return terms_.size(); }

 private:
  struct Term {
    int a, b, r, c;
    Scalar coef;
  };
  int n_;
  std::vector<Term> terms_;
};

/// Lemma-style second moment for symmetric links with arbitrary spatial
/// correlation.
template <typename Scalar, typename Derived>
MomentSet<Scalar> second_moment_correlated(const Eigen::MatrixBase<Derived>& w, const LinkModel<Scalar>& model,
                                           const CovarianceOperator<Scalar>& op) {
  MomentSet<Scalar> out;
  out.mean = mean_weight_matrix(w, model);
  out.covariance = op(w);
  out.second_moment = out.mean * out.mean + out.covariance;
  return out;
}

template <typename Scalar, typename Derived>
MomentSet<Scalar> second_moment_correlated(const Eigen::MatrixBase<Derived>& w, const LinkModel<Scalar>& model) {
  return second_moment_correlated(w, model, CovarianceOperator<Scalar>(model));
}

/// R_C evaluated through the sparse lifted matrices, transcribing the
/// Kronecker expression literally.
template <typename Scalar>
MatrixX<Scalar> covariance_from_scaffold(const MomentScaffold<Scalar>& s, int n) {
  std::vector<Eigen::Triplet<Scalar>> t;
  for (int k = 0; k < s.r_a.outerSize(); ++k)
    for (typename Eigen::SparseMatrix<Scalar>::InnerIterator it(s.r_a, k); it; ++it) {
      const int row = static_cast<int>(it.row()), col = static_cast<int>(it.col());
      const int a = row / n, r = row % n, b = col / n, c = col % n;
      // (I (x) 11^T): same block; (11^T (x) I): same position inside block.
      const Scalar kron = Scalar(a == b) + Scalar(r == c);
      const Scalar mask = kron - s.b.coeff(row, col);
      if (mask != Scalar(0)) t.emplace_back(row, col, it.value() * mask);
    }
  Eigen::SparseMatrix<Scalar> masked(n * n, n * n);
  masked.setFromTriplets(t.begin(), t.end());
  Eigen::SparseMatrix<Scalar> rc = Eigen::SparseMatrix<Scalar>(s.w_c.transpose()) * masked * s.w_c;
  return MatrixX<Scalar>(rc);
}

/// Closed form for spatially uncorrelated links:
/// R_C / 2 = diag{((11^T - P) (.) P)(W (.) W)} - (11^T - P) (.) P (.) W (.) W.
/// Throws if the model carries off-diagonal correlations.
template <typename Scalar, typename Derived>
MatrixX<Scalar> covariance_uncorrelated(const Eigen::MatrixBase<Derived>& w, const LinkModel<Scalar>& model) {
  if (!model.is_uncorrelated()) throw InvalidArgument("covariance_uncorrelated requires a diagonal R_q");
  const MatrixX<Scalar> p = model.p_matrix();
  const int n = model.num_nodes();
  const MatrixX<Scalar> var = (MatrixX<Scalar>::Ones(n, n) - p).cwiseProduct(p);
  const MatrixX<Scalar> w2 = w.cwiseProduct(w);
  const MatrixX<Scalar> term = var.cwiseProduct(w2);
  MatrixX<Scalar> half = -term;
  // diag{X Y} keeps the diagonal of the matrix product.
  half.diagonal() += (var * w2).diagonal();
  return Scalar(2) * half;
}

/// E[W^T W] and E[W^T J W] for broadcast gossip.
template <typename Scalar>
struct GossipMoments {
  MatrixX<Scalar> ww;
  MatrixX<Scalar> wjw;
  MatrixX<Scalar> deviation() const { return ww - wjw; }  ///< E[W^T (I - J) W]
};

/// Exact average over the n equiprobable broadcast realizations
/// W^(k) = I + sum_{l in N(k)} W_lk e_l (e_k - e_l)^T, accumulated without
/// forming the realizations.
template <typename Derived>
GossipMoments<typename Derived::Scalar> gossip_moments(const Eigen::MatrixBase<Derived>& w, const Supergraph& g) {
  using S = typename Derived::Scalar;
  const int n = g.num_nodes();
  GossipMoments<S> out{MatrixX<S>::Identity(n, n) * S(n), MatrixX<S>::Zero(n, n)};
  VectorX<S> colsum(n);
  for (int k = 0; k < n; ++k) {
    colsum.setOnes();
    for (int l : g.neighbors(k)) {
      const S x = w(l, k);
      out.ww(l, k) += x - x * x;
      out.ww(k, l) += x - x * x;
      out.ww(l, l) += x * x - S(2) * x;
      out.ww(k, k) += x * x;
      colsum(k) += x;
      colsum(l) -= x;
    }
    out.wjw.template selfadjointView<Eigen::Lower>().rankUpdate(colsum, S(1) / S(n));
  }
  out.wjw = out.wjw.template selfadjointView<Eigen::Lower>();
  out.ww /= S(n);
  out.wjw /= S(n);
  return out;
}

/// Entrywise transcription of the published broadcast-gossip moment
/// expressions. Kept for comparison with gossip_moments; its E[W^T W]
/// diagonal misses the realizations in which node i keeps weight one.
template <typename Derived>
GossipMoments<typename Derived::Scalar> gossip_moments_literal(const Eigen::MatrixBase<Derived>& w, const Supergraph& g) {
  using S = typename Derived::Scalar;
  const int n = g.num_nodes();
  const S inv = S(1) / S(n), inv2 = inv * inv;
  GossipMoments<S> out{MatrixX<S>::Zero(n, n), MatrixX<S>::Zero(n, n)};
  // Sums over l != i only run over supergraph neighbours: W vanishes elsewhere,
  // but (1 - W_il) terms do not, so those loops cover every l.
  VectorX<S> in(n);
  for (int i = 0; i < n; ++i) {
    S s = 0;
    for (int l = 0; l < n; ++l)
      if (l != i) s += w(l, i);
    in(i) = s;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) {
        S a = 0, b = 0;
        for (int l = 0; l < n; ++l) {
          if (l == i) continue;
          a += w(l, i) * w(l, i);
          b += (S(1) - w(i, l)) * (S(1) - w(i, l));
        }
        out.ww(i, i) = inv * a + inv * b;
        out.wjw(i, i) = inv2 * (S(1) + in(i)) * (S(1) + in(i)) + inv2 * b;
      } else {
        out.ww(i, j) = inv * w(i, j) * (S(1) - w(i, j)) + inv * w(j, i) * (S(1) - w(j, i));
        S c = 0;
        for (int l = 0; l < n; ++l)
          if (l != i && l != j) c += (S(1) - w(i, l)) * (S(1) - w(j, l));
        out.wjw(i, j) = inv2 * (S(1) - w(j, i)) * (S(1) + in(i)) + inv2 * (S(1) - w(i, j)) * (S(1) + in(j)) + inv2 * c;
      }
    }
  (void)g;
  return out;
}

enum class Projector { kNone, kDeviation };

/// Sample average of W^T W (or W^T (I - J) W) over realized weight matrices.
template <typename Derived>
MatrixX<typename Derived::Scalar> monte_carlo_second_moment(const Eigen::MatrixBase<Derived>& w, const Supergraph& g,
                                                            const std::vector<TopologySample>& samples,
                                                            Projector projector = Projector::kNone) {
  using S = typename Derived::Scalar;
  if (samples.empty()) throw InvalidArgument("monte_carlo_second_moment needs at least one sample");
  const int n = g.num_nodes();
  MatrixX<S> acc = MatrixX<S>::Zero(n, n);
  for (const auto& smp : samples) {
    MatrixX<S> wk = realized_weight_matrix(w, realized_adjacency<S>(g, smp));
    if (projector == Projector::kDeviation) {
      MatrixX<S> dev = wk.rowwise() - wk.colwise().mean();
      acc.noalias() += dev.transpose() * dev;
    } else {
      acc.noalias() += wk.transpose() * wk;
    }
  }
  return acc / S(samples.size());
}

}  // namespace pbw
