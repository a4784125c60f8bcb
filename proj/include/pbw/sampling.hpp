#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "pbw/core.hpp"
#include "pbw/graph.hpp"
#include "pbw/link_model.hpp"

namespace pbw {

/// One topology realization. Symmetric mode carries the link bits q; gossip
/// mode carries only the broadcasting node (bits empty).
struct TopologySample {
  std::vector<std::uint8_t> bits;
  int broadcaster = -1;

  bool is_gossip() const { return broadcaster >= 0; }
};

/// Conditional linear family: links are drawn in index order with
/// P(q_l = 1 | q_0..q_{l-1}) = pi_l + sum_{k<l} B(l,k) (q_k - pi_k).
template <typename Scalar>
struct ClfCoefficients {
  VectorX<Scalar> pi;
  MatrixX<Scalar> b;  ///< strictly lower triangular regression coefficients
};

namespace detail {

/// Extreme conditional probabilities of link l over the whole hypercube of
/// previous outcomes.
template <typename Scalar>
std::pair<Scalar, Scalar> lambda_range(const ClfCoefficients<Scalar>& c, int l) {
  Scalar hi = c.pi(l), lo = c.pi(l);
  for (int k = 0; k < l; ++k) {
    const Scalar bk = c.b(l, k);
    const Scalar up = bk * (Scalar(1) - c.pi(k));
    const Scalar down = -bk * c.pi(k);
    hi += std::max(up, down);
    lo += std::min(up, down);
  }
  return {lo, hi};
}

}  // namespace detail

/// Solves the sequential regressions R_{<l,<l} b_l = R_{<l,l} for every link
/// through one order-preserving semidefinite Cholesky factorization. Links
/// whose residual variance vanishes are treated as deterministic functions of
/// their predecessors and receive zero coefficients on the regressions of
/// later links. Throws InfeasibleError if a conditional probability can leave
/// [0, 1] for some pattern of earlier outcomes.
template <typename Scalar>
ClfCoefficients<Scalar> fit_clf(const LinkModel<Scalar>& model) {
  const int m = model.num_links();
  const MatrixX<Scalar>& r = model.r_q;
  ClfCoefficients<Scalar> out{model.pi, MatrixX<Scalar>::Zero(m, m)};
  MatrixX<Scalar> chol = MatrixX<Scalar>::Zero(m, m);
  std::vector<bool> basis(static_cast<std::size_t>(m), false);
  const Scalar pivot_tol = Scalar(1e-12);
  constexpr Scalar kSlack = Scalar(1e-12);

  for (int l = 0; l < m; ++l) {
    for (int k = 0; k < l; ++k) {
      if (!basis[static_cast<std::size_t>(k)]) continue;
      Scalar v = r(l, k) - chol.row(l).head(k).dot(chol.row(k).head(k));
      chol(l, k) = v / chol(k, k);
    }
    const Scalar resid = r(l, l) - chol.row(l).head(l).squaredNorm();
    if (resid > pivot_tol * std::max(r(l, l), Scalar(1e-300))) {
      basis[static_cast<std::size_t>(l)] = true;
      chol(l, l) = std::sqrt(resid);
    } else {
      if (resid < -Scalar(1e-8)) throw InfeasibleError("link covariance not positive semidefinite at link " + std::to_string(l));
      chol(l, l) = Scalar(1);  // placeholder; column below stays zero
    }
    if (l > 0) {
      // L_{<l}^T b = L(l, <l): the placeholder unit pivots force zero entries
      // on non-basis links.
      VectorX<Scalar> rhs = chol.row(l).head(l).transpose();
      VectorX<Scalar> b = chol.topLeftCorner(l, l).template triangularView<Eigen::Lower>().transpose().solve(rhs);
      out.b.row(l).head(l) = b.transpose();
    }
    if (!basis[static_cast<std::size_t>(l)]) chol(l, l) = Scalar(1);
    auto [lo, hi] = detail::lambda_range(out, l);
    if (out.pi(l) < -kSlack || out.pi(l) > Scalar(1) + kSlack || lo < -kSlack || hi > Scalar(1) + kSlack)
      throw InfeasibleError("conditional probability of link " + std::to_string(l) + " can leave [0,1]: range [" +
                            to_string_prec(double(lo)) + ", " + to_string_prec(double(hi)) + "]");
  }
  return out;
}

template <typename Scalar>
bool clf_feasible(const LinkModel<Scalar>& model) {
  try {
    (void)fit_clf(model);
    return true;
  } catch (const InfeasibleError&) {
    return false;
  }
}

/// Draws one symmetric-mode realization into `bits` (resized to m).
template <typename Scalar>
void draw_topology(const ClfCoefficients<Scalar>& c, Rng& rng, std::vector<std::uint8_t>& bits) {
  const int m = static_cast<int>(c.pi.size());
  bits.assign(static_cast<std::size_t>(m), 0);
  VectorX<Scalar> centered(m);
  for (int l = 0; l < m; ++l) {
    Scalar lambda = c.pi(l);
    if (l > 0) lambda += c.b.row(l).head(l).dot(centered.head(l));
    const bool up = Scalar(uniform01(rng)) < lambda;
    bits[static_cast<std::size_t>(l)] = up ? 1 : 0;
    centered(l) = (up ? Scalar(1) : Scalar(0)) - c.pi(l);
  }
}

inline int draw_broadcaster(int n, Rng& rng) {
  return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng));
}

namespace detail {

template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  if (threads <= 1 || count < 2) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const int t = std::min(threads, count);
  // First failure per worker, rethrown for the lowest failing index.
  std::vector<std::pair<int, std::exception_ptr>> errors(static_cast<std::size_t>(t), {count, nullptr});
  for (int w = 0; w < t; ++w)
    pool.emplace_back([&, w] {
      for (int i = w; i < count; i += t) {
        try {
          fn(i);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = {i, std::current_exception()};
          return;
        }
      }
    });
  for (auto& th : pool) th.join();
  const auto first = std::min_element(errors.begin(), errors.end(),
                                      [](const auto& a, const auto& b) { return a.first < b.first; });
  if (first->second) std::rethrow_exception(first->second);
}

inline constexpr std::uint32_t kSampleTag = 0x5a3u;
inline constexpr std::uint32_t kGossipTag = 0x90u;

}  // namespace detail

/// Temporally i.i.d. realizations; sample s uses substream (seed, s), so the
/// sequence does not depend on `threads`.
template <typename Scalar>
std::vector<TopologySample> sample_topologies(const ClfCoefficients<Scalar>& c, int count, std::uint64_t seed,
                                              int threads = 1) {
  std::vector<TopologySample> out(static_cast<std::size_t>(std::max(count, 0)));
  detail::parallel_for(count, threads, [&](int s) {
    Rng rng = substream(seed, static_cast<std::uint64_t>(s), detail::kSampleTag);
    draw_topology(c, rng, out[static_cast<std::size_t>(s)].bits);
  });
  return out;
}

/// Broadcast gossip realizations: one node chosen uniformly per sample.
inline std::vector<TopologySample> sample_gossip(const Supergraph& g, int count, std::uint64_t seed) {
  std::vector<TopologySample> out(static_cast<std::size_t>(std::max(count, 0)));
  for (int s = 0; s < count; ++s) {
    Rng rng = substream(seed, static_cast<std::uint64_t>(s), detail::kGossipTag);
    out[static_cast<std::size_t>(s)].broadcaster = draw_broadcaster(g.num_nodes(), rng);
  }
  return out;
}

/// Unbiased sample mean and covariance (n - 1 normalization) of the link bits.
template <typename Scalar = double>
std::pair<VectorX<Scalar>, MatrixX<Scalar>> empirical_moments(const std::vector<TopologySample>& samples) {
  if (samples.size() < 2) throw InvalidArgument("empirical moments need at least two samples");
  const int m = static_cast<int>(samples.front().bits.size());
  const Scalar count = Scalar(samples.size());
  VectorX<Scalar> mean = VectorX<Scalar>::Zero(m);
  for (const auto& s : samples)
    for (int l = 0; l < m; ++l) mean(l) += Scalar(s.bits[static_cast<std::size_t>(l)]);
  mean /= count;
  MatrixX<Scalar> cov = MatrixX<Scalar>::Zero(m, m);
  VectorX<Scalar> d(m);
  for (const auto& s : samples) {
    for (int l = 0; l < m; ++l) d(l) = Scalar(s.bits[static_cast<std::size_t>(l)]) - mean(l);
    cov.template selfadjointView<Eigen::Lower>().rankUpdate(d);
  }
  cov = cov.template selfadjointView<Eigen::Lower>();
  cov /= (count - Scalar(1));
  return {mean, cov};
}

/// Largest c2 in (0, 1] (to 1e-3) for which the geometric-decay structure
/// with the given theta passes clf_feasible.
template <typename Scalar>
Scalar max_feasible_c2(const LinkModel<Scalar>& model, const Eigen::MatrixXi& kappa, Scalar theta) {
  auto feasible = [&](Scalar c2) { return clf_feasible(correlation_geometric_decay(model, kappa, c2, theta)); };
  const Scalar floor = Scalar(1e-3);
  if (!validate_moments(model).ok || !feasible(floor))
    throw InfeasibleError("no feasible c2 >= 1e-3 for the geometric-decay correlation structure");
  if (feasible(Scalar(1))) return Scalar(1);
  Scalar lo = floor, hi = Scalar(1);
  while (hi - lo > Scalar(1e-3) * Scalar(0.5)) {
    const Scalar mid = Scalar(0.5) * (lo + hi);
    (feasible(mid) ? lo : hi) = mid;
  }
  return lo;
}

template <typename Scalar>
Scalar max_feasible_c2(const LinkModel<Scalar>& model, const Supergraph& g, Scalar theta) {
  return max_feasible_c2(model, link_distances(g, model.idx), theta);
}

}  // namespace pbw
