#pragma once

#include <cmath>
#include <functional>
#include <iostream>
#include <limits>

#include "pbw/core.hpp"
#include "pbw/link_model.hpp"
#include "pbw/moments.hpp"

namespace pbw {

template <typename Scalar>
struct Eigenpair {
  Scalar value;
  VectorX<Scalar> vector;
  Scalar gap;  ///< value minus the second-largest eigenvalue
};

/// Maximal eigenpair of a symmetric matrix (symmetrized first). The vector is
/// signed so that its first non-negligible component is positive.
template <typename Derived>
Eigenpair<typename Derived::Scalar> max_eigenpair(const Eigen::MatrixBase<Derived>& a) {
  using S = typename Derived::Scalar;
  if (!a.allFinite()) throw NumericalError("max_eigenpair: matrix has non-finite entries");
  const Eigen::Index n = a.rows();
  if (n == 0 || n != a.cols()) throw InvalidArgument("max_eigenpair: needs a non-empty square matrix");
  const MatrixX<S> sym = S(0.5) * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixX<S>> es(sym);
  if (es.info() != Eigen::Success) throw NumericalError("max_eigenpair: eigensolver did not converge");
  Eigenpair<S> out{es.eigenvalues()(n - 1), es.eigenvectors().col(n - 1),
                   n > 1 ? es.eigenvalues()(n - 1) - es.eigenvalues()(n - 2) : std::numeric_limits<S>::infinity()};
  const S thresh = S(1e-12) * out.vector.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(out.vector(i)) > thresh) {
      if (out.vector(i) < S(0)) out.vector = -out.vector;
      break;
    }
  }
  return out;
}

/// phi(W) = lambda_max(E[W^2] - J) together with the moments behind it.
template <typename Scalar>
struct PhiValue {
  Scalar value;
  Eigenpair<Scalar> eig;
  MomentSet<Scalar> moments;
};

/// Evaluates phi repeatedly for one link model.
template <typename Scalar>
class PhiObjective {
 public:
  explicit PhiObjective(LinkModel<Scalar> model)
      : model_(std::move(model)), op_(model_), p_(model_.p_matrix()) {}

  template <typename Derived>
  PhiValue<Scalar> evaluate(const Eigen::MatrixBase<Derived>& w) const {
    const int n = model_.num_nodes();
    MomentSet<Scalar> m;
    m.mean = mean_weight_matrix(w, p_);
    m.covariance = op_(w);
    m.second_moment.noalias() = m.mean * m.mean;
    m.second_moment += m.covariance;
    const MatrixX<Scalar> centered = m.second_moment - MatrixX<Scalar>::Constant(n, n, Scalar(1) / Scalar(n));
    Eigenpair<Scalar> eig = max_eigenpair(centered);
    if (eig.value < Scalar(-1e-10))
      std::cerr << "warning: phi evaluated negative (" << double(eig.value) << "); E[W^2]-J should be PSD\n";
    return {eig.value, std::move(eig), std::move(m)};
  }

  template <typename Derived>
  Scalar operator()(const Eigen::MatrixBase<Derived>& w) const {
    return evaluate(w).value;
  }

  const LinkModel<Scalar>& model() const { return model_; }
  const MatrixX<Scalar>& p_matrix() const { return p_; }

 private:
  LinkModel<Scalar> model_;
  CovarianceOperator<Scalar> op_;
  MatrixX<Scalar> p_;
};

template <typename Scalar, typename Derived>
Scalar phi(const Eigen::MatrixBase<Derived>& w, const LinkModel<Scalar>& model) {
  return PhiObjective<Scalar>(model)(w);
}

/// psi = lambda_max of a deviation second moment E[W^T (I - J) W].
template <typename Derived>
typename Derived::Scalar psi(const Eigen::MatrixBase<Derived>& second_dev_moment) {
  return max_eigenpair(second_dev_moment).value;
}

/// psi for broadcast gossip with weights w.
template <typename Derived>
typename Derived::Scalar psi_gossip(const Eigen::MatrixBase<Derived>& w, const Supergraph& g) {
  return psi(gossip_moments(w, g).deviation());
}

template <typename Scalar>
struct CompleteGraphOptimum {
  Scalar weight;
  Scalar rate;
};

/// Closed-form optimum for the complete graph with uniform probability p and
/// correlation coefficient beta.
template <typename Scalar = double>
CompleteGraphOptimum<Scalar> complete_graph_optimum(int n, Scalar p, Scalar beta) {
  (void)complete_uniform_model<Scalar>(n, p, beta);  // feasibility check
  const Scalar nn = Scalar(n);
  const Scalar w = Scalar(1) / (nn * p + (Scalar(1) - p) * (Scalar(2) + beta * (nn - Scalar(2))));
  const Scalar rate =
      Scalar(1) - Scalar(1) / (Scalar(1) + (Scalar(1) - p) / p * (Scalar(2) / nn * (Scalar(1) - beta) + beta));
  return {w, rate};
}

/// Time constant 2 / |ln phi| of the error norm for an MSE rate phi in (0, 1).
template <typename Scalar>
Scalar tau(Scalar phi_value) {
  if (!(phi_value > Scalar(0) && phi_value < Scalar(1)))
    throw InvalidArgument("tau needs a rate in (0, 1), got " + to_string_prec(double(phi_value)));
  return Scalar(2) / std::abs(std::log(phi_value));
}

/// f((x + y) / 2) <= (f(x) + f(y)) / 2 + slack.
template <typename Scalar>
bool convexity_midpoint_check(const MatrixX<Scalar>& x, const MatrixX<Scalar>& y,
                              const std::function<Scalar(const MatrixX<Scalar>&)>& objective,
                              Scalar slack = Scalar(1e-12)) {
  const MatrixX<Scalar> mid = Scalar(0.5) * (x + y);
  return objective(mid) <= Scalar(0.5) * (objective(x) + objective(y)) + slack;
}

}  // namespace pbw
