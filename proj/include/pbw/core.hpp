#pragma once

#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace pbw {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Raised when a precondition on user-supplied data does not hold.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Random graph generation ran out of retries.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A link model cannot be realized (sampler or constraint system).
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure inside an iterative routine (NaN, divergence).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class WeightMode { kSymmetric, kAsymmetric };

using Rng = std::mt19937_64;

/// Independent generator for stream `index` under `master_seed`. Streams do
/// not depend on the order in which they are requested.
inline Rng substream(std::uint64_t master_seed, std::uint64_t index, std::uint32_t tag = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), tag};
  return Rng(seq);
}

/// Uniform double in [0, 1) built from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Symmetric rank-revealing check helper: smallest eigenvalue of a symmetric matrix.
template <typename Derived>
typename Derived::Scalar min_eigenvalue(const Eigen::MatrixBase<Derived>& a) {
  using S = typename Derived::Scalar;
  if (a.rows() == 0) return S(0);
  Eigen::SelfAdjointEigenSolver<MatrixX<S>> es(a.eval(), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline std::string to_string_prec(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace pbw
