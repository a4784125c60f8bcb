#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pbw/core.hpp"
#include "pbw/graph.hpp"
#include "pbw/link_model.hpp"
#include "pbw/sampling.hpp"

namespace pbw {

struct Trajectory {
  Eigen::VectorXd x0;
  std::vector<Eigen::VectorXd> states;  ///< x(0), ..., x(K)

  double initial_average() const { return x0.mean(); }
  /// e(k) = x(k) - x_avg 1, x_avg the initial average.
  Eigen::VectorXd error(std::size_t k) const { return states[k].array() - initial_average(); }
  /// zeta(k) = (I - J) x(k).
  Eigen::VectorXd deviation(std::size_t k) const { return states[k].array() - states[k].mean(); }
};

/// x <- W(k) x for one realization, touching only the active links.
void apply_realization(const Eigen::MatrixXd& w, const Supergraph& g, const TopologySample& sample,
                       Eigen::VectorXd& x);

/// Runs x(k+1) = W(k) x(k) with W(k) built from samples[k].
Trajectory run_consensus(const Eigen::MatrixXd& w, const Supergraph& g, const std::vector<TopologySample>& samples,
                         const Eigen::VectorXd& x0);

/// Where per-iteration topologies come from: the CLF sampler (symmetric
/// links) or broadcast gossip.
class TopologySource {
 public:
  static TopologySource symmetric(const Supergraph& g, const LinkModel<double>& model);
  static TopologySource symmetric(const Supergraph& g, ClfCoefficients<double> clf);
  static TopologySource gossip(const Supergraph& g);

  const Supergraph& graph() const { return *g_; }
  bool is_gossip() const { return !clf_.has_value(); }
  void draw(Rng& rng, TopologySample& out) const;

 private:
  explicit TopologySource(const Supergraph& g) : g_(&g) {}
  const Supergraph* g_;
  std::optional<ClfCoefficients<double>> clf_;
};

struct SimulationReport {
  std::vector<double> mse;           ///< mean of ||e(k)||^2, k = 0..horizon
  std::vector<double> msdev;         ///< mean of ||zeta(k)||^2
  std::vector<double> stderr_mse;
  std::vector<double> stderr_msdev;
  int paths = 0;
  double gamma_hat = std::numeric_limits<double>::quiet_NaN();
  double eta = std::numeric_limits<double>::quiet_NaN();
  double tau = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;

  int horizon() const { return static_cast<int>(mse.size()) - 1; }
};

struct SimulationOptions {
  int paths = 100;
  int horizon = 200;
  std::uint64_t seed = 0;
  int threads = 1;
  std::optional<int> burn_in;  ///< defaults to horizon / 2
  bool literal_eta = false;
};

/// Monte Carlo MSE and MSdev for several weight matrices driven by the same
/// topology draws: path p uses substream (seed, p) for every matrix, so
/// compared rules see identical link realizations. Results do not depend on
/// the thread count.
std::vector<SimulationReport> monte_carlo_mse(const std::vector<Eigen::MatrixXd>& weights, const TopologySource& source,
                                              const Eigen::VectorXd& x0, const SimulationOptions& opt);

SimulationReport monte_carlo_mse(const Eigen::MatrixXd& w, const TopologySource& source, const Eigen::VectorXd& x0,
                                 const SimulationOptions& opt);

struct GammaEta {
  double gamma_hat = 0;
  double eta = 0;
  int window_begin = 0;
  int window_end = 0;  ///< last iteration used
  std::optional<std::string> warning;
};

/// gamma_hat is the geometric mean of the per-step ratios of the RMS error
/// over [burn_in, horizon] and eta = 1 / |ln gamma_hat| (1 / gamma_hat when
/// `literal`). Errors that vanish truncate the window at the last nonzero
/// value; an empty window warns and returns gamma_hat = eta = 0.
GammaEta empirical_gamma_eta(const std::vector<double>& mse, int burn_in, bool literal = false);
GammaEta empirical_gamma_eta(const SimulationReport& report, int burn_in, bool literal = false);

struct Gains {
  double ratio_tau;  ///< tau_baseline / tau_candidate
  double ratio_eta;  ///< eta_baseline / eta_candidate
};

Gains gains(const SimulationReport& baseline, const SimulationReport& candidate);

struct RecursionCheck {
  std::vector<double> mc_trace;         ///< Monte Carlo tr Sigma(k)
  std::vector<double> stderr_trace;
  std::vector<double> predicted_trace;  ///< tr((E[W^2] - J) Sigma(k-1)) with Sigma from the exact recursion
  double max_relative_deviation = 0;
  double max_z = 0;                     ///< largest |mc - predicted| in standard errors
  double max_ratio_excess = 0;          ///< largest (ratio - phi) / stderr(ratio), negative when the bound holds
  double phi = 0;
};

/// Propagates Sigma(k) = Cov e(k) exactly through
///   Sigma(k+1) = Wbar Sigma Wbar + sum_{l,s} R_ls W_l W_s (d_l^T Sigma d_s) d_l d_s^T,
/// d_l = e_i - e_j for link l = {i, j}, and compares the trace of the
/// second-moment recursion with Monte Carlo paths started from e(0) ~ N(0, sigma0).
RecursionCheck covariance_recursion_check(const Eigen::MatrixXd& w, const Supergraph& g, const LinkModel<double>& model,
                                          const Eigen::MatrixXd& sigma0, int horizon, int paths, std::uint64_t seed,
                                          int threads = 1);

/// Sum in fixed pairwise order.
double pairwise_sum(const double* v, std::size_t n);

}  // namespace pbw
