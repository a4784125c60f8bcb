#include "pbw/simulator.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "pbw/moments.hpp"
#include "pbw/objectives.hpp"

namespace pbw {

namespace {

constexpr std::uint32_t kPathTag = 0x7a1u;
constexpr std::uint32_t kInitTag = 0x1b1u;

struct PathNorms {
  // [weight][k * paths + p]
  std::vector<std::vector<double>> e2, z2;
};

PathNorms run_paths(const std::vector<Eigen::MatrixXd>& weights, const TopologySource& source,
                    const std::function<Eigen::VectorXd(int)>& x0_of, int paths, int horizon, std::uint64_t seed,
                    int threads) {
  const Supergraph& g = source.graph();
  const std::size_t nw = weights.size();
  const std::size_t stride = static_cast<std::size_t>(paths);
  PathNorms out;
  out.e2.assign(nw, std::vector<double>(stride * static_cast<std::size_t>(horizon + 1)));
  out.z2 = out.e2;
  detail::parallel_for(paths, threads, [&](int p) {
    Rng rng = substream(seed, static_cast<std::uint64_t>(p), kPathTag);
    const Eigen::VectorXd x0 = x0_of(p);
    const double avg = x0.mean();
    std::vector<Eigen::VectorXd> xs(nw, x0);
    TopologySample sample;
    auto record = [&](int k) {
      for (std::size_t w = 0; w < nw; ++w) {
        const std::size_t at = static_cast<std::size_t>(k) * stride + static_cast<std::size_t>(p);
        out.e2[w][at] = (xs[w].array() - avg).square().sum();
        out.z2[w][at] = (xs[w].array() - xs[w].mean()).square().sum();
      }
    };
    record(0);
    for (int k = 1; k <= horizon; ++k) {
      source.draw(rng, sample);
      for (std::size_t w = 0; w < nw; ++w) apply_realization(weights[w], g, sample, xs[w]);
      record(k);
    }
  });
  return out;
}

void mean_and_stderr(const double* v, std::size_t n, double& mean, double& se, std::vector<double>& scratch) {
  mean = pairwise_sum(v, n) / double(n);
  if (n < 2) {
    se = 0;
    return;
  }
  scratch.resize(n);
  for (std::size_t i = 0; i < n; ++i) scratch[i] = (v[i] - mean) * (v[i] - mean);
  se = std::sqrt(pairwise_sum(scratch.data(), n) / double(n - 1) / double(n));
}

}  // namespace

double pairwise_sum(const double* v, std::size_t n) {
  if (n <= 8) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

void apply_realization(const Eigen::MatrixXd& w, const Supergraph& g, const TopologySample& sample,
                       Eigen::VectorXd& x) {
  if (sample.is_gossip()) {
    const int k = sample.broadcaster;
    const double xk = x(k);
    for (int l : g.neighbors(k)) x(l) += w(l, k) * (xk - x(l));
    return;
  }
  if (static_cast<int>(sample.bits.size()) != g.num_links())
    throw InvalidArgument("sample length differs from link count");
  const Eigen::VectorXd prev = x;
  for (int l = 0; l < g.num_links(); ++l) {
    if (!sample.bits[static_cast<std::size_t>(l)]) continue;
    const Link& e = g.links()[static_cast<std::size_t>(l)];
    const double d = prev(e.j) - prev(e.i);
    x(e.i) += w(e.i, e.j) * d;
    x(e.j) -= w(e.j, e.i) * d;
  }
}

Trajectory run_consensus(const Eigen::MatrixXd& w, const Supergraph& g, const std::vector<TopologySample>& samples,
                         const Eigen::VectorXd& x0) {
  if (x0.size() != g.num_nodes()) throw InvalidArgument("x0 length differs from node count");
  if (w.rows() != g.num_nodes() || w.cols() != g.num_nodes()) throw InvalidArgument("weight matrix has wrong shape");
  Trajectory t{x0, {x0}};
  t.states.reserve(samples.size() + 1);
  Eigen::VectorXd x = x0;
  for (const auto& s : samples) {
    apply_realization(w, g, s, x);
    t.states.push_back(x);
  }
  return t;
}

TopologySource TopologySource::symmetric(const Supergraph& g, const LinkModel<double>& model) {
  return symmetric(g, fit_clf(model));
}

TopologySource TopologySource::symmetric(const Supergraph& g, ClfCoefficients<double> clf) {
  if (clf.pi.size() != g.num_links()) throw InvalidArgument("sampler size differs from link count");
  TopologySource s(g);
  s.clf_ = std::move(clf);
  return s;
}

TopologySource TopologySource::gossip(const Supergraph& g) { return TopologySource(g); }

void TopologySource::draw(Rng& rng, TopologySample& out) const {
  if (clf_) {
    out.broadcaster = -1;
    draw_topology(*clf_, rng, out.bits);
  } else {
    out.bits.clear();
    out.broadcaster = draw_broadcaster(g_->num_nodes(), rng);
  }
}

std::vector<SimulationReport> monte_carlo_mse(const std::vector<Eigen::MatrixXd>& weights, const TopologySource& source,
                                              const Eigen::VectorXd& x0, const SimulationOptions& opt) {
  if (opt.paths < 1) throw InvalidArgument("paths must be at least 1");
  if (opt.horizon < 0) throw InvalidArgument("horizon must be non-negative");
  const int n = source.graph().num_nodes();
  if (x0.size() != n) throw InvalidArgument("x0 length differs from node count");
  for (const auto& w : weights)
    if (w.rows() != n || w.cols() != n) throw InvalidArgument("weight matrix has wrong shape");

  const PathNorms norms = run_paths(
      weights, source, [&](int) { return x0; }, opt.paths, opt.horizon, opt.seed, opt.threads);
  const std::size_t stride = static_cast<std::size_t>(opt.paths);
  std::vector<SimulationReport> out(weights.size());
  std::vector<double> scratch;
  for (std::size_t w = 0; w < weights.size(); ++w) {
    SimulationReport& r = out[w];
    r.paths = opt.paths;
    r.seed = opt.seed;
    const std::size_t len = static_cast<std::size_t>(opt.horizon + 1);
    r.mse.resize(len);
    r.msdev.resize(len);
    r.stderr_mse.resize(len);
    r.stderr_msdev.resize(len);
    for (std::size_t k = 0; k < len; ++k) {
      mean_and_stderr(norms.e2[w].data() + k * stride, stride, r.mse[k], r.stderr_mse[k], scratch);
      mean_and_stderr(norms.z2[w].data() + k * stride, stride, r.msdev[k], r.stderr_msdev[k], scratch);
    }
    const int burn_in = opt.burn_in.value_or(opt.horizon / 2);
    if (opt.horizon > burn_in && burn_in >= 0) {
      // Gossip does not preserve the average, so its decay is read off MSdev.
      const GammaEta ge = empirical_gamma_eta(source.is_gossip() ? r.msdev : r.mse, burn_in, opt.literal_eta);
      r.gamma_hat = ge.gamma_hat;
      r.eta = ge.eta;
    }
  }
  return out;
}

SimulationReport monte_carlo_mse(const Eigen::MatrixXd& w, const TopologySource& source, const Eigen::VectorXd& x0,
                                 const SimulationOptions& opt) {
  return monte_carlo_mse(std::vector<Eigen::MatrixXd>{w}, source, x0, opt).front();
}

GammaEta empirical_gamma_eta(const std::vector<double>& mse, int burn_in, bool literal) {
  const int horizon = static_cast<int>(mse.size()) - 1;
  if (burn_in < 0 || horizon <= burn_in) throw InvalidArgument("empirical_gamma_eta needs horizon > burn_in >= 0");
  GammaEta out;
  out.window_begin = burn_in;
  // Values at the level of round-off relative to the start count as zero.
  const double floor = mse.front() * 1e-30;
  int last = -1;
  for (int k = 0; k <= horizon; ++k) {
    if (mse[static_cast<std::size_t>(k)] > floor) last = k;
    else break;
  }
  if (last < horizon) out.warning = "error vanished at iteration " + std::to_string(last + 1) + "; window truncated";
  out.window_end = last;
  if (last <= burn_in) {
    out.warning = "error vanished before the estimation window; eta set to 0";
    return out;
  }
  const double ratio = std::sqrt(mse[static_cast<std::size_t>(last)] / mse[static_cast<std::size_t>(burn_in)]);
  out.gamma_hat = std::pow(ratio, 1.0 / double(last - burn_in));
  out.eta = literal ? 1.0 / std::abs(out.gamma_hat) : 1.0 / std::abs(std::log(out.gamma_hat));
  return out;
}

GammaEta empirical_gamma_eta(const SimulationReport& report, int burn_in, bool literal) {
  return empirical_gamma_eta(report.mse, burn_in, literal);
}

Gains gains(const SimulationReport& baseline, const SimulationReport& candidate) {
  auto ratio = [](double num, double den, const char* what) {
    if (!std::isfinite(den) || den == 0.0)
      throw InvalidArgument(std::string("gain undefined: candidate ") + what + " is zero or not finite");
    return num / den;
  };
  return {ratio(baseline.tau, candidate.tau, "tau"), ratio(baseline.eta, candidate.eta, "eta")};
}

RecursionCheck covariance_recursion_check(const Eigen::MatrixXd& w, const Supergraph& g, const LinkModel<double>& model,
                                          const Eigen::MatrixXd& sigma0, int horizon, int paths, std::uint64_t seed,
                                          int threads) {
  const int n = g.num_nodes();
  const int m = g.num_links();
  if (sigma0.rows() != n || sigma0.cols() != n) throw InvalidArgument("sigma0 has wrong shape");
  if (paths < 2) throw InvalidArgument("covariance_recursion_check needs at least two paths");
  if (horizon < 1) throw InvalidArgument("horizon must be at least 1");
  if (model.num_links() != m) throw InvalidArgument("model does not match the supergraph");

  RecursionCheck out;
  const PhiObjective<double> objective(model);
  const PhiValue<double> pv = objective.evaluate(w);
  out.phi = pv.value;
  const Eigen::MatrixXd centered = pv.moments.second_moment - Eigen::MatrixXd::Constant(n, n, 1.0 / n);

  // Exact covariance propagation.
  std::vector<Eigen::MatrixXd> sigma{sigma0};
  out.predicted_trace.push_back(sigma0.trace());
  const Eigen::MatrixXd& wbar = pv.moments.mean;
  for (int k = 0; k < horizon; ++k) {
    const Eigen::MatrixXd& s = sigma.back();
    out.predicted_trace.push_back((centered * s).trace());
    Eigen::MatrixXd next = wbar * s * wbar;
    for (int l = 0; l < m; ++l) {
      const Link& a = g.links()[static_cast<std::size_t>(l)];
      for (int t = 0; t < m; ++t) {
        const double r = model.r_q(l, t);
        if (r == 0.0) continue;
        const Link& b = g.links()[static_cast<std::size_t>(t)];
        const double quad = s(a.i, b.i) - s(a.i, b.j) - s(a.j, b.i) + s(a.j, b.j);
        const double c = r * w(a.i, a.j) * w(b.i, b.j) * quad;
        next(a.i, b.i) += c;
        next(a.i, b.j) -= c;
        next(a.j, b.i) -= c;
        next(a.j, b.j) += c;
      }
    }
    sigma.push_back(std::move(next));
  }

  // Monte Carlo from e(0) = V D^{1/2} z.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (sigma0 + sigma0.transpose()));
  const Eigen::MatrixXd root =
      es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  const TopologySource source = TopologySource::symmetric(g, model);
  auto x0_of = [&](int p) {
    Rng rng = substream(seed, static_cast<std::uint64_t>(p), kInitTag);
    std::normal_distribution<double> normal;
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) z(i) = normal(rng);
    return Eigen::VectorXd(root * z);
  };
  const PathNorms norms = run_paths({w}, source, x0_of, paths, horizon, seed, threads);
  const std::size_t stride = static_cast<std::size_t>(paths);
  const std::vector<double>& e2 = norms.e2.front();
  std::vector<double> scratch, diff(stride);
  out.max_ratio_excess = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= horizon; ++k) {
    double mean, se;
    mean_and_stderr(e2.data() + static_cast<std::size_t>(k) * stride, stride, mean, se, scratch);
    out.mc_trace.push_back(mean);
    out.stderr_trace.push_back(se);
    const double pred = out.predicted_trace[static_cast<std::size_t>(k)];
    const double dev = std::abs(mean - pred);
    if (pred > 0) out.max_relative_deviation = std::max(out.max_relative_deviation, dev / pred);
    if (se > 0) out.max_z = std::max(out.max_z, dev / se);
    if (k > 0) {
      // Per-path ||e(k)||^2 - phi ||e(k-1)||^2 has mean <= 0 under the bound.
      const std::size_t at = static_cast<std::size_t>(k) * stride, prev = at - stride;
      for (std::size_t p = 0; p < stride; ++p) diff[p] = e2[at + p] - out.phi * e2[prev + p];
      double dm, dse;
      mean_and_stderr(diff.data(), stride, dm, dse, scratch);
      if (dse > 0) out.max_ratio_excess = std::max(out.max_ratio_excess, dm / dse);
      else if (dm > 0) out.max_ratio_excess = std::numeric_limits<double>::infinity();
    }
  }
  return out;
}

}  // namespace pbw
