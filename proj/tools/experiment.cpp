#include "experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <random>
#include <set>

#include <CLI11.hpp>

#include "pbw/io.hpp"
#include "pbw/objectives.hpp"
#include "validation.hpp"

namespace pbw::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kInitialStateTag = 0x3c7u;
constexpr std::uint32_t kPathSeedTag = 0x3c8u;

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw InvalidArgument("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument(where + "." + key + " has the wrong type");
  }
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidArgument(msg);
}

bool is_known_baseline(const std::string& b, bool gossip) {
  return gossip ? (b == "equal_gossip" || b == "fixed_g") : (b == "mw" || b == "sgbw");
}

std::string weights_file(const std::string& method) { return "weights_" + method + ".json"; }
std::string csv_file(const std::string& method) { return "mse_" + method + ".csv"; }

OptimizerConfig optimizer_config(const ExperimentConfig& cfg) {
  OptimizerConfig oc;
  oc.max_iters = cfg.optimizer.iters;
  oc.mode = cfg.optimizer.mode;
  return oc;
}

void design_symmetric(const ExperimentConfig& cfg, DesignedInstance& d) {
  const Supergraph& g = d.instance.graph;
  const PhiObjective<double> obj(*d.instance.model);
  const OptimizerConfig oc = optimizer_config(cfg);
  const auto& scales = cfg.optimizer.step_scales;

  const Eigen::MatrixXd mw = metropolis_weights(g);
  auto [sg, sg_scale] = best_over_step_scales(scales, oc, [&](const OptimizerConfig& c) { return supergraph_weights(g, c); });
  const double phi_mw = obj(mw), phi_sg = obj(sg.best_weights);
  const Eigen::MatrixXd& start = phi_mw <= phi_sg ? mw : sg.best_weights;
  auto [pbw, pbw_scale] =
      best_over_step_scales(scales, oc, [&](const OptimizerConfig& c) { return optimize_phi(start, obj, c); });

  d.weights["pbw"] = pbw.best_weights;
  d.objective["pbw"] = pbw.best_objective;
  d.step_scale["pbw"] = pbw_scale;
  d.weights["mw"] = mw;
  d.objective["mw"] = phi_mw;
  d.weights["sgbw"] = sg.best_weights;
  d.objective["sgbw"] = phi_sg;
  d.step_scale["sgbw"] = sg_scale;
}

void design_gossip(const ExperimentConfig& cfg, DesignedInstance& d) {
  const Supergraph& g = d.instance.graph;
  const OptimizerConfig oc = optimizer_config(cfg);
  const bool constrained = cfg.optimizer.mode == OptimizerMode::kPsiConstrained;
  const auto eq = optimal_equal_gossip_weight(g);
  const Eigen::MatrixXd eq_w = uniform_weights(g, eq.weight);
  auto [pbw, scale] = best_over_step_scales(cfg.optimizer.step_scales, oc, [&](const OptimizerConfig& c) {
    return optimize_psi(eq_w, g, c, constrained);
  });
  d.weights["pbw"] = pbw.best_weights;
  d.objective["pbw"] = pbw.best_objective;
  d.step_scale["pbw"] = scale;
  d.weights["equal_gossip"] = eq_w;
  d.objective["equal_gossip"] = eq.rate;
  d.equal_gossip_weight = eq.weight;
  const Eigen::MatrixXd fixed = uniform_weights(g, cfg.fixed_g);
  d.weights["fixed_g"] = fixed;
  d.objective["fixed_g"] = psi_gossip(fixed, g);
}

double tau_or_nan(double rate) { return rate > 0 && rate < 1 ? tau(rate) : std::numeric_limits<double>::quiet_NaN(); }

json instance_design_summary(const DesignedInstance& d) {
  json obj = json::object(), steps = json::object();
  for (const auto& m : d.methods) obj[m] = number(d.objective.at(m));
  for (const auto& [m, s] : d.step_scale) steps[m] = s;
  json out{{"index", d.instance.index},
           {"seed", d.instance.seed},
           {"n", d.instance.graph.num_nodes()},
           {"links", d.instance.graph.num_links()},
           {"objective", std::move(obj)},
           {"step_scale", std::move(steps)}};
  if (d.instance.c2) out["c2"] = *d.instance.c2;
  if (d.equal_gossip_weight) out["equal_gossip_weight"] = *d.equal_gossip_weight;
  double best_baseline = std::numeric_limits<double>::infinity();
  for (const auto& m : d.methods)
    if (m != "pbw" && m != "fixed_g") best_baseline = std::min(best_baseline, d.objective.at(m));
  if (std::isfinite(best_baseline)) out["dominates_baselines"] = d.objective.at("pbw") <= best_baseline + 1e-9;
  return out;
}

/// First iteration at which the curve drops to `fraction` of its initial value.
json first_below(const std::vector<double>& curve, double fraction) {
  for (std::size_t k = 0; k < curve.size(); ++k)
    if (curve[k] <= fraction * curve.front()) return static_cast<int>(k);
  return nullptr;
}

json section_or_empty(const json& j, const char* key) { return j.contains(key) ? j.at(key) : json::object(); }

}  // namespace

std::string instance_dir_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "instance_%03d", index);
  return buf;
}

json aggregate(const std::vector<double>& values) {
  std::vector<double> v;
  for (double x : values)
    if (std::isfinite(x)) v.push_back(x);
  if (v.empty()) return {{"mean", nullptr}, {"max", nullptr}, {"min", nullptr}, {"count", 0}};
  return {{"mean", pairwise_sum(v.data(), v.size()) / double(v.size())},
          {"max", *std::max_element(v.begin(), v.end())},
          {"min", *std::min_element(v.begin(), v.end())},
          {"count", v.size()}};
}

ExperimentConfig config_from_json(const json& j) {
  check_keys(j, {"schema_version", "graph", "link", "optimizer", "simulation", "baselines", "fixed_g"}, "config");
  if (j.contains("schema_version"))
    require(j.at("schema_version") == io::kSchemaVersion, "unsupported config schema_version");
  ExperimentConfig c;

  const json g = section_or_empty(j, "graph");
  check_keys(g, {"kind", "n", "degree_fraction", "seed", "instances"}, "graph");
  c.graph.kind = get_or(g, "kind", c.graph.kind, "graph");
  c.graph.n = get_or(g, "n", c.graph.n, "graph");
  c.graph.degree_fraction = get_or(g, "degree_fraction", c.graph.degree_fraction, "graph");
  c.graph.seed = get_or(g, "seed", c.graph.seed, "graph");
  c.graph.instances = get_or(g, "instances", c.graph.instances, "graph");
  require(c.graph.kind == "geometric" || c.graph.kind == "complete", "graph.kind must be geometric or complete");
  require(c.graph.n >= 2, "graph.n must be at least 2");
  require(c.graph.degree_fraction > 0 && c.graph.degree_fraction < 1, "graph.degree_fraction must lie in (0, 1)");
  require(c.graph.instances >= 1, "graph.instances must be at least 1");

  const json l = section_or_empty(j, "link");
  check_keys(l, {"kind", "k_coef", "correlation", "p", "beta"}, "link");
  c.link.kind = get_or(l, "kind", c.link.kind, "link");
  c.link.k_coef = get_or(l, "k_coef", c.link.k_coef, "link");
  c.link.p = get_or(l, "p", c.link.p, "link");
  c.link.beta = get_or(l, "beta", c.link.beta, "link");
  require(c.link.kind == "distance" || c.link.kind == "uniform" || c.link.kind == "static" || c.link.kind == "gossip",
          "link.kind must be distance, uniform, static or gossip");
  require(c.link.kind != "distance" || c.graph.kind == "geometric", "link.kind distance needs a geometric graph");
  require(c.link.kind != "uniform" || c.graph.kind == "complete", "link.kind uniform needs a complete graph");
  require(c.link.k_coef > 0 && c.link.k_coef <= 1, "link.k_coef must lie in (0, 1]");
  require(c.link.p > 0 && c.link.p <= 1, "link.p must lie in (0, 1]");
  if (l.contains("correlation")) {
    const json& cr = l.at("correlation");
    check_keys(cr, {"type", "c1", "theta", "c2"}, "link.correlation");
    c.link.correlation.type = get_or(cr, "type", c.link.correlation.type, "link.correlation");
    c.link.correlation.c1 = get_or(cr, "c1", c.link.correlation.c1, "link.correlation");
    c.link.correlation.theta = get_or(cr, "theta", c.link.correlation.theta, "link.correlation");
    if (cr.contains("c2") && !(cr.at("c2").is_string() && cr.at("c2") == "auto"))
      c.link.correlation.c2 = get_or(cr, "c2", 0.0, "link.correlation");
  }
  const auto& cr = c.link.correlation;
  require(cr.type == "none" || cr.type == "uniform" || cr.type == "geometric",
          "link.correlation.type must be none, uniform or geometric");
  require(cr.type == "none" || c.link.kind == "distance", "link.correlation applies to link.kind distance only");
  require(cr.c1 >= 0 && cr.c1 <= 1, "link.correlation.c1 must lie in [0, 1]");
  require(cr.theta > 0 && cr.theta <= 1, "link.correlation.theta must lie in (0, 1]");
  require(!cr.c2 || (*cr.c2 > 0 && *cr.c2 <= 1), "link.correlation.c2 must lie in (0, 1] or be \"auto\"");

  const json o = section_or_empty(j, "optimizer");
  check_keys(o, {"mode", "iters", "step_scales"}, "optimizer");
  c.optimizer.mode = c.is_gossip() ? OptimizerMode::kPsiGossip : OptimizerMode::kPhiCorrelated;
  if (o.contains("mode")) c.optimizer.mode = io::mode_from_name(get_or(o, "mode", std::string(), "optimizer"));
  c.optimizer.iters = get_or(o, "iters", c.optimizer.iters, "optimizer");
  if (c.is_gossip()) c.optimizer.step_scales = {8.0, 32.0, 128.0, 512.0};
  c.optimizer.step_scales = get_or(o, "step_scales", c.optimizer.step_scales, "optimizer");
  const bool psi_mode =
      c.optimizer.mode == OptimizerMode::kPsiGossip || c.optimizer.mode == OptimizerMode::kPsiConstrained;
  require(psi_mode == c.is_gossip(), "optimizer.mode must be psi_* exactly when link.kind is gossip");
  require(c.optimizer.iters >= 1, "optimizer.iters must be at least 1");
  require(!c.optimizer.step_scales.empty(), "optimizer.step_scales must not be empty");
  for (double s : c.optimizer.step_scales) require(s > 0 && std::isfinite(s), "optimizer.step_scales must be positive");

  const json s = section_or_empty(j, "simulation");
  check_keys(s, {"paths", "horizon", "seed", "burn_in"}, "simulation");
  c.simulation.paths = get_or(s, "paths", c.simulation.paths, "simulation");
  c.simulation.horizon = get_or(s, "horizon", c.simulation.horizon, "simulation");
  c.simulation.seed = get_or(s, "seed", c.simulation.seed, "simulation");
  if (s.contains("burn_in")) c.simulation.burn_in = get_or(s, "burn_in", 0, "simulation");
  require(c.simulation.paths >= 1, "simulation.paths must be at least 1");
  require(c.simulation.horizon >= 0, "simulation.horizon must be non-negative");
  require(!c.simulation.burn_in || (*c.simulation.burn_in >= 0 && *c.simulation.burn_in < c.simulation.horizon),
          "simulation.burn_in must lie in [0, horizon)");

  c.baselines = c.is_gossip() ? std::vector<std::string>{"equal_gossip", "fixed_g"}
                              : std::vector<std::string>{"mw", "sgbw"};
  if (j.contains("baselines")) c.baselines = get_or(j, "baselines", c.baselines, "config");
  std::set<std::string> seen;
  for (const auto& b : c.baselines) {
    require(is_known_baseline(b, c.is_gossip()), "unknown baseline '" + b + "' for this link kind");
    require(seen.insert(b).second, "baseline '" + b + "' listed twice");
  }
  c.fixed_g = get_or(j, "fixed_g", c.fixed_g, "config");
  require(std::isfinite(c.fixed_g), "fixed_g must be finite");
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json corr{{"type", c.link.correlation.type}, {"c1", c.link.correlation.c1}, {"theta", c.link.correlation.theta}};
  corr["c2"] = c.link.correlation.c2 ? json(*c.link.correlation.c2) : json("auto");
  json sim{{"paths", c.simulation.paths}, {"horizon", c.simulation.horizon}, {"seed", c.simulation.seed}};
  if (c.simulation.burn_in) sim["burn_in"] = *c.simulation.burn_in;
  return {{"schema_version", io::kSchemaVersion},
          {"graph",
           {{"kind", c.graph.kind},
            {"n", c.graph.n},
            {"degree_fraction", c.graph.degree_fraction},
            {"seed", c.graph.seed},
            {"instances", c.graph.instances}}},
          {"link", {{"kind", c.link.kind}, {"k_coef", c.link.k_coef}, {"p", c.link.p}, {"beta", c.link.beta}, {"correlation", corr}}},
          {"optimizer",
           {{"mode", io::mode_name(c.optimizer.mode)}, {"iters", c.optimizer.iters}, {"step_scales", c.optimizer.step_scales}}},
          {"simulation", sim},
          {"baselines", c.baselines},
          {"fixed_g", c.fixed_g}};
}

ExperimentConfig load_config(const fs::path& path) { return config_from_json(io::read_json(path)); }

void apply_overrides(ExperimentConfig& cfg, const RunOptions& opt) {
  if (opt.threads < 1) throw InvalidArgument("--threads must be at least 1");
  if (opt.seed_override) {
    cfg.graph.seed = *opt.seed_override;
    cfg.simulation.seed = *opt.seed_override;
  }
}

Instance build_instance(const ExperimentConfig& cfg, int index) {
  Instance inst;
  inst.index = index;
  inst.seed = cfg.graph.seed + static_cast<std::uint64_t>(index);
  inst.graph = cfg.graph.kind == "complete" ? complete_graph(cfg.graph.n)
                                            : generate_geometric(cfg.graph.n, cfg.graph.degree_fraction, inst.seed);
  if (cfg.link.kind == "gossip") return inst;
  if (cfg.link.kind == "static") {
    inst.model = deterministic_model(inst.graph);
  } else if (cfg.link.kind == "uniform") {
    inst.model = complete_uniform_model(cfg.graph.n, cfg.link.p, cfg.link.beta);
  } else {
    LinkModel<double> base = probabilities_from_distances(inst.graph, cfg.link.k_coef);
    const auto& cr = cfg.link.correlation;
    if (cr.type == "uniform") {
      inst.model = correlation_uniform_fraction(std::move(base), cr.c1);
    } else if (cr.type == "geometric") {
      const Eigen::MatrixXi kappa = link_distances(inst.graph, base.idx);
      inst.c2 = cr.c2 ? *cr.c2 : max_feasible_c2(base, kappa, cr.theta);
      inst.model = correlation_geometric_decay(std::move(base), kappa, *inst.c2, cr.theta);
    } else {
      inst.model = std::move(base);
    }
  }
  (void)fit_clf(*inst.model);  // throws InfeasibleError naming the offending link
  return inst;
}

DesignedInstance design_instance(const ExperimentConfig& cfg, int index) {
  DesignedInstance d;
  d.instance = build_instance(cfg, index);
  if (!is_connected(d.instance.graph)) throw InvalidArgument("supergraph of instance " + std::to_string(index) + " is disconnected");
  if (cfg.is_gossip())
    design_gossip(cfg, d);
  else
    design_symmetric(cfg, d);
  d.methods.push_back("pbw");
  for (const auto& b : cfg.baselines) d.methods.push_back(b);
  // Drop the helpers that were only needed as starting points.
  for (auto it = d.weights.begin(); it != d.weights.end();) {
    if (std::find(d.methods.begin(), d.methods.end(), it->first) == d.methods.end()) {
      d.objective.erase(it->first);
      d.step_scale.erase(it->first);
      it = d.weights.erase(it);
    } else {
      ++it;
    }
  }
  return d;
}

SimulatedInstance simulate_instance(const ExperimentConfig& cfg, const DesignedInstance& d, int threads) {
  const Supergraph& g = d.instance.graph;
  const TopologySource source =
      cfg.is_gossip() ? TopologySource::gossip(g) : TopologySource::symmetric(g, *d.instance.model);

  Rng init = substream(cfg.simulation.seed, static_cast<std::uint64_t>(d.instance.index), kInitialStateTag);
  std::normal_distribution<double> normal;
  Eigen::VectorXd x0(g.num_nodes());
  for (int i = 0; i < g.num_nodes(); ++i) x0(i) = normal(init);

  SimulationOptions opt;
  opt.paths = cfg.simulation.paths;
  opt.horizon = cfg.simulation.horizon;
  opt.seed = substream(cfg.simulation.seed, static_cast<std::uint64_t>(d.instance.index), kPathSeedTag)();
  opt.threads = threads;
  opt.burn_in = cfg.simulation.burn_in;

  std::vector<Eigen::MatrixXd> ws;
  for (const auto& m : d.methods) ws.push_back(d.weights.at(m));
  std::vector<SimulationReport> reports = monte_carlo_mse(ws, source, x0, opt);

  SimulatedInstance out;
  for (std::size_t i = 0; i < d.methods.size(); ++i) {
    reports[i].tau = tau_or_nan(d.objective.at(d.methods[i]));
    out.reports[d.methods[i]] = std::move(reports[i]);
  }
  out.gains = json::object();
  auto ratio = [&](const std::string& name, const std::string& base, bool use_tau) {
    if (!out.reports.count(base)) return;
    const SimulationReport& b = out.reports.at(base);
    const SimulationReport& c = out.reports.at("pbw");
    const double num = use_tau ? b.tau : b.eta, den = use_tau ? c.tau : c.eta;
    if (std::isfinite(num) && std::isfinite(den) && den > 0) {
      out.gains[name] = num / den;
    } else {
      out.gains[name] = nullptr;
      out.warnings.push_back(name + " undefined (" + base + " " + io::format_double(num) + ", pbw " +
                             io::format_double(den) + ")");
    }
  };
  if (cfg.is_gossip()) {
    ratio("gamma_eq_tau", "equal_gossip", true);
    ratio("gamma_eq_eta", "equal_gossip", false);
    ratio("gamma_fixed_tau", "fixed_g", true);
    ratio("gamma_fixed_eta", "fixed_g", false);
  } else {
    ratio("gamma_s_tau", "sgbw", true);
    ratio("gamma_s_eta", "sgbw", false);
    ratio("gamma_m_tau", "mw", true);
    ratio("gamma_m_eta", "mw", false);
  }
  return out;
}

json cmd_design(const ExperimentConfig& cfg, const fs::path& out, const RunOptions& opt) {
  std::vector<DesignedInstance> designed(static_cast<std::size_t>(cfg.graph.instances));
  detail::parallel_for(cfg.graph.instances, opt.threads,
                       [&](int i) { designed[static_cast<std::size_t>(i)] = design_instance(cfg, i); });

  json instances = json::array();
  std::map<std::string, std::vector<double>> per_method;
  for (const auto& d : designed) {
    instances.push_back(instance_design_summary(d));
    for (const auto& m : d.methods) per_method[m].push_back(d.objective.at(m));
  }
  json agg = json::object();
  for (const auto& [m, v] : per_method) agg[m] = aggregate(v);
  const json summary{{"schema_version", io::kSchemaVersion},
                     {"command", "design"},
                     {"objective_name", cfg.is_gossip() ? "psi" : "phi"},
                     {"methods", designed.front().methods},
                     {"config", config_to_json(cfg)},
                     {"instances", std::move(instances)},
                     {"aggregate", {{"objective", std::move(agg)}}}};

  fs::create_directories(out);
  for (const auto& d : designed) {
    const fs::path dir = out / instance_dir_name(d.instance.index);
    fs::create_directories(dir);
    io::atomic_write(dir / "graph.json", io::graph_to_json(d.instance.graph).dump(1) + "\n");
    if (d.instance.model) io::atomic_write(dir / "model.json", io::model_to_json(*d.instance.model).dump() + "\n");
    for (const auto& m : d.methods) {
      json wj{{"schema_version", io::kSchemaVersion},
              {"method", m},
              {"objective_name", cfg.is_gossip() ? "psi" : "phi"},
              {"objective", number(d.objective.at(m))},
              {"weights", io::matrix_to_json(d.weights.at(m))}};
      if (d.step_scale.count(m)) wj["step_scale"] = d.step_scale.at(m);
      io::atomic_write(dir / weights_file(m), wj.dump() + "\n");
    }
  }
  io::atomic_write(out / "design.json", summary.dump(2) + "\n");
  return summary;
}

json cmd_simulate(const ExperimentConfig& cfg, const fs::path& out, const RunOptions& opt) {
  if (!fs::exists(out / "design.json")) throw InvalidArgument("no design.json in " + out.string() + "; run design first");
  const json design = io::read_json(out / "design.json");
  const json& dcfg = design.at("config");
  const json ccfg = config_to_json(cfg);
  for (const char* key : {"graph", "link", "optimizer", "baselines"})
    if (dcfg.at(key) != ccfg.at(key))
      throw InvalidArgument(std::string("artifacts were designed with a different ") + key + " configuration");

  const auto methods = design.at("methods").get<std::vector<std::string>>();
  std::vector<DesignedInstance> designed(static_cast<std::size_t>(cfg.graph.instances));
  for (int i = 0; i < cfg.graph.instances; ++i) {
    const fs::path dir = out / instance_dir_name(i);
    DesignedInstance& d = designed[static_cast<std::size_t>(i)];
    d.instance.index = i;
    d.instance.graph = io::graph_from_json(io::read_json(dir / "graph.json"));
    if (!cfg.is_gossip()) d.instance.model = io::model_from_json(io::read_json(dir / "model.json"), d.instance.graph);
    d.methods = methods;
    for (const auto& m : methods) {
      const json wj = io::read_json(dir / weights_file(m));
      d.weights[m] = io::matrix_from_json(wj.at("weights"));
      d.objective[m] = wj.at("objective").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                    : wj.at("objective").get<double>();
      const int n = d.instance.graph.num_nodes();
      if (d.weights[m].rows() != n || d.weights[m].cols() != n)
        throw InvalidArgument("weights for " + m + " in " + dir.string() + " do not match the graph");
    }
  }

  std::vector<SimulatedInstance> sims;
  for (const auto& d : designed) sims.push_back(simulate_instance(cfg, d, opt.threads));

  json instances = json::array();
  std::map<std::string, std::vector<double>> taus, etas, gammas;
  std::map<std::string, std::vector<double>> gain_values;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    json per = json::object();
    for (const auto& m : methods) {
      const SimulationReport& r = sims[i].reports.at(m);
      per[m] = {{"objective", number(designed[i].objective.at(m))},
                {"tau", number(r.tau)},
                {"eta", number(r.eta)},
                {"gamma_hat", number(r.gamma_hat)},
                {"first_k_below_10pct", first_below(cfg.is_gossip() ? r.msdev : r.mse, 0.1)}};
      taus[m].push_back(r.tau);
      etas[m].push_back(r.eta);
      gammas[m].push_back(r.gamma_hat);
    }
    for (auto it = sims[i].gains.begin(); it != sims[i].gains.end(); ++it)
      gain_values[it.key()].push_back(it->is_null() ? std::numeric_limits<double>::quiet_NaN() : it->get<double>());
    instances.push_back({{"index", static_cast<int>(i)},
                         {"methods", std::move(per)},
                         {"gains", sims[i].gains},
                         {"warnings", sims[i].warnings}});
  }
  auto agg_map = [](const std::map<std::string, std::vector<double>>& m) {
    json j = json::object();
    for (const auto& [k, v] : m) j[k] = aggregate(v);
    return j;
  };
  const json summary{{"schema_version", io::kSchemaVersion},
                     {"command", "simulate"},
                     {"methods", methods},
                     {"config", ccfg},
                     {"csv_columns", {"k", "mse", "msdev", "stderr_mse", "stderr_msdev"}},
                     {"instances", std::move(instances)},
                     {"aggregate",
                      {{"tau", agg_map(taus)}, {"eta", agg_map(etas)}, {"gamma_hat", agg_map(gammas)}, {"gains", agg_map(gain_values)}}}};

  for (std::size_t i = 0; i < sims.size(); ++i) {
    const fs::path dir = out / instance_dir_name(static_cast<int>(i));
    for (const auto& m : methods) io::atomic_write(dir / csv_file(m), io::report_csv(sims[i].reports.at(m)));
  }
  io::atomic_write(out / "simulation.json", summary.dump(2) + "\n");
  return summary;
}

json cmd_gossip(const ExperimentConfig& cfg, const fs::path& out, const RunOptions& opt) {
  if (!cfg.is_gossip()) throw InvalidArgument("the gossip command needs link.kind = gossip");
  json d = cmd_design(cfg, out, opt);
  json s = cmd_simulate(cfg, out, opt);
  return {{"design", std::move(d)}, {"simulation", std::move(s)}};
}

namespace {

void print_summary(const json& aggregate_section, const std::string& title) {
  std::cout << title << "\n";
  for (auto metric = aggregate_section.begin(); metric != aggregate_section.end(); ++metric)
    for (auto m = metric->begin(); m != metric->end(); ++m) {
      const json& a = *m;
      auto show = [&](const char* k) { return a.at(k).is_null() ? std::string("n/a") : io::format_double(a.at(k).get<double>()); };
      std::cout << "  " << metric.key() << "[" << m.key() << "]: mean " << show("mean") << ", max " << show("max")
                << ", min " << show("min") << "\n";
    }
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Probability-based weight design for consensus over random networks"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  RunOptions opt;
  std::uint64_t seed_override = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment configuration (JSON)")->required();
    sub->add_option("--out", out_dir, "artifact directory")->required();
    sub->add_option("--seed-override", seed_override, "replace graph and simulation seeds");
    sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
  };
  CLI::App* design = app.add_subcommand("design", "generate instances and optimize weights");
  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo evaluation of designed weights");
  CLI::App* gossip = app.add_subcommand("gossip", "design and simulate broadcast gossip weights");
  CLI::App* validate = app.add_subcommand("validate", "run the built-in oracle checks");
  for (CLI::App* sub : {design, simulate, gossip}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (validate->parsed()) {
      const auto checks = run_validation();
      for (const auto& c : checks) std::cout << status_label(c.status) << " " << c.name << ": " << c.detail << "\n";
      return validation_passed(checks) ? 0 : 1;
    }
    for (CLI::App* sub : {design, simulate, gossip})
      if (sub->parsed() && sub->count("--seed-override")) opt.seed_override = seed_override;
    ExperimentConfig cfg = load_config(config_path);
    apply_overrides(cfg, opt);
    if (design->parsed()) {
      const json s = cmd_design(cfg, out_dir, opt);
      print_summary(s.at("aggregate"), "design: " + std::to_string(cfg.graph.instances) + " instance(s) in " + out_dir);
    } else if (simulate->parsed()) {
      const json s = cmd_simulate(cfg, out_dir, opt);
      print_summary(s.at("aggregate"), "simulate: results in " + out_dir);
    } else {
      const json s = cmd_gossip(cfg, out_dir, opt);
      print_summary(s.at("design").at("aggregate"), "gossip design:");
      print_summary(s.at("simulation").at("aggregate"), "gossip simulation:");
    }
    return 0;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 3;
  } catch (const GenerationError& e) {
    std::cerr << "generation failed: " << e.what() << "\n";
    return 4;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace pbw::cli
